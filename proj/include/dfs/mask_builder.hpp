#pragma once

#include <span>
#include <vector>

#include "dfs/block_mask.hpp"
#include "dfs/tensor.hpp"

namespace dfs {

struct ScoringParams {
  int64_t block_size = 128;     // B
  int64_t sub_block_size = 16;  // B_s, must divide B

  int64_t subs_per_block() const { return block_size / sub_block_size; }

  void validate() const {
    if (sub_block_size < 1 || block_size < sub_block_size)
      throw std::invalid_argument("ScoringParams: need 1 <= sub_block_size <= block_size");
    if (block_size % sub_block_size != 0)
      throw std::invalid_argument("ScoringParams: sub_block_size must divide block_size");
  }
};

// Row g of the result is the arithmetic mean of rows [g*pool, (g+1)*pool)
// of x, with the sequence zero-padded to a multiple of pool.
Matrix mean_pool(const Matrix& x, int64_t pool);

// Sub-block score matrix softmax(mean_pool(q) mean_pool(k)^T / sqrt(d)),
// padded to subs_per_block() rows/columns per block. Pooled key rows made
// entirely of padding are excluded from every softmax (probability 0);
// pooled query rows made of padding score uniformly over the valid keys,
// so each row remains a probability row.
Matrix subblock_scores(const Matrix& q, const Matrix& k, const ScoringParams& params);

// S_uv = sum of the sub-block score tile (query block u, key block v).
// Every row of the result sums to subs_per_block().
MatrixD aggregate_scores(const Matrix& sub, const ScoringParams& params);

// K = min(M, max(1, round(budget * M))).
int64_t topk_count(double budget, int64_t block_count);

// Indices of the k largest values, ties toward the lower index; returned
// sorted ascending. Shared by mask selection and the selection oracles so
// tie handling is identical everywhere.
std::vector<int32_t> top_indices(std::span<const double> values, int64_t k);

// Per row, selects the K highest-scoring key blocks; ties broken toward
// the lower key-block index. budget must lie in (0, 1].
BlockMask topk_select(const MatrixD& scores, double budget, int64_t block_size);

// subblock_scores -> aggregate_scores, exposed for score dumps.
MatrixD block_scores(const Matrix& q, const Matrix& k, const ScoringParams& params);

// The full scoring/selection chain.
BlockMask build_mask(const Matrix& q, const Matrix& k, const ScoringParams& params,
                     double budget);

}  // namespace dfs
