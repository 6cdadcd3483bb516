#pragma once

#include "dfs/block_mask.hpp"
#include "dfs/tensor.hpp"

namespace dfs {

// Dense N x N score materialization is an oracle/analysis path only;
// beyond this row count it is refused rather than approximated.
inline constexpr int64_t kMaxDenseScoreRows = 4096;

struct DenseAttention {
  Matrix output;  // N x d
  Matrix scores;  // N x N, row-stochastic
};

// Row-softmax(q k^T / sqrt(d)) with per-row max subtraction; accumulation
// in double, storage in binary32. Returns the output and the full score
// matrix (rows capped at kMaxDenseScoreRows).
DenseAttention full_attention(const Matrix& q, const Matrix& k, const Matrix& v);

// Same computation without materializing the score matrix; no row cap.
Matrix full_attention_output(const Matrix& q, const Matrix& k, const Matrix& v);

// Score matrix alone (row-softmax of q k^T / sqrt(d)).
Matrix attention_scores(const Matrix& q, const Matrix& k);

// Per query row, softmax over keys in the selected blocks only; excluded
// keys behave as -inf logits. Sequences are conceptually padded to
// mask.block_count() * mask.block_size(): padded keys never participate
// and padded query rows are not produced. An empty mask row is an error.
Matrix block_sparse_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                              const BlockMask& mask);

// A  (elementwise) mask expanded to token resolution; no renormalization.
Matrix masked_scores(const Matrix& scores, const BlockMask& mask);

// ||A o M||_1 / ||A||_1 over entrywise absolute sums.
double attention_recall(const Matrix& scores, const BlockMask& mask);

}  // namespace dfs
