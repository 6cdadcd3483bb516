#include "dfs/mask_builder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dfs/attention.hpp"

namespace dfs {

Matrix mean_pool(const Matrix& x, int64_t pool) {
  if (pool < 1) throw std::invalid_argument("mean_pool: pool must be >= 1");
  if (x.rows() < 1) throw std::invalid_argument("mean_pool: empty input");
  const int64_t groups = (x.rows() + pool - 1) / pool;
  Matrix out(groups, x.cols());
  for (int64_t g = 0; g < groups; ++g) {
    const int64_t lo = g * pool;
    const int64_t hi = std::min(lo + pool, x.rows());
    auto dst = out.row(g);
    for (int64_t c = 0; c < x.cols(); ++c) {
      double acc = 0.0;
      for (int64_t i = lo; i < hi; ++i) acc += x.at(i, c);
      dst[static_cast<size_t>(c)] = static_cast<float>(acc / static_cast<double>(pool));
    }
  }
  return out;
}

Matrix subblock_scores(const Matrix& q, const Matrix& k, const ScoringParams& params) {
  params.validate();
  if (q.cols() != k.cols()) throw std::invalid_argument("subblock_scores: head dims differ");
  const int64_t subs = params.subs_per_block();
  const int64_t mq = block_count_for(q.rows(), params.block_size);
  const int64_t mk = block_count_for(k.rows(), params.block_size);
  const int64_t qrows = mq * subs;
  const int64_t kcols = mk * subs;
  const int64_t valid_k = block_count_for(k.rows(), params.sub_block_size);

  // pooled queries padded out to full blocks (pad rows pool to zero)
  Matrix pooled_q(qrows, q.cols());
  {
    Matrix pq = mean_pool(q, params.sub_block_size);
    for (int64_t g = 0; g < pq.rows(); ++g) {
      const auto src = pq.row(g);
      auto dst = pooled_q.row(g);
      std::copy(src.begin(), src.end(), dst.begin());
    }
  }
  // pooled keys: only rows containing real tokens enter the softmax;
  // fully padded key columns keep probability 0
  const Matrix pooled_k = mean_pool(k, params.sub_block_size);

  const Matrix valid_scores = attention_scores(pooled_q, pooled_k);
  Matrix out(qrows, kcols);
  for (int64_t i = 0; i < qrows; ++i) {
    const auto src = valid_scores.row(i);
    auto dst = out.row(i);
    for (int64_t j = 0; j < valid_k; ++j) dst[static_cast<size_t>(j)] = src[static_cast<size_t>(j)];
  }
  return out;
}

MatrixD aggregate_scores(const Matrix& sub, const ScoringParams& params) {
  params.validate();
  const int64_t subs = params.subs_per_block();
  if (sub.rows() % subs != 0 || sub.cols() % subs != 0)
    throw std::invalid_argument("aggregate_scores: geometry not divisible into sub-blocks");
  const int64_t mq = sub.rows() / subs;
  const int64_t mk = sub.cols() / subs;
  MatrixD scores(mq, mk);
  for (int64_t u = 0; u < mq; ++u)
    for (int64_t v = 0; v < mk; ++v) {
      double acc = 0.0;
      for (int64_t i = u * subs; i < (u + 1) * subs; ++i)
        for (int64_t j = v * subs; j < (v + 1) * subs; ++j) acc += sub.at(i, j);
      scores.at(u, v) = acc;
    }
  return scores;
}

int64_t topk_count(double budget, int64_t block_count) {
  if (!(budget > 0.0) || budget > 1.0)
    throw std::invalid_argument("budget must lie in (0, 1]");
  const int64_t k = std::llround(budget * static_cast<double>(block_count));
  return std::min(block_count, std::max(int64_t{1}, k));
}

// Indices of the k largest values, ties toward the lower index; output
// sorted ascending.
std::vector<int32_t> top_indices(std::span<const double> values, int64_t k) {
  std::vector<int32_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int32_t a, int32_t b) {
    if (values[static_cast<size_t>(a)] != values[static_cast<size_t>(b)])
      return values[static_cast<size_t>(a)] > values[static_cast<size_t>(b)];
    return a < b;
  });
  order.resize(static_cast<size_t>(k));
  std::sort(order.begin(), order.end());
  return order;
}

BlockMask topk_select(const MatrixD& scores, double budget, int64_t block_size) {
  if (scores.rows() != scores.cols() || scores.rows() < 1)
    throw std::invalid_argument("topk_select: scores must be square and non-empty");
  const int64_t m = scores.rows();
  const int64_t k = topk_count(budget, m);
  BlockMask mask(m, block_size);
  for (int64_t u = 0; u < m; ++u)
    for (int32_t v : top_indices(scores.row(u), k)) mask.set(u, v, true);
  return mask;
}

MatrixD block_scores(const Matrix& q, const Matrix& k, const ScoringParams& params) {
  return aggregate_scores(subblock_scores(q, k, params), params);
}

BlockMask build_mask(const Matrix& q, const Matrix& k, const ScoringParams& params,
                     double budget) {
  if (q.rows() != k.rows())
    throw std::invalid_argument("build_mask: q and k row counts differ");
  return topk_select(block_scores(q, k, params), budget, params.block_size);
}

}  // namespace dfs
