#include "dfs/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace dfs {

namespace {

void check_qkv(const Matrix& q, const Matrix& k, const Matrix& v) {
  if (q.cols() != k.cols()) throw std::invalid_argument("attention: q and k head dims differ");
  if (k.rows() != v.rows()) throw std::invalid_argument("attention: k and v row counts differ");
  if (q.rows() < 1 || k.rows() < 1 || q.cols() < 1)
    throw std::invalid_argument("attention: empty input");
  if (!q.all_finite() || !k.all_finite() || !v.all_finite())
    throw std::invalid_argument("attention: non-finite input");
}

double dot_scaled(std::span<const float> a, std::span<const float> b, double scale) {
  double acc = 0.0;
  for (size_t c = 0; c < a.size(); ++c) acc += static_cast<double>(a[c]) * b[c];
  return acc * scale;
}

// Softmax of one query row over the key subset `keys`, then the weighted
// sum of v rows. probs (when non-null) receives the normalized weights in
// the order of `keys`.
void attend_row(std::span<const float> qrow, const Matrix& k, const Matrix* v,
                std::span<const int64_t> keys, double scale, std::span<float> out,
                std::vector<double>* probs) {
  std::vector<double> logits(keys.size());
  double maxlogit = -std::numeric_limits<double>::infinity();
  for (size_t j = 0; j < keys.size(); ++j) {
    logits[j] = dot_scaled(qrow, k.row(keys[j]), scale);
    maxlogit = std::max(maxlogit, logits[j]);
  }
  double z = 0.0;
  for (double& l : logits) {
    l = std::exp(l - maxlogit);
    z += l;
  }
  if (probs) probs->resize(keys.size());
  if (v) std::fill(out.begin(), out.end(), 0.0f);
  std::vector<double> acc;
  if (v) acc.assign(static_cast<size_t>(v->cols()), 0.0);
  for (size_t j = 0; j < keys.size(); ++j) {
    const double p = logits[j] / z;
    if (probs) (*probs)[j] = p;
    if (v) {
      const auto vrow = v->row(keys[j]);
      for (size_t c = 0; c < acc.size(); ++c) acc[c] += p * vrow[c];
    }
  }
  if (v)
    for (size_t c = 0; c < acc.size(); ++c) out[c] = static_cast<float>(acc[c]);
}

std::vector<int64_t> all_keys(int64_t n) {
  std::vector<int64_t> keys(static_cast<size_t>(n));
  for (int64_t j = 0; j < n; ++j) keys[static_cast<size_t>(j)] = j;
  return keys;
}

void check_mask_geometry(int64_t rows, int64_t cols, const BlockMask& mask) {
  const int64_t b = mask.block_size();
  if (block_count_for(rows, b) != mask.block_count() ||
      block_count_for(cols, b) != mask.block_count())
    throw std::invalid_argument("block mask geometry inconsistent with sequence length");
}

}  // namespace

DenseAttention full_attention(const Matrix& q, const Matrix& k, const Matrix& v) {
  check_qkv(q, k, v);
  if (q.rows() > kMaxDenseScoreRows || k.rows() > kMaxDenseScoreRows)
    throw std::invalid_argument("full_attention: dense scores capped at N = " +
                                std::to_string(kMaxDenseScoreRows));
  DenseAttention result{Matrix(q.rows(), v.cols()), Matrix(q.rows(), k.rows())};
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  const auto keys = all_keys(k.rows());
  std::vector<double> probs;
  for (int64_t i = 0; i < q.rows(); ++i) {
    attend_row(q.row(i), k, &v, keys, scale, result.output.row(i), &probs);
    auto srow = result.scores.row(i);
    for (int64_t j = 0; j < k.rows(); ++j)
      srow[static_cast<size_t>(j)] = static_cast<float>(probs[static_cast<size_t>(j)]);
  }
  return result;
}

Matrix full_attention_output(const Matrix& q, const Matrix& k, const Matrix& v) {
  check_qkv(q, k, v);
  Matrix out(q.rows(), v.cols());
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  const auto keys = all_keys(k.rows());
  for (int64_t i = 0; i < q.rows(); ++i)
    attend_row(q.row(i), k, &v, keys, scale, out.row(i), nullptr);
  return out;
}

Matrix attention_scores(const Matrix& q, const Matrix& k) {
  if (q.cols() != k.cols()) throw std::invalid_argument("attention: q and k head dims differ");
  if (q.rows() > kMaxDenseScoreRows || k.rows() > kMaxDenseScoreRows)
    throw std::invalid_argument("attention_scores: dense scores capped at N = " +
                                std::to_string(kMaxDenseScoreRows));
  if (!q.all_finite() || !k.all_finite())
    throw std::invalid_argument("attention: non-finite input");
  Matrix scores(q.rows(), k.rows());
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  const auto keys = all_keys(k.rows());
  std::vector<double> probs;
  for (int64_t i = 0; i < q.rows(); ++i) {
    attend_row(q.row(i), k, nullptr, keys, scale, {}, &probs);
    auto srow = scores.row(i);
    for (int64_t j = 0; j < k.rows(); ++j)
      srow[static_cast<size_t>(j)] = static_cast<float>(probs[static_cast<size_t>(j)]);
  }
  return scores;
}

Matrix block_sparse_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                              const BlockMask& mask) {
  check_qkv(q, k, v);
  if (q.rows() != k.rows())
    throw std::invalid_argument("block_sparse_attention: q and k row counts differ");
  check_mask_geometry(q.rows(), k.rows(), mask);
  const int64_t b = mask.block_size();
  const int64_t m = mask.block_count();
  for (int64_t u = 0; u < m; ++u)
    if (mask.row_empty(u))
      throw std::invalid_argument("block_sparse_attention: empty mask row " + std::to_string(u) +
                                  " leaves softmax undefined");

  Matrix out(q.rows(), v.cols());
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  std::vector<int64_t> keys;
  int64_t current_block = -1;
  for (int64_t i = 0; i < q.rows(); ++i) {
    const int64_t u = i / b;
    if (u != current_block) {
      current_block = u;
      keys.clear();
      for (int64_t vblk = 0; vblk < m; ++vblk) {
        if (!mask.get(u, vblk)) continue;
        const int64_t lo = vblk * b;
        const int64_t hi = std::min(lo + b, k.rows());  // padded keys excluded
        for (int64_t j = lo; j < hi; ++j) keys.push_back(j);
      }
      if (keys.empty())
        throw std::invalid_argument("block_sparse_attention: selected blocks contain no keys");
    }
    attend_row(q.row(i), k, &v, keys, scale, out.row(i), nullptr);
  }
  return out;
}

Matrix masked_scores(const Matrix& scores, const BlockMask& mask) {
  check_mask_geometry(scores.rows(), scores.cols(), mask);
  const int64_t b = mask.block_size();
  Matrix out(scores.rows(), scores.cols());
  for (int64_t i = 0; i < scores.rows(); ++i) {
    const auto src = scores.row(i);
    auto dst = out.row(i);
    const int64_t u = i / b;
    for (int64_t j = 0; j < scores.cols(); ++j)
      dst[static_cast<size_t>(j)] = mask.get(u, j / b) ? src[static_cast<size_t>(j)] : 0.0f;
  }
  return out;
}

double attention_recall(const Matrix& scores, const BlockMask& mask) {
  check_mask_geometry(scores.rows(), scores.cols(), mask);
  const int64_t b = mask.block_size();
  double kept = 0.0, total = 0.0;
  for (int64_t i = 0; i < scores.rows(); ++i) {
    const auto src = scores.row(i);
    const int64_t u = i / b;
    for (int64_t j = 0; j < scores.cols(); ++j) {
      const double a = std::abs(static_cast<double>(src[static_cast<size_t>(j)]));
      total += a;
      if (mask.get(u, j / b)) kept += a;
    }
  }
  if (total == 0.0) return 0.0;
  return kept / total;
}

}  // namespace dfs
