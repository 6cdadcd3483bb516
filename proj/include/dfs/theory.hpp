#pragma once

#include <cstdint>
#include <vector>

#include "dfs/synthetic.hpp"
#include "dfs/tensor.hpp"

namespace dfs::theory {

// Inputs to the closed-form selection bound.
struct BoundInputs {
  double gap = 1.0;                  // minimum similarity gap
  double centroid_norm_bound = 1.0;  // C
  double tau = 0.0;
  double sigma = 0.0;
  int64_t block_tokens = 16;  // B
  int64_t head_dim = 16;      // d
  int64_t selected = 1;       // K
  int64_t blocks = 4;         // M
  double c = 0.1;             // universal constant, user-supplied

  double pooled_noise_var() const {
    return tau * tau + sigma * sigma / static_cast<double>(block_tokens);
  }
};

struct BoundValue {
  double value = 0.0;
  bool vacuous = false;  // value <= 0 bounds nothing
};

// 1 - K(M-K) [exp(-phi1) + exp(-phi2)] with phi1 = gap^2/(48 C delta^2)
// and phi2 = c min(gap^2/(delta^4 d), gap/delta^2). Returned unclamped.
BoundValue theorem_bound(const BoundInputs& inputs);

// Per-pair misordering bound:
// exp(-gap^2 / (8 (||kv-kv'||^2 + 2||q||^2) delta^2))
//   + exp(-c min(gap^2/(delta^4 d), gap/delta^2)).
double pairwise_misorder_bound(double gap, double q_norm_sq, double keydiff_norm_sq,
                               double noise_var, int64_t head_dim, double c);

// Per query block, the K key blocks maximizing the summed attention mass
// alpha_uv over the (u, v) tile of the dense score matrix; ties toward
// the lower block index. Each selected set is sorted ascending.
std::vector<std::vector<int32_t>> oracle_topk(const Matrix& scores, int64_t block_size,
                                              int64_t k_select);

// Per query block, the K key blocks maximizing pooled-centroid dot
// products <qhat_u, khat_v>.
std::vector<std::vector<int32_t>> centroid_topk(const Matrix& q, const Matrix& k,
                                                int64_t block_size, int64_t k_select);

struct MatchProbability {
  double joint = 0.0;  // all query blocks agree
  double joint_stderr = 0.0;
  double per_block = 0.0;  // mean per-query-block agreement
  double per_block_stderr = 0.0;
  int64_t trials = 0;
};

// Fraction of model draws on which centroid top-K equals oracle top-K.
MatchProbability selection_match_prob(const synthetic::BlockModelParams& params,
                                      int64_t k_select, int64_t trials);

struct ScoreExpectation {
  int64_t u = 0;
  int64_t v = 0;
  double empirical_mean = 0.0;
  double analytic = 0.0;  // <qbar_u, kbar_v>
  double stderr_ = 0.0;
  double z = 0.0;
};

// Empirical mean of <qhat_u, khat_v> against the analytic centroid dot
// product, per block pair.
std::vector<ScoreExpectation> score_expectation_check(
    const synthetic::BlockModelParams& params, int64_t trials);

struct RecallCheck {
  double mean_recall = 0.0;     // E[R_u] estimate
  double gamma = 0.0;           // realized K/M
  double match_prob = 0.0;      // per-block match estimate
  double margin = 0.0;          // mean (R_u - gamma * match)
  double margin_stderr = 0.0;
};

// Compares E[R_u] under centroid selection against gamma * P(match).
RecallCheck recall_corollary_check(const synthetic::BlockModelParams& params, double gamma,
                                   int64_t trials);

struct PairwiseGridRow {
  double gap = 0.0;
  double noise_var = 0.0;  // delta^2
  double empirical = 0.0;
  double empirical_stderr = 0.0;
  double gaussian_term = 0.0;  // first addend, independent of c
  double min_term = 0.0;       // min(gap^2/(delta^4 d), gap/delta^2)
};

struct Calibration {
  double c = 0.0;
  std::vector<PairwiseGridRow> rows;
};

// Monte-Carlo misordering frequencies on a (gap x delta) grid, and the
// largest c for which the pairwise bound stays above every frequency.
// Points never constraining c (frequency already below the Gaussian
// term) leave it at c_cap.
Calibration calibrate_pairwise_c(const synthetic::BlockModelParams& base,
                                 std::span<const double> gaps,
                                 std::span<const double> deltas, int64_t trials,
                                 double c_cap);

}  // namespace dfs::theory
