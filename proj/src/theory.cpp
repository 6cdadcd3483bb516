#include "dfs/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "dfs/attention.hpp"
#include "dfs/mask_builder.hpp"

namespace dfs::theory {

namespace {

double phi2_exponent(double gap, double noise_var, int64_t head_dim, double c) {
  const double quad = gap * gap / (noise_var * noise_var * static_cast<double>(head_dim));
  const double lin = gap / noise_var;
  return c * std::min(quad, lin);
}

double dot_rows(const Matrix& a, int64_t i, const Matrix& b, int64_t j) {
  double acc = 0.0;
  for (int64_t c = 0; c < a.cols(); ++c)
    acc += static_cast<double>(a.at(i, c)) * b.at(j, c);
  return acc;
}

struct Stats {
  double mean = 0.0;
  double stderr_ = 0.0;
};

Stats mean_stderr(std::span<const double> xs) {
  Stats s;
  const double n = static_cast<double>(xs.size());
  for (double x : xs) s.mean += x;
  s.mean /= n;
  if (xs.size() > 1) {
    double acc = 0.0;
    for (double x : xs) acc += (x - s.mean) * (x - s.mean);
    s.stderr_ = std::sqrt(acc / (n - 1.0) / n);
  }
  return s;
}

// add-one smoothed binomial stderr; never zero, so 2-sigma comparisons
// stay meaningful at empirical 0 or 1
double binomial_stderr(double successes, double trials) {
  const double p = (successes + 1.0) / (trials + 2.0);
  return std::sqrt(p * (1.0 - p) / trials);
}

}  // namespace

BoundValue theorem_bound(const BoundInputs& inputs) {
  if (!(inputs.gap > 0.0)) throw std::invalid_argument("theorem_bound: gap must be > 0");
  if (!(inputs.centroid_norm_bound > 0.0))
    throw std::invalid_argument("theorem_bound: centroid norm bound must be > 0");
  if (!(inputs.c > 0.0)) throw std::invalid_argument("theorem_bound: c must be > 0");
  if (inputs.selected > inputs.blocks || inputs.selected < 1)
    throw std::invalid_argument("theorem_bound: need 1 <= K <= M");

  const double noise_var = inputs.pooled_noise_var();
  const double pairs =
      static_cast<double>(inputs.selected) * static_cast<double>(inputs.blocks - inputs.selected);
  if (noise_var == 0.0) return {1.0, false};  // both exponents diverge

  const double phi1 =
      inputs.gap * inputs.gap / (48.0 * inputs.centroid_norm_bound * noise_var);
  const double phi2 = phi2_exponent(inputs.gap, noise_var, inputs.head_dim, inputs.c);
  const double value = 1.0 - pairs * (std::exp(-phi1) + std::exp(-phi2));
  return {value, value <= 0.0};
}

double pairwise_misorder_bound(double gap, double q_norm_sq, double keydiff_norm_sq,
                               double noise_var, int64_t head_dim, double c) {
  if (!(gap > 0.0)) throw std::invalid_argument("pairwise_misorder_bound: gap must be > 0");
  if (noise_var == 0.0) return 0.0;
  const double gauss =
      std::exp(-gap * gap / (8.0 * (keydiff_norm_sq + 2.0 * q_norm_sq) * noise_var));
  return gauss + std::exp(-phi2_exponent(gap, noise_var, head_dim, c));
}

std::vector<std::vector<int32_t>> oracle_topk(const Matrix& scores, int64_t block_size,
                                              int64_t k_select) {
  const int64_t m = block_count_for(scores.rows(), block_size);
  const int64_t mk = block_count_for(scores.cols(), block_size);
  if (m != mk) throw std::invalid_argument("oracle_topk: scores must be block-square");
  if (k_select < 1 || k_select > m) throw std::invalid_argument("oracle_topk: need 1 <= K <= M");

  std::vector<std::vector<int32_t>> selected;
  selected.reserve(static_cast<size_t>(m));
  std::vector<double> mass(static_cast<size_t>(m));
  for (int64_t u = 0; u < m; ++u) {
    const int64_t ilo = u * block_size;
    const int64_t ihi = std::min(ilo + block_size, scores.rows());
    for (int64_t v = 0; v < m; ++v) {
      const int64_t jlo = v * block_size;
      const int64_t jhi = std::min(jlo + block_size, scores.cols());
      double acc = 0.0;
      for (int64_t i = ilo; i < ihi; ++i)
        for (int64_t j = jlo; j < jhi; ++j) acc += scores.at(i, j);
      mass[static_cast<size_t>(v)] = acc;
    }
    selected.push_back(top_indices(mass, k_select));
  }
  return selected;
}

std::vector<std::vector<int32_t>> centroid_topk(const Matrix& q, const Matrix& k,
                                                int64_t block_size, int64_t k_select) {
  if (q.cols() != k.cols()) throw std::invalid_argument("centroid_topk: head dims differ");
  const int64_t m = block_count_for(q.rows(), block_size);
  if (m != block_count_for(k.rows(), block_size))
    throw std::invalid_argument("centroid_topk: block counts differ");
  if (k_select < 1 || k_select > m)
    throw std::invalid_argument("centroid_topk: need 1 <= K <= M");

  // pooled centroids over actual block extents
  const auto pool = [&](const Matrix& x) {
    Matrix pooled(m, x.cols());
    for (int64_t blk = 0; blk < m; ++blk) {
      const int64_t lo = blk * block_size;
      const int64_t hi = std::min(lo + block_size, x.rows());
      for (int64_t c = 0; c < x.cols(); ++c) {
        double acc = 0.0;
        for (int64_t i = lo; i < hi; ++i) acc += x.at(i, c);
        pooled.at(blk, c) = static_cast<float>(acc / static_cast<double>(hi - lo));
      }
    }
    return pooled;
  };
  const Matrix qhat = pool(q);
  const Matrix khat = pool(k);

  std::vector<std::vector<int32_t>> selected;
  selected.reserve(static_cast<size_t>(m));
  std::vector<double> score(static_cast<size_t>(m));
  for (int64_t u = 0; u < m; ++u) {
    for (int64_t v = 0; v < m; ++v) score[static_cast<size_t>(v)] = dot_rows(qhat, u, khat, v);
    selected.push_back(top_indices(score, k_select));
  }
  return selected;
}

MatchProbability selection_match_prob(const synthetic::BlockModelParams& params,
                                      int64_t k_select, int64_t trials) {
  if (trials < 1) throw std::invalid_argument("selection_match_prob: trials must be >= 1");
  const synthetic::BlockModel model(params);
  const int64_t m = params.blocks;

  double joint_hits = 0.0;
  std::vector<double> per_trial_block(static_cast<size_t>(trials));
  for (int64_t t = 0; t < trials; ++t) {
    const auto sample = model.draw(static_cast<uint64_t>(t));
    const Matrix scores = attention_scores(sample.q, sample.k);
    const auto oracle = oracle_topk(scores, params.block_tokens, k_select);
    const auto approx = centroid_topk(sample.q, sample.k, params.block_tokens, k_select);
    int64_t agree = 0;
    for (int64_t u = 0; u < m; ++u)
      if (oracle[static_cast<size_t>(u)] == approx[static_cast<size_t>(u)]) ++agree;
    if (agree == m) joint_hits += 1.0;
    per_trial_block[static_cast<size_t>(t)] =
        static_cast<double>(agree) / static_cast<double>(m);
  }

  MatchProbability result;
  result.trials = trials;
  result.joint = joint_hits / static_cast<double>(trials);
  result.joint_stderr = binomial_stderr(joint_hits, static_cast<double>(trials));
  const Stats s = mean_stderr(per_trial_block);
  result.per_block = s.mean;
  // per-trial averages are the independent unit (blocks share key draws)
  result.per_block_stderr =
      std::max(s.stderr_, binomial_stderr(s.mean * static_cast<double>(trials),
                                          static_cast<double>(trials)) /
                              std::sqrt(static_cast<double>(m)));
  return result;
}

std::vector<ScoreExpectation> score_expectation_check(
    const synthetic::BlockModelParams& params, int64_t trials) {
  if (trials < 100) throw std::invalid_argument("score_expectation_check: trials must be >= 100");
  const synthetic::BlockModel model(params);
  const int64_t m = params.blocks;
  const int64_t b = params.block_tokens;

  std::vector<double> sum(static_cast<size_t>(m * m), 0.0);
  std::vector<double> sum_sq(static_cast<size_t>(m * m), 0.0);
  Matrix qhat(m, params.head_dim);
  Matrix khat(m, params.head_dim);
  for (int64_t t = 0; t < trials; ++t) {
    const auto sample = model.draw(static_cast<uint64_t>(t));
    for (int64_t blk = 0; blk < m; ++blk) {
      for (int64_t c = 0; c < params.head_dim; ++c) {
        double qa = 0.0, ka = 0.0;
        for (int64_t i = blk * b; i < (blk + 1) * b; ++i) {
          qa += sample.q.at(i, c);
          ka += sample.k.at(i, c);
        }
        qhat.at(blk, c) = static_cast<float>(qa / static_cast<double>(b));
        khat.at(blk, c) = static_cast<float>(ka / static_cast<double>(b));
      }
    }
    for (int64_t u = 0; u < m; ++u)
      for (int64_t v = 0; v < m; ++v) {
        const double s = dot_rows(qhat, u, khat, v);
        sum[static_cast<size_t>(u * m + v)] += s;
        sum_sq[static_cast<size_t>(u * m + v)] += s * s;
      }
  }

  std::vector<ScoreExpectation> rows;
  rows.reserve(static_cast<size_t>(m * m));
  const double n = static_cast<double>(trials);
  for (int64_t u = 0; u < m; ++u)
    for (int64_t v = 0; v < m; ++v) {
      ScoreExpectation row;
      row.u = u;
      row.v = v;
      const double s = sum[static_cast<size_t>(u * m + v)];
      const double ss = sum_sq[static_cast<size_t>(u * m + v)];
      row.empirical_mean = s / n;
      row.analytic = dot_rows(model.centroids().q, u, model.centroids().k, v);
      const double var = std::max(0.0, (ss - s * s / n) / (n - 1.0));
      row.stderr_ = std::sqrt(var / n);
      row.z = row.stderr_ > 0.0 ? (row.empirical_mean - row.analytic) / row.stderr_ : 0.0;
      rows.push_back(row);
    }
  return rows;
}

RecallCheck recall_corollary_check(const synthetic::BlockModelParams& params, double gamma,
                                   int64_t trials) {
  if (!(gamma > 0.0) || gamma > 1.0)
    throw std::invalid_argument("recall_corollary_check: gamma must lie in (0, 1]");
  if (trials < 1) throw std::invalid_argument("recall_corollary_check: trials must be >= 1");
  const synthetic::BlockModel model(params);
  const int64_t m = params.blocks;
  const int64_t b = params.block_tokens;
  const int64_t k_select = topk_count(gamma, m);
  const double realized_gamma = static_cast<double>(k_select) / static_cast<double>(m);

  std::vector<double> recall_t(static_cast<size_t>(trials));
  std::vector<double> match_t(static_cast<size_t>(trials));
  std::vector<double> margin_t(static_cast<size_t>(trials));
  for (int64_t t = 0; t < trials; ++t) {
    const auto sample = model.draw(static_cast<uint64_t>(t));
    const Matrix scores = attention_scores(sample.q, sample.k);
    const auto oracle = oracle_topk(scores, b, k_select);
    const auto approx = centroid_topk(sample.q, sample.k, b, k_select);

    double recall_sum = 0.0;
    double match_sum = 0.0;
    for (int64_t u = 0; u < m; ++u) {
      double kept = 0.0, total = 0.0;
      std::vector<double> mass(static_cast<size_t>(m), 0.0);
      for (int64_t i = u * b; i < (u + 1) * b; ++i)
        for (int64_t j = 0; j < scores.cols(); ++j) mass[static_cast<size_t>(j / b)] += scores.at(i, j);
      for (int64_t v = 0; v < m; ++v) total += mass[static_cast<size_t>(v)];
      for (int32_t v : approx[static_cast<size_t>(u)]) kept += mass[static_cast<size_t>(v)];
      recall_sum += kept / total;
      if (oracle[static_cast<size_t>(u)] == approx[static_cast<size_t>(u)]) match_sum += 1.0;
    }
    recall_t[static_cast<size_t>(t)] = recall_sum / static_cast<double>(m);
    match_t[static_cast<size_t>(t)] = match_sum / static_cast<double>(m);
    margin_t[static_cast<size_t>(t)] =
        recall_t[static_cast<size_t>(t)] - realized_gamma * match_t[static_cast<size_t>(t)];
  }

  RecallCheck result;
  result.gamma = realized_gamma;
  result.mean_recall = mean_stderr(recall_t).mean;
  result.match_prob = mean_stderr(match_t).mean;
  const Stats margin = mean_stderr(margin_t);
  result.margin = margin.mean;
  result.margin_stderr = margin.stderr_;
  return result;
}

Calibration calibrate_pairwise_c(const synthetic::BlockModelParams& base,
                                 std::span<const double> gaps,
                                 std::span<const double> deltas, int64_t trials,
                                 double c_cap) {
  if (trials < 1) throw std::invalid_argument("calibrate_pairwise_c: trials must be >= 1");
  if (!(c_cap > 0.0)) throw std::invalid_argument("calibrate_pairwise_c: c_cap must be > 0");

  Calibration cal;
  cal.c = c_cap;
  for (double gap : gaps) {
    for (double delta : deltas) {
      if (!(gap > 0.0) || !(delta > 0.0))
        throw std::invalid_argument("calibrate_pairwise_c: grid values must be > 0");
      // 2-key separable model with the requested gap; pooled noise split
      // evenly between drift and token noise
      synthetic::BlockModelParams params = base;
      params.blocks = 2;
      params.gap_target = gap;
      params.tau = delta / std::numbers::sqrt2;
      params.sigma = delta / std::numbers::sqrt2 * std::sqrt(static_cast<double>(params.block_tokens));
      const synthetic::BlockModel model(params);
      const double noise_var = params.pooled_noise_var();

      const auto& cent = model.centroids();
      const double q_norm_sq = dot_rows(cent.q, 0, cent.q, 0);
      double keydiff_norm_sq = 0.0;
      for (int64_t c = 0; c < params.head_dim; ++c) {
        const double d = static_cast<double>(cent.k.at(0, c)) - cent.k.at(1, c);
        keydiff_norm_sq += d * d;
      }

      // D = <qhat, khat_0 - khat_1> with pooled perturbations sampled
      // directly at their delta^2 scale
      RandomStream stream = RandomStream::derived(
          params.seed, {0xface, static_cast<uint64_t>(gap * 1e9),
                        static_cast<uint64_t>(delta * 1e9)});
      const double noise_std = std::sqrt(noise_var);
      int64_t misorders = 0;
      for (int64_t t = 0; t < trials; ++t) {
        double d_value = 0.0;
        for (int64_t c = 0; c < params.head_dim; ++c) {
          const double zu = noise_std * stream.next_gaussian();
          const double zv = noise_std * stream.next_gaussian();
          const double zv2 = noise_std * stream.next_gaussian();
          const double qc = cent.q.at(0, c) + zu;
          d_value += qc * ((cent.k.at(0, c) + zv) - (cent.k.at(1, c) + zv2));
        }
        if (d_value < 0.0) ++misorders;
      }

      PairwiseGridRow row;
      row.gap = gap;
      row.noise_var = noise_var;
      row.empirical = static_cast<double>(misorders) / static_cast<double>(trials);
      row.empirical_stderr =
          binomial_stderr(static_cast<double>(misorders), static_cast<double>(trials));
      row.gaussian_term =
          std::exp(-gap * gap / (8.0 * (keydiff_norm_sq + 2.0 * q_norm_sq) * noise_var));
      row.min_term = std::min(
          gap * gap / (noise_var * noise_var * static_cast<double>(params.head_dim)),
          gap / noise_var);
      cal.rows.push_back(row);

      if (row.empirical > row.gaussian_term) {
        // largest c with gaussian_term + exp(-c*min_term) >= empirical
        const double c_point = -std::log(row.empirical - row.gaussian_term) / row.min_term;
        cal.c = std::min(cal.c, std::max(c_point, 1e-6));
      }
    }
  }
  return cal;
}

}  // namespace dfs::theory
