#include "dfs/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

namespace dfs::synthetic {

namespace {

// stream tags keeping every tensor/trial draw on its own substream
enum StreamTag : uint64_t {
  kTagCentroidQ = 1,
  kTagCentroidK = 2,
  kTagDriftQ = 3,
  kTagDriftK = 4,
  kTagNoiseQ = 5,
  kTagNoiseK = 6,
  kTagFieldQ = 7,
  kTagFieldK = 8,
  kTagFieldV = 9,
  kTagStepNoise = 10,
};

void fill_gaussian(RandomStream& stream, std::span<float> out, double stddev) {
  for (float& v : out) v = static_cast<float>(stddev * stream.next_gaussian());
}

// Random unit direction, optionally constrained orthogonal to e1.
std::vector<double> random_direction(RandomStream& stream, int64_t dim, bool zero_first) {
  std::vector<double> dir(static_cast<size_t>(dim));
  double norm_sq = 0.0;
  do {
    norm_sq = 0.0;
    for (size_t c = 0; c < dir.size(); ++c) {
      dir[c] = (zero_first && c == 0) ? 0.0 : stream.next_gaussian();
      norm_sq += dir[c] * dir[c];
    }
  } while (norm_sq == 0.0);
  const double inv = 1.0 / std::sqrt(norm_sq);
  for (double& v : dir) v *= inv;
  return dir;
}

}  // namespace

void BlockModelParams::validate() const {
  if (blocks < 1 || block_tokens < 1 || head_dim < 1)
    throw std::invalid_argument("BlockModelParams: blocks, block_tokens, head_dim must be >= 1");
  if (tau < 0.0 || sigma < 0.0)
    throw std::invalid_argument("BlockModelParams: tau and sigma must be >= 0");
  if (!(centroid_norm_bound > 0.0))
    throw std::invalid_argument("BlockModelParams: centroid_norm_bound must be > 0");
  if (gap_target) {
    if (*gap_target < 0.0) throw std::invalid_argument("BlockModelParams: gap_target must be >= 0");
    if (head_dim < 2 && blocks > 1)
      throw std::invalid_argument("BlockModelParams: gap_target needs head_dim >= 2");
    // keys spread symmetrically along e1: (M-1)*g/2 <= C/sqrt(C) = sqrt(C)
    const double max_gap =
        blocks > 1 ? 2.0 * centroid_norm_bound / static_cast<double>(blocks - 1)
                   : std::numeric_limits<double>::infinity();
    if (*gap_target > max_gap + 1e-12)
      throw std::invalid_argument("BlockModelParams: gap_target infeasible under norm bound");
  }
}

BlockModel::BlockModel(const BlockModelParams& params) : params_(params) {
  params_.validate();
  const int64_t m = params_.blocks;
  const int64_t d = params_.head_dim;
  const double c = params_.centroid_norm_bound;
  const double root_c = std::sqrt(c);
  centroids_.q = Matrix(m, d);
  centroids_.k = Matrix(m, d);

  if (params_.gap_target) {
    const double gap = *params_.gap_target;
    for (int64_t u = 0; u < m; ++u) centroids_.q.at(u, 0) = static_cast<float>(root_c);
    RandomStream stream = RandomStream::derived(params_.seed, {kTagCentroidK});
    for (int64_t v = 0; v < m; ++v) {
      // first coordinate a_v so that <qbar, kbar_v> descends in steps of gap
      const double a =
          (static_cast<double>(m - 1) / 2.0 - static_cast<double>(v)) * gap / root_c;
      const double residual_sq = std::max(0.0, c - a * a);
      const auto dir = random_direction(stream, d, /*zero_first=*/true);
      const double residual = std::sqrt(residual_sq);
      centroids_.k.at(v, 0) = static_cast<float>(a);
      for (int64_t col = 1; col < d; ++col)
        centroids_.k.at(v, col) = static_cast<float>(residual * dir[static_cast<size_t>(col)]);
    }
  } else {
    RandomStream qstream = RandomStream::derived(params_.seed, {kTagCentroidQ});
    RandomStream kstream = RandomStream::derived(params_.seed, {kTagCentroidK});
    for (int64_t u = 0; u < m; ++u) {
      const auto qdir = random_direction(qstream, d, false);
      const auto kdir = random_direction(kstream, d, false);
      for (int64_t col = 0; col < d; ++col) {
        centroids_.q.at(u, col) = static_cast<float>(root_c * qdir[static_cast<size_t>(col)]);
        centroids_.k.at(u, col) = static_cast<float>(root_c * kdir[static_cast<size_t>(col)]);
      }
    }
  }
}

TokenSample BlockModel::draw(uint64_t trial) const {
  const int64_t m = params_.blocks;
  const int64_t b = params_.block_tokens;
  const int64_t d = params_.head_dim;
  TokenSample sample{Matrix(m * b, d), Matrix(m * b, d)};
  std::vector<float> drift(static_cast<size_t>(d));

  const auto fill = [&](Matrix& out, const Matrix& centroids, uint64_t drift_tag,
                        uint64_t noise_tag) {
    for (int64_t blk = 0; blk < m; ++blk) {
      RandomStream drift_stream =
          RandomStream::derived(params_.seed, {drift_tag, trial, static_cast<uint64_t>(blk)});
      RandomStream noise_stream =
          RandomStream::derived(params_.seed, {noise_tag, trial, static_cast<uint64_t>(blk)});
      fill_gaussian(drift_stream, drift, params_.tau);
      const auto centroid = centroids.row(blk);
      for (int64_t i = 0; i < b; ++i) {
        auto row = out.row(blk * b + i);
        fill_gaussian(noise_stream, row, params_.sigma);
        for (int64_t col = 0; col < d; ++col)
          row[static_cast<size_t>(col)] +=
              centroid[static_cast<size_t>(col)] + drift[static_cast<size_t>(col)];
      }
    }
  };
  fill(sample.q, centroids_.q, kTagDriftQ, kTagNoiseQ);
  fill(sample.k, centroids_.k, kTagDriftK, kTagNoiseK);
  return sample;
}

double BlockModel::min_cut_gap(int64_t k_select) const {
  const int64_t m = params_.blocks;
  if (k_select < 1 || k_select >= m)
    throw std::invalid_argument("min_cut_gap: need 1 <= K < M");
  double min_gap = std::numeric_limits<double>::infinity();
  std::vector<double> scores(static_cast<size_t>(m));
  for (int64_t u = 0; u < m; ++u) {
    for (int64_t v = 0; v < m; ++v) {
      double acc = 0.0;
      for (int64_t c = 0; c < params_.head_dim; ++c)
        acc += static_cast<double>(centroids_.q.at(u, c)) * centroids_.k.at(v, c);
      scores[static_cast<size_t>(v)] = acc;
    }
    std::vector<double> sorted = scores;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    min_gap = std::min(min_gap, sorted[static_cast<size_t>(k_select - 1)] -
                                    sorted[static_cast<size_t>(k_select)]);
  }
  return min_gap;
}

BlockModelSample gen_block_model(const BlockModelParams& params) {
  BlockModel model(params);
  TokenSample tokens = model.draw(0);
  return {std::move(tokens.q), std::move(tokens.k), model.centroids()};
}

void MixedSemanticParams::validate() const {
  if (tokens < 1 || group_tokens < 1 || head_dim < 1 || levels < 1)
    throw std::invalid_argument("MixedSemanticParams: sizes must be >= 1");
  const int64_t coarsest = group_tokens << (levels - 1);
  if (tokens % coarsest != 0)
    throw std::invalid_argument(
        "MixedSemanticParams: coarsest level group_tokens*2^(levels-1) must divide tokens");
  if (!(centroid_scale > 0.0) || sigma < 0.0)
    throw std::invalid_argument("MixedSemanticParams: bad scale or sigma");
}

TokenSample gen_mixed_semantic(const MixedSemanticParams& params) {
  params.validate();
  const int64_t d = params.head_dim;
  TokenSample sample{Matrix(params.tokens, d), Matrix(params.tokens, d)};

  RandomStream qnoise = RandomStream::derived(params.seed, {kTagNoiseQ});
  RandomStream knoise = RandomStream::derived(params.seed, {kTagNoiseK});
  fill_gaussian(qnoise, sample.q.values(), params.sigma);
  fill_gaussian(knoise, sample.k.values(), params.sigma);

  const double level_scale = params.centroid_scale / std::sqrt(static_cast<double>(params.levels));
  for (int64_t level = 0; level < params.levels; ++level) {
    const int64_t span = params.group_tokens << level;
    const int64_t segments = params.tokens / span;
    RandomStream dir_stream =
        RandomStream::derived(params.seed, {kTagCentroidQ, static_cast<uint64_t>(level)});
    RandomStream perm_stream =
        RandomStream::derived(params.seed, {kTagCentroidK, static_cast<uint64_t>(level)});

    // query segment s pairs with key segment placement[s]
    std::vector<int64_t> placement(static_cast<size_t>(segments));
    for (int64_t s = 0; s < segments; ++s) placement[static_cast<size_t>(s)] = s;
    for (int64_t s = segments - 1; s > 0; --s)
      std::swap(placement[static_cast<size_t>(s)],
                placement[perm_stream.next_below(static_cast<uint64_t>(s) + 1)]);

    for (int64_t s = 0; s < segments; ++s) {
      const auto dir = random_direction(dir_stream, d, false);
      const int64_t qbase = s * span;
      const int64_t kbase = placement[static_cast<size_t>(s)] * span;
      for (int64_t i = 0; i < span; ++i)
        for (int64_t c = 0; c < d; ++c) {
          const float component = static_cast<float>(level_scale * dir[static_cast<size_t>(c)]);
          sample.q.at(qbase + i, c) += component;
          sample.k.at(kbase + i, c) += component;
        }
    }
  }
  return sample;
}

void FieldParams::validate() const {
  dims.validate();
  if (head_dim < 1) throw std::invalid_argument("FieldParams: head_dim must be >= 1");
  if (smoothness < 0.0) throw std::invalid_argument("FieldParams: smoothness must be >= 0");
}

namespace {

// One round of boundary-clamped 6-neighbor averaging per feature channel,
// re-standardized to unit variance afterwards so smoothing moves the
// correlation length without shrinking the field.
void smooth_once(Matrix& x, const GridDims& dims, Matrix& scratch) {
  const int64_t d = x.cols();
  for (int64_t t = 0; t < dims.frames; ++t)
    for (int64_t y = 0; y < dims.height; ++y)
      for (int64_t xx = 0; xx < dims.width; ++xx) {
        const int64_t self = dims.raster_index(t, y, xx);
        const int64_t neighbors[6] = {
            dims.raster_index(std::max<int64_t>(t - 1, 0), y, xx),
            dims.raster_index(std::min(t + 1, dims.frames - 1), y, xx),
            dims.raster_index(t, std::max<int64_t>(y - 1, 0), xx),
            dims.raster_index(t, std::min(y + 1, dims.height - 1), xx),
            dims.raster_index(t, y, std::max<int64_t>(xx - 1, 0)),
            dims.raster_index(t, y, std::min(xx + 1, dims.width - 1)),
        };
        auto dst = scratch.row(self);
        const auto center = x.row(self);
        for (int64_t c = 0; c < d; ++c) {
          double acc = center[static_cast<size_t>(c)];
          for (int64_t nb : neighbors) acc += x.at(nb, c);
          dst[static_cast<size_t>(c)] = static_cast<float>(acc / 7.0);
        }
      }
  std::swap(x, scratch);

  double sum = 0.0, sum_sq = 0.0;
  for (float v : x.values()) {
    sum += v;
    sum_sq += static_cast<double>(v) * v;
  }
  const double n = static_cast<double>(x.size());
  const double var = sum_sq / n - (sum / n) * (sum / n);
  if (var > 0.0) {
    const float inv = static_cast<float>(1.0 / std::sqrt(var));
    for (float& v : x.values()) v *= inv;
  }
}

Matrix gen_field_tensor(const FieldParams& params, uint64_t tag) {
  const int64_t n = params.dims.token_count();
  Matrix x(n, params.head_dim);
  RandomStream stream = RandomStream::derived(params.seed, {tag});
  fill_gaussian(stream, x.values(), 1.0);
  const int64_t rounds = std::llround(params.smoothness);
  if (rounds > 0) {
    Matrix scratch(n, params.head_dim);
    for (int64_t r = 0; r < rounds; ++r) smooth_once(x, params.dims, scratch);
  }
  return x;
}

}  // namespace

FieldSample gen_video_field(const FieldParams& params) {
  params.validate();
  return {gen_field_tensor(params, kTagFieldQ), gen_field_tensor(params, kTagFieldK),
          gen_field_tensor(params, kTagFieldV)};
}

void TrajectoryParams::validate() const {
  field.validate();
  if (steps < 1) throw std::invalid_argument("TrajectoryParams: steps must be >= 1");
  if (!(noise_start >= noise_end) || noise_end < 0.0)
    throw std::invalid_argument("TrajectoryParams: need noise_start >= noise_end >= 0");
}

DenoisingTrajectory::DenoisingTrajectory(const TrajectoryParams& params)
    : params_(params), base_(gen_video_field(params.field)) {
  params_.validate();
}

double DenoisingTrajectory::noise_std_at(int step) const {
  if (step < 0 || step >= params_.steps)
    throw std::out_of_range("DenoisingTrajectory: step out of range");
  if (params_.steps == 1) return params_.noise_start;
  const double f = static_cast<double>(step) / static_cast<double>(params_.steps - 1);
  return params_.noise_start + (params_.noise_end - params_.noise_start) * f;
}

FieldSample DenoisingTrajectory::at(int step) const {
  const double stddev = noise_std_at(step);
  FieldSample sample = base_;
  if (stddev > 0.0) {
    const uint64_t s = static_cast<uint64_t>(step);
    const auto add_noise = [&](Matrix& x, uint64_t which) {
      RandomStream stream =
          RandomStream::derived(params_.field.seed, {kTagStepNoise, which, s});
      for (float& v : x.values()) v += static_cast<float>(stddev * stream.next_gaussian());
    };
    add_noise(sample.q, kTagFieldQ);
    add_noise(sample.k, kTagFieldK);
    add_noise(sample.v, kTagFieldV);
  }
  return sample;
}

}  // namespace dfs::synthetic
