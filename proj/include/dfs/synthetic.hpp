#pragma once

#include <cstdint>
#include <optional>

#include "dfs/grid.hpp"
#include "dfs/rng.hpp"
#include "dfs/tensor.hpp"

namespace dfs::synthetic {

// Token model: q_i = qbar_u + xi_u + eps_i with block-shared drift
// xi ~ N(0, tau^2 I) and per-token noise eps ~ N(0, sigma^2 I).
struct BlockModelParams {
  int64_t blocks = 4;         // M
  int64_t block_tokens = 16;  // B
  int64_t head_dim = 16;      // d
  double tau = 0.0;
  double sigma = 0.0;
  double centroid_norm_bound = 1.0;  // C, ||centroid||^2 == C exactly
  std::optional<double> gap_target;  // exact adjacent-rank similarity gap
  uint64_t seed = 1;

  double pooled_noise_var() const {  // delta^2 = tau^2 + sigma^2/B
    return tau * tau + sigma * sigma / static_cast<double>(block_tokens);
  }
  void validate() const;
};

struct Centroids {
  Matrix q;  // M x d
  Matrix k;  // M x d
};

struct TokenSample {
  Matrix q;  // (M*B) x d
  Matrix k;
};

// Fixed centroids drawn once from the seed; token draws are independent
// per trial. Default centroids are uniform random directions scaled to
// norm sqrt(C). With gap_target set, every query centroid is the same
// direction e1*sqrt(C) and key centroids descend along e1 in equal steps
// of gap_target (remaining norm in random directions orthogonal to e1),
// so the minimum cut gap equals gap_target for every K.
class BlockModel {
 public:
  explicit BlockModel(const BlockModelParams& params);

  const BlockModelParams& params() const { return params_; }
  const Centroids& centroids() const { return centroids_; }

  TokenSample draw(uint64_t trial) const;

  // min over query blocks u and cut pairs (v in top-K, v' outside) of
  // <qbar_u, kbar_v - kbar_v'>, with key blocks ranked per query block.
  double min_cut_gap(int64_t k_select) const;

 private:
  BlockModelParams params_;
  Centroids centroids_;
};

struct BlockModelSample {
  Matrix q;
  Matrix k;
  Centroids centroids;
};

BlockModelSample gen_block_model(const BlockModelParams& params);

// Mixed-semantic workload for sub-block granularity studies. Semantic
// structure lives at a hierarchy of segment sizes group_tokens * 2^l for
// l in [0, levels): at every level each query segment is paired with one
// key segment (seeded permuted placement) through a shared random
// direction. Mean-pooling at window w averages away every level finer
// than w, so coarser scorers lose strictly more of the attention
// structure.
struct MixedSemanticParams {
  int64_t tokens = 1024;
  int64_t group_tokens = 16;  // finest semantic segment
  int64_t levels = 4;
  int64_t head_dim = 16;
  double centroid_scale = 4.0;  // total semantic component norm
  double sigma = 0.5;           // per-token noise
  uint64_t seed = 1;
  void validate() const;
};

TokenSample gen_mixed_semantic(const MixedSemanticParams& params);

// Spatially correlated stand-in for video activations: i.i.d. Gaussian
// field smoothed by `smoothness` rounds of 6-neighbor averaging
// (boundary-clamped), flattened in raster order.
struct FieldParams {
  GridDims dims;
  int64_t head_dim = 16;
  double smoothness = 0.0;
  uint64_t seed = 1;
  void validate() const;
};

struct FieldSample {
  Matrix q;
  Matrix k;
  Matrix v;
};

FieldSample gen_video_field(const FieldParams& params);

// Smooth base field plus per-step additive i.i.d. noise whose stddev
// decays linearly from noise_start to noise_end.
struct TrajectoryParams {
  FieldParams field;
  int steps = 1;
  double noise_start = 1.0;
  double noise_end = 0.0;
  void validate() const;
};

class DenoisingTrajectory {
 public:
  explicit DenoisingTrajectory(const TrajectoryParams& params);
  int steps() const { return params_.steps; }
  double noise_std_at(int step) const;
  FieldSample at(int step) const;

 private:
  TrajectoryParams params_;
  FieldSample base_;
};

}  // namespace dfs::synthetic
