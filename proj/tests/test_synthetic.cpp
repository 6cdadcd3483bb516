#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <algorithm>
#include <vector>

#include "dfs/curve.hpp"
#include "dfs/metrics.hpp"
#include "dfs/synthetic.hpp"

using namespace dfs;
using namespace dfs::synthetic;

TEST_CASE("noiseless block model repeats the centroid in every row") {
  BlockModelParams params;
  params.blocks = 3;
  params.block_tokens = 4;
  params.head_dim = 5;
  params.centroid_norm_bound = 2.0;
  params.seed = 9;
  const auto sample = gen_block_model(params);
  REQUIRE(sample.q.rows() == 12);
  for (int64_t blk = 0; blk < 3; ++blk)
    for (int64_t i = 0; i < 4; ++i)
      for (int64_t c = 0; c < 5; ++c) {
        CHECK(sample.q.at(blk * 4 + i, c) == sample.centroids.q.at(blk, c));
        CHECK(sample.k.at(blk * 4 + i, c) == sample.centroids.k.at(blk, c));
      }
}

TEST_CASE("centroids sit exactly on the norm bound") {
  for (bool gapped : {false, true}) {
    BlockModelParams params;
    params.blocks = 4;
    params.head_dim = 8;
    params.centroid_norm_bound = 3.0;
    params.seed = 11;
    if (gapped) params.gap_target = 0.5;
    const BlockModel model(params);
    for (int64_t blk = 0; blk < 4; ++blk) {
      double qn = 0.0, kn = 0.0;
      for (int64_t c = 0; c < 8; ++c) {
        qn += static_cast<double>(model.centroids().q.at(blk, c)) * model.centroids().q.at(blk, c);
        kn += static_cast<double>(model.centroids().k.at(blk, c)) * model.centroids().k.at(blk, c);
      }
      CHECK(qn == doctest::Approx(3.0).epsilon(1e-5));
      CHECK(kn == doctest::Approx(3.0).epsilon(1e-5));
    }
  }
}

TEST_CASE("gap_target pins the minimum cut gap for every K") {
  BlockModelParams params;
  params.blocks = 5;
  params.head_dim = 16;
  params.centroid_norm_bound = 4.0;
  params.gap_target = 0.75;
  params.seed = 13;
  const BlockModel model(params);
  for (int64_t k = 1; k < 5; ++k)
    CHECK(model.min_cut_gap(k) == doctest::Approx(0.75).epsilon(1e-6));
}

TEST_CASE("infeasible gap targets are rejected") {
  BlockModelParams params;
  params.blocks = 5;
  params.head_dim = 8;
  params.centroid_norm_bound = 1.0;
  params.gap_target = 1.0;  // needs (M-1)*g/2 <= C/sqrt(C)*sqrt(C): max is 2C/(M-1) = 0.5
  CHECK_THROWS_AS((BlockModel(params)), std::invalid_argument);
  params.gap_target = 0.5;
  CHECK_NOTHROW((BlockModel(params)));
}

TEST_CASE("block model draws are deterministic and trial-independent") {
  BlockModelParams params;
  params.blocks = 2;
  params.block_tokens = 8;
  params.head_dim = 4;
  params.tau = 0.3;
  params.sigma = 0.7;
  params.seed = 17;
  const BlockModel a(params);
  const BlockModel b(params);
  CHECK(a.draw(0).q == b.draw(0).q);
  CHECK(a.draw(0).k == b.draw(0).k);
  CHECK_FALSE(a.draw(0).q == a.draw(1).q);

  params.seed = 18;
  const BlockModel c(params);
  CHECK_FALSE(a.draw(0).q == c.draw(0).q);
}

TEST_CASE("pooled centroid variance concentrates at sigma^2/B") {
  BlockModelParams params;
  params.blocks = 2;
  params.block_tokens = 16;
  params.head_dim = 8;
  params.tau = 0.0;
  params.sigma = 0.5;
  params.seed = 19;
  const BlockModel model(params);

  // with tau = 0, pooled centroid minus true centroid is the averaged
  // token noise whose per-coordinate variance is sigma^2/B
  double acc = 0.0;
  int64_t count = 0;
  for (uint64_t trial = 0; trial < 2000; ++trial) {
    const auto sample = model.draw(trial);
    for (int64_t blk = 0; blk < params.blocks; ++blk)
      for (int64_t c = 0; c < params.head_dim; ++c) {
        double mean = 0.0;
        for (int64_t i = 0; i < params.block_tokens; ++i)
          mean += sample.q.at(blk * params.block_tokens + i, c);
        mean /= static_cast<double>(params.block_tokens);
        const double dev = mean - model.centroids().q.at(blk, c);
        acc += dev * dev;
        ++count;
      }
  }
  const double target = params.sigma * params.sigma / static_cast<double>(params.block_tokens);
  CHECK(acc / static_cast<double>(count) == doctest::Approx(target).epsilon(0.1));
}

TEST_CASE("token noise has zero mean") {
  BlockModelParams params;
  params.blocks = 1;
  params.block_tokens = 1;
  params.head_dim = 4;
  params.sigma = 1.0;
  params.seed = 23;
  const BlockModel model(params);
  // >= 1e5 noise draws per coordinate within 4 standard errors of zero
  const int64_t trials = 100000;
  std::vector<double> mean(4, 0.0);
  for (int64_t t = 0; t < trials; ++t) {
    const auto sample = model.draw(static_cast<uint64_t>(t));
    for (int64_t c = 0; c < 4; ++c)
      mean[static_cast<size_t>(c)] += sample.q.at(0, c) - model.centroids().q.at(0, c);
  }
  const double se = 1.0 / std::sqrt(static_cast<double>(trials));
  for (double m : mean) CHECK(std::abs(m / static_cast<double>(trials)) < 4.0 * se);
}

TEST_CASE("mixed-semantic workload pairs query and key segments per level") {
  MixedSemanticParams params;
  params.tokens = 128;
  params.group_tokens = 8;
  params.levels = 3;  // segment sizes 8, 16, 32
  params.head_dim = 8;
  params.centroid_scale = 3.0;
  params.sigma = 0.0;
  params.seed = 41;
  const TokenSample a = gen_mixed_semantic(params);
  const TokenSample b = gen_mixed_semantic(params);
  CHECK(a.q == b.q);
  CHECK(a.k == b.k);

  // noiseless tokens are constant within the finest segment
  for (int64_t g = 0; g < params.tokens / params.group_tokens; ++g)
    for (int64_t i = 1; i < params.group_tokens; ++i)
      for (int64_t c = 0; c < params.head_dim; ++c)
        CHECK(a.q.at(g * params.group_tokens + i, c) ==
              a.q.at(g * params.group_tokens, c));

  // every query token has a strongly aligned key somewhere: its matched
  // finest segment shares a full level stack only piecewise, but the best
  // dot must clearly exceed the median alignment
  for (int64_t i = 0; i < params.tokens; i += params.group_tokens) {
    std::vector<double> dots;
    for (int64_t j = 0; j < params.tokens; j += params.group_tokens) {
      double acc = 0.0;
      for (int64_t c = 0; c < params.head_dim; ++c)
        acc += static_cast<double>(a.q.at(i, c)) * a.k.at(j, c);
      dots.push_back(acc);
    }
    std::vector<double> sorted = dots;
    std::sort(sorted.begin(), sorted.end());
    const double best = sorted.back();
    const double median = sorted[sorted.size() / 2];
    CHECK(best > median + 1.0);
  }

  params.group_tokens = 7;  // 7 * 2^2 = 28 does not divide 128
  CHECK_THROWS_AS(gen_mixed_semantic(params), std::invalid_argument);
}

TEST_CASE("video fields are deterministic") {
  FieldParams params;
  params.dims = {2, 4, 4};
  params.head_dim = 3;
  params.smoothness = 2.0;
  params.seed = 29;
  const FieldSample a = gen_video_field(params);
  const FieldSample b = gen_video_field(params);
  CHECK(a.q == b.q);
  CHECK(a.k == b.k);
  CHECK(a.v == b.v);
  params.seed = 30;
  CHECK_FALSE(gen_video_field(params).q == a.q);
}

TEST_CASE("smoothing lowers hilbert3d intra-block variance below raster") {
  int hilbert_wins = 0;
  const int seeds = 20;
  for (int seed = 0; seed < seeds; ++seed) {
    FieldParams params;
    params.dims = {8, 8, 8};
    params.head_dim = 8;
    params.smoothness = 4.0;
    params.seed = 100 + static_cast<uint64_t>(seed);
    const FieldSample field = gen_video_field(params);
    const Permutation hilbert = hilbert3d_order(params.dims);
    const double raster_var = intra_block_variance(field.q, 64);
    const double hilbert_var =
        intra_block_variance(apply_permutation(hilbert, field.q), 64);
    if (hilbert_var < raster_var) ++hilbert_wins;
  }
  CHECK(hilbert_wins >= 18);  // 90% of 20 seeds at unit-test scale
}

TEST_CASE("smoothness zero is raw iid noise") {
  FieldParams params;
  params.dims = {4, 4, 4};
  params.head_dim = 4;
  params.smoothness = 0.0;
  params.seed = 31;
  const FieldSample field = gen_video_field(params);
  // unsmoothed variance of a standard normal field stays near 1
  const double var = intra_block_variance(field.q, 64);
  CHECK(var > 0.8);
  CHECK(var < 1.2);
}

TEST_CASE("denoising trajectory basics") {
  TrajectoryParams params;
  params.field.dims = {2, 4, 4};
  params.field.head_dim = 4;
  params.field.smoothness = 2.0;
  params.field.seed = 37;
  params.steps = 5;
  params.noise_start = 0.0;
  params.noise_end = 0.0;
  const DenoisingTrajectory quiet(params);
  CHECK(quiet.at(0).q == quiet.at(4).q);  // zero noise: identical steps

  params.noise_start = 2.0;
  const DenoisingTrajectory decaying(params);
  CHECK(decaying.noise_std_at(0) == doctest::Approx(2.0));
  CHECK(decaying.noise_std_at(4) == doctest::Approx(0.0));
  CHECK(decaying.noise_std_at(2) == doctest::Approx(1.0));
  CHECK_FALSE(decaying.at(0).q == decaying.at(1).q);
  CHECK(decaying.at(4).q == quiet.at(4).q);  // noise fully decayed

  params.steps = 1;
  const DenoisingTrajectory single(params);
  CHECK(single.noise_std_at(0) == doctest::Approx(2.0));

  params.noise_start = 1.0;
  params.noise_end = 2.0;  // increasing noise is rejected
  CHECK_THROWS_AS((DenoisingTrajectory(params)), std::invalid_argument);
}

TEST_CASE("parameter validation") {
  BlockModelParams bad;
  bad.tau = -1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  FieldParams field;
  field.smoothness = -1.0;
  CHECK_THROWS_AS(field.validate(), std::invalid_argument);
}
