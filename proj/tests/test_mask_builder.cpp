#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "dfs/attention.hpp"
#include "dfs/mask_builder.hpp"
#include "dfs/rng.hpp"
#include "dfs/theory.hpp"

using namespace dfs;

namespace {

Matrix random_matrix(RandomStream& stream, int64_t rows, int64_t cols) {
  Matrix m(rows, cols);
  for (float& v : m.values()) v = static_cast<float>(stream.next_gaussian());
  return m;
}

// double-precision pooled softmax oracle, zero-padding to a multiple of
// the pool size
std::vector<std::vector<double>> brute_pooled_softmax(const Matrix& q, const Matrix& k,
                                                      int64_t pool) {
  const auto pooled = [&](const Matrix& x) {
    const int64_t groups = (x.rows() + pool - 1) / pool;
    std::vector<std::vector<double>> rows(static_cast<size_t>(groups),
                                          std::vector<double>(static_cast<size_t>(x.cols()), 0.0));
    for (int64_t g = 0; g < groups; ++g)
      for (int64_t c = 0; c < x.cols(); ++c) {
        double acc = 0.0;
        for (int64_t i = g * pool; i < std::min((g + 1) * pool, x.rows()); ++i) acc += x.at(i, c);
        rows[static_cast<size_t>(g)][static_cast<size_t>(c)] = acc / static_cast<double>(pool);
      }
    return rows;
  };
  const auto pq = pooled(q);
  const auto pk = pooled(k);
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  std::vector<std::vector<double>> result(pq.size(), std::vector<double>(pk.size()));
  for (size_t i = 0; i < pq.size(); ++i) {
    std::vector<double> logits(pk.size());
    double maxv = -1e300;
    for (size_t j = 0; j < pk.size(); ++j) {
      double acc = 0.0;
      for (size_t c = 0; c < pq[i].size(); ++c) acc += pq[i][c] * pk[j][c];
      logits[j] = acc * scale;
      maxv = std::max(maxv, logits[j]);
    }
    double z = 0.0;
    for (double& l : logits) {
      l = std::exp(l - maxv);
      z += l;
    }
    for (size_t j = 0; j < pk.size(); ++j) result[i][j] = logits[j] / z;
  }
  return result;
}

}  // namespace

TEST_CASE("mean_pool basics") {
  RandomStream stream(5);
  const Matrix x = random_matrix(stream, 6, 3);
  CHECK(mean_pool(x, 1) == x);

  Matrix pair(2, 2);
  pair.at(0, 0) = 4.0f;
  pair.at(0, 1) = -2.0f;
  pair.at(1, 0) = 4.0f;
  pair.at(1, 1) = -2.0f;
  const Matrix pooled = mean_pool(pair, 2);
  CHECK(pooled.rows() == 1);
  CHECK(pooled.at(0, 0) == 4.0f);
  CHECK(pooled.at(0, 1) == -2.0f);

  Matrix two(2, 2);
  two.at(1, 0) = 2.0f;
  two.at(1, 1) = 4.0f;
  const Matrix mean = mean_pool(two, 2);  // rows [0,0] and [2,4] -> [1,2]
  CHECK(mean.at(0, 0) == 1.0f);
  CHECK(mean.at(0, 1) == 2.0f);

  CHECK_THROWS_AS(mean_pool(x, 0), std::invalid_argument);
}

TEST_CASE("mean_pool zero-pads trailing rows") {
  Matrix x(3, 1);
  x.at(0, 0) = 3.0f;
  x.at(1, 0) = 3.0f;
  x.at(2, 0) = 3.0f;
  const Matrix pooled = mean_pool(x, 2);
  REQUIRE(pooled.rows() == 2);
  CHECK(pooled.at(0, 0) == 3.0f);
  CHECK(pooled.at(1, 0) == 1.5f);  // (3 + 0)/2
}

TEST_CASE("subblock scores degenerate cases") {
  RandomStream stream(7);
  const int64_t n = 6, d = 4;
  const Matrix q = random_matrix(stream, n, d);
  const Matrix k = random_matrix(stream, n, d);

  // one pooled row in a single block
  const Matrix whole = subblock_scores(q, k, {n, n});
  REQUIRE(whole.rows() == 1);
  REQUIRE(whole.cols() == 1);
  CHECK(whole.at(0, 0) == 1.0f);

  // pool of one reproduces the token-level attention matrix exactly
  const Matrix tokenwise = subblock_scores(q, k, {n, 1});
  CHECK(tokenwise == full_attention(q, k, q).scores);
}

TEST_CASE("subblock scores match the pooled brute force") {
  RandomStream stream(13);
  const Matrix q = random_matrix(stream, 8, 4);
  const Matrix k = random_matrix(stream, 8, 4);
  const Matrix sub = subblock_scores(q, k, {4, 2});
  const auto oracle = brute_pooled_softmax(q, k, 2);
  REQUIRE(sub.rows() == 4);
  REQUIRE(sub.cols() == 4);
  for (int64_t i = 0; i < 4; ++i)
    for (int64_t j = 0; j < 4; ++j)
      CHECK(sub.at(i, j) ==
            doctest::Approx(oracle[static_cast<size_t>(i)][static_cast<size_t>(j)]).epsilon(1e-5));
}

TEST_CASE("subblock score rows each sum to one, including padded geometry") {
  RandomStream stream(19);
  for (int64_t n : {8, 9, 11, 16}) {
    const Matrix q = random_matrix(stream, n, 4);
    const Matrix k = random_matrix(stream, n, 4);
    const ScoringParams params{4, 2};
    const Matrix sub = subblock_scores(q, k, params);
    const int64_t m = block_count_for(n, params.block_size);
    REQUIRE(sub.rows() == m * params.subs_per_block());
    for (int64_t i = 0; i < sub.rows(); ++i) {
      double sum = 0.0;
      for (int64_t j = 0; j < sub.cols(); ++j) sum += sub.at(i, j);
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
    }
  }
}

TEST_CASE("aggregate_scores") {
  ScoringParams params{4, 2};  // two sub-blocks per block

  // hand-computed 2x2 tile sums
  Matrix sub(4, 4);
  float value = 1.0f;
  for (int64_t i = 0; i < 4; ++i)
    for (int64_t j = 0; j < 4; ++j) sub.at(i, j) = value++;  // 1..16 row-major
  const MatrixD agg = aggregate_scores(sub, params);
  REQUIRE(agg.rows() == 2);
  CHECK(agg.at(0, 0) == 1 + 2 + 5 + 6);
  CHECK(agg.at(0, 1) == 3 + 4 + 7 + 8);
  CHECK(agg.at(1, 0) == 9 + 10 + 13 + 14);
  CHECK(agg.at(1, 1) == 11 + 12 + 15 + 16);

  // single sub-block per block: aggregation is the identity
  ScoringParams same{4, 4};
  Matrix one(2, 2);
  one.at(0, 0) = 0.25f;
  one.at(0, 1) = 0.75f;
  one.at(1, 0) = 0.5f;
  one.at(1, 1) = 0.5f;
  const MatrixD id = aggregate_scores(one, same);
  CHECK(id.at(0, 0) == doctest::Approx(0.25));
  CHECK(id.at(1, 1) == doctest::Approx(0.5));

  // uniform sub scores aggregate to all-equal block scores
  Matrix uniform(4, 4, 0.25f);
  const MatrixD u = aggregate_scores(uniform, params);
  for (int64_t i = 0; i < 2; ++i)
    for (int64_t j = 0; j < 2; ++j) CHECK(u.at(i, j) == doctest::Approx(1.0));

  CHECK_THROWS_AS(aggregate_scores(Matrix(3, 4), params), std::invalid_argument);
}

TEST_CASE("block score rows sum to B/Bs for arbitrary inputs") {
  RandomStream stream(23);
  for (int64_t n : {12, 13, 17}) {
    const Matrix q = random_matrix(stream, n, 4);
    const Matrix k = random_matrix(stream, n, 4);
    const ScoringParams params{6, 2};
    const MatrixD scores = block_scores(q, k, params);
    for (int64_t u = 0; u < scores.rows(); ++u) {
      double sum = 0.0;
      for (int64_t v = 0; v < scores.cols(); ++v) {
        CHECK(scores.at(u, v) >= 0.0);
        sum += scores.at(u, v);
      }
      CHECK(sum == doctest::Approx(3.0).epsilon(1e-4));  // B/Bs = 3
    }
  }
}

TEST_CASE("topk_count rounding") {
  CHECK(topk_count(1.0, 7) == 7);
  CHECK(topk_count(0.5, 4) == 2);
  CHECK(topk_count(0.5, 5) == 3);   // round half away from zero
  CHECK(topk_count(0.01, 10) == 1); // never empty
  CHECK(topk_count(1.0 / 4, 4) == 1);
  CHECK_THROWS_AS(topk_count(0.0, 4), std::invalid_argument);
  CHECK_THROWS_AS(topk_count(1.5, 4), std::invalid_argument);
}

TEST_CASE("topk_select tie-breaking and examples") {
  MatrixD scores(4, 4);
  const double row0[] = {0.4, 0.1, 0.4, 0.1};
  const double row1[] = {0.4, 0.4, 0.1, 0.1};
  for (int64_t v = 0; v < 4; ++v) {
    scores.at(0, v) = row0[v];
    scores.at(1, v) = row1[v];
    scores.at(2, v) = 0.25;           // all tied
    scores.at(3, v) = double(4 - v);  // strictly decreasing
  }
  const BlockMask mask = topk_select(scores, 0.5, 16);
  CHECK(mask.get(0, 0));
  CHECK(mask.get(0, 2));
  CHECK_FALSE(mask.get(0, 1));
  CHECK(mask.get(1, 0));
  CHECK(mask.get(1, 1));  // tie between equal scores goes to lower index
  CHECK(mask.get(2, 0));
  CHECK(mask.get(2, 1));
  CHECK(mask.get(3, 0));
  CHECK(mask.get(3, 1));

  // K = 1 keeps the argmax, lowest index on ties
  const BlockMask one = topk_select(scores, 0.25, 16);
  for (int64_t u = 0; u < 4; ++u) {
    int64_t count = 0;
    for (int64_t v = 0; v < 4; ++v) count += one.get(u, v);
    CHECK(count == 1);
  }
  CHECK(one.get(2, 0));

  // full budget selects everything
  const BlockMask all = topk_select(scores, 1.0, 16);
  CHECK(all.selected_count() == 16);
}

TEST_CASE("topk selections are nested across budgets") {
  RandomStream stream(29);
  MatrixD scores(8, 8);
  for (int64_t u = 0; u < 8; ++u)
    for (int64_t v = 0; v < 8; ++v) scores.at(u, v) = stream.next_unit();
  // inject ties to stress the deterministic tie rule
  scores.at(0, 3) = scores.at(0, 5);
  scores.at(2, 0) = scores.at(2, 7);

  BlockMask previous = topk_select(scores, 0.05, 4);
  for (double budget : {0.2, 0.4, 0.6, 0.8, 1.0}) {
    const BlockMask next = topk_select(scores, budget, 4);
    for (int64_t u = 0; u < 8; ++u)
      for (int64_t v = 0; v < 8; ++v)
        if (previous.get(u, v)) CHECK(next.get(u, v));
    previous = next;
  }
}

TEST_CASE("build_mask composes the chain deterministically") {
  RandomStream stream(31);
  const Matrix q = random_matrix(stream, 32, 8);
  const Matrix k = random_matrix(stream, 32, 8);
  const ScoringParams params{8, 2};
  const BlockMask a = build_mask(q, k, params, 0.5);
  const BlockMask b = build_mask(q, k, params, 0.5);
  CHECK(a == b);

  const BlockMask all = build_mask(q, k, params, 1.0);
  CHECK(all.selected_count() == all.block_count() * all.block_count());
}

TEST_CASE("sub-block size B reproduces the mean-pool baseline") {
  RandomStream stream(37);
  const int64_t n = 32, b = 8, d = 4;
  const Matrix q = random_matrix(stream, n, d);
  const Matrix k = random_matrix(stream, n, d);
  const BlockMask ours = build_mask(q, k, {b, b}, 0.5);

  // baseline oracle built directly from block centroids
  const auto base = brute_pooled_softmax(q, k, b);
  MatrixD scores(static_cast<int64_t>(base.size()), static_cast<int64_t>(base.size()));
  for (size_t u = 0; u < base.size(); ++u)
    for (size_t v = 0; v < base.size(); ++v)
      scores.at(static_cast<int64_t>(u), static_cast<int64_t>(v)) = base[u][v];
  const BlockMask baseline = topk_select(scores, 0.5, b);
  CHECK(ours == baseline);
}

TEST_CASE("sub-block size 1 agrees with the oracle top-K") {
  RandomStream stream(41);
  for (int trial = 0; trial < 10; ++trial) {
    const int64_t b = 2 << stream.next_below(2);           // 2 or 4
    const int64_t m = 2 + static_cast<int64_t>(stream.next_below(6));
    const int64_t n = b * m;
    const Matrix q = random_matrix(stream, n, 4);
    const Matrix k = random_matrix(stream, n, 4);
    const double budget = 0.3 + 0.6 * stream.next_unit();
    const BlockMask mask = build_mask(q, k, {b, 1}, budget);

    const Matrix dense = full_attention(q, k, q).scores;
    const auto oracle = theory::oracle_topk(dense, b, topk_count(budget, m));
    for (int64_t u = 0; u < m; ++u) {
      std::vector<int32_t> ours;
      for (int64_t v = 0; v < m; ++v)
        if (mask.get(u, v)) ours.push_back(static_cast<int32_t>(v));
      CHECK(ours == oracle[static_cast<size_t>(u)]);
    }
  }
}
