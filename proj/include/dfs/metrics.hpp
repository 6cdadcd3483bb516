#pragma once

#include <cstdint>
#include <vector>

#include "dfs/block_mask.hpp"
#include "dfs/curve.hpp"
#include "dfs/tensor.hpp"

namespace dfs {

struct VarianceReport {
  Ordering ordering = Ordering::kRaster;
  int64_t block_size = 0;
  double var_q = 0.0;
  double var_k = 0.0;
};

// Mean over blocks of the mean squared Euclidean deviation from the block
// mean, divided by the feature dimension. Partial trailing blocks use
// their actual extent.
double intra_block_variance(const Matrix& x, int64_t block_size);

// 1 - selected/(M*M).
double realized_sparsity(const BlockMask& mask);

struct RecallSample {
  int step = 0;
  double recall = 0.0;
};

struct RecallCurvePoint {
  int step = 0;
  double mean = 0.0;
  double stddev = 0.0;  // sample std; 0 when a step has a single sample
  int64_t samples = 0;
};

// Per-step mean/std of recall over whatever the samples aggregate
// (layers, heads, seeds). Throws if no samples carry recall.
std::vector<RecallCurvePoint> recall_curve(const std::vector<RecallSample>& samples);

}  // namespace dfs
