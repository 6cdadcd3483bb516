#include "dfs/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace dfs {

double intra_block_variance(const Matrix& x, int64_t block_size) {
  if (block_size < 1) throw std::invalid_argument("intra_block_variance: block_size must be >= 1");
  if (x.rows() < 1) throw std::invalid_argument("intra_block_variance: empty input");
  const int64_t blocks = block_count_for(x.rows(), block_size);
  double total = 0.0;
  std::vector<double> mean(static_cast<size_t>(x.cols()));
  for (int64_t blk = 0; blk < blocks; ++blk) {
    const int64_t lo = blk * block_size;
    const int64_t hi = std::min(lo + block_size, x.rows());
    const double count = static_cast<double>(hi - lo);
    std::fill(mean.begin(), mean.end(), 0.0);
    for (int64_t i = lo; i < hi; ++i) {
      const auto row = x.row(i);
      for (int64_t c = 0; c < x.cols(); ++c) mean[static_cast<size_t>(c)] += row[static_cast<size_t>(c)];
    }
    for (double& m : mean) m /= count;
    double dev = 0.0;
    for (int64_t i = lo; i < hi; ++i) {
      const auto row = x.row(i);
      for (int64_t c = 0; c < x.cols(); ++c) {
        const double d = row[static_cast<size_t>(c)] - mean[static_cast<size_t>(c)];
        dev += d * d;
      }
    }
    total += dev / count / static_cast<double>(x.cols());
  }
  return total / static_cast<double>(blocks);
}

double realized_sparsity(const BlockMask& mask) {
  const double cells = static_cast<double>(mask.block_count()) * static_cast<double>(mask.block_count());
  return 1.0 - static_cast<double>(mask.selected_count()) / cells;
}

std::vector<RecallCurvePoint> recall_curve(const std::vector<RecallSample>& samples) {
  if (samples.empty()) throw std::invalid_argument("recall_curve: no recall samples");
  std::map<int, std::vector<double>> by_step;
  for (const auto& s : samples) by_step[s.step].push_back(s.recall);
  std::vector<RecallCurvePoint> curve;
  curve.reserve(by_step.size());
  for (const auto& [step, values] : by_step) {
    RecallCurvePoint p;
    p.step = step;
    p.samples = static_cast<int64_t>(values.size());
    for (double v : values) p.mean += v;
    p.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
      double acc = 0.0;
      for (double v : values) acc += (v - p.mean) * (v - p.mean);
      p.stddev = std::sqrt(acc / static_cast<double>(values.size() - 1));
    }
    curve.push_back(p);
  }
  return curve;
}

}  // namespace dfs
