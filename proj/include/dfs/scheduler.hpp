#pragma once

#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <vector>

#include "dfs/block_mask.hpp"
#include "dfs/curve.hpp"
#include "dfs/mask_builder.hpp"
#include "dfs/tensor.hpp"

namespace dfs {

// Per-step sparsity budget: dense warmup for the first
// floor(warmup_fraction * T) steps, then one budget per phase of length
// ceil(phase_fraction * T); the last phase absorbs any remaining steps.
class SparsitySchedule {
 public:
  struct Config {
    int total_steps = 50;
    double warmup_fraction = 0.25;
    std::vector<double> phase_budgets = {0.3, 0.2, 0.1};
    double phase_fraction = 0.25;
    int update_interval = 12;  // mask update interval Delta
  };

  explicit SparsitySchedule(Config config);

  // nullopt = dense step.
  std::optional<double> budget_at(int step) const;

  int total_steps() const { return config_.total_steps; }
  int warmup_steps() const { return warmup_steps_; }
  int first_sparse_step() const { return warmup_steps_; }
  int phase_length() const { return phase_length_; }
  int update_interval() const { return config_.update_interval; }
  const Config& config() const { return config_; }

  // true at sparse steps hitting the update interval, counted from the
  // first sparse step
  bool is_update_step(int step) const;

 private:
  Config config_;
  int warmup_steps_ = 0;
  int phase_length_ = 1;
};

// Per-(layer, head) cached masks. Reads return copies; concurrent reads
// and per-key writes are serialized internally.
class MaskCache {
 public:
  struct Entry {
    BlockMask mask;
    int last_update_step = 0;
  };

  std::optional<Entry> find(int layer, int head) const;
  bool contains(int layer, int head) const;
  void store(int layer, int head, BlockMask mask, int step);
  size_t size() const;
  bool empty() const { return size() == 0; }
  void clear();

 private:
  mutable std::mutex mu_;
  std::map<std::pair<int, int>, Entry> entries_;
};

// true iff no mask is cached for (layer, head) or the step hits the
// update interval.
bool should_update(const MaskCache& cache, int layer, int head, int step,
                   const SparsitySchedule& schedule);

struct StepStats {
  bool dense = true;
  double budget = 1.0;
  bool mask_updated = false;
  double sparsity = 0.0;
  double recall = 1.0;
  bool recall_recorded = false;
};

struct StepOptions {
  bool record_recall = false;  // needs dense scores; only honored when N fits the cap
  bool force_dense = false;    // per-layer dense override
};

// One pipeline step: dense attention during warmup, otherwise reorder,
// build or reuse the cached mask, run block-sparse attention, restore the
// original order. Sparse outputs are recomputed every step even when the
// mask is reused.
Matrix run_step(const Matrix& q, const Matrix& k, const Matrix& v, const Permutation& perm,
                const ScoringParams& params, const SparsitySchedule& schedule,
                MaskCache& cache, int layer, int head, int step,
                const StepOptions& options = {}, StepStats* stats = nullptr);

struct StepTensors {
  Matrix q;
  Matrix k;
  Matrix v;
};

struct Workload {
  int steps = 1;
  int layers = 1;
  int heads = 1;
  std::function<StepTensors(int step, int layer, int head)> tensors;
};

struct TrajectoryRow {
  int step = 0;
  int layer = 0;
  int head = 0;
  double budget = 1.0;
  double sparsity = 0.0;
  double recall = 1.0;
  bool recall_recorded = false;
  bool mask_updated = false;
  bool dense = true;
};

struct TrajectoryOptions {
  bool record_recall = true;
  int threads = 1;
  std::set<int> dense_layers;  // layers forced dense at every step
  // sinks may be called from worker threads; step/layer/head identify the event
  std::function<void(int step, int layer, int head, const BlockMask&)> mask_sink;
  std::function<void(int step, int layer, int head, const Matrix&)> output_sink;
};

// Drives run_step over all steps (sequential) and layer/head pairs
// (parallel); one report row per (step, layer, head).
std::vector<TrajectoryRow> run_trajectory(const Workload& workload, const Permutation& perm,
                                          const ScoringParams& params,
                                          const SparsitySchedule& schedule,
                                          const TrajectoryOptions& options = {});

}  // namespace dfs
