#include "dfs/scheduler.hpp"

#include <cmath>
#include <stdexcept>

#include "dfs/attention.hpp"
#include "dfs/metrics.hpp"
#include "dfs/parallel.hpp"

namespace dfs {

namespace {
// boundary arithmetic tolerance so fractions like 0.3*10 land on the
// intended integer
constexpr double kEps = 1e-9;
}  // namespace

SparsitySchedule::SparsitySchedule(Config config) : config_(std::move(config)) {
  if (config_.total_steps < 1)
    throw std::invalid_argument("SparsitySchedule: total_steps must be >= 1");
  if (config_.warmup_fraction < 0.0 || config_.warmup_fraction > 1.0)
    throw std::invalid_argument("SparsitySchedule: warmup_fraction must lie in [0, 1]");
  if (config_.phase_fraction < 0.0 || config_.phase_fraction > 1.0)
    throw std::invalid_argument("SparsitySchedule: phase_fraction must lie in [0, 1]");
  if (config_.update_interval < 1)
    throw std::invalid_argument("SparsitySchedule: update_interval must be >= 1");
  for (double b : config_.phase_budgets)
    if (!(b > 0.0) || b > 1.0)
      throw std::invalid_argument("SparsitySchedule: budgets must lie in (0, 1]");
  const double coverage = config_.warmup_fraction +
                          static_cast<double>(config_.phase_budgets.size()) * config_.phase_fraction;
  if (coverage > 1.0 + kEps)
    throw std::invalid_argument("SparsitySchedule: warmup + phases exceed the step range");

  const double t = static_cast<double>(config_.total_steps);
  warmup_steps_ = static_cast<int>(std::floor(config_.warmup_fraction * t + kEps));
  warmup_steps_ = std::min(warmup_steps_, config_.total_steps);
  if (warmup_steps_ < config_.total_steps && config_.phase_budgets.empty())
    throw std::invalid_argument("SparsitySchedule: sparse steps exist but no phase budgets given");
  phase_length_ = static_cast<int>(std::ceil(config_.phase_fraction * t - kEps));
  if (phase_length_ < 1) phase_length_ = 1;
}

std::optional<double> SparsitySchedule::budget_at(int step) const {
  if (step < 0 || step >= config_.total_steps)
    throw std::out_of_range("budget_at: step out of range");
  if (step < warmup_steps_) return std::nullopt;
  const int phase = (step - warmup_steps_) / phase_length_;
  const int last = static_cast<int>(config_.phase_budgets.size()) - 1;
  return config_.phase_budgets[static_cast<size_t>(std::min(phase, last))];
}

bool SparsitySchedule::is_update_step(int step) const {
  if (step < warmup_steps_) return false;
  return (step - warmup_steps_) % config_.update_interval == 0;
}

std::optional<MaskCache::Entry> MaskCache::find(int layer, int head) const {
  std::lock_guard<std::mutex> lock(mu_);
  const auto it = entries_.find({layer, head});
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

bool MaskCache::contains(int layer, int head) const {
  std::lock_guard<std::mutex> lock(mu_);
  return entries_.count({layer, head}) > 0;
}

void MaskCache::store(int layer, int head, BlockMask mask, int step) {
  std::lock_guard<std::mutex> lock(mu_);
  entries_[{layer, head}] = Entry{std::move(mask), step};
}

size_t MaskCache::size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return entries_.size();
}

void MaskCache::clear() {
  std::lock_guard<std::mutex> lock(mu_);
  entries_.clear();
}

bool should_update(const MaskCache& cache, int layer, int head, int step,
                   const SparsitySchedule& schedule) {
  if (!cache.contains(layer, head)) return true;
  return schedule.is_update_step(step);
}

Matrix run_step(const Matrix& q, const Matrix& k, const Matrix& v, const Permutation& perm,
                const ScoringParams& params, const SparsitySchedule& schedule,
                MaskCache& cache, int layer, int head, int step, const StepOptions& options,
                StepStats* stats) {
  if (perm.size() != q.rows())
    throw std::invalid_argument("run_step: permutation length does not match token count");
  const auto budget = schedule.budget_at(step);

  if (!budget || options.force_dense) {
    if (stats) {
      *stats = StepStats{};
      stats->recall_recorded = options.record_recall && q.rows() <= kMaxDenseScoreRows;
    }
    return full_attention_output(q, k, v);
  }

  const Matrix rq = apply_permutation(perm, q);
  const Matrix rk = apply_permutation(perm, k);
  const Matrix rv = apply_permutation(perm, v);

  BlockMask mask;
  bool updated = false;
  if (should_update(cache, layer, head, step, schedule)) {
    mask = build_mask(rq, rk, params, *budget);
    cache.store(layer, head, mask, step);
    updated = true;
  } else {
    mask = cache.find(layer, head)->mask;
  }

  const Matrix sparse_out = block_sparse_attention(rq, rk, rv, mask);

  if (stats) {
    stats->dense = false;
    stats->budget = *budget;
    stats->mask_updated = updated;
    stats->sparsity = realized_sparsity(mask);
    stats->recall_recorded = false;
    if (options.record_recall && q.rows() <= kMaxDenseScoreRows) {
      stats->recall = attention_recall(attention_scores(rq, rk), mask);
      stats->recall_recorded = true;
    }
  }
  return apply_permutation(invert_permutation(perm), sparse_out);
}

std::vector<TrajectoryRow> run_trajectory(const Workload& workload, const Permutation& perm,
                                          const ScoringParams& params,
                                          const SparsitySchedule& schedule,
                                          const TrajectoryOptions& options) {
  if (workload.steps != schedule.total_steps())
    throw std::invalid_argument("run_trajectory: workload steps differ from schedule steps");
  if (workload.layers < 1 || workload.heads < 1 || !workload.tensors)
    throw std::invalid_argument("run_trajectory: invalid workload");

  MaskCache cache;
  const int pairs = workload.layers * workload.heads;
  std::vector<TrajectoryRow> rows(static_cast<size_t>(workload.steps) *
                                  static_cast<size_t>(pairs));
  const int64_t expected_tokens = perm.size();

  for (int step = 0; step < workload.steps; ++step) {
    parallel_for(pairs, options.threads, [&](int64_t pair) {
      const int layer = static_cast<int>(pair) / workload.heads;
      const int head = static_cast<int>(pair) % workload.heads;
      const StepTensors tensors = workload.tensors(step, layer, head);
      if (tensors.q.rows() != expected_tokens)
        throw std::invalid_argument("run_trajectory: token count drifted between steps");

      StepOptions step_options;
      step_options.record_recall = options.record_recall;
      step_options.force_dense = options.dense_layers.count(layer) > 0;
      StepStats stats;
      Matrix out = run_step(tensors.q, tensors.k, tensors.v, perm, params, schedule, cache,
                            layer, head, step, step_options, &stats);

      TrajectoryRow row;
      row.step = step;
      row.layer = layer;
      row.head = head;
      row.budget = stats.budget;
      row.sparsity = stats.sparsity;
      row.recall = stats.recall;
      row.recall_recorded = stats.recall_recorded;
      row.mask_updated = stats.mask_updated;
      row.dense = stats.dense;
      rows[static_cast<size_t>(step) * static_cast<size_t>(pairs) + static_cast<size_t>(pair)] =
          row;

      if (options.mask_sink && stats.mask_updated)
        options.mask_sink(step, layer, head, cache.find(layer, head)->mask);
      if (options.output_sink) options.output_sink(step, layer, head, out);
    });
  }
  return rows;
}

}  // namespace dfs
