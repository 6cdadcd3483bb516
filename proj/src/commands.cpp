#include "dfs/commands.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <map>
#include <mutex>
#include <stdexcept>

#include "dfs/attention.hpp"
#include "dfs/config.hpp"
#include "dfs/curve.hpp"
#include "dfs/io.hpp"
#include "dfs/mask_builder.hpp"
#include "dfs/metrics.hpp"
#include "dfs/parallel.hpp"
#include "dfs/rng.hpp"
#include "dfs/scheduler.hpp"
#include "dfs/synthetic.hpp"
#include "dfs/theory.hpp"

namespace dfs::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// collects the command's asserted checks; prints one line per check and a
// JSON summary line when something failed
class CheckList {
 public:
  explicit CheckList(std::string command) : command_(std::move(command)) {}

  void check(bool ok, const std::string& name, const std::string& detail) {
    std::printf("check %-32s %s  (%s)\n", name.c_str(), ok ? "PASS" : "FAIL", detail.c_str());
    if (!ok) failures_.push_back({name, detail});
  }

  int finish() const {
    if (failures_.empty()) return 0;
    json summary;
    summary["command"] = command_;
    summary["failures"] = json::array();
    for (const auto& [name, detail] : failures_)
      summary["failures"].push_back({{"check", name}, {"detail", detail}});
    std::printf("%s\n", summary.dump().c_str());
    return 1;
  }

 private:
  std::string command_;
  std::vector<std::pair<std::string, std::string>> failures_;
};

uint64_t seed_with_override(uint64_t config_seed) {
  const char* env = std::getenv("DFS_SEED_OVERRIDE");
  if (env == nullptr || *env == '\0') return config_seed;
  uint64_t value = 0;
  const char* end = env + std::strlen(env);
  const auto [ptr, ec] = std::from_chars(env, end, value, 10);
  if (ec != std::errc{} || ptr != end)
    throw std::invalid_argument("DFS_SEED_OVERRIDE must be a decimal u64, got '" +
                                std::string(env) + "'");
  return value;
}

// resolved run metadata written next to every report, so seeds and
// parameters are explicit for reruns
void write_run_info(const fs::path& out_dir, const std::string& command, const json& config,
                    uint64_t seed, int threads) {
  json info;
  info["command"] = command;
  info["config"] = config;
  info["seed"] = seed;
  info["threads"] = threads;
  write_file_atomic(out_dir / "run_info.json", info.dump(2) + "\n");
}

struct CommonConfig {
  uint64_t seed = 1;
  int threads = 0;
};

CommonConfig read_common(ConfigReader& reader, int threads_override) {
  CommonConfig common;
  common.seed = seed_with_override(reader.get_u64("seed", 1));
  common.threads = static_cast<int>(reader.get_int("threads", 0));
  if (threads_override > 0) common.threads = threads_override;
  return common;
}

ScoringParams read_scoring(ConfigReader& reader, int64_t default_block = 64,
                           int64_t default_sub = 16) {
  ScoringParams params;
  params.block_size = reader.get_int("block_size", default_block);
  params.sub_block_size = reader.get_int("sub_block_size", default_sub);
  params.validate();
  return params;
}

SparsitySchedule read_schedule(ConfigReader& reader) {
  SparsitySchedule::Config config;
  config.total_steps = static_cast<int>(reader.get_int("total_steps", 50));
  config.warmup_fraction = reader.get_double("warmup_fraction", 0.25);
  config.phase_budgets = reader.get_double_list("phase_budgets", {0.3, 0.2, 0.1});
  config.phase_fraction = reader.get_double("phase_fraction", 0.25);
  config.update_interval = static_cast<int>(reader.get_int("update_interval", 12));
  return SparsitySchedule(config);
}

synthetic::BlockModelParams read_block_model(const json& object, const std::string& context,
                                             int64_t head_dim, uint64_t seed,
                                             double default_norm_bound = 1.0) {
  ConfigReader reader(object, context);
  synthetic::BlockModelParams params;
  params.blocks = reader.get_int("blocks", 4);
  params.block_tokens = reader.get_int("block_tokens", 16);
  params.head_dim = head_dim;
  params.tau = reader.get_double("tau", 0.0);
  params.sigma = reader.get_double("sigma", 0.0);
  params.centroid_norm_bound = reader.get_double("centroid_norm_bound", default_norm_bound);
  params.gap_target = reader.get_optional_double("gap_target");
  params.seed = seed;
  reader.finish();
  params.validate();
  return params;
}

std::string format_masked_recall(const TrajectoryRow& row) {
  return row.recall_recorded ? fmt_double(row.recall) : std::string();
}

void write_trajectory_csv(const fs::path& path, const std::vector<TrajectoryRow>& rows) {
  CsvWriter csv({"step", "layer", "head", "budget", "sparsity", "recall", "mask_updated"});
  for (const auto& row : rows)
    csv.add_row({fmt_int(row.step), fmt_int(row.layer), fmt_int(row.head),
                 fmt_double(row.budget), fmt_double(row.sparsity), format_masked_recall(row),
                 fmt_int(row.mask_updated ? 1 : 0)});
  csv.write(path);
}

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;
  double stderr_ = 0.0;
};

MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd s;
  const double n = static_cast<double>(xs.size());
  for (double x : xs) s.mean += x;
  s.mean /= n;
  if (xs.size() > 1) {
    double acc = 0.0;
    for (double x : xs) acc += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(acc / (n - 1.0));
    s.stderr_ = s.stddev / std::sqrt(n);
  }
  return s;
}

std::string mask_path(int step, int layer, int head) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "mask_step%03d_layer%02d_head%02d.dfsm", step, layer, head);
  return buf;
}

std::string scores_path(int step, int layer, int head) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "scores_step%03d_layer%02d_head%02d.csv", step, layer, head);
  return buf;
}

}  // namespace

int cmd_gen(const json& config, const fs::path& out_dir, int threads_override) {
  ConfigReader reader(config, "gen");
  const CommonConfig common = read_common(reader, threads_override);
  const std::string mode = reader.get_string("mode", "field");
  const int64_t head_dim = reader.get_int("head_dim", 16);

  if (mode == "field") {
    synthetic::FieldParams params;
    params.dims = reader.get_dims("dims", {8, 8, 8});
    params.head_dim = head_dim;
    params.smoothness = reader.get_double("smoothness", 0.0);
    params.seed = common.seed;
    reader.finish();
    const auto field = synthetic::gen_video_field(params);
    save_matrix(out_dir / "q.dfst", field.q);
    save_matrix(out_dir / "k.dfst", field.k);
    save_matrix(out_dir / "v.dfst", field.v);
    write_run_info(out_dir, "gen", config, common.seed, common.threads);
    std::printf("wrote q.dfst k.dfst v.dfst (%lld tokens, dim %lld) to %s\n",
                static_cast<long long>(params.dims.token_count()),
                static_cast<long long>(head_dim), out_dir.string().c_str());
    return 0;
  }
  if (mode == "block_model") {
    const auto params =
        read_block_model(reader.get_object("block_model"), "gen.block_model", head_dim,
                         common.seed);
    reader.finish();
    const auto sample = synthetic::gen_block_model(params);
    save_matrix(out_dir / "q.dfst", sample.q);
    save_matrix(out_dir / "k.dfst", sample.k);
    save_matrix(out_dir / "q_centroids.dfst", sample.centroids.q);
    save_matrix(out_dir / "k_centroids.dfst", sample.centroids.k);
    write_run_info(out_dir, "gen", config, common.seed, common.threads);
    std::printf("wrote q.dfst k.dfst and centroid sidecars (%lld tokens, dim %lld) to %s\n",
                static_cast<long long>(params.blocks * params.block_tokens),
                static_cast<long long>(head_dim), out_dir.string().c_str());
    return 0;
  }
  throw std::invalid_argument("gen: mode must be 'field' or 'block_model'");
}

int cmd_run(const json& config, const fs::path& out_dir, int threads_override) {
  ConfigReader reader(config, "run");
  const CommonConfig common = read_common(reader, threads_override);
  const SparsitySchedule schedule = read_schedule(reader);
  const ScoringParams params = read_scoring(reader, 128, 16);
  const Ordering ordering = parse_ordering(reader.get_string("ordering", "hilbert3d"));
  const GridDims dims = reader.get_dims("dims", {8, 8, 8});
  const int layers = static_cast<int>(reader.get_int("layers", 1));
  const int heads = static_cast<int>(reader.get_int("heads", 1));
  const auto dense_layer_list = reader.get_int_list("dense_layers", {});
  const bool record_recall = reader.get_bool("record_recall", true);
  const bool save_masks = reader.get_bool("save_masks", true);
  const bool dump_scores = reader.get_bool("dump_scores", false);
  const int64_t head_dim = reader.get_int("head_dim", 16);

  Workload workload;
  workload.steps = schedule.total_steps();
  workload.layers = layers;
  workload.heads = heads;

  std::vector<synthetic::DenoisingTrajectory> trajectories;
  StepTensors frozen;
  if (reader.has("input")) {
    ConfigReader input(reader.get_object("input"), "run.input");
    const auto require_path = [&](const char* key) {
      const std::string path = input.get_string(key, "");
      if (path.empty())
        throw std::invalid_argument(std::string("run.input.") + key + ": missing tensor path");
      return path;
    };
    frozen.q = load_matrix(require_path("q"));
    frozen.k = load_matrix(require_path("k"));
    frozen.v = load_matrix(require_path("v"));
    input.finish();
    if (frozen.q.rows() != dims.token_count())
      throw std::invalid_argument("run: input tensor rows do not match dims");
    workload.tensors = [&frozen](int, int, int) { return frozen; };
  } else {
    ConfigReader traj(reader.get_object("trajectory"), "run.trajectory");
    synthetic::TrajectoryParams tparams;
    tparams.field.dims = dims;
    tparams.field.head_dim = head_dim;
    tparams.field.smoothness = traj.get_double("smoothness", 4.0);
    tparams.steps = schedule.total_steps();
    tparams.noise_start = traj.get_double("noise_start", 2.0);
    tparams.noise_end = traj.get_double("noise_end", 0.0);
    traj.finish();
    trajectories.reserve(static_cast<size_t>(layers * heads));
    for (int pair = 0; pair < layers * heads; ++pair) {
      synthetic::TrajectoryParams per = tparams;
      per.field.seed = derive_seed(common.seed, {static_cast<uint64_t>(pair)});
      trajectories.emplace_back(per);
    }
    workload.tensors = [&trajectories, heads](int step, int layer, int head) {
      const auto sample =
          trajectories[static_cast<size_t>(layer * heads + head)].at(step);
      return StepTensors{sample.q, sample.k, sample.v};
    };
  }
  reader.finish();

  const Permutation perm = order_tokens(ordering, dims);
  TrajectoryOptions options;
  options.record_recall = record_recall;
  options.threads = common.threads;
  for (int64_t layer : dense_layer_list) options.dense_layers.insert(static_cast<int>(layer));

  // masks/ and scores/ belong to this run; stale files from an earlier
  // config would misrepresent it
  std::filesystem::remove_all(out_dir / "masks");
  std::filesystem::remove_all(out_dir / "scores");

  std::mutex sink_mu;
  if (save_masks) {
    options.mask_sink = [&](int step, int layer, int head, const BlockMask& mask) {
      std::lock_guard<std::mutex> lock(sink_mu);
      save_block_mask(out_dir / "masks" / mask_path(step, layer, head), mask);
    };
  }

  auto rows = run_trajectory(workload, perm, params, schedule, options);
  write_trajectory_csv(out_dir / "report.csv", rows);
  save_permutation(out_dir / "permutation.txt", perm);

  if (dump_scores) {
    // recompute scores at the update steps for the analysis dump
    for (const auto& row : rows) {
      if (!row.mask_updated) continue;
      const StepTensors tensors = workload.tensors(row.step, row.layer, row.head);
      const MatrixD scores = block_scores(apply_permutation(perm, tensors.q),
                                          apply_permutation(perm, tensors.k), params);
      save_scores_csv(out_dir / "scores" / scores_path(row.step, row.layer, row.head), scores);
    }
  }

  write_run_info(out_dir, "run", config, common.seed, common.threads);
  std::printf("wrote report.csv (%zu rows) to %s\n", rows.size(), out_dir.string().c_str());
  return 0;
}

int cmd_ablate_ordering(const json& config, const fs::path& out_dir, int threads_override) {
  ConfigReader reader(config, "ablate-ordering");
  const CommonConfig common = read_common(reader, threads_override);
  const GridDims dims = reader.get_dims("dims", {8, 8, 8});
  const int64_t head_dim = reader.get_int("head_dim", 16);
  const ScoringParams params = read_scoring(reader, 64, 16);
  const double budget = reader.get_double("budget", 0.2);
  const int64_t seeds = reader.get_int("seeds", 20);
  const double smoothness = reader.get_double("smoothness", 4.0);
  reader.finish();
  if (seeds < 1) throw std::invalid_argument("ablate-ordering: seeds must be >= 1");
  if (dims.token_count() > kMaxDenseScoreRows)
    throw std::invalid_argument("ablate-ordering: token count exceeds the dense recall cap");

  constexpr Ordering kOrderings[] = {Ordering::kRaster, Ordering::kHilbert2d,
                                     Ordering::kBlock3d, Ordering::kHilbert3d};
  struct PerOrdering {
    std::vector<double> var_q, var_k, recall;
  };
  std::map<Ordering, PerOrdering> results;
  std::map<Ordering, Permutation> perms;
  for (Ordering o : kOrderings) {
    perms[o] = order_tokens(o, dims);
    results[o].var_q.resize(static_cast<size_t>(seeds));
    results[o].var_k.resize(static_cast<size_t>(seeds));
    results[o].recall.resize(static_cast<size_t>(seeds));
  }

  parallel_for(seeds, common.threads, [&](int64_t s) {
    synthetic::FieldParams field;
    field.dims = dims;
    field.head_dim = head_dim;
    field.smoothness = smoothness;
    field.seed = derive_seed(common.seed, {static_cast<uint64_t>(s)});
    const auto sample = synthetic::gen_video_field(field);
    for (Ordering o : kOrderings) {
      const Matrix rq = apply_permutation(perms.at(o), sample.q);
      const Matrix rk = apply_permutation(perms.at(o), sample.k);
      auto& slot = results.at(o);
      slot.var_q[static_cast<size_t>(s)] = intra_block_variance(rq, params.block_size);
      slot.var_k[static_cast<size_t>(s)] = intra_block_variance(rk, params.block_size);
      const BlockMask mask = build_mask(rq, rk, params, budget);
      slot.recall[static_cast<size_t>(s)] = attention_recall(attention_scores(rq, rk), mask);
    }
  });

  CsvWriter variance_csv({"ordering", "B", "var_q", "var_k"});
  CsvWriter recall_csv({"ordering", "budget", "mean_recall", "std_recall"});
  std::map<Ordering, double> mean_var_q, mean_recall;
  for (Ordering o : kOrderings) {
    const auto& slot = results.at(o);
    const MeanStd vq = mean_std(slot.var_q);
    const MeanStd vk = mean_std(slot.var_k);
    const MeanStd rc = mean_std(slot.recall);
    mean_var_q[o] = vq.mean;
    mean_recall[o] = rc.mean;
    variance_csv.add_row({ordering_name(o), fmt_int(params.block_size), fmt_double(vq.mean),
                          fmt_double(vk.mean)});
    recall_csv.add_row({ordering_name(o), fmt_double(budget), fmt_double(rc.mean),
                        fmt_double(rc.stddev)});
  }
  variance_csv.write(out_dir / "variance.csv");
  recall_csv.write(out_dir / "recall.csv");
  write_run_info(out_dir, "ablate-ordering", config, common.seed, common.threads);

  CheckList checks("ablate-ordering");
  if (smoothness >= 4.0) {
    checks.check(mean_var_q[Ordering::kHilbert3d] < mean_var_q[Ordering::kRaster],
                 "hilbert3d_variance_below_raster",
                 fmt_double(mean_var_q[Ordering::kHilbert3d]) + " vs " +
                     fmt_double(mean_var_q[Ordering::kRaster]));
    checks.check(mean_recall[Ordering::kHilbert3d] >= mean_recall[Ordering::kRaster],
                 "hilbert3d_recall_at_least_raster",
                 fmt_double(mean_recall[Ordering::kHilbert3d]) + " vs " +
                     fmt_double(mean_recall[Ordering::kRaster]));
  }
  return checks.finish();
}

int cmd_ablate_subblock(const json& config, const fs::path& out_dir, int threads_override) {
  ConfigReader reader(config, "ablate-subblock");
  const CommonConfig common = read_common(reader, threads_override);
  const int64_t tokens = reader.get_int("tokens", 1024);
  const int64_t head_dim = reader.get_int("head_dim", 16);
  const int64_t block_size = reader.get_int("block_size", 128);
  const auto sub_sizes = reader.get_int_list("sub_block_sizes", {1, 16, 32, 64, 128});
  const double budget = reader.get_double("budget", 0.25);
  const int64_t seeds = reader.get_int("seeds", 24);
  const int64_t group_tokens = reader.get_int("semantic_block_tokens", 16);
  const double sigma = reader.get_double("sigma", 0.5);
  const double centroid_scale = reader.get_double("centroid_scale", 4.0);
  reader.finish();

  if (seeds < 1) throw std::invalid_argument("ablate-subblock: seeds must be >= 1");
  if (tokens > kMaxDenseScoreRows)
    throw std::invalid_argument("ablate-subblock: token count exceeds the dense recall cap");
  for (size_t i = 0; i < sub_sizes.size(); ++i) {
    ScoringParams probe{block_size, sub_sizes[i]};
    probe.validate();
    if (i > 0 && sub_sizes[i] <= sub_sizes[i - 1])
      throw std::invalid_argument("ablate-subblock: sub_block_sizes must be ascending");
  }

  std::vector<std::vector<double>> recalls(sub_sizes.size(),
                                           std::vector<double>(static_cast<size_t>(seeds)));
  parallel_for(seeds, common.threads, [&](int64_t s) {
    synthetic::MixedSemanticParams gen;
    gen.tokens = tokens;
    gen.group_tokens = group_tokens;
    gen.head_dim = head_dim;
    gen.centroid_scale = centroid_scale;
    gen.sigma = sigma;
    gen.seed = derive_seed(common.seed, {static_cast<uint64_t>(s)});
    const auto sample = synthetic::gen_mixed_semantic(gen);
    const Matrix dense = attention_scores(sample.q, sample.k);
    for (size_t i = 0; i < sub_sizes.size(); ++i) {
      const BlockMask mask = build_mask(sample.q, sample.k, {block_size, sub_sizes[i]}, budget);
      recalls[i][static_cast<size_t>(s)] = attention_recall(dense, mask);
    }
  });

  CsvWriter csv({"sub_block_size", "label", "mean_recall", "std_recall"});
  std::vector<double> means;
  for (size_t i = 0; i < sub_sizes.size(); ++i) {
    const MeanStd stats = mean_std(recalls[i]);
    means.push_back(stats.mean);
    const std::string label =
        sub_sizes[i] == block_size ? "w/o sub-block" : fmt_int(sub_sizes[i]);
    csv.add_row({fmt_int(sub_sizes[i]), label, fmt_double(stats.mean),
                 fmt_double(stats.stddev)});
  }
  csv.write(out_dir / "subblock_recall.csv");
  write_run_info(out_dir, "ablate-subblock", config, common.seed, common.threads);

  CheckList checks("ablate-subblock");
  bool monotone = true;
  for (size_t i = 0; i + 1 < means.size(); ++i)
    if (means[i + 1] > means[i] + 1e-9) monotone = false;
  checks.check(monotone, "recall_non_increasing_in_subblock",
               "means " + [&] {
                 std::string s;
                 for (double m : means) s += fmt_double(m) + " ";
                 return s;
               }());
  bool first_max = true;
  for (size_t i = 1; i < means.size(); ++i)
    if (means[i] > means[0] + 1e-9) first_max = false;
  checks.check(first_max, "finest_subblock_is_maximal", fmt_double(means[0]));
  return checks.finish();
}

int cmd_validate_theory(const json& config, const fs::path& out_dir, int threads_override) {
  ConfigReader reader(config, "validate-theory");
  const CommonConfig common = read_common(reader, threads_override);
  const int64_t trials = reader.get_int("trials", 1000);
  const int64_t head_dim = reader.get_int("head_dim", 16);
  const auto base = read_block_model(reader.get_object("block_model"),
                                     "validate-theory.block_model", head_dim, common.seed,
                                     /*default_norm_bound=*/4.0);
  const auto gaps = reader.get_double_list("gaps", {0.25, 0.5, 1.0, 1.5, 2.5});
  const auto deltas = reader.get_double_list("deltas", {0.05, 0.1, 0.2, 0.4, 0.8});
  const auto gammas = reader.get_double_list("gammas", {0.1, 0.25, 0.5});
  const int64_t k_select = reader.get_int("k_select", 1);
  const double c_default = reader.get_double("c", 0.1);
  const bool calibrate = reader.get_bool("calibrate", true);
  const double c_cap = reader.get_double("c_cap", 50.0);
  const int64_t pairwise_trials = reader.get_int("pairwise_trials", 10000);
  const int64_t variance_draws = reader.get_int("variance_draws", 100000);
  const int64_t expectation_trials = reader.get_int("expectation_trials", 10000);
  const auto sigma_grid = reader.get_double_list("sigma_grid", {0.05, 0.1, 0.2, 0.4, 0.8});
  reader.finish();
  if (trials < 1) throw std::invalid_argument("validate-theory: trials must be >= 1");

  CheckList checks("validate-theory");
  CsvWriter csv({"experiment", "param_set", "estimate", "stderr", "bound", "pass"});
  const auto add_row = [&](const std::string& experiment, const std::string& param_set,
                           double estimate, double se, double bound, bool pass) {
    csv.add_row({experiment, param_set, fmt_double(estimate), fmt_double(se),
                 fmt_double(bound), pass ? "1" : "0"});
  };

  // pooled-centroid variance against sigma^2/B, tau = 0
  for (double sigma : sigma_grid) {
    synthetic::BlockModelParams params = base;
    params.gap_target.reset();
    params.tau = 0.0;
    params.sigma = sigma;
    params.seed = derive_seed(common.seed, {1, static_cast<uint64_t>(sigma * 1e9)});
    const synthetic::BlockModel model(params);
    const int64_t per_trial = params.blocks * params.head_dim;
    const int64_t var_trials = (variance_draws + per_trial - 1) / per_trial;
    double acc = 0.0;
    int64_t count = 0;
    for (int64_t t = 0; t < var_trials; ++t) {
      const auto sample = model.draw(static_cast<uint64_t>(t));
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
    const double estimate = acc / static_cast<double>(count);
    const double target = sigma * sigma / static_cast<double>(params.block_tokens);
    const double se = estimate * std::sqrt(2.0 / static_cast<double>(count));
    const bool pass = std::abs(estimate / target - 1.0) <= 0.1;
    add_row("pooled_variance", "sigma=" + fmt_double(sigma), estimate, se, target, pass);
    checks.check(pass, "pooled_variance sigma=" + fmt_double(sigma),
                 fmt_double(estimate) + " vs " + fmt_double(target));
  }

  // score expectation: max |z| over block pairs stays within 4
  for (double sigma : sigma_grid) {
    synthetic::BlockModelParams params = base;
    params.gap_target.reset();
    params.tau = sigma / 2.0;
    params.sigma = sigma;
    params.seed = derive_seed(common.seed, {2, static_cast<uint64_t>(sigma * 1e9)});
    double worst_z = 0.0;
    for (const auto& row : theory::score_expectation_check(params, expectation_trials))
      worst_z = std::max(worst_z, std::abs(row.z));
    const bool pass = worst_z <= 4.0;
    add_row("score_expectation", "sigma=" + fmt_double(sigma), worst_z, 0.0, 4.0, pass);
    checks.check(pass, "score_expectation sigma=" + fmt_double(sigma),
                 "max |z| = " + fmt_double(worst_z));
  }

  // pairwise misorder frequencies and the calibrated constant
  synthetic::BlockModelParams pairwise_base = base;
  pairwise_base.seed = derive_seed(common.seed, {3});
  const auto calibration =
      theory::calibrate_pairwise_c(pairwise_base, gaps, deltas, pairwise_trials, c_cap);
  const double c_used = calibrate ? calibration.c : c_default;
  std::printf("calibrated c = %s (using c = %s)\n", fmt_double(calibration.c).c_str(),
              fmt_double(c_used).c_str());
  for (const auto& row : calibration.rows) {
    const double bound = row.gaussian_term + std::exp(-c_used * row.min_term);
    const bool pass = row.empirical <= bound;
    add_row("pairwise_bound",
            "gap=" + fmt_double(row.gap) + ",delta2=" + fmt_double(row.noise_var),
            row.empirical, row.empirical_stderr, bound, pass);
    checks.check(pass,
                 "pairwise_bound gap=" + fmt_double(row.gap) + " d2=" +
                     fmt_double(row.noise_var),
                 fmt_double(row.empirical) + " <= " + fmt_double(bound));
  }

  // selection match probability across the (gap, delta) grid
  const size_t n_gaps = gaps.size();
  const size_t n_deltas = deltas.size();
  std::vector<theory::MatchProbability> grid(n_gaps * n_deltas);
  std::vector<theory::BoundValue> bounds(n_gaps * n_deltas);
  parallel_for(static_cast<int64_t>(grid.size()), common.threads, [&](int64_t idx) {
    const double gap = gaps[static_cast<size_t>(idx) / n_deltas];
    const double delta = deltas[static_cast<size_t>(idx) % n_deltas];
    synthetic::BlockModelParams params = base;
    params.gap_target = gap;
    params.tau = delta / std::sqrt(2.0);
    params.sigma = delta / std::sqrt(2.0) * std::sqrt(static_cast<double>(params.block_tokens));
    params.seed = derive_seed(common.seed, {4, static_cast<uint64_t>(idx)});
    grid[static_cast<size_t>(idx)] = theory::selection_match_prob(params, k_select, trials);

    theory::BoundInputs inputs;
    inputs.gap = gap;
    inputs.centroid_norm_bound = params.centroid_norm_bound;
    inputs.tau = params.tau;
    inputs.sigma = params.sigma;
    inputs.block_tokens = params.block_tokens;
    inputs.head_dim = params.head_dim;
    inputs.selected = k_select;
    inputs.blocks = params.blocks;
    inputs.c = c_used;
    bounds[static_cast<size_t>(idx)] = theory::theorem_bound(inputs);
  });

  for (size_t gi = 0; gi < n_gaps; ++gi)
    for (size_t di = 0; di < n_deltas; ++di) {
      const auto& point = grid[gi * n_deltas + di];
      const auto& bound = bounds[gi * n_deltas + di];
      const bool pass = bound.vacuous || point.per_block >= bound.value;
      add_row("match_probability",
              "gap=" + fmt_double(gaps[gi]) + ",delta=" + fmt_double(deltas[di]),
              point.per_block, point.per_block_stderr, bound.value, pass);
      checks.check(pass,
                   "match_vs_bound gap=" + fmt_double(gaps[gi]) + " delta=" +
                       fmt_double(deltas[di]),
                   fmt_double(point.per_block) + " vs bound " + fmt_double(bound.value) +
                       (bound.vacuous ? " (vacuous)" : ""));
    }

  // monotonicity along both grid axes, within two combined stderr
  for (size_t di = 0; di < n_deltas; ++di) {
    double min_slack = 1.0;
    for (size_t gi = 0; gi + 1 < n_gaps; ++gi) {
      const auto& lo = grid[gi * n_deltas + di];
      const auto& hi = grid[(gi + 1) * n_deltas + di];
      const double se = std::sqrt(lo.per_block_stderr * lo.per_block_stderr +
                                  hi.per_block_stderr * hi.per_block_stderr);
      min_slack = std::min(min_slack, hi.per_block - lo.per_block + 2.0 * se);
    }
    const bool pass = min_slack >= 0.0;
    add_row("match_monotone_gap", "delta=" + fmt_double(deltas[di]), min_slack, 0.0, 0.0, pass);
    checks.check(pass, "match_monotone_gap delta=" + fmt_double(deltas[di]),
                 "min slack " + fmt_double(min_slack));
  }
  for (size_t gi = 0; gi < n_gaps; ++gi) {
    double min_slack = 1.0;
    for (size_t di = 0; di + 1 < n_deltas; ++di) {
      const auto& lo = grid[gi * n_deltas + di];       // smaller delta
      const auto& hi = grid[gi * n_deltas + di + 1];   // larger delta
      const double se = std::sqrt(lo.per_block_stderr * lo.per_block_stderr +
                                  hi.per_block_stderr * hi.per_block_stderr);
      min_slack = std::min(min_slack, lo.per_block - hi.per_block + 2.0 * se);
    }
    const bool pass = min_slack >= 0.0;
    add_row("match_monotone_delta", "gap=" + fmt_double(gaps[gi]), min_slack, 0.0, 0.0, pass);
    checks.check(pass, "match_monotone_delta gap=" + fmt_double(gaps[gi]),
                 "min slack " + fmt_double(min_slack));
  }

  // expected recall against gamma * match probability
  for (double gamma : gammas) {
    synthetic::BlockModelParams params = base;
    params.gap_target = gaps.empty() ? 1.0 : gaps[gaps.size() / 2];
    params.tau = 0.1;
    params.sigma = 0.1 * std::sqrt(static_cast<double>(params.block_tokens));
    params.seed = derive_seed(common.seed, {5, static_cast<uint64_t>(gamma * 1e9)});
    const auto result = theory::recall_corollary_check(params, gamma, trials);
    const bool pass = result.margin >= -3.0 * result.margin_stderr;
    add_row("recall_corollary", "gamma=" + fmt_double(gamma), result.margin,
            result.margin_stderr, 0.0, pass);
    checks.check(pass, "recall_corollary gamma=" + fmt_double(gamma),
                 "E[R]=" + fmt_double(result.mean_recall) + " margin=" +
                     fmt_double(result.margin));
  }

  csv.write(out_dir / "validation.csv");
  write_run_info(out_dir, "validate-theory", config, common.seed, common.threads);
  return checks.finish();
}

int cmd_recall_curve(const json& config, const fs::path& out_dir, int threads_override) {
  ConfigReader reader(config, "recall-curve");
  const CommonConfig common = read_common(reader, threads_override);
  const GridDims dims = reader.get_dims("dims", {8, 8, 8});
  const int64_t head_dim = reader.get_int("head_dim", 16);
  const ScoringParams params = read_scoring(reader, 64, 16);
  const Ordering ordering = parse_ordering(reader.get_string("ordering", "hilbert3d"));
  const double budget = reader.get_double("budget", 0.2);
  const int steps = static_cast<int>(reader.get_int("steps", 20));
  const int64_t seeds = reader.get_int("seeds", 10);
  const double smoothness = reader.get_double("smoothness", 4.0);
  const double noise_start = reader.get_double("noise_start", 2.0);
  const double noise_end = reader.get_double("noise_end", 0.0);
  reader.finish();
  if (seeds < 1) throw std::invalid_argument("recall-curve: seeds must be >= 1");
  if (dims.token_count() > kMaxDenseScoreRows)
    throw std::invalid_argument("recall-curve: token count exceeds the dense recall cap");

  SparsitySchedule::Config sched;
  sched.total_steps = steps;
  sched.warmup_fraction = 0.0;
  sched.phase_budgets = {budget};
  sched.phase_fraction = 1.0;
  sched.update_interval = 1;  // fresh mask at every step isolates the trend
  const SparsitySchedule schedule(sched);
  const Permutation perm = order_tokens(ordering, dims);

  std::vector<std::vector<RecallSample>> per_seed(static_cast<size_t>(seeds));
  parallel_for(seeds, common.threads, [&](int64_t s) {
    synthetic::TrajectoryParams tparams;
    tparams.field.dims = dims;
    tparams.field.head_dim = head_dim;
    tparams.field.smoothness = smoothness;
    tparams.field.seed = derive_seed(common.seed, {static_cast<uint64_t>(s)});
    tparams.steps = steps;
    tparams.noise_start = noise_start;
    tparams.noise_end = noise_end;
    const synthetic::DenoisingTrajectory trajectory(tparams);

    Workload workload;
    workload.steps = steps;
    workload.tensors = [&trajectory](int step, int, int) {
      auto sample = trajectory.at(step);
      return StepTensors{std::move(sample.q), std::move(sample.k), std::move(sample.v)};
    };
    for (const auto& row : run_trajectory(workload, perm, params, schedule, {}))
      per_seed[static_cast<size_t>(s)].push_back({row.step, row.recall});
  });

  std::vector<RecallSample> samples;
  for (const auto& seed_samples : per_seed)
    samples.insert(samples.end(), seed_samples.begin(), seed_samples.end());
  const auto curve = recall_curve(samples);

  CsvWriter csv({"step", "mean_recall", "std_recall", "samples"});
  for (const auto& point : curve)
    csv.add_row({fmt_int(point.step), fmt_double(point.mean), fmt_double(point.stddev),
                 fmt_int(point.samples)});
  csv.write(out_dir / "recall_curve.csv");
  write_run_info(out_dir, "recall-curve", config, common.seed, common.threads);

  CheckList checks("recall-curve");
  if (noise_start > noise_end && budget < 1.0 && steps > 1) {
    checks.check(curve.back().mean > curve.front().mean, "recall_rises_over_steps",
                 fmt_double(curve.front().mean) + " -> " + fmt_double(curve.back().mean));
  }
  return checks.finish();
}

int run_command(const std::string& command, const json& config, const fs::path& out_dir,
                int threads_override) {
  if (command == "gen") return cmd_gen(config, out_dir, threads_override);
  if (command == "run") return cmd_run(config, out_dir, threads_override);
  if (command == "ablate-ordering")
    return cmd_ablate_ordering(config, out_dir, threads_override);
  if (command == "ablate-subblock")
    return cmd_ablate_subblock(config, out_dir, threads_override);
  if (command == "validate-theory")
    return cmd_validate_theory(config, out_dir, threads_override);
  if (command == "recall-curve") return cmd_recall_curve(config, out_dir, threads_override);
  throw std::invalid_argument("unknown command: " + command);
}

}  // namespace dfs::cli
