#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "dfs/commands.hpp"
#include "dfs/io.hpp"
#include "dfs/mask_builder.hpp"

using namespace dfs;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const char* name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

json small_run_config() {
  return json{{"seed", 3},
              {"total_steps", 6},
              {"warmup_fraction", 0.2},
              {"phase_budgets", {0.5, 0.25}},
              {"phase_fraction", 0.4},
              {"update_interval", 2},
              {"ordering", "hilbert3d"},
              {"block_size", 16},
              {"sub_block_size", 4},
              {"dims", {4, 4, 4}},
              {"head_dim", 8},
              {"layers", 2},
              {"heads", 1},
              {"trajectory", {{"smoothness", 2}, {"noise_start", 1.0}, {"noise_end", 0.0}}}};
}

}  // namespace

TEST_CASE("gen block model writes constant blocks when noiseless") {
  TempDir dir("dfs_cli_gen");
  json config{{"seed", 5},
              {"mode", "block_model"},
              {"head_dim", 4},
              {"block_model",
               {{"blocks", 2}, {"block_tokens", 3}, {"tau", 0.0}, {"sigma", 0.0}}}};
  CHECK(cli::cmd_gen(config, dir.path) == 0);
  const Matrix q = load_matrix(dir.path / "q.dfst");
  const Matrix centroids = load_matrix(dir.path / "q_centroids.dfst");
  REQUIRE(q.rows() == 6);
  REQUIRE(centroids.rows() == 2);
  for (int64_t blk = 0; blk < 2; ++blk)
    for (int64_t i = 0; i < 3; ++i)
      for (int64_t c = 0; c < 4; ++c) CHECK(q.at(blk * 3 + i, c) == centroids.at(blk, c));
}

TEST_CASE("gen is byte-identical across reruns") {
  TempDir a("dfs_cli_gen_a");
  TempDir b("dfs_cli_gen_b");
  json config{{"seed", 11}, {"mode", "field"},   {"dims", {2, 4, 4}},
              {"head_dim", 4}, {"smoothness", 3.0}};
  CHECK(cli::cmd_gen(config, a.path) == 0);
  CHECK(cli::cmd_gen(config, b.path) == 0);
  for (const char* name : {"q.dfst", "k.dfst", "v.dfst"})
    CHECK(slurp(a.path / name) == slurp(b.path / name));
}

TEST_CASE("smoothing lowers total variation along the raster order") {
  TempDir rough("dfs_cli_gen_rough");
  TempDir smooth("dfs_cli_gen_smooth");
  json config{{"seed", 13}, {"mode", "field"}, {"dims", {4, 4, 4}}, {"head_dim", 8},
              {"smoothness", 0.0}};
  CHECK(cli::cmd_gen(config, rough.path) == 0);
  config["smoothness"] = 4.0;
  CHECK(cli::cmd_gen(config, smooth.path) == 0);

  const auto total_variation = [](const Matrix& m) {
    double acc = 0.0;
    for (int64_t i = 0; i + 1 < m.rows(); ++i)
      for (int64_t c = 0; c < m.cols(); ++c) {
        const double d = static_cast<double>(m.at(i + 1, c)) - m.at(i, c);
        acc += d * d;
      }
    return acc;
  };
  CHECK(total_variation(load_matrix(smooth.path / "q.dfst")) <
        total_variation(load_matrix(rough.path / "q.dfst")));
}

TEST_CASE("unknown config keys are rejected") {
  TempDir dir("dfs_cli_unknown");
  json config{{"seed", 1}, {"mode", "field"}, {"dims", {2, 2, 2}}, {"typo_key", 1}};
  CHECK_THROWS_AS(cli::cmd_gen(config, dir.path), std::invalid_argument);

  json run = small_run_config();
  run["no_such_option"] = true;
  CHECK_THROWS_AS(cli::cmd_run(run, dir.path), std::invalid_argument);

  json nested = small_run_config();
  nested["trajectory"]["bogus"] = 1;
  CHECK_THROWS_AS(cli::cmd_run(nested, dir.path), std::invalid_argument);
}

TEST_CASE("run emits the report and masks deterministically") {
  TempDir a("dfs_cli_run_a");
  TempDir b("dfs_cli_run_b");
  const json config = small_run_config();
  CHECK(cli::cmd_run(config, a.path, /*threads_override=*/1) == 0);
  CHECK(cli::cmd_run(config, b.path, /*threads_override=*/3) == 0);

  const std::string report = slurp(a.path / "report.csv");
  CHECK(report == slurp(b.path / "report.csv"));
  CHECK(report.substr(0, report.find('\n')) ==
        "step,layer,head,budget,sparsity,recall,mask_updated");

  // masks written at sparse update steps for both layers; byte-identical
  // across thread counts
  int mask_files = 0;
  for (const auto& entry : fs::directory_iterator(a.path / "masks")) {
    ++mask_files;
    const auto rel = entry.path().filename();
    CHECK(slurp(entry.path()) == slurp(b.path / "masks" / rel));
    CHECK_NOTHROW(load_block_mask(entry.path()));
  }
  // warmup covers step 0; updates at sparse steps 1, 3, 5 -> 3 steps x 2 layers
  CHECK(mask_files == 6);
}

TEST_CASE("run with frozen input tensors gives flat recall") {
  TempDir gen_dir("dfs_cli_frozen_gen");
  json gen{{"seed", 17}, {"mode", "field"}, {"dims", {2, 4, 2}}, {"head_dim", 4},
           {"smoothness", 2.0}};
  REQUIRE(cli::cmd_gen(gen, gen_dir.path) == 0);

  TempDir run_dir("dfs_cli_frozen_run");
  json config{{"seed", 17},
              {"total_steps", 4},
              {"warmup_fraction", 0.0},
              {"phase_budgets", {0.5}},
              {"phase_fraction", 1.0},
              {"update_interval", 1},
              {"ordering", "raster"},
              {"block_size", 8},
              {"sub_block_size", 2},
              {"dims", {2, 4, 2}},
              {"head_dim", 4},
              {"input",
               {{"q", (gen_dir.path / "q.dfst").string()},
                {"k", (gen_dir.path / "k.dfst").string()},
                {"v", (gen_dir.path / "v.dfst").string()}}}};
  REQUIRE(cli::cmd_run(config, run_dir.path) == 0);

  const std::string report = slurp(run_dir.path / "report.csv");
  std::vector<std::string> recalls;
  size_t pos = report.find('\n') + 1;
  while (pos < report.size()) {
    const size_t eol = report.find('\n', pos);
    const std::string line = report.substr(pos, eol - pos);
    recalls.push_back(line.substr(0, line.rfind(',')));
    recalls.back() = recalls.back().substr(recalls.back().rfind(',') + 1);
    pos = eol + 1;
  }
  REQUIRE(recalls.size() == 4);
  for (const auto& r : recalls) CHECK(r == recalls[0]);  // frozen tokens, frozen recall
}

TEST_CASE("dump_scores writes the u,v,score CSV per update") {
  TempDir dir("dfs_cli_scores");
  json config = small_run_config();
  config["dump_scores"] = true;
  config["save_masks"] = false;
  REQUIRE(cli::cmd_run(config, dir.path) == 0);
  CHECK_FALSE(fs::exists(dir.path / "masks"));
  int score_files = 0;
  for (const auto& entry : fs::directory_iterator(dir.path / "scores")) {
    const std::string body = slurp(entry.path());
    CHECK(body.substr(0, body.find('\n')) == "u,v,score");
    ++score_files;
  }
  CHECK(score_files == 6);
}

TEST_CASE("seed override from the environment wins") {
  TempDir a("dfs_cli_env_a");
  TempDir b("dfs_cli_env_b");
  TempDir c("dfs_cli_env_c");
  json config{{"seed", 11}, {"mode", "field"}, {"dims", {2, 2, 2}}, {"head_dim", 4},
              {"smoothness", 0.0}};
  REQUIRE(cli::cmd_gen(config, a.path) == 0);

  setenv("DFS_SEED_OVERRIDE", "999", 1);
  REQUIRE(cli::cmd_gen(config, b.path) == 0);
  unsetenv("DFS_SEED_OVERRIDE");
  CHECK(slurp(a.path / "q.dfst") != slurp(b.path / "q.dfst"));

  json config999 = config;
  config999["seed"] = 999;
  REQUIRE(cli::cmd_gen(config999, c.path) == 0);
  CHECK(slurp(b.path / "q.dfst") == slurp(c.path / "q.dfst"));

  setenv("DFS_SEED_OVERRIDE", "not_a_number", 1);
  TempDir d("dfs_cli_env_d");
  CHECK_THROWS_AS(cli::cmd_gen(config, d.path), std::invalid_argument);
  unsetenv("DFS_SEED_OVERRIDE");
}

TEST_CASE("run_command dispatches and rejects unknown commands") {
  TempDir dir("dfs_cli_dispatch");
  json config{{"seed", 1}, {"mode", "field"}, {"dims", {2, 2, 2}}, {"head_dim", 2},
              {"smoothness", 0.0}};
  CHECK(cli::run_command("gen", config, dir.path) == 0);
  CHECK_THROWS_AS(cli::run_command("frobnicate", config, dir.path), std::invalid_argument);
}

TEST_CASE("default 50-step run follows the update rule and 80% sparsity") {
  TempDir dir("dfs_cli_defaults");
  // M = 10 blocks so every phase budget gives an integral K
  json config{{"seed", 29},
              {"ordering", "hilbert3d"},
              {"block_size", 8},
              {"sub_block_size", 4},
              {"dims", {4, 4, 5}},
              {"head_dim", 8},
              {"trajectory", {{"smoothness", 2}, {"noise_start", 1.0}, {"noise_end", 0.0}}}};
  REQUIRE(cli::cmd_run(config, dir.path) == 0);

  const std::string report = slurp(dir.path / "report.csv");
  int rows = 0;
  double budget_sparsity_sum = 0.0;  // 1 - K/M at each step's budget
  double applied_sparsity_sum = 0.0;
  int sparse_rows = 0;
  size_t pos = report.find('\n') + 1;
  while (pos < report.size()) {
    const size_t eol = report.find('\n', pos);
    const std::string line = report.substr(pos, eol - pos);
    pos = eol + 1;
    ++rows;
    // step,layer,head,budget,sparsity,recall,mask_updated
    std::vector<std::string> fields;
    size_t start = 0;
    while (start <= line.size()) {
      const size_t comma = line.find(',', start);
      fields.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    REQUIRE(fields.size() == 7);
    const int step = std::stoi(fields[0]);
    const bool updated = fields[6] == "1";
    CHECK(updated == (step == 12 || step == 24 || step == 36 || step == 48));
    const double sparsity = std::stod(fields[4]);
    if (step >= 12) {
      const double budget = std::stod(fields[3]);
      budget_sparsity_sum += 1.0 - static_cast<double>(topk_count(budget, 10)) / 10.0;
      applied_sparsity_sum += sparsity;
      ++sparse_rows;
    } else {
      CHECK(sparsity == 0.0);
      CHECK(fields[5] == "1");  // dense recall
    }
  }
  CHECK(rows == 50);
  REQUIRE(sparse_rows == 38);
  // the 80% level is a property of the budget schedule; the applied-mask
  // column lags a phase change until the next cache update
  CHECK(std::abs(budget_sparsity_sum / sparse_rows - 0.8) < 0.005);
  CHECK(applied_sparsity_sum / sparse_rows > 0.7);
  CHECK(applied_sparsity_sum / sparse_rows < 0.8);
}

TEST_CASE("all-dense run reports recall one everywhere") {
  TempDir dir("dfs_cli_alldense");
  json config{{"seed", 31},
              {"total_steps", 4},
              {"warmup_fraction", 1.0},
              {"phase_budgets", json::array()},
              {"phase_fraction", 0.0},
              {"ordering", "raster"},
              {"block_size", 8},
              {"sub_block_size", 4},
              {"dims", {2, 2, 4}},
              {"head_dim", 4},
              {"trajectory", {{"smoothness", 1}, {"noise_start", 0.5}, {"noise_end", 0.0}}}};
  REQUIRE(cli::cmd_run(config, dir.path) == 0);
  const std::string report = slurp(dir.path / "report.csv");
  size_t pos = report.find('\n') + 1;
  int rows = 0;
  while (pos < report.size()) {
    const size_t eol = report.find('\n', pos);
    const std::string line = report.substr(pos, eol - pos);
    pos = eol + 1;
    ++rows;
    const size_t last_comma = line.rfind(',');
    const size_t prev_comma = line.rfind(',', last_comma - 1);
    CHECK(line.substr(prev_comma + 1, last_comma - prev_comma - 1) == "1");  // recall
  }
  CHECK(rows == 4);
  CHECK_FALSE(fs::exists(dir.path / "masks"));  // nothing sparse ever ran
}

TEST_CASE("ablate-ordering smoke run emits both CSVs and passes") {
  TempDir dir("dfs_cli_ablord");
  json config{{"seed", 37}, {"dims", {8, 8, 8}},   {"head_dim", 8},
              {"block_size", 64}, {"sub_block_size", 16}, {"budget", 0.25},
              {"seeds", 4},   {"smoothness", 4.0}};
  CHECK(cli::cmd_ablate_ordering(config, dir.path, 2) == 0);
  CHECK(slurp(dir.path / "variance.csv").starts_with("ordering,B,var_q,var_k\n"));
  CHECK(slurp(dir.path / "recall.csv").starts_with("ordering,budget,mean_recall,std_recall\n"));
}

TEST_CASE("validate-theory smoke run passes at reduced trial counts") {
  TempDir dir("dfs_cli_theory");
  json config{{"seed", 41},
              {"trials", 120},
              {"gaps", {0.5, 1.5, 2.5}},
              {"deltas", {0.05, 0.2, 0.6}},
              {"gammas", {0.25}},
              {"pairwise_trials", 1500},
              {"variance_draws", 8000},
              {"expectation_trials", 600},
              {"sigma_grid", {0.1, 0.4}}};
  CHECK(cli::cmd_validate_theory(config, dir.path, 2) == 0);
  const std::string body = slurp(dir.path / "validation.csv");
  CHECK(body.starts_with("experiment,param_set,estimate,stderr,bound,pass\n"));
  CHECK(body.find("pooled_variance") != std::string::npos);
  CHECK(body.find("match_probability") != std::string::npos);
  CHECK(body.find("recall_corollary") != std::string::npos);
  CHECK(body.find(",0\n") == std::string::npos);  // no failing rows
}

TEST_CASE("recall-curve smoke run rises and writes the curve") {
  TempDir dir("dfs_cli_rcurve");
  json config{{"seed", 43},   {"dims", {8, 8, 8}},  {"head_dim", 16},
              {"block_size", 64}, {"sub_block_size", 16}, {"ordering", "hilbert3d"},
              {"budget", 0.2},    {"steps", 6},           {"seeds", 3},
              {"smoothness", 6.0}, {"noise_start", 3.0},  {"noise_end", 0.0}};
  CHECK(cli::cmd_recall_curve(config, dir.path, 2) == 0);
  CHECK(slurp(dir.path / "recall_curve.csv")
            .starts_with("step,mean_recall,std_recall,samples\n"));
}

TEST_CASE("no temp files linger after command output") {
  TempDir dir("dfs_cli_tmpcheck");
  REQUIRE(cli::cmd_run(small_run_config(), dir.path) == 0);
  for (const auto& entry : fs::recursive_directory_iterator(dir.path))
    CHECK(entry.path().extension() != ".tmp");
}
