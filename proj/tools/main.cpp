// Command-line driver for the block-sparse attention toolkit.
//
//   dfsattn <command> --config <path.json> [--out <dir>] [--threads N]
//
// Commands: gen, run, ablate-ordering, ablate-subblock, validate-theory,
// recall-curve. Exit codes: 0 all checks passed, 1 a check failed (JSON
// summary on stdout), 2 configuration or I/O error.

#include <cstdio>
#include <exception>
#include <fstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "dfs/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"dynamic fine-grained block-sparse attention toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  int threads = 0;

  const char* command_names[] = {"gen",             "run",
                                 "ablate-ordering", "ablate-subblock",
                                 "validate-theory", "recall-curve"};
  for (const char* name : command_names) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "JSON config file")->required();
    sub->add_option("--out", out_dir, "output directory (default: out)");
    sub->add_option("--threads", threads, "worker threads (0 = config/auto)");
  }

  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    std::ifstream in(config_path);
    if (!in) throw std::runtime_error("cannot open config " + config_path);
    const nlohmann::json config = nlohmann::json::parse(in);
    return dfs::cli::run_command(command, config, out_dir, threads);
  } catch (const std::exception& e) {
    nlohmann::json error;
    error["command"] = command;
    error["error"] = e.what();
    std::fprintf(stderr, "%s\n", error.dump().c_str());
    return 2;
  }
}
