#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

namespace dfs::cli {

// Executes one CLI command against a parsed config. Returns 0 when every
// check asserted by the command passes; 1 when a check fails (a one-line
// JSON failure summary goes to stdout). Configuration and I/O problems
// throw.
//
// threads_override > 0 replaces the config's "threads"; the environment
// variable DFS_SEED_OVERRIDE (decimal u64) replaces the config's "seed".
int run_command(const std::string& command, const nlohmann::json& config,
                const std::filesystem::path& out_dir, int threads_override = 0);

int cmd_gen(const nlohmann::json& config, const std::filesystem::path& out_dir,
            int threads_override = 0);
int cmd_run(const nlohmann::json& config, const std::filesystem::path& out_dir,
            int threads_override = 0);
int cmd_ablate_ordering(const nlohmann::json& config, const std::filesystem::path& out_dir,
                        int threads_override = 0);
int cmd_ablate_subblock(const nlohmann::json& config, const std::filesystem::path& out_dir,
                        int threads_override = 0);
int cmd_validate_theory(const nlohmann::json& config, const std::filesystem::path& out_dir,
                        int threads_override = 0);
int cmd_recall_curve(const nlohmann::json& config, const std::filesystem::path& out_dir,
                     int threads_override = 0);

}  // namespace dfs::cli
