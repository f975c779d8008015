#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "exolam/oracles.hpp"

namespace exolam {

// Exit codes: 0 success, 1 usage/config error, 2 run failure,
// 3 verification failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRunFailure = 2;
inline constexpr int kExitVerifyFailure = 3;

int cmd_gen(const std::string& config_path, const std::string& out_path,
            const std::string& csv_path, std::uint64_t master);
int cmd_train(const std::string& config_path, const std::string& out_dir,
              const std::string& resume_path, std::uint64_t master);
int cmd_sweep(const std::string& spec_path, const std::string& out_dir,
              std::size_t jobs, std::uint64_t master);
int cmd_verify(const std::string& config_path, const std::string& out_path,
               std::uint64_t master);
int cmd_report(const std::string& store_dir, const std::string& figure_id,
               const std::string& out_dir);

// Shared by cmd_verify and the acceptance suite.
struct VerifyBundle {
  std::vector<PropReport> reports;
  bool all_ok = true;
  std::string to_json() const;
};
VerifyBundle run_verify_config(const std::string& config_json,
                               std::uint64_t master);

std::uint64_t master_seed_from_env(std::uint64_t cli_value, bool cli_given);

int cli_main(int argc, char** argv);

}  // namespace exolam
