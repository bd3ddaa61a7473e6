#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

#include "mspde/config.hpp"

namespace mspde {

struct CliRequest {
  std::string command;  // solve | verify | converge | potential-table | run
  std::string config_path;
  std::optional<std::string> output;
  std::optional<std::uint64_t> seed_override;
};

/// Exit codes: 0 success, 2 validation error, 3 numerical failure. Failures
/// write {kind, message[, suggested_tau]} to stderr and <output>/error.json.
int execute(const CliRequest& request);

int cli_main(int argc, char** argv);

/// Resolved manifest: the emitted config plus a "run" block.
nlohmann::json make_manifest(const RunConfig& cfg, const std::string& command, const std::string& seed_source);

int run_solve(const RunConfig& cfg, const std::string& dir);
int run_verify(const RunConfig& cfg, const std::string& dir);
int run_converge(const RunConfig& cfg, const std::string& dir);
int run_potential_table(const RunConfig& cfg, const std::string& dir);

}  // namespace mspde
