#pragma once

#include <filesystem>
#include <string>

#include "morphofilter/run_io.hpp"

namespace morphofilter {

// Subcommand bodies, exposed so tests can drive them in-process.
void cmd_optimize(const RunConfig& config);
void cmd_reference_entropy(const RunConfig& config);
void cmd_sweep(const RunConfig& config);
void cmd_analyze(const std::filesystem::path& run_dir);
void cmd_render(const std::filesystem::path& run_dir, const std::string& target);

/// Exit codes: 0 ok, 2 config error, 3 runtime error, 4 missing dependency
/// artifact.
int run_cli(int argc, const char* const* argv);

}  // namespace morphofilter
