#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "morphofilter/analysis.hpp"
#include "morphofilter/optimizer.hpp"

namespace morphofilter {

/// A command needs the output of an earlier stage that has not been run.
class MissingArtifactError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ScheduleSpec {
    std::vector<double> temperatures;  // explicit; when empty the range below applies
    double t_hi = 0.0;                 // 0 = probe for the ratio-3 temperature
    double t_lo = 0.0;                 // 0 = 0.05 * t_hi
    int count = 24;
    bool log_spacing = true;

    void validate() const;
};

struct RunConfig {
    ProblemSpec problem;
    ThermostatParams thermostat;
    ScheduleSpec schedule;
    SamplingParams sampling;
    bool anneal = true;
    std::uint64_t seed = 1;
    std::string output_dir = "run";
    int jobs = 1;
};

RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& c);
RunConfig load_config(const std::string& path);
std::string config_hash(const RunConfig& c);

/// Shortest exact decimal form ("%.17g" fallback-free round trip).
std::string format_double(double v);

std::string read_text_file(const std::filesystem::path& path);  // MissingArtifactError if absent
void write_text_file(const std::filesystem::path& path, const std::string& content);

std::uint32_t crc32_file(const std::filesystem::path& path);

/// Merges the stage timing and the (re)emitted files into manifest.json in
/// the run directory. Everything except the "timings" object is a pure
/// function of the run inputs.
void update_manifest(const std::filesystem::path& run_dir, const std::string& cfg_hash,
                     const std::string& stage, double elapsed_seconds,
                     const std::vector<std::filesystem::path>& files);

// --- stage persistence -----------------------------------------------------

std::vector<std::filesystem::path> save_optimize(const std::filesystem::path& run_dir,
                                                 const ProblemSpec& spec,
                                                 const OptimizationResult& result);
OptimizationResult load_optimize(const std::filesystem::path& run_dir,
                                 const ProblemSpec& spec);
bool has_optimize(const std::filesystem::path& run_dir);

std::vector<std::filesystem::path> save_reference(const std::filesystem::path& run_dir,
                                                  const ProblemSpec& spec,
                                                  const EnsembleStats& stats,
                                                  const Eigen::VectorXd& s_max);
Eigen::VectorXd load_reference(const std::filesystem::path& run_dir);
bool has_reference(const std::filesystem::path& run_dir);

std::vector<std::filesystem::path> save_sweep(const std::filesystem::path& run_dir,
                                              const ProblemSpec& spec,
                                              const SweepSeries& series);
SweepSeries load_sweep(const std::filesystem::path& run_dir);
bool has_sweep(const std::filesystem::path& run_dir);

}  // namespace morphofilter
