#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "morphofilter/nhc.hpp"

namespace morphofilter {

struct SamplingParams {
    long n_equil = 50000;
    long n_samples = 2000;
    long stride = 25;
    int histogram_bins = 32;

    void validate() const;
};

/// Per-temperature accumulated observables.
struct EnsembleStats {
    double temperature = 0.0;
    long n_samples = 0;
    Eigen::VectorXd mean_density;                          // per site
    Eigen::Matrix<long, Eigen::Dynamic, Eigen::Dynamic> histograms;  // sites x bins
    double mean_compliance = 0.0;
    double compliance_second_moment = 0.0;
    double mean_pressure = 0.0;
    double c_min_reference = 0.0;  // 0 = not attached
    std::uint64_t seed = 0;

    // Equilibration check: first vs second half of the sampling window.
    bool equilibrated = true;
    double first_half_mean = 0.0;
    double second_half_mean = 0.0;
    double compliance_std_error = 0.0;
};

struct SampleOutcome {
    EnsembleStats stats;
    DynamicState final_state;
};

/// Runs n_equil unrecorded steps then records every stride-th step.
/// With a warm start the given state continues; otherwise a fresh state is
/// drawn from the seed.
SampleOutcome sample_at_temperature(NhcSampler& sampler, const SamplingParams& sampling,
                                    std::uint64_t seed,
                                    const DynamicState* warm_start = nullptr);

/// <C>/C_min; throws SpecError when no reference is attached.
double compliance_ratio(const EnsembleStats& stats);

double standard_error(const EnsembleStats& stats);

struct SweepEntry {
    double temperature = 0.0;
    std::uint64_t seed = 0;
    bool failed = false;
    std::string error;
    EnsembleStats stats;
};

struct SweepSeries {
    std::vector<SweepEntry> entries;  // descending temperature
    double c_min_reference = 0.0;
    std::uint64_t master_seed = 0;
    std::string problem_hash;
    bool annealed = false;
};

/// Temperature sweep over a strictly decreasing schedule. When annealing,
/// each temperature warm-starts from the previous final state; otherwise
/// temperatures are independent and may run on `jobs` worker threads.
/// Per-temperature failures are recorded without aborting the rest.
SweepSeries run_sweep(const ProblemSpec& spec, const ThermostatParams& thermostat,
                      const std::vector<double>& schedule, const SamplingParams& sampling,
                      bool anneal, std::uint64_t master_seed, double c_min_reference,
                      int jobs = 1, bool zero_force = false);

std::uint64_t derive_seed(std::uint64_t master, int index);

std::vector<double> make_schedule(double t_hi, double t_lo, int count, bool log_spacing);

/// Doubles the temperature from a small start until the measured compliance
/// ratio reaches target_ratio; used to auto-scale sweep schedules.
double find_high_temperature(const ProblemSpec& spec, const ThermostatParams& thermostat,
                             double c_min, std::uint64_t seed, double target_ratio = 3.0,
                             const SamplingParams* probe_params = nullptr);

}  // namespace morphofilter
