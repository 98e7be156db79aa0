#pragma once

#include "morphofilter/ensemble.hpp"
#include "morphofilter/fem.hpp"

namespace morphofilter {

struct OcParams {
    int max_iters = 500;
    double move_limit = 0.2;
    double damping = 0.5;
    double tol = 0.01;  // max per-site density change
};

struct OptimizationResult {
    DesignField x_star;
    double c_min = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> change_history;
    std::vector<double> compliance_history;
    int non_monotone_steps = 0;  // iterations where C rose by more than 1%
};

/// Optimality-criteria compliance minimization with density filtering;
/// the volume constraint is met each iterate by bisecting the multiplier.
OptimizationResult optimize(const ProblemSpec& spec, const OcParams& params = {});

struct AnnealReport {
    double compliance_ratio = 0.0;       // <C>/c_min at the lowest temperature
    double mean_abs_density_gap = 0.0;   // mean_e |<x_e> - x*_e| at the lowest temperature
    double c_min = 0.0;
    SweepSeries series;
};

/// Anneals to low temperature and compares the cold ensemble with the
/// optimizer baseline; throws when the baseline compliance is zero.
AnnealReport anneal_compare(const ProblemSpec& spec, const ThermostatParams& thermostat,
                            const std::vector<double>& schedule,
                            const SamplingParams& sampling, std::uint64_t seed);

}  // namespace morphofilter
