#pragma once

#include <span>
#include <string>
#include <vector>

#include "morphofilter/ensemble.hpp"
#include "morphofilter/raster.hpp"

namespace morphofilter {

/// Plug-in entropy of a bin-count histogram, in nats.
double site_entropy(std::span<const long> counts);

/// Per-site entropies for a sites-by-bins count matrix.
Eigen::VectorXd entropy_per_site(
    const Eigen::Matrix<long, Eigen::Dynamic, Eigen::Dynamic>& histograms);

/// Per-site normalized entropy across a sweep.
struct EntropyMap {
    std::vector<double> temperatures;  // descending
    Eigen::MatrixXd entropy;           // temperatures x sites, nats
    Eigen::VectorXd s_max;             // per site
    Eigen::MatrixXd normalized;        // entropy / s_max
};

EntropyMap build_entropy_map(const SweepSeries& series, const Eigen::VectorXd& s_max);

/// Per-site entropy of the reference ensemble sampled with the compliance
/// force zeroed (constraint and walls still active).
Eigen::VectorXd max_entropy_reference(const ProblemSpec& spec,
                                      const ThermostatParams& thermostat,
                                      const SamplingParams& sampling, std::uint64_t seed);

enum class CondensationFlag {
    crossed,       // interpolated crossing inside the swept range
    never_below,   // gas down to the schedule floor; T_c set to the lowest T
    always_below   // condensed already at the top; T_c set to the highest T
};

std::string to_string(CondensationFlag flag);

struct CondensationResult {
    Eigen::VectorXd t_c;                   // per site
    std::vector<CondensationFlag> flags;   // per site
    double t_c_max = 0.0;                  // max finite T_c, normalization constant
};

/// Highest temperature at which normalized entropy drops below the
/// threshold, linearly interpolated between schedule points; scans from the
/// high-temperature side so noisy re-crossings below are ignored.
double condensation_temperature(std::span<const double> temperatures_desc,
                                std::span<const double> normalized_entropy,
                                double threshold, CondensationFlag& flag);

CondensationResult condensation_map(const EntropyMap& map, double threshold = 0.85);

struct ImportanceMap {
    Eigen::VectorXd density;       // optimal design
    Eigen::VectorXd t_c;           // per site
    Eigen::VectorXd t_c_normalized;
    Image raster;
};

/// Composes the optimal design (opacity) with the normalized condensation
/// temperature (hue); both inputs must live on the same mesh.
ImportanceMap importance_map(const DesignField& optimal_x, const CondensationResult& cond,
                             int nelx, int nely);

struct RegimeSegment {
    int first = 0, last = 0;       // inclusive indices into the series
    double t_low = 0.0, t_high = 0.0;
    double slope = 0.0;            // d<C>/dT, reported as N_IP/nu
    double intercept = 0.0;
    double residual = 0.0;         // sum of squared fit errors
};

struct RegimeFit {
    std::vector<RegimeSegment> segments;  // ordered from high T to low T
    double total_cost = 0.0;
};

/// Piecewise-linear least squares over (T, <C>) with change points chosen
/// by exhaustive search and an MDL-style penalty per extra segment.
RegimeFit regime_fit(std::span<const double> temperatures, std::span<const double> compliance,
                     int max_segments, int min_points = 3, double penalty_scale = 1.0);

/// Piecewise power-law density-of-states model:
/// Omega(C) = g< (C-Cmin)^(N</nu - 1)                                for C < C*
///          = g< (C*-Cmin)^(N</nu - 1) + g> (C-C*)^(N>/nu - 1)       for C > C*
struct TheoryModel {
    double c_min = 0.0;
    double c_star = 1.0;
    double n_below = 1.0;   // N_<
    double n_above = 1.0;   // N_>
    double nu = 1.0;
    double gamma_below = 1.0;
    double gamma_above = 1.0;

    void validate() const;
};

/// ln Z(beta) * exp(beta*c_min) for the model above, evaluated in log space.
double theory_log_partition_scaled(const TheoryModel& model, double beta);

/// <C>(T) = -d ln Z / d beta, analytic in each log-space term.
double theory_mean_compliance(const TheoryModel& model, double temperature);

/// Single power-law regime: exactly c_min + (N_IP/nu) T at every T.
double single_regime_mean_compliance(double c_min, double dof_ratio, double temperature);

enum class SiteState { unconstrained, in_play, condensed };

std::string to_string(SiteState state);

/// condensed: s < s_lo; unconstrained: s > s_hi and |<x>-0.5| < 0.1;
/// in-play: the rest.
std::vector<SiteState> classify_sites(const Eigen::VectorXd& mean_density,
                                      const Eigen::VectorXd& normalized_entropy,
                                      double s_lo = 0.15, double s_hi = 0.85);

}  // namespace morphofilter
