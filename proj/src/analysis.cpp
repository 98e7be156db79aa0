#include "morphofilter/analysis.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace morphofilter {

double site_entropy(std::span<const long> counts) {
    long total = 0;
    for (long c : counts) {
        if (c < 0) throw SpecError("histogram: negative count");
        total += c;
    }
    if (total == 0) throw SpecError("histogram: empty");
    double s = 0.0;
    for (long c : counts) {
        if (c == 0) continue;
        const double q = static_cast<double>(c) / total;
        s -= q * std::log(q);
    }
    return s;
}

Eigen::VectorXd entropy_per_site(
    const Eigen::Matrix<long, Eigen::Dynamic, Eigen::Dynamic>& histograms) {
    const int n = static_cast<int>(histograms.rows());
    Eigen::VectorXd s(n);
    std::vector<long> row(histograms.cols());
    for (int e = 0; e < n; ++e) {
        for (int b = 0; b < histograms.cols(); ++b) row[b] = histograms(e, b);
        s[e] = site_entropy(row);
    }
    return s;
}

EntropyMap build_entropy_map(const SweepSeries& series, const Eigen::VectorXd& s_max) {
    EntropyMap map;
    map.s_max = s_max;
    std::vector<Eigen::VectorXd> rows;
    for (const auto& entry : series.entries) {
        if (entry.failed) continue;
        map.temperatures.push_back(entry.temperature);
        rows.push_back(entropy_per_site(entry.stats.histograms));
    }
    if (rows.empty()) throw SpecError("entropy map: sweep has no successful temperatures");
    const int n = static_cast<int>(rows.front().size());
    if (s_max.size() != n) throw SpecError("entropy map: s_max size mismatch");
    map.entropy.resize(static_cast<int>(rows.size()), n);
    map.normalized.resize(static_cast<int>(rows.size()), n);
    for (std::size_t t = 0; t < rows.size(); ++t) {
        map.entropy.row(static_cast<int>(t)) = rows[t].transpose();
        map.normalized.row(static_cast<int>(t)) =
            (rows[t].array() / s_max.array()).matrix().transpose();
    }
    return map;
}

Eigen::VectorXd max_entropy_reference(const ProblemSpec& spec,
                                      const ThermostatParams& thermostat,
                                      const SamplingParams& sampling, std::uint64_t seed) {
    NhcSampler sampler(spec, thermostat, /*zero_force=*/true);
    SampleOutcome out = sample_at_temperature(sampler, sampling, seed);
    return entropy_per_site(out.stats.histograms);
}

std::string to_string(CondensationFlag flag) {
    switch (flag) {
        case CondensationFlag::crossed: return "crossed";
        case CondensationFlag::never_below: return "never_below";
        case CondensationFlag::always_below: return "always_below";
    }
    return "unknown";
}

double condensation_temperature(std::span<const double> temperatures_desc,
                                std::span<const double> normalized_entropy,
                                double threshold, CondensationFlag& flag) {
    const std::size_t n = temperatures_desc.size();
    if (n < 2) throw SpecError("condensation: need at least 2 temperatures");
    if (normalized_entropy.size() != n)
        throw SpecError("condensation: series length mismatch");

    if (normalized_entropy[0] < threshold) {
        flag = CondensationFlag::always_below;
        return temperatures_desc[0];
    }
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double s_hi = normalized_entropy[i];
        const double s_lo = normalized_entropy[i + 1];
        if (s_hi >= threshold && s_lo < threshold) {
            const double t_hi = temperatures_desc[i];
            const double t_lo = temperatures_desc[i + 1];
            flag = CondensationFlag::crossed;
            return t_lo + (t_hi - t_lo) * (threshold - s_lo) / (s_hi - s_lo);
        }
    }
    flag = CondensationFlag::never_below;
    return temperatures_desc[n - 1];
}

CondensationResult condensation_map(const EntropyMap& map, double threshold) {
    const int n_sites = static_cast<int>(map.normalized.cols());
    const int n_temps = static_cast<int>(map.normalized.rows());
    CondensationResult result;
    result.t_c.resize(n_sites);
    result.flags.resize(n_sites);
    std::vector<double> series(n_temps);
    for (int e = 0; e < n_sites; ++e) {
        for (int t = 0; t < n_temps; ++t) series[t] = map.normalized(t, e);
        result.t_c[e] = condensation_temperature(map.temperatures, series, threshold,
                                                 result.flags[e]);
    }
    double t_max = 0.0;
    for (int e = 0; e < n_sites; ++e)
        if (result.flags[e] != CondensationFlag::never_below)
            t_max = std::max(t_max, result.t_c[e]);
    if (t_max == 0.0) t_max = map.temperatures.back();
    result.t_c_max = t_max;
    return result;
}

ImportanceMap importance_map(const DesignField& optimal_x, const CondensationResult& cond,
                             int nelx, int nely) {
    if (optimal_x.size() != nelx * nely || cond.t_c.size() != optimal_x.size())
        throw SpecError("importance map: mesh mismatch");
    ImportanceMap map;
    map.density = optimal_x;
    map.t_c = cond.t_c;
    map.t_c_normalized = cond.t_c / (cond.t_c_max > 0.0 ? cond.t_c_max : 1.0);
    map.raster = render_importance(map.density, map.t_c_normalized, nelx, nely);
    return map;
}

namespace {

struct SegmentFit {
    double slope = 0.0, intercept = 0.0, sse = 0.0;
};

SegmentFit fit_segment(std::span<const double> x, std::span<const double> y, int i, int j) {
    const int m = j - i + 1;
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (int k = i; k <= j; ++k) {
        sx += x[k];
        sy += y[k];
        sxx += x[k] * x[k];
        sxy += x[k] * y[k];
        syy += y[k] * y[k];
    }
    const double varx = sxx - sx * sx / m;
    const double covxy = sxy - sx * sy / m;
    const double vary = syy - sy * sy / m;
    SegmentFit f;
    f.slope = varx > 0.0 ? covxy / varx : 0.0;
    f.intercept = (sy - f.slope * sx) / m;
    f.sse = std::max(0.0, vary - f.slope * covxy);
    return f;
}

}  // namespace

RegimeFit regime_fit(std::span<const double> temperatures, std::span<const double> compliance,
                     int max_segments, int min_points, double penalty_scale) {
    const int n = static_cast<int>(temperatures.size());
    if (n < 4) throw SpecError("regime fit: need at least 4 points");
    if (static_cast<int>(compliance.size()) != n)
        throw SpecError("regime fit: series length mismatch");
    if (min_points < 2) throw SpecError("regime fit: min_points must be >= 2");
    if (max_segments < 1) throw SpecError("regime fit: max_segments must be >= 1");

    const double big = std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> sse(n, std::vector<double>(n, big));
    for (int i = 0; i < n; ++i)
        for (int j = i + min_points - 1; j < n; ++j)
            sse[i][j] = fit_segment(temperatures, compliance, i, j).sse;

    // best[k][j]: minimal summed SSE splitting points 0..j into k+1 segments
    const int kmax = std::min(max_segments, n / min_points);
    std::vector<std::vector<double>> best(kmax, std::vector<double>(n, big));
    std::vector<std::vector<int>> cut(kmax, std::vector<int>(n, -1));
    for (int j = 0; j < n; ++j) best[0][j] = sse[0][j];
    for (int k = 1; k < kmax; ++k) {
        for (int j = (k + 1) * min_points - 1; j < n; ++j) {
            for (int i = k * min_points; i + min_points - 1 <= j; ++i) {
                if (best[k - 1][i - 1] == big || sse[i][j] == big) continue;
                const double cost = best[k - 1][i - 1] + sse[i][j];
                if (cost < best[k][j]) {
                    best[k][j] = cost;
                    cut[k][j] = i;
                }
            }
        }
    }

    double c_lo = compliance[0], c_hi = compliance[0];
    for (int i = 1; i < n; ++i) {
        c_lo = std::min(c_lo, compliance[i]);
        c_hi = std::max(c_hi, compliance[i]);
    }
    const double floor = n * std::pow(1e-9 * std::max(c_hi - c_lo, 1e-12), 2.0);

    int best_k = 0;
    double best_cost = big;
    for (int k = 0; k < kmax; ++k) {
        if (best[k][n - 1] == big) continue;
        const double cost = n * std::log((best[k][n - 1] + floor) / n) +
                            penalty_scale * 3.0 * (k + 1) * std::log(static_cast<double>(n));
        if (cost < best_cost) {
            best_cost = cost;
            best_k = k;
        }
    }

    // Reconstruct the segment boundaries.
    std::vector<std::pair<int, int>> ranges;
    int j = n - 1;
    for (int k = best_k; k >= 1; --k) {
        const int i = cut[k][j];
        ranges.emplace_back(i, j);
        j = i - 1;
    }
    ranges.emplace_back(0, j);
    std::reverse(ranges.begin(), ranges.end());

    RegimeFit fit;
    fit.total_cost = best_cost;
    for (const auto& [i, jj] : ranges) {
        const SegmentFit f = fit_segment(temperatures, compliance, i, jj);
        RegimeSegment seg;
        seg.first = i;
        seg.last = jj;
        seg.t_high = std::max(temperatures[i], temperatures[jj]);
        seg.t_low = std::min(temperatures[i], temperatures[jj]);
        seg.slope = f.slope;
        seg.intercept = f.intercept;
        seg.residual = f.sse;
        fit.segments.push_back(seg);
    }
    return fit;
}

void TheoryModel::validate() const {
    if (!(c_star > c_min)) throw SpecError("theory model: need c_star > c_min");
    if (!(n_below > 0.0 && n_above > 0.0 && nu > 0.0))
        throw SpecError("theory model: exponents must be positive");
    if (!(gamma_below > 0.0 && gamma_above > 0.0))
        throw SpecError("theory model: geometric coefficients must be positive");
}

namespace {

// ln of the lower incomplete gamma function, stable for tiny z.
double ln_gamma_lower(double a, double z) {
    if (z <= 0.0) return -std::numeric_limits<double>::infinity();
    if (z < a + 1.0) {
        double term = 1.0, sum = 1.0;
        for (int k = 1; k < 500; ++k) {
            term *= z / (a + k);
            sum += term;
            if (term < 1e-18 * sum) break;
        }
        return a * std::log(z) - z - std::log(a) + std::log(sum);
    }
    return std::lgamma(a) + std::log(boost::math::gamma_p(a, z));
}

double logsumexp3(double a, double b, double c) {
    const double m = std::max(a, std::max(b, c));
    return m + std::log(std::exp(a - m) + std::exp(b - m) + std::exp(c - m));
}

}  // namespace

double theory_log_partition_scaled(const TheoryModel& model, double beta) {
    model.validate();
    if (!(beta > 0.0)) throw SpecError("theory: beta must be positive");
    const double a_lo = model.n_below / model.nu;
    const double a_hi = model.n_above / model.nu;
    const double gap = model.c_star - model.c_min;

    const double t1 = std::log(model.gamma_below) - a_lo * std::log(beta) +
                      ln_gamma_lower(a_lo, beta * gap);
    const double t2 = std::log(model.gamma_above) - beta * gap - a_hi * std::log(beta) +
                      std::lgamma(a_hi);
    const double t3 = std::log(model.gamma_below) - beta * gap +
                      (a_lo - 1.0) * std::log(gap) - std::log(beta);
    return logsumexp3(t1, t2, t3);
}

double theory_mean_compliance(const TheoryModel& model, double temperature) {
    model.validate();
    if (!(temperature > 0.0)) throw SpecError("theory: temperature must be positive");
    const double beta = 1.0 / temperature;
    const double a_lo = model.n_below / model.nu;
    const double a_hi = model.n_above / model.nu;
    const double gap = model.c_star - model.c_min;
    const double z = beta * gap;

    const double lg_lower = ln_gamma_lower(a_lo, z);
    const double t1 = std::log(model.gamma_below) - a_lo * std::log(beta) + lg_lower;
    const double t2 = std::log(model.gamma_above) - z - a_hi * std::log(beta) +
                      std::lgamma(a_hi);
    const double t3 = std::log(model.gamma_below) - z + (a_lo - 1.0) * std::log(gap) -
                      std::log(beta);
    const double ln_z = logsumexp3(t1, t2, t3);

    // -d(term)/d(beta) for each log-space term; the boundary derivative of
    // the truncated gamma integral enters through d1.
    const double d_lg_lower =
        std::exp(std::log(gap) + (a_lo - 1.0) * std::log(z) - z - lg_lower);
    const double d1 = a_lo / beta - d_lg_lower;
    const double d2 = gap + a_hi / beta;
    const double d3 = gap + 1.0 / beta;

    const double w1 = std::exp(t1 - ln_z);
    const double w2 = std::exp(t2 - ln_z);
    const double w3 = std::exp(t3 - ln_z);
    return model.c_min + w1 * d1 + w2 * d2 + w3 * d3;
}

double single_regime_mean_compliance(double c_min, double dof_ratio, double temperature) {
    if (!(dof_ratio > 0.0)) throw SpecError("theory: N_IP/nu must be positive");
    return c_min + dof_ratio * temperature;
}

std::string to_string(SiteState state) {
    switch (state) {
        case SiteState::unconstrained: return "unconstrained";
        case SiteState::in_play: return "in_play";
        case SiteState::condensed: return "condensed";
    }
    return "unknown";
}

std::vector<SiteState> classify_sites(const Eigen::VectorXd& mean_density,
                                      const Eigen::VectorXd& normalized_entropy,
                                      double s_lo, double s_hi) {
    if (mean_density.size() != normalized_entropy.size())
        throw SpecError("classify: size mismatch");
    std::vector<SiteState> states(mean_density.size());
    for (int e = 0; e < mean_density.size(); ++e) {
        const double s = normalized_entropy[e];
        if (s < s_lo)
            states[e] = SiteState::condensed;
        else if (s > s_hi && std::abs(mean_density[e] - 0.5) < 0.1)
            states[e] = SiteState::unconstrained;
        else
            states[e] = SiteState::in_play;
    }
    return states;
}

}  // namespace morphofilter
