#include "morphofilter/optimizer.hpp"

#include <cmath>

namespace morphofilter {

OptimizationResult optimize(const ProblemSpec& spec, const OcParams& params) {
    FemSolver fem(spec);
    const int n = spec.num_elements();
    const double v0 = spec.target_volume();

    OptimizationResult result;
    result.x_star = uniform_field(n, spec.volume_fraction);

    DesignField x = result.x_star;
    DesignField xnew(n);
    for (int it = 0; it < params.max_iters; ++it) {
        FemSolver::Evaluation eval = fem.evaluate(x);
        result.compliance_history.push_back(eval.compliance);
        if (it > 0) {
            const double prev = result.compliance_history[it - 1];
            if (eval.compliance > 1.01 * prev) ++result.non_monotone_steps;
        }

        if (eval.gradient.lpNorm<Eigen::Infinity>() == 0.0) {
            // Flat objective: the uniform field is already the OC fixed point.
            result.converged = true;
            result.iterations = it;
            break;
        }

        // OC update with move limit and damping; bisection on the volume
        // multiplier until sum(x) = v0.
        double l1 = 0.0, l2 = 1e9;
        while ((l2 - l1) / (l1 + l2) > 1e-12) {
            const double lmid = 0.5 * (l1 + l2);
            for (int e = 0; e < n; ++e) {
                const double b = std::max(0.0, -eval.gradient[e]) / lmid;
                double cand = x[e] * std::pow(b, params.damping);
                cand = std::min(cand, x[e] + params.move_limit);
                cand = std::max(cand, x[e] - params.move_limit);
                xnew[e] = std::min(1.0, std::max(0.0, cand));
            }
            (xnew.sum() > v0 ? l1 : l2) = lmid;
        }

        const double change = (xnew - x).lpNorm<Eigen::Infinity>();
        result.change_history.push_back(change);
        x = xnew;
        result.iterations = it + 1;
        if (change < params.tol) {
            result.converged = true;
            break;
        }
    }

    result.x_star = x;
    result.c_min = fem.compliance(x);
    return result;
}

AnnealReport anneal_compare(const ProblemSpec& spec, const ThermostatParams& thermostat,
                            const std::vector<double>& schedule,
                            const SamplingParams& sampling, std::uint64_t seed) {
    OptimizationResult opt = optimize(spec);
    if (!(opt.c_min > 0.0))
        throw SpecError("anneal_compare: baseline compliance is zero, ratio undefined");

    AnnealReport report;
    report.c_min = opt.c_min;
    report.series = run_sweep(spec, thermostat, schedule, sampling, /*anneal=*/true, seed,
                              opt.c_min);

    const SweepEntry* coldest = nullptr;
    for (const auto& entry : report.series.entries)
        if (!entry.failed) coldest = &entry;
    if (!coldest) throw NumericsError("anneal_compare: every temperature failed");

    report.compliance_ratio = coldest->stats.mean_compliance / opt.c_min;
    report.mean_abs_density_gap =
        (coldest->stats.mean_density - opt.x_star).cwiseAbs().mean();
    return report;
}

}  // namespace morphofilter
