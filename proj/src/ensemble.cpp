#include "morphofilter/ensemble.hpp"

#include <atomic>
#include <cmath>
#include <thread>

namespace morphofilter {

void SamplingParams::validate() const {
    if (n_equil < 0) throw SpecError("sampling.n_equil: must be >= 0");
    if (n_samples < 1) throw SpecError("sampling.n_samples: must be >= 1");
    if (stride < 1) throw SpecError("sampling.stride: must be >= 1");
    if (histogram_bins < 2) throw SpecError("sampling.histogram_bins: must be >= 2");
}

SampleOutcome sample_at_temperature(NhcSampler& sampler, const SamplingParams& sampling,
                                    std::uint64_t seed, const DynamicState* warm_start) {
    sampling.validate();
    const int n = sampler.spec().num_elements();
    const int bins = sampling.histogram_bins;

    DynamicState state = warm_start ? *warm_start : sampler.initialize(seed);
    state.force_valid = false;  // temperature may have changed since the warm start

    for (long i = 0; i < sampling.n_equil; ++i) sampler.step(state);

    EnsembleStats stats;
    stats.temperature = sampler.params().target_temperature;
    stats.seed = seed;
    stats.n_samples = sampling.n_samples;
    stats.mean_density = Eigen::VectorXd::Zero(n);
    stats.histograms = Eigen::Matrix<long, Eigen::Dynamic, Eigen::Dynamic>::Zero(n, bins);

    double sum_c = 0.0, sum_c2 = 0.0, sum_lambda = 0.0;
    double first_half = 0.0, second_half = 0.0;
    const long half = sampling.n_samples / 2;

    for (long s = 0; s < sampling.n_samples; ++s) {
        for (long i = 0; i < sampling.stride; ++i) sampler.step(state);
        stats.mean_density += state.x;
        for (int e = 0; e < n; ++e) {
            int b = static_cast<int>(state.x[e] * bins);
            if (b >= bins) b = bins - 1;
            if (b < 0) b = 0;
            ++stats.histograms(e, b);
        }
        sum_c += state.compliance;
        sum_c2 += state.compliance * state.compliance;
        sum_lambda += state.lagrange_multiplier;
        (s < half ? first_half : second_half) += state.compliance;
    }

    const double ns = static_cast<double>(sampling.n_samples);
    stats.mean_density /= ns;
    stats.mean_compliance = sum_c / ns;
    stats.compliance_second_moment = sum_c2 / ns;
    stats.mean_pressure = sum_lambda / ns;

    const double var = std::max(0.0, stats.compliance_second_moment -
                                         stats.mean_compliance * stats.mean_compliance);
    stats.compliance_std_error = std::sqrt(var / ns);
    stats.first_half_mean = half > 0 ? first_half / half : stats.mean_compliance;
    stats.second_half_mean =
        (sampling.n_samples - half) > 0 ? second_half / (sampling.n_samples - half) : 0.0;
    const double diff_se = 2.0 * std::sqrt(var) / std::sqrt(ns);
    stats.equilibrated =
        std::abs(stats.first_half_mean - stats.second_half_mean) <= 3.0 * diff_se ||
        var == 0.0;

    return {std::move(stats), std::move(state)};
}

double compliance_ratio(const EnsembleStats& stats) {
    if (!(stats.c_min_reference > 0.0))
        throw SpecError("c_min_reference: missing or non-positive");
    return stats.mean_compliance / stats.c_min_reference;
}

double standard_error(const EnsembleStats& stats) { return stats.compliance_std_error; }

std::uint64_t derive_seed(std::uint64_t master, int index) {
    // splitmix64 over the master seed offset by the schedule index
    std::uint64_t z = master + 0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

std::vector<double> make_schedule(double t_hi, double t_lo, int count, bool log_spacing) {
    if (!(t_hi > t_lo) || !(t_lo > 0.0))
        throw SpecError("schedule: need t_hi > t_lo > 0");
    if (count < 1) throw SpecError("schedule.count: must be >= 1");
    std::vector<double> temps(count);
    if (count == 1) {
        temps[0] = t_hi;
        return temps;
    }
    for (int i = 0; i < count; ++i) {
        const double f = static_cast<double>(i) / (count - 1);
        temps[i] = log_spacing ? t_hi * std::pow(t_lo / t_hi, f)
                               : t_hi + (t_lo - t_hi) * f;
    }
    return temps;
}

static void check_schedule(const std::vector<double>& schedule) {
    if (schedule.empty()) throw SpecError("schedule: must not be empty");
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        if (!(schedule[i] > 0.0)) throw SpecError("schedule: temperatures must be positive");
        if (i > 0 && !(schedule[i] < schedule[i - 1]))
            throw SpecError("schedule: temperatures must be strictly decreasing");
    }
}

SweepSeries run_sweep(const ProblemSpec& spec, const ThermostatParams& thermostat,
                      const std::vector<double>& schedule, const SamplingParams& sampling,
                      bool anneal, std::uint64_t master_seed, double c_min_reference,
                      int jobs, bool zero_force) {
    check_schedule(schedule);
    sampling.validate();

    SweepSeries series;
    series.entries.resize(schedule.size());
    series.c_min_reference = c_min_reference;
    series.master_seed = master_seed;
    series.problem_hash = spec_hash(spec);
    series.annealed = anneal;
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        series.entries[i].temperature = schedule[i];
        series.entries[i].seed = derive_seed(master_seed, static_cast<int>(i));
    }

    auto run_one = [&](NhcSampler& sampler, std::size_t i, const DynamicState* warm) {
        SweepEntry& entry = series.entries[i];
        sampler.set_temperature(entry.temperature);
        try {
            SampleOutcome out = sample_at_temperature(sampler, sampling, entry.seed, warm);
            entry.stats = std::move(out.stats);
            entry.stats.c_min_reference = c_min_reference;
            return std::optional<DynamicState>(std::move(out.final_state));
        } catch (const std::exception& err) {
            entry.failed = true;
            entry.error = err.what();
            return std::optional<DynamicState>();
        }
    };

    if (anneal || jobs <= 1) {
        NhcSampler sampler(spec, thermostat, zero_force);
        std::optional<DynamicState> carry;
        for (std::size_t i = 0; i < schedule.size(); ++i) {
            auto final_state = run_one(sampler, i, anneal && carry ? &*carry : nullptr);
            if (anneal && final_state) carry = std::move(final_state);
        }
        return series;
    }

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        NhcSampler sampler(spec, thermostat, zero_force);
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= schedule.size()) return;
            run_one(sampler, i, nullptr);
        }
    };
    std::vector<std::thread> pool;
    const int nw = std::min<int>(jobs, static_cast<int>(schedule.size()));
    pool.reserve(nw);
    for (int w = 0; w < nw; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    return series;
}

double find_high_temperature(const ProblemSpec& spec, const ThermostatParams& thermostat,
                             double c_min, std::uint64_t seed, double target_ratio,
                             const SamplingParams* probe_params) {
    if (!(c_min > 0.0)) throw SpecError("c_min_reference: must be positive for auto scaling");
    SamplingParams probe;
    probe.n_equil = 4000;
    probe.n_samples = 400;
    probe.stride = 10;
    if (probe_params) probe = *probe_params;

    ThermostatParams params = thermostat;
    params.target_temperature = c_min / (2.0 * spec.num_elements());
    NhcSampler sampler(spec, params, false);

    std::optional<DynamicState> carry;
    for (int i = 0; i < 60; ++i) {
        sampler.set_temperature(params.target_temperature);
        SampleOutcome out =
            sample_at_temperature(sampler, probe, derive_seed(seed, i), carry ? &*carry : nullptr);
        carry = std::move(out.final_state);
        if (out.stats.mean_compliance / c_min >= target_ratio)
            return params.target_temperature;
        params.target_temperature *= 2.0;
    }
    throw NumericsError("high-temperature probe did not reach the target compliance ratio");
}

}  // namespace morphofilter
