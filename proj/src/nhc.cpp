#include "morphofilter/nhc.hpp"

#include <cmath>

namespace morphofilter {

namespace {

// Suzuki-Yoshida 3-term weights for the thermostat splitting.
constexpr double kSy1 = 1.3512071919596578;
constexpr double kSyWeights[3] = {kSy1, 1.0 - 2.0 * kSy1, kSy1};

constexpr int kMaxWallIterations = 100;

}  // namespace

void ThermostatParams::validate() const {
    if (!(target_temperature > 0.0)) throw SpecError("thermostat.T: must be positive");
    if (chain_length < 1) throw SpecError("thermostat.chain_length: must be >= 1");
    if (!(timestep > 0.0)) throw SpecError("thermostat.dt: must be positive");
    if (!(relaxation_time > 0.0)) throw SpecError("thermostat.tau: must be positive");
    for (double q : masses)
        if (!(q > 0.0)) throw SpecError("thermostat.masses: must be positive");
    if (!masses.empty() && static_cast<int>(masses.size()) != chain_length)
        throw SpecError("thermostat.masses: size must equal chain_length");
}

std::vector<double> ThermostatParams::chain_masses(int n_sites) const {
    if (!masses.empty()) return masses;
    const double tau2 = relaxation_time * relaxation_time;
    std::vector<double> q(chain_length, target_temperature * tau2);
    q[0] = n_sites * target_temperature * tau2;
    return q;
}

Eigen::VectorXd project_volume_constraint(Eigen::VectorXd x, double v0) {
    const int n = static_cast<int>(x.size());
    std::vector<char> frozen(n, 0);
    for (int pass = 0; pass <= n; ++pass) {
        double defect = v0 - x.sum();
        if (std::abs(defect) <= 1e-12 * std::max(1.0, std::abs(v0))) return x;
        int nfree = 0;
        for (int e = 0; e < n; ++e)
            if (!frozen[e]) ++nfree;
        if (nfree == 0)
            throw NumericsError("volume projection infeasible: all entries saturated");
        const double shift = defect / nfree;
        for (int e = 0; e < n; ++e) {
            if (frozen[e]) continue;
            x[e] += shift;
            if (x[e] <= 0.0) {
                x[e] = 0.0;
                frozen[e] = 1;
            } else if (x[e] >= 1.0) {
                x[e] = 1.0;
                frozen[e] = 1;
            }
        }
    }
    throw NumericsError("volume projection did not converge");
}

NhcSampler::NhcSampler(const ProblemSpec& spec, ThermostatParams params, bool zero_force)
    : spec_(spec), params_(std::move(params)), zero_force_(zero_force) {
    spec_.validate();
    params_.validate();
    fem_ = std::make_unique<FemSolver>(spec_);
    chain_masses_ = params_.chain_masses(spec_.num_elements());
    volume_target_ = spec_.target_volume();
    reflected_.assign(spec_.num_elements(), 0);
}

void NhcSampler::set_temperature(double t) {
    params_.target_temperature = t;
    params_.validate();
    chain_masses_ = params_.chain_masses(spec_.num_elements());
}

DynamicState NhcSampler::initialize(std::uint64_t seed) const {
    const int n = spec_.num_elements();
    DynamicState s;
    s.x = uniform_field(n, spec_.volume_fraction);
    s.x.array() += (volume_target_ - s.x.sum()) / n;

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, std::sqrt(params_.target_temperature / 2.0));
    s.momenta.resize(n);
    for (int e = 0; e < n; ++e) s.momenta[e] = gauss(rng);
    if (n > 0) s.momenta.array() -= s.momenta.mean();

    s.chain_positions.assign(chain_masses_.size(), 0.0);
    s.chain_velocities.assign(chain_masses_.size(), 0.0);
    return s;
}

void NhcSampler::refresh_force(DynamicState& s) const {
    const int n = spec_.num_elements();
    if (zero_force_) {
        s.compliance = 0.0;
        if (s.force.size() != n) s.force = Eigen::VectorXd::Zero(n);
        s.force_valid = true;
        return;
    }
    FemSolver::Evaluation eval = fem_->evaluate(s.x);
    s.compliance = eval.compliance;
    s.force = -eval.gradient;
    if (!s.force.allFinite() || !std::isfinite(s.compliance))
        throw NumericsError("non-finite compliance force at step " +
                            std::to_string(s.step_count) +
                            " (C = " + std::to_string(s.compliance) + ")");
    s.force_valid = true;
}

void NhcSampler::thermostat_half_step(DynamicState& s, double dt_half) {
    const int m = static_cast<int>(chain_masses_.size());
    const double t = params_.target_temperature;
    const double nf = static_cast<double>(spec_.num_elements() - 1);
    auto& v = s.chain_velocities;
    auto& pos = s.chain_positions;
    const auto& q = chain_masses_;

    double kin2 = 2.0 * s.momenta.squaredNorm();
    auto g = [&](int k) {
        if (k == 0) return (kin2 - nf * t) / q[0];
        return (q[k - 1] * v[k - 1] * v[k - 1] - t) / q[k];
    };

    for (double w : kSyWeights) {
        const double delta = w * dt_half;
        v[m - 1] += 0.5 * delta * g(m - 1);
        for (int k = m - 2; k >= 0; --k) {
            const double a = std::exp(-0.25 * delta * v[k + 1]);
            v[k] = (v[k] * a + 0.5 * delta * g(k)) * a;
        }
        const double scale = std::exp(-delta * v[0]);
        s.momenta *= scale;
        kin2 *= scale * scale;
        for (int k = 0; k < m; ++k) pos[k] += delta * v[k];
        for (int k = 0; k <= m - 2; ++k) {
            const double a = std::exp(-0.25 * delta * v[k + 1]);
            v[k] = (v[k] * a + 0.5 * delta * g(k)) * a;
        }
        v[m - 1] += 0.5 * delta * g(m - 1);
    }
}

void NhcSampler::drift_with_walls(DynamicState& s, double dt) {
    const int n = static_cast<int>(s.x.size());
    auto& x = s.x;
    auto& p = s.momenta;
    std::fill(reflected_.begin(), reflected_.end(), 0);

    x += (2.0 * dt) * p;

    const double tol = std::min(1e-12 * std::max(1.0, volume_target_), 5e-11);
    for (int pass = 0; pass < kMaxWallIterations; ++pass) {
        // Elastic walls at 0 and 1. The momentum reflection happens in the
        // tangent plane of the volume constraint so that sum(p) = 0 and the
        // kinetic energy are both preserved exactly.
        for (int e = 0; e < n; ++e) {
            while (x[e] < 0.0 || x[e] > 1.0) {
                x[e] = (x[e] < 0.0) ? -x[e] : 2.0 - x[e];
                const double pe = p[e];
                if (n > 1) {
                    const double share = 2.0 * pe / (n - 1);
                    p.array() += share;
                }
                p[e] = -pe;
                reflected_[e] = 1;
            }
        }
        const double defect = volume_target_ - x.sum();
        if (std::abs(defect) <= tol) return;

        int nfree = 0;
        for (int e = 0; e < n; ++e)
            if (!reflected_[e]) ++nfree;
        if (nfree == 0)
            throw NumericsError("volume projection infeasible after reflections at step " +
                                std::to_string(s.step_count));
        const double shift = defect / nfree;
        for (int e = 0; e < n; ++e)
            if (!reflected_[e]) x[e] += shift;
    }
    throw NumericsError("wall/volume projection did not converge at step " +
                        std::to_string(s.step_count) + "; reduce the timestep");
}

void NhcSampler::step(DynamicState& s) {
    const double dt = params_.timestep;
    const int n = spec_.num_elements();
    if (!s.force_valid) refresh_force(s);

    thermostat_half_step(s, 0.5 * dt);

    // Position-level multiplier: uniform force shift that keeps the
    // half-step momentum sum (and hence the drifted volume) on constraint.
    const double lambda_r = (s.force.sum() + (2.0 / dt) * s.momenta.sum()) / n;
    s.momenta.array() += (0.5 * dt) * (s.force.array() - lambda_r);

    drift_with_walls(s, dt);
    refresh_force(s);

    const double lambda_v = (s.force.sum() + (2.0 / dt) * s.momenta.sum()) / n;
    s.momenta.array() += (0.5 * dt) * (s.force.array() - lambda_v);
    s.momenta.array() -= s.momenta.mean();

    thermostat_half_step(s, 0.5 * dt);

    s.lagrange_multiplier = lambda_r;
    ++s.step_count;
}

double NhcSampler::hamiltonian(DynamicState& s) const {
    if (!s.force_valid) refresh_force(s);
    return s.momenta.squaredNorm() + s.compliance;
}

double NhcSampler::extended_hamiltonian(DynamicState& s) const {
    const double t = params_.target_temperature;
    double h = hamiltonian(s);
    for (std::size_t k = 0; k < chain_masses_.size(); ++k)
        h += 0.5 * chain_masses_[k] * s.chain_velocities[k] * s.chain_velocities[k];
    h += (spec_.num_elements() - 1) * t * s.chain_positions[0];
    for (std::size_t k = 1; k < chain_masses_.size(); ++k)
        h += t * s.chain_positions[k];
    return h;
}

nlohmann::json state_to_json(const DynamicState& s, const ProblemSpec& spec) {
    nlohmann::json j;
    j["format"] = "morphofilter-state";
    j["version"] = 1;
    j["spec_hash"] = spec_hash(spec);
    j["step_count"] = s.step_count;
    j["lagrange_multiplier"] = s.lagrange_multiplier;
    j["x"] = std::vector<double>(s.x.data(), s.x.data() + s.x.size());
    j["p"] = std::vector<double>(s.momenta.data(), s.momenta.data() + s.momenta.size());
    j["chain_positions"] = s.chain_positions;
    j["chain_velocities"] = s.chain_velocities;
    return j;
}

DynamicState state_from_json(const nlohmann::json& j, const ProblemSpec& spec) {
    if (j.value("format", "") != "morphofilter-state")
        throw SpecError("state checkpoint: unrecognized format tag");
    if (j.at("spec_hash").get<std::string>() != spec_hash(spec))
        throw SpecError("state checkpoint: spec hash mismatch");
    DynamicState s;
    const auto x = j.at("x").get<std::vector<double>>();
    const auto p = j.at("p").get<std::vector<double>>();
    if (static_cast<int>(x.size()) != spec.num_elements() || x.size() != p.size())
        throw SpecError("state checkpoint: field size mismatch");
    s.x = Eigen::Map<const Eigen::VectorXd>(x.data(), x.size());
    s.momenta = Eigen::Map<const Eigen::VectorXd>(p.data(), p.size());
    s.chain_positions = j.at("chain_positions").get<std::vector<double>>();
    s.chain_velocities = j.at("chain_velocities").get<std::vector<double>>();
    if (s.chain_positions.size() != s.chain_velocities.size())
        throw SpecError("state checkpoint: chain size mismatch");
    s.step_count = j.at("step_count").get<long>();
    s.lagrange_multiplier = j.at("lagrange_multiplier").get<double>();
    return s;
}

}  // namespace morphofilter
