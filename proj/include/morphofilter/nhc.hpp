#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "morphofilter/fem.hpp"

namespace morphofilter {

/// Constant-temperature control for the lifted density dynamics.
/// Kinetic convention: the canonical weight is exp(-sum_e p_e^2 / T), so
/// velocities are xdot_e = 2 p_e and equipartition gives <p_e^2> = T/2.
struct ThermostatParams {
    double target_temperature = 1.0;  // units of compliance
    int chain_length = 2;
    double timestep = 0.01;
    double relaxation_time = 1.0;      // tau; defaults to 100*dt
    std::vector<double> masses;        // empty -> Q1 = N*T*tau^2, Qk = T*tau^2

    void validate() const;
    std::vector<double> chain_masses(int n_sites) const;
};

struct DynamicState {
    DesignField x;
    Eigen::VectorXd momenta;
    std::vector<double> chain_positions;
    std::vector<double> chain_velocities;
    double lagrange_multiplier = 0.0;  // position-level multiplier, force units
    long step_count = 0;

    // Force cache for velocity-Verlet reuse; refreshed lazily.
    bool force_valid = false;
    double compliance = 0.0;       // C at x (filtered field)
    Eigen::VectorXd force;         // -dC/dx at x
};

/// Minimal-norm shift onto the plane sum(x) = v0, restricted to entries that
/// can move without leaving [0,1]; saturated entries are frozen iteratively.
Eigen::VectorXd project_volume_constraint(Eigen::VectorXd x, double v0);

/// Nose-Hoover-chain sampler for the volume-constrained density ensemble.
/// One instance per trajectory; stepping is sequential.
class NhcSampler {
public:
    NhcSampler(const ProblemSpec& spec, ThermostatParams params,
               bool zero_force = false);

    const ProblemSpec& spec() const { return spec_; }
    const ThermostatParams& params() const { return params_; }
    FemSolver& fem() { return *fem_; }

    /// Re-targets the thermostat (masses re-derived unless given explicitly).
    void set_temperature(double t);

    /// Uniform densities at the volume fraction, momenta drawn from the
    /// p^2-Gaussian at T and projected to sum zero, chain at rest.
    DynamicState initialize(std::uint64_t seed) const;

    /// One time-reversible step: half thermostat, constrained velocity
    /// Verlet (reflecting walls at 0 and 1), half thermostat.
    void step(DynamicState& s);

    /// H = sum p^2 + C(x).
    double hamiltonian(DynamicState& s) const;

    /// H + sum_k Q_k v_k^2 / 2 + (N-1) T s_1 + sum_{k>=2} T s_k.
    /// Conserved by the dynamics; monitored for integrator health.
    double extended_hamiltonian(DynamicState& s) const;

    void refresh_force(DynamicState& s) const;

private:
    void thermostat_half_step(DynamicState& s, double dt_half);
    void drift_with_walls(DynamicState& s, double dt);

    ProblemSpec spec_;
    ThermostatParams params_;
    bool zero_force_;
    std::unique_ptr<FemSolver> fem_;
    std::vector<double> chain_masses_;
    double volume_target_;

    // scratch for the wall/projection loop
    std::vector<char> reflected_;
};

nlohmann::json state_to_json(const DynamicState& s, const ProblemSpec& spec);
DynamicState state_from_json(const nlohmann::json& j, const ProblemSpec& spec);

}  // namespace morphofilter
