#include "morphofilter/fem.hpp"

#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>

namespace morphofilter {

namespace {

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string to_hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

void ProblemSpec::validate() const {
    if (nelx < 1) throw SpecError("nelx: must be >= 1");
    if (nely < 1) throw SpecError("nely: must be >= 1");
    if (!(volume_fraction > 0.0 && volume_fraction < 1.0))
        throw SpecError("vol_frac: must lie strictly between 0 and 1");
    if (!(youngs_modulus_min > 0.0))
        throw SpecError("Emin: must be positive");
    if (!(youngs_modulus_min < youngs_modulus_solid))
        throw SpecError("Emin: must be smaller than E");
    if (!(poisson_ratio > -1.0 && poisson_ratio < 0.5))
        throw SpecError("nu: must lie in (-1, 0.5)");
    if (!(penalization >= 1.0)) throw SpecError("penal: must be >= 1");
    if (!(filter_radius >= 1.0)) throw SpecError("rmin: must be >= 1");
    if (loads.empty()) throw SpecError("loads: must not be empty");
    const int ndof = num_dofs();
    for (int d : supports)
        if (d < 0 || d >= ndof) throw SpecError("supports: DOF index out of range");
    for (const auto& l : loads)
        if (l.dof < 0 || l.dof >= ndof) throw SpecError("loads: DOF index out of range");
}

ProblemSpec cantilever_spec(int nelx, int nely, double volume_fraction,
                            double filter_radius) {
    ProblemSpec spec;
    spec.nelx = nelx;
    spec.nely = nely;
    spec.volume_fraction = volume_fraction;
    spec.filter_radius = filter_radius;
    spec.bc_preset = "cantilever";
    for (int iy = 0; iy <= nely; ++iy) {
        const int n = spec.node_index(0, iy);
        spec.supports.push_back(2 * n);
        spec.supports.push_back(2 * n + 1);
    }
    const int tip = spec.node_index(nelx, nely / 2);
    spec.loads.push_back({2 * tip + 1, -1.0});
    spec.validate();
    return spec;
}

nlohmann::json problem_to_json(const ProblemSpec& spec) {
    nlohmann::json j;
    j["nelx"] = spec.nelx;
    j["nely"] = spec.nely;
    j["vol_frac"] = spec.volume_fraction;
    j["penal"] = spec.penalization;
    j["rmin"] = spec.filter_radius;
    j["E"] = spec.youngs_modulus_solid;
    j["Emin"] = spec.youngs_modulus_min;
    j["nu"] = spec.poisson_ratio;
    if (!spec.bc_preset.empty()) {
        j["bc_preset"] = spec.bc_preset;
    } else {
        j["supports"] = spec.supports;
        nlohmann::json loads = nlohmann::json::array();
        for (const auto& l : spec.loads) loads.push_back({l.dof, l.value});
        j["loads"] = loads;
    }
    return j;
}

ProblemSpec problem_from_json(const nlohmann::json& j) {
    if (!j.contains("nelx")) throw SpecError("nelx: missing");
    if (!j.contains("nely")) throw SpecError("nely: missing");
    const int nelx = j.at("nelx").get<int>();
    const int nely = j.at("nely").get<int>();

    ProblemSpec spec;
    if (j.contains("bc_preset")) {
        const std::string preset = j.at("bc_preset").get<std::string>();
        if (preset != "cantilever")
            throw SpecError("bc_preset: unknown preset '" + preset + "'");
        spec = cantilever_spec(nelx, nely);
    } else {
        spec.nelx = nelx;
        spec.nely = nely;
        if (!j.contains("supports")) throw SpecError("supports: missing (no bc_preset given)");
        if (!j.contains("loads")) throw SpecError("loads: missing (no bc_preset given)");
        spec.supports = j.at("supports").get<std::vector<int>>();
        for (const auto& l : j.at("loads")) {
            if (!l.is_array() || l.size() != 2)
                throw SpecError("loads: entries must be [dof, value] pairs");
            spec.loads.push_back({l.at(0).get<int>(), l.at(1).get<double>()});
        }
    }
    if (j.contains("vol_frac")) spec.volume_fraction = j.at("vol_frac").get<double>();
    if (j.contains("penal")) spec.penalization = j.at("penal").get<double>();
    if (j.contains("rmin")) spec.filter_radius = j.at("rmin").get<double>();
    if (j.contains("E")) spec.youngs_modulus_solid = j.at("E").get<double>();
    if (j.contains("Emin")) spec.youngs_modulus_min = j.at("Emin").get<double>();
    if (j.contains("nu")) spec.poisson_ratio = j.at("nu").get<double>();
    spec.validate();
    return spec;
}

std::string spec_hash(const ProblemSpec& spec) {
    return to_hex(fnv1a64(problem_to_json(spec).dump()));
}

DesignField uniform_field(int n, double value) {
    return DesignField::Constant(n, value);
}

bool in_unit_box(const DesignField& x, double tol) {
    return (x.array() >= -tol).all() && (x.array() <= 1.0 + tol).all();
}

Eigen::Matrix<double, 8, 8> FemSolver::element_stiffness(double poisson_ratio) {
    const double nu = poisson_ratio;
    Eigen::Matrix3d dmat;
    dmat << 1.0, nu, 0.0,
            nu, 1.0, 0.0,
            0.0, 0.0, (1.0 - nu) / 2.0;
    dmat /= (1.0 - nu * nu);

    Eigen::Matrix<double, 8, 8> ke = Eigen::Matrix<double, 8, 8>::Zero();
    const double g = 1.0 / std::sqrt(3.0);
    const double pts[4][2] = {{-g, -g}, {g, -g}, {g, g}, {-g, g}};
    for (const auto& pt : pts) {
        const double xi = pt[0], eta = pt[1];
        // dN/dxi, dN/deta for nodes (BL, BR, TR, TL); unit element so
        // dN/dx = 2 dN/dxi and detJ = 1/4.
        const double dxi[4] = {-(1 - eta) / 4, (1 - eta) / 4, (1 + eta) / 4, -(1 + eta) / 4};
        const double deta[4] = {-(1 - xi) / 4, -(1 + xi) / 4, (1 + xi) / 4, (1 - xi) / 4};
        Eigen::Matrix<double, 3, 8> b = Eigen::Matrix<double, 3, 8>::Zero();
        for (int a = 0; a < 4; ++a) {
            const double dndx = 2.0 * dxi[a];
            const double dndy = 2.0 * deta[a];
            b(0, 2 * a) = dndx;
            b(1, 2 * a + 1) = dndy;
            b(2, 2 * a) = dndy;
            b(2, 2 * a + 1) = dndx;
        }
        ke += 0.25 * b.transpose() * dmat * b;
    }
    return ke;
}

FemSolver::FemSolver(const ProblemSpec& spec) : spec_(spec) {
    spec_.validate();
    ke_ = element_stiffness(spec_.poisson_ratio);

    element_dofs_.resize(spec_.num_elements());
    for (int ex = 0; ex < spec_.nelx; ++ex) {
        for (int ey = 0; ey < spec_.nely; ++ey) {
            const int n1 = spec_.node_index(ex, ey);
            const int n2 = spec_.node_index(ex + 1, ey);
            const int n3 = spec_.node_index(ex + 1, ey + 1);
            const int n4 = spec_.node_index(ex, ey + 1);
            element_dofs_[spec_.element_index(ex, ey)] = {
                2 * n1, 2 * n1 + 1, 2 * n2, 2 * n2 + 1,
                2 * n3, 2 * n3 + 1, 2 * n4, 2 * n4 + 1};
        }
    }

    build_filter();
    build_structure();

    // Rank check: factor once at the uniform target density. A rigid-body
    // mode either fails the Cholesky outright or leaves a negligible pivot.
    assemble(apply_filter(uniform_field(spec_.num_elements(), spec_.volume_fraction)));
    const int n = static_cast<int>(free_dofs_.size());
    const int ldab = half_bandwidth_ + 1;
    if (LAPACKE_dpbtrf(LAPACK_COL_MAJOR, 'L', n, half_bandwidth_, band_.data(), ldab) != 0)
        throw SpecError("supports: stiffness factorization failed, system is singular");
    double dmin = band_[0], dmax = band_[0];
    for (int j = 1; j < n; ++j) {
        dmin = std::min(dmin, band_[static_cast<std::size_t>(j) * ldab]);
        dmax = std::max(dmax, band_[static_cast<std::size_t>(j) * ldab]);
    }
    if (dmin * dmin <= 1e-10 * dmax * dmax)
        throw SpecError("supports: do not remove all rigid-body modes, system is singular");
}

void FemSolver::build_filter() {
    const double rmin = spec_.filter_radius;
    const int reach = static_cast<int>(std::ceil(rmin)) - 1;
    std::vector<Eigen::Triplet<double>> trips;
    Eigen::VectorXd row_sums = Eigen::VectorXd::Zero(spec_.num_elements());
    for (int ex = 0; ex < spec_.nelx; ++ex) {
        for (int ey = 0; ey < spec_.nely; ++ey) {
            const int e = spec_.element_index(ex, ey);
            for (int dx = -reach; dx <= reach; ++dx) {
                for (int dy = -reach; dy <= reach; ++dy) {
                    const int ix = ex + dx, iy = ey + dy;
                    if (ix < 0 || ix >= spec_.nelx || iy < 0 || iy >= spec_.nely) continue;
                    const double w = rmin - std::sqrt(double(dx * dx + dy * dy));
                    if (w <= 0.0) continue;
                    trips.emplace_back(e, spec_.element_index(ix, iy), w);
                    row_sums[e] += w;
                }
            }
        }
    }
    filter_weights_.resize(spec_.num_elements(), spec_.num_elements());
    filter_weights_.setFromTriplets(trips.begin(), trips.end());
    filter_weights_.makeCompressed();
    filter_row_sums_ = row_sums;
}

void FemSolver::build_structure() {
    const int ndof = spec_.num_dofs();
    std::vector<bool> fixed(ndof, false);
    for (int d : spec_.supports) fixed[d] = true;

    dof_to_free_.assign(ndof, -1);
    for (int d = 0; d < ndof; ++d) {
        if (!fixed[d]) {
            dof_to_free_[d] = static_cast<int>(free_dofs_.size());
            free_dofs_.push_back(d);
        }
    }
    if (static_cast<int>(spec_.supports.size()) < 3 || free_dofs_.empty())
        throw SpecError("supports: too few constraints, stiffness system is singular");

    f_reduced_ = Eigen::VectorXd::Zero(free_dofs_.size());
    for (const auto& l : spec_.loads) {
        const int fi = dof_to_free_[l.dof];
        if (fi >= 0) f_reduced_[fi] += l.value;
    }

    // Lower band storage: with column-by-column node numbering the DOF span
    // inside an element bounds the bandwidth at 2*nely + 5.
    half_bandwidth_ = 0;
    for (const auto& dofs : element_dofs_) {
        for (int i = 0; i < 8; ++i) {
            const int fi = dof_to_free_[dofs[i]];
            if (fi < 0) continue;
            for (int j = 0; j < 8; ++j) {
                const int fj = dof_to_free_[dofs[j]];
                if (fj >= 0) half_bandwidth_ = std::max(half_bandwidth_, fi - fj);
            }
        }
    }
    const int ldab = half_bandwidth_ + 1;
    band_.assign(static_cast<std::size_t>(ldab) * free_dofs_.size(), 0.0);

    // Per element, merge the unit-modulus contributions into band slots once;
    // assembly is then a single fused scatter per element.
    band_scatter_.resize(element_dofs_.size());
    for (std::size_t e = 0; e < element_dofs_.size(); ++e) {
        std::map<int, double> merged;
        for (int i = 0; i < 8; ++i) {
            const int fi = dof_to_free_[element_dofs_[e][i]];
            if (fi < 0) continue;
            for (int j = 0; j < 8; ++j) {
                const int fj = dof_to_free_[element_dofs_[e][j]];
                if (fj < 0 || fi < fj) continue;
                merged[fj * ldab + (fi - fj)] += ke_(i, j);
            }
        }
        band_scatter_[e].reserve(merged.size());
        for (const auto& [slot, value] : merged) band_scatter_[e].push_back({slot, value});
    }

    u_full_ = Eigen::VectorXd::Zero(ndof);
}

double FemSolver::simp_modulus(double d) const {
    return spec_.youngs_modulus_min +
           std::pow(d, spec_.penalization) *
               (spec_.youngs_modulus_solid - spec_.youngs_modulus_min);
}

double FemSolver::simp_modulus_derivative(double d) const {
    return spec_.penalization * std::pow(d, spec_.penalization - 1.0) *
           (spec_.youngs_modulus_solid - spec_.youngs_modulus_min);
}

void FemSolver::assemble(const DesignField& x_phys) {
    std::memset(band_.data(), 0, band_.size() * sizeof(double));
    for (std::size_t e = 0; e < element_dofs_.size(); ++e) {
        const double coef = simp_modulus(x_phys[static_cast<int>(e)]);
        for (const BandEntry& entry : band_scatter_[e]) band_[entry.slot] += coef * entry.value;
    }
}

void FemSolver::factor_and_solve(const DesignField& x_phys) {
    assemble(x_phys);
    const int n = static_cast<int>(free_dofs_.size());
    const int ldab = half_bandwidth_ + 1;
    if (LAPACKE_dpbtrf(LAPACK_COL_MAJOR, 'L', n, half_bandwidth_, band_.data(), ldab) != 0)
        throw NumericsError("stiffness factorization failed");
    u_reduced_ = f_reduced_;
    if (LAPACKE_dpbtrs(LAPACK_COL_MAJOR, 'L', n, half_bandwidth_, 1, band_.data(), ldab,
                       u_reduced_.data(), n) != 0 ||
        !u_reduced_.allFinite())
        throw NumericsError("stiffness solve failed");
}

DesignField FemSolver::apply_filter(const DesignField& x) const {
    return (filter_weights_ * x).cwiseQuotient(filter_row_sums_);
}

Eigen::VectorXd FemSolver::filter_chain_rule(const Eigen::VectorXd& grad_filtered) const {
    return filter_weights_ * grad_filtered.cwiseQuotient(filter_row_sums_);
}

DisplacementField FemSolver::displacement(const DesignField& x) {
    factor_and_solve(apply_filter(x));
    u_full_.setZero();
    for (std::size_t i = 0; i < free_dofs_.size(); ++i)
        u_full_[free_dofs_[i]] = u_reduced_[static_cast<int>(i)];
    return u_full_;
}

double FemSolver::compliance(const DesignField& x) {
    factor_and_solve(apply_filter(x));
    return f_reduced_.dot(u_reduced_);
}

FemSolver::Evaluation FemSolver::evaluate(const DesignField& x) {
    const DesignField x_phys = apply_filter(x);
    factor_and_solve(x_phys);

    u_full_.setZero();
    for (std::size_t i = 0; i < free_dofs_.size(); ++i)
        u_full_[free_dofs_[i]] = u_reduced_[static_cast<int>(i)];

    Evaluation out;
    out.compliance = f_reduced_.dot(u_reduced_);

    Eigen::VectorXd grad_filtered(spec_.num_elements());
    Eigen::Matrix<double, 8, 1> ue;
    for (std::size_t e = 0; e < element_dofs_.size(); ++e) {
        for (int i = 0; i < 8; ++i) ue[i] = u_full_[element_dofs_[e][i]];
        const double energy = ue.dot(ke_ * ue);
        grad_filtered[static_cast<int>(e)] =
            -simp_modulus_derivative(x_phys[static_cast<int>(e)]) * energy;
    }
    out.gradient = filter_chain_rule(grad_filtered);
    return out;
}

}  // namespace morphofilter
