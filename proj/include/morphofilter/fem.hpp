#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace morphofilter {

// Densities live on elements, displacements on nodal DOFs.
using DesignField = Eigen::VectorXd;
using DisplacementField = Eigen::VectorXd;

/// Invalid problem definition or configuration.
class SpecError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Failure inside a numerical routine (singular system, diverged step, ...).
class NumericsError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct PointLoad {
    int dof = 0;
    double value = 0.0;
};

/// Compliance-minimization problem on a regular grid of unit square
/// bilinear elements (plane stress). Nodes are indexed column by column,
/// node(ix, iy) = ix*(nely+1) + iy with iy increasing upward; each node
/// carries DOFs (2n, 2n+1) = (ux, uy). Element(ex, ey) = ex*nely + ey.
struct ProblemSpec {
    int nelx = 1;
    int nely = 1;
    double volume_fraction = 0.5;
    double youngs_modulus_solid = 1.0;
    double youngs_modulus_min = 1e-9;
    double poisson_ratio = 0.3;
    double penalization = 3.0;
    double filter_radius = 1.5;
    std::vector<int> supports;   // fixed DOF indices
    std::vector<PointLoad> loads;
    std::string bc_preset;       // "cantilever" or empty when supports/loads are explicit

    int num_elements() const { return nelx * nely; }
    int num_nodes() const { return (nelx + 1) * (nely + 1); }
    int num_dofs() const { return 2 * num_nodes(); }
    double target_volume() const { return volume_fraction * num_elements(); }

    int node_index(int ix, int iy) const { return ix * (nely + 1) + iy; }
    int element_index(int ex, int ey) const { return ex * nely + ey; }

    /// Field-level checks; throws SpecError naming the offending field.
    /// The stiffness rank check happens in the FemSolver constructor.
    void validate() const;
};

/// Left edge fully fixed, unit downward point load at mid-height of the
/// right edge.
ProblemSpec cantilever_spec(int nelx, int nely, double volume_fraction = 0.5,
                            double filter_radius = 1.5);

nlohmann::json problem_to_json(const ProblemSpec& spec);
ProblemSpec problem_from_json(const nlohmann::json& j);

/// FNV-1a over the canonical JSON form, as a fixed-width hex string.
std::string spec_hash(const ProblemSpec& spec);

DesignField uniform_field(int n, double value);
bool in_unit_box(const DesignField& x, double tol = 0.0);

/// Assembles and solves K(x)u = f with SIMP interpolation
/// E(d) = Emin + d^p (E - Emin) on the filtered density field.
/// One instance per thread: the factorization workspace is reused
/// between calls and is not internally synchronized.
class FemSolver {
public:
    explicit FemSolver(const ProblemSpec& spec);

    const ProblemSpec& spec() const { return spec_; }

    /// Conic density filter: xf_e = sum_i w_ei x_i / sum_i w_ei with
    /// w_ei = max(0, rmin - dist(e,i)). Identity when rmin = 1.
    DesignField apply_filter(const DesignField& x) const;

    /// Maps a gradient w.r.t. the filtered field back to the raw field.
    Eigen::VectorXd filter_chain_rule(const Eigen::VectorXd& grad_filtered) const;

    /// Full nodal displacement vector (fixed DOFs zero).
    DisplacementField displacement(const DesignField& x);

    double compliance(const DesignField& x);

    struct Evaluation {
        double compliance = 0.0;
        Eigen::VectorXd gradient;  // dC/dx_e w.r.t. the raw field, each <= 0
    };
    Evaluation evaluate(const DesignField& x);

    /// Unit-modulus element stiffness (2x2 Gauss, plane stress, unit square).
    static Eigen::Matrix<double, 8, 8> element_stiffness(double poisson_ratio);

    int num_free_dofs() const { return static_cast<int>(free_dofs_.size()); }

private:
    void build_filter();
    void build_structure();
    void assemble(const DesignField& x_phys);
    void factor_and_solve(const DesignField& x_phys);
    double simp_modulus(double d) const;
    double simp_modulus_derivative(double d) const;

    ProblemSpec spec_;
    Eigen::Matrix<double, 8, 8> ke_;
    std::vector<std::array<int, 8>> element_dofs_;

    Eigen::SparseMatrix<double> filter_weights_;  // symmetric conic weights
    Eigen::VectorXd filter_row_sums_;

    std::vector<int> free_dofs_;
    std::vector<int> dof_to_free_;  // -1 for fixed DOFs
    Eigen::VectorXd f_reduced_;

    // Reduced stiffness in LAPACK lower band storage, refilled and factored
    // in place by dpbtrf on every call (densities change every step).
    int half_bandwidth_ = 0;
    std::vector<double> band_;
    struct BandEntry {
        int slot;
        double value;
    };
    std::vector<std::vector<BandEntry>> band_scatter_;  // per element, lower triangle

    Eigen::VectorXd u_reduced_;
    Eigen::VectorXd u_full_;
};

}  // namespace morphofilter
