// Independent reference implementations used only by tests. These follow
// different derivations and index conventions than the library on purpose.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "morphofilter/analysis.hpp"
#include "morphofilter/fem.hpp"

namespace oracle {

// Classic tabulated 4-node plane-stress element matrix (unit E, unit square).
inline Eigen::Matrix<double, 8, 8> ke_tabulated(double nu) {
    const double a11[4][4] = {{12, 3, -6, -3}, {3, 12, 3, 0}, {-6, 3, 12, -3}, {-3, 0, -3, 12}};
    const double a12[4][4] = {{-6, -3, 0, 3}, {-3, -6, -3, -6}, {0, -3, -6, 3}, {3, -6, 3, -6}};
    const double b11[4][4] = {{-4, 3, -2, 9}, {3, -4, -9, 4}, {-2, -9, -4, -3}, {9, 4, -3, -4}};
    const double b12[4][4] = {{2, -3, 4, -9}, {-3, 2, 9, -2}, {4, 9, 2, 3}, {-9, -2, 3, 2}};
    Eigen::Matrix<double, 8, 8> a, b;
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            a(i, j) = a11[i][j];
            a(i, j + 4) = a12[i][j];
            a(i + 4, j) = a12[j][i];
            a(i + 4, j + 4) = a11[i][j];
            b(i, j) = b11[i][j];
            b(i, j + 4) = b12[i][j];
            b(i + 4, j) = b12[j][i];
            b(i + 4, j + 4) = b11[i][j];
        }
    }
    // The assembled 8x8 is already in the interleaved (ux1,uy1,...,ux4,uy4)
    // order for nodes (BL, BR, TR, TL).
    return (a + nu * b) / (24.0 * (1.0 - nu * nu));
}

// Dense assembly/solve in the 88-line convention: nodes numbered
// column-major and top-down, element DOFs ordered
// (bottom-left, bottom-right, top-right, top-left) as (ux, uy) pairs.
struct DenseProblem {
    int nelx = 1;
    int nely = 1;
    double nu = 0.3;
    double e_solid = 1.0;
    double e_min = 1e-9;
    double penal = 3.0;
    std::vector<int> fixed_dofs;                   // 0-based
    std::vector<std::pair<int, double>> loads;     // 0-based dof -> value

    int node(int col, int row_down) const { return col * (nely + 1) + row_down; }
    int element(int col, int row_down) const { return col * nely + row_down; }
    int ndof() const { return 2 * (nelx + 1) * (nely + 1); }
};

inline Eigen::VectorXd dense_displacement(const DenseProblem& p, const Eigen::VectorXd& x_phys) {
    const Eigen::Matrix<double, 8, 8> ke = ke_tabulated(p.nu);
    const int ndof = p.ndof();
    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(ndof, ndof);
    for (int col = 0; col < p.nelx; ++col) {
        for (int row = 0; row < p.nely; ++row) {
            const int n1 = p.node(col, row);         // top-left
            const int bl = n1 + 1;
            const int br = n1 + p.nely + 2;
            const int tr = n1 + p.nely + 1;
            const int dofs[8] = {2 * bl, 2 * bl + 1, 2 * br, 2 * br + 1,
                                 2 * tr, 2 * tr + 1, 2 * n1, 2 * n1 + 1};
            const double d = x_phys[p.element(col, row)];
            const double coef = p.e_min + std::pow(d, p.penal) * (p.e_solid - p.e_min);
            for (int i = 0; i < 8; ++i)
                for (int j = 0; j < 8; ++j) k(dofs[i], dofs[j]) += coef * ke(i, j);
        }
    }
    Eigen::VectorXd f = Eigen::VectorXd::Zero(ndof);
    for (const auto& [dof, value] : p.loads) f[dof] += value;

    std::vector<bool> fixed(ndof, false);
    for (int d : p.fixed_dofs) fixed[d] = true;
    std::vector<int> free;
    for (int d = 0; d < ndof; ++d)
        if (!fixed[d]) free.push_back(d);

    Eigen::MatrixXd kf(free.size(), free.size());
    Eigen::VectorXd ff(free.size());
    for (std::size_t i = 0; i < free.size(); ++i) {
        ff[static_cast<int>(i)] = f[free[i]];
        for (std::size_t j = 0; j < free.size(); ++j)
            kf(static_cast<int>(i), static_cast<int>(j)) = k(free[i], free[j]);
    }
    const Eigen::VectorXd uf = kf.ldlt().solve(ff);
    Eigen::VectorXd u = Eigen::VectorXd::Zero(ndof);
    for (std::size_t i = 0; i < free.size(); ++i) u[free[i]] = uf[static_cast<int>(i)];
    return u;
}

inline double dense_compliance(const DenseProblem& p, const Eigen::VectorXd& x_phys) {
    const Eigen::VectorXd u = dense_displacement(p, x_phys);
    double c = 0.0;
    for (const auto& [dof, value] : p.loads) c += value * u[dof];
    return c;
}

// Maps a library cantilever-style spec (y up) onto the oracle convention
// (y down) by mirroring: node (ix, iy)  ->  column ix, row nely - iy.
inline DenseProblem mirror_problem(const morphofilter::ProblemSpec& spec) {
    DenseProblem p;
    p.nelx = spec.nelx;
    p.nely = spec.nely;
    p.nu = spec.poisson_ratio;
    p.e_solid = spec.youngs_modulus_solid;
    p.e_min = spec.youngs_modulus_min;
    p.penal = spec.penalization;
    auto map_dof = [&](int dof) {
        const int n = dof / 2, comp = dof % 2;
        const int ix = n / (spec.nely + 1), iy = n % (spec.nely + 1);
        return 2 * p.node(ix, spec.nely - iy) + comp;
    };
    for (int d : spec.supports) p.fixed_dofs.push_back(map_dof(d));
    for (const auto& l : spec.loads) {
        const double sign = (l.dof % 2 == 1) ? -1.0 : 1.0;  // mirror flips uy
        p.loads.emplace_back(map_dof(l.dof), sign * l.value);
    }
    return p;
}

inline Eigen::VectorXd mirror_field(const morphofilter::ProblemSpec& spec,
                                    const Eigen::VectorXd& x) {
    Eigen::VectorXd out(x.size());
    for (int ex = 0; ex < spec.nelx; ++ex)
        for (int ey = 0; ey < spec.nely; ++ey)
            out[ex * spec.nely + (spec.nely - 1 - ey)] = x[spec.element_index(ex, ey)];
    return out;
}

// The library objective evaluated with a long-double dense solve. Same
// mathematical function as FemSolver::compliance (identical filter and
// element matrix), but with far smaller roundoff -- the baseline for
// central-difference gradient checks.
inline long double precise_compliance(const morphofilter::ProblemSpec& spec,
                                      const morphofilter::FemSolver& fem,
                                      const Eigen::VectorXd& x) {
    using MatLD = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
    using VecLD = Eigen::Matrix<long double, Eigen::Dynamic, 1>;
    const Eigen::VectorXd xf = fem.apply_filter(x);
    const Eigen::Matrix<double, 8, 8> ke = morphofilter::FemSolver::element_stiffness(
        spec.poisson_ratio);

    const int ndof = spec.num_dofs();
    std::vector<bool> fixed(ndof, false);
    for (int d : spec.supports) fixed[d] = true;
    std::vector<int> remap(ndof, -1);
    int nfree = 0;
    for (int d = 0; d < ndof; ++d)
        if (!fixed[d]) remap[d] = nfree++;

    MatLD k = MatLD::Zero(nfree, nfree);
    for (int ex = 0; ex < spec.nelx; ++ex) {
        for (int ey = 0; ey < spec.nely; ++ey) {
            const int n1 = spec.node_index(ex, ey);
            const int n2 = spec.node_index(ex + 1, ey);
            const int n3 = spec.node_index(ex + 1, ey + 1);
            const int n4 = spec.node_index(ex, ey + 1);
            const int dofs[8] = {2 * n1, 2 * n1 + 1, 2 * n2, 2 * n2 + 1,
                                 2 * n3, 2 * n3 + 1, 2 * n4, 2 * n4 + 1};
            const double d = xf[spec.element_index(ex, ey)];
            const long double coef =
                static_cast<long double>(spec.youngs_modulus_min) +
                std::pow(static_cast<long double>(d),
                         static_cast<long double>(spec.penalization)) *
                    (spec.youngs_modulus_solid - spec.youngs_modulus_min);
            for (int i = 0; i < 8; ++i) {
                if (remap[dofs[i]] < 0) continue;
                for (int j = 0; j < 8; ++j)
                    if (remap[dofs[j]] >= 0)
                        k(remap[dofs[i]], remap[dofs[j]]) += coef * static_cast<long double>(ke(i, j));
            }
        }
    }
    VecLD f = VecLD::Zero(nfree);
    for (const auto& l : spec.loads)
        if (remap[l.dof] >= 0) f[remap[l.dof]] += l.value;
    const VecLD u = k.ldlt().solve(f);
    return f.dot(u);
}

// Composite-Simpson quadrature of the piecewise density of states, used to
// cross-check the closed-form partition function. Integrals are scaled by
// exp(beta*c_min) to stay in range.
inline double omega_value(const morphofilter::TheoryModel& m, double c) {
    const double a_lo = m.n_below / m.nu;
    const double a_hi = m.n_above / m.nu;
    if (c <= m.c_min) return 0.0;
    if (c < m.c_star) return m.gamma_below * std::pow(c - m.c_min, a_lo - 1.0);
    return m.gamma_below * std::pow(m.c_star - m.c_min, a_lo - 1.0) +
           m.gamma_above * std::pow(c - m.c_star, a_hi - 1.0);
}

template <typename F>
double simpson(F&& f, double a, double b, int panels) {
    const double h = (b - a) / panels;
    long double acc = f(a) + f(b);
    for (int i = 1; i < panels; ++i) acc += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return static_cast<double>(acc * h / 3.0);
}

inline double quad_partition_scaled(const morphofilter::TheoryModel& m, double beta,
                                    int panels = 400000) {
    const double a_hi = m.n_above / m.nu;
    const double tail = (40.0 + 10.0 * a_hi) / beta;
    auto f = [&](double c) { return std::exp(-beta * (c - m.c_min)) * omega_value(m, c); };
    // split at the kink; panel counts kept even
    const int p1 = panels / 2 + (panels / 2) % 2;
    return simpson(f, m.c_min, m.c_star, p1) + simpson(f, m.c_star, m.c_star + tail, p1);
}

inline double quad_mean_compliance(const morphofilter::TheoryModel& m, double beta,
                                   int panels = 400000) {
    auto f = [&](double c) { return std::exp(-beta * (c - m.c_min)) * omega_value(m, c); };
    auto g = [&](double c) { return c * f(c); };
    const double a_hi = m.n_above / m.nu;
    const double tail = (40.0 + 10.0 * a_hi) / beta;
    const int p1 = panels / 2 + (panels / 2) % 2;
    const double z = simpson(f, m.c_min, m.c_star, p1) + simpson(f, m.c_star, m.c_star + tail, p1);
    const double zc = simpson(g, m.c_min, m.c_star, p1) + simpson(g, m.c_star, m.c_star + tail, p1);
    return zc / z;
}

// Exact search over a discretized density grid restricted to the volume
// shell. Compliance is monotone decreasing in every density, so the value
// with all unassigned cells filled bounds any completion from below; the
// search is exhaustive up to that provably safe pruning.
struct DiscreteSearchResult {
    double best_compliance = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_x;
    long nodes = 0;
    bool completed = false;
};

inline DiscreteSearchResult discrete_exhaustive_minimum(
    const morphofilter::ProblemSpec& spec, int levels, double incumbent, long node_budget) {
    namespace mf = morphofilter;
    mf::FemSolver fem(spec);
    const int n = spec.num_elements();
    const int lmax = levels - 1;
    const double target_units_d = spec.target_volume() * lmax;
    const long target_units = std::lround(target_units_d);
    if (std::abs(target_units_d - target_units) > 1e-9)
        throw std::runtime_error("discrete search: volume shell not representable");

    // assign critical cells first so bad branches die near the root
    Eigen::VectorXd x0 = mf::uniform_field(n, spec.volume_fraction);
    const Eigen::VectorXd g = fem.evaluate(x0).gradient;
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return std::abs(g[a]) > std::abs(g[b]); });

    DiscreteSearchResult result;
    result.best_compliance = incumbent;
    Eigen::VectorXd x = Eigen::VectorXd::Ones(n);

    // DFS with explicit stack of (depth, level choice)
    std::function<bool(int, long)> visit = [&](int depth, long units_left) -> bool {
        if (result.nodes >= node_budget) return false;
        if (depth == n) {
            if (units_left != 0) return true;
            ++result.nodes;
            const double c = fem.compliance(x);
            if (c < result.best_compliance) {
                result.best_compliance = c;
                result.best_x = x;
            }
            return true;
        }
        const int cell = order[depth];
        const long cells_left_after = n - depth - 1;
        for (int k = lmax; k >= 0; --k) {
            const long left = units_left - k;
            if (left < 0 || left > cells_left_after * lmax) continue;
            x[cell] = static_cast<double>(k) / lmax;
            ++result.nodes;
            // all deeper cells still sit at 1: a lower bound for the subtree
            const double bound = fem.compliance(x);
            if (bound < result.best_compliance) {
                if (!visit(depth + 1, left)) {
                    x[cell] = 1.0;
                    return false;
                }
            }
            x[cell] = 1.0;
        }
        return true;
    };
    result.completed = visit(0, target_units);
    return result;
}

// Plain enumeration for tiny meshes, to validate the pruned search.
inline DiscreteSearchResult discrete_enumerate_minimum(const morphofilter::ProblemSpec& spec,
                                                       int levels) {
    namespace mf = morphofilter;
    mf::FemSolver fem(spec);
    const int n = spec.num_elements();
    const int lmax = levels - 1;
    const long target_units = std::lround(spec.target_volume() * lmax);
    DiscreteSearchResult result;
    Eigen::VectorXd x(n);
    std::vector<int> k(n, 0);
    for (;;) {
        long sum = 0;
        for (int i = 0; i < n; ++i) sum += k[i];
        if (sum == target_units) {
            for (int i = 0; i < n; ++i) x[i] = static_cast<double>(k[i]) / lmax;
            ++result.nodes;
            const double c = fem.compliance(x);
            if (c < result.best_compliance) {
                result.best_compliance = c;
                result.best_x = x;
            }
        }
        int i = 0;
        while (i < n && ++k[i] > lmax) k[i++] = 0;
        if (i == n) break;
    }
    result.completed = true;
    return result;
}

}  // namespace oracle
