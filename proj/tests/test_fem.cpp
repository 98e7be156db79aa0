#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "morphofilter/fem.hpp"
#include "oracles.hpp"

using namespace morphofilter;

namespace {

DesignField random_field(int n, std::uint64_t seed, double lo = 0.1, double hi = 0.9) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    DesignField x(n);
    for (int e = 0; e < n; ++e) x[e] = u(rng);
    return x;
}

ProblemSpec zero_load_spec(int nelx, int nely) {
    ProblemSpec spec = cantilever_spec(nelx, nely);
    for (auto& l : spec.loads) l.value = 0.0;
    return spec;
}

int mirrored_element(const ProblemSpec& spec, int e) {
    const int ex = e / spec.nely, ey = e % spec.nely;
    return spec.element_index(ex, spec.nely - 1 - ey);
}

}  // namespace

TEST_CASE("element stiffness matches the tabulated closed form") {
    for (double nu : {0.0, 0.25, 0.3, 0.4}) {
        const auto quad = FemSolver::element_stiffness(nu);
        const auto table = oracle::ke_tabulated(nu);
        CHECK((quad - table).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("element stiffness has the rigid-body null space") {
    const auto ke = FemSolver::element_stiffness(0.3);
    Eigen::Matrix<double, 8, 1> tx, ty, rot;
    // nodes (BL, BR, TR, TL) at (0,0), (1,0), (1,1), (0,1)
    const double xs[4] = {0, 1, 1, 0}, ys[4] = {0, 0, 1, 1};
    for (int a = 0; a < 4; ++a) {
        tx[2 * a] = 1;
        tx[2 * a + 1] = 0;
        ty[2 * a] = 0;
        ty[2 * a + 1] = 1;
        rot[2 * a] = -ys[a];
        rot[2 * a + 1] = xs[a];
    }
    CHECK((ke * tx).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((ke * ty).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((ke * rot).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("zero load gives zero displacement, compliance, gradient") {
    ProblemSpec spec = zero_load_spec(4, 2);
    FemSolver fem(spec);
    const DesignField x = uniform_field(spec.num_elements(), 0.5);
    CHECK(fem.displacement(x).cwiseAbs().maxCoeff() == 0.0);
    CHECK(fem.compliance(x) == 0.0);
    CHECK(fem.evaluate(x).gradient.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("1x1 cantilever matches a dense solve of the element system") {
    ProblemSpec spec = cantilever_spec(1, 1, 0.5, 1.0);
    FemSolver fem(spec);
    const DesignField x = uniform_field(1, 1.0);
    const DisplacementField u = fem.displacement(x);

    // Independent dense path: my element matrix, fixed nodes (0,0) and (0,1),
    // solved on the 4 remaining DOFs.
    const auto ke = oracle::ke_tabulated(spec.poisson_ratio);
    // library node ids: n(0,0)=0, n(1,0)=2, n(1,1)=3, n(0,1)=1
    const int dofs[8] = {0, 1, 4, 5, 6, 7, 2, 3};  // (BL, BR, TR, TL) -> global
    std::vector<int> free = {4, 5, 6, 7};
    Eigen::Matrix4d kf;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            int li = -1, lj = -1;
            for (int a = 0; a < 8; ++a) {
                if (dofs[a] == free[i]) li = a;
                if (dofs[a] == free[j]) lj = a;
            }
            kf(i, j) = ke(li, lj);
        }
    Eigen::Vector4d ff = Eigen::Vector4d::Zero();
    const double e_solid = spec.youngs_modulus_min +
                           (spec.youngs_modulus_solid - spec.youngs_modulus_min);
    kf *= e_solid;
    for (const auto& l : spec.loads)
        for (int i = 0; i < 4; ++i)
            if (free[i] == l.dof) ff[i] = l.value;
    const Eigen::Vector4d uf = kf.ldlt().solve(ff);
    for (int i = 0; i < 4; ++i) CHECK(u[free[i]] == doctest::Approx(uf[i]).epsilon(1e-12));
}

TEST_CASE("compliance matches the dense mirrored-convention oracle") {
    SUBCASE("4x2 uniform 0.5") {
        ProblemSpec spec = cantilever_spec(4, 2);
        FemSolver fem(spec);
        const DesignField x = uniform_field(spec.num_elements(), 0.5);
        const double c = fem.compliance(x);
        const double c_oracle =
            oracle::dense_compliance(oracle::mirror_problem(spec), oracle::mirror_field(spec, x));
        CHECK(c == doctest::Approx(c_oracle).epsilon(1e-10));
    }
    SUBCASE("8x4 random densities, unfiltered") {
        ProblemSpec spec = cantilever_spec(8, 4, 0.5, 1.0);  // rmin = 1: identity filter
        FemSolver fem(spec);
        const DesignField x = random_field(spec.num_elements(), 42);
        const double c = fem.compliance(x);
        const double c_oracle =
            oracle::dense_compliance(oracle::mirror_problem(spec), oracle::mirror_field(spec, x));
        CHECK(c == doctest::Approx(c_oracle).epsilon(1e-10));
    }
}

TEST_CASE("analytic gradient matches central finite differences") {
    for (auto [nelx, nely, seed] : {std::tuple{8, 4, 7u}, std::tuple{16, 8, 11u}}) {
        ProblemSpec spec = cantilever_spec(nelx, nely);
        FemSolver fem(spec);
        DesignField x = random_field(spec.num_elements(), seed);
        const auto eval = fem.evaluate(x);
        const double h = 1e-6;
        double worst = 0.0;
        for (int e = 0; e < spec.num_elements(); ++e) {
            DesignField xp = x, xm = x;
            xp[e] += h;
            xm[e] -= h;
            const double fd = static_cast<double>(oracle::precise_compliance(spec, fem, xp) -
                                                  oracle::precise_compliance(spec, fem, xm)) /
                              (2 * h);
            if (std::abs(eval.gradient[e]) < 1e-12) continue;
            worst = std::max(worst, std::abs(fd - eval.gradient[e]) /
                                        std::abs(eval.gradient[e]));
        }
        CHECK(worst < 1e-5);
        CHECK((eval.gradient.array() <= 0.0).all());
    }
}

TEST_CASE("mirror symmetry of the cantilever") {
    ProblemSpec spec = cantilever_spec(8, 4);
    FemSolver fem(spec);
    SUBCASE("uniform field gives a mirror-symmetric gradient") {
        const auto eval = fem.evaluate(uniform_field(spec.num_elements(), 0.5));
        for (int e = 0; e < spec.num_elements(); ++e)
            CHECK(eval.gradient[e] ==
                  doctest::Approx(eval.gradient[mirrored_element(spec, e)]).epsilon(1e-9));
    }
    SUBCASE("mirroring the field leaves compliance unchanged") {
        const DesignField x = random_field(spec.num_elements(), 3);
        DesignField xm(x.size());
        for (int e = 0; e < spec.num_elements(); ++e) xm[mirrored_element(spec, e)] = x[e];
        CHECK(fem.compliance(x) == doctest::Approx(fem.compliance(xm)).epsilon(1e-10));
    }
}

TEST_CASE("density filter") {
    SUBCASE("rmin = 1 is the identity") {
        ProblemSpec spec = cantilever_spec(5, 3, 0.5, 1.0);
        FemSolver fem(spec);
        const DesignField x = random_field(spec.num_elements(), 5);
        CHECK((fem.apply_filter(x) - x).cwiseAbs().maxCoeff() < 1e-15);
    }
    SUBCASE("constants are preserved") {
        ProblemSpec spec = cantilever_spec(6, 4, 0.5, 2.3);
        FemSolver fem(spec);
        const DesignField x = uniform_field(spec.num_elements(), 0.5);
        CHECK((fem.apply_filter(x).array() - 0.5).abs().maxCoeff() < 1e-14);
    }
    SUBCASE("3x3 single center element, rmin = 1.5") {
        ProblemSpec spec = cantilever_spec(3, 3, 0.5, 1.5);
        FemSolver fem(spec);
        DesignField x = uniform_field(9, 0.0);
        x[spec.element_index(1, 1)] = 1.0;
        const DesignField xf = fem.apply_filter(x);
        // conic weights: self 1.5, edge neighbor 0.5, diagonal 1.5 - sqrt(2)
        const double ws = 1.5, we = 0.5, wd = 1.5 - std::sqrt(2.0);
        CHECK(xf[spec.element_index(1, 1)] ==
              doctest::Approx(ws / (ws + 4 * we + 4 * wd)).epsilon(1e-14));
        // mid-edge element: sees the center at distance 1, row sum over its
        // own 6-neighborhood (self + 3 edge + 2 diagonal)
        CHECK(xf[spec.element_index(0, 1)] ==
              doctest::Approx(we / (ws + 3 * we + 2 * wd)).epsilon(1e-14));
        // corner element: sees the center diagonally
        CHECK(xf[spec.element_index(0, 0)] ==
              doctest::Approx(wd / (ws + 2 * we + wd)).epsilon(1e-14));
    }
    SUBCASE("linear and bound preserving") {
        ProblemSpec spec = cantilever_spec(7, 5, 0.5, 1.8);
        FemSolver fem(spec);
        const DesignField a = random_field(spec.num_elements(), 8, 0.0, 1.0);
        const DesignField b = random_field(spec.num_elements(), 9, 0.0, 1.0);
        const DesignField lin = fem.apply_filter(0.3 * a + 0.7 * b);
        CHECK((lin - (0.3 * fem.apply_filter(a) + 0.7 * fem.apply_filter(b)))
                  .cwiseAbs()
                  .maxCoeff() < 1e-14);
        CHECK(in_unit_box(fem.apply_filter(a), 1e-15));
    }
}

TEST_CASE("compliance decreases when any density increases") {
    ProblemSpec spec = cantilever_spec(6, 3);
    FemSolver fem(spec);
    DesignField x = random_field(spec.num_elements(), 12, 0.2, 0.8);
    const double c0 = fem.compliance(x);
    CHECK(c0 >= 0.0);
    for (int e : {0, 5, 9, 17}) {
        DesignField xb = x;
        xb[e] += 0.05;
        CHECK(fem.compliance(xb) < c0);
    }
}

TEST_CASE("spec validation names the offending field") {
    ProblemSpec spec = cantilever_spec(4, 2);
    SUBCASE("volume fraction out of range") {
        spec.volume_fraction = 1.5;
        CHECK_THROWS_WITH_AS(spec.validate(), doctest::Contains("vol_frac"), SpecError);
    }
    SUBCASE("empty loads") {
        spec.loads.clear();
        CHECK_THROWS_WITH_AS(spec.validate(), doctest::Contains("loads"), SpecError);
    }
    SUBCASE("Emin above E") {
        spec.youngs_modulus_min = 2.0;
        CHECK_THROWS_AS(spec.validate(), SpecError);
    }
    SUBCASE("insufficient supports are caught at solver construction") {
        ProblemSpec bad = cantilever_spec(4, 2);
        bad.supports.clear();
        // only ux constraints: vertical translation stays free
        bad.supports = {0, 2, 4};
        CHECK_THROWS_AS(FemSolver{bad}, SpecError);
    }
}

TEST_CASE("problem JSON round trip") {
    SUBCASE("preset") {
        ProblemSpec spec = cantilever_spec(32, 16, 0.5, 1.5);
        const ProblemSpec back = problem_from_json(problem_to_json(spec));
        CHECK(back.nelx == spec.nelx);
        CHECK(back.nely == spec.nely);
        CHECK(back.supports == spec.supports);
        CHECK(back.loads.size() == spec.loads.size());
        CHECK(spec_hash(back) == spec_hash(spec));
    }
    SUBCASE("explicit boundary conditions") {
        ProblemSpec spec = cantilever_spec(4, 2);
        spec.bc_preset.clear();
        const ProblemSpec back = problem_from_json(problem_to_json(spec));
        CHECK(back.supports == spec.supports);
        CHECK(back.loads[0].dof == spec.loads[0].dof);
        CHECK(back.loads[0].value == spec.loads[0].value);
    }
    SUBCASE("missing fields are reported by name") {
        nlohmann::json j = problem_to_json(cantilever_spec(4, 2));
        j.erase("nelx");
        CHECK_THROWS_WITH_AS(problem_from_json(j), doctest::Contains("nelx"), SpecError);
    }
}

TEST_CASE("compliance is deterministic") {
    ProblemSpec spec = cantilever_spec(8, 4);
    FemSolver fem_a(spec), fem_b(spec);
    const DesignField x = random_field(spec.num_elements(), 77);
    CHECK(fem_a.compliance(x) == fem_b.compliance(x));
}
