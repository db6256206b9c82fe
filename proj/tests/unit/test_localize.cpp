#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "parreg/cauchy.hpp"
#include "parreg/errors.hpp"
#include "parreg/localize.hpp"
#include "parreg/spectral.hpp"

using namespace parreg;
using namespace parreg::localize;
using operators::DifferentialOperator;
using std::numbers::pi;

namespace {

std::vector<Axis> box1(std::size_t n) { return {Axis::periodic_box(n, 2 * pi)}; }

GridFunction sine_coefficient(const std::vector<Axis>& ax) {
    return GridFunction::sample_scalar(ax, [](const Point& x) { return cplx(2.0 + std::sin(x[0])); });
}

// -(a u')' with a = 2 + sin x, shifted by eta: f for u* = exp(-t) cos x worked by hand
// A u* = exp(-t) (2 cos x + sin 2x)
cauchy::CauchyProblem divergence_problem(std::size_t nx, std::size_t nt, double T, double eta) {
    const auto sp = box1(nx);
    const std::vector<Axis> ax{sp[0], Axis::half_line(nt, T / static_cast<double>(nt - 1))};
    auto f = GridFunction::sample_scalar(ax, [&](const Point& x) {
        return cplx(std::exp(-x[1]) * ((eta + 1.0) * std::cos(x[0]) + std::sin(2.0 * x[0])));
    });
    auto u0 = GridFunction::sample_scalar(sp, [](const Point& x) { return cplx(std::cos(x[0])); });
    return {DifferentialOperator::divergence_form(sine_coefficient(sp)), f, u0,
            {0.0, 2.0, weights::WeightSystem::parabolic(1, 2), 1.0}, T};
}

GridFunction divergence_exact(const GridFunction& f) {
    return GridFunction::sample_scalar(f.axes(), [](const Point& x) { return cplx(std::exp(-x[1]) * std::cos(x[0])); });
}

}  // namespace

TEST(Smoothstep, EndpointsAndFlatness) {
    EXPECT_EQ(smoothstep(-0.1, 5), 0.0);
    EXPECT_EQ(smoothstep(1.2, 5), 1.0);
    EXPECT_NEAR(smoothstep(0.5, 5), 0.5, 1e-14);
    EXPECT_NEAR(smoothstep(1.0 - 1e-9, 5), 1.0, 1e-12);
    // order 5 vanishes to fifth order at 0: leading term 126 x^5
    EXPECT_NEAR(smoothstep(1e-3, 5) / 1.26e-13, 1.0, 1e-2);
    // order 1 is the ramp
    EXPECT_NEAR(smoothstep(0.3, 1), 0.3, 1e-15);
}

TEST(Localization, SingleChartIsTrivial) {
    const auto loc = build_localization(box1(32), 2 * pi);
    ASSERT_EQ(loc.size(), 1u);
    for (std::size_t node = 0; node < 32; ++node) EXPECT_NEAR(std::abs(loc.pi[0](node) - 1.0), 0.0, 1e-15);
    const std::vector<Axis> sq{Axis::periodic_box(16, 2 * pi), Axis::periodic_box(16, 2 * pi)};
    const auto loc2 = build_localization_cells(sq, 1);
    EXPECT_LT((loc2.pi[0] - GridFunction::sample_scalar(sq, [](const Point&) { return cplx(1.0); })).max_abs(), 1e-15);
}

TEST(Localization, PartitionIdentity) {
    for (std::size_t cells : {2u, 4u, 8u}) {
        const auto loc = build_localization_cells(box1(64), cells);
        EXPECT_EQ(loc.size(), cells);
        EXPECT_LT(loc.partition_defect(), 1e-10) << cells;
    }
    const std::vector<Axis> sq{Axis::periodic_box(32, 2.0), Axis::periodic_box(24, 1.5)};
    const auto loc = build_localization(sq, 0.25);
    EXPECT_EQ(loc.size(), 8u * 6u);
    EXPECT_LT(loc.partition_defect(), 1e-10);
}

TEST(Localization, PlateauAndSupport) {
    const auto loc = build_localization_cells(box1(64), 4);
    for (std::size_t k = 0; k < loc.size(); ++k) {
        EXPECT_EQ((loc.chi[k].times_scalar_field(loc.pi[k]) - loc.pi[k]).max_abs(), 0.0);
        for (std::size_t node = 0; node < 64; ++node) {
            const double d = std::abs(loc.displacement(k, {loc.axes[0].coord(node)})[0]);
            if (d > 0.85 * loc.delta + 1e-12) EXPECT_EQ(loc.pi[k](node), cplx(0.0));
        }
    }
}

TEST(Localization, IncompatibleScaleRejected) {
    EXPECT_THROW(build_localization(box1(64), 0.1), ConfigurationError);
    // 32 cells of 2 nodes each
    EXPECT_THROW(build_localization_cells(box1(64), 32), ConfigurationError);
    EXPECT_THROW(build_localization_cells(box1(60), 8), ConfigurationError);
    EXPECT_THROW(build_localization({Axis::half_line(16, 0.1)}, 0.4), ConfigurationError);
}

TEST(RPair, RetractionIdentity) {
    const std::vector<Axis> sq{Axis::periodic_box(32, 2 * pi), Axis::periodic_box(32, 2 * pi)};
    const auto loc = build_localization_cells(sq, 4);
    std::mt19937 rng(3);
    std::normal_distribution<double> nd;
    GridFunction u(sq, 2);
    for (auto& v : u.values()) v = cplx(nd(rng), nd(rng));
    EXPECT_LT((r_assemble(loc, r_decompose(loc, u)) - u).max_abs(), 1e-12);
}

TEST(RPair, ChartSupportedFunctionHasOneDominantPiece) {
    const auto loc = build_localization_cells(box1(64), 8);
    // a bump inside the part of chart 3 that no neighbour reaches
    const double c = loc.center(3)[0];
    const auto u = GridFunction::sample_scalar(loc.axes, [&](const Point& x) {
        const double d = std::abs(x[0] - c) / loc.delta;
        return cplx(d < 0.12 ? std::cos(pi * d / 0.24) : 0.0);
    });
    const auto pieces = r_decompose(loc, u);
    for (std::size_t k = 0; k < pieces.size(); ++k) {
        if (k == 3) EXPECT_LT((pieces[k] - u).max_abs(), 1e-14);
        else EXPECT_EQ(pieces[k].max_abs(), 0.0);
    }
}

TEST(RPair, PieceNormsAreEquivalent) {
    const std::vector<Axis> ax{Axis::periodic_box(64, 2 * pi)};
    const auto loc = build_localization_cells(ax, 8);
    const spaces::NormSpec spec{1.0, 2.0, weights::WeightSystem::trivial(1), 1.0};
    double lo = 1e300;
    double hi = 0.0;
    for (unsigned seed = 1; seed <= 6; ++seed) {
        const auto u = spectral::random_band_limited(ax, 1, 6, seed);
        const double ratio = piece_norm(loc, u, spec) / spaces::anisotropic_norm(u, spec);
        lo = std::min(lo, ratio);
        hi = std::max(hi, ratio);
    }
    // the grid-calibrated constant: bump gradients are of size 1/delta ~ 1.3
    EXPECT_GT(lo, 1.0 / 4.0);
    EXPECT_LT(hi, 4.0);
}

TEST(Freeze, ConstantCoefficientHasNoDeviation) {
    const auto loc = build_localization_cells(box1(32), 4);
    const auto a = GridFunction::sample_scalar(loc.axes, [](const Point&) { return cplx(3.0); });
    const auto fz = freeze_coefficients(a, loc);
    EXPECT_EQ(fz.omega, 0.0);
    for (const auto& f : fz.fields) EXPECT_EQ((f - a).max_abs(), 0.0);
}

TEST(Freeze, LipschitzModulusAndMonotonicity) {
    // 2 pi / 16, 2 pi / 32, 2 pi / 64 stand in for delta = 0.4, 0.2, 0.1
    const auto ax = box1(256);
    const auto a = sine_coefficient(ax);
    std::vector<double> omega;
    for (std::size_t cells : {16u, 32u, 64u}) {
        const auto loc = build_localization_cells(ax, cells);
        const auto fz = freeze_coefficients(a, loc);
        EXPECT_LE(fz.omega, loc.delta * (1.0 + 1e-12));
        EXPECT_LT(fz.cell_mismatch, 1e-15);
        omega.push_back(fz.omega);
    }
    EXPECT_LE(omega[1], omega[0]);
    EXPECT_LE(omega[2], omega[1]);
}

TEST(Freeze, OffGridRetractionInTwoDimensions) {
    const std::vector<Axis> sq{Axis::periodic_box(32, 2 * pi), Axis::periodic_box(32, 2 * pi)};
    const auto loc = build_localization_cells(sq, 4);
    const auto a = GridFunction::sample_scalar(sq, [](const Point& x) { return cplx(2.0 + std::sin(x[0]) * std::cos(x[1])); });
    const auto fz = freeze_coefficients(a, loc);
    // frozen values at a corner direction: a(center + delta (d / |d|_inf))
    const std::size_t k = 5;
    const Point c = loc.center(k);
    for (std::size_t node = 0; node < a.node_count(); node += 37) {
        const Point h = radial_retraction(loc.displacement(k, a.coords(node)), loc.delta);
        const double want = 2.0 + std::sin(c[0] + h[0]) * std::cos(c[1] + h[1]);
        EXPECT_NEAR(fz.fields[k](node).real(), want, 1e-12);
    }
    // Lipschitz constant of sin x cos y in the sup norm is 2
    EXPECT_LE(fz.omega, 2.0 * loc.delta);
}

TEST(Neumann, ScalarExample) {
    const LinearMap ainv = [](const Eigen::VectorXcd& y) { return Eigen::VectorXcd(y / 2.0); };
    const LinearMap b = [](const Eigen::VectorXcd& x) { return Eigen::VectorXcd(0.5 * x); };
    const auto rep = neumann_solve(ainv, b, Eigen::VectorXcd::Ones(1));
    EXPECT_TRUE(rep.converged);
    EXPECT_NEAR(std::abs(rep.x(0) - 0.4), 0.0, 1e-12);
    EXPECT_NEAR(rep.contraction, 0.25, 1e-12);
    // ||(a + b)^{-1}|| = 0.4 <= 2 ||a^{-1}||
    EXPECT_LE(0.4, 2.0 * 0.5);
}

TEST(Neumann, ZeroPerturbationTakesOneApplication) {
    int calls = 0;
    const LinearMap ainv = [&](const Eigen::VectorXcd& y) {
        ++calls;
        return Eigen::VectorXcd(y / 3.0);
    };
    const LinearMap b = [](const Eigen::VectorXcd& x) { return Eigen::VectorXcd(Eigen::VectorXcd::Zero(x.size())); };
    NeumannOptions opt;
    opt.contraction = 0.0;
    Eigen::VectorXcd rhs(3);
    rhs << 3.0, 6.0, cplx(0.0, 9.0);
    const auto rep = neumann_solve(ainv, b, rhs, opt);
    EXPECT_EQ(calls, 1);
    EXPECT_EQ(rep.iterations, 1);
    EXPECT_LT((rep.x - rhs / 3.0).norm(), 1e-15);
}

TEST(Neumann, GeometricRateOnRandomSystems) {
    std::mt19937 rng(21);
    std::uniform_real_distribution<double> ud(1.0, 5.0);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 10; ++trial) {
        const Eigen::Index n = 12;
        Eigen::VectorXd diag(n);
        for (Eigen::Index i = 0; i < n; ++i) diag(i) = ud(rng);
        Eigen::MatrixXcd bm(n, n);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j) bm(i, j) = cplx(nd(rng), nd(rng));
        // scale so that ||b a^{-1}|| is about 0.4
        const Eigen::MatrixXcd ba = bm * diag.cwiseInverse().asDiagonal();
        bm *= 0.4 / ba.jacobiSvd().singularValues()(0);
        const LinearMap ainv = [&](const Eigen::VectorXcd& y) { return Eigen::VectorXcd(diag.cwiseInverse().asDiagonal() * y); };
        const LinearMap b = [&](const Eigen::VectorXcd& x) { return Eigen::VectorXcd(bm * x); };
        Eigen::VectorXcd rhs(n);
        for (Eigen::Index i = 0; i < n; ++i) rhs(i) = cplx(nd(rng), nd(rng));
        NeumannOptions opt;
        opt.max_iter = 10;
        opt.tol = 0.0;
        const auto rep = neumann_solve(ainv, b, rhs, opt);
        ASSERT_EQ(rep.rates.size(), 9u);
        EXPECT_LE(rep.max_rate(), 0.55) << trial;
        // error against the dense solve halves per iteration from a unit start
        const Eigen::MatrixXcd full = Eigen::MatrixXcd(diag.cast<cplx>().asDiagonal()) + bm;
        const Eigen::VectorXcd x = full.partialPivLu().solve(rhs);
        EXPECT_LT((rep.x - x).norm() / x.norm(), std::pow(0.5, 9)) << trial;
    }
}

TEST(Neumann, RefusesNonContraction) {
    const LinearMap ainv = [](const Eigen::VectorXcd& y) { return Eigen::VectorXcd(y); };
    const LinearMap b = [](const Eigen::VectorXcd& x) { return Eigen::VectorXcd(0.9 * x); };
    EXPECT_THROW(neumann_solve(ainv, b, Eigen::VectorXcd::Ones(4)), ContractionError);
}

TEST(Neumann, FlagsIterationLimit) {
    const LinearMap ainv = [](const Eigen::VectorXcd& y) { return Eigen::VectorXcd(y); };
    const LinearMap b = [](const Eigen::VectorXcd& x) { return Eigen::VectorXcd(0.45 * x); };
    NeumannOptions opt;
    opt.max_iter = 3;
    const auto rep = neumann_solve(ainv, b, Eigen::VectorXcd::Ones(2), opt);
    EXPECT_FALSE(rep.converged);
    EXPECT_EQ(rep.iterations, 3);
}

TEST(LocalizedOperator, IntertwinesWithRetraction) {
    // A R u = R (fraktur A + fraktur B) u for random chart tuples
    const auto sp = box1(64);
    const auto a = DifferentialOperator::divergence_form(sine_coefficient(sp));
    const LocalizedOperator lop(a, build_localization_cells(sp, 8));
    ChartTuple u;
    for (unsigned k = 0; k < 8; ++k) u.push_back(spectral::random_band_limited(sp, 1, 10, 40 + k));
    const auto& loc = lop.localization();
    const GridFunction lhs = a.apply(r_assemble(loc, u));
    const ChartTuple pa = lop.principal(u);
    const ChartTuple pb = lop.remainder(u);
    ChartTuple sum;
    for (std::size_t k = 0; k < u.size(); ++k) sum.push_back(pa[k] + pb[k]);
    EXPECT_LT((lhs - r_assemble(loc, sum)).max_abs(), 1e-10 * lhs.max_abs());
}

TEST(LocalizedOperator, IntertwiningInTwoDimensionsWithTime) {
    const std::vector<Axis> sq{Axis::periodic_box(16, 2 * pi), Axis::periodic_box(16, 2 * pi)};
    Eigen::MatrixXd m(2, 2);
    m << 2.0, 0.3, 0.3, 1.0;
    auto field = GridFunction::sample(sq, 4, [](const Point& x, std::span<cplx> v) {
        v[0] = 2.0 + 0.5 * std::sin(x[0]);
        v[1] = v[2] = 0.3 * std::cos(x[1]);
        v[3] = 1.5;
    });
    const auto a = DifferentialOperator::divergence_form(field);
    const LocalizedOperator lop(a, build_localization_cells(sq, 2));
    std::vector<Axis> st = sq;
    st.push_back(Axis::half_line(5, 0.1));
    ChartTuple u;
    for (unsigned k = 0; k < 4; ++k) {
        GridFunction g(st, 1);
        const auto s = spectral::random_band_limited(sq, 1, 4, 90 + k);
        for (std::size_t it = 0; it < 5; ++it) set_time_slice(g, it, static_cast<cplx>(1.0 + 0.1 * it) * s);
        u.push_back(g);
    }
    const auto& loc = lop.localization();
    const GridFunction lhs = a.apply(r_assemble(loc, u));
    const ChartTuple pa = lop.principal(u);
    const ChartTuple pb = lop.remainder(u);
    ChartTuple sum;
    for (std::size_t k = 0; k < u.size(); ++k) sum.push_back(pa[k] + pb[k]);
    EXPECT_LT((lhs - r_assemble(loc, sum)).max_abs(), 1e-10 * lhs.max_abs());
}

TEST(Variable, DivergenceFormManufactured) {
    const auto probe = divergence_problem(64, 33, 0.5, 1.0);
    const auto plan = plan_variable_parabolic(probe.op, probe.u0.axes(), probe.f.axes().back());
    EXPECT_LE(plan.omega, 1.0 / (2.0 * plan.c0));
    EXPECT_LE(plan.contraction, 0.5);
    const auto p = divergence_problem(64, 33, 0.5, plan.eta);
    VariableOptions opt;
    opt.eta = plan.eta;
    // lift by u0 only, so the charted problem carries the whole evolution
    opt.lift_order = 0;
    const auto rep = solve_variable_parabolic(p, opt);
    EXPECT_LT(relative_l2(rep.u, divergence_exact(p.f)), 1e-4);
    EXPECT_LT(rep.residual, 1e-5);
    EXPECT_TRUE(rep.extra["neumann"]["converged"].get<bool>());
    for (double r : rep.extra["neumann"]["rates"]) EXPECT_LE(r, 0.55);
}

TEST(Variable, RemainderRatioDecaysWithEta) {
    const auto probe = divergence_problem(64, 33, 0.5, 1.0);
    const auto plan = plan_variable_parabolic(probe.op, probe.u0.axes(), probe.f.axes().back());
    std::vector<double> ratios;
    for (double scale : {1.0, 4.0, 16.0}) {
        const double eta = scale * plan.eta;
        VariableOptions opt;
        opt.eta = eta;
        const auto rep = solve_variable_parabolic(divergence_problem(64, 33, 0.5, eta), opt);
        ratios.push_back(rep.constants["remainder_ratio"].get<double>());
    }
    EXPECT_LT(ratios[1], ratios[0]);
    EXPECT_LT(ratios[2], ratios[1]);
}

TEST(Variable, ConstantCoefficientsMatchFrozenSolve) {
    const auto sp = box1(32);
    const std::vector<Axis> ax{sp[0], Axis::half_line(17, 1.0 / 16.0)};
    auto f = GridFunction::sample_scalar(ax, [](const Point& x) { return cplx(std::exp(-x[1]) * std::sin(x[0])); });
    auto u0 = GridFunction::sample_scalar(sp, [](const Point& x) { return cplx(std::cos(2.0 * x[0])); });
    const cauchy::CauchyProblem p{DifferentialOperator::laplacian(1), f, u0,
                                  {0.0, 2.0, weights::WeightSystem::parabolic(1, 2), 1.0}, 1.0};
    VariableOptions opt;
    opt.eta = 2.0;
    const auto rep = solve_variable_parabolic(p, opt);
    const auto ref = cauchy::solve_cauchy_frozen(p, 2.0);
    EXPECT_LT(relative_l2(rep.u, ref.u), 1e-10);
}

TEST(Variable, NonEllipticChartIsRejected) {
    // a = 0.5 + sin x changes sign on part of the circle
    const auto sp = box1(64);
    const auto a = GridFunction::sample_scalar(sp, [](const Point& x) { return cplx(0.5 + std::sin(x[0])); });
    auto p = divergence_problem(64, 9, 0.5, 1.0);
    p.op = DifferentialOperator::divergence_form(a);
    EXPECT_THROW(solve_variable_parabolic(p), EllipticityError);
}

TEST(Variable, TimeDependentCoefficientsUnsupported) {
    auto p = divergence_problem(32, 9, 0.5, 1.0);
    DifferentialOperator a(1, 2, 1);
    a.set({2}, GridFunction::sample_scalar(p.f.axes(), [](const Point& x) { return cplx(2.0 + x[1]); }), true);
    p.op = a;
    EXPECT_THROW(solve_variable_parabolic(p), ArgumentError);
}
