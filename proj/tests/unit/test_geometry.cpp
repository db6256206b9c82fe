#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "parreg/cauchy.hpp"
#include "parreg/errors.hpp"
#include "parreg/geometry.hpp"
#include "parreg/spectral.hpp"

using namespace parreg;
using namespace parreg::geometry;
using operators::DifferentialOperator;
using std::numbers::pi;

namespace {

Chart metric_chart(int m, MetricFn metric, double half = 10.0) {
    Chart c;
    c.half_width.assign(static_cast<std::size_t>(m), half);
    c.to_model = [](const Point& y) { return y; };
    c.from_model = [](const Point& p) { return p; };
    c.metric = std::move(metric);
    return c;
}

std::vector<Axis> torus_grid(int m, std::size_t n) {
    return std::vector<Axis>(static_cast<std::size_t>(m), Axis::periodic_box(n, 2 * pi));
}

std::vector<std::vector<Axis>> aligned_grids(const Atlas& at, const std::vector<Axis>& model) {
    std::vector<std::vector<Axis>> out;
    for (std::size_t k = 0; k < at.charts.size(); ++k) out.push_back(aligned_chart_grid(at, k, model));
    return out;
}

spaces::NormSpec trivial_spec(int m, double s) { return {s, 2.0, weights::WeightSystem::trivial(m), 1.0}; }

}  // namespace

TEST(Atlas, FlatTorusPassesWithUnitBand) {
    for (int m : {1, 2}) {
        const Atlas at = flat_torus(m, 2);
        EXPECT_EQ(at.charts.size(), m == 1 ? 2u : 4u);
        const auto rep = verify_uniform_regularity(at, 500);
        EXPECT_TRUE(rep.passed()) << rep.to_json().dump();
        EXPECT_DOUBLE_EQ(rep.metric_min, 1.0);
        EXPECT_DOUBLE_EQ(rep.metric_max, 1.0);
        EXPECT_EQ(rep.multiplicity, std::size_t{1} << m);
        EXPECT_NEAR(rep.transition_bound, 1.0, 1e-8);
    }
}

TEST(Atlas, CylinderWindowPasses) {
    const auto rep = verify_uniform_regularity(cylinder_window(3.0, 3, 4), 500);
    EXPECT_TRUE(rep.passed()) << rep.to_json().dump();
    EXPECT_NEAR(rep.metric_min, 1.0, 1e-12);
    EXPECT_NEAR(rep.metric_max, 1.0, 1e-12);
}

TEST(Atlas, ConeEndPasses) {
    const Atlas at = cone_end(2.0, 4);
    const auto rep = verify_uniform_regularity(at, 1000);
    EXPECT_TRUE(rep.passed()) << rep.to_json().dump();
    // g_22 = ((r_k + y1) / r_k)^2 with |y1| < 0.75 and r_k >= 2
    EXPECT_GE(rep.metric_min, std::pow(1.0 - 0.75 / 2.0, 2) - 1e-12);
    EXPECT_LE(rep.metric_max, std::pow(1.0 + 0.75 / 2.0, 2) + 1e-12);
}

TEST(Atlas, NaiveHyperbolicChartFails) {
    const std::size_t per_axis = 17;
    const auto rep = verify_uniform_regularity(hyperbolic_naive(), 500, 5, per_axis);
    EXPECT_FALSE(rep.passed());
    EXPECT_FALSE(rep.pass.at("metric_band"));
    // eigenvalue 4 / (1 - t^2)^2 along the diagonal grows without bound
    double prev = 0.0;
    for (double t : {0.0, 0.5, 0.9, 0.99, 0.999}) {
        const double e = 4.0 / std::pow(1.0 - t * t, 2);
        EXPECT_GT(e, prev);
        prev = e;
    }
    const double w = std::sqrt(0.5) * (1.0 - 1.0 / static_cast<double>(per_axis));
    EXPECT_NEAR(rep.metric_max, 4.0 / std::pow(1.0 - 2.0 * w * w, 2), 1e-6 * rep.metric_max);
}

TEST(Atlas, MobiusFamilyPasses) {
    const Atlas at = hyperbolic_mobius(2.0);
    const auto rep = verify_uniform_regularity(at, 1000);
    EXPECT_TRUE(rep.passed()) << rep.to_json().dump();
    // rho^2 4 / (1 - rho^2 |y|^2)^2 with rho = 1/2 lies in [1, 4] on the box
    EXPECT_GE(rep.metric_min, 1.0 - 1e-12);
    EXPECT_LE(rep.metric_max, 4.0);
}

TEST(Atlas, EvaluatorFailureIsLocated) {
    Atlas at = flat_torus(1, 2);
    at.charts[1].metric = [](const Point& y) {
        Eigen::MatrixXd g(1, 1);
        g(0, 0) = y[0] > 1.0 ? std::nan("") : 1.0;
        return g;
    };
    const auto rep = verify_uniform_regularity(at, 200);
    EXPECT_FALSE(rep.passed());
    ASSERT_TRUE(rep.evaluator_error.has_value());
    EXPECT_NE(rep.evaluator_error->find("chart 1"), std::string::npos);
}

TEST(Atlas, FromJson) {
    EXPECT_EQ(atlas_from_json({{"kind", "torus"}, {"m", 2}}).charts.size(), 4u);
    EXPECT_THROW(atlas_from_json({{"kind", "klein_bottle"}}), ValidationError);
    EXPECT_THROW(atlas_from_json({{"kind", "torus"}, {"charts_per_axis", 1}}), ValidationError);
}

TEST(LaplaceBeltrami, IdentityMetricGivesMinusCos) {
    const Chart c = metric_chart(1, [](const Point&) { return Eigen::MatrixXd::Identity(1, 1); });
    const auto u = GridFunction::sample_scalar(torus_grid(1, 64), [](const Point& x) { return cplx(std::cos(x[0])); });
    EXPECT_LT((laplace_beltrami_local(c, u) + u).max_abs(), 1e-12);
}

TEST(LaplaceBeltrami, ConstantConformalMetric) {
    const double c2 = 2.25;
    const Chart c = metric_chart(2, [&](const Point&) { return Eigen::MatrixXd(c2 * Eigen::MatrixXd::Identity(2, 2)); });
    const auto u = GridFunction::sample_scalar(torus_grid(2, 32), [](const Point& x) {
        return cplx(std::cos(x[0]) * std::cos(2.0 * x[1]));
    });
    // Delta u = -5 u
    EXPECT_LT((laplace_beltrami_local(c, u) - cplx(-5.0 / c2) * u).max_abs(), 1e-11);
}

TEST(LaplaceBeltrami, HyperbolicPatchConformalIdentity) {
    const Chart c = hyperbolic_naive().charts[0];
    const std::vector<Axis> ax{Axis::interval(81, -0.5, 0.5), Axis::interval(81, -0.5, 0.5)};
    auto u_of = [](const Point& x) { return std::sin(x[0] + 0.3) * std::cos(2.0 * x[1]); };
    const auto u = GridFunction::sample_scalar(ax, [&](const Point& x) { return cplx(u_of(x)); });
    const auto lb = laplace_beltrami_local(c, u, 8);
    double worst = 0.0;
    for (std::size_t node = 0; node < u.node_count(); ++node) {
        const Point x = u.coords(node);
        if (std::abs(x[0]) > 0.45 || std::abs(x[1]) > 0.45) continue;
        const double r2 = x[0] * x[0] + x[1] * x[1];
        worst = std::max(worst, std::abs(lb(node).real() - std::pow(1.0 - r2, 2) / 4.0 * (-5.0 * u_of(x))));
    }
    EXPECT_LT(worst, 1e-6);
}

TEST(LaplaceBeltrami, NonpositiveVolumeRejected) {
    const Chart c = metric_chart(1, [](const Point&) { return Eigen::MatrixXd(-Eigen::MatrixXd::Identity(1, 1)); });
    const auto u = GridFunction::sample_scalar(torus_grid(1, 16), [](const Point& x) { return cplx(std::cos(x[0])); });
    EXPECT_THROW(laplace_beltrami_local(c, u), DomainError);
}

TEST(PushForward, FlatChartGivesMinusLaplacian) {
    const Atlas at = flat_torus(2, 2);
    const auto pf = push_forward_operator({}, at.charts[0], torus_grid(2, 16));
    EXPECT_TRUE(pf.op.is_constant());
    EXPECT_EQ(pf.correction, 0.0);
    const std::vector<double> xi{0.3, -1.7};
    EXPECT_NEAR(std::abs(operators::full_symbol(pf.op, xi)(0, 0) - cplx(0.09 + 2.89)), 0.0, 1e-14);
    EXPECT_EQ(pf.op.coeffs().count({1, 0}), 0u);
    EXPECT_EQ(pf.op.coeffs().count({0, 1}), 0u);
}

TEST(PushForward, DiagonalMetricSymbolAndEpsilon) {
    const Chart c = metric_chart(2, [](const Point&) {
        Eigen::MatrixXd g = Eigen::MatrixXd::Identity(2, 2);
        g(1, 1) = 4.0;
        return g;
    });
    const auto pf = push_forward_operator({}, c, torus_grid(2, 8));
    std::mt19937_64 rng(1);
    std::normal_distribution<double> nd;
    for (int i = 0; i < 20; ++i) {
        const std::vector<double> xi{nd(rng), nd(rng)};
        EXPECT_NEAR(operators::principal_symbol(pf.op, xi)(0, 0).real(), xi[0] * xi[0] + xi[1] * xi[1] / 4.0, 1e-14);
    }
    EXPECT_DOUBLE_EQ(pf.epsilon, 0.25);
    EXPECT_NEAR(operators::check_normal_ellipticity(pf.op).epsilon, 0.25, 1e-9);
}

TEST(PushForward, AgreesWithDivergenceForm) {
    // the cone metric is not conformal, so the contracted Christoffel symbols survive
    const Atlas cone = cone_end();
    const Chart& c = cone.charts[5];
    const std::vector<Axis> ax{Axis::interval(81, -0.6, 0.6), Axis::interval(81, -0.6, 0.6)};
    const auto u = GridFunction::sample_scalar(ax, [](const Point& y) { return cplx(std::cos(2.0 * y[0] - y[1])); });
    const auto pf = push_forward_operator({}, c, ax);
    EXPECT_GT(pf.correction, 0.0);
    const auto a = pf.op.apply(u, 8);
    const auto lb = laplace_beltrami_local(c, u, 8);
    double worst = 0.0;
    for (std::size_t node = 0; node < u.node_count(); ++node) {
        const Point y = u.coords(node);
        if (std::abs(y[0]) > 0.5 || std::abs(y[1]) > 0.5) continue;
        worst = std::max(worst, std::abs(a(node) + lb(node)));
    }
    EXPECT_LT(worst, 1e-5);
}

TEST(PushForward, SymbolIdentityOnCurvedCharts) {
    const Atlas hyp = hyperbolic_mobius(2.0);
    const Atlas cone = cone_end();
    const GeometricOperator a{1.5, 0.0};
    for (std::size_t k : {0u, 7u, 20u}) {
        const auto chk = check_symbol_identity(a, hyp, k, chart_box_grid(hyp.charts[k], 17), 32, 9);
        EXPECT_EQ(chk.samples, 32u);
        EXPECT_LT(chk.max_error, 1e-6) << k;
    }
    const auto chk = check_symbol_identity(a, cone, 5, chart_box_grid(cone.charts[5], 17));
    EXPECT_LT(chk.max_error, 1e-6);
}

TEST(PushForward, EllipticityFromMetricBand) {
    const Atlas hyp = hyperbolic_mobius(2.0);
    const GeometricOperator a{2.0, 0.0};
    for (std::size_t k : {0u, 11u}) {
        const auto pf = push_forward_operator(a, hyp.charts[k], chart_box_grid(hyp.charts[k], 21));
        const double cg = std::max(pf.band_hi, 1.0 / pf.band_lo);
        EXPECT_GE(pf.epsilon, a.epsilon() / cg - 1e-12);
    }
}

TEST(ManifoldNorm, ConstantMatchesChartVolumes) {
    const Atlas at = flat_torus(1, 2);
    const auto model = torus_grid(1, 64);
    const auto grids = aligned_grids(at, model);
    const auto one = sample_manifold(at, grids, [](const Point&) { return cplx(1.0); });
    double vol = 0.0;
    for (const auto& g : grids) vol += g[0].length();
    EXPECT_NEAR(manifold_norm(one, at, trivial_spec(1, 0.0)), std::sqrt(vol), 1e-12);
    // overlap double counting against the torus volume 2 pi
    EXPECT_GT(vol, 2 * pi);
    const auto zero = sample_manifold(at, grids, [](const Point&) { return cplx(0.0); });
    EXPECT_EQ(manifold_norm(zero, at, trivial_spec(1, 1.0)), 0.0);
}

TEST(ManifoldNorm, EquivalentToDirectNormAndStableUnderHalving) {
    const auto model = torus_grid(1, 128);
    for (double s : {0.0, 1.0}) {
        const auto spec = trivial_spec(1, s);
        for (unsigned seed : {1u, 2u, 3u}) {
            const auto u = spectral::random_band_limited(model, 1, 6, seed);
            const spectral::TrigInterpolant interp(u);
            const double direct = spaces::anisotropic_norm(u, spec);
            std::vector<double> ratios;
            for (std::size_t cpa : {2u, 4u}) {
                const Atlas at = flat_torus(1, cpa);
                const auto mf = sample_manifold(at, aligned_grids(at, model), [&](const Point& p) { return interp(p)[0]; });
                ratios.push_back(manifold_norm(mf, at, spec) / direct);
                EXPECT_GE(ratios.back(), 0.25);
                EXPECT_LE(ratios.back(), 4.0);
            }
            EXPECT_LE(std::max(ratios[0] / ratios[1], ratios[1] / ratios[0]), 2.0);
        }
    }
}

TEST(ManifoldNorm, EquivalentToRetractionNorm) {
    const auto model = torus_grid(1, 64);
    const Atlas at = flat_torus(1, 2);
    const ManifoldCharts mc({}, at, model);
    const auto spec = trivial_spec(1, 1.0);
    for (unsigned seed : {4u, 5u}) {
        const auto u = spectral::random_band_limited(model, 1, 5, seed);
        const spectral::TrigInterpolant interp(u);
        const auto mf = sample_manifold(at, aligned_grids(at, model), [&](const Point& p) { return interp(p)[0]; });
        double rc = 0.0;
        for (const auto& piece : mc.decompose(u)) rc += std::pow(spaces::anisotropic_norm(piece, spec), 2);
        const double ratio = manifold_norm(mf, at, spec) / std::sqrt(rc);
        EXPECT_GE(ratio, 0.25);
        EXPECT_LE(ratio, 4.0);
    }
}

TEST(ManifoldNorm, RejectsForeignGrid) {
    const Atlas at = flat_torus(1, 2);
    ManifoldFunction mf;
    mf.pieces.assign(2, GridFunction({Axis::interval(9, -4.0, 4.0)}, 1));
    EXPECT_THROW(manifold_norm(mf, at, trivial_spec(1, 0.0)), ShapeError);
}

TEST(ManifoldFunction, OverlapAgreementSurvivesChartOperators) {
    const Atlas at = flat_torus(2, 2);
    const auto model = torus_grid(2, 64);
    const auto grids = aligned_grids(at, model);
    auto f = [](const Point& p) { return cplx(std::cos(p[0]) * std::sin(2.0 * p[1]) + 0.2 * std::cos(p[1])); };
    auto mf = sample_manifold(at, grids, f);
    EXPECT_LT(overlap_disagreement(at, mf), 1e-14);
    ManifoldFunction lb;
    for (std::size_t k = 0; k < at.charts.size(); ++k) lb.pieces.push_back(laplace_beltrami_local(at.charts[k], mf.pieces[k], 8));
    EXPECT_LT(overlap_disagreement(at, lb, 6), 1e-8);
}

TEST(ManifoldCharts, PartitionAndRetraction) {
    const auto model = torus_grid(2, 32);
    const ManifoldCharts mc({}, flat_torus(2, 2), model);
    EXPECT_LT(mc.partition_defect(), 1e-12);
    const auto u = spectral::random_band_limited(model, 1, 6, 3);
    EXPECT_LT((mc.assemble(mc.decompose(u)) - u).max_abs(), 1e-12);
}

TEST(ManifoldCharts, RemainderIntertwines) {
    const ManifoldCharts mc({1.0, 0.5}, flat_torus(1, 3), torus_grid(1, 96));
    localize::ChartTuple pieces;
    for (std::size_t k = 0; k < mc.size(); ++k) pieces.push_back(spectral::random_band_limited(mc.box(k), 1, 6, 10 + static_cast<unsigned>(k)));
    const auto b = mc.remainder(pieces);
    localize::ChartTuple lhs;
    for (std::size_t k = 0; k < mc.size(); ++k) lhs.push_back(mc.pushed(k).op.principal_part().apply(pieces[k]) + b[k]);
    const auto direct = mc.model_operator().apply(mc.assemble(pieces));
    EXPECT_LT((mc.assemble(lhs) - direct).max_abs(), 1e-9 * direct.max_abs());
}

namespace {

struct TorusHeat {
    GridFunction f;
    GridFunction u0;
    spaces::NormSpec spec{0.0, 2.0, weights::WeightSystem::parabolic(1, 2), 1.0};
};

// (d_t + eta - d_xx) u* = eta exp(-t) cos x for u* = exp(-t) cos x
TorusHeat torus_heat(std::size_t nx, std::size_t nt, double T, double eta) {
    const auto sp = torus_grid(1, nx);
    const std::vector<Axis> ax{sp[0], Axis::half_line(nt, T / static_cast<double>(nt - 1))};
    TorusHeat h;
    h.f = GridFunction::sample_scalar(ax, [&](const Point& x) { return cplx(eta * std::exp(-x[1]) * std::cos(x[0])); });
    h.u0 = GridFunction::sample_scalar(sp, [](const Point& x) { return cplx(std::cos(x[0])); });
    return h;
}

}  // namespace

TEST(ManifoldSolve, TwoChartTorusHeatMatchesSpectralSolve) {
    const Atlas at = flat_torus(1, 2);
    const Axis time = Axis::half_line(65, 1.0 / 64.0);
    const auto plan = plan_manifold_parabolic({}, at, torus_grid(1, 64), time);
    const double eta = plan.choice.eta;
    EXPECT_GE(eta, plan.eta0);
    EXPECT_LE(plan.choice.contraction, 0.5);

    const auto h = torus_heat(64, 65, 1.0, eta);
    ManifoldOptions opt;
    opt.eta = eta;
    const auto rep = solve_manifold_parabolic({}, h.f, h.u0, at, h.spec, opt);
    const cauchy::CauchyProblem p{DifferentialOperator::laplacian(1), h.f, h.u0, h.spec, 1.0};
    const auto ref = cauchy::solve_cauchy_frozen(p, eta);
    EXPECT_LT(relative_l2(rep.u, ref.u), 1e-6);
    EXPECT_LT(rep.residual, 1e-4);
    const auto exact = GridFunction::sample_scalar(h.f.axes(), [](const Point& x) { return cplx(std::exp(-x[1]) * std::cos(x[0])); });
    EXPECT_LT(relative_l2(rep.u, exact), 1e-6);
}

TEST(ManifoldSolve, ZeroDataGivesZero) {
    const auto h = torus_heat(32, 17, 0.5, 0.0);
    ManifoldOptions opt;
    opt.eta = 100.0;
    const auto rep = solve_manifold_parabolic({}, h.f, h.u0.zeros_like(), flat_torus(1, 2), h.spec, opt);
    EXPECT_EQ(rep.u.max_abs(), 0.0);
}

TEST(ManifoldSolve, CylinderMassDecaysAtEta) {
    const double z = pi;
    const Atlas at = cylinder_window(z, 2, 2);
    const std::vector<Axis> sp{Axis::periodic_box(32, 2 * z), Axis::periodic_box(32, 2 * pi)};
    const std::vector<Axis> ax{sp[0], sp[1], Axis::half_line(17, 0.5 / 16.0)};
    const auto u0 = GridFunction::sample_scalar(sp, [](const Point& x) {
        return cplx(1.0 + 0.3 * std::cos(x[0]) * std::cos(x[1]) + 0.2 * std::sin(2.0 * x[1]));
    });
    const GridFunction f(ax, 1);
    spaces::NormSpec spec{0.0, 2.0, weights::WeightSystem::parabolic(2, 2), 1.0};
    const auto rep = solve_manifold_parabolic({}, f, u0, at, spec);
    // d/dt int u = -eta int u since int Delta_g u = 0
    const double m0 = std::real(spaces::lq_norm(u0, 1.0));
    double worst = 0.0;
    for (std::size_t it = 0; it < ax[2].n; ++it) {
        double mass = 0.0;
        const auto slice = time_slice(rep.u, it);
        for (std::size_t node = 0; node < slice.node_count(); ++node) mass += slice(node).real();
        mass *= sp[0].step * sp[1].step;
        worst = std::max(worst, std::abs(mass - m0 * std::exp(-rep.eta * ax[2].coord(it))) / m0);
    }
    EXPECT_LT(worst, 1e-6);
}

TEST(ManifoldSolve, RejectsUnsupportedAtlasAndOperator) {
    const auto h = torus_heat(32, 17, 0.5, 1.0);
    EXPECT_THROW(solve_manifold_parabolic({}, h.f, h.u0, hyperbolic_mobius(1.0), h.spec), ConfigurationError);
    EXPECT_THROW(solve_manifold_parabolic({-1.0, 0.0}, h.f, h.u0, flat_torus(1, 2), h.spec), EllipticityError);
    Atlas broken = flat_torus(1, 2);
    broken.declared.multiplicity = 1;
    EXPECT_THROW(solve_manifold_parabolic({}, h.f, h.u0, broken, h.spec), ValidationError);
}

TEST(ResolventSweep, TorusHeatProductsBounded) {
    const auto model = torus_grid(1, 64);
    const auto g = spectral::random_band_limited(model, 1, 8, 2);
    const std::vector<cplx> lambdas{0.0, 1.0, 10.0, 100.0, cplx(0.0, 1000.0)};
    const auto sw = resolvent_sweep_manifold({}, flat_torus(1, 2), model, lambdas, 0.0, g);
    ASSERT_EQ(sw.products.size(), lambdas.size());
    EXPECT_LE(sw.spread(), 3.0) << sw.to_json().dump();
    for (double gap : sw.direct_gap) EXPECT_LT(gap, 1e-8);
    EXPECT_THROW(resolvent_sweep_manifold({}, flat_torus(1, 2), model, {cplx(-1.0, 0.0)}, 10.0, g), ArgumentError);
}
