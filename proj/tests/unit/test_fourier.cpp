#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "parreg/errors.hpp"
#include "parreg/fourier.hpp"
#include "parreg/spectral.hpp"

using namespace parreg;
using namespace parreg::fourier;
using operators::DifferentialOperator;
using std::numbers::pi;
using weights::WeightSystem;

namespace {

Matrix scalar(cplx v) {
    Matrix m(1, 1);
    m(0, 0) = v;
    return m;
}

double max_diff(const GridFunction& a, const GridFunction& b) {
    double e = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) e = std::max(e, std::abs(a.data()[i] - b.data()[i]));
    return e;
}

std::vector<Axis> box2(std::size_t nx, std::size_t nt, double lt = 2 * pi) {
    return {Axis::periodic_box(nx, 2 * pi), Axis::periodic_box(nt, lt)};
}

}  // namespace

TEST(Multiplier, IdentityAndEigenfunction) {
    const std::vector<Axis> ax{Axis::periodic_box(32, 2 * pi)};
    const auto u = spectral::random_band_limited(ax, 2, 6, 1);
    const MultiplierOperator id(ax, 2, [](const Point&) { return Matrix::Identity(2, 2).eval(); });
    EXPECT_LT(max_diff(apply_multiplier(id, u), u), 1e-13);
    const auto w = GridFunction::sample_scalar(ax, [](const Point& x) { return std::exp(cplx(0.0, x[0])); });
    const MultiplierOperator d(ax, 1, [](const Point& k) { return scalar(k[0]); });
    EXPECT_LT(max_diff(apply_multiplier(d, w), w), 1e-13);
}

TEST(Multiplier, CompositionAndInverse) {
    const auto ax = box2(16, 16);
    const auto u = spectral::random_band_limited(ax, 2, 5, 7);
    const MultiplierOperator a(ax, 2, [](const Point& k) {
        Matrix m(2, 2);
        m << 1.0 + k[0] * k[0], cplx(0.0, k[1]), 0.5, 2.0 + std::abs(k[1]);
        return m;
    });
    const MultiplierOperator b(ax, 2, [](const Point& k) {
        Matrix m(2, 2);
        m << std::cos(k[0]), 1.0, cplx(0.0, 1.0), 3.0;
        return m;
    });
    const auto lhs = apply_multiplier(a, apply_multiplier(b, u));
    const auto rhs = apply_multiplier(a.compose(b), u);
    EXPECT_LT(max_diff(lhs, rhs), 1e-12 * (1.0 + rhs.max_abs()));
    const auto back = apply_multiplier(a.inverse(), apply_multiplier(a, u));
    EXPECT_LT(max_diff(back, u), 1e-12);
    EXPECT_TRUE(a.inverse().invertible());
    const MultiplierOperator sing(ax, 1, [](const Point& k) { return scalar(k[0]); });
    EXPECT_THROW((void)sing.inverse(), EllipticityError);
}

TEST(Lift, IdentitySingleModeAndInversion) {
    const std::vector<Axis> ax{Axis::periodic_box(16, 2 * pi)};
    const spaces::NormSpec spec{0.5, 2.0, WeightSystem::trivial(1), 1.0};
    const auto u = spectral::random_band_limited(ax, 1, 5, 3);
    EXPECT_LT(max_diff(lift(u, 0.0, spec), u), 1e-14);
    auto one = GridFunction::sample_scalar(ax, [](const Point&) { return cplx(1.0); });
    EXPECT_LT(max_diff(lift(one, 2.0, spec), one), 1e-14);
    auto mode = GridFunction::sample_scalar(ax, [](const Point& x) { return std::exp(cplx(0.0, 3 * x[0])); });
    const auto lm = lift(mode, 1.5, {0.5, 2.0, WeightSystem::trivial(1), 2.0});
    EXPECT_LT(max_diff(lm, std::pow(13.0, 0.75) * mode), 1e-12);
    EXPECT_LT(max_diff(lift(lift(u, 1.7, spec), -1.7, spec), u), 1e-12);
}

TEST(Lift, NormTransferIsEtaUniform) {
    const auto ax = box2(16, 16);
    const auto w = WeightSystem::parabolic(1, 2);
    const auto u = spectral::random_band_limited(ax, 1, 3, 11);
    std::vector<double> ratios;
    for (double eta : {1.0, 10.0, 100.0}) {
        const spaces::NormSpec s0{0.5, 2.0, w, eta};
        const spaces::NormSpec s1{2.5, 2.0, w, eta};
        ratios.push_back(spaces::anisotropic_norm(lift(u, 2.0, s1), s0) / spaces::anisotropic_norm(u, s1));
    }
    const auto [lo, hi] = std::minmax_element(ratios.begin(), ratios.end());
    EXPECT_GT(*lo, 0.1);
    EXPECT_LT(*hi / *lo, 3.0);
}

TEST(FullSpace, SingleModeAndZero) {
    const auto ax = box2(16, 16);
    const auto heat = DifferentialOperator::laplacian(1);
    const auto f = GridFunction::sample_scalar(ax, [](const Point& x) { return std::exp(cplx(0.0, x[0])); });
    const auto rep = solve_fullspace_parabolic(heat, f, 1.0);
    EXPECT_LT(max_diff(rep.u, 0.5 * f), 1e-14);
    EXPECT_LT(rep.residual, 1e-12);
    EXPECT_EQ(solve_fullspace_parabolic(heat, f.zeros_like(), 1.0).u.max_abs(), 0.0);
}

TEST(FullSpace, ResidualAndTwoSidedInverse) {
    const auto ax = box2(32, 32);
    auto a = DifferentialOperator::laplacian(1, 2);
    Matrix c(2, 2);
    c << 1.0, 0.5, 0.0, 2.0;
    a.set({2}, c);
    a.set({1}, Matrix(cplx(0.0, 0.3) * Matrix::Identity(2, 2)));
    const auto f = spectral::random_band_limited(ax, 2, 6, 5);
    const auto rep = solve_fullspace_parabolic(a, f, 3.0);
    EXPECT_LT(rep.residual, 1e-10);
    const auto u = spectral::random_band_limited(ax, 2, 6, 6);
    const auto back = solve_fullspace_parabolic(a, parabolic_apply(a, u, 3.0), 3.0).u;
    EXPECT_LT(max_diff(back, u), 1e-11);
}

TEST(FullSpace, MaximalRegularityRatioEtaUniform) {
    const auto ax = box2(16, 16);
    const auto heat = DifferentialOperator::laplacian(1);
    const auto f = spectral::random_band_limited(ax, 1, 4, 21);
    for (double q : {2.0, spaces::kInf}) {
        std::vector<double> r;
        for (double eta : {1.0, 10.0, 100.0}) r.push_back(mr_ratio(solve_fullspace_parabolic(heat, f, eta).u, f, 2, 0.5, q, eta));
        const auto [lo, hi] = std::minmax_element(r.begin(), r.end());
        EXPECT_LT(*hi / *lo, 3.0) << "q = " << q;
    }
}

TEST(Resolvent, ExamplesIdentityAndDecay) {
    const std::vector<Axis> ax{Axis::periodic_box(32, 2 * pi)};
    const auto heat = DifferentialOperator::laplacian(1);
    auto one = GridFunction::sample_scalar(ax, [](const Point&) { return cplx(1.0); });
    EXPECT_LT(max_diff(resolvent_apply(heat, 0.0, one, 1.0), one), 1e-14);
    const auto u = spectral::random_band_limited(ax, 1, 8, 2);
    for (cplx l : {cplx(0.0), cplx(1.0), cplx(0.0, 50.0)}) {
        const auto v = resolvent_apply(heat, l, u, 2.0);
        auto back = heat.apply(v);
        auto lv = v;
        lv *= l + 2.0;
        back += lv;
        EXPECT_LT(max_diff(back, u), 1e-10);
    }
    std::vector<double> prods;
    for (double mag : {1.0, 10.0, 100.0})
        for (cplx dir : {cplx(1.0), cplx(0.0, 1.0)}) {
            const cplx l = mag * dir;
            const double nv = spaces::lq_norm(resolvent_apply(heat, l, u, 1.0), 2.0);
            // a fixed u never exceeds the operator norm
            EXPECT_LE((std::abs(l) + 1.0) * nv / spaces::lq_norm(u, 2.0), resolvent_decay_product(heat, l, ax, 1.0) + 1e-12);
            prods.push_back(resolvent_decay_product(heat, l, ax, 1.0));
        }
    const auto [lo, hi] = std::minmax_element(prods.begin(), prods.end());
    EXPECT_LT(*hi / *lo, 3.0);
    // (|l| + eta) / |l + eta + s| <= sqrt(2) for Re l >= 0 and s >= 0
    EXPECT_LE(*hi, std::sqrt(2.0) + 1e-12);
}

TEST(Semigroup, ExamplesAndLaw) {
    const std::vector<Axis> ax{Axis::periodic_box(32, 2 * pi)};
    const auto heat = DifferentialOperator::laplacian(1);
    const auto u = spectral::random_band_limited(ax, 1, 8, 4);
    EXPECT_EQ(semigroup_step(heat, 0.0, u, 1.0).data(), u.data());
    auto one = GridFunction::sample_scalar(ax, [](const Point&) { return cplx(1.0); });
    EXPECT_NEAR(semigroup_step(heat, 1.0, one, 1.0)(5).real(), 0.3678794, 1e-7);
    const auto ab = semigroup_step(heat, 0.3, semigroup_step(heat, 0.2, u, 1.0), 1.0);
    EXPECT_LT(max_diff(ab, semigroup_step(heat, 0.5, u, 1.0)), 1e-12);
    double prev = spaces::lq_norm(u, 2.0);
    for (double t : {0.01, 0.1, 0.5, 1.0}) {
        const double n = spaces::lq_norm(semigroup_step(heat, t, u, 0.0), 2.0);
        EXPECT_LE(n, prev);
        prev = n;
    }
    EXPECT_THROW(semigroup_step(heat, -1.0, u, 1.0), ArgumentError);
}

TEST(Duhamel, ZeroAndSteadyState) {
    const auto ax = box2(8, 64);
    const auto heat = DifferentialOperator::laplacian(1);
    EXPECT_EQ(convolution_solve(heat, GridFunction(ax, 1), 1.0).max_abs(), 0.0);
    const auto f = GridFunction::sample_scalar(ax, [](const Point& x) { return std::exp(cplx(0.0, x[0])); });
    const auto u = convolution_solve(heat, f, 1.0);
    EXPECT_LT(max_diff(u, 0.5 * f), 1e-12);
}

TEST(Duhamel, AgreesWithFullSpaceSolveAtSecondOrder) {
    const auto heat = DifferentialOperator::laplacian(1);
    auto make = [](std::size_t nt) {
        return GridFunction::sample_scalar(box2(16, nt), [](const Point& x) {
            return std::exp(cplx(0.0, x[0] + x[1])) + 0.5 * std::cos(2 * x[0]) * std::sin(x[1]) + 0.25;
        });
    };
    std::vector<double> gaps;
    for (std::size_t nt : {256u, 512u}) {
        const auto f = make(nt);
        gaps.push_back(relative_l2(convolution_solve(heat, f, 1.0), solve_fullspace_parabolic(heat, f, 1.0).u));
    }
    EXPECT_LT(gaps[0], 1e-4);
    EXPECT_GT(gaps[0] / gaps[1], 3.0);
}

TEST(Causal, FourthOrderAgainstClosedForm) {
    const auto heat = DifferentialOperator::laplacian(1);
    // v' + 2 v = sin t e^{ix}, v(0) = 0
    auto exact = [](const Point& x) {
        const double t = x[1];
        return std::exp(cplx(0.0, x[0])) * (2 * std::sin(t) - std::cos(t) + std::exp(-2 * t)) / 5.0;
    };
    std::vector<double> errs;
    for (std::size_t nt : {41u, 81u}) {
        const std::vector<Axis> ax{Axis::periodic_box(8, 2 * pi), Axis::interval(nt, 0.0, 2.0)};
        const auto g = GridFunction::sample_scalar(ax, [](const Point& x) { return std::exp(cplx(0.0, x[0])) * std::sin(x[1]); });
        errs.push_back(relative_l2(causal_solve(heat, g, 1.0), GridFunction::sample_scalar(ax, exact)));
    }
    EXPECT_LT(errs[1], 1e-7);
    EXPECT_GT(errs[0] / errs[1], 12.0);
}

TEST(Causal, InitialValueMatchesSemigroup) {
    const auto heat = DifferentialOperator::laplacian(1);
    const std::vector<Axis> sp{Axis::periodic_box(16, 2 * pi)};
    const auto u0 = spectral::random_band_limited(sp, 1, 5, 9);
    const Axis t = Axis::interval(11, 0.0, 1.0);
    GridFunction g({sp[0], t}, 1);
    const auto v = causal_solve(heat, g, 0.5, &u0);
    for (std::size_t it = 0; it < t.n; ++it)
        EXPECT_LT(max_diff(time_slice(v, it), semigroup_step(heat, t.coord(it), u0, 0.5)), 1e-12);
    const auto av = shifted_apply(heat, u0, 0.5);
    auto direct = heat.apply(u0);
    direct += 0.5 * u0;
    EXPECT_LT(max_diff(av, direct), 1e-10);
}
