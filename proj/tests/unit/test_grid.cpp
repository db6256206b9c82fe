#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "parreg/errors.hpp"
#include "parreg/finite_difference.hpp"
#include "parreg/grid.hpp"
#include "parreg/spectral.hpp"

using namespace parreg;
using std::numbers::pi;

TEST(Grid, LayoutIsRowMajorWithFiberInnermost) {
    GridFunction g({Axis::periodic_box(4, 1.0), Axis::periodic_box(3, 1.0)}, 2);
    EXPECT_EQ(g.size(), 24u);
    const std::vector<std::size_t> idx{2, 1};
    EXPECT_EQ(g.flat_index(idx), 7u);
    EXPECT_EQ(g.multi_index(7), idx);
    g(7, 1) = 5.0;
    EXPECT_EQ(g.data()[15], cplx(5.0));
}

TEST(Grid, ShapeMismatchThrows) {
    EXPECT_THROW(GridFunction({Axis::periodic_box(4, 1.0)}, 1, std::vector<cplx>(3)), ShapeError);
    GridFunction a({Axis::periodic_box(4, 1.0)}, 1);
    GridFunction b({Axis::periodic_box(5, 1.0)}, 1);
    EXPECT_THROW(a += b, ShapeError);
}

TEST(Grid, TimeSliceRoundTrip) {
    auto u = GridFunction::sample_scalar({Axis::periodic_box(8, 2 * pi), Axis::half_line(5, 0.1)},
                                         [](const Point& x) { return cplx(x[0] + 10 * x[1]); });
    auto s = time_slice(u, 3);
    EXPECT_NEAR(s(2).real(), u.axis(0).coord(2) + 3.0, 1e-14);
    GridFunction v = u.zeros_like();
    for (std::size_t it = 0; it < 5; ++it) set_time_slice(v, it, time_slice(u, it));
    EXPECT_EQ(v.data(), u.data());
}

TEST(Fornberg, ClassicalCentralWeights) {
    const auto w = fd::unit_weights(1.0, 3, 2);
    EXPECT_NEAR(w[0], 1.0, 1e-14);
    EXPECT_NEAR(w[1], -2.0, 1e-14);
    EXPECT_NEAR(w[2], 1.0, 1e-14);
    const auto d1 = fd::unit_weights(2.0, 5, 1);
    EXPECT_NEAR(d1[0], 1.0 / 12, 1e-14);
    EXPECT_NEAR(d1[1], -2.0 / 3, 1e-14);
}

TEST(Spectral, DerivativeOfPlaneWave) {
    const Axis ax = Axis::periodic_box(32, 2 * pi);
    auto u = GridFunction::sample_scalar({ax}, [](const Point& x) { return std::exp(cplx(0, 3 * x[0])); });
    const std::vector<int> a2{2};
    auto d = spectral::derivative(u, a2);
    for (std::size_t i = 0; i < 32; ++i) EXPECT_NEAR(std::abs(d(i) + 9.0 * u(i)), 0.0, 1e-11);
}

TEST(Spectral, MixedDerivativeOnHalfLine) {
    auto u = GridFunction::sample_scalar({Axis::periodic_box(16, 2 * pi), Axis::half_line(41, 0.025)},
                                         [](const Point& x) { return std::sin(x[0]) * std::exp(-x[1]); });
    const std::vector<int> a{1, 1};
    auto d = spectral::derivative(u, a, 6);
    double err = 0;
    for (std::size_t n = 0; n < u.node_count(); ++n) {
        const auto x = u.coords(n);
        err = std::max(err, std::abs(d(n) + std::cos(x[0]) * std::exp(-x[1])));
    }
    EXPECT_LT(err, 1e-8);
}

TEST(Spectral, FiberComponentsTransformIndependently) {
    auto u = GridFunction::sample({Axis::periodic_box(16, 2 * pi), Axis::periodic_box(8, 2 * pi)}, 2,
                                  [](const Point& x, std::span<cplx> v) {
                                      v[0] = std::cos(x[0]);
                                      v[1] = std::sin(2 * x[1]);
                                  });
    auto v = u;
    spectral::forward(v);
    spectral::inverse(v);
    for (std::size_t i = 0; i < u.size(); ++i) EXPECT_NEAR(std::abs(u.data()[i] - v.data()[i]), 0.0, 1e-14);
    const std::vector<int> a{0, 1};
    auto d = spectral::derivative(u, a);
    for (std::size_t n = 0; n < u.node_count(); ++n) {
        EXPECT_NEAR(std::abs(d(n, 0)), 0.0, 1e-12);
        EXPECT_NEAR(std::abs(d(n, 1) - 2 * std::cos(2 * u.coords(n)[1])), 0.0, 1e-12);
    }
}
