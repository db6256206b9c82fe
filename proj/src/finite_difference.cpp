#include "parreg/finite_difference.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "parreg/errors.hpp"

namespace parreg::fd {

std::vector<std::vector<double>> fornberg(double z, std::span<const double> x, int max_order) {
    const std::size_t n = x.size();
    const auto m = static_cast<std::size_t>(max_order);
    std::vector<std::vector<double>> c(m + 1, std::vector<double>(n, 0.0));
    if (n == 0) return c;
    double c1 = 1.0;
    double c4 = x[0] - z;
    c[0][0] = 1.0;
    for (std::size_t i = 1; i < n; ++i) {
        const std::size_t mn = std::min(i, m);
        double c2 = 1.0;
        const double c5 = c4;
        c4 = x[i] - z;
        for (std::size_t j = 0; j < i; ++j) {
            const double c3 = x[i] - x[j];
            c2 *= c3;
            if (j == i - 1) {
                for (std::size_t k = mn; k >= 1; --k)
                    c[k][i] = c1 * (static_cast<double>(k) * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for (std::size_t k = mn; k >= 1; --k)
                c[k][j] = (c4 * c[k][j] - static_cast<double>(k) * c[k - 1][j]) / c3;
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    return c;
}

std::vector<double> unit_weights(double z, std::size_t n, int order) {
    std::vector<double> x(n);
    for (std::size_t j = 0; j < n; ++j) x[j] = static_cast<double>(j);
    return fornberg(z, x, order)[static_cast<std::size_t>(order)];
}

GridFunction derivative_along(const GridFunction& u, std::size_t axis, int order, int accuracy) {
    if (order < 0 || accuracy < 1) throw ArgumentError("derivative order must be >= 0, accuracy >= 1");
    if (order == 0) return u;
    const Axis& ax = u.axis(axis);
    const std::size_t width = static_cast<std::size_t>(order + accuracy);
    if (ax.n < width)
        throw ConfigurationError("axis " + std::to_string(axis) + " has " + std::to_string(ax.n) +
                                 " samples; derivative of order " + std::to_string(order) + " needs " +
                                 std::to_string(width));
    const double scale = std::pow(ax.step, -order);
    // one weight row per output position relative to its clamped window
    std::vector<std::size_t> start(ax.n);
    std::vector<std::vector<double>> rows(ax.n);
    for (std::size_t i = 0; i < ax.n; ++i) {
        const std::ptrdiff_t lo = static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(width / 2);
        const std::size_t s = static_cast<std::size_t>(
            std::clamp<std::ptrdiff_t>(lo, 0, static_cast<std::ptrdiff_t>(ax.n - width)));
        start[i] = s;
        rows[i] = unit_weights(static_cast<double>(i - s), width, order);
        for (auto& w : rows[i]) w *= scale;
    }
    const auto strides = u.strides();
    const std::size_t stride = strides[axis] * u.fiber();
    const std::size_t outer = u.node_count() / (ax.n * strides[axis]);
    GridFunction out = u.zeros_like();
    const auto& in = u.data();
    auto& res = out.data();
    const std::size_t inner = strides[axis] * u.fiber();
    for (std::size_t o = 0; o < outer; ++o) {
        const std::size_t base0 = o * ax.n * inner;
        for (std::size_t c = 0; c < inner; ++c) {
            const std::size_t base = base0 + c;
            for (std::size_t i = 0; i < ax.n; ++i) {
                cplx acc{0.0, 0.0};
                const auto& w = rows[i];
                for (std::size_t j = 0; j < width; ++j) acc += w[j] * in[base + (start[i] + j) * stride];
                res[base + i * stride] = acc;
            }
        }
    }
    return out;
}

GridFunction one_sided_at_start(const GridFunction& u, int order, int accuracy) {
    const std::size_t nt = u.axes().back().n;
    const std::size_t width = static_cast<std::size_t>(order + accuracy);
    if (nt < width)
        throw ConfigurationError("trace of order " + std::to_string(order) + " needs at least " +
                                 std::to_string(width) + " time samples, grid has " + std::to_string(nt));
    auto w = unit_weights(0.0, width, order);
    const double scale = std::pow(u.axes().back().step, -order);
    GridFunction out(spatial_axes(u), u.fiber());
    const std::size_t f = u.fiber();
    for (std::size_t node = 0; node < out.node_count(); ++node)
        for (std::size_t c = 0; c < f; ++c) {
            cplx acc{0.0, 0.0};
            for (std::size_t j = 0; j < width; ++j) acc += w[j] * u(node * nt + j, c);
            out(node, c) = scale * acc;
        }
    return out;
}

}  // namespace parreg::fd
