#include "parreg/spectral.hpp"

#include <fftw3.h>

#include <cmath>
#include <mutex>
#include <numbers>
#include <random>

#include "parreg/errors.hpp"
#include "parreg/finite_difference.hpp"

namespace parreg::spectral {

namespace {

std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

std::vector<bool> resolve_mask(const GridFunction& u, std::vector<bool> mask) {
    if (mask.empty()) {
        mask.resize(u.rank());
        for (std::size_t k = 0; k < u.rank(); ++k) mask[k] = u.axis(k).periodic;
    }
    if (mask.size() != u.rank()) throw ShapeError("transform mask length differs from grid rank");
    for (std::size_t k = 0; k < u.rank(); ++k)
        if (mask[k] && !u.axis(k).periodic) throw ConfigurationError("DFT requested on a non-periodic axis");
    return mask;
}

void transform(GridFunction& u, const std::vector<bool>& mask, int sign) {
    std::vector<fftw_iodim> dims;
    std::vector<fftw_iodim> loops;
    const auto strides = u.strides();
    const int f = static_cast<int>(u.fiber());
    for (std::size_t k = 0; k < u.rank(); ++k) {
        fftw_iodim d{static_cast<int>(u.axis(k).n), static_cast<int>(strides[k]) * f,
                     static_cast<int>(strides[k]) * f};
        if (mask[k])
            dims.push_back(d);
        else if (u.axis(k).n > 1)
            loops.push_back(d);
    }
    if (dims.empty()) return;
    if (f > 1) loops.push_back(fftw_iodim{f, 1, 1});
    auto* data = reinterpret_cast<fftw_complex*>(u.data().data());
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(planner_mutex());
        plan = fftw_plan_guru_dft(static_cast<int>(dims.size()), dims.data(), static_cast<int>(loops.size()),
                                  loops.data(), data, data, sign, FFTW_ESTIMATE);
    }
    if (!plan) throw ConfigurationError("FFTW could not create a plan for this grid");
    fftw_execute(plan);
    {
        std::lock_guard<std::mutex> lock(planner_mutex());
        fftw_destroy_plan(plan);
    }
}

}  // namespace

std::vector<double> wavenumbers(const Axis& axis) {
    std::vector<double> k(axis.n);
    const double base = 2.0 * std::numbers::pi / axis.length();
    const auto n = static_cast<long>(axis.n);
    for (long j = 0; j < n; ++j) {
        const long s = (2 * j < n) ? j : j - n;
        k[static_cast<std::size_t>(j)] = base * static_cast<double>(s);
    }
    return k;
}

bool is_nyquist(const Axis& axis, std::size_t j) { return axis.n % 2 == 0 && 2 * j == axis.n; }

void forward(GridFunction& u, std::vector<bool> mask) { transform(u, resolve_mask(u, std::move(mask)), FFTW_FORWARD); }

void inverse(GridFunction& u, std::vector<bool> mask) {
    mask = resolve_mask(u, std::move(mask));
    transform(u, mask, FFTW_BACKWARD);
    double count = 1.0;
    for (std::size_t k = 0; k < u.rank(); ++k)
        if (mask[k]) count *= static_cast<double>(u.axis(k).n);
    u *= 1.0 / count;
}

Point frequency(const GridFunction& u, std::size_t node) {
    Point k(u.rank());
    for (std::size_t a = u.rank(); a-- > 0;) {
        const Axis& ax = u.axis(a);
        const std::size_t j = node % ax.n;
        node /= ax.n;
        const auto n = static_cast<long>(ax.n);
        const long s = (2 * static_cast<long>(j) < n) ? static_cast<long>(j) : static_cast<long>(j) - n;
        k[a] = 2.0 * std::numbers::pi / ax.length() * static_cast<double>(s);
    }
    return k;
}

GridFunction apply_scalar(const GridFunction& u, const std::function<cplx(const Point&)>& m) {
    for (const auto& a : u.axes())
        if (!a.periodic) throw ConfigurationError("multiplier requires periodic axes");
    GridFunction v = u;
    forward(v);
    for (std::size_t node = 0; node < v.node_count(); ++node) {
        const cplx s = m(frequency(v, node));
        for (auto& z : v.at_node(node)) z *= s;
    }
    inverse(v);
    return v;
}

GridFunction derivative(const GridFunction& u, std::span<const int> alpha, int fd_accuracy) {
    if (alpha.size() != u.rank()) throw ShapeError("multiindex length differs from grid rank");
    GridFunction v = u;
    std::vector<bool> mask(u.rank(), false);
    bool spectral_needed = false;
    for (std::size_t k = 0; k < u.rank(); ++k) {
        if (alpha[k] < 0) throw ArgumentError("negative multiindex entry");
        if (alpha[k] > 0 && u.axis(k).periodic) {
            mask[k] = true;
            spectral_needed = true;
        }
    }
    if (spectral_needed) {
        forward(v, mask);
        std::vector<std::vector<cplx>> factors(u.rank());
        for (std::size_t k = 0; k < u.rank(); ++k) {
            if (!mask[k]) continue;
            const auto kk = wavenumbers(u.axis(k));
            factors[k].resize(kk.size());
            for (std::size_t j = 0; j < kk.size(); ++j) {
                if (is_nyquist(u.axis(k), j) && alpha[k] % 2 == 1)
                    factors[k][j] = 0.0;
                else
                    factors[k][j] = std::pow(cplx{0.0, kk[j]}, alpha[k]);
            }
        }
        for (std::size_t node = 0; node < v.node_count(); ++node) {
            std::size_t rest = node;
            cplx s{1.0, 0.0};
            for (std::size_t a = u.rank(); a-- > 0;) {
                const std::size_t j = rest % u.axis(a).n;
                rest /= u.axis(a).n;
                if (mask[a]) s *= factors[a][j];
            }
            for (auto& z : v.at_node(node)) z *= s;
        }
        inverse(v, mask);
    }
    for (std::size_t k = 0; k < u.rank(); ++k)
        if (alpha[k] > 0 && !u.axis(k).periodic) v = fd::derivative_along(v, k, alpha[k], fd_accuracy);
    return v;
}

TrigInterpolant::TrigInterpolant(const GridFunction& u) : hat_(u) {
    forward(hat_);
    hat_ *= 1.0 / static_cast<double>(u.node_count());
}

std::vector<cplx> TrigInterpolant::operator()(const Point& p) const {
    const std::size_t rank = hat_.rank();
    if (p.size() != rank) throw ShapeError("point dimension differs from the grid rank");
    std::vector<std::vector<cplx>> phase(rank);
    for (std::size_t a = 0; a < rank; ++a) {
        const Axis& ax = hat_.axis(a);
        const auto k = wavenumbers(ax);
        phase[a].resize(ax.n);
        for (std::size_t j = 0; j < ax.n; ++j) {
            const double arg = k[j] * (p[a] - ax.origin);
            phase[a][j] = is_nyquist(ax, j) ? cplx(std::cos(arg)) : std::exp(cplx(0.0, arg));
        }
    }
    std::vector<cplx> out(hat_.fiber(), 0.0);
    std::vector<std::size_t> idx(rank, 0);
    for (std::size_t node = 0; node < hat_.node_count(); ++node) {
        std::size_t rest = node;
        cplx w = 1.0;
        for (std::size_t a = rank; a-- > 0;) {
            w *= phase[a][rest % hat_.axis(a).n];
            rest /= hat_.axis(a).n;
        }
        for (std::size_t c = 0; c < hat_.fiber(); ++c) out[c] += w * hat_(node, c);
    }
    return out;
}

GridFunction random_band_limited(std::vector<Axis> axes, std::size_t fiber, int kmax, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    GridFunction v(std::move(axes), fiber);
    for (std::size_t node = 0; node < v.node_count(); ++node) {
        std::size_t rest = node;
        bool keep = true;
        for (std::size_t a = v.rank(); a-- > 0;) {
            const auto n = static_cast<long>(v.axis(a).n);
            const auto j = static_cast<long>(rest % v.axis(a).n);
            rest /= v.axis(a).n;
            const long s = (2 * j < n) ? j : j - n;
            if (std::abs(s) > kmax || (n % 2 == 0 && 2 * j == n)) keep = false;
        }
        for (auto& z : v.at_node(node)) z = keep ? cplx{normal(rng), normal(rng)} : cplx{0.0, 0.0};
    }
    inverse(v);
    const double m = v.max_abs();
    if (m > 0.0) v *= 1.0 / m;
    return v;
}

}  // namespace parreg::spectral
