#include "parreg/weights.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <string>

#include "parreg/errors.hpp"
#include "parreg/finite_difference.hpp"
#include "parreg/parallel.hpp"
#include "parreg/spectral.hpp"

namespace parreg::weights {

WeightSystem::WeightSystem(std::vector<int> dims, std::vector<int> weights)
    : dims_(std::move(dims)), weights_(std::move(weights)) {
    if (dims_.empty() || dims_.size() != weights_.size())
        throw ArgumentError("weight system needs equally many dims and weights (at least one cluster)");
    for (std::size_t i = 0; i < dims_.size(); ++i) {
        if (dims_[i] <= 0 || weights_[i] <= 0) throw ArgumentError("cluster dims and weights must be positive");
        offsets_.push_back(d_);
        d_ += dims_[i];
        nu_ = std::lcm(nu_, weights_[i]);
        abs_omega_ += dims_[i] * weights_[i];
        for (int k = 0; k < dims_[i]; ++k) omega_.push_back(weights_[i]);
    }
}

WeightSystem WeightSystem::trivial(int d) {
    return WeightSystem(std::vector<int>(static_cast<std::size_t>(d), 1), std::vector<int>(static_cast<std::size_t>(d), 1));
}

WeightSystem WeightSystem::parabolic(int m, int r) { return WeightSystem({m, 1}, {1, r}); }

int WeightSystem::dot(const std::vector<int>& alpha) const {
    if (alpha.size() != omega_.size()) throw ShapeError("multiindex length differs from d");
    int s = 0;
    for (std::size_t k = 0; k < alpha.size(); ++k) s += alpha[k] * omega_[k];
    return s;
}

nlohmann::json WeightSystem::to_json() const { return {{"dims", dims_}, {"weights", weights_}}; }

WeightSystem WeightSystem::from_json(const nlohmann::json& j) {
    return WeightSystem(j.at("dims").get<std::vector<int>>(), j.at("weights").get<std::vector<int>>());
}

AugmentedPoint dilate(const WeightSystem& w, double t, const AugmentedPoint& z) {
    if (!(t > 0.0)) throw ArgumentError("dilation factor must be positive");
    if (static_cast<int>(z.xi.size()) != w.d()) throw ShapeError("point dimension differs from weight system");
    AugmentedPoint out = z;
    for (int i = 0; i < w.ell(); ++i) {
        const double f = std::pow(t, w.weights()[static_cast<std::size_t>(i)]);
        for (int k = 0; k < w.dims()[static_cast<std::size_t>(i)]; ++k) out.xi[static_cast<std::size_t>(w.offset(i) + k)] *= f;
    }
    out.eta = std::pow(t, w.nu()) * z.eta;
    return out;
}

double quasinorm(const WeightSystem& w, std::span<const double> xi, double eta) {
    if (static_cast<int>(xi.size()) != w.d()) throw ShapeError("point dimension differs from weight system");
    const double nu = w.nu();
    double s = eta * eta;
    for (int i = 0; i < w.ell(); ++i) {
        double r2 = 0.0;
        for (int k = 0; k < w.dims()[static_cast<std::size_t>(i)]; ++k) {
            const double x = xi[static_cast<std::size_t>(w.offset(i) + k)];
            r2 += x * x;
        }
        // |xi_i|^{2 nu / nu_i} = (|xi_i|^2)^{nu / nu_i}
        s += std::pow(r2, nu / w.weights()[static_cast<std::size_t>(i)]);
    }
    return std::pow(s, 1.0 / (2.0 * nu));
}

double quasinorm(const WeightSystem& w, const AugmentedPoint& z) { return quasinorm(w, z.xi, z.eta); }

AugmentedPoint lambda_retract(const WeightSystem& w, const AugmentedPoint& z) {
    const double l = quasinorm(w, z);
    if (l == 0.0) throw DomainError("the origin has no Lambda-retraction");
    AugmentedPoint r = dilate(w, 1.0 / l, z);
    // one Newton-free correction: the dilation is exact up to rounding of pow
    const double l2 = quasinorm(w, r);
    if (std::abs(l2 - 1.0) > 1e-14) r = dilate(w, 1.0 / l2, r);
    return r;
}

namespace {

std::vector<std::vector<double>> directions(int dim, int n) {
    std::vector<std::vector<double>> out;
    if (dim == 1) return {{1.0}, {-1.0}};
    if (dim == 2) {
        for (int j = 0; j < n; ++j) {
            const double a = 2.0 * std::numbers::pi * j / n;
            out.push_back({std::cos(a), std::sin(a)});
        }
        return out;
    }
    // Fibonacci sphere generalized to S^{dim-1} only for dim == 3
    if (dim == 3) {
        const int count = n * n;
        const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
        for (int j = 0; j < count; ++j) {
            const double y = 1.0 - 2.0 * (j + 0.5) / count;
            const double rad = std::sqrt(std::max(0.0, 1.0 - y * y));
            const double th = golden * j;
            out.push_back({rad * std::cos(th), y, rad * std::sin(th)});
        }
        return out;
    }
    throw ConfigurationError("sphere sampling implemented for cluster dimensions 1, 2 and 3");
}

void simplex_points(int parts, int total, std::vector<int>& cur, std::vector<std::vector<int>>& out) {
    if (static_cast<int>(cur.size()) == parts - 1) {
        const int used = std::accumulate(cur.begin(), cur.end(), 0);
        cur.push_back(total - used);
        out.push_back(cur);
        cur.pop_back();
        return;
    }
    const int used = std::accumulate(cur.begin(), cur.end(), 0);
    for (int k = 0; k <= total - used; ++k) {
        cur.push_back(k);
        simplex_points(parts, total, cur, out);
        cur.pop_back();
    }
}

// Base step multiplier on the balanced step eps^{1/(p+4)}.
constexpr double kStepFactor = 1.0;

struct StencilAxis {
    std::size_t axis;
    double h;
    std::vector<double> weights;  // already divided by h^p
    int half;
};

StencilAxis make_stencil(std::size_t axis, int p, double scale, bool halved) {
    const int half = (p + 1) / 2 + 1;
    const double eps = std::numeric_limits<double>::epsilon();
    double h = kStepFactor * std::pow(eps, 1.0 / (p + 4)) * scale;
    if (halved) h *= 0.5;
    std::vector<double> x;
    for (int j = -half; j <= half; ++j) x.push_back(j);
    auto w = fd::fornberg(0.0, x, p)[static_cast<std::size_t>(p)];
    const double f = std::pow(h, -p);
    for (auto& v : w) v *= f;
    return {axis, h, std::move(w), half};
}

using Key = std::vector<long long>;

Key quantize(const AugmentedPoint& z) {
    Key k;
    k.reserve(z.xi.size() + 1);
    for (double x : z.xi) k.push_back(std::llround(x * 1e13));
    k.push_back(std::llround(z.eta * 1e13));
    return k;
}

class CachedSymbol {
public:
    explicit CachedSymbol(const SymbolFn& a) : a_(a) {}
    const Matrix& operator()(const AugmentedPoint& z) {
        auto key = quantize(z);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
        try {
            return cache_.emplace(std::move(key), a_(z)).first->second;
        } catch (const std::exception& e) {
            std::string where = "(";
            for (double x : z.xi) where += std::to_string(x) + ", ";
            where += "eta=" + std::to_string(z.eta) + ")";
            throw Error(std::string("symbol evaluation failed at ") + where + ": " + e.what());
        }
    }

private:
    const SymbolFn& a_;
    std::map<Key, Matrix> cache_;
};

Matrix derivative_cached(CachedSymbol& a, const WeightSystem& w, const AugmentedPoint& zeta,
                         const std::vector<int>& alpha, bool halved) {
    if (std::all_of(alpha.begin(), alpha.end(), [](int v) { return v == 0; })) return a(zeta);
    const double lam = std::max(quasinorm(w, zeta), 1e-300);
    std::vector<StencilAxis> st;
    for (std::size_t k = 0; k < alpha.size(); ++k)
        if (alpha[k] > 0) st.push_back(make_stencil(k, alpha[k], std::pow(lam, w.omega()[k]), halved));
    std::vector<int> idx(st.size(), 0);
    Matrix acc;
    bool first = true;
    while (true) {
        AugmentedPoint p = zeta;
        double coef = 1.0;
        for (std::size_t s = 0; s < st.size(); ++s) {
            p.xi[st[s].axis] += (idx[s] - st[s].half) * st[s].h;
            coef *= st[s].weights[static_cast<std::size_t>(idx[s])];
        }
        if (coef != 0.0) {
            const Matrix& v = a(p);
            if (first) {
                acc = coef * v;
                first = false;
            } else {
                acc += coef * v;
            }
        }
        std::size_t s = 0;
        for (; s < st.size(); ++s) {
            if (++idx[s] < static_cast<int>(st[s].weights.size())) break;
            idx[s] = 0;
        }
        if (s == st.size()) break;
    }
    if (first) acc = Matrix::Zero(a(zeta).rows(), a(zeta).cols());
    return acc;
}

}  // namespace

std::vector<AugmentedPoint> unit_level_samples(const WeightSystem& w, int n, bool include_eta) {
    if (n < 1) throw ArgumentError("sample resolution must be >= 1");
    const int parts = w.ell() + (include_eta ? 1 : 0);
    std::vector<std::vector<int>> shares;
    std::vector<int> cur;
    simplex_points(parts, n, cur, shares);
    std::vector<AugmentedPoint> out;
    for (const auto& k : shares) {
        // per-cluster direction sets; clusters with zero share collapse to the origin
        std::vector<std::vector<std::vector<double>>> dirs(static_cast<std::size_t>(w.ell()));
        std::vector<double> rho(static_cast<std::size_t>(w.ell()));
        for (int i = 0; i < w.ell(); ++i) {
            const double s = static_cast<double>(k[static_cast<std::size_t>(i)]) / n;
            rho[static_cast<std::size_t>(i)] = std::pow(s, static_cast<double>(w.weights()[static_cast<std::size_t>(i)]) / (2.0 * w.nu()));
            if (s == 0.0)
                dirs[static_cast<std::size_t>(i)] = {std::vector<double>(static_cast<std::size_t>(w.dims()[static_cast<std::size_t>(i)]), 0.0)};
            else
                dirs[static_cast<std::size_t>(i)] = directions(w.dims()[static_cast<std::size_t>(i)], n);
        }
        const double eta = include_eta ? std::sqrt(static_cast<double>(k.back()) / n) : 0.0;
        std::vector<std::size_t> idx(static_cast<std::size_t>(w.ell()), 0);
        while (true) {
            AugmentedPoint z{std::vector<double>(static_cast<std::size_t>(w.d()), 0.0), eta};
            for (int i = 0; i < w.ell(); ++i) {
                const auto& dv = dirs[static_cast<std::size_t>(i)][idx[static_cast<std::size_t>(i)]];
                for (int c = 0; c < w.dims()[static_cast<std::size_t>(i)]; ++c)
                    z.xi[static_cast<std::size_t>(w.offset(i) + c)] = rho[static_cast<std::size_t>(i)] * dv[static_cast<std::size_t>(c)];
            }
            out.push_back(std::move(z));
            std::size_t i = 0;
            for (; i < idx.size(); ++i) {
                if (++idx[i] < dirs[i].size()) break;
                idx[i] = 0;
            }
            if (i == idx.size()) break;
        }
    }
    return out;
}

std::vector<std::vector<int>> multiindices(const WeightSystem& w, int budget) {
    std::vector<std::vector<int>> out;
    std::vector<int> cur(static_cast<std::size_t>(w.d()), 0);
    std::function<void(std::size_t, int)> rec = [&](std::size_t k, int left) {
        if (k == cur.size()) {
            out.push_back(cur);
            return;
        }
        for (int a = 0; a * w.omega()[k] <= left; ++a) {
            cur[k] = a;
            rec(k + 1, left - a * w.omega()[k]);
        }
        cur[k] = 0;
    };
    rec(0, budget);
    return out;
}

Matrix symbol_derivative(const SymbolFn& a, const WeightSystem& w, const AugmentedPoint& zeta,
                         const std::vector<int>& alpha, bool halved) {
    CachedSymbol cached(a);
    return derivative_cached(cached, w, zeta, alpha, halved);
}

nlohmann::json SymbolClassReport::to_json() const {
    return {{"h_norm", h_norm},
            {"z", {z.real(), z.imag()}},
            {"max_order_checked", max_order_checked},
            {"sample_count", sample_count},
            {"richardson_flags", richardson_flags}};
}

SymbolClassReport estimate_hz_norm(const SymbolFn& a, std::complex<double> z, const WeightSystem& w,
                                   const HzOptions& opt) {
    if (opt.samples < 1) throw ArgumentError("samples must be >= 1");
    const int budget = opt.max_order.value_or(2 * w.abs_omega());
    const auto pts = unit_level_samples(w, opt.samples, opt.include_eta);
    const auto alphas = multiindices(w, budget);
    const std::size_t na = alphas.size();
    // per (sample, alpha): value at the halved step and the step-halving gap
    std::vector<double> value(pts.size() * na, 0.0);
    std::vector<double> gap(pts.size() * na, 0.0);
    parallel_for(pts.size(), [&](std::size_t s) {
        CachedSymbol cached(a);
        for (std::size_t j = 0; j < na; ++j) {
            const auto& alpha = alphas[j];
            const Matrix d1 = derivative_cached(cached, w, pts[s], alpha, false);
            if (std::all_of(alpha.begin(), alpha.end(), [](int v) { return v == 0; })) {
                value[s * na + j] = opnorm(d1);
                continue;
            }
            const Matrix d2 = derivative_cached(cached, w, pts[s], alpha, true);
            value[s * na + j] = opnorm(d2);
            gap[s * na + j] = opnorm(d1 - d2);
        }
    });
    SymbolClassReport rep;
    rep.z = z;
    rep.max_order_checked = budget;
    rep.sample_count = static_cast<int>(pts.size());
    // a gap only matters if it can move the norm, so it is judged against h_norm
    std::vector<double> sup(na, 0.0);
    for (std::size_t s = 0; s < pts.size(); ++s)
        for (std::size_t j = 0; j < na; ++j) sup[j] = std::max(sup[j], value[s * na + j]);
    for (std::size_t j = 0; j < na; ++j) rep.h_norm = std::max(rep.h_norm, sup[j]);
    for (std::size_t s = 0; s < pts.size(); ++s)
        for (std::size_t j = 0; j < na; ++j)
            if (gap[s * na + j] > opt.richardson_tol * std::max(rep.h_norm, 1e-300)) ++rep.richardson_flags;
    return rep;
}

GridFunction tabulate_symbol(std::vector<Axis> axes, std::size_t n, const std::function<Matrix(const Point&)>& a) {
    return GridFunction::sample(std::move(axes), n * n, [&](const Point& x, std::span<cplx> out) {
        const Matrix m = a(x);
        if (static_cast<std::size_t>(m.rows()) != n || static_cast<std::size_t>(m.cols()) != n)
            throw ShapeError("symbol matrix size differs from declared fiber");
        store_matrix(m, out);
    });
}

MEtaReport m_eta_report(const GridFunction& a_eta, const WeightSystem& w, double eta, std::optional<int> max_order) {
    if (!(eta > 0.0)) throw ArgumentError("eta must be positive");
    if (static_cast<int>(a_eta.rank()) != w.d()) throw ShapeError("symbol grid rank differs from d");
    const auto n = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(a_eta.fiber()))));
    if (n * n != a_eta.fiber()) throw ShapeError("symbol fiber is not a square matrix");
    for (const auto& ax : a_eta.axes())
        if (ax.periodic) throw ConfigurationError("frequency grids must be non-periodic axes");
    const int budget = max_order.value_or(2 * w.abs_omega());
    MEtaReport rep;
    for (const auto& alpha : multiindices(w, budget)) {
        const GridFunction d = spectral::derivative(a_eta, alpha, 4);
        const int order = w.dot(alpha);
        for (std::size_t node = 0; node < d.node_count(); ++node) {
            const Point xi = d.coords(node);
            const double v = std::pow(quasinorm(w, xi, eta), order) * opnorm(fiber_matrix(d.at_node(node), n));
            if (v > rep.norm) {
                rep.norm = v;
                rep.worst_alpha = alpha;
                const auto idx = d.multi_index(node);
                rep.attained_at_edge = false;
                for (std::size_t k = 0; k < idx.size(); ++k) {
                    const std::size_t band = std::max<std::size_t>(1, d.axis(k).n / 10);
                    if (idx[k] < band || idx[k] + band >= d.axis(k).n) rep.attained_at_edge = true;
                }
            }
        }
    }
    return rep;
}

double m_eta_norm(const GridFunction& a_eta, const WeightSystem& w, double eta) {
    return m_eta_report(a_eta, w, eta).norm;
}

}  // namespace parreg::weights
