#include "parreg/spaces.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>

#include <Eigen/Dense>

#include "parreg/errors.hpp"
#include "parreg/finite_difference.hpp"
#include "parreg/spectral.hpp"

namespace parreg::spaces {

using weights::WeightSystem;

bool is_multiple(double s, int m) {
    const double k = s / m;
    return k > -1e-12 && std::abs(k - std::round(k)) < 1e-12;
}

void check_admissible(const NormSpec& spec) {
    if (!(spec.eta > 0.0)) throw ValidationError("norm parameter eta must be positive");
    if (spec.s < 0.0) throw ValidationError("norm order s must be nonnegative");
    if (!(spec.q >= 1.0)) throw ValidationError("integrability q must lie in [1, inf]");
    const int nu = spec.weight.nu();
    const bool integer = is_multiple(spec.s, 1);
    const bool ok = (is_multiple(spec.s, nu) && spec.q > 1.0 && spec.q < kInf) || !integer;
    if (!ok)
        throw ValidationError("(s, q) = (" + std::to_string(spec.s) + ", " + std::to_string(spec.q) +
                              ") is not nu-admissible (nu = " + std::to_string(nu) +
                              "): need either s in nu*N and 1 < q < inf, or s not in N and 1 <= q <= inf");
}

double lq_norm(const GridFunction& u, double q) {
    if (!(q >= 1.0)) throw ArgumentError("q must lie in [1, inf]");
    if (q == kInf) return u.max_abs();
    double sum = 0.0;
    for (std::size_t node = 0; node < u.node_count(); ++node) {
        const double a = fiber_norm(u.at_node(node));
        sum += u.weight(node) * (q == 2.0 ? a * a : std::pow(a, q));
    }
    return std::pow(sum, 1.0 / q);
}

double sobolev_norm_param(const GridFunction& u, const NormSpec& spec) {
    check_admissible(spec);
    const WeightSystem& w = spec.weight;
    if (static_cast<int>(u.rank()) != w.d()) throw ShapeError("grid rank differs from the weight system dimension");
    if (!is_multiple(spec.s, w.nu()))
        throw ValidationError("Sobolev norm needs s in nu*N, got s = " + std::to_string(spec.s));
    const int k = static_cast<int>(std::lround(spec.s));
    double total = 0.0;
    for (const auto& alpha : weights::multiindices(w, k)) {
        const double f = std::pow(spec.eta, k - w.dot(alpha));
        total += f * lq_norm(spectral::derivative(u, alpha), spec.q);
    }
    return total;
}

namespace {

struct ClusterLayout {
    std::vector<std::size_t> offsets;          // flat node offset of each cluster node
    std::vector<std::vector<std::size_t>> idx; // per cluster node, per cluster axis index
    std::vector<double> weights;               // quadrature weight of each cluster node
    std::vector<std::size_t> rest_nodes;       // nodes with all cluster indices zero
    std::vector<double> rest_weights;
};

ClusterLayout layout(const GridFunction& u, const std::vector<std::size_t>& cluster) {
    if (cluster.empty()) throw ArgumentError("empty coordinate cluster");
    std::vector<bool> in(u.rank(), false);
    for (auto k : cluster) {
        if (k >= u.rank()) throw ArgumentError("cluster axis out of range");
        in[k] = true;
    }
    const auto strides = u.strides();
    ClusterLayout l;
    std::size_t count = 1;
    for (auto k : cluster) count *= u.axis(k).n;
    for (std::size_t c = 0; c < count; ++c) {
        std::size_t rest = c;
        std::vector<std::size_t> id(cluster.size());
        std::size_t off = 0;
        double w = 1.0;
        for (std::size_t a = cluster.size(); a-- > 0;) {
            const Axis& ax = u.axis(cluster[a]);
            id[a] = rest % ax.n;
            rest /= ax.n;
            off += id[a] * strides[cluster[a]];
            w *= ax.weight(id[a]);
        }
        l.offsets.push_back(off);
        l.idx.push_back(std::move(id));
        l.weights.push_back(w);
    }
    for (std::size_t node = 0; node < u.node_count(); ++node) {
        const auto mi = u.multi_index(node);
        bool base = true;
        double w = 1.0;
        for (std::size_t k = 0; k < u.rank(); ++k) {
            if (in[k]) {
                if (mi[k] != 0) base = false;
            } else {
                w *= u.axis(k).weight(mi[k]);
            }
        }
        if (base) {
            l.rest_nodes.push_back(node);
            l.rest_weights.push_back(w);
        }
    }
    return l;
}

double axis_distance(const Axis& ax, std::size_t i, std::size_t j) {
    const std::size_t d = i > j ? i - j : j - i;
    const std::size_t m = ax.periodic ? std::min(d, ax.n - d) : d;
    return static_cast<double>(m) * ax.step;
}

double pair_distance(const GridFunction& u, const std::vector<std::size_t>& cluster, const std::vector<std::size_t>& a,
                     const std::vector<std::size_t>& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < cluster.size(); ++k) {
        const double d = axis_distance(u.axis(cluster[k]), a[k], b[k]);
        s += d * d;
    }
    return std::sqrt(s);
}

double diff_norm(const GridFunction& u, std::size_t x, std::size_t y) {
    const auto a = u.at_node(x);
    const auto b = u.at_node(y);
    double s = 0.0;
    for (std::size_t c = 0; c < a.size(); ++c) s += std::norm(a[c] - b[c]);
    return std::sqrt(s);
}

}  // namespace

double slobodeckii_seminorm(const GridFunction& u, double theta, double q, const std::vector<std::size_t>& cluster) {
    if (!(theta > 0.0 && theta < 1.0)) throw ArgumentError("theta must lie in (0, 1)");
    if (!(q >= 1.0 && q < kInf)) throw ArgumentError("Slobodeckii seminorm needs 1 <= q < inf");
    const ClusterLayout l = layout(u, cluster);
    const std::size_t nc = l.offsets.size();
    const double expo = theta * q + static_cast<double>(cluster.size());
    // kernel w_x w_y / |x-y|^{theta q + d_i}, tabulated when small enough
    const bool tabulate = nc * nc <= (std::size_t{1} << 22);
    std::vector<double> kernel;
    auto kern = [&](std::size_t x, std::size_t y) {
        const double d = pair_distance(u, cluster, l.idx[x], l.idx[y]);
        return l.weights[x] * l.weights[y] / std::pow(d, expo);
    };
    if (tabulate) {
        kernel.assign(nc * nc, 0.0);
        for (std::size_t x = 0; x < nc; ++x)
            for (std::size_t y = 0; y < nc; ++y)
                if (x != y) kernel[x * nc + y] = kern(x, y);
    }
    double total = 0.0;
    for (std::size_t r = 0; r < l.rest_nodes.size(); ++r) {
        const std::size_t base = l.rest_nodes[r];
        double inner = 0.0;
        for (std::size_t x = 0; x < nc; ++x) {
            for (std::size_t y = 0; y < nc; ++y) {
                if (x == y) continue;
                const double du = diff_norm(u, base + l.offsets[x], base + l.offsets[y]);
                if (du == 0.0) continue;
                const double k = tabulate ? kernel[x * nc + y] : kern(x, y);
                inner += k * (q == 2.0 ? du * du : std::pow(du, q));
            }
        }
        total += l.rest_weights[r] * inner;
    }
    return std::pow(total, 1.0 / q);
}

double holder_seminorm(const GridFunction& u, double theta, double delta, const std::vector<std::size_t>& cluster) {
    if (!(theta > 0.0 && theta < 1.0)) throw ArgumentError("theta must lie in (0, 1)");
    if (!(delta > 0.0)) throw ArgumentError("delta must be positive");
    const ClusterLayout l = layout(u, cluster);
    const std::size_t nc = l.offsets.size();
    double best = 0.0;
    for (std::size_t x = 0; x < nc; ++x) {
        for (std::size_t y = x + 1; y < nc; ++y) {
            const double d = pair_distance(u, cluster, l.idx[x], l.idx[y]);
            if (!(d > 0.0) || !(d < delta)) continue;
            const double f = std::pow(d, -theta);
            for (const std::size_t base : l.rest_nodes)
                best = std::max(best, diff_norm(u, base + l.offsets[x], base + l.offsets[y]) * f);
        }
    }
    return best;
}

double holder_seminorm(const GridFunction& u, double theta, double delta) {
    std::vector<std::size_t> all(u.rank());
    for (std::size_t k = 0; k < all.size(); ++k) all[k] = k;
    return holder_seminorm(u, theta, delta, all);
}

GridFunction gradient_tensor(const GridFunction& u, const std::vector<std::size_t>& cluster, int j, int fd_accuracy) {
    if (j < 0) throw ArgumentError("gradient order must be nonnegative");
    if (j == 0) return u;
    // multiindices over the cluster coordinates with |alpha| = j
    std::vector<std::vector<int>> alphas;
    std::vector<int> cur(cluster.size(), 0);
    std::function<void(std::size_t, int)> rec = [&](std::size_t k, int left) {
        if (k + 1 == cur.size()) {
            cur[k] = left;
            alphas.push_back(cur);
            return;
        }
        for (int a = left; a >= 0; --a) {
            cur[k] = a;
            rec(k + 1, left - a);
        }
    };
    rec(0, j);
    const std::size_t n = u.fiber();
    const std::size_t m = alphas.size();
    GridFunction out(u.axes(), n * m);
    auto fact = [](int v) { return std::tgamma(v + 1.0); };
    for (std::size_t a = 0; a < m; ++a) {
        std::vector<int> full(u.rank(), 0);
        double alpha_fact = 1.0;
        for (std::size_t k = 0; k < cluster.size(); ++k) {
            full[cluster[k]] = alphas[a][k];
            alpha_fact *= fact(alphas[a][k]);
        }
        const double scale = std::sqrt(fact(j) / alpha_fact);
        const GridFunction d = spectral::derivative(u, full, fd_accuracy);
        for (std::size_t node = 0; node < u.node_count(); ++node)
            for (std::size_t c = 0; c < n; ++c) out(node, c * m + a) = scale * d(node, c);
    }
    return out;
}

std::vector<std::size_t> cluster_axes(const WeightSystem& w, int i) {
    std::vector<std::size_t> out;
    for (int k = 0; k < w.dims()[static_cast<std::size_t>(i)]; ++k) out.push_back(static_cast<std::size_t>(w.offset(i) + k));
    return out;
}

double anisotropic_norm(const GridFunction& u, const NormSpec& spec) {
    check_admissible(spec);
    const WeightSystem& w = spec.weight;
    if (static_cast<int>(u.rank()) != w.d()) throw ShapeError("grid rank differs from the weight system dimension");
    if (is_multiple(spec.s, w.nu())) return sobolev_norm_param(u, spec);
    double total = 0.0;
    for (int i = 0; i < w.ell(); ++i) {
        const int nui = w.weights()[static_cast<std::size_t>(i)];
        if (is_multiple(spec.s, nui))
            throw ValidationError("s = " + std::to_string(spec.s) + " is a multiple of the cluster weight " +
                                  std::to_string(nui) + "; the strict inequalities k_i < s < k_i + nu_i fail");
        const int ji = static_cast<int>(std::floor(spec.s / nui));
        const double theta = (spec.s - ji * nui) / nui;
        const auto axes = cluster_axes(w, i);
        for (int j = 0; j <= ji; ++j)
            total += std::pow(spec.eta, spec.s - j * nui) * lq_norm(gradient_tensor(u, axes, j), spec.q);
        const GridFunction top = gradient_tensor(u, axes, ji);
        total += spec.q < kInf ? slobodeckii_seminorm(top, theta, spec.q, axes) : holder_seminorm(top, theta, kInf, axes);
    }
    return total;
}

double intersection_norm_surrogate(const GridFunction& u, const NormSpec& spec) {
    check_admissible(spec);
    const WeightSystem& w = spec.weight;
    if (w.ell() < 2 || w.dims().back() != 1) throw ConfigurationError("intersection surrogate needs a time cluster");
    if (spec.q != 2.0) throw ConfigurationError("intersection surrogate is realized for q = 2 only");
    if (static_cast<int>(u.rank()) != w.d()) throw ShapeError("grid rank differs from the weight system dimension");
    int nu_dot = 1;
    for (int i = 0; i + 1 < w.ell(); ++i) nu_dot = std::lcm(nu_dot, w.weights()[static_cast<std::size_t>(i)]);
    const int nul = w.nu_last();
    const double eta = spec.eta;
    const double s = spec.s;
    const GridFunction a = spectral::apply_scalar(u, [&](const Point& k) {
        double acc = std::pow(eta, 2.0 * nu_dot);
        for (int i = 0; i + 1 < w.ell(); ++i) {
            double r2 = 0.0;
            for (auto ax : cluster_axes(w, i)) r2 += k[ax] * k[ax];
            acc += std::pow(r2, static_cast<double>(nu_dot) / w.weights()[static_cast<std::size_t>(i)]);
        }
        return cplx(std::pow(acc, s / (2.0 * nu_dot)));
    });
    const GridFunction b = spectral::apply_scalar(u, [&](const Point& k) {
        const double tau = k.back();
        return cplx(std::pow(std::pow(eta, 2.0 * nul) + tau * tau, s / (2.0 * nul)));
    });
    return lq_norm(a, 2.0) + lq_norm(b, 2.0);
}

GridFunction trace(const GridFunction& u, int k) {
    if (k < 0) throw ArgumentError("trace order must be nonnegative");
    if (u.rank() < 2 || u.axes().back().periodic) throw ConfigurationError("trace needs a half-line time axis");
    const auto n = static_cast<int>(u.axes().back().n);
    if (n < k + 2)
        throw ConfigurationError("trace of order " + std::to_string(k) + " needs at least " + std::to_string(k + 2) +
                                 " time samples, grid has " + std::to_string(n));
    return fd::one_sided_at_start(u, k, std::min(4, n - k));
}

GridFunction trace_coretraction(const std::vector<GridFunction>& chain, const WeightSystem& w, double eta,
                                const Axis& time_axis) {
    return trace_coretraction(chain, w, eta, time_axis, nullptr);
}

GridFunction trace_coretraction(const std::vector<GridFunction>& chain, const WeightSystem& w, double eta,
                                const Axis& time_axis, GridFunction* dt_out) {
    if (chain.empty()) throw ArgumentError("empty compatibility chain");
    if (time_axis.periodic) throw ConfigurationError("coretraction needs a non-periodic time axis");
    const auto& sp = chain.front().axes();
    for (const auto& c : chain)
        if (!c.same_grid(chain.front())) throw ShapeError("chain entries live on different grids");
    if (static_cast<int>(sp.size()) + 1 != w.d()) throw ShapeError("spatial rank + 1 differs from weight system");
    std::vector<GridFunction> hat = chain;
    for (auto& h : hat) spectral::forward(h);
    const std::size_t f = chain.front().fiber();
    const std::size_t nt = time_axis.n;
    const std::size_t ns = chain.front().node_count();
    const std::size_t kk = chain.size();
    std::vector<Axis> axes = sp;
    axes.push_back(time_axis);
    GridFunction out(axes, f);
    GridFunction dout(axes, f);
    std::vector<double> binom(kk * kk, 0.0);
    for (std::size_t n = 0; n < kk; ++n) {
        binom[n * kk] = 1.0;
        for (std::size_t i = 1; i <= n; ++i) binom[n * kk + i] = binom[n * kk + i - 1] * static_cast<double>(n - i + 1) / i;
    }
    std::vector<double> xi(sp.size() + 1, 0.0);
    std::vector<cplx> v(kk);
    for (std::size_t node = 0; node < ns; ++node) {
        const Point k = spectral::frequency(hat.front(), node);
        std::copy(k.begin(), k.end(), xi.begin());
        const double lam = weights::quasinorm(w, xi, eta);
        const double J = std::pow(lam, w.nu_last());
        for (std::size_t c = 0; c < f; ++c) {
            for (std::size_t n = 0; n < kk; ++n) {
                cplx acc{0.0, 0.0};
                for (std::size_t i = 0; i <= n; ++i) acc += binom[n * kk + i] * std::pow(J, static_cast<double>(n - i)) * hat[i](node, c);
                v[n] = acc;
            }
            for (std::size_t it = 0; it < nt; ++it) {
                const double t = time_axis.coord(it);
                cplx p{0.0, 0.0};
                cplx dp{0.0, 0.0};
                double tn = 1.0;  // t^n / n!
                for (std::size_t n = 0; n < kk; ++n) {
                    p += tn * v[n];
                    if (n + 1 < kk) dp += tn * v[n + 1];
                    tn *= t / static_cast<double>(n + 1);
                }
                const double e = std::exp(-t * J);
                out(node * nt + it, c) = e * p;
                dout(node * nt + it, c) = e * (dp - J * p);
            }
        }
    }
    std::vector<bool> mask(axes.size(), true);
    mask.back() = false;
    spectral::inverse(out, mask);
    if (dt_out) {
        spectral::inverse(dout, mask);
        *dt_out = std::move(dout);
    }
    return out;
}

std::vector<double> seeley_coefficients(int ne) {
    if (ne < 1) throw ArgumentError("number of reflection terms must be >= 1");
    Eigen::MatrixXd v(ne, ne);
    for (int p = 0; p < ne; ++p)
        for (int j = 1; j <= ne; ++j) v(p, j - 1) = std::pow(-static_cast<double>(j), p);
    const Eigen::VectorXd c = v.fullPivLu().solve(Eigen::VectorXd::Ones(ne));
    return {c.data(), c.data() + ne};
}

namespace {

void require_halfline(const GridFunction& u) {
    if (!u.is_half_line()) throw ConfigurationError("expected a half-line grid (last axis non-periodic from t = 0)");
}

GridFunction with_negative_axis(const GridFunction& u, std::size_t negative) {
    std::vector<Axis> axes = u.axes();
    Axis& t = axes.back();
    t.origin = -static_cast<double>(negative) * t.step;
    t.n += negative;
    return GridFunction(axes, u.fiber());
}

void copy_halfline(const GridFunction& u, GridFunction& out, std::size_t negative) {
    const std::size_t nt = u.axes().back().n;
    const std::size_t nf = out.axes().back().n;
    const std::size_t f = u.fiber();
    const std::size_t ns = u.node_count() / nt;
    for (std::size_t s = 0; s < ns; ++s)
        for (std::size_t it = 0; it < nt; ++it)
            for (std::size_t c = 0; c < f; ++c) out(s * nf + negative + it, c) = u(s * nt + it, c);
}

}  // namespace

GridFunction extend_seeley(const GridFunction& u, int ne, long negative) {
    require_halfline(u);
    const auto c = seeley_coefficients(ne);
    const std::size_t nt = u.axes().back().n;
    const std::size_t max_neg = (nt - 1) / static_cast<std::size_t>(ne);
    const std::size_t m_neg = negative < 0 ? max_neg : static_cast<std::size_t>(negative);
    if (m_neg > max_neg)
        throw ExtrapolationError("Seeley extension to " + std::to_string(m_neg) + " negative samples reads u(" +
                                 std::to_string(ne) + "*" + std::to_string(m_neg) + "*dt), beyond the " +
                                 std::to_string(nt) + " stored samples");
    GridFunction out = with_negative_axis(u, m_neg);
    copy_halfline(u, out, m_neg);
    const std::size_t nf = out.axes().back().n;
    const std::size_t f = u.fiber();
    const std::size_t ns = u.node_count() / nt;
    for (std::size_t s = 0; s < ns; ++s)
        for (std::size_t m = 1; m <= m_neg; ++m)
            for (std::size_t ch = 0; ch < f; ++ch) {
                cplx acc{0.0, 0.0};
                for (int j = 1; j <= ne; ++j) acc += c[static_cast<std::size_t>(j - 1)] * u(s * nt + static_cast<std::size_t>(j) * m, ch);
                out(s * nf + m_neg - m, ch) = acc;
            }
    return out;
}

GridFunction extend_zero(const GridFunction& u, std::size_t negative) {
    require_halfline(u);
    GridFunction out = with_negative_axis(u, negative);
    copy_halfline(u, out, negative);
    return out;
}

GridFunction restrict_halfline(const GridFunction& u) {
    if (u.rank() < 1 || u.axes().back().periodic) throw ConfigurationError("restriction needs a non-periodic time axis");
    const Axis& t = u.axes().back();
    const long i0 = std::lround(-t.origin / t.step);
    if (i0 < 0 || std::abs(t.origin + static_cast<double>(i0) * t.step) > 1e-9 * t.step || static_cast<std::size_t>(i0) >= t.n)
        throw ConfigurationError("t = 0 is not a node of the time axis");
    std::vector<Axis> axes = u.axes();
    axes.back().origin = 0.0;
    axes.back().n = t.n - static_cast<std::size_t>(i0);
    GridFunction out(axes, u.fiber());
    const std::size_t nt = t.n;
    const std::size_t nh = axes.back().n;
    const std::size_t ns = u.node_count() / nt;
    for (std::size_t s = 0; s < ns; ++s)
        for (std::size_t it = 0; it < nh; ++it)
            for (std::size_t c = 0; c < u.fiber(); ++c) out(s * nh + it, c) = u(s * nt + static_cast<std::size_t>(i0) + it, c);
    return out;
}

}  // namespace parreg::spaces
