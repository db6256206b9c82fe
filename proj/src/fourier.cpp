#include "parreg/fourier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Eigenvalues>

#include "parreg/errors.hpp"
#include "parreg/parallel.hpp"
#include "parreg/spectral.hpp"

namespace parreg::fourier {

using operators::DifferentialOperator;

namespace {

void require_periodic(const std::vector<Axis>& axes, std::size_t count, const char* what) {
    for (std::size_t k = 0; k < count; ++k)
        if (!axes[k].periodic) throw ConfigurationError(std::string(what) + " needs periodic axes");
}

// wavenumber tables per axis, used for partial transforms
std::vector<std::vector<double>> wavenumber_tables(const std::vector<Axis>& axes, std::size_t count) {
    std::vector<std::vector<double>> out;
    for (std::size_t k = 0; k < count; ++k) out.push_back(spectral::wavenumbers(axes[k]));
    return out;
}

Point frequency_of(const std::vector<std::vector<double>>& tables, std::vector<std::size_t> idx) {
    Point k(tables.size());
    for (std::size_t a = 0; a < tables.size(); ++a) k[a] = tables[a][idx[a]];
    return k;
}

std::vector<std::size_t> unflatten(std::size_t node, const std::vector<Axis>& axes, std::size_t count) {
    std::vector<std::size_t> idx(count);
    for (std::size_t a = count; a-- > 0;) {
        idx[a] = node % axes[a].n;
        node /= axes[a].n;
    }
    return idx;
}

// condition number estimate via singular values
double condition(const Matrix& m) {
    if (m.rows() == 1) return std::abs(m(0, 0)) > 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
    Eigen::JacobiSVD<Matrix> svd(m);
    const auto& s = svd.singularValues();
    return s(s.size() - 1) > 0.0 ? s(0) / s(s.size() - 1) : std::numeric_limits<double>::infinity();
}

Matrix safe_inverse(const Matrix& m, const std::string& where) {
    if (m.rows() == 1) {
        if (m(0, 0) == cplx(0.0)) throw EllipticityError("singular symbol at " + where);
        Matrix r(1, 1);
        r(0, 0) = 1.0 / m(0, 0);
        return r;
    }
    if (condition(m) > 1e12) throw EllipticityError("symbol condition number exceeds 1e12 at " + where);
    return m.partialPivLu().inverse();
}

std::string point_str(const Point& k) {
    std::string s = "k=(";
    for (std::size_t a = 0; a < k.size(); ++a) s += (a ? "," : "") + std::to_string(k[a]);
    return s + ")";
}

// applies per-spatial-mode matrices, transforming only the first `count` axes;
// op also receives the flat index of the spatial mode
GridFunction apply_spatial_indexed(
    const GridFunction& u, std::size_t count,
    const std::function<void(std::size_t mode, const Point& xi, std::span<cplx> fiber_block, std::size_t)>& op) {
    GridFunction v = u;
    std::vector<bool> mask(u.rank(), false);
    for (std::size_t k = 0; k < count; ++k) mask[k] = true;
    spectral::forward(v, mask);
    const auto tables = wavenumber_tables(u.axes(), count);
    std::size_t inner = 1;
    for (std::size_t k = count; k < u.rank(); ++k) inner *= u.axis(k).n;
    const std::size_t outer = u.node_count() / inner;
    const std::size_t block = inner * u.fiber();
    parallel_for(outer, [&](std::size_t s) {
        const Point xi = frequency_of(tables, unflatten(s, u.axes(), count));
        op(s, xi, std::span<cplx>(v.data()).subspan(s * block, block), inner);
    });
    spectral::inverse(v, mask);
    return v;
}

GridFunction apply_spatial(const GridFunction& u, std::size_t count,
                           const std::function<void(const Point& xi, std::span<cplx> fiber_block, std::size_t)>& op) {
    return apply_spatial_indexed(u, count, [&](std::size_t, const Point& xi, std::span<cplx> b, std::size_t inner) {
        op(xi, b, inner);
    });
}

}  // namespace

MultiplierOperator::MultiplierOperator(std::vector<Axis> axes, std::size_t n, const SymbolOfK& symbol,
                                       weights::WeightSystem weight, double eta)
    : axes_(std::move(axes)), n_(n), weight_(std::move(weight)), eta_(eta) {
    require_periodic(axes_, axes_.size(), "multiplier operator");
    GridFunction probe(axes_, 1);
    symbol_.resize(probe.node_count());
    parallel_for(symbol_.size(), [&](std::size_t node) {
        symbol_[node] = symbol(spectral::frequency(probe, node));
        if (symbol_[node].rows() != static_cast<Eigen::Index>(n_) || symbol_[node].cols() != static_cast<Eigen::Index>(n_))
            throw ShapeError("symbol value is not N x N");
    });
}

MultiplierOperator MultiplierOperator::compose(const MultiplierOperator& b) const {
    if (axes_ != b.axes_ || n_ != b.n_) throw ShapeError("multipliers live on different grids");
    MultiplierOperator out = *this;
    for (std::size_t k = 0; k < symbol_.size(); ++k) out.symbol_[k] = symbol_[k] * b.symbol_[k];
    out.invertible_ = invertible_ && b.invertible_;
    return out;
}

MultiplierOperator MultiplierOperator::inverse() const {
    MultiplierOperator out = *this;
    GridFunction probe(axes_, 1);
    parallel_for(symbol_.size(), [&](std::size_t k) {
        out.symbol_[k] = safe_inverse(symbol_[k], point_str(spectral::frequency(probe, k)));
    });
    out.invertible_ = true;
    return out;
}

GridFunction apply_multiplier(const MultiplierOperator& a, const GridFunction& u) {
    if (u.axes() != a.axes() || u.fiber() != a.fiber()) throw ShapeError("multiplier and function grids differ");
    GridFunction v = u;
    spectral::forward(v);
    parallel_for(v.node_count(), [&](std::size_t node) {
        if (a.fiber() == 1)
            v(node) *= a.at(node)(0, 0);
        else
            apply_in_place(a.at(node), v.at_node(node));
    });
    spectral::inverse(v);
    return v;
}

GridFunction lift(const GridFunction& u, double z, const spaces::NormSpec& spec) {
    if (!(spec.eta > 0.0)) throw ValidationError("lift needs eta > 0");
    if (static_cast<int>(u.rank()) != spec.weight.d()) throw ShapeError("grid rank differs from the weight system");
    // the augmented variable carries weight nu, so the norm parameter enters as eta^nu
    const double eq = std::pow(spec.eta, spec.weight.nu());
    return spectral::apply_scalar(u, [&](const Point& k) { return cplx(std::pow(weights::quasinorm(spec.weight, k, eq), z)); });
}

Matrix shifted_symbol(const DifferentialOperator& a, std::span<const double> xi, double eta) {
    if (!a.is_constant()) throw ArgumentError("Fourier solvers need constant (frozen) coefficients");
    return operators::full_symbol(a, xi) + eta * Matrix::Identity(a.fiber(), a.fiber());
}

GridFunction parabolic_apply(const DifferentialOperator& a, const GridFunction& u, double eta) {
    std::vector<int> dt(u.rank(), 0);
    dt.back() = 1;
    GridFunction out = spectral::derivative(u, dt);
    GridFunction eu = u;
    eu *= eta;
    out += eu;
    out += a.apply(u);
    return out;
}

double window_decay_lengths(const DifferentialOperator& a, const GridFunction& f, double eta) {
    const std::size_t m = static_cast<std::size_t>(a.m());
    const auto tables = wavenumber_tables(f.axes(), m);
    std::size_t modes = 1;
    for (std::size_t k = 0; k < m; ++k) modes *= f.axis(k).n;
    double lo = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < modes; ++s) {
        const Point xi = frequency_of(tables, unflatten(s, f.axes(), m));
        Eigen::ComplexEigenSolver<Matrix> es(shifted_symbol(a, xi, eta), false);
        lo = std::min(lo, es.eigenvalues().real().minCoeff());
    }
    return f.axes().back().length() * lo;
}

SolveReport solve_fullspace_parabolic(const DifferentialOperator& a, const GridFunction& f, double eta) {
    const std::size_t m = static_cast<std::size_t>(a.m());
    if (f.rank() != m + 1) throw ShapeError("right-hand side must live on a space-time grid of rank m + 1");
    if (f.fiber() != static_cast<std::size_t>(a.fiber())) throw ShapeError("fiber of f differs from the operator");
    require_periodic(f.axes(), f.rank(), "full-space parabolic solve");
    const std::size_t n = f.fiber();
    const MultiplierOperator sym(
        f.axes(), n,
        [&](const Point& k) {
            const std::span<const double> xi(k.data(), m);
            return Matrix(shifted_symbol(a, xi, eta) + cplx(0.0, k.back()) * Matrix::Identity(n, n));
        },
        weights::WeightSystem::parabolic(static_cast<int>(m), a.order()), eta);
    SolveReport rep;
    rep.u = apply_multiplier(sym.inverse(), f);
    rep.eta = eta;
    const GridFunction res = parabolic_apply(a, rep.u, eta) - f;
    const double nf = spaces::lq_norm(f, 2.0);
    rep.residual = nf > 0.0 ? spaces::lq_norm(res, 2.0) / nf : spaces::lq_norm(res, 2.0);
    rep.window = {{"length", f.axes().back().length()}, {"decay_lengths", window_decay_lengths(a, f, eta)}};
    return rep;
}

GridFunction resolvent_apply(const DifferentialOperator& a, cplx lambda, const GridFunction& u, double eta) {
    if (lambda.real() < 0.0) throw ArgumentError("resolvent needs Re lambda >= 0");
    if (u.rank() != static_cast<std::size_t>(a.m())) throw ShapeError("resolvent acts on spatial functions");
    require_periodic(u.axes(), u.rank(), "resolvent");
    const std::size_t n = u.fiber();
    const MultiplierOperator sym(u.axes(), n, [&](const Point& k) {
        return Matrix(shifted_symbol(a, k, eta) + lambda * Matrix::Identity(n, n));
    });
    return apply_multiplier(sym.inverse(), u);
}

double resolvent_decay_product(const DifferentialOperator& a, cplx lambda, const std::vector<Axis>& axes, double eta) {
    if (lambda.real() < 0.0) throw ArgumentError("resolvent needs Re lambda >= 0");
    require_periodic(axes, axes.size(), "resolvent");
    const MultiplierOperator sym(axes, static_cast<std::size_t>(a.fiber()), [&](const Point& k) {
        return Matrix(shifted_symbol(a, k, eta) + lambda * Matrix::Identity(a.fiber(), a.fiber()));
    });
    const MultiplierOperator inv = sym.inverse();
    GridFunction probe(axes, 1);
    double best = 0.0;
    for (std::size_t node = 0; node < probe.node_count(); ++node) best = std::max(best, opnorm(inv.at(node)));
    return (std::abs(lambda) + eta) * best;
}

GridFunction semigroup_step(const DifferentialOperator& a, double t, const GridFunction& u, double eta) {
    if (t < 0.0) throw ArgumentError("semigroup step needs t >= 0");
    if (u.rank() != static_cast<std::size_t>(a.m())) throw ShapeError("semigroup acts on spatial functions");
    require_periodic(u.axes(), u.rank(), "semigroup");
    if (t == 0.0) return u;
    const MultiplierOperator sym(u.axes(), u.fiber(), [&](const Point& k) { return expm(-t * shifted_symbol(a, k, eta)); });
    return apply_multiplier(sym, u);
}

GridFunction convolution_solve(const DifferentialOperator& a, const GridFunction& f, double eta) {
    const std::size_t m = static_cast<std::size_t>(a.m());
    if (f.rank() != m + 1) throw ShapeError("right-hand side must live on a space-time grid of rank m + 1");
    require_periodic(f.axes(), m, "Duhamel solve");
    const Axis& t = f.axes().back();
    if (!t.periodic) throw ConfigurationError("Duhamel solve expects f periodic in time on its window");
    const std::size_t n = f.fiber();
    const std::size_t nt = t.n;
    const double h = t.step;
    return apply_spatial(f, m, [&](const Point& xi, std::span<cplx> block, std::size_t inner) {
        if (inner != nt) throw ShapeError("unexpected time layout");
        const Matrix mat = shifted_symbol(a, xi, eta);
        // exp of [[Z, I, 0], [0, 0, I], [0, 0, 0]] holds e^Z, phi1(Z), phi2(Z) in its first block row
        const auto ni = static_cast<Eigen::Index>(n);
        Matrix big = Matrix::Zero(3 * ni, 3 * ni);
        big.topLeftCorner(ni, ni) = -h * mat;
        big.block(0, ni, ni, ni) = Matrix::Identity(ni, ni);
        big.block(ni, 2 * ni, ni, ni) = Matrix::Identity(ni, ni);
        const Matrix ex = expm(big);
        const Matrix e = ex.topLeftCorner(ni, ni);
        const Matrix p1 = h * ex.block(0, ni, ni, ni);
        const Matrix p2 = h * ex.block(0, 2 * ni, ni, ni);
        auto fval = [&](std::size_t it) {
            Vector v(ni);
            for (std::size_t c = 0; c < n; ++c) v(static_cast<Eigen::Index>(c)) = block[(it % nt) * n + c];
            return v;
        };
        auto step = [&](const Vector& u, std::size_t it) {
            const Vector f0 = fval(it);
            const Vector f1 = fval(it + 1);
            return Vector(e * u + p1 * f0 + p2 * (f1 - f0));
        };
        // one sweep from zero, then close the period: u0 = (I - e^{-L M})^{-1} u_N
        Vector u = Vector::Zero(ni);
        for (std::size_t it = 0; it < nt; ++it) u = step(u, it);
        const Matrix prop = expm(-t.length() * mat);
        const Matrix closing = Matrix::Identity(ni, ni) - prop;
        u = closing.partialPivLu().solve(u);
        std::vector<Vector> out(nt);
        for (std::size_t it = 0; it < nt; ++it) {
            out[it] = u;
            u = step(u, it);
        }
        for (std::size_t it = 0; it < nt; ++it)
            for (std::size_t c = 0; c < n; ++c) block[it * n + c] = out[it](static_cast<Eigen::Index>(c));
    });
}

CausalPropagator::CausalPropagator(const DifferentialOperator& a, std::vector<Axis> spatial, Axis time, double eta,
                                   int degree)
    : spatial_(std::move(spatial)), time_(time), n_(static_cast<std::size_t>(a.fiber())), degree_(degree) {
    const std::size_t m = static_cast<std::size_t>(a.m());
    if (spatial_.size() != m) throw ShapeError("spatial grid rank differs from the operator dimension");
    require_periodic(spatial_, m, "causal solve");
    if (time_.periodic || time_.origin != 0.0) throw ConfigurationError("causal solve needs a half-line time axis");
    if (degree < 0 || degree > 6) throw ArgumentError("interpolation degree must lie in 0..6");
    const auto p = static_cast<std::size_t>(degree);
    if (time_.n < p + 1) throw ConfigurationError("causal solve needs at least degree + 1 time samples");
    const auto ni = static_cast<Eigen::Index>(n_);
    const double h = time_.step;

    // local polynomial in theta = (t - t_n)/h through p+1 samples starting at offset -o
    std::vector<Eigen::MatrixXd> vinv(p + 1);
    for (std::size_t o = 0; o <= p; ++o) {
        Eigen::MatrixXd v(p + 1, p + 1);
        for (std::size_t i = 0; i <= p; ++i)
            for (std::size_t j = 0; j <= p; ++j) v(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                std::pow(static_cast<double>(i) - static_cast<double>(o), static_cast<double>(j));
        vinv[o] = v.inverse();
    }
    std::vector<double> fact(p + 1, 1.0);
    for (std::size_t j = 1; j <= p; ++j) fact[j] = fact[j - 1] * static_cast<double>(j);

    const GridFunction probe(spatial_, 1);
    modes_.resize(probe.node_count());
    parallel_for(modes_.size(), [&](std::size_t s) {
        const Matrix mat = shifted_symbol(a, spectral::frequency(probe, s), eta);
        // first block row of exp([[Z, I, 0..], [0, 0, I, ..], ..]) is e^Z, phi_1(Z), .., phi_{p+1}(Z)
        const auto nb = static_cast<Eigen::Index>(p + 2);
        Matrix big = Matrix::Zero(nb * ni, nb * ni);
        big.topLeftCorner(ni, ni) = -h * mat;
        for (Eigen::Index b = 0; b + 1 < nb; ++b) big.block(b * ni, (b + 1) * ni, ni, ni) = Matrix::Identity(ni, ni);
        const Matrix ex = expm(big);
        Mode& md = modes_[s];
        md.e = ex.topLeftCorner(ni, ni);
        md.w.assign(p + 1, std::vector<Matrix>(p + 1, Matrix::Zero(ni, ni)));
        for (std::size_t j = 0; j <= p; ++j) {
            const Matrix phi = h * fact[j] * ex.block(0, static_cast<Eigen::Index>(j + 1) * ni, ni, ni);
            for (std::size_t o = 0; o <= p; ++o)
                for (std::size_t i = 0; i <= p; ++i)
                    md.w[o][i] += vinv[o](static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) * phi;
        }
    });
}

GridFunction CausalPropagator::apply(const GridFunction& g, const GridFunction* v0) const {
    std::vector<Axis> ax = spatial_;
    ax.push_back(time_);
    if (g.axes() != ax || g.fiber() != n_) throw ShapeError("right-hand side grid differs from the propagator grid");
    if (v0 && (v0->axes() != spatial_ || v0->fiber() != n_)) throw ShapeError("initial value grid differs");
    const std::size_t nt = time_.n;
    const std::size_t n = n_;
    const auto ni = static_cast<Eigen::Index>(n);
    const auto p = static_cast<std::size_t>(degree_);

    GridFunction out = g;
    if (v0) {
        // append the initial value as an extra time sample so one transform carries both
        ax.back().n += 1;
        out = GridFunction(ax, n);
        const std::size_t ns = g.node_count() / nt;
        for (std::size_t s = 0; s < ns; ++s) {
            for (std::size_t it = 0; it < nt; ++it)
                for (std::size_t c = 0; c < n; ++c) out(s * (nt + 1) + it, c) = g(s * nt + it, c);
            for (std::size_t c = 0; c < n; ++c) out(s * (nt + 1) + nt, c) = (*v0)(s, c);
        }
    }
    const std::size_t stride = v0 ? nt + 1 : nt;
    out = apply_spatial_indexed(out, spatial_.size(), [&](std::size_t s, const Point&, std::span<cplx> block, std::size_t inner) {
        if (inner != stride) throw ShapeError("unexpected time layout");
        const Mode& md = modes_[s];
        auto gval = [&](std::size_t it) { return Eigen::Map<const Vector>(block.data() + it * n, ni); };
        std::vector<Vector> sol(nt);
        sol[0] = v0 ? Vector(gval(nt)) : Vector(Vector::Zero(ni));
        for (std::size_t it = 0; it + 1 < nt; ++it) {
            const std::size_t j0 = std::min(it > 0 ? it - 1 : 0, nt - 1 - p);
            const std::size_t o = it - j0;
            Vector u = md.e * sol[it];
            for (std::size_t i = 0; i <= p; ++i) u += md.w[o][i] * gval(j0 + i);
            sol[it + 1] = u;
        }
        for (std::size_t it = 0; it < nt; ++it)
            for (std::size_t c = 0; c < n; ++c) block[it * n + c] = sol[it](static_cast<Eigen::Index>(c));
    });
    if (!v0) return out;
    GridFunction res(g.axes(), n);
    const std::size_t ns = g.node_count() / nt;
    for (std::size_t s = 0; s < ns; ++s)
        for (std::size_t it = 0; it < nt; ++it)
            for (std::size_t c = 0; c < n; ++c) res(s * nt + it, c) = out(s * (nt + 1) + it, c);
    return res;
}

GridFunction causal_solve(const DifferentialOperator& a, const GridFunction& g, double eta, const GridFunction* v0,
                          int degree) {
    const std::size_t m = static_cast<std::size_t>(a.m());
    if (g.rank() != m + 1) throw ShapeError("right-hand side must live on a space-time grid of rank m + 1");
    if (g.fiber() != static_cast<std::size_t>(a.fiber())) throw ShapeError("fiber of g differs from the operator");
    require_periodic(g.axes(), m, "causal solve");
    if (!g.is_half_line()) throw ConfigurationError("causal solve needs a half-line time axis");
    return CausalPropagator(a, spatial_axes(g), g.axes().back(), eta, degree).apply(g, v0);
}

GridFunction shifted_apply(const DifferentialOperator& a, const GridFunction& u, double eta) {
    const std::size_t m = static_cast<std::size_t>(a.m());
    if (u.rank() < m) throw ShapeError("grid rank below the spatial dimension");
    if (u.fiber() != static_cast<std::size_t>(a.fiber())) throw ShapeError("fiber differs from the operator");
    require_periodic(u.axes(), m, "spectral operator application");
    const auto ni = static_cast<Eigen::Index>(u.fiber());
    return apply_spatial(u, m, [&](const Point& xi, std::span<cplx> block, std::size_t inner) {
        const Matrix mat = shifted_symbol(a, xi, eta);
        for (std::size_t it = 0; it < inner; ++it) {
            Eigen::Map<Vector> v(block.data() + it * static_cast<std::size_t>(ni), ni);
            v = (mat * v).eval();
        }
    });
}

double mr_ratio(const GridFunction& u, const GridFunction& f, int r, double s, double q, double eta) {
    const auto w = weights::WeightSystem::parabolic(static_cast<int>(u.rank()) - 1, r);
    const double en = std::pow(eta, 1.0 / r);
    const double nu = spaces::anisotropic_norm(u, {s + r, q, w, en});
    const double nf = spaces::anisotropic_norm(f, {s, q, w, en});
    return nu / nf;
}

}  // namespace parreg::fourier
