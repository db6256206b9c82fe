#include "parreg/localize.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include "parreg/errors.hpp"
#include "parreg/finite_difference.hpp"
#include "parreg/parallel.hpp"
#include "parreg/spectral.hpp"

namespace parreg::localize {

using json = nlohmann::json;
using operators::DifferentialOperator;
using Eigen::VectorXcd;

namespace {

constexpr double kPlateau = 0.5;
constexpr double kSupport = 0.85;
constexpr double kChiEnd = 0.98;

double binom(int n, int k) {
    double b = 1.0;
    for (int i = 1; i <= k; ++i) b = b * static_cast<double>(n - k + i) / static_cast<double>(i);
    return b;
}

double lq_combine(const std::vector<double>& v, double q) {
    if (std::isinf(q)) return v.empty() ? 0.0 : *std::max_element(v.begin(), v.end());
    double s = 0.0;
    for (double x : v) s += std::pow(x, q);
    return std::pow(s, 1.0 / q);
}

double block_norm(std::span<const cplx> f, int matrix_dim) {
    if (matrix_dim <= 0) return fiber_norm(f);
    return opnorm(fiber_matrix(f, static_cast<std::size_t>(matrix_dim)));
}

VectorXcd flatten(const ChartTuple& u) {
    std::size_t total = 0;
    for (const auto& g : u) total += g.size();
    VectorXcd v(static_cast<Eigen::Index>(total));
    Eigen::Index pos = 0;
    for (const auto& g : u)
        for (const cplx& x : g.values()) v(pos++) = x;
    return v;
}

ChartTuple unflatten(const VectorXcd& v, const std::vector<GridFunction>& shapes) {
    ChartTuple out;
    out.reserve(shapes.size());
    Eigen::Index pos = 0;
    for (const auto& sh : shapes) {
        GridFunction g = sh.zeros_like();
        for (cplx& x : g.values()) x = v(pos++);
        out.push_back(std::move(g));
    }
    return out;
}

GridFunction unflatten_one(const VectorXcd& v, const GridFunction& shape) {
    GridFunction g = shape.zeros_like();
    Eigen::Index pos = 0;
    for (cplx& x : g.values()) x = v(pos++);
    return g;
}

// H^k norm by the Bessel multiplier (1 + |xi|^2)^{k/2}
double bessel_norm(const GridFunction& u, double k) {
    return spaces::lq_norm(spectral::apply_scalar(u, [&](const Point& xi) {
                               double s = 1.0;
                               for (double x : xi) s += x * x;
                               return cplx(std::pow(s, 0.5 * k));
                           }),
                           2.0);
}

double resolvent_c0(const DifferentialOperator& a, std::size_t samples) {
    const auto zeta = operators::resolvent_samples(a.m(), samples, 17);
    const DifferentialOperator pp = a.principal_part();
    auto g = pp.spatial_grid();
    if (!g) return operators::resolvent_bound_check(pp, 0.0, zeta).c_measured;
    const std::size_t nodes = GridFunction(*g, 1).node_count();
    const std::size_t stride = std::max<std::size_t>(1, nodes / 64);
    double c0 = 0.0;
    for (std::size_t node = 0; node < nodes; node += stride)
        c0 = std::max(c0, operators::resolvent_bound_check(pp.frozen(node), 0.0, zeta).c_measured);
    return c0;
}

std::size_t uniform_cells_limit(const std::vector<Axis>& axes) {
    std::size_t lim = 1 << 20;
    for (const auto& ax : axes) {
        if (std::abs(ax.length() - axes.front().length()) > 1e-9 * axes.front().length())
            throw ConfigurationError("automatic chart scale needs a box with equal side lengths");
        lim = std::min(lim, ax.n / 4);
    }
    return lim;
}

bool cells_fit(const std::vector<Axis>& axes, std::size_t cells) {
    for (const auto& ax : axes)
        if (ax.n % cells != 0 || (cells > 1 && ax.n / cells < 4)) return false;
    return true;
}

struct Setup {
    LocalizationPlan plan;
    std::optional<LocalizedOperator> lop;
    EtaChoice choice;
};

Setup setup_variable(const DifferentialOperator& a, const std::vector<Axis>& spatial, const Axis& time,
                     const VariableOptions& opt) {
    if (a.is_time_dependent())
        throw ArgumentError("localized solve supports coefficients depending on x only");
    const auto er = operators::check_normal_ellipticity(a.principal_part());
    if (!er.is_elliptic)
        throw EllipticityError("operator is not uniformly normally elliptic (epsilon = " + std::to_string(er.epsilon) + ")");

    Setup s;
    LocalizationPlan& plan = s.plan;
    plan.c0 = resolvent_c0(a, opt.resolvent_samples);
    const double target = 1.0 / (2.0 * plan.c0);
    if (opt.delta) {
        s.lop.emplace(a, build_localization(spatial, *opt.delta, opt.bump_order));
    } else {
        const std::size_t lim = uniform_cells_limit(spatial);
        for (std::size_t cells = 1; cells <= std::max<std::size_t>(lim, 1); cells *= 2) {
            if (!cells_fit(spatial, cells)) continue;
            s.lop.emplace(a, build_localization_cells(spatial, cells, opt.bump_order));
            if (s.lop->max_deviation() <= target) break;
            s.lop.reset();
        }
        if (!s.lop) {
            std::ostringstream os;
            os << "no chart scale down to 4 grid cells brings the symbol deviation below 1/(2 c0) = " << target;
            throw ContractionError(os.str());
        }
    }
    const LocalizedOperator& lop = *s.lop;
    const auto& loc = lop.localization();
    plan.delta = loc.delta;
    plan.cells = loc.cells;
    plan.charts = loc.size();
    plan.omega = lop.max_deviation();
    const ChartedSystem sys = lop.system();
    plan.c1 = remainder_bound(sys, opt.c1_probes, opt.seed);
    plan.eta0 = 2.0 * plan.c1 * plan.c0 * plan.c0;
    plan.eta = opt.eta > 0.0 ? opt.eta : std::max(1.0, plan.eta0);
    s.choice = choose_eta(sys, time, plan.eta, opt.eta > 0.0, opt.charted());
    plan.eta = s.choice.eta;
    plan.eta_retries = s.choice.retries;
    plan.contraction = s.choice.contraction;
    plan.inner_contraction = s.choice.inverse->inner_contraction();
    return s;
}

}  // namespace

double smoothstep(double x, int order) {
    if (order < 1) throw ArgumentError("smoothstep order must be at least 1");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const int n = order - 1;
    double sum = 0.0;
    for (int k = 0; k <= n; ++k) sum += binom(n + k, k) * binom(2 * n + 1, n - k) * std::pow(-x, k);
    return std::pow(x, n + 1) * sum;
}

Point radial_retraction(const Point& d, double delta) {
    double sup = 0.0;
    for (double x : d) sup = std::max(sup, std::abs(x));
    if (sup <= delta) return d;
    Point out = d;
    for (double& x : out) x *= delta / sup;
    return out;
}

Point LocalizationSystem::center(std::size_t k) const {
    Point c(axes.size());
    for (std::size_t a = 0; a < axes.size(); ++a) c[a] = axes[a].origin + delta * static_cast<double>(charts[k][a]);
    return c;
}

std::size_t LocalizationSystem::center_node(std::size_t k) const {
    std::size_t node = 0;
    for (std::size_t a = 0; a < axes.size(); ++a) {
        const auto per = static_cast<std::size_t>(std::llround(delta / axes[a].step));
        node = node * axes[a].n + static_cast<std::size_t>(charts[k][a]) * per;
    }
    return node;
}

Point LocalizationSystem::displacement(std::size_t k, const Point& x) const {
    const Point c = center(k);
    Point d(x.size());
    for (std::size_t a = 0; a < x.size(); ++a) {
        const double len = axes[a].length();
        d[a] = x[a] - c[a];
        d[a] -= len * std::round(d[a] / len);
    }
    return d;
}

double LocalizationSystem::partition_defect() const {
    if (pi.empty()) return 0.0;
    double worst = 0.0;
    for (std::size_t node = 0; node < pi.front().node_count(); ++node) {
        double s = 0.0;
        for (const auto& p : pi) s += std::norm(p(node));
        worst = std::max(worst, std::abs(s - 1.0));
    }
    return worst;
}

json LocalizationSystem::to_json() const {
    return {{"delta", delta}, {"cells", cells}, {"charts", charts.size()}, {"bump_order", bump_order},
            {"partition_defect", partition_defect()}};
}

LocalizationSystem build_localization(const std::vector<Axis>& axes, double delta, int bump_order) {
    if (axes.empty()) throw ShapeError("localization needs at least one axis");
    if (!(delta > 0.0)) throw ArgumentError("chart scale must be positive");
    LocalizationSystem loc;
    loc.delta = delta;
    loc.bump_order = bump_order;
    loc.axes = axes;
    std::vector<std::size_t> counts;
    for (const auto& ax : axes) {
        if (!ax.periodic) throw ConfigurationError("localization needs periodic axes");
        const double ratio = ax.length() / delta;
        const auto c = static_cast<std::size_t>(std::llround(ratio));
        std::ostringstream os;
        if (c == 0 || std::abs(ratio - static_cast<double>(c)) > 1e-9 * ratio) {
            os << "chart scale " << delta << " does not divide the box side " << ax.length();
            throw ConfigurationError(os.str());
        }
        if (ax.n % c != 0 || (c > 1 && ax.n / c < 4)) {
            os << c << " cells do not fit a grid of " << ax.n << " nodes with at least 4 nodes per cell";
            throw ConfigurationError(os.str());
        }
        counts.push_back(c);
    }
    loc.cells = counts.front();

    std::size_t total = 1;
    for (auto c : counts) total *= c;
    for (std::size_t k = 0; k < total; ++k) {
        std::vector<long> z(axes.size());
        std::size_t rest = k;
        for (std::size_t a = axes.size(); a-- > 0;) {
            z[a] = static_cast<long>(rest % counts[a]);
            rest /= counts[a];
        }
        loc.charts.push_back(z);
    }

    auto profile = [&](double rho, double lo, double hi) { return 1.0 - smoothstep((rho - lo) / (hi - lo), bump_order); };
    std::vector<GridFunction> psi;
    for (std::size_t k = 0; k < total; ++k) {
        psi.push_back(GridFunction::sample_scalar(axes, [&](const Point& x) {
            double v = 1.0;
            for (double d : loc.displacement(k, x)) v *= profile(std::abs(d) / delta, kPlateau, kSupport);
            return cplx(v);
        }));
        loc.chi.push_back(GridFunction::sample_scalar(axes, [&](const Point& x) {
            double v = 1.0;
            for (double d : loc.displacement(k, x)) v *= profile(std::abs(d) / delta, kSupport, kChiEnd);
            return cplx(v);
        }));
    }
    const std::size_t nodes = psi.front().node_count();
    std::vector<double> norm(nodes, 0.0);
    for (const auto& p : psi)
        for (std::size_t node = 0; node < nodes; ++node) norm[node] += std::norm(p(node));
    for (auto& p : psi)
        for (std::size_t node = 0; node < nodes; ++node) p(node) /= std::sqrt(norm[node]);
    loc.pi = std::move(psi);
    return loc;
}

LocalizationSystem build_localization_cells(const std::vector<Axis>& axes, std::size_t cells, int bump_order) {
    if (axes.empty() || cells == 0) throw ArgumentError("need at least one axis and one cell");
    return build_localization(axes, axes.front().length() / static_cast<double>(cells), bump_order);
}

json FrozenCoefficientField::to_json() const {
    return {{"delta", delta}, {"omega", omega}, {"deviation", deviation}, {"cell_mismatch", cell_mismatch}};
}

FrozenCoefficientField freeze_coefficients(const GridFunction& a, const LocalizationSystem& loc, int matrix_dim) {
    if (a.axes() != loc.axes) throw ShapeError("coefficient grid differs from the localization grid");
    FrozenCoefficientField out;
    out.delta = loc.delta;
    const spectral::TrigInterpolant interp(a);
    const std::size_t rank = a.rank();
    const std::size_t fib = a.fiber();
    out.fields.assign(loc.size(), a.zeros_like());
    out.deviation.assign(loc.size(), 0.0);
    out.centers.resize(loc.size());
    std::vector<double> mismatch(loc.size(), 0.0);
    parallel_for(loc.size(), [&](std::size_t k) {
        const Point c = loc.center(k);
        out.centers[k] = c;
        const std::size_t cn = loc.center_node(k);
        GridFunction& fk = out.fields[k];
        std::map<std::vector<long long>, std::vector<cplx>> cache;
        for (std::size_t node = 0; node < a.node_count(); ++node) {
            const Point d = loc.displacement(k, a.coords(node));
            const Point h = radial_retraction(d, loc.delta);
            if (h == d) {
                for (std::size_t j = 0; j < fib; ++j) fk(node, j) = a(node, j);
            } else {
                // grid node when every coordinate lands on one, else the interpolant
                Point p(rank);
                std::vector<std::size_t> idx(rank);
                std::vector<long long> key(rank);
                bool on_grid = true;
                for (std::size_t ax = 0; ax < rank; ++ax) {
                    const Axis& axis = a.axis(ax);
                    p[ax] = c[ax] + h[ax];
                    const double s = (p[ax] - axis.origin) / axis.step;
                    const double rs = std::round(s);
                    key[ax] = std::llround(s * 1e6);
                    if (std::abs(s - rs) > 1e-9) on_grid = false;
                    const long n = static_cast<long>(axis.n);
                    idx[ax] = static_cast<std::size_t>(((static_cast<long>(rs) % n) + n) % n);
                }
                if (on_grid) {
                    const std::size_t src = a.flat_index(idx);
                    for (std::size_t j = 0; j < fib; ++j) fk(node, j) = a(src, j);
                } else {
                    auto it = cache.find(key);
                    if (it == cache.end()) it = cache.emplace(key, interp(p)).first;
                    for (std::size_t j = 0; j < fib; ++j) fk(node, j) = it->second[j];
                }
            }
            std::vector<cplx> diff(fib);
            for (std::size_t j = 0; j < fib; ++j) diff[j] = fk(node, j) - a(cn, j);
            out.deviation[k] = std::max(out.deviation[k], block_norm(diff, matrix_dim));
            if (h == d) {
                for (std::size_t j = 0; j < fib; ++j) diff[j] = fk(node, j) - a(node, j);
                mismatch[k] = std::max(mismatch[k], block_norm(diff, matrix_dim));
            }
        }
    });
    out.omega = out.deviation.empty() ? 0.0 : *std::max_element(out.deviation.begin(), out.deviation.end());
    out.cell_mismatch = mismatch.empty() ? 0.0 : *std::max_element(mismatch.begin(), mismatch.end());
    return out;
}

GridFunction times_spatial(const GridFunction& field, const GridFunction& u) {
    if (field.fiber() != 1) throw ShapeError("scalar field expected");
    if (u.rank() < field.rank()) throw ShapeError("function rank below the field rank");
    for (std::size_t a = 0; a < field.rank(); ++a)
        if (u.axis(a) != field.axis(a)) throw ShapeError("spatial grids differ");
    const std::size_t inner = u.node_count() / field.node_count();
    GridFunction out = u;
    for (std::size_t node = 0; node < u.node_count(); ++node) {
        const cplx w = field(node / inner);
        for (auto& v : out.at_node(node)) v *= w;
    }
    return out;
}

GridFunction r_assemble(const LocalizationSystem& loc, const ChartTuple& pieces) {
    if (pieces.size() != loc.size()) throw ShapeError("one piece per chart expected");
    GridFunction out = pieces.front().zeros_like();
    for (std::size_t k = 0; k < loc.size(); ++k) out += times_spatial(loc.pi[k], pieces[k]);
    return out;
}

ChartTuple r_decompose(const LocalizationSystem& loc, const GridFunction& u) {
    ChartTuple out;
    out.reserve(loc.size());
    for (std::size_t k = 0; k < loc.size(); ++k) out.push_back(times_spatial(loc.pi[k], u));
    return out;
}

double piece_norm(const LocalizationSystem& loc, const GridFunction& u, const spaces::NormSpec& spec) {
    std::vector<double> norms;
    for (const auto& piece : r_decompose(loc, u)) norms.push_back(spaces::anisotropic_norm(piece, spec));
    return lq_combine(norms, spec.q);
}

double NeumannReport::max_rate() const { return rates.empty() ? 0.0 : *std::max_element(rates.begin(), rates.end()); }

json NeumannReport::to_json() const {
    return {{"converged", converged}, {"iterations", iterations}, {"contraction", contraction},
            {"increments", increments}, {"rates", rates}};
}

double contraction_estimate(const LinearMap& a_inv, const LinearMap& b, Eigen::Index dim, int probes, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    VectorXcd x(dim);
    for (Eigen::Index i = 0; i < dim; ++i) x(i) = cplx(nd(rng), nd(rng));
    x /= x.norm();
    double est = 0.0;
    for (int p = 0; p < probes; ++p) {
        const VectorXcd y = b(a_inv(x));
        const double g = y.norm();
        est = std::max(est, g);
        if (g == 0.0) break;
        x = y / g;
    }
    return est;
}

NeumannReport neumann_solve(const LinearMap& a_inv, const LinearMap& b, const VectorXcd& rhs, const NeumannOptions& opts) {
    NeumannReport rep;
    rep.contraction = opts.contraction ? *opts.contraction
                                       : contraction_estimate(a_inv, b, rhs.size(), opts.probes, opts.seed);
    if (rep.contraction > opts.max_contraction) {
        std::ostringstream os;
        os << "perturbation is not a contraction: ||b a^{-1}|| ~ " << rep.contraction << " > " << opts.max_contraction;
        throw ContractionError(os.str());
    }
    VectorXcd y = rhs;
    VectorXcd x;
    for (int it = 1; it <= opts.max_iter; ++it) {
        x = a_inv(y);
        VectorXcd next = rhs - b(x);
        const double inc = (next - y).norm();
        if (!rep.increments.empty() && rep.increments.back() > 0.0) rep.rates.push_back(inc / rep.increments.back());
        rep.increments.push_back(inc);
        rep.iterations = it;
        y = std::move(next);
        if (inc <= opts.tol * std::max(y.norm(), 1e-300)) {
            rep.converged = true;
            break;
        }
    }
    if (rep.increments.empty() || rep.increments.back() != 0.0) x = a_inv(y);
    rep.x = std::move(x);
    return rep;
}

LocalizedOperator::LocalizedOperator(const DifferentialOperator& a, LocalizationSystem loc)
    : a_(a), low_(a.lower_order_part()), loc_(std::move(loc)) {
    if (a.is_time_dependent()) throw ArgumentError("localized operators need coefficients depending on x only");
    if (static_cast<std::size_t>(a.m()) != loc_.axes.size()) throw ShapeError("operator dimension differs from the grid");
    if (auto g = a.spatial_grid(); g && *g != loc_.axes) throw ShapeError("coefficient grid differs from the localization grid");
    const DifferentialOperator pp = a.principal_part();
    frozen_.assign(loc_.size(), DifferentialOperator(a.m(), a.order(), a.fiber(), a.sigma_bar()));
    center_ = frozen_;
    deviation_.assign(loc_.size(), 0.0);
    for (const auto& [alpha, c] : pp.coeffs()) {
        if (c.is_constant()) {
            for (std::size_t k = 0; k < loc_.size(); ++k) {
                frozen_[k].set(alpha, c.constant);
                center_[k].set(alpha, c.constant);
            }
            continue;
        }
        const auto fz = freeze_coefficients(*c.field, loc_, a.fiber());
        for (std::size_t k = 0; k < loc_.size(); ++k) {
            frozen_[k].set(alpha, fz.fields[k]);
            center_[k].set(alpha, c.at(loc_.center_node(k)));
            deviation_[k] += fz.deviation[k];
        }
    }
}

double LocalizedOperator::max_deviation() const {
    return deviation_.empty() ? 0.0 : *std::max_element(deviation_.begin(), deviation_.end());
}

ChartTuple LocalizedOperator::principal(const ChartTuple& u) const {
    if (u.size() != loc_.size()) throw ShapeError("one piece per chart expected");
    ChartTuple out(u.size());
    parallel_for(u.size(), [&](std::size_t k) { out[k] = frozen_[k].apply(u[k]); });
    return out;
}

ChartTuple LocalizedOperator::remainder(const ChartTuple& u) const {
    if (u.size() != loc_.size()) throw ShapeError("one piece per chart expected");
    // commutator part C = A(R u) - sum pi_k A u_k, shared by every chart
    GridFunction comm = a_.apply(r_assemble(loc_, u));
    ChartTuple au(u.size());
    parallel_for(u.size(), [&](std::size_t k) { au[k] = times_spatial(loc_.pi[k], a_.apply(u[k])); });
    for (const auto& g : au) comm -= g;
    ChartTuple out(u.size());
    parallel_for(u.size(), [&](std::size_t k) { out[k] = low_.apply(u[k]) + times_spatial(loc_.pi[k], comm); });
    return out;
}

ChartedSystem LocalizedOperator::system() const {
    ChartedSystem sys;
    sys.grids.assign(loc_.size(), loc_.axes);
    sys.principal = frozen_;
    sys.centre = center_;
    sys.remainder = [this](const ChartTuple& u) { return remainder(u); };
    sys.decompose = [this](const GridFunction& u) { return r_decompose(loc_, u); };
    sys.assemble = [this](const ChartTuple& u) { return r_assemble(loc_, u); };
    sys.apply = [this](const GridFunction& u) { return a_.apply(u); };
    sys.order = a_.order();
    sys.fiber = static_cast<std::size_t>(a_.fiber());
    return sys;
}

ChartInverse::ChartInverse(const ChartedSystem& sys, const Axis& time, double eta, int degree, double tol, int max_iter,
                           unsigned seed)
    : principal_(sys.principal), centre_(sys.centre), tol_(tol), max_iter_(max_iter) {
    if (sys.principal.size() != sys.size() || sys.centre.size() != sys.size())
        throw ShapeError("one principal and one centre operator per chart expected");
    for (std::size_t k = 0; k < sys.size(); ++k) {
        std::vector<Axis> st = sys.grids[k];
        st.push_back(time);
        shapes_.emplace_back(st, sys.fiber);
        props_.emplace_back(centre_[k], sys.grids[k], time, eta, degree);
    }
    inner_.assign(sys.size(), 0.0);
    for (std::size_t k = 0; k < sys.size(); ++k) {
        if (principal_[k].is_constant()) continue;
        const LinearMap a0 = [&](const VectorXcd& y) { return flatten({props_[k].apply(unflatten_one(y, shapes_[k]))}); };
        const LinearMap b = [&](const VectorXcd& x) { return flatten({perturb(k, unflatten_one(x, shapes_[k]))}); };
        inner_[k] = contraction_estimate(a0, b, static_cast<Eigen::Index>(shapes_[k].size()), 20,
                                         seed + static_cast<unsigned>(k));
        if (inner_[k] > 0.5) {
            std::ostringstream os;
            os << "frozen chart " << k << " is not a contraction around its centre (estimate " << inner_[k] << ")";
            throw ContractionError(os.str());
        }
    }
}

GridFunction ChartInverse::perturb(std::size_t k, const GridFunction& x) const {
    return principal_[k].apply(x) - centre_[k].apply(x);
}

GridFunction ChartInverse::solve(std::size_t k, const GridFunction& g) const {
    if (principal_[k].is_constant()) return props_[k].apply(g);
    const LinearMap a0 = [&](const VectorXcd& y) { return flatten({props_[k].apply(unflatten_one(y, shapes_[k]))}); };
    const LinearMap b = [&](const VectorXcd& x) { return flatten({perturb(k, unflatten_one(x, shapes_[k]))}); };
    NeumannOptions no;
    no.tol = tol_;
    no.max_iter = max_iter_;
    no.contraction = inner_[k];
    const auto rep = neumann_solve(a0, b, flatten({g}), no);
    if (!rep.converged) throw ContractionError("frozen chart solve " + std::to_string(k) + " did not converge");
    return unflatten_one(rep.x, shapes_[k]);
}

ChartTuple ChartInverse::solve_all(const ChartTuple& g) const {
    if (g.size() != props_.size()) throw ShapeError("one piece per chart expected");
    ChartTuple out(g.size());
    parallel_for(g.size(), [&](std::size_t k) { out[k] = solve(k, g[k]); });
    return out;
}

double remainder_bound(const ChartedSystem& sys, int probes, unsigned seed) {
    double c1 = 0.0;
    for (int p = 0; p < probes; ++p) {
        ChartTuple u;
        for (std::size_t k = 0; k < sys.size(); ++k) {
            int kmax = 1 << 30;
            for (const auto& ax : sys.grids[k]) kmax = std::min(kmax, static_cast<int>(ax.n / 4));
            u.push_back(spectral::random_band_limited(sys.grids[k], sys.fiber, kmax,
                                                      seed + static_cast<unsigned>(p * 7919 + k)));
        }
        const ChartTuple bu = sys.remainder(u);
        double num = 0.0;
        double den = 0.0;
        for (std::size_t k = 0; k < u.size(); ++k) {
            num += std::pow(spaces::lq_norm(bu[k], 2.0), 2);
            den += std::pow(bessel_norm(u[k], sys.order - 1), 2);
        }
        if (den > 0.0) c1 = std::max(c1, std::sqrt(num / den));
    }
    return c1;
}

double principal_resolvent_bound(const ChartedSystem& sys, std::size_t samples) {
    if (sys.size() == 0) throw ArgumentError("empty chart system");
    const auto zeta = operators::resolvent_samples(sys.principal.front().m(), samples, 17);
    double c0 = 0.0;
    const std::size_t budget = std::max<std::size_t>(1, 64 / sys.size());
    for (std::size_t k = 0; k < sys.size(); ++k) {
        const DifferentialOperator& pp = sys.principal[k];
        auto g = pp.spatial_grid();
        if (!g) {
            c0 = std::max(c0, operators::resolvent_bound_check(pp, 0.0, zeta).c_measured);
            continue;
        }
        const std::size_t nodes = GridFunction(*g, 1).node_count();
        const std::size_t stride = std::max<std::size_t>(1, nodes / budget);
        for (std::size_t node = 0; node < nodes; node += stride)
            c0 = std::max(c0, operators::resolvent_bound_check(pp.frozen(node), 0.0, zeta).c_measured);
    }
    return c0;
}

EtaChoice choose_eta(const ChartedSystem& sys, const Axis& time, double eta, bool fixed, const ChartedOptions& opt) {
    if (!(eta > 0.0)) throw ArgumentError("eta must be positive");
    EtaChoice c;
    c.eta = eta;
    for (;;) {
        auto inv = std::make_shared<const ChartInverse>(sys, time, c.eta, opt.degree, 0.1 * opt.tol, opt.max_neumann_iter,
                                                        opt.seed);
        const auto& shapes = inv->shapes();
        Eigen::Index dim = 0;
        for (const auto& sh : shapes) dim += static_cast<Eigen::Index>(sh.size());
        const LinearMap ainv = [&](const VectorXcd& y) { return flatten(inv->solve_all(unflatten(y, shapes))); };
        const LinearMap b = [&](const VectorXcd& x) { return flatten(sys.remainder(unflatten(x, shapes))); };
        c.contraction = contraction_estimate(ainv, b, dim, 20, opt.seed);
        if (c.contraction <= 0.5) {
            c.inverse = std::move(inv);
            return c;
        }
        if (fixed || c.retries >= opt.max_retries) {
            std::ostringstream os;
            os << "remainder is not a contraction: ||B a^{-1}|| ~ " << c.contraction << " at eta = " << c.eta;
            throw ContractionError(os.str());
        }
        c.eta *= 4.0;
        ++c.retries;
    }
}

SolveReport charted_solve(const ChartedSystem& sys, const GridFunction& f, const GridFunction& u0, const EtaChoice& choice,
                          const spaces::NormSpec& spec, const ChartedOptions& opt) {
    if (!choice.inverse) throw ArgumentError("eta choice carries no chart inverse");
    const Axis time = f.axes().back();
    const std::size_t m = f.rank() - 1;
    const double eta = choice.eta;
    const ChartInverse& inv = *choice.inverse;

    // u = v + w: w is the Taylor polynomial of the compatibility chain, so the
    // charted problem for v starts from zero with data vanishing to order lift_order
    if (time.n < static_cast<std::size_t>(opt.lift_order) + 5)
        throw ConfigurationError("too few time samples for the initial lift");
    std::vector<GridFunction> chain{u0};
    for (int j = 0; j < opt.lift_order; ++j)
        chain.push_back(spaces::trace(f, j) - static_cast<cplx>(eta) * chain.back() - sys.apply(chain.back()));
    GridFunction w = f.zeros_like();
    GridFunction wt = f.zeros_like();
    for (std::size_t it = 0; it < time.n; ++it) {
        const double t = time.coord(it);
        GridFunction val = u0.zeros_like();
        GridFunction der = u0.zeros_like();
        double c = 1.0;
        for (std::size_t j = 0; j < chain.size(); ++j) {
            val += static_cast<cplx>(c) * chain[j];
            if (j + 1 < chain.size()) der += static_cast<cplx>(c) * chain[j + 1];
            c *= t / static_cast<double>(j + 1);
        }
        set_time_slice(w, it, val);
        set_time_slice(wt, it, der);
    }
    const GridFunction g = f - wt - static_cast<cplx>(eta) * w - sys.apply(w);

    const auto& shapes = inv.shapes();
    const LinearMap ainv = [&](const VectorXcd& y) { return flatten(inv.solve_all(unflatten(y, shapes))); };
    const LinearMap b = [&](const VectorXcd& x) { return flatten(sys.remainder(unflatten(x, shapes))); };
    NeumannOptions no;
    no.tol = opt.tol;
    no.max_iter = opt.max_neumann_iter;
    no.contraction = choice.contraction;
    const NeumannReport nrep = neumann_solve(ainv, b, flatten(sys.decompose(g)), no);
    const ChartTuple pieces = unflatten(nrep.x, shapes);

    SolveReport rep;
    rep.u = sys.assemble(pieces) + w;
    rep.eta = eta;
    const GridFunction res = fd::derivative_along(rep.u, m, 1, 6) + static_cast<cplx>(eta) * rep.u + sys.apply(rep.u) - f;
    const double nf = spaces::lq_norm(f, 2.0);
    rep.residual = nf > 0.0 ? spaces::lq_norm(res, 2.0) / nf : spaces::lq_norm(res, 2.0);
    rep.window = {{"length", time.length()}, {"samples", time.n}};
    rep.constants = {{"trace_error", (time_slice(rep.u, 0) - u0).max_abs()}, {"contraction", choice.contraction}};
    rep.extra = {{"neumann", nrep.to_json()}, {"charts", sys.size()}, {"eta_retries", choice.retries}};
    if (!nrep.converged) rep.extra["warning"] = "Neumann iteration stopped at max_neumann_iter";
    if (opt.measure) {
        const int r = sys.order;
        const spaces::NormSpec lo{spec.s, spec.q, weights::WeightSystem::parabolic(static_cast<int>(m), r),
                                  std::pow(eta, 1.0 / r)};
        spaces::NormSpec hi = lo;
        hi.s += r;
        const ChartTuple bu = sys.remainder(pieces);
        std::vector<double> nb;
        std::vector<double> nu;
        for (std::size_t k = 0; k < pieces.size(); ++k) {
            nb.push_back(spaces::anisotropic_norm(bu[k], lo));
            nu.push_back(spaces::anisotropic_norm(pieces[k], hi));
        }
        const double den = lq_combine(nu, spec.q);
        rep.constants["remainder_ratio"] = den > 0.0 ? lq_combine(nb, spec.q) / den : 0.0;
        rep.norms = {{"pieces_hi", den}, {"remainder_lo", lq_combine(nb, spec.q)}, {"norm_eta", lo.eta}};
    }
    return rep;
}

VariableOptions VariableOptions::from_json(const json& j) {
    VariableOptions o;
    if (j.contains("delta") && !(j["delta"].is_string() && j["delta"].get<std::string>() == "auto")) {
        if (!j["delta"].is_number()) throw ValidationError("delta must be \"auto\" or a number");
        o.delta = j["delta"].get<double>();
    }
    o.bump_order = j.value("bump_order", o.bump_order);
    o.max_neumann_iter = j.value("max_neumann_iter", o.max_neumann_iter);
    o.eta = j.value("eta", o.eta);
    o.tol = j.value("tol", o.tol);
    o.degree = j.value("degree", o.degree);
    o.lift_order = j.value("lift_order", o.lift_order);
    return o;
}

ChartedOptions VariableOptions::charted() const {
    ChartedOptions c;
    c.tol = tol;
    c.max_neumann_iter = max_neumann_iter;
    c.degree = degree;
    c.lift_order = lift_order;
    c.seed = seed;
    c.measure = measure;
    return c;
}

json LocalizationPlan::to_json() const {
    return {{"delta", delta},   {"cells", cells},
            {"charts", charts}, {"c0", c0},
            {"c1", c1},         {"eta0", eta0},
            {"eta", eta},       {"omega", omega},
            {"contraction", contraction}, {"inner_contraction", inner_contraction},
            {"eta_retries", eta_retries}};
}

LocalizationPlan plan_variable_parabolic(const DifferentialOperator& a, const std::vector<Axis>& spatial, const Axis& time,
                                         const VariableOptions& opt) {
    return setup_variable(a, spatial, time, opt).plan;
}

SolveReport solve_variable_parabolic(const cauchy::CauchyProblem& p, const VariableOptions& opt) {
    p.validate();
    const DifferentialOperator& a = p.op;
    if (a.is_constant()) {
        const double eta = opt.eta > 0.0 ? opt.eta : 1.0;
        cauchy::FrozenOptions fo;
        fo.measure = opt.measure;
        fo.degree = opt.degree;
        SolveReport rep = cauchy::solve_cauchy_frozen(p, eta, fo);
        rep.extra["charts"] = 1;
        return rep;
    }
    const std::vector<Axis> spatial = p.u0.axes();
    const Axis time = p.f.axes().back();
    const Setup s = setup_variable(a, spatial, time, opt);
    const ChartedSystem sys = s.lop->system();
    SolveReport rep = charted_solve(sys, p.f, p.u0, s.choice, p.spec, opt.charted());
    rep.constants["c0"] = s.plan.c0;
    rep.constants["c1"] = s.plan.c1;
    rep.extra["plan"] = s.plan.to_json();
    rep.extra["localization"] = s.lop->localization().to_json();
    return rep;
}

}  // namespace parreg::localize
