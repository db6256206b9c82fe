#include "parreg/cauchy.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "parreg/errors.hpp"
#include "parreg/finite_difference.hpp"
#include "parreg/fourier.hpp"
#include "parreg/grid_io.hpp"
#include "parreg/spectral.hpp"

namespace parreg::cauchy {

using json = nlohmann::json;
using operators::DifferentialOperator;
using weights::WeightSystem;

namespace {

double inv_q(double q) { return std::isinf(q) ? 0.0 : 1.0 / q; }

bool in_shifted_naturals(double s, double shift) {
    const double x = s - shift;
    return x > -1e-12 && std::abs(x - std::round(x)) < 1e-9;
}

GridFunction grid_entry(const json& j, const std::filesystem::path& base) {
    if (j.is_string()) return io::read_grid(base / j.get<std::string>());
    return io::grid_from_json(j);
}

double safe_ratio(double num, double den) {
    if (num == 0.0) return 0.0;
    return den > 0.0 ? num / den : std::numeric_limits<double>::infinity();
}

// keeps the time samples i0..i1 of a half-line function, re-originated at 0
GridFunction time_window(const GridFunction& u, std::size_t i0, std::size_t i1) {
    const Axis& t = u.axes().back();
    std::vector<Axis> axes = u.axes();
    axes.back() = Axis::half_line(i1 - i0 + 1, t.step);
    GridFunction out(axes, u.fiber());
    const std::size_t nt = t.n;
    const std::size_t nw = i1 - i0 + 1;
    const std::size_t ns = u.node_count() / nt;
    for (std::size_t s = 0; s < ns; ++s)
        for (std::size_t it = 0; it < nw; ++it)
            for (std::size_t c = 0; c < u.fiber(); ++c) out(s * nw + it, c) = u(s * nt + i0 + it, c);
    return out;
}

void scale_by_time(GridFunction& u, const std::function<double(double)>& g) {
    const Axis& t = u.axes().back();
    const std::size_t nt = t.n;
    for (std::size_t node = 0; node < u.node_count(); ++node) {
        const double fac = g(t.coord(node % nt));
        for (auto& v : u.at_node(node)) v *= fac;
    }
}

// A(t) u per time sample for an operator constant in x (time index = sample index + offset)
GridFunction apply_in_time(const DifferentialOperator& a, const GridFunction& u, std::size_t offset, double eta) {
    GridFunction out = u.zeros_like();
    const std::size_t nt = u.axes().back().n;
    for (std::size_t it = 0; it < nt; ++it)
        set_time_slice(out, it, fourier::shifted_apply(a.frozen(0, offset + it), time_slice(u, it), eta));
    return out;
}

void require_constant_in_x(const DifferentialOperator& a) {
    for (const auto& [alpha, c] : a.coeffs()) {
        if (c.is_constant()) continue;
        if (!c.time_dependent) throw ArgumentError("interval solver needs coefficients constant in x");
        const GridFunction& fld = *c.field;
        const std::size_t nt = fld.axes().back().n;
        const std::size_t ns = fld.node_count() / nt;
        for (std::size_t s = 1; s < ns; ++s)
            for (std::size_t it = 0; it < nt; ++it)
                for (std::size_t k = 0; k < fld.fiber(); ++k)
                    if (std::abs(fld(s * nt + it, k) - fld(it, k)) > 1e-12 * (1.0 + std::abs(fld(it, k))))
                        throw ArgumentError("interval solver needs coefficients constant in x");
    }
}

}  // namespace

void CauchyProblem::validate() const {
    const auto m = static_cast<std::size_t>(op.m());
    if (u0.rank() != m) throw ShapeError("u0 must live on an m-dimensional spatial grid");
    if (f.rank() != m + 1) throw ShapeError("f must live on a space-time grid of rank m + 1");
    if (!f.is_half_line()) throw ShapeError("f needs a half-line time axis starting at 0");
    if (spatial_axes(f) != u0.axes()) throw ShapeError("spatial grids of f and u0 differ");
    if (f.fiber() != static_cast<std::size_t>(op.fiber()) || u0.fiber() != f.fiber())
        throw ShapeError("fiber dimension of the data differs from the operator");
    for (const auto& ax : u0.axes())
        if (!ax.periodic) throw ConfigurationError("spatial axes must be periodic");
    const double len = f.axes().back().length();
    if (!(horizon > 0.0) || std::abs(horizon - len) > 1e-9 * std::max(1.0, len))
        throw ShapeError("horizon differs from the time extent of f");
    spaces::check_admissible({spec.s, spec.q, WeightSystem::parabolic(op.m(), op.order()), 1.0});
}

CauchyProblem CauchyProblem::from_json(const json& j, const std::filesystem::path& base_dir) {
    try {
        CauchyProblem p{DifferentialOperator::from_json(j.at("operator"), base_dir), grid_entry(j.at("f"), base_dir),
                        grid_entry(j.at("u0"), base_dir), {}, 0.0};
        p.spec.s = j.value("s", 0.5);
        p.spec.q = j.contains("q") && j["q"].is_string() && j["q"] == "inf" ? spaces::kInf : j.value("q", 2.0);
        p.spec.weight = WeightSystem::parabolic(p.op.m(), p.op.order());
        p.horizon = j.value("horizon", p.f.rank() ? p.f.axes().back().length() : 0.0);
        p.validate();
        return p;
    } catch (const json::exception& e) {
        throw ArgumentError(std::string("malformed Cauchy problem: ") + e.what());
    }
}

int chain_order(double s, double q, int r) {
    const double iq = inv_q(q);
    // below r/q no chain enters the construction, so nothing depends on the trace boundary
    if (s < r * iq - 1e-12) return -1;
    if (in_shifted_naturals(s, iq)) throw ValidationError("s in N+1/q is excluded (trace boundary)");
    if (in_shifted_naturals(s, r * iq)) throw ValidationError("s in N+r/q is excluded (trace boundary)");
    return static_cast<int>(std::floor(s / r - iq));
}

CompatibilityChain compatibility_chain(const CauchyProblem& p, int k, double eta) {
    if (k < 0) throw ArgumentError("chain order must be nonnegative");
    if (!p.op.is_constant()) throw ArgumentError("compatibility chain needs constant (frozen) coefficients");
    const std::size_t nt = p.f.axes().back().n;
    if (nt < static_cast<std::size_t>(k) + 2)
        throw ConfigurationError("chain of order " + std::to_string(k) + " needs at least " + std::to_string(k + 2) +
                                 " time samples of f, grid has " + std::to_string(nt));
    CompatibilityChain chain{p.u0};
    for (int j = 0; j < k; ++j) chain.push_back(spaces::trace(p.f, j) - fourier::shifted_apply(p.op, chain.back(), eta));
    return chain;
}

SolveReport solve_cauchy_frozen(const CauchyProblem& p, double eta, const FrozenOptions& opt) {
    p.validate();
    if (!(eta > 0.0)) throw ValidationError("the shift eta must be positive");
    if (!p.op.is_constant()) throw ArgumentError("frozen Cauchy solve needs constant coefficients");
    if (opt.check_ellipticity) {
        const auto er = operators::check_normal_ellipticity(p.op.principal_part());
        if (!er.is_elliptic)
            throw EllipticityError("operator is not normally elliptic (epsilon = " + std::to_string(er.epsilon) + ")");
    }
    const int m = p.op.m();
    const int r = p.op.order();
    const int k = chain_order(p.spec.s, p.spec.q, r);
    const int kk = k >= 0 ? k + 1 : 0;
    const CompatibilityChain chain = opt.chain ? *opt.chain : compatibility_chain(p, kk, eta);
    const Axis& taxis = p.f.axes().back();
    const auto wpar = WeightSystem::parabolic(m, r);

    GridFunction wt;
    const GridFunction w = spaces::trace_coretraction(chain, wpar, eta, taxis, &wt);
    GridFunction g = p.f - (wt + fourier::shifted_apply(p.op, w, eta));
    const GridFunction v = fourier::causal_solve(p.op, g, eta, nullptr, opt.degree);

    SolveReport rep;
    rep.u = v + w;
    rep.eta = eta;
    const auto tdim = static_cast<std::size_t>(m);
    const GridFunction res = fd::derivative_along(rep.u, tdim, 1, 6) + fourier::shifted_apply(p.op, rep.u, eta) - p.f;
    const double nf2 = spaces::lq_norm(p.f, 2.0);
    rep.residual = nf2 > 0.0 ? spaces::lq_norm(res, 2.0) / nf2 : spaces::lq_norm(res, 2.0);
    rep.window = {{"length", taxis.length()}, {"samples", taxis.n}};
    rep.constants["trace_error"] = (time_slice(rep.u, 0) - p.u0).max_abs();
    rep.extra["chain_order"] = k;
    rep.extra["chain_entries"] = chain.size();
    if (!opt.measure) return rep;

    // d_t^{j+1} u(0) = d_t^j f(0) - A_eta d_t^j u(0), measured on the computed u
    double chain_err = 0.0;
    const int jmax = std::min(std::max(1, k), static_cast<int>(taxis.n) - 3);
    for (int j = 0; j <= jmax; ++j) {
        const GridFunction lhs = spaces::trace(rep.u, j + 1);
        const GridFunction rhs = spaces::trace(p.f, j) - fourier::shifted_apply(p.op, spaces::trace(rep.u, j), eta);
        chain_err = std::max(chain_err, safe_ratio(spaces::lq_norm(lhs - rhs, 2.0), spaces::lq_norm(lhs, 2.0)));
    }
    rep.constants["chain_identity_error"] = chain_err;

    const double en = std::pow(eta, 1.0 / r);
    const double iq = inv_q(p.spec.q);
    const double nu = spaces::anisotropic_norm(rep.u, {p.spec.s + r, p.spec.q, wpar, en});
    const double nf = spaces::anisotropic_norm(p.f, {p.spec.s, p.spec.q, wpar, en});
    const double nu0 = spaces::anisotropic_norm(p.u0, {p.spec.s + r * (1.0 - iq), p.spec.q, WeightSystem::trivial(m), en});
    const std::size_t neg = opt.negative ? opt.negative : std::max<std::size_t>(8, taxis.n / 4);
    const double nv = spaces::anisotropic_norm(spaces::extend_zero(v, neg), {p.spec.s + r, p.spec.q, wpar, en});
    rep.norms = {{"u", nu}, {"f", nf}, {"u0", nu0}, {"v_extended", nv}, {"norm_eta", en}};
    rep.constants["mr_ratio"] = safe_ratio(nu, nf + nu0);
    rep.constants["correction_ratio"] = safe_ratio(nv, nf + nu0);
    return rep;
}

std::vector<double> coefficient_time_modulus(const DifferentialOperator& a) {
    std::vector<double> out(3, 0.0);
    for (const auto& [alpha, c] : a.coeffs()) {
        if (!c.time_dependent) continue;
        const GridFunction& fld = *c.field;
        const std::size_t nt = fld.axes().back().n;
        const std::size_t ns = fld.node_count() / nt;
        const auto n = static_cast<std::size_t>(a.fiber());
        for (std::size_t lvl = 0; lvl < 3; ++lvl) {
            const std::size_t h = std::size_t{1} << lvl;
            for (std::size_t s = 0; s < ns; ++s)
                for (std::size_t it = 0; it + h < nt; ++it) {
                    const Matrix d = fiber_matrix(fld.at_node(s * nt + it + h), n) - fiber_matrix(fld.at_node(s * nt + it), n);
                    out[lvl] = std::max(out[lvl], opnorm(d));
                }
        }
    }
    return out;
}

SolveReport solve_cauchy_interval(const CauchyProblem& p, const IntervalOptions& opt) {
    p.validate();
    const DifferentialOperator& a = p.op;
    require_constant_in_x(a);
    const Axis& taxis = p.f.axes().back();
    const std::size_t nt = taxis.n;
    const double dt = taxis.step;
    if (a.is_time_dependent() && a.time_samples() != nt)
        throw ShapeError("time samples of the coefficients differ from those of f");

    // sigma_bar-regularity: the modulus must decay as h shrinks
    const auto modulus = coefficient_time_modulus(a);
    if (nt >= 5 && modulus[2] > 1e-14) {
        const double allowed = std::min(0.9, 2.0 * std::pow(4.0, -a.sigma_bar()));
        if (modulus[0] > allowed * modulus[2]) {
            std::ostringstream os;
            os << "coefficients are not sigma_bar-regular in t: omega(dt) = " << modulus[0]
               << ", omega(4 dt) = " << modulus[2];
            throw ValidationError(os.str());
        }
    }
    const auto er = operators::check_normal_ellipticity(a.principal_part());
    if (!er.is_elliptic)
        throw EllipticityError("operator is not uniformly normally parabolic (epsilon = " + std::to_string(er.epsilon) + ")");

    // c0 from the resolvent check, c1 from the lower-order coefficients
    const auto samples = operators::resolvent_samples(a.m(), opt.resolvent_samples, 17);
    double c0 = 0.0;
    double c1 = 0.0;
    const std::size_t tstride = std::max<std::size_t>(1, nt / 8);
    for (std::size_t it = 0; it < nt; it += tstride) {
        const DifferentialOperator fr = a.frozen(0, it);
        c0 = std::max(c0, operators::resolvent_bound_check(fr.principal_part(), 0.0, samples).c_measured);
        c1 = std::max(c1, fr.coefficient_bound(false) - fr.coefficient_bound(true));
    }
    const double eta0 = 2.0 * c1 * c0 * c0;
    const double eta = std::max(opt.eta > 0.0 ? opt.eta : 1.0, eta0);

    // symbols on the spatial DFT nodes for every time sample
    const GridFunction probe(p.u0.axes(), 1);
    const std::size_t nxi = probe.node_count();
    std::vector<Point> xis(nxi);
    for (std::size_t node = 0; node < nxi; ++node) xis[node] = spectral::frequency(probe, node);
    std::vector<std::vector<Matrix>> sym(nt, std::vector<Matrix>(nxi));
    for (std::size_t it = 0; it < nt; ++it) {
        const DifferentialOperator fr = a.frozen(0, it);
        for (std::size_t node = 0; node < nxi; ++node) sym[it][node] = operators::full_symbol(fr, xis[node]);
    }
    const auto nn = static_cast<Eigen::Index>(a.fiber());
    auto contraction = [&](std::size_t i0, std::size_t i1) {
        double rho = 0.0;
        for (std::size_t node = 0; node < nxi; ++node) {
            const Matrix inv = (sym[i0][node] + eta * Matrix::Identity(nn, nn)).inverse();
            for (std::size_t it = i0 + 1; it <= i1; ++it) rho = std::max(rho, opnorm((sym[it][node] - sym[i0][node]) * inv));
        }
        return rho;
    };
    auto partition = [&](std::size_t len) {
        std::vector<std::pair<std::size_t, std::size_t>> parts;
        for (std::size_t i0 = 0; i0 + 1 < nt; i0 += len) parts.emplace_back(i0, std::min(i0 + len, nt - 1));
        if (parts.size() > 1 && parts.back().second - parts.back().first < opt.s_min) {
            const std::size_t end = parts.back().second;
            parts.pop_back();
            parts.back().second = end;
        }
        return parts;
    };

    std::size_t len = nt - 1;
    std::vector<std::pair<std::size_t, std::size_t>> parts;
    std::vector<double> rhos;
    for (;;) {
        parts = partition(len);
        rhos.clear();
        for (const auto& [i0, i1] : parts) rhos.push_back(contraction(i0, i1));
        if (*std::max_element(rhos.begin(), rhos.end()) <= 0.5) break;
        if (len / 2 < opt.s_min) {
            std::ostringstream os;
            os << "no subinterval length above " << opt.s_min << " steps reaches contraction 1/2 (rho = "
               << *std::max_element(rhos.begin(), rhos.end()) << ", omega(dt) = " << modulus[0] << ", eta = " << eta << ")";
            throw ContractionError(os.str());
        }
        len /= 2;
    }

    GridFunction fs = p.f;
    scale_by_time(fs, [&](double t) { return std::exp(-eta * t); });
    GridFunction shifted = p.f.zeros_like();
    GridFunction start = p.u0;
    json junctions = json::array();
    json iterations = json::array();
    FrozenOptions fo;
    fo.measure = false;
    fo.check_ellipticity = false;
    for (const auto& [i0, i1] : parts) {
        const DifferentialOperator frozen = a.frozen(0, i0);
        const GridFunction fsub = time_window(fs, i0, i1);
        CauchyProblem sub{frozen, fsub, start, p.spec, static_cast<double>(i1 - i0) * dt};
        GridFunction u = solve_cauchy_frozen(sub, eta, fo).u;
        int iters = 0;
        if (a.is_time_dependent()) {
            for (;;) {
                if (++iters > opt.max_iterations)
                    throw ContractionError("time-freezing iteration did not converge on [" + std::to_string(i0 * dt) + ", " +
                                           std::to_string(i1 * dt) + "]");
                const GridFunction pert = apply_in_time(a, u, i0, 0.0) - fourier::shifted_apply(frozen, u, 0.0);
                sub.f = fsub - pert;
                GridFunction next = solve_cauchy_frozen(sub, eta, fo).u;
                const double change = (next - u).max_abs();
                const double scale = std::max(next.max_abs(), 1e-300);
                u = std::move(next);
                if (change <= opt.tol * scale) break;
            }
        }
        if (i0 > 0) junctions.push_back({{"t", static_cast<double>(i0) * dt},
                                         {"jump", (time_slice(shifted, i0) - time_slice(u, 0)).max_abs()}});
        const std::size_t nw = i1 - i0 + 1;
        for (std::size_t it = 0; it < nw; ++it) set_time_slice(shifted, i0 + it, time_slice(u, it));
        start = time_slice(u, nw - 1);
        iterations.push_back(iters);
    }

    SolveReport rep;
    rep.u = shifted;
    scale_by_time(rep.u, [&](double t) { return std::exp(eta * t); });
    rep.eta = eta;
    const GridFunction res = fd::derivative_along(rep.u, static_cast<std::size_t>(a.m()), 1, 6) + apply_in_time(a, rep.u, 0, 0.0) - p.f;
    const double nf2 = spaces::lq_norm(p.f, 2.0);
    rep.residual = nf2 > 0.0 ? spaces::lq_norm(res, 2.0) / nf2 : spaces::lq_norm(res, 2.0);
    rep.window = {{"length", taxis.length()}, {"samples", nt}};
    rep.constants = {{"c0", c0}, {"c1", c1}, {"trace_error", (time_slice(rep.u, 0) - p.u0).max_abs()}};
    double max_jump = 0.0;
    for (const auto& jn : junctions) max_jump = std::max(max_jump, jn["jump"].get<double>());
    rep.constants["max_junction_jump"] = max_jump;
    rep.extra = {{"eta0", eta0},
                 {"S", static_cast<double>(len) * dt},
                 {"S_steps", len},
                 {"junctions", junctions},
                 {"iterations", iterations},
                 {"contraction", rhos},
                 {"modulus", modulus}};
    if (opt.measure) {
        const int r = a.order();
        const auto wpar = WeightSystem::parabolic(a.m(), r);
        const double en = std::pow(eta, 1.0 / r);
        const double nu = spaces::anisotropic_norm(rep.u, {p.spec.s + r, p.spec.q, wpar, en});
        const double nf = spaces::anisotropic_norm(p.f, {p.spec.s, p.spec.q, wpar, en});
        rep.norms = {{"u", nu}, {"f", nf}, {"norm_eta", en}};
        rep.constants["mr_ratio"] = safe_ratio(nu, nf);
    }
    return rep;
}

json BootstrapDiagnostic::to_json() const { return {{"spatial_errors", spatial_errors}, {"time_error", time_error}}; }

BootstrapDiagnostic bootstrap_regularity_diagnostic(const CauchyProblem& p, const SolveReport& rep, int levels) {
    if (levels < 0) throw ArgumentError("levels must be nonnegative");
    if (!p.op.is_constant()) throw ArgumentError("bootstrap diagnostic needs constant coefficients");
    if (!rep.u.same_grid(p.f)) throw ShapeError("report grid differs from the problem grid");
    const auto m = static_cast<std::size_t>(p.op.m());
    FrozenOptions fo;
    fo.measure = false;
    fo.check_ellipticity = false;
    BootstrapDiagnostic out;
    // constant coefficients commute with d_k, so d_k^j u solves the problem with data (d_k^j f, d_k^j u0)
    for (int j = 1; j <= levels; ++j) {
        double err = 0.0;
        for (std::size_t ax = 0; ax < m; ++ax) {
            std::vector<int> alpha(m + 1, 0);
            alpha[ax] = j;
            std::vector<int> alpha0(m, 0);
            alpha0[ax] = j;
            const GridFunction direct = spectral::derivative(rep.u, alpha);
            CauchyProblem d{p.op, spectral::derivative(p.f, alpha), spectral::derivative(p.u0, alpha0), p.spec, p.horizon};
            err = std::max(err, relative_l2(solve_cauchy_frozen(d, rep.eta, fo).u, direct));
        }
        out.spatial_errors.push_back(err);
    }
    // d_t u solves the problem with data (d_t f, f(0) - A_eta u0)
    const GridFunction direct = fd::derivative_along(rep.u, m, 1, 6);
    CauchyProblem d{p.op, fd::derivative_along(p.f, m, 1, 6),
                    time_slice(p.f, 0) - fourier::shifted_apply(p.op, p.u0, rep.eta), p.spec, p.horizon};
    out.time_error = relative_l2(solve_cauchy_frozen(d, rep.eta, fo).u, direct);
    return out;
}

}  // namespace parreg::cauchy
