#include "parreg/operators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include <Eigen/Eigenvalues>

#include "parreg/errors.hpp"
#include "parreg/grid_io.hpp"
#include "parreg/parallel.hpp"
#include "parreg/spectral.hpp"

namespace parreg::operators {

using nlohmann::json;

namespace {

constexpr double kInfinity = std::numeric_limits<double>::infinity();

int total_order(const Multiindex& a) {
    int s = 0;
    for (int v : a) s += v;
    return s;
}

std::string alpha_str(const Multiindex& a) {
    std::string s = "(";
    for (std::size_t k = 0; k < a.size(); ++k) s += (k ? "," : "") + std::to_string(a[k]);
    return s + ")";
}

cplx minus_i_pow(int k) {
    static const cplx p[4] = {{1, 0}, {0, -1}, {-1, 0}, {0, 1}};
    return p[k % 4];
}

Matrix identity(int n) { return Matrix::Identity(n, n); }

}  // namespace

Matrix Coefficient::at(std::size_t spatial_node, std::size_t time_index) const {
    if (!field) return constant;
    const auto n = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(field->fiber()))));
    std::size_t node = spatial_node;
    if (time_dependent) {
        const std::size_t nt = field->axes().back().n;
        node = spatial_node * nt + std::min(time_index, nt - 1);
    }
    return fiber_matrix(field->at_node(node), n);
}

DifferentialOperator::DifferentialOperator(int m, int r, int n, double sigma_bar)
    : m_(m), r_(r), n_(n), sigma_bar_(sigma_bar) {
    if (m < 1) throw ArgumentError("operator needs m >= 1 spatial dimensions");
    if (n < 1) throw ArgumentError("fiber dimension must be >= 1");
    if (r < 1) throw ValidationError("operator order must be a positive even integer");
    if (r % 2 != 0)
        throw ValidationError("odd order r = " + std::to_string(r) +
                              " cannot be normally elliptic: sigma_A(-xi) = -sigma_A(xi), so the spectra at xi and -xi "
                              "cannot be contained in one and the same half-plane");
    if (!(sigma_bar > 0.0 && sigma_bar <= 1.0)) throw ArgumentError("regularity exponent sigma_bar must lie in (0, 1]");
}

DifferentialOperator DifferentialOperator::laplacian(int m, int n, double sign) {
    DifferentialOperator a(m, 2, n);
    for (int k = 0; k < m; ++k) {
        Multiindex al(static_cast<std::size_t>(m), 0);
        al[static_cast<std::size_t>(k)] = 2;
        a.set(al, Matrix(sign * identity(n)));
    }
    return a;
}

DifferentialOperator DifferentialOperator::bilaplacian(int m, int n) {
    DifferentialOperator a(m, 4, n);
    // |xi|^4 = sum_k xi_k^4 + 2 sum_{k<l} xi_k^2 xi_l^2
    for (int k = 0; k < m; ++k)
        for (int l = k; l < m; ++l) {
            Multiindex al(static_cast<std::size_t>(m), 0);
            al[static_cast<std::size_t>(k)] += 2;
            al[static_cast<std::size_t>(l)] += 2;
            a.set(al, Matrix((k == l ? 1.0 : 2.0) * identity(n)));
        }
    return a;
}

DifferentialOperator DifferentialOperator::divergence_form(const Eigen::MatrixXd& c) {
    const auto m = static_cast<int>(c.rows());
    if (c.cols() != m) throw ShapeError("divergence-form coefficient must be square");
    DifferentialOperator a(m, 2, 1);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
            Multiindex al(static_cast<std::size_t>(m), 0);
            al[static_cast<std::size_t>(i)] += 1;
            al[static_cast<std::size_t>(j)] += 1;
            Matrix v(1, 1);
            v(0, 0) = c(i, j);
            a.add(al, v);
        }
    return a;
}

DifferentialOperator DifferentialOperator::divergence_form(const GridFunction& c) {
    const auto m = static_cast<int>(c.rank());
    if (c.fiber() != static_cast<std::size_t>(m * m)) throw ShapeError("divergence-form field needs fiber m^2");
    DifferentialOperator a(m, 2, 1);
    std::map<Multiindex, GridFunction> acc;
    auto accumulate = [&](const Multiindex& al, const GridFunction& g) {
        auto it = acc.find(al);
        if (it == acc.end())
            acc.emplace(al, g);
        else
            it->second += g;
    };
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
            const GridFunction aij = c.component(static_cast<std::size_t>(i * m + j));
            Multiindex al(static_cast<std::size_t>(m), 0);
            al[static_cast<std::size_t>(i)] += 1;
            al[static_cast<std::size_t>(j)] += 1;
            accumulate(al, aij);
            // -d_i(a_ij d_j u) contributes -i (d_i a_ij) D_j u
            Multiindex di(static_cast<std::size_t>(m), 0);
            di[static_cast<std::size_t>(i)] = 1;
            GridFunction d = spectral::derivative(aij, di);
            d *= cplx(0.0, -1.0);
            Multiindex dj(static_cast<std::size_t>(m), 0);
            dj[static_cast<std::size_t>(j)] = 1;
            accumulate(dj, d);
        }
    for (auto& [al, g] : acc) a.set(al, std::move(g));
    return a;
}

void DifferentialOperator::check_alpha(const Multiindex& alpha) const {
    if (static_cast<int>(alpha.size()) != m_)
        throw ArgumentError("multiindex " + alpha_str(alpha) + " has length != m = " + std::to_string(m_));
    for (int v : alpha)
        if (v < 0) throw ArgumentError("negative multiindex entry in " + alpha_str(alpha));
    if (total_order(alpha) > r_)
        throw ArgumentError("multiindex " + alpha_str(alpha) + " exceeds the order r = " + std::to_string(r_));
}

void DifferentialOperator::set(const Multiindex& alpha, const Matrix& value) {
    check_alpha(alpha);
    if (value.rows() != n_ || value.cols() != n_) throw ShapeError("coefficient of " + alpha_str(alpha) + " is not N x N");
    coeffs_[alpha] = Coefficient{value, std::nullopt, false};
}

void DifferentialOperator::set(const Multiindex& alpha, cplx value) { set(alpha, Matrix(value * identity(n_))); }

void DifferentialOperator::add(const Multiindex& alpha, const Matrix& value) {
    auto it = coeffs_.find(alpha);
    if (it == coeffs_.end()) return set(alpha, value);
    if (!it->second.is_constant()) throw ArgumentError("cannot add a constant to a field coefficient");
    it->second.constant += value;
}

void DifferentialOperator::set(const Multiindex& alpha, GridFunction field, bool time_dependent) {
    check_alpha(alpha);
    if (field.fiber() != static_cast<std::size_t>(n_ * n_))
        throw ShapeError("coefficient field of " + alpha_str(alpha) + " needs fiber N^2");
    const std::size_t rank = static_cast<std::size_t>(m_) + (time_dependent ? 1 : 0);
    if (field.rank() != rank) throw ShapeError("coefficient field of " + alpha_str(alpha) + " has the wrong rank");
    const std::vector<Axis> sp(field.axes().begin(), field.axes().begin() + m_);
    if (auto g = spatial_grid(); g && *g != sp) throw ShapeError("coefficient fields live on different spatial grids");
    if (time_dependent) {
        for (const auto& [k, c] : coeffs_)
            if (c.time_dependent && c.field->axes().back() != field.axes().back())
                throw ShapeError("time-dependent coefficients use different time axes");
    }
    coeffs_[alpha] = Coefficient{Matrix::Zero(n_, n_), std::move(field), time_dependent};
}

bool DifferentialOperator::is_constant() const {
    return std::all_of(coeffs_.begin(), coeffs_.end(), [](const auto& kv) { return kv.second.is_constant(); });
}

bool DifferentialOperator::is_time_dependent() const {
    return std::any_of(coeffs_.begin(), coeffs_.end(), [](const auto& kv) { return kv.second.time_dependent; });
}

std::optional<std::vector<Axis>> DifferentialOperator::spatial_grid() const {
    for (const auto& [k, c] : coeffs_)
        if (c.field) return std::vector<Axis>(c.field->axes().begin(), c.field->axes().begin() + m_);
    return std::nullopt;
}

std::size_t DifferentialOperator::time_samples() const {
    for (const auto& [k, c] : coeffs_)
        if (c.time_dependent) return c.field->axes().back().n;
    return 1;
}

DifferentialOperator DifferentialOperator::frozen(std::size_t spatial_node, std::size_t time_index) const {
    DifferentialOperator out(m_, r_, n_, sigma_bar_);
    for (const auto& [k, c] : coeffs_) out.coeffs_[k] = Coefficient{c.at(spatial_node, time_index), std::nullopt, false};
    return out;
}

DifferentialOperator DifferentialOperator::principal_part() const {
    DifferentialOperator out(m_, r_, n_, sigma_bar_);
    for (const auto& [k, c] : coeffs_)
        if (total_order(k) == r_) out.coeffs_[k] = c;
    return out;
}

DifferentialOperator DifferentialOperator::lower_order_part() const {
    DifferentialOperator out(m_, r_, n_, sigma_bar_);
    for (const auto& [k, c] : coeffs_)
        if (total_order(k) < r_) out.coeffs_[k] = c;
    return out;
}

DifferentialOperator DifferentialOperator::at_time(std::size_t time_index) const {
    DifferentialOperator out(m_, r_, n_, sigma_bar_);
    for (const auto& [k, c] : coeffs_) {
        if (c.time_dependent)
            out.coeffs_[k] = Coefficient{c.constant, time_slice(*c.field, std::min(time_index, c.field->axes().back().n - 1)), false};
        else
            out.coeffs_[k] = c;
    }
    return out;
}

double DifferentialOperator::coefficient_bound(bool principal_only) const {
    double total = 0.0;
    for (const auto& [k, c] : coeffs_) {
        if (principal_only && total_order(k) != r_) continue;
        if (c.is_constant()) {
            total += opnorm(c.constant);
            continue;
        }
        double best = 0.0;
        for (std::size_t node = 0; node < c.field->node_count(); ++node)
            best = std::max(best, opnorm(fiber_matrix(c.field->at_node(node), static_cast<std::size_t>(n_))));
        total += best;
    }
    return total;
}

GridFunction DifferentialOperator::apply(const GridFunction& u, int fd_accuracy) const {
    const std::size_t m = static_cast<std::size_t>(m_);
    if (u.fiber() != static_cast<std::size_t>(n_)) throw ShapeError("function fiber differs from operator fiber N");
    if (u.rank() != m && u.rank() != m + 1) throw ShapeError("function rank must be m or m + 1");
    const bool space_time = u.rank() == m + 1;
    const std::size_t nt = space_time ? u.axes().back().n : 1;
    if (is_time_dependent()) {
        if (!space_time) throw ArgumentError("time-dependent operator applied to a spatial function; use at_time");
        if (time_samples() != nt) throw ShapeError("time axis of the function differs from the coefficient time axis");
    }
    if (auto g = spatial_grid()) {
        for (std::size_t k = 0; k < m; ++k)
            if ((*g)[k].n != u.axis(k).n) throw ShapeError("coefficient grid differs from the function grid");
    }
    GridFunction out = u.zeros_like();
    const auto n = static_cast<std::size_t>(n_);
    for (const auto& [alpha, c] : coeffs_) {
        std::vector<int> full(u.rank(), 0);
        std::copy(alpha.begin(), alpha.end(), full.begin());
        GridFunction d = total_order(alpha) ? spectral::derivative(u, full, fd_accuracy) : u;
        d *= minus_i_pow(total_order(alpha));
        if (c.is_constant()) {
            if (n == 1) {
                d *= c.constant(0, 0);
            } else {
                for (std::size_t node = 0; node < d.node_count(); ++node) apply_in_place(c.constant, d.at_node(node));
            }
        } else {
            for (std::size_t node = 0; node < d.node_count(); ++node) {
                const std::size_t sp = node / nt;
                const std::size_t it = node % nt;
                if (n == 1) {
                    const std::size_t fnode = c.time_dependent ? sp * c.field->axes().back().n + it : sp;
                    d(node) *= (*c.field)(fnode);
                } else {
                    apply_in_place(c.at(sp, it), d.at_node(node));
                }
            }
        }
        out += d;
    }
    return out;
}

DifferentialOperator& DifferentialOperator::operator*=(cplx s) {
    for (auto& [k, c] : coeffs_) {
        c.constant *= s;
        if (c.field) *c.field *= s;
    }
    return *this;
}

namespace {

json cplx_to_json(cplx v) {
    if (v.imag() == 0.0) return v.real();
    return {{"re", v.real()}, {"im", v.imag()}};
}

cplx cplx_from_json(const json& j) {
    if (j.is_number()) return j.get<double>();
    if (j.is_object()) return {j.value("re", 0.0), j.value("im", 0.0)};
    throw ArgumentError("coefficient entry must be a number or {\"re\",\"im\"}");
}

}  // namespace

json DifferentialOperator::to_json() const {
    json cs = json::array();
    for (const auto& [k, c] : coeffs_) {
        json e{{"alpha", k}};
        if (c.field) {
            e["grid_inline"] = io::grid_to_json(*c.field);
            e["time_dependent"] = c.time_dependent;
        } else {
            json rows = json::array();
            for (int i = 0; i < n_; ++i) {
                json row = json::array();
                for (int j = 0; j < n_; ++j) row.push_back(cplx_to_json(c.constant(i, j)));
                rows.push_back(row);
            }
            e["value"] = rows;
        }
        cs.push_back(e);
    }
    return {{"m", m_}, {"r", r_}, {"N", n_}, {"sigma_bar", sigma_bar_}, {"time_dependent", is_time_dependent()},
            {"coeffs", cs}};
}

DifferentialOperator DifferentialOperator::from_json(const json& j, const std::filesystem::path& base_dir) {
    try {
        const int r = j.at("r").get<int>();
        const int n = j.value("N", 1);
        int m = j.value("m", 0);
        if (m == 0) {
            if (!j.at("coeffs").empty()) m = static_cast<int>(j.at("coeffs").front().at("alpha").size());
            if (m == 0) throw ArgumentError("operator description needs \"m\" or a nonempty coefficient list");
        }
        DifferentialOperator a(m, r, n, j.value("sigma_bar", 1.0));
        const bool td_default = j.value("time_dependent", false);
        for (const auto& e : j.at("coeffs")) {
            const auto alpha = e.at("alpha").get<Multiindex>();
            if (e.contains("grid") || e.contains("grid_inline")) {
                GridFunction g = e.contains("grid") ? io::read_grid(base_dir / e.at("grid").get<std::string>())
                                                    : io::grid_from_json(e.at("grid_inline"));
                a.set(alpha, std::move(g), e.value("time_dependent", td_default));
                continue;
            }
            const json& v = e.at("value");
            if (v.is_array()) {
                Matrix mat(n, n);
                if (static_cast<int>(v.size()) != n) throw ShapeError("coefficient matrix of " + alpha_str(alpha) + " is not N x N");
                for (int r0 = 0; r0 < n; ++r0) {
                    const json& row = v.at(static_cast<std::size_t>(r0));
                    if (static_cast<int>(row.size()) != n) throw ShapeError("coefficient matrix of " + alpha_str(alpha) + " is not N x N");
                    for (int c0 = 0; c0 < n; ++c0) mat(r0, c0) = cplx_from_json(row.at(static_cast<std::size_t>(c0)));
                }
                a.set(alpha, mat);
            } else {
                a.set(alpha, cplx_from_json(v));
            }
        }
        return a;
    } catch (const json::exception& e) {
        throw ArgumentError(std::string("malformed operator description: ") + e.what());
    }
}

double monomial(std::span<const double> xi, const Multiindex& alpha) {
    double p = 1.0;
    for (std::size_t k = 0; k < alpha.size(); ++k)
        for (int e = 0; e < alpha[k]; ++e) p *= xi[k];
    return p;
}

namespace {

Matrix symbol_impl(const DifferentialOperator& a, std::span<const double> xi, std::optional<std::size_t> node,
                   std::size_t time_index, bool principal) {
    if (static_cast<int>(xi.size()) != a.m()) throw ArgumentError("covector dimension differs from m");
    Matrix s = Matrix::Zero(a.fiber(), a.fiber());
    for (const auto& [alpha, c] : a.coeffs()) {
        if (principal && total_order(alpha) != a.order()) continue;
        if (!c.is_constant() && !node)
            throw ArgumentError("operator has variable coefficients: a grid node is required to evaluate its symbol");
        s += monomial(xi, alpha) * (c.is_constant() ? c.constant : c.at(*node, time_index));
    }
    return s;
}

}  // namespace

Matrix principal_symbol(const DifferentialOperator& a, std::span<const double> xi, std::optional<std::size_t> node,
                        std::size_t time_index) {
    return symbol_impl(a, xi, node, time_index, true);
}

Matrix full_symbol(const DifferentialOperator& a, std::span<const double> xi, std::optional<std::size_t> node,
                   std::size_t time_index) {
    return symbol_impl(a, xi, node, time_index, false);
}

Matrix parabolic_symbol(const DifferentialOperator& a, std::span<const double> xi, double tau, double eta) {
    return principal_symbol(a, xi) + cplx(eta, -tau) * identity(a.fiber());
}

std::vector<std::vector<double>> cosphere_samples(int m, std::size_t count) {
    if (m == 1) return {{1.0}, {-1.0}};
    std::vector<std::vector<double>> out;
    if (m == 2) {
        for (std::size_t k = 0; k < count; ++k) {
            const double t = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(count);
            out.push_back({std::cos(t), std::sin(t)});
        }
        return out;
    }
    if (m == 3) {
        const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
        for (std::size_t k = 0; k < count; ++k) {
            const double z = 1.0 - 2.0 * (static_cast<double>(k) + 0.5) / static_cast<double>(count);
            const double rho = std::sqrt(1.0 - z * z);
            out.push_back({rho * std::cos(golden * k), rho * std::sin(golden * k), z});
        }
        return out;
    }
    // higher m: deterministic pseudo-random directions
    std::mt19937_64 rng(12345);
    std::normal_distribution<double> g;
    for (std::size_t k = 0; k < count; ++k) {
        std::vector<double> v(static_cast<std::size_t>(m));
        double s = 0.0;
        for (auto& x : v) {
            x = g(rng);
            s += x * x;
        }
        for (auto& x : v) x /= std::sqrt(s);
        out.push_back(v);
    }
    return out;
}

namespace {

struct SamplePoint {
    std::size_t node;
    std::size_t time;
};

std::vector<SamplePoint> sample_points(const DifferentialOperator& a, const EllipticityOptions& opt) {
    std::vector<std::size_t> nodes{0};
    if (auto g = a.spatial_grid()) {
        std::size_t total = 1;
        for (const auto& ax : *g) total *= ax.n;
        nodes.clear();
        const std::size_t stride = opt.full_grid ? 1 : std::max<std::size_t>(1, opt.point_stride);
        for (std::size_t k = 0; k < total; k += stride) nodes.push_back(k);
    }
    std::vector<std::size_t> times{0};
    if (a.is_time_dependent()) {
        const std::size_t nt = a.time_samples();
        times.clear();
        const std::size_t np = std::max<std::size_t>(1, opt.time_points);
        for (std::size_t k = 0; k < np; ++k) {
            const double x = 0.5 * (1.0 - std::cos(std::numbers::pi * (2.0 * k + 1.0) / (2.0 * np)));
            const auto it = static_cast<std::size_t>(std::lround(x * static_cast<double>(nt - 1)));
            if (std::find(times.begin(), times.end(), it) == times.end()) times.push_back(it);
        }
        std::sort(times.begin(), times.end());
    }
    std::vector<SamplePoint> out;
    for (auto n : nodes)
        for (auto t : times) out.push_back({n, t});
    return out;
}

EllipticityReport run_ellipticity(const DifferentialOperator& a, const EllipticityOptions& opt, bool strong) {
    const auto pts = sample_points(a, opt);
    const auto xis = cosphere_samples(a.m(), opt.sphere_samples);
    const std::size_t total = pts.size() * xis.size();
    std::vector<double> normal(total);
    std::vector<double> herm(strong ? total : 0);
    std::vector<char> failed(total, 0);
    parallel_for(total, [&](std::size_t k) {
        const auto& p = pts[k / xis.size()];
        const auto& xi = xis[k % xis.size()];
        const bool variable = !a.is_constant();
        const Matrix s = principal_symbol(a, xi, variable ? std::optional<std::size_t>(p.node) : std::nullopt, p.time);
        Eigen::ComplexEigenSolver<Matrix> es(s, false);
        if (es.info() != Eigen::Success) {
            failed[k] = 1;
            normal[k] = -kInfinity;
        } else {
            normal[k] = es.eigenvalues().real().minCoeff();
        }
        if (strong) {
            const Matrix h = 0.5 * (s + s.adjoint());
            Eigen::SelfAdjointEigenSolver<Matrix> hs(h, Eigen::EigenvaluesOnly);
            herm[k] = hs.eigenvalues().minCoeff();
        }
    });
    const auto& vals = strong ? herm : normal;
    EllipticityReport rep;
    rep.samples = total;
    std::size_t worst = 0;
    for (std::size_t k = 1; k < total; ++k)
        if (vals[k] < vals[worst]) worst = k;
    rep.epsilon = total ? vals[worst] : 0.0;
    if (total) {
        rep.worst_xi = xis[worst % xis.size()];
        rep.worst_node = pts[worst / xis.size()].node;
        rep.worst_time = pts[worst / xis.size()].time;
    }
    rep.is_elliptic = rep.epsilon >= opt.tol && std::none_of(failed.begin(), failed.end(), [](char c) { return c; });
    rep.kappa = rep.epsilon > 0.0 ? std::max(1.0, a.coefficient_bound(true) + 1.0 / rep.epsilon) : kInfinity;
    if (strong) {
        const double ne = *std::min_element(normal.begin(), normal.end());
        rep.normal_epsilon = ne;
        rep.consistent = rep.epsilon <= ne + opt.tol;
    }
    return rep;
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

json EllipticityReport::to_json() const {
    json j{{"is_elliptic", is_elliptic}, {"epsilon", finite_or_null(epsilon)}, {"kappa", finite_or_null(kappa)},
           {"worst_xi", worst_xi}, {"worst_node", worst_node}, {"worst_time", worst_time}, {"samples", samples},
           {"certificate", "sample-based"}};
    if (normal_epsilon) {
        j["normal_epsilon"] = finite_or_null(*normal_epsilon);
        j["strong_implies_normal"] = consistent;
    }
    return j;
}

EllipticityReport check_normal_ellipticity(const DifferentialOperator& a, const EllipticityOptions& opt) {
    return run_ellipticity(a, opt, false);
}

EllipticityReport check_strong_ellipticity(const DifferentialOperator& a, const EllipticityOptions& opt) {
    return run_ellipticity(a, opt, true);
}

json ResolventReport::to_json() const {
    return {{"c_measured", finite_or_null(c_measured)}, {"finite", finite}, {"singular", singular},
            {"worst_xi", worst_xi}, {"worst_eta", worst_eta}, {"samples", samples}};
}

std::vector<weights::AugmentedPoint> resolvent_samples(int m, std::size_t count, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> mag(-3.0, 3.0);
    std::vector<weights::AugmentedPoint> out;
    out.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        std::vector<double> v(static_cast<std::size_t>(m) + 1);
        double s = 0.0;
        for (auto& x : v) {
            x = g(rng);
            s += x * x;
        }
        const double r = std::pow(10.0, mag(rng)) / std::sqrt(s);
        weights::AugmentedPoint z;
        for (int i = 0; i < m; ++i) z.xi.push_back(r * v[static_cast<std::size_t>(i)]);
        z.eta = std::abs(r * v.back());
        out.push_back(std::move(z));
    }
    return out;
}

ResolventReport resolvent_bound_check(const DifferentialOperator& a, cplx lambda,
                                      const std::vector<weights::AugmentedPoint>& zeta) {
    if (!a.is_constant()) throw ArgumentError("resolvent bound check needs a frozen (constant-coefficient) operator");
    if (lambda.real() < 0.0) throw ArgumentError("resolvent bound check needs Re lambda >= 0");
    const int r = a.order();
    std::vector<double> prod(zeta.size());
    std::vector<char> sing(zeta.size(), 0);
    parallel_for(zeta.size(), [&](std::size_t k) {
        const auto& z = zeta[k];
        double x2 = 0.0;
        for (double x : z.xi) x2 += x * x;
        const double lam_r = std::pow(x2 + z.eta * z.eta, 0.5 * r);
        const Matrix mat = principal_symbol(a, z.xi) + (lambda + std::pow(z.eta, r)) * identity(a.fiber());
        Eigen::JacobiSVD<Matrix> svd(mat);
        const auto& sv = svd.singularValues();
        const double smax = sv(0);
        const double smin = sv(sv.size() - 1);
        if (!(smin > 1e-12 * smax)) {
            sing[k] = 1;
            prod[k] = kInfinity;
        } else {
            prod[k] = (lam_r + std::abs(lambda)) / smin;
        }
    });
    ResolventReport rep;
    rep.samples = zeta.size();
    std::size_t worst = 0;
    for (std::size_t k = 0; k < zeta.size(); ++k) {
        if (prod[k] > prod[worst]) worst = k;
        if (sing[k]) rep.singular = true;
    }
    if (!zeta.empty()) {
        rep.c_measured = prod[worst];
        rep.worst_xi = zeta[worst].xi;
        rep.worst_eta = zeta[worst].eta;
    }
    rep.finite = std::isfinite(rep.c_measured) && !rep.singular;
    return rep;
}

}  // namespace parreg::operators
