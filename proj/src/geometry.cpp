#include "parreg/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <sstream>

#include "parreg/errors.hpp"
#include "parreg/finite_difference.hpp"
#include "parreg/parallel.hpp"
#include "parreg/spectral.hpp"

namespace parreg::geometry {

using json = nlohmann::json;
using operators::DifferentialOperator;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kPlateau = 0.5;
constexpr double kSupport = 0.85;

double wrap(double d, double period) { return d - period * std::round(d / period); }

std::string point_str(const Point& p) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < p.size(); ++i) os << (i ? ", " : "") << p[i];
    os << ")";
    return os.str();
}

bool all_finite(const Point& p) {
    return std::all_of(p.begin(), p.end(), [](double x) { return std::isfinite(x); });
}

double lq_combine(const std::vector<double>& v, double q) {
    if (std::isinf(q)) return v.empty() ? 0.0 : *std::max_element(v.begin(), v.end());
    double s = 0.0;
    for (double x : v) s += std::pow(x, q);
    return std::pow(s, 1.0 / q);
}

Point clamp_to_box(const Chart& c, const Point& y) {
    Point out = y;
    for (std::size_t a = 0; a < out.size(); ++a) out[a] = std::clamp(out[a], -c.half_width[a], c.half_width[a]);
    return out;
}

MatrixXd metric_at(const Chart& c, const Point& y) {
    MatrixXd g = c.metric(y);
    if (g.rows() != c.m() || g.cols() != c.m())
        throw ShapeError("chart " + std::to_string(c.id) + " metric has the wrong size");
    return g;
}

// 4th-order central difference along one axis, wrapped on periodic axes
GridFunction diff4(const GridFunction& u, std::size_t axis) {
    const Axis& ax = u.axis(axis);
    if (!ax.periodic) return fd::derivative_along(u, axis, 1, 4);
    if (ax.n < 5) throw ConfigurationError("central differences need at least 5 nodes per axis");
    std::size_t stride = 1;
    for (std::size_t b = axis + 1; b < u.rank(); ++b) stride *= u.axis(b).n;
    const long n = static_cast<long>(ax.n);
    GridFunction out = u.zeros_like();
    for (std::size_t node = 0; node < u.node_count(); ++node) {
        const long i = static_cast<long>((node / stride) % ax.n);
        const std::size_t base = node - static_cast<std::size_t>(i) * stride;
        auto at = [&](long d) { return base + static_cast<std::size_t>(((i + d) % n + n) % n) * stride; };
        for (std::size_t c = 0; c < u.fiber(); ++c)
            out(node, c) = (-u(at(2), c) + 8.0 * u(at(1), c) - 8.0 * u(at(-1), c) + u(at(-2), c)) / (12.0 * ax.step);
    }
    return out;
}

std::vector<int> unit_alpha(int m, int i, int j = -1) {
    std::vector<int> alpha(static_cast<std::size_t>(m), 0);
    ++alpha[static_cast<std::size_t>(i)];
    if (j >= 0) ++alpha[static_cast<std::size_t>(j)];
    return alpha;
}

MatrixXd jacobian(const MapFn& f, const Point& y, double h) {
    const auto m = static_cast<Eigen::Index>(y.size());
    Point p0 = f(y);
    MatrixXd j(static_cast<Eigen::Index>(p0.size()), m);
    for (Eigen::Index b = 0; b < m; ++b) {
        Point yp = y;
        Point ym = y;
        yp[static_cast<std::size_t>(b)] += h;
        ym[static_cast<std::size_t>(b)] -= h;
        const Point fp = f(yp);
        const Point fm = f(ym);
        for (Eigen::Index a = 0; a < j.rows(); ++a)
            j(a, b) = (fp[static_cast<std::size_t>(a)] - fm[static_cast<std::size_t>(a)]) / (2.0 * h);
    }
    return j;
}

// max |d^2 f_a / dy_b dy_c| by centered differences
double second_derivative_bound(const std::function<VectorXd(const Point&)>& f, const Point& y, double h) {
    double worst = 0.0;
    const std::size_t m = y.size();
    for (std::size_t b = 0; b < m; ++b)
        for (std::size_t c = b; c < m; ++c) {
            auto shifted = [&](double sb, double sc) {
                Point z = y;
                z[b] += sb * h;
                z[c] += sc * h;
                return f(z);
            };
            const VectorXd d = (shifted(1, 1) - shifted(1, -1) - shifted(-1, 1) + shifted(-1, -1)) / (4.0 * h * h);
            worst = std::max(worst, d.cwiseAbs().maxCoeff());
        }
    return worst;
}

VectorXd as_vector(const Point& p) { return Eigen::Map<const VectorXd>(p.data(), static_cast<Eigen::Index>(p.size())); }

VectorXd metric_entries(const MatrixXd& g) { return Eigen::Map<const VectorXd>(g.data(), g.size()); }

std::vector<Point> uniform_box_samples(const std::vector<double>& lo, const std::vector<double>& hi, std::size_t count,
                                       unsigned seed) {
    std::mt19937_64 rng(seed);
    std::vector<Point> out;
    for (std::size_t i = 0; i < count; ++i) {
        Point p(lo.size());
        for (std::size_t a = 0; a < lo.size(); ++a) p[a] = std::uniform_real_distribution<double>(lo[a], hi[a])(rng);
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<std::size_t> multi_index(std::size_t node, const std::vector<Axis>& axes) {
    std::vector<std::size_t> idx(axes.size());
    for (std::size_t a = axes.size(); a-- > 0;) {
        idx[a] = node % axes[a].n;
        node /= axes[a].n;
    }
    return idx;
}

std::size_t spatial_nodes(const std::vector<Axis>& axes, std::size_t m) {
    std::size_t n = 1;
    for (std::size_t a = 0; a < m; ++a) n *= axes[a].n;
    return n;
}

}  // namespace

bool Chart::contains(const Point& y, double shrink) const {
    if (y.size() != half_width.size() || !all_finite(y)) return false;
    for (std::size_t a = 0; a < y.size(); ++a)
        if (std::abs(y[a]) > shrink * half_width[a] * (1.0 + 1e-12)) return false;
    return true;
}

json Atlas::to_json() const {
    return {{"name", name},
            {"m", m},
            {"charts", charts.size()},
            {"shrink", shrink},
            {"model_period", model_period},
            {"declared",
             {{"multiplicity", declared.multiplicity},
              {"metric_band", declared.metric_band},
              {"transition", declared.transition},
              {"metric_derivative", declared.metric_derivative}}}};
}

Atlas translation_atlas(const std::string& name, const std::vector<double>& periods,
                        const std::vector<std::size_t>& counts) {
    if (periods.empty() || periods.size() != counts.size()) throw ArgumentError("one period and one count per axis");
    const std::size_t m = periods.size();
    Atlas at;
    at.name = name;
    at.m = static_cast<int>(m);
    at.model_period = periods;
    Point half(m);
    std::size_t total = 1;
    for (std::size_t a = 0; a < m; ++a) {
        if (!(periods[a] > 0.0)) throw ArgumentError("periods must be positive");
        if (counts[a] < 2) throw ArgumentError("translation charts need at least 2 charts per axis");
        half[a] = 0.75 * periods[a] / static_cast<double>(counts[a]);
        total *= counts[a];
    }
    const MetricFn identity = [m](const Point&) { return MatrixXd::Identity(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m)); };
    for (std::size_t k = 0; k < total; ++k) {
        Point c(m);
        std::size_t rest = k;
        for (std::size_t a = m; a-- > 0;) {
            c[a] = periods[a] * static_cast<double>(rest % counts[a]) / static_cast<double>(counts[a]);
            rest /= counts[a];
        }
        Chart ch;
        ch.id = k;
        ch.half_width = half;
        ch.to_model = [c](const Point& y) {
            Point p(y.size());
            for (std::size_t a = 0; a < y.size(); ++a) p[a] = c[a] + y[a];
            return p;
        };
        ch.from_model = [c, periods](const Point& p) {
            Point y(p.size());
            for (std::size_t a = 0; a < p.size(); ++a) y[a] = wrap(p[a] - c[a], periods[a]);
            return y;
        };
        ch.metric = identity;
        at.charts.push_back(std::move(ch));
        at.centers.push_back(c);
    }
    at.model_metric = identity;
    at.sampler = [periods](std::size_t n, unsigned seed) {
        return uniform_box_samples(std::vector<double>(periods.size(), 0.0), periods, n, seed);
    };
    at.declared.multiplicity = std::size_t{1} << m;
    at.declared.metric_band = 1.0;
    at.declared.transition = 1.0;
    at.declared.metric_derivative = 1e-8;
    return at;
}

Atlas flat_torus(int m, std::size_t charts_per_axis) {
    if (m < 1) throw ArgumentError("torus dimension must be positive");
    return translation_atlas("torus", std::vector<double>(static_cast<std::size_t>(m), kTwoPi),
                             std::vector<std::size_t>(static_cast<std::size_t>(m), charts_per_axis));
}

Atlas cylinder_window(double z, std::size_t charts_z, std::size_t charts_theta) {
    if (!(z > 0.0)) throw ArgumentError("cylinder window must have positive height");
    return translation_atlas("cylinder", {2.0 * z, kTwoPi}, {charts_z, charts_theta});
}

Atlas cone_end(double r0, std::size_t rings) {
    if (!(r0 >= 2.0) || rings < 2) throw ArgumentError("cone end needs r0 >= 2 and at least 2 rings");
    Atlas at;
    at.name = "cone";
    at.m = 2;
    std::size_t id = 0;
    for (std::size_t k = 0; k < rings; ++k) {
        const double rk = r0 + static_cast<double>(k);
        const auto n = static_cast<std::size_t>(std::ceil(kTwoPi * rk));
        const double dtheta = kTwoPi / static_cast<double>(n);
        for (std::size_t j = 0; j < n; ++j) {
            const double tj = dtheta * static_cast<double>(j);
            Chart ch;
            ch.id = id++;
            ch.half_width = {0.75, 0.75 * dtheta * rk};
            ch.to_model = [rk, tj](const Point& y) { return Point{rk + y[0], tj + y[1] / rk}; };
            ch.from_model = [rk, tj](const Point& p) { return Point{p[0] - rk, wrap(p[1] - tj, kTwoPi) * rk}; };
            ch.metric = [rk](const Point& y) {
                MatrixXd g = MatrixXd::Identity(2, 2);
                g(1, 1) = std::pow((rk + y[0]) / rk, 2);
                return g;
            };
            at.charts.push_back(std::move(ch));
        }
    }
    at.model_metric = [](const Point& p) {
        MatrixXd g = MatrixXd::Identity(2, 2);
        g(1, 1) = p[0] * p[0];
        return g;
    };
    const double rmax = r0 + static_cast<double>(rings - 1);
    at.sampler = [r0, rmax](std::size_t n, unsigned seed) { return uniform_box_samples({r0, 0.0}, {rmax, kTwoPi}, n, seed); };
    at.declared.multiplicity = 4;
    at.declared.metric_band = 3.0;
    at.declared.transition = 2.0;
    at.declared.metric_derivative = 2.0;
    return at;
}

Atlas hyperbolic_naive() {
    Atlas at;
    at.name = "hyperbolic_naive";
    at.m = 2;
    const double w = std::sqrt(0.5);
    const MetricFn poincare = [](const Point& x) {
        const double s = 1.0 - (x[0] * x[0] + x[1] * x[1]);
        return MatrixXd(4.0 / (s * s) * MatrixXd::Identity(2, 2));
    };
    Chart ch;
    ch.half_width = {w, w};
    ch.to_model = [](const Point& y) { return y; };
    ch.from_model = [](const Point& p) { return p; };
    ch.metric = poincare;
    at.charts.push_back(std::move(ch));
    at.model_metric = poincare;
    at.sampler = [w](std::size_t n, unsigned seed) { return uniform_box_samples({-w, -w}, {w, w}, n, seed); };
    at.declared.multiplicity = 1;
    at.declared.metric_band = 16.0;
    at.declared.transition = 1.0;
    at.declared.metric_derivative = 100.0;
    return at;
}

Atlas hyperbolic_mobius(double radius, double rho, double spacing) {
    if (!(radius > 0.0) || !(rho > 0.0) || rho >= std::sqrt(0.5) || !(spacing > 0.0))
        throw ArgumentError("need radius > 0, 0 < rho < 1/sqrt2 and spacing > 0");
    using C = std::complex<double>;
    Atlas at;
    at.name = "hyperbolic";
    at.m = 2;
    const auto rings = static_cast<std::size_t>(std::ceil(radius / spacing)) + 1;
    std::size_t id = 0;
    for (std::size_t i = 0; i <= rings; ++i) {
        const double d = spacing * static_cast<double>(i);
        const std::size_t n = i == 0 ? 1 : static_cast<std::size_t>(std::ceil(kTwoPi * std::sinh(d) / spacing));
        for (std::size_t j = 0; j < n; ++j) {
            const double angle = kTwoPi * (static_cast<double>(j) + 0.5 * static_cast<double>(i % 2)) / static_cast<double>(n);
            const C a = std::polar(std::tanh(0.5 * d), angle);
            Chart ch;
            ch.id = id++;
            ch.half_width = {1.0, 1.0};
            ch.to_model = [a, rho](const Point& y) {
                const C z = rho * C(y[0], y[1]);
                const C w = (z + a) / (1.0 + std::conj(a) * z);
                return Point{w.real(), w.imag()};
            };
            ch.from_model = [a, rho](const Point& p) {
                const C w(p[0], p[1]);
                const C z = (w - a) / (1.0 - std::conj(a) * w) / rho;
                return Point{z.real(), z.imag()};
            };
            ch.metric = [rho](const Point& y) {
                const double s = 1.0 - rho * rho * (y[0] * y[0] + y[1] * y[1]);
                return MatrixXd(4.0 * rho * rho / (s * s) * MatrixXd::Identity(2, 2));
            };
            at.charts.push_back(std::move(ch));
        }
    }
    at.model_metric = [](const Point& x) {
        const double s = 1.0 - (x[0] * x[0] + x[1] * x[1]);
        return MatrixXd(4.0 / (s * s) * MatrixXd::Identity(2, 2));
    };
    // uniform in hyperbolic area up to the radius
    at.sampler = [radius](std::size_t n, unsigned seed) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u;
        std::vector<Point> out;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = std::acosh(1.0 + u(rng) * (std::cosh(radius) - 1.0));
            const double t = kTwoPi * u(rng);
            out.push_back({std::tanh(0.5 * d) * std::cos(t), std::tanh(0.5 * d) * std::sin(t)});
        }
        return out;
    };
    at.declared.multiplicity = 32;
    at.declared.metric_band = 4.0 * rho * rho / std::pow(1.0 - 2.0 * rho * rho, 2) * (1.0 + 1e-9);
    at.declared.metric_band = std::max(at.declared.metric_band, 1.0 / (4.0 * rho * rho) * (1.0 + 1e-9));
    at.declared.transition = 16.0;
    at.declared.metric_derivative = 100.0;
    return at;
}

Atlas atlas_from_json(const json& j) {
    if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string())
        throw ValidationError("atlas needs a string field \"kind\"");
    const std::string kind = j["kind"].get<std::string>();
    try {
        if (kind == "torus") return flat_torus(j.value("m", 1), j.value("charts_per_axis", std::size_t{2}));
        if (kind == "translation")
            return translation_atlas(j.value("name", std::string("translation")), j.at("periods").get<std::vector<double>>(),
                                     j.at("counts").get<std::vector<std::size_t>>());
        if (kind == "cylinder")
            return cylinder_window(j.value("z", 4.0), j.value("charts_z", std::size_t{2}), j.value("charts_theta", std::size_t{2}));
        if (kind == "cone") return cone_end(j.value("r0", 2.0), j.value("rings", std::size_t{4}));
        if (kind == "hyperbolic_naive") return hyperbolic_naive();
        if (kind == "hyperbolic")
            return hyperbolic_mobius(j.value("radius", 2.0), j.value("rho", 0.5), j.value("spacing", 0.6));
    } catch (const json::exception& e) {
        throw ValidationError(std::string("atlas: ") + e.what());
    } catch (const ArgumentError& e) {
        throw ValidationError(std::string("atlas: ") + e.what());
    }
    throw ValidationError("unknown atlas kind \"" + kind + "\"");
}

bool RegularityReport::passed() const {
    return std::all_of(pass.begin(), pass.end(), [](const auto& kv) { return kv.second; });
}

json RegularityReport::to_json() const {
    json j = {{"samples", samples},
              {"multiplicity", multiplicity},
              {"uncovered_fraction", uncovered_fraction},
              {"transition_bound", transition_bound},
              {"metric_band", {metric_min, metric_max}},
              {"metric_derivative", metric_derivative},
              {"positive_definite", positive_definite},
              {"pass", pass},
              {"passed", passed()}};
    if (evaluator_error) j["evaluator_error"] = *evaluator_error;
    return j;
}

RegularityReport verify_uniform_regularity(const Atlas& atlas, std::size_t budget, unsigned seed,
                                           std::size_t metric_per_axis) {
    RegularityReport rep;
    const auto fail = [&](std::size_t k, const Point& p, const std::string& what) {
        if (!rep.evaluator_error)
            rep.evaluator_error = "chart " + std::to_string(k) + " at " + point_str(p) + ": " + what;
    };
    const std::vector<Point> pts = atlas.sampler(budget, seed);
    rep.samples = pts.size();
    std::size_t uncovered = 0;
    for (const Point& p : pts) {
        std::vector<std::size_t> in;
        bool covered = false;
        for (std::size_t k = 0; k < atlas.charts.size(); ++k) {
            const Chart& ch = atlas.charts[k];
            Point y;
            try {
                y = ch.from_model(p);
            } catch (const std::exception& e) {
                fail(k, p, e.what());
                continue;
            }
            if (!all_finite(y)) {
                fail(k, p, "inverse map is not finite");
                continue;
            }
            if (ch.contains(y)) in.push_back(k);
            if (ch.contains(y, atlas.shrink)) covered = true;
        }
        rep.multiplicity = std::max(rep.multiplicity, in.size());
        if (!covered) ++uncovered;
        // transition maps on the overlap at this point
        for (std::size_t k : in)
            for (std::size_t j : in) {
                if (j == k) continue;
                const Chart& ck = atlas.charts[k];
                const Chart& cj = atlas.charts[j];
                const MapFn t = [&](const Point& y) { return cj.from_model(ck.to_model(y)); };
                const Point y = ck.from_model(p);
                const MatrixXd jac = jacobian(t, y, 1e-5);
                if (!jac.allFinite()) {
                    fail(k, p, "transition to chart " + std::to_string(j) + " is not finite");
                    continue;
                }
                const double d1 = Eigen::JacobiSVD<MatrixXd>(jac).singularValues()(0);
                const double d2 = second_derivative_bound([&](const Point& z) { return as_vector(t(z)); }, y, 1e-4);
                rep.transition_bound = std::max({rep.transition_bound, d1, d2});
            }
    }
    rep.uncovered_fraction = pts.empty() ? 0.0 : static_cast<double>(uncovered) / static_cast<double>(pts.size());

    rep.metric_min = std::numeric_limits<double>::infinity();
    for (const Chart& ch : atlas.charts) {
        const std::size_t m = ch.half_width.size();
        std::size_t total = 1;
        for (std::size_t a = 0; a < m; ++a) total *= metric_per_axis;
        for (std::size_t s = 0; s < total; ++s) {
            Point y(m);
            std::size_t rest = s;
            for (std::size_t a = m; a-- > 0;) {
                const double frac = (static_cast<double>(rest % metric_per_axis) + 0.5) / static_cast<double>(metric_per_axis);
                y[a] = ch.half_width[a] * (2.0 * frac - 1.0);
                rest /= metric_per_axis;
            }
            MatrixXd g;
            try {
                g = metric_at(ch, y);
            } catch (const std::exception& e) {
                fail(ch.id, y, e.what());
                continue;
            }
            if (!g.allFinite()) {
                fail(ch.id, y, "metric is not finite");
                continue;
            }
            const Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (g + g.transpose()));
            const double lo = es.eigenvalues().minCoeff();
            const double hi = es.eigenvalues().maxCoeff();
            if (lo <= 0.0 || (g - g.transpose()).norm() > 1e-12 * g.norm()) rep.positive_definite = false;
            rep.metric_min = std::min(rep.metric_min, lo);
            rep.metric_max = std::max(rep.metric_max, hi);
            const MatrixXd d1 = jacobian([&](const Point& z) {
                const MatrixXd gz = metric_at(ch, z);
                return Point(gz.data(), gz.data() + gz.size());
            }, y, 1e-5);
            const double d2 = second_derivative_bound([&](const Point& z) { return metric_entries(metric_at(ch, z)); }, y, 1e-4);
            rep.metric_derivative = std::max({rep.metric_derivative, d1.cwiseAbs().maxCoeff(), d2});
        }
    }
    if (!std::isfinite(rep.metric_min)) rep.metric_min = 0.0;

    const DeclaredBounds& d = atlas.declared;
    const double slack = 1.0 + 1e-6;
    rep.pass["evaluators"] = !rep.evaluator_error.has_value();
    rep.pass["multiplicity"] = rep.multiplicity >= 1 && rep.multiplicity <= d.multiplicity;
    rep.pass["shrinkable"] = uncovered == 0;
    rep.pass["transition"] = rep.transition_bound <= d.transition * slack;
    rep.pass["metric_band"] = rep.positive_definite && rep.metric_min * d.metric_band * slack >= 1.0 &&
                              rep.metric_max <= d.metric_band * slack;
    // differences of a constant metric leave roundoff of size eps / h
    rep.pass["metric_derivative"] = rep.metric_derivative <= d.metric_derivative * slack + 1e-6;
    return rep;
}

ChartMetric chart_metric(const Chart& chart, const std::vector<Axis>& axes) {
    const std::size_t m = chart.half_width.size();
    if (axes.size() != m) throw ShapeError("chart grid dimension differs from the chart");
    ChartMetric cm;
    cm.axes = axes;
    cm.g = GridFunction(axes, m * m);
    cm.ginv = GridFunction(axes, m * m);
    cm.sqrtg = GridFunction(axes, 1);
    cm.band_lo = std::numeric_limits<double>::infinity();
    for (std::size_t node = 0; node < cm.g.node_count(); ++node) {
        const Point y = clamp_to_box(chart, cm.g.coords(node));
        const MatrixXd g = metric_at(chart, y);
        const Eigen::SelfAdjointEigenSolver<MatrixXd> es(g);
        const double lo = es.eigenvalues().minCoeff();
        if (!(lo > 0.0))
            throw DomainError("metric of chart " + std::to_string(chart.id) + " is not positive definite at " + point_str(y));
        cm.band_lo = std::min(cm.band_lo, lo);
        cm.band_hi = std::max(cm.band_hi, es.eigenvalues().maxCoeff());
        const MatrixXd gi = g.inverse();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j) {
                cm.g(node, i * m + j) = g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
                cm.ginv(node, i * m + j) = gi(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            }
        cm.sqrtg(node) = std::sqrt(g.determinant());
    }
    std::vector<GridFunction> dg;
    for (std::size_t l = 0; l < m; ++l) {
        dg.push_back(diff4(cm.g, l));
        cm.variation = std::max(cm.variation, dg.back().max_abs());
    }
    cm.christoffel = GridFunction(axes, m * m * m);
    if (cm.variation > 0.0)
        for (std::size_t node = 0; node < cm.g.node_count(); ++node)
            for (std::size_t k = 0; k < m; ++k)
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < m; ++j) {
                        cplx s = 0.0;
                        for (std::size_t l = 0; l < m; ++l)
                            s += cm.ginv(node, k * m + l) *
                                 (dg[i](node, j * m + l) + dg[j](node, i * m + l) - dg[l](node, i * m + j));
                        cm.christoffel(node, (k * m + i) * m + j) = 0.5 * s;
                    }
    return cm;
}

GridFunction laplace_beltrami_local(const Chart& chart, const GridFunction& u, int fd_accuracy) {
    const auto m = static_cast<std::size_t>(chart.m());
    if (u.rank() != m || u.fiber() != 1) throw ShapeError("scalar function on the chart grid expected");
    const ChartMetric cm = chart_metric(chart, u.axes());
    for (std::size_t node = 0; node < u.node_count(); ++node)
        if (!(cm.sqrtg(node).real() > 0.0))
            throw DomainError("sqrt g is not positive at node " + std::to_string(node));
    std::vector<GridFunction> du;
    for (std::size_t j = 0; j < m; ++j)
        du.push_back(spectral::derivative(u, unit_alpha(static_cast<int>(m), static_cast<int>(j)), fd_accuracy));
    GridFunction out = u.zeros_like();
    for (std::size_t i = 0; i < m; ++i) {
        GridFunction flux = u.zeros_like();
        for (std::size_t node = 0; node < u.node_count(); ++node) {
            cplx s = 0.0;
            for (std::size_t j = 0; j < m; ++j) s += cm.ginv(node, i * m + j) * du[j](node);
            flux(node) = cm.sqrtg(node) * s;
        }
        out += spectral::derivative(flux, unit_alpha(static_cast<int>(m), static_cast<int>(i)), fd_accuracy);
    }
    for (std::size_t node = 0; node < u.node_count(); ++node) out(node) /= cm.sqrtg(node);
    return out;
}

GeometricOperator GeometricOperator::from_json(const json& j) {
    GeometricOperator a;
    a.diffusion = j.value("diffusion", a.diffusion);
    a.potential = j.value("potential", a.potential);
    return a;
}

json GeometricOperator::to_json() const { return {{"diffusion", diffusion}, {"potential", potential}}; }

PushForward push_forward_operator(const GeometricOperator& a, const Chart& chart, const std::vector<Axis>& axes) {
    const int m = chart.m();
    const auto mu = static_cast<std::size_t>(m);
    const ChartMetric cm = chart_metric(chart, axes);
    PushForward pf;
    pf.op = DifferentialOperator(m, 2, 1);
    pf.band_lo = cm.band_lo;
    pf.band_hi = cm.band_hi;
    pf.epsilon = a.diffusion / cm.band_hi;
    const bool constant = cm.variation == 0.0;
    // -d g^ij d_i d_j = d g^ij D_i D_j; mixed multiindices collect both orders
    for (int i = 0; i < m; ++i)
        for (int j = i; j < m; ++j) {
            const double factor = a.diffusion * (i == j ? 1.0 : 2.0);
            const std::size_t e = static_cast<std::size_t>(i) * mu + static_cast<std::size_t>(j);
            if (constant) {
                pf.op.set(unit_alpha(m, i, j), factor * cm.ginv(0, e));
            } else {
                GridFunction field(axes, 1);
                for (std::size_t node = 0; node < field.node_count(); ++node) field(node) = factor * cm.ginv(node, e);
                pf.op.set(unit_alpha(m, i, j), std::move(field));
            }
        }
    // g^ij Gamma^k_ij d_k = i g^ij Gamma^k_ij D_k
    if (!constant)
        for (std::size_t k = 0; k < mu; ++k) {
            GridFunction field(axes, 1);
            for (std::size_t node = 0; node < field.node_count(); ++node) {
                cplx s = 0.0;
                for (std::size_t i = 0; i < mu; ++i)
                    for (std::size_t j = 0; j < mu; ++j) s += cm.ginv(node, i * mu + j) * cm.christoffel(node, (k * mu + i) * mu + j);
                field(node) = cplx(0.0, a.diffusion) * s;
                pf.correction = std::max(pf.correction, std::abs(field(node)));
            }
            pf.op.set(unit_alpha(m, static_cast<int>(k)), std::move(field));
        }
    if (a.potential != 0.0) pf.op.set(std::vector<int>(mu, 0), cplx(a.potential));
    return pf;
}

json SymbolCheck::to_json() const { return {{"samples", samples}, {"max_error", max_error}}; }

SymbolCheck check_symbol_identity(const GeometricOperator& a, const Atlas& atlas, std::size_t chart,
                                  const std::vector<Axis>& axes, std::size_t samples, unsigned seed) {
    const Chart& ch = atlas.charts.at(chart);
    const PushForward pf = push_forward_operator(a, ch, axes);
    const GridFunction probe(axes, 1);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    std::uniform_int_distribution<std::size_t> pick(0, probe.node_count() - 1);
    SymbolCheck out;
    while (out.samples < samples) {
        const std::size_t node = pick(rng);
        const Point y = probe.coords(node);
        if (!ch.contains(y)) continue;
        std::vector<double> xi(y.size());
        for (double& x : xi) x = nd(rng);
        const double pushed = operators::principal_symbol(pf.op, xi, node)(0, 0).real();
        const MatrixXd j = jacobian(ch.to_model, y, 1e-6);
        const VectorXd eta = j.transpose().colPivHouseholderQr().solve(as_vector(xi));
        const double model = a.diffusion * eta.dot(atlas.model_metric(ch.to_model(y)).inverse() * eta);
        out.max_error = std::max(out.max_error, std::abs(pushed - model) / std::abs(model));
        ++out.samples;
    }
    return out;
}

std::vector<Axis> chart_box_grid(const Chart& chart, std::size_t n) {
    std::vector<Axis> axes;
    for (double h : chart.half_width) axes.push_back(Axis::interval(n, -h, h));
    return axes;
}

std::vector<Axis> aligned_chart_grid(const Atlas& atlas, std::size_t chart, const std::vector<Axis>& model) {
    if (atlas.centers.size() != atlas.charts.size()) throw ConfigurationError("atlas charts are not translations");
    const Chart& ch = atlas.charts.at(chart);
    if (model.size() != ch.half_width.size()) throw ShapeError("model grid dimension differs from the atlas");
    std::vector<Axis> axes;
    for (std::size_t a = 0; a < model.size(); ++a) {
        const double h = model[a].step;
        const double c = (atlas.centers[chart][a] - model[a].origin) / h;
        if (std::abs(c - std::round(c)) > 1e-9) throw ConfigurationError("chart center is not a model grid node");
        const auto jmax = static_cast<std::size_t>(std::floor(ch.half_width[a] / h + 1e-9));
        axes.push_back(Axis{2 * jmax + 1, -static_cast<double>(jmax) * h, h, false});
    }
    return axes;
}

ManifoldFunction sample_manifold(const Atlas& atlas, const std::vector<std::vector<Axis>>& grids,
                                 const std::function<cplx(const Point&)>& f) {
    if (grids.size() != atlas.charts.size()) throw ShapeError("one grid per chart expected");
    ManifoldFunction out;
    out.pieces.resize(grids.size());
    for (std::size_t k = 0; k < grids.size(); ++k) {
        const Chart& ch = atlas.charts[k];
        out.pieces[k] = GridFunction::sample_scalar(grids[k], [&](const Point& y) { return f(ch.to_model(y)); });
    }
    return out;
}

double overlap_disagreement(const Atlas& atlas, const ManifoldFunction& u, std::size_t margin) {
    if (u.pieces.size() != atlas.charts.size()) throw ShapeError("one piece per chart expected");
    double scale = 0.0;
    for (const auto& p : u.pieces) scale = std::max(scale, p.max_abs());
    if (scale == 0.0) return 0.0;
    auto interior = [&](const GridFunction& g, const std::vector<std::size_t>& idx) {
        for (std::size_t a = 0; a < idx.size(); ++a)
            if (idx[a] < margin || idx[a] + margin >= g.axis(a).n) return false;
        return true;
    };
    double worst = 0.0;
    for (std::size_t k = 0; k < u.pieces.size(); ++k) {
        const GridFunction& gk = u.pieces[k];
        for (std::size_t node = 0; node < gk.node_count(); ++node) {
            if (!interior(gk, multi_index(node, gk.axes()))) continue;
            const Point p = atlas.charts[k].to_model(gk.coords(node));
            for (std::size_t j = 0; j < u.pieces.size(); ++j) {
                if (j == k) continue;
                const Point y = atlas.charts[j].from_model(p);
                if (!atlas.charts[j].contains(y)) continue;
                const GridFunction& gj = u.pieces[j];
                std::vector<std::size_t> idx(y.size());
                bool hit = true;
                for (std::size_t a = 0; a < y.size() && hit; ++a) {
                    const double s = (y[a] - gj.axis(a).origin) / gj.axis(a).step;
                    const double rs = std::round(s);
                    if (std::abs(s - rs) > 1e-6 || rs < 0.0 || rs >= static_cast<double>(gj.axis(a).n)) hit = false;
                    else idx[a] = static_cast<std::size_t>(rs);
                }
                if (!hit || !interior(gj, idx)) continue;
                worst = std::max(worst, std::abs(gk(node) - gj(gj.flat_index(idx))) / scale);
            }
        }
    }
    return worst;
}

double manifold_norm(const ManifoldFunction& u, const Atlas& atlas, const spaces::NormSpec& spec) {
    if (u.pieces.size() != atlas.charts.size()) throw ShapeError("one piece per chart expected");
    std::vector<double> norms(u.pieces.size());
    for (std::size_t k = 0; k < u.pieces.size(); ++k) {
        const GridFunction& g = u.pieces[k];
        const Chart& ch = atlas.charts[k];
        if (g.rank() != ch.half_width.size()) throw ShapeError("piece " + std::to_string(k) + " is not on a chart grid");
        for (std::size_t a = 0; a < g.rank(); ++a) {
            const Axis& ax = g.axis(a);
            const double hi = ax.coord(ax.n - 1);
            if (ax.origin < -ch.half_width[a] * (1.0 + 1e-9) || hi > ch.half_width[a] * (1.0 + 1e-9))
                throw ShapeError("piece " + std::to_string(k) + " leaves its chart box");
        }
    }
    parallel_for(u.pieces.size(), [&](std::size_t k) { norms[k] = spaces::anisotropic_norm(u.pieces[k], spec); });
    return lq_combine(norms, spec.q);
}

DifferentialOperator model_operator(const GeometricOperator& a, const Atlas& atlas, const std::vector<Axis>& model) {
    Chart identity;
    for (const auto& ax : model) identity.half_width.push_back(std::abs(ax.origin) + ax.length() + 1.0);
    identity.to_model = [](const Point& y) { return y; };
    identity.from_model = [](const Point& p) { return p; };
    identity.metric = atlas.model_metric;
    return push_forward_operator(a, identity, model).op;
}

ManifoldCharts::ManifoldCharts(const GeometricOperator& a, const Atlas& atlas, const std::vector<Axis>& model,
                               int bump_order)
    : model_(model) {
    const std::size_t m = static_cast<std::size_t>(atlas.m);
    if (atlas.model_period.size() != m || atlas.centers.size() != atlas.charts.size())
        throw ConfigurationError("manifold solves need a translation atlas on a periodic model");
    if (model.size() != m) throw ShapeError("model grid dimension differs from the atlas");
    for (std::size_t a = 0; a < m; ++a)
        if (!model[a].periodic || std::abs(model[a].length() - atlas.model_period[a]) > 1e-9 * atlas.model_period[a])
            throw ShapeError("model grid must be periodic with the atlas periods");

    std::vector<GridFunction> psi;
    for (std::size_t k = 0; k < atlas.charts.size(); ++k) {
        const Chart& ch = atlas.charts[k];
        std::vector<Axis> box;
        std::vector<std::size_t> offset;
        for (std::size_t a = 0; a < m; ++a) {
            const double h = model[a].step;
            const double c = (atlas.centers[k][a] - model[a].origin) / h;
            if (std::abs(c - std::round(c)) > 1e-9) throw ConfigurationError("chart center is not a model grid node");
            std::size_t nb = 2 * static_cast<std::size_t>(std::ceil(ch.half_width[a] / h)) + 2;
            nb = std::min(nb, model[a].n);
            box.push_back(Axis::periodic_box(nb, static_cast<double>(nb) * h, -static_cast<double>(nb / 2) * h));
            const long n = static_cast<long>(model[a].n);
            offset.push_back(static_cast<std::size_t>(((std::lround(c) - static_cast<long>(nb / 2)) % n + n) % n));
        }
        std::vector<std::size_t> map(spatial_nodes(box, m));
        for (std::size_t b = 0; b < map.size(); ++b) {
            auto idx = multi_index(b, box);
            for (std::size_t a = 0; a < m; ++a) idx[a] = (idx[a] + offset[a]) % model[a].n;
            map[b] = GridFunction(model, 1).flat_index(idx);
        }
        map_.push_back(std::move(map));
        boxes_.push_back(box);
        psi.push_back(GridFunction::sample_scalar(model, [&](const Point& p) {
            const Point y = ch.from_model(p);
            double v = 1.0;
            for (std::size_t a = 0; a < m; ++a) {
                const double rho = std::abs(y[a]) / ch.half_width[a];
                v *= 1.0 - localize::smoothstep((rho - kPlateau) / (kSupport - kPlateau), bump_order);
            }
            return cplx(v);
        }));
    }
    const std::size_t nodes = psi.front().node_count();
    for (std::size_t node = 0; node < nodes; ++node) {
        double s = 0.0;
        for (const auto& p : psi) s += std::norm(p(node));
        if (!(s > 0.0)) throw ConfigurationError("chart bumps do not cover the model grid");
        for (auto& p : psi) p(node) /= std::sqrt(s);
    }
    pi_ = std::move(psi);

    model_op_ = geometry::model_operator(a, atlas, model);
    for (std::size_t k = 0; k < atlas.charts.size(); ++k) {
        pi_box_.push_back(restrict_to(k, pi_[k]));
        pushed_.push_back(push_forward_operator(a, atlas.charts[k], boxes_[k]));
        principal_.push_back(pushed_.back().op.principal_part());
        low_.push_back(pushed_.back().op.lower_order_part());
        if (principal_.back().is_constant()) {
            centre_.push_back(principal_.back());
        } else {
            std::vector<std::size_t> mid;
            for (const auto& ax : boxes_[k]) mid.push_back(ax.n / 2);
            centre_.push_back(principal_.back().frozen(GridFunction(boxes_[k], 1).flat_index(mid)));
        }
    }
}

double ManifoldCharts::partition_defect() const {
    double worst = 0.0;
    for (std::size_t node = 0; node < pi_.front().node_count(); ++node) {
        double s = 0.0;
        for (const auto& p : pi_) s += std::norm(p(node));
        worst = std::max(worst, std::abs(s - 1.0));
    }
    return worst;
}

GridFunction ManifoldCharts::embed(std::size_t k, const GridFunction& v) const {
    const std::size_t m = model_.size();
    std::vector<Axis> axes = model_;
    for (std::size_t a = m; a < v.rank(); ++a) axes.push_back(v.axis(a));
    for (std::size_t a = 0; a < m; ++a)
        if (v.axis(a) != boxes_[k][a]) throw ShapeError("piece is not on its chart box");
    GridFunction out(axes, v.fiber());
    const std::size_t inner = (v.node_count() / map_[k].size()) * v.fiber();
    for (std::size_t b = 0; b < map_[k].size(); ++b)
        std::copy_n(v.values().begin() + static_cast<std::ptrdiff_t>(b * inner), inner,
                    out.values().begin() + static_cast<std::ptrdiff_t>(map_[k][b] * inner));
    return out;
}

GridFunction ManifoldCharts::restrict_to(std::size_t k, const GridFunction& u) const {
    const std::size_t m = model_.size();
    std::vector<Axis> axes = boxes_[k];
    for (std::size_t a = m; a < u.rank(); ++a) axes.push_back(u.axis(a));
    for (std::size_t a = 0; a < m; ++a)
        if (u.axis(a) != model_[a]) throw ShapeError("function is not on the model grid");
    GridFunction out(axes, u.fiber());
    const std::size_t inner = (u.node_count() / spatial_nodes(model_, m)) * u.fiber();
    for (std::size_t b = 0; b < map_[k].size(); ++b)
        std::copy_n(u.values().begin() + static_cast<std::ptrdiff_t>(map_[k][b] * inner), inner,
                    out.values().begin() + static_cast<std::ptrdiff_t>(b * inner));
    return out;
}

localize::ChartTuple ManifoldCharts::decompose(const GridFunction& u) const {
    localize::ChartTuple out(size());
    parallel_for(size(), [&](std::size_t k) { out[k] = restrict_to(k, localize::times_spatial(pi_[k], u)); });
    return out;
}

GridFunction ManifoldCharts::assemble(const localize::ChartTuple& pieces) const {
    if (pieces.size() != size()) throw ShapeError("one piece per chart expected");
    GridFunction out = localize::times_spatial(pi_[0], embed(0, pieces[0]));
    for (std::size_t k = 1; k < size(); ++k) out += localize::times_spatial(pi_[k], embed(k, pieces[k]));
    return out;
}

localize::ChartTuple ManifoldCharts::remainder(const localize::ChartTuple& u) const {
    if (u.size() != size()) throw ShapeError("one piece per chart expected");
    // commutator C = A(R u) - sum pi_k A_k u_k on the model grid
    GridFunction comm = model_op_.apply(assemble(u));
    localize::ChartTuple au(size());
    parallel_for(size(), [&](std::size_t k) {
        au[k] = localize::times_spatial(pi_[k], embed(k, pushed_[k].op.apply(u[k])));
    });
    for (const auto& g : au) comm -= g;
    localize::ChartTuple out(size());
    parallel_for(size(), [&](std::size_t k) {
        out[k] = low_[k].apply(u[k]) + restrict_to(k, localize::times_spatial(pi_[k], comm));
    });
    return out;
}

localize::ChartedSystem ManifoldCharts::system() const {
    localize::ChartedSystem sys;
    sys.grids = boxes_;
    sys.principal = principal_;
    sys.centre = centre_;
    sys.remainder = [this](const localize::ChartTuple& u) { return remainder(u); };
    sys.decompose = [this](const GridFunction& u) { return decompose(u); };
    sys.assemble = [this](const localize::ChartTuple& u) { return assemble(u); };
    sys.apply = [this](const GridFunction& u) { return model_op_.apply(u); };
    sys.order = 2;
    sys.fiber = 1;
    return sys;
}

ManifoldOptions ManifoldOptions::from_json(const json& j) {
    ManifoldOptions o;
    o.eta = j.value("eta", o.eta);
    o.bump_order = j.value("bump_order", o.bump_order);
    o.check_regularity = j.value("check_regularity", o.check_regularity);
    o.charted.tol = j.value("tol", o.charted.tol);
    o.charted.max_neumann_iter = j.value("max_neumann_iter", o.charted.max_neumann_iter);
    o.charted.degree = j.value("degree", o.charted.degree);
    o.charted.lift_order = j.value("lift_order", o.charted.lift_order);
    return o;
}

namespace {

void check_manifold_preconditions(const GeometricOperator& a, const Atlas& atlas, const ManifoldCharts& mc,
                                  const ManifoldOptions& opt, json& extra) {
    if (opt.check_regularity) {
        const RegularityReport reg = verify_uniform_regularity(atlas);
        extra["regularity"] = reg.to_json();
        if (!reg.passed()) {
            std::string failed;
            for (const auto& [name, ok] : reg.pass)
                if (!ok) failed += (failed.empty() ? "" : ", ") + name;
            throw ValidationError("atlas " + atlas.name + " is not uniformly regular (" + failed + ")");
        }
    }
    if (!(a.diffusion > 0.0)) throw EllipticityError("diffusion must be positive for a normally elliptic operator");
    std::vector<double> eps;
    for (std::size_t k = 0; k < mc.size(); ++k) {
        eps.push_back(mc.pushed(k).epsilon);
        if (!(eps.back() > 0.0)) throw EllipticityError("pushed operator of chart " + std::to_string(k) + " is not elliptic");
    }
    extra["chart_epsilon"] = *std::min_element(eps.begin(), eps.end());
    extra["partition_defect"] = mc.partition_defect();
}

}  // namespace

json ManifoldPlan::to_json() const {
    return {{"c0", c0},
            {"c1", c1},
            {"eta0", eta0},
            {"eta", choice.eta},
            {"contraction", choice.contraction},
            {"eta_retries", choice.retries},
            {"inner_contraction", choice.inverse ? json(choice.inverse->inner_contraction()) : json::array()},
            {"checks", checks}};
}

namespace {

ManifoldPlan make_plan(const GeometricOperator& a, const Atlas& atlas, const ManifoldCharts& mc, const Axis& time,
                       const ManifoldOptions& opt) {
    ManifoldPlan plan;
    check_manifold_preconditions(a, atlas, mc, opt, plan.checks);
    const localize::ChartedSystem sys = mc.system();
    plan.c0 = localize::principal_resolvent_bound(sys, opt.resolvent_samples);
    plan.c1 = localize::remainder_bound(sys, opt.c1_probes, opt.charted.seed);
    plan.eta0 = 2.0 * plan.c1 * plan.c0 * plan.c0;
    const double eta = opt.eta > 0.0 ? opt.eta : std::max(1.0, plan.eta0);
    plan.choice = localize::choose_eta(sys, time, eta, opt.eta > 0.0, opt.charted);
    return plan;
}

}  // namespace

ManifoldPlan plan_manifold_parabolic(const GeometricOperator& a, const Atlas& atlas, const std::vector<Axis>& model,
                                     const Axis& time, const ManifoldOptions& opt) {
    const ManifoldCharts mc(a, atlas, model, opt.bump_order);
    return make_plan(a, atlas, mc, time, opt);
}

SolveReport solve_manifold_parabolic(const GeometricOperator& a, const GridFunction& f, const GridFunction& u0,
                                     const Atlas& atlas, const spaces::NormSpec& spec, const ManifoldOptions& opt) {
    const auto m = static_cast<std::size_t>(atlas.m);
    if (atlas.model_period.size() != m || atlas.centers.size() != atlas.charts.size())
        throw ConfigurationError("manifold solves need a translation atlas on a periodic model");
    if (f.rank() != m + 1) throw ShapeError("data must live on the model grid with a trailing time axis");
    if (u0.axes() != spatial_axes(f)) throw ShapeError("initial value grid differs from the data grid");
    spaces::check_admissible(spec);
    const ManifoldCharts mc(a, atlas, u0.axes(), opt.bump_order);
    const ManifoldPlan plan = make_plan(a, atlas, mc, f.axes().back(), opt);
    SolveReport rep = localize::charted_solve(mc.system(), f, u0, plan.choice, spec, opt.charted);
    rep.constants["c0"] = plan.c0;
    rep.constants["c1"] = plan.c1;
    rep.constants["eta0"] = plan.eta0;
    rep.extra["plan"] = plan.to_json();
    rep.extra["atlas"] = atlas.to_json();
    return rep;
}

double ResolventSweep::spread() const {
    if (products.empty()) return 1.0;
    const auto [lo, hi] = std::minmax_element(products.begin(), products.end());
    return *lo > 0.0 ? *hi / *lo : std::numeric_limits<double>::infinity();
}

json ResolventSweep::to_json() const {
    json lam = json::array();
    for (const cplx& l : lambdas) lam.push_back({l.real(), l.imag()});
    return {{"eta", eta}, {"lambdas", lam}, {"products", products}, {"direct_gap", direct_gap},
            {"contraction", contraction}, {"spread", spread()}};
}

ResolventSweep resolvent_sweep_manifold(const GeometricOperator& a, const Atlas& atlas, const std::vector<Axis>& model,
                                        const std::vector<cplx>& lambdas, double eta, const GridFunction& g,
                                        const ManifoldOptions& opt) {
    if (g.axes() != model || g.fiber() != 1) throw ShapeError("right-hand side must be scalar on the model grid");
    const ManifoldCharts mc(a, atlas, model, opt.bump_order);
    json extra;
    check_manifold_preconditions(a, atlas, mc, opt, extra);
    const localize::ChartedSystem sys = mc.system();
    for (const auto& p : sys.principal)
        if (!p.is_constant()) throw ConfigurationError("resolvent sweep supports charts with constant metric only");

    using Eigen::VectorXcd;
    auto flatten = [](const localize::ChartTuple& u) {
        std::size_t total = 0;
        for (const auto& x : u) total += x.size();
        VectorXcd v(static_cast<Eigen::Index>(total));
        Eigen::Index pos = 0;
        for (const auto& x : u)
            for (const cplx& c : x.values()) v(pos++) = c;
        return v;
    };
    auto unflatten = [&](const VectorXcd& v) {
        localize::ChartTuple out;
        Eigen::Index pos = 0;
        for (const auto& box : sys.grids) {
            GridFunction x(box, 1);
            for (cplx& c : x.values()) c = v(pos++);
            out.push_back(std::move(x));
        }
        return out;
    };
    auto chart_inverse = [&](cplx lambda, double e) -> localize::LinearMap {
        return [&, lambda, e](const VectorXcd& y) {
            localize::ChartTuple u = unflatten(y);
            for (std::size_t k = 0; k < u.size(); ++k)
                u[k] = spectral::apply_scalar(u[k], [&](const Point& xi) {
                    return 1.0 / (lambda + e + operators::full_symbol(sys.principal[k], xi)(0, 0));
                });
            return flatten(u);
        };
    };
    const localize::LinearMap b = [&](const VectorXcd& x) { return flatten(sys.remainder(unflatten(x))); };
    Eigen::Index dim = 0;
    for (const auto& box : sys.grids) dim += static_cast<Eigen::Index>(GridFunction(box, 1).size());

    ResolventSweep out;
    if (eta > 0.0) {
        out.eta = eta;
    } else {
        const double c0 = localize::principal_resolvent_bound(sys, opt.resolvent_samples);
        const double c1 = localize::remainder_bound(sys, opt.c1_probes, opt.charted.seed);
        out.eta = std::max(1.0, 2.0 * c1 * c0 * c0);
        for (int retry = 0; localize::contraction_estimate(chart_inverse(0.0, out.eta), b, dim, 20, opt.charted.seed) > 0.5;
             ++retry) {
            if (retry >= 8) throw ContractionError("no eta up to 4^8 eta0 makes the remainder a contraction");
            out.eta *= 4.0;
        }
    }
    const bool direct = mc.model_operator().is_constant();
    for (const cplx& lambda : lambdas) {
        if (lambda.real() < 0.0) throw ArgumentError("resolvent sweep needs Re lambda >= 0");
        localize::NeumannOptions no;
        no.tol = opt.charted.tol;
        no.max_iter = opt.charted.max_neumann_iter;
        no.seed = opt.charted.seed;
        const auto rep = localize::neumann_solve(chart_inverse(lambda, out.eta), b, flatten(sys.decompose(g)), no);
        const GridFunction u = sys.assemble(unflatten(rep.x));
        out.lambdas.push_back(lambda);
        out.contraction.push_back(rep.contraction);
        out.products.push_back((std::abs(lambda) + out.eta) * spaces::lq_norm(u, 2.0) / spaces::lq_norm(g, 2.0));
        if (direct) {
            const GridFunction ref = spectral::apply_scalar(g, [&](const Point& xi) {
                return 1.0 / (lambda + out.eta + operators::full_symbol(mc.model_operator(), xi)(0, 0));
            });
            out.direct_gap.push_back(relative_l2(u, ref));
        } else {
            out.direct_gap.push_back(std::numeric_limits<double>::quiet_NaN());
        }
    }
    return out;
}

}  // namespace parreg::geometry
