#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <random>

#include "cli.hpp"
#include "parreg/errors.hpp"
#include "parreg/fourier.hpp"
#include "parreg/geometry.hpp"
#include "parreg/localize.hpp"
#include "parreg/spectral.hpp"
#include "parreg/weights.hpp"

namespace parreg::cli {

using std::numbers::pi;

namespace {

struct Suite {
    json assertions = json::array();

    // passes when value <= tol
    void check(const std::string& name, double value, double tol) {
        assertions.push_back({{"name", name}, {"value", std::isfinite(value) ? json(value) : json()}, {"tol", tol},
                              {"passed", value <= tol}});
    }
    void expect(const std::string& name, bool ok) { assertions.push_back({{"name", name}, {"passed", ok}}); }
};

using SuiteFn = std::function<void(Suite&, const std::string& inject, unsigned seed)>;

double max_diff(const GridFunction& a, const GridFunction& b) { return (a - b).max_abs(); }

void weights_suite(Suite& s, const std::string&, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    std::uniform_real_distribution<double> t(0.1, 10.0);
    for (const auto& [name, w] : std::map<std::string, weights::WeightSystem>{
             {"trivial", weights::WeightSystem::trivial(2)},
             {"parabolic_1_2", weights::WeightSystem::parabolic(1, 2)},
             {"parabolic_2_4", weights::WeightSystem::parabolic(2, 4)}}) {
        double hom = 0.0;
        double group = 0.0;
        double level = 0.0;
        for (int i = 0; i < 100; ++i) {
            weights::AugmentedPoint z;
            for (int k = 0; k < w.d(); ++k) z.xi.push_back(u(rng));
            z.eta = std::abs(u(rng));
            const double a = t(rng);
            const double b = t(rng);
            const double lz = weights::quasinorm(w, z);
            hom = std::max(hom, std::abs(weights::quasinorm(w, weights::dilate(w, a, z)) - a * lz) / (a * lz));
            const auto ab = weights::dilate(w, a, weights::dilate(w, b, z));
            const auto direct = weights::dilate(w, a * b, z);
            double g = std::abs(ab.eta - direct.eta) / (1.0 + std::abs(direct.eta));
            for (std::size_t k = 0; k < ab.xi.size(); ++k) g = std::max(g, std::abs(ab.xi[k] - direct.xi[k]) / (1.0 + std::abs(direct.xi[k])));
            group = std::max(group, g);
            level = std::max(level, std::abs(weights::quasinorm(w, weights::lambda_retract(w, z)) - 1.0));
        }
        s.check("quasinorm_homogeneity_" + name, hom, 1e-10);
        s.check("dilation_group_law_" + name, group, 1e-10);
        s.check("retraction_unit_level_" + name, level, 1e-10);
    }
}

void partition_suite(Suite& s, const std::string& inject, unsigned seed) {
    const std::vector<Axis> sq{Axis::periodic_box(32, 2 * pi), Axis::periodic_box(32, 2 * pi)};
    for (std::size_t cells : {2u, 4u}) {
        auto loc = localize::build_localization_cells(sq, cells);
        if (inject == "broken-bump") loc.pi[1] *= 1.05;
        const std::string tag = "_" + std::to_string(cells * cells) + "_charts";
        s.check("partition_of_unity" + tag, loc.partition_defect(), 1e-10);
        const auto u = spectral::random_band_limited(sq, 2, 6, seed);
        s.check("retraction_identity" + tag, max_diff(localize::r_assemble(loc, localize::r_decompose(loc, u)), u), 1e-12);
        // pi_k vanishes outside its chart and chi_k = 1 on the support of pi_k
        double leak = 0.0;
        for (std::size_t k = 0; k < loc.size(); ++k)
            for (std::size_t node = 0; node < loc.pi[k].node_count(); ++node) {
                const Point d = loc.displacement(k, loc.pi[k].coords(node));
                double r = 0.0;
                for (double v : d) r = std::max(r, std::abs(v) / loc.delta);
                if (r >= 0.85) leak = std::max(leak, std::abs(loc.pi[k](node)));
                if (std::abs(loc.pi[k](node)) > 0.0) leak = std::max(leak, std::abs(loc.chi[k](node) - 1.0));
            }
        s.check("bump_support" + tag, leak, 0.0);
    }
}

double brute_slobodeckii(const GridFunction& u, double theta, double q) {
    const Axis& ax = u.axis(0);
    const double len = ax.length();
    double sum = 0.0;
    for (std::size_t i = 0; i < ax.n; ++i)
        for (std::size_t j = 0; j < ax.n; ++j) {
            if (i == j) continue;
            double d = std::abs(ax.coord(i) - ax.coord(j));
            d = std::min(d, len - d);
            sum += ax.step * ax.step * std::pow(std::abs(u(i) - u(j)), q) / std::pow(d, theta * q + 1.0);
        }
    return std::pow(sum, 1.0 / q);
}

void spaces_suite(Suite& s, const std::string&, unsigned seed) {
    const auto v = spectral::random_band_limited({Axis::periodic_box(64, 2 * pi)}, 1, 5, seed);
    for (double theta : {0.3, 0.5})
        for (double q : {1.5, 2.0}) {
            const double fast = spaces::slobodeckii_seminorm(v, theta, q, {0});
            s.check("slobodeckii_brute_force_theta" + std::to_string(theta).substr(0, 3) + "_q" + std::to_string(q).substr(0, 3),
                    std::abs(fast - brute_slobodeckii(v, theta, q)) / fast, 1e-12);
        }
    const auto x = GridFunction::sample_scalar({Axis::interval(201, -1.0, 1.0)}, [](const Point& p) { return cplx(p[0]); });
    s.check("holder_half_linear", std::abs(spaces::holder_seminorm(x, 0.5) - std::sqrt(2.0)), 1e-12);
    s.check("seeley_moments", [] {
        const auto c = spaces::seeley_coefficients(4);
        double worst = 0.0;
        for (int p = 0; p < 4; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < c.size(); ++j) acc += c[j] * std::pow(-static_cast<double>(j + 1), p);
            worst = std::max(worst, std::abs(acc - 1.0));
        }
        return worst;
    }(), 1e-10);
}

void operators_suite(Suite& s, const std::string&, unsigned) {
    const auto lap = operators::check_normal_ellipticity(operators::DifferentialOperator::laplacian(2));
    s.check("laplacian_epsilon_one", std::abs(lap.epsilon - 1.0), 1e-9);
    s.expect("plus_laplacian_rejected", !operators::check_normal_ellipticity(operators::DifferentialOperator::laplacian(2, 1, -1.0)).is_elliptic);
    bool odd = false;
    try {
        operators::DifferentialOperator(1, 3, 1);
    } catch (const ValidationError&) {
        odd = true;
    }
    s.expect("odd_order_rejected", odd);
    const auto zeta = operators::resolvent_samples(1, 2000, 1);
    const auto heat = operators::DifferentialOperator::laplacian(1);
    const double c0 = operators::resolvent_bound_check(heat, 0.0, zeta).c_measured;
    double spread = 1.0;
    for (cplx l : {cplx(1.0), cplx(1e3), cplx(0.0, 1e3)}) {
        const double c = operators::resolvent_bound_check(heat, l, zeta).c_measured;
        spread = std::max(spread, std::max(c / c0, c0 / c));
    }
    s.check("resolvent_bound_lambda_spread", spread, 3.0);
}

void fourier_suite(Suite& s, const std::string&, unsigned seed) {
    const std::vector<Axis> ax{Axis::periodic_box(32, 2 * pi)};
    const auto heat = operators::DifferentialOperator::laplacian(1);
    const auto u = spectral::random_band_limited(ax, 1, 8, seed);
    const auto ab = fourier::semigroup_step(heat, 0.3, fourier::semigroup_step(heat, 0.2, u, 1.0), 1.0);
    s.check("semigroup_law", max_diff(ab, fourier::semigroup_step(heat, 0.5, u, 1.0)), 1e-12);
    const cplx l(2.0, 5.0);
    const auto v = fourier::resolvent_apply(heat, l, u, 1.0);
    auto back = heat.apply(v);
    back += (l + 1.0) * v;
    s.check("resolvent_identity", max_diff(back, u), 1e-10);
    const std::vector<Axis> st{ax[0], Axis::periodic_box(32, 2 * pi)};
    const auto f = spectral::random_band_limited(st, 1, 6, seed + 1);
    const auto rep = fourier::solve_fullspace_parabolic(heat, f, 2.0);
    s.check("fullspace_residual", rep.residual, 1e-10);
}

void geometry_suite(Suite& s, const std::string&, unsigned seed) {
    const auto torus = geometry::verify_uniform_regularity(geometry::flat_torus(2, 2), 2000, seed);
    s.expect("flat_torus_uniformly_regular", torus.passed());
    s.check("flat_torus_metric_band", std::max(std::abs(torus.metric_min - 1.0), std::abs(torus.metric_max - 1.0)), 1e-12);
    s.expect("naive_hyperbolic_chart_rejected", !geometry::verify_uniform_regularity(geometry::hyperbolic_naive(), 2000, seed).passed());
    const auto hyp = geometry::hyperbolic_mobius(2.0);
    const geometry::GeometricOperator a{1.0, 0.0};
    s.check("symbol_identity_hyperbolic_chart_0",
            geometry::check_symbol_identity(a, hyp, 0, geometry::chart_box_grid(hyp.charts[0], 17)).max_error, 1e-6);
}

const std::map<std::string, SuiteFn>& registry() {
    static const std::map<std::string, SuiteFn> r{{"weights", weights_suite},     {"partition", partition_suite},
                                                  {"spaces", spaces_suite},       {"operators", operators_suite},
                                                  {"fourier", fourier_suite},     {"geometry", geometry_suite}};
    return r;
}

}  // namespace

std::vector<std::string> suite_names() {
    std::vector<std::string> out;
    for (const auto& [k, v] : registry()) out.push_back(k);
    out.push_back("all");
    return out;
}

CommandResult cmd_verify(const std::string& suite, const std::string& inject, unsigned seed) {
    if (!inject.empty() && inject != "broken-bump") throw UsageError("unknown fault \"" + inject + "\" (broken-bump)");
    std::vector<std::string> names;
    if (suite == "all") {
        for (const auto& [k, v] : registry()) names.push_back(k);
    } else if (registry().count(suite)) {
        names.push_back(suite);
    } else {
        std::string known;
        for (const auto& n : suite_names()) known += (known.empty() ? "" : " | ") + n;
        throw UsageError("unknown suite \"" + suite + "\" (" + known + ")");
    }
    Suite s;
    for (const auto& n : names) {
        Suite part;
        try {
            registry().at(n)(part, inject, seed);
        } catch (const std::exception& e) {
            part.assertions.push_back({{"name", n + "_raised"}, {"passed", false}, {"message", e.what()}});
        }
        for (auto& a : part.assertions) {
            a["suite"] = n;
            s.assertions.push_back(a);
        }
    }
    json failures = json::array();
    for (const auto& a : s.assertions)
        if (!a["passed"].get<bool>()) failures.push_back(a["name"]);
    CommandResult out;
    out.report = {{"command", "verify"}, {"suite", suite}, {"seed", seed}, {"inject", inject},
                  {"assertions", s.assertions}, {"failures", failures}, {"passed", failures.empty()}};
    json constants = json::object();
    for (const auto& a : s.assertions)
        if (a.contains("value")) constants[a["name"].get<std::string>()] = a["value"];
    out.report["constants"] = constants;
    out.exit_code = failures.empty() ? 0 : 1;
    return out;
}

}  // namespace parreg::cli
