#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <sstream>

#include "cli.hpp"
#include "parreg/cauchy.hpp"
#include "parreg/errors.hpp"
#include "parreg/fourier.hpp"
#include "parreg/geometry.hpp"
#include "parreg/grid_io.hpp"
#include "parreg/localize.hpp"
#include "parreg/spectral.hpp"

namespace parreg::cli {

namespace {

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(); }

GridFunction grid_entry(const json& j, const std::filesystem::path& base) {
    if (j.is_string()) return io::read_grid(base / j.get<std::string>());
    return io::grid_from_json(j);
}

// exit 1 when a declared tolerance is exceeded
int apply_tolerances(const json& doc, json& report) {
    if (!doc.contains("tolerance")) return 0;
    json failed = json::array();
    for (auto it = doc["tolerance"].begin(); it != doc["tolerance"].end(); ++it) {
        const json& c = report["constants"];
        if (!c.contains(it.key())) throw UsageError("tolerance names unknown constant \"" + it.key() + "\"");
        const double v = c[it.key()].is_number() ? c[it.key()].get<double>() : std::numeric_limits<double>::infinity();
        if (!(v <= it.value().get<double>())) failed.push_back(it.key());
    }
    report["failed_tolerances"] = failed;
    return failed.empty() ? 0 : 1;
}

geometry::GeometricOperator geometric_entry(const json& doc) {
    return geometry::GeometricOperator::from_json(doc.value("geometric", json::object()));
}

SolveReport run_solver(const Manifest& m, const std::string& solver, std::optional<GridFunction>& exact) {
    const json& d = m.doc;
    if (solver == "fullspace") {
        const double eta = eta_entry(d, 1.0);
        if (eta == 0.0) throw ValidationError("fullspace solves need an explicit eta");
        auto data = build_problem(m, eta);
        data.spec.eta = 1.0;
        spaces::check_admissible(data.spec);
        auto rep = fourier::solve_fullspace_parabolic(data.op, data.f, eta);
        if (d.value("measure", true))
            rep.constants["mr_ratio"] = fourier::mr_ratio(rep.u, data.f, data.op.order(), data.spec.s, data.spec.q, eta);
        exact = data.exact;
        return rep;
    }
    if (solver == "cauchy") {
        const double eta = eta_entry(d, 1.0);
        auto data = build_problem(m, eta);
        const cauchy::CauchyProblem p{data.op, data.f, data.u0, data.spec, data.horizon};
        p.validate();
        exact = data.exact;
        if (p.op.is_time_dependent()) {
            cauchy::IntervalOptions io;
            io.eta = eta;
            io.measure = d.value("measure", true);
            return cauchy::solve_cauchy_interval(p, io);
        }
        if (eta == 0.0) throw ValidationError("constant-coefficient Cauchy solves need an explicit eta");
        cauchy::FrozenOptions fo;
        fo.measure = d.value("measure", true);
        fo.degree = d.value("options", json::object()).value("degree", fo.degree);
        return cauchy::solve_cauchy_frozen(p, eta, fo);
    }
    if (solver == "variable") {
        auto opt = localize::VariableOptions::from_json(d.value("options", json::object()));
        opt.seed = m.seed;
        opt.measure = d.value("measure", true);
        opt.eta = eta_entry(d, 0.0);
        auto data = build_problem(m, opt.eta);
        if (opt.eta == 0.0) {
            const auto plan = localize::plan_variable_parabolic(data.op, data.u0.axes(), data.f.axes().back(), opt);
            opt.eta = plan.eta;
            data = build_problem(m, opt.eta);
        }
        const cauchy::CauchyProblem p{data.op, data.f, data.u0, data.spec, data.horizon};
        p.validate();
        exact = data.exact;
        return localize::solve_variable_parabolic(p, opt);
    }
    if (solver == "manifold") {
        if (!d.contains("atlas")) throw UsageError("manifold solves need an \"atlas\"");
        const auto atlas = geometry::atlas_from_json(d["atlas"]);
        const auto a = geometric_entry(d);
        auto opt = geometry::ManifoldOptions::from_json(d.value("options", json::object()));
        opt.charted.seed = m.seed;
        opt.charted.measure = d.value("measure", true);
        opt.eta = eta_entry(d, 0.0);
        if (opt.eta == 0.0) {
            const auto shape = problem_shape(m);
            opt.eta = geometry::plan_manifold_parabolic(a, atlas, shape.spatial, shape.time, opt).choice.eta;
        }
        auto data = build_problem(m, opt.eta);
        // the presets manufacture the flat heat equation
        if (a.diffusion == 1.0 && a.potential == 0.0) exact = data.exact;
        return geometry::solve_manifold_parabolic(a, data.f, data.u0, atlas, data.spec, opt);
    }
    throw UsageError("unknown solver \"" + solver + "\" (fullspace | cauchy | variable | manifold)");
}

std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

}  // namespace

CommandResult cmd_check_ellipticity(const Manifest& m) {
    const json& d = m.doc;
    if (!d.contains("operator") || !d["operator"].is_object()) throw UsageError("manifest needs an \"operator\" object");
    CommandResult out;
    out.report = report_header("check-ellipticity", m);
    const json& oj = d["operator"];
    if (oj.contains("r") && oj["r"].is_number_integer() && oj["r"].get<int>() % 2 != 0) {
        // sigma(-xi) = -sigma(xi) for an odd principal part, so its spectrum
        // cannot stay in the open right half-plane on the whole cosphere
        out.report["is_elliptic"] = false;
        out.report["reason"] = "odd order " + std::to_string(oj["r"].get<int>()) +
                               ": the principal symbol is odd in xi, so its spectrum cannot lie in the right half-plane";
        out.report["constants"] = {{"epsilon", json()}, {"kappa", json()}};
        out.exit_code = 1;
        return out;
    }
    const auto op = operators::DifferentialOperator::from_json(oj, m.base_dir);
    operators::EllipticityOptions opt;
    opt.sphere_samples = d.value("sphere_samples", opt.sphere_samples);
    const bool strong = d.value("strong", false);
    const auto rep = strong ? operators::check_strong_ellipticity(op, opt) : operators::check_normal_ellipticity(op, opt);
    bool ok = rep.is_elliptic;
    if (d.contains("epsilon")) {
        const double declared = d["epsilon"].get<double>();
        const bool meets = rep.epsilon >= declared - opt.tol;
        out.report["declared_epsilon"] = declared;
        out.report["meets_declared"] = meets;
        ok = ok && meets;
    }
    out.report["kind"] = strong ? "strong" : "normal";
    out.report["is_elliptic"] = ok;
    out.report["certificate"] = rep.to_json();
    out.report["constants"] = {{"epsilon", rep.epsilon}, {"kappa", finite_or_null(rep.kappa)}};
    out.exit_code = ok ? 0 : 1;
    return out;
}

CommandResult cmd_solve(const Manifest& m) {
    const std::string solver = m.doc.value("solver", std::string("cauchy"));
    std::optional<GridFunction> exact;
    const auto rep = run_solver(m, solver, exact);
    CommandResult out;
    out.report = report_header("solve", m);
    out.report["solver"] = solver;
    json constants = rep.constants;
    constants["residual"] = finite_or_null(rep.residual);
    constants["eta"] = rep.eta;
    if (exact) constants["exact_error"] = relative_l2(rep.u, *exact);
    out.report["constants"] = constants;
    out.report["result"] = rep.to_json();
    out.exit_code = apply_tolerances(m.doc, out.report);
    out.solution = rep.u;
    return out;
}

CommandResult cmd_norm(const Manifest& m) {
    const json& d = m.doc;
    GridFunction u;
    if (d.contains("grid")) {
        u = grid_entry(d["grid"], m.base_dir);
    } else if (d.contains("data")) {
        const json& p = d["data"];
        const std::string preset = p.value("preset", std::string());
        if (preset == "random") {
            std::vector<Axis> axes;
            for (auto n : p.value("n", std::vector<std::size_t>{32})) axes.push_back(Axis::periodic_box(n, p.value("length", 2 * std::numbers::pi)));
            u = spectral::random_band_limited(axes, 1, p.value("band", 4), m.seed);
        } else if (preset == "linear") {
            u = GridFunction::sample_scalar({Axis::interval(p.value("n", std::size_t{201}), p.value("lo", -1.0), p.value("hi", 1.0))},
                                            [](const Point& x) { return cplx(x[0]); });
        } else {
            throw UsageError("unknown norm preset \"" + preset + "\" (random | linear)");
        }
    } else {
        throw UsageError("manifest needs \"grid\" or \"data\"");
    }
    spaces::NormSpec spec;
    spec.s = d.value("s", 0.0);
    spec.q = q_entry(d, "q", 2.0);
    spec.eta = d.value("eta", 1.0);
    spec.weight = d.contains("weight") ? weights::WeightSystem::from_json(d["weight"])
                                       : weights::WeightSystem::trivial(static_cast<int>(u.rank()));
    spaces::check_admissible(spec);

    CommandResult out;
    out.report = report_header("norm", m);
    json constants{{"lq", spaces::lq_norm(u, spec.q)}};
    constants["norm"] = spaces::anisotropic_norm(u, spec);
    if (d.contains("seminorm")) {
        const json& s = d["seminorm"];
        const double theta = s.at("theta").get<double>();
        const std::string kind = s.value("kind", std::string("slobodeckii"));
        std::vector<std::size_t> all(u.rank());
        for (std::size_t k = 0; k < all.size(); ++k) all[k] = k;
        if (kind == "holder") constants["holder"] = spaces::holder_seminorm(u, theta, s.value("delta", spaces::kInf));
        else if (kind == "slobodeckii") constants["slobodeckii"] = spaces::slobodeckii_seminorm(u, theta, spec.q, all);
        else throw UsageError("seminorm kind is holder or slobodeckii");
    }
    out.report["spec"] = {{"s", spec.s}, {"q", finite_or_null(spec.q)}, {"eta", spec.eta}, {"weight", spec.weight.to_json()}};
    out.report["constants"] = constants;
    return out;
}

CommandResult cmd_study(const Manifest& m) {
    const json& d = m.doc;
    if (!d.contains("study")) throw UsageError("manifest needs a \"study\" section");
    const json& s = d["study"];
    const std::string param = s.value("parameter", std::string());
    if (param != "eta" && param != "grid" && param != "delta" && param != "lambda")
        throw UsageError("study parameter must be eta | grid | delta | lambda");
    if (!s.contains("values") || !s["values"].is_array() || s["values"].empty())
        throw UsageError("study needs a nonempty \"values\" array");
    const std::string expect = s.value("expect", std::string(param == "grid" ? "decreasing" : "bounded"));
    if (expect != "bounded" && expect != "decreasing") throw UsageError("study expect is bounded or decreasing");
    const double factor = s.value("blowup_factor", 3.0);
    const std::string solver = d.value("solver", std::string("cauchy"));

    struct Row {
        cplx value;
        std::string status = "ok";
        double measure = std::numeric_limits<double>::quiet_NaN();
        std::string flag;
        std::string message;
    };
    std::vector<Row> rows;
    std::string measure = s.value("measure", std::string());

    if (param == "lambda") {
        if (measure.empty()) measure = "resolvent_product";
        std::vector<cplx> lambdas;
        for (const auto& v : s["values"]) lambdas.push_back(lambda_entry(v));
        if (solver == "manifold") {
            const auto atlas = geometry::atlas_from_json(d.at("atlas"));
            auto opt = geometry::ManifoldOptions::from_json(d.value("options", json::object()));
            opt.charted.seed = m.seed;
            const auto shape = problem_shape(m);
            const auto g = spectral::random_band_limited(shape.spatial, 1, 4, m.seed);
            const auto sw = geometry::resolvent_sweep_manifold(geometric_entry(d), atlas, shape.spatial, lambdas,
                                                               eta_entry(d, 0.0), g, opt);
            for (std::size_t i = 0; i < lambdas.size(); ++i) {
                Row r;
                r.value = lambdas[i];
                r.measure = sw.products[i];
                rows.push_back(r);
            }
        } else {
            const auto data = build_problem(m, 1.0);
            const auto spatial = problem_shape(m).spatial;
            const double eta = eta_entry(d, 1.0);
            for (cplx l : lambdas) {
                Row r;
                r.value = l;
                try {
                    r.measure = fourier::resolvent_decay_product(data.op, l, spatial, eta == 0.0 ? 1.0 : eta);
                } catch (const std::exception& e) {
                    r.status = "failed";
                    r.message = e.what();
                }
                rows.push_back(r);
            }
        }
    } else {
        if (measure.empty()) measure = param == "grid" ? "residual" : "mr_ratio";
        const std::string field = s.value("field", std::string("nt"));
        for (const auto& v : s["values"]) {
            Row r;
            r.value = cplx(v.get<double>(), 0.0);
            json doc = d;
            doc.erase("study");
            doc.erase("tolerance");
            if (param == "eta") doc["eta"] = v;
            else if (param == "delta") doc["options"]["delta"] = v;
            else {
                if (!doc.contains("data")) throw UsageError("grid studies need a \"data\" preset");
                doc["data"][field] = v;
            }
            try {
                const auto res = cmd_solve(Manifest::from_json(doc, m.base_dir, m.seed));
                const json& c = res.report["constants"];
                if (!c.contains(measure)) throw UsageError("solve reports no constant \"" + measure + "\"");
                r.measure = c[measure].is_number() ? c[measure].get<double>() : std::numeric_limits<double>::quiet_NaN();
            } catch (const UsageError&) {
                throw;
            } catch (const std::exception& e) {
                r.status = "failed";
                r.message = e.what();
            }
            rows.push_back(r);
        }
    }

    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    for (const auto& r : rows)
        if (r.status == "ok" && std::isfinite(r.measure)) {
            lo = std::min(lo, r.measure);
            hi = std::max(hi, r.measure);
        }
    int flagged = 0;
    const Row* prev = nullptr;
    for (auto& r : rows) {
        if (r.status != "ok") {
            ++flagged;
            continue;
        }
        if (!std::isfinite(r.measure)) r.flag = "blowup";
        else if (expect == "bounded" && r.measure > factor * lo) r.flag = "blowup";
        else if (expect == "decreasing" && prev && r.measure > prev->measure) r.flag = "nonmonotone";
        if (!r.flag.empty()) ++flagged;
        prev = &r;
    }

    std::ostringstream csv;
    csv << "parameter,value,value_im,status," << measure << ",flag\n";
    json jrows = json::array();
    for (const auto& r : rows) {
        csv << param << ',' << fmt(r.value.real()) << ',' << fmt(r.value.imag()) << ',' << r.status << ','
            << fmt(r.measure) << ',' << r.flag << '\n';
        json jr{{"value", r.value.real()}, {"status", r.status}, {measure, finite_or_null(r.measure)}, {"flag", r.flag}};
        if (r.value.imag() != 0.0) jr["value_im"] = r.value.imag();
        if (!r.message.empty()) jr["message"] = r.message;
        jrows.push_back(jr);
    }

    CommandResult out;
    out.report = report_header("study", m);
    out.report["parameter"] = param;
    out.report["measure"] = measure;
    out.report["expect"] = expect;
    out.report["rows"] = jrows;
    out.report["constants"] = {{"min", finite_or_null(lo)}, {"max", finite_or_null(hi)},
                               {"spread", finite_or_null(hi / lo)}, {"flagged", flagged}};
    out.csv = csv.str();
    out.exit_code = flagged ? 1 : 0;
    return out;
}

}  // namespace parreg::cli
