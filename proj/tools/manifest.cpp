#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "cli.hpp"
#include "parreg/cauchy.hpp"
#include "parreg/errors.hpp"
#include "parreg/grid_io.hpp"
#include "parreg/spectral.hpp"

namespace parreg::cli {

using std::numbers::pi;

namespace {

GridFunction grid_entry(const json& j, const std::filesystem::path& base) {
    if (j.is_string()) return io::read_grid(base / j.get<std::string>());
    return io::grid_from_json(j);
}

bool is_fullspace(const Manifest& m) { return m.doc.value("solver", std::string("cauchy")) == "fullspace"; }

// a periodic random field relabelled onto the requested axes
GridFunction random_on(const std::vector<Axis>& axes, std::size_t fiber, int band, unsigned seed) {
    std::vector<Axis> periodic = axes;
    for (auto& a : periodic)
        if (!a.periodic) a = Axis::periodic_box(a.n, a.step * static_cast<double>(a.n));
    return GridFunction(axes, fiber, spectral::random_band_limited(periodic, fiber, band, seed).data());
}

}  // namespace

std::string manifest_hash(const json& doc) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : doc.dump()) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

Manifest Manifest::load(const std::filesystem::path& path, std::optional<unsigned> seed_override) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open manifest " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    json doc;
    try {
        doc = json::parse(ss.str());
    } catch (const json::parse_error& e) {
        throw UsageError("malformed manifest " + path.string() + ": " + e.what());
    }
    return from_json(std::move(doc), path.parent_path(), seed_override);
}

Manifest Manifest::from_json(json doc, std::filesystem::path base_dir, std::optional<unsigned> seed_override) {
    if (!doc.is_object()) throw UsageError("manifest must be a JSON object");
    Manifest m;
    m.hash = manifest_hash(doc);
    m.doc = std::move(doc);
    m.base_dir = std::move(base_dir);
    m.seed = seed_override ? *seed_override : m.doc.value("seed", 1u);
    return m;
}

double eta_entry(const json& doc, double fallback) {
    if (!doc.contains("eta")) return fallback;
    const json& e = doc["eta"];
    if (e.is_string() && e.get<std::string>() == "auto") return 0.0;
    if (!e.is_number()) throw UsageError("eta must be a number or \"auto\"");
    const double v = e.get<double>();
    if (!(v > 0.0)) throw ValidationError("eta must be positive");
    return v;
}

double q_entry(const json& j, const char* key, double fallback) {
    if (!j.contains(key)) return fallback;
    if (j[key].is_string() && j[key].get<std::string>() == "inf") return spaces::kInf;
    if (!j[key].is_number()) throw UsageError(std::string(key) + " must be a number or \"inf\"");
    return j[key].get<double>();
}

cplx lambda_entry(const json& j) {
    if (j.is_number()) return {j.get<double>(), 0.0};
    if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number()) return {j[0].get<double>(), j[1].get<double>()};
    throw UsageError("lambda values are numbers or [re, im] pairs");
}

ProblemShape problem_shape(const Manifest& m) {
    const json& d = m.doc;
    if (d.contains("problem")) {
        const GridFunction f = grid_entry(d["problem"].at("f"), m.base_dir);
        if (f.rank() < 2) throw ShapeError("f needs at least one spatial axis and a time axis");
        return {spatial_axes(f), f.axes().back()};
    }
    if (!d.contains("data")) throw UsageError("manifest needs \"problem\" or \"data\"");
    const json& p = d["data"];
    const auto nx = p.value("nx", std::size_t{16});
    const auto nt = p.value("nt", std::size_t{33});
    const double len = p.value("length", 2 * pi);
    if (nx < 4 || nt < 4) throw ValidationError("data grids need at least 4 samples per axis");
    if (is_fullspace(m)) return {{Axis::periodic_box(nx, len)}, Axis::periodic_box(nt, p.value("T", 2 * pi))};
    const double T = p.value("T", 1.0);
    if (!(T > 0.0)) throw ValidationError("time horizon T must be positive");
    return {{Axis::periodic_box(nx, len)}, Axis::half_line(nt, T / static_cast<double>(nt - 1))};
}

ProblemData build_problem(const Manifest& m, double eta) {
    const json& d = m.doc;
    ProblemData out;
    if (d.contains("problem")) {
        const json& p = d["problem"];
        try {
            if (is_fullspace(m)) {
                out.f = grid_entry(p.at("f"), m.base_dir);
                out.op = p.contains("operator") ? operators::DifferentialOperator::from_json(p["operator"], m.base_dir)
                                                : operators::DifferentialOperator::laplacian(static_cast<int>(out.f.rank()) - 1);
                out.spec = {p.value("s", 0.5), q_entry(p, "q", 2.0),
                            weights::WeightSystem::parabolic(out.op.m(), out.op.order()), 1.0};
                return out;
            }
        } catch (const json::exception& e) {
            throw UsageError(std::string("malformed problem: ") + e.what());
        }
        const auto cp = cauchy::CauchyProblem::from_json(p, m.base_dir);
        out.op = cp.op;
        out.f = cp.f;
        out.u0 = cp.u0;
        out.spec = cp.spec;
        out.horizon = cp.horizon;
        return out;
    }

    const json& p = d.at("data");
    const std::string preset = p.value("preset", std::string());
    const auto shape = problem_shape(m);
    std::vector<Axis> st = shape.spatial;
    st.push_back(shape.time);
    const double e = eta > 0.0 ? eta : 1.0;

    if (preset == "heat_mode") {
        if (!is_fullspace(m)) throw UsageError("preset heat_mode needs solver fullspace");
        const double k = p.value("k", 1.0);
        const double j = p.value("j", 1.0);
        out.f = GridFunction::sample_scalar(st, [&](const Point& x) { return std::exp(cplx(0.0, k * x[0] + j * x[1])); });
        out.exact = (1.0 / cplx(e + k * k, j)) * out.f;
    } else if (preset == "heat_cosine") {
        // (d_t + eta - d_xx) u = f for u = exp(-t) cos x
        out.f = GridFunction::sample_scalar(st, [&](const Point& x) { return cplx(e * std::exp(-x[1]) * std::cos(x[0])); });
        out.u0 = GridFunction::sample_scalar(shape.spatial, [](const Point& x) { return cplx(std::cos(x[0])); });
        out.exact = GridFunction::sample_scalar(st, [](const Point& x) { return cplx(std::exp(-x[1]) * std::cos(x[0])); });
    } else if (preset == "divergence_sine") {
        // -(a u')' with a = 2 + sin x: A exp(-t) cos x = exp(-t) (2 cos x + sin 2x)
        const auto a = GridFunction::sample_scalar(shape.spatial, [](const Point& x) { return cplx(2.0 + std::sin(x[0])); });
        out.op = operators::DifferentialOperator::divergence_form(a);
        out.f = GridFunction::sample_scalar(st, [&](const Point& x) {
            return cplx(std::exp(-x[1]) * ((e + 1.0) * std::cos(x[0]) + std::sin(2.0 * x[0])));
        });
        out.u0 = GridFunction::sample_scalar(shape.spatial, [](const Point& x) { return cplx(std::cos(x[0])); });
        out.exact = GridFunction::sample_scalar(st, [](const Point& x) { return cplx(std::exp(-x[1]) * std::cos(x[0])); });
    } else if (preset == "random") {
        if (d.contains("operator")) out.op = operators::DifferentialOperator::from_json(d["operator"], m.base_dir);
        const int band = p.value("band", 4);
        const auto fiber = static_cast<std::size_t>(out.op.fiber());
        out.f = random_on(st, fiber, band, m.seed);
        if (!is_fullspace(m)) out.u0 = random_on(shape.spatial, fiber, band, m.seed + 1);
    } else {
        throw UsageError("unknown data preset \"" + preset + "\" (heat_mode | heat_cosine | divergence_sine | random)");
    }
    if (out.op.m() != 1) throw UsageError("data presets are one-dimensional; use problem files for m > 1");

    if (p.value("zero", false)) {
        out.f = out.f.zeros_like();
        if (out.u0.rank()) out.u0 = out.u0.zeros_like();
        if (out.exact) out.exact = out.exact->zeros_like();
    }
    out.spec = {d.value("s", 0.5), q_entry(d, "q", 2.0), weights::WeightSystem::parabolic(out.op.m(), out.op.order()), 1.0};
    out.horizon = shape.time.length();
    return out;
}

json report_header(const std::string& command, const Manifest& m) {
    return {{"command", command}, {"manifest_hash", m.hash}, {"seed", m.seed}};
}

}  // namespace parreg::cli
