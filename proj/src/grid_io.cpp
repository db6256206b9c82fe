#include "parreg/grid_io.hpp"

#include <fstream>

#include "parreg/errors.hpp"

namespace parreg::io {

json axis_to_json(const Axis& a) {
    return {{"n", a.n}, {"origin", a.origin}, {"step", a.step}, {"periodic", a.periodic}};
}

Axis axis_from_json(const json& j) {
    Axis a;
    a.n = j.at("n").get<std::size_t>();
    a.origin = j.value("origin", 0.0);
    a.step = j.at("step").get<double>();
    a.periodic = j.value("periodic", true);
    if (a.n == 0 || !(a.step > 0.0)) throw ArgumentError("axis needs n > 0 and step > 0");
    return a;
}

json grid_to_json(const GridFunction& u) {
    json axes = json::array();
    for (const auto& a : u.axes()) axes.push_back(axis_to_json(a));
    std::vector<double> re;
    std::vector<double> im;
    re.reserve(u.size());
    im.reserve(u.size());
    for (const cplx& v : u.data()) {
        re.push_back(v.real());
        im.push_back(v.imag());
    }
    return {{"axes", axes}, {"fiber", u.fiber()}, {"re", re}, {"im", im}};
}

GridFunction grid_from_json(const json& j) {
    try {
        std::vector<Axis> axes;
        for (const auto& a : j.at("axes")) axes.push_back(axis_from_json(a));
        const auto fiber = j.value("fiber", std::size_t{1});
        const auto re = j.at("re").get<std::vector<double>>();
        std::vector<double> im = j.contains("im") ? j.at("im").get<std::vector<double>>() : std::vector<double>(re.size());
        if (im.size() != re.size()) throw ShapeError("grid file: re and im lengths differ");
        std::vector<cplx> v(re.size());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = {re[i], im[i]};
        return GridFunction(std::move(axes), fiber, std::move(v));
    } catch (const json::exception& e) {
        throw ArgumentError(std::string("malformed grid document: ") + e.what());
    }
}

json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ArgumentError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ArgumentError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

void write_json(const std::filesystem::path& path, const json& j) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw ArgumentError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

void write_grid(const std::filesystem::path& path, const GridFunction& u) { write_json(path, grid_to_json(u)); }

GridFunction read_grid(const std::filesystem::path& path) { return grid_from_json(read_json(path)); }

}  // namespace parreg::io
