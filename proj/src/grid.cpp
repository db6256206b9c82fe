#include "parreg/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "parreg/errors.hpp"

namespace parreg {

Axis Axis::periodic_box(std::size_t n, double length, double origin) {
    if (n == 0 || !(length > 0.0)) throw ArgumentError("periodic axis needs n >= 1 and positive length");
    return Axis{n, origin, length / static_cast<double>(n), true};
}

Axis Axis::half_line(std::size_t n, double step) {
    if (n < 2 || !(step > 0.0)) throw ArgumentError("half-line axis needs n >= 2 and positive step");
    return Axis{n, 0.0, step, false};
}

Axis Axis::interval(std::size_t n, double lo, double hi) {
    if (n < 2 || !(hi > lo)) throw ArgumentError("interval axis needs n >= 2 and hi > lo");
    return Axis{n, lo, (hi - lo) / static_cast<double>(n - 1), false};
}

double Axis::length() const {
    return periodic ? static_cast<double>(n) * step : static_cast<double>(n - 1) * step;
}

double Axis::weight(std::size_t i) const {
    if (periodic || n == 1) return step;
    return (i == 0 || i + 1 == n) ? 0.5 * step : step;
}

GridFunction::GridFunction(std::vector<Axis> axes, std::size_t fiber)
    : axes_(std::move(axes)), fiber_(fiber) {
    if (fiber_ == 0) throw ArgumentError("fiber dimension must be positive");
    nodes_ = 1;
    for (const auto& a : axes_) {
        if (a.n == 0) throw ArgumentError("axis with zero samples");
        nodes_ *= a.n;
    }
    values_.assign(nodes_ * fiber_, cplx{0.0, 0.0});
}

GridFunction::GridFunction(std::vector<Axis> axes, std::size_t fiber, std::vector<cplx> values)
    : GridFunction(std::move(axes), fiber) {
    if (values.size() != values_.size())
        throw ShapeError("value count " + std::to_string(values.size()) + " does not match grid size " +
                         std::to_string(values_.size()));
    values_ = std::move(values);
}

GridFunction GridFunction::sample(std::vector<Axis> axes, std::size_t fiber,
                                  const std::function<void(const Point&, std::span<cplx>)>& f) {
    GridFunction g(std::move(axes), fiber);
    for (std::size_t node = 0; node < g.nodes_; ++node) f(g.coords(node), g.at_node(node));
    return g;
}

GridFunction GridFunction::sample_scalar(std::vector<Axis> axes, const std::function<cplx(const Point&)>& f) {
    GridFunction g(std::move(axes), 1);
    for (std::size_t node = 0; node < g.nodes_; ++node) g.values_[node] = f(g.coords(node));
    return g;
}

bool GridFunction::is_half_line() const {
    return !axes_.empty() && !axes_.back().periodic && axes_.back().origin == 0.0;
}

std::vector<std::size_t> GridFunction::shape() const {
    std::vector<std::size_t> s;
    s.reserve(axes_.size());
    for (const auto& a : axes_) s.push_back(a.n);
    return s;
}

std::vector<std::size_t> GridFunction::strides() const {
    std::vector<std::size_t> s(axes_.size(), 1);
    for (std::size_t k = axes_.size(); k-- > 1;) s[k - 1] = s[k] * axes_[k].n;
    return s;
}

std::vector<std::size_t> GridFunction::multi_index(std::size_t node) const {
    std::vector<std::size_t> idx(axes_.size());
    for (std::size_t k = axes_.size(); k-- > 0;) {
        idx[k] = node % axes_[k].n;
        node /= axes_[k].n;
    }
    return idx;
}

std::size_t GridFunction::flat_index(std::span<const std::size_t> idx) const {
    std::size_t node = 0;
    for (std::size_t k = 0; k < axes_.size(); ++k) node = node * axes_[k].n + idx[k];
    return node;
}

Point GridFunction::coords(std::size_t node) const {
    Point x(axes_.size());
    for (std::size_t k = axes_.size(); k-- > 0;) {
        x[k] = axes_[k].coord(node % axes_[k].n);
        node /= axes_[k].n;
    }
    return x;
}

double GridFunction::weight(std::size_t node) const {
    double w = 1.0;
    for (std::size_t k = axes_.size(); k-- > 0;) {
        w *= axes_[k].weight(node % axes_[k].n);
        node /= axes_[k].n;
    }
    return w;
}

bool GridFunction::same_grid(const GridFunction& other) const {
    return axes_ == other.axes_ && fiber_ == other.fiber_;
}

GridFunction& GridFunction::operator+=(const GridFunction& o) {
    if (!same_grid(o)) throw ShapeError("grid mismatch in +=");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
    return *this;
}

GridFunction& GridFunction::operator-=(const GridFunction& o) {
    if (!same_grid(o)) throw ShapeError("grid mismatch in -=");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= o.values_[i];
    return *this;
}

GridFunction& GridFunction::operator*=(cplx s) {
    for (auto& v : values_) v *= s;
    return *this;
}

GridFunction GridFunction::times_scalar_field(const GridFunction& field) const {
    if (field.axes_ != axes_ || field.fiber_ != 1) throw ShapeError("scalar field grid mismatch");
    GridFunction out = *this;
    for (std::size_t node = 0; node < nodes_; ++node)
        for (std::size_t c = 0; c < fiber_; ++c) out.values_[node * fiber_ + c] *= field.values_[node];
    return out;
}

GridFunction GridFunction::component(std::size_t c) const {
    if (c >= fiber_) throw ArgumentError("component index out of range");
    GridFunction out(axes_, 1);
    for (std::size_t node = 0; node < nodes_; ++node) out.values_[node] = values_[node * fiber_ + c];
    return out;
}

double GridFunction::max_abs() const {
    double m = 0.0;
    for (std::size_t node = 0; node < nodes_; ++node) m = std::max(m, fiber_norm(at_node(node)));
    return m;
}

double fiber_norm(std::span<const cplx> v) {
    double s = 0.0;
    for (const auto& z : v) s += std::norm(z);
    return std::sqrt(s);
}

std::vector<Axis> spatial_axes(const GridFunction& u) {
    if (u.rank() < 2) throw ShapeError("space-time grid needs at least two axes");
    return {u.axes().begin(), u.axes().end() - 1};
}

GridFunction time_slice(const GridFunction& u, std::size_t it) {
    GridFunction s(spatial_axes(u), u.fiber());
    const std::size_t nt = u.axes().back().n;
    if (it >= nt) throw ArgumentError("time index out of range");
    const std::size_t f = u.fiber();
    for (std::size_t node = 0; node < s.node_count(); ++node)
        for (std::size_t c = 0; c < f; ++c) s(node, c) = u((node * nt + it), c);
    return s;
}

void set_time_slice(GridFunction& u, std::size_t it, const GridFunction& slice) {
    const std::size_t nt = u.axes().back().n;
    if (slice.node_count() * nt != u.node_count() || slice.fiber() != u.fiber())
        throw ShapeError("slice does not fit the space-time grid");
    const std::size_t f = u.fiber();
    for (std::size_t node = 0; node < slice.node_count(); ++node)
        for (std::size_t c = 0; c < f; ++c) u(node * nt + it, c) = slice(node, c);
}

}  // namespace parreg
