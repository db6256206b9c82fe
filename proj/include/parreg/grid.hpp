#pragma once

#include <complex>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace parreg {

using cplx = std::complex<double>;

/// One axis of a uniform grid.
///
/// Periodic axes sample [origin, origin + n*step) and wrap around.
/// Non-periodic axes sample origin + j*step for j = 0..n-1; a half-line
/// axis is a non-periodic axis with origin 0.
struct Axis {
    std::size_t n = 1;
    double origin = 0.0;
    double step = 1.0;
    bool periodic = true;

    static Axis periodic_box(std::size_t n, double length, double origin = 0.0);
    static Axis half_line(std::size_t n, double step);
    static Axis interval(std::size_t n, double lo, double hi);

    [[nodiscard]] double coord(std::size_t i) const { return origin + static_cast<double>(i) * step; }
    /// Period for periodic axes, covered extent (n-1)*step otherwise.
    [[nodiscard]] double length() const;
    /// Trapezoid weight on non-periodic axes, midpoint weight on periodic ones.
    [[nodiscard]] double weight(std::size_t i) const;

    bool operator==(const Axis&) const = default;
};

using Point = std::vector<double>;

/// Complex vector-valued samples on a uniform grid.
///
/// Layout is row-major over the axes with the fiber index innermost, so
/// value(node, c) lives at node * fiber + c.
class GridFunction {
public:
    GridFunction() = default;
    GridFunction(std::vector<Axis> axes, std::size_t fiber);
    GridFunction(std::vector<Axis> axes, std::size_t fiber, std::vector<cplx> values);

    /// Samples f at every node; f writes `fiber` components.
    static GridFunction sample(std::vector<Axis> axes, std::size_t fiber,
                               const std::function<void(const Point&, std::span<cplx>)>& f);
    static GridFunction sample_scalar(std::vector<Axis> axes,
                                      const std::function<cplx(const Point&)>& f);

    [[nodiscard]] const std::vector<Axis>& axes() const { return axes_; }
    [[nodiscard]] const Axis& axis(std::size_t k) const { return axes_.at(k); }
    [[nodiscard]] std::size_t rank() const { return axes_.size(); }
    [[nodiscard]] std::size_t fiber() const { return fiber_; }
    [[nodiscard]] std::size_t node_count() const { return nodes_; }
    [[nodiscard]] std::size_t size() const { return values_.size(); }

    /// True when the last axis is a non-periodic axis starting at 0.
    [[nodiscard]] bool is_half_line() const;

    [[nodiscard]] std::span<cplx> values() { return values_; }
    [[nodiscard]] std::span<const cplx> values() const { return values_; }
    [[nodiscard]] std::vector<cplx>& data() { return values_; }
    [[nodiscard]] const std::vector<cplx>& data() const { return values_; }

    cplx& operator()(std::size_t node, std::size_t c = 0) { return values_[node * fiber_ + c]; }
    const cplx& operator()(std::size_t node, std::size_t c = 0) const { return values_[node * fiber_ + c]; }
    [[nodiscard]] std::span<const cplx> at_node(std::size_t node) const {
        return std::span<const cplx>(values_).subspan(node * fiber_, fiber_);
    }
    [[nodiscard]] std::span<cplx> at_node(std::size_t node) {
        return std::span<cplx>(values_).subspan(node * fiber_, fiber_);
    }

    [[nodiscard]] std::vector<std::size_t> shape() const;
    [[nodiscard]] std::vector<std::size_t> strides() const;
    [[nodiscard]] std::vector<std::size_t> multi_index(std::size_t node) const;
    [[nodiscard]] std::size_t flat_index(std::span<const std::size_t> idx) const;
    [[nodiscard]] Point coords(std::size_t node) const;
    /// Product quadrature weight of a node.
    [[nodiscard]] double weight(std::size_t node) const;

    [[nodiscard]] bool same_grid(const GridFunction& other) const;

    GridFunction& operator+=(const GridFunction& o);
    GridFunction& operator-=(const GridFunction& o);
    GridFunction& operator*=(cplx s);
    friend GridFunction operator+(GridFunction a, const GridFunction& b) { return a += b; }
    friend GridFunction operator-(GridFunction a, const GridFunction& b) { return a -= b; }
    friend GridFunction operator*(cplx s, GridFunction a) { return a *= s; }

    /// Pointwise product with a scalar field on the same grid (fiber 1).
    [[nodiscard]] GridFunction times_scalar_field(const GridFunction& field) const;
    /// Extracts fiber component c.
    [[nodiscard]] GridFunction component(std::size_t c) const;
    [[nodiscard]] GridFunction zeros_like() const { return GridFunction(axes_, fiber_); }
    /// Largest fiber-Euclidean magnitude over the nodes.
    [[nodiscard]] double max_abs() const;

private:
    std::vector<Axis> axes_;
    std::size_t fiber_ = 1;
    std::size_t nodes_ = 0;
    std::vector<cplx> values_;
};

/// Euclidean norm of one fiber vector.
double fiber_norm(std::span<const cplx> v);

/// Spatial slice of a space-time grid at time index it (last axis).
GridFunction time_slice(const GridFunction& u, std::size_t it);
/// Writes a spatial slice into time index it.
void set_time_slice(GridFunction& u, std::size_t it, const GridFunction& slice);
/// Spatial axes of a space-time grid (all but the last).
std::vector<Axis> spatial_axes(const GridFunction& u);

}  // namespace parreg
