#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "parreg/grid.hpp"

namespace parreg::spectral {

/// Signed angular wavenumbers 2*pi*j/L of a periodic axis in DFT order.
/// The Nyquist bin of an even-length axis is reported as -n/2.
std::vector<double> wavenumbers(const Axis& axis);

/// True for the Nyquist bin of an even-length periodic axis.
bool is_nyquist(const Axis& axis, std::size_t j);

/// In-place DFT over the axes selected by mask (all periodic axes when empty).
/// forward uses the kernel exp(-i k x); inverse applies the 1/n factor.
void forward(GridFunction& u, std::vector<bool> mask = {});
void inverse(GridFunction& u, std::vector<bool> mask = {});

/// Wavenumber vector of frequency node `node` (all axes must be periodic).
Point frequency(const GridFunction& u, std::size_t node);

/// Applies a scalar multiplier m(k) over all axes; all axes must be periodic.
GridFunction apply_scalar(const GridFunction& u, const std::function<cplx(const Point&)>& m);

/// Partial derivative d^alpha u. Periodic axes are differentiated spectrally
/// (Nyquist mode dropped for odd orders); non-periodic axes use finite
/// differences of the given accuracy.
GridFunction derivative(const GridFunction& u, std::span<const int> alpha, int fd_accuracy = 4);

/// Trigonometric interpolant of a function on a fully periodic grid; exact
/// at the nodes. The Nyquist bin is split symmetrically (cosine).
class TrigInterpolant {
public:
    explicit TrigInterpolant(const GridFunction& u);
    /// Fiber values at an arbitrary point.
    [[nodiscard]] std::vector<cplx> operator()(const Point& p) const;

private:
    GridFunction hat_;
};

/// Band-limited random field: modes |k_j| <= kmax on every axis, seeded.
GridFunction random_band_limited(std::vector<Axis> axes, std::size_t fiber, int kmax, unsigned seed);

}  // namespace parreg::spectral
