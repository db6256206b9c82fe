#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "parreg/grid.hpp"

namespace parreg::fd {

/// Fornberg weights: w[k][j] approximates the k-th derivative at z from
/// samples at x[j], for k = 0..max_order.
std::vector<std::vector<double>> fornberg(double z, std::span<const double> x, int max_order);

/// Weights for the order-th derivative at integer offset z from nodes 0..n-1
/// on a unit grid.
std::vector<double> unit_weights(double z, std::size_t n, int order);

/// order-th derivative along one non-periodic axis with a stencil of
/// order + accuracy points, centered where possible and clamped at the ends.
GridFunction derivative_along(const GridFunction& u, std::size_t axis, int order, int accuracy = 4);

/// order-th derivative at sample 0 of the last axis using one-sided
/// differences of the given accuracy. Result lives on the spatial grid.
GridFunction one_sided_at_start(const GridFunction& u, int order, int accuracy);

}  // namespace parreg::fd
