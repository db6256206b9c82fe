#pragma once

#include <Eigen/Dense>
#include <span>

#include "parreg/grid.hpp"

namespace parreg {

using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

/// Spectral norm of a small dense matrix.
double opnorm(const Matrix& m);

/// Reads an N x N row-major fiber as a matrix.
Matrix fiber_matrix(std::span<const cplx> fiber, std::size_t n);
void store_matrix(const Matrix& m, std::span<cplx> fiber);

/// Matrix exponential (Pade 13 scaling and squaring).
Matrix expm(const Matrix& m);

/// Fiber-wise application of a matrix to a vector-valued fiber.
void apply_in_place(const Matrix& m, std::span<cplx> fiber);

}  // namespace parreg
