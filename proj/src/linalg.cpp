#include "parreg/linalg.hpp"

#include <unsupported/Eigen/MatrixFunctions>

namespace parreg {

double opnorm(const Matrix& m) {
    if (m.size() == 0) return 0.0;
    if (m.rows() == 1 && m.cols() == 1) return std::abs(m(0, 0));
    Eigen::JacobiSVD<Matrix> svd(m);
    return svd.singularValues()(0);
}

Matrix fiber_matrix(std::span<const cplx> fiber, std::size_t n) {
    Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = fiber[i * n + j];
    return m;
}

void store_matrix(const Matrix& m, std::span<cplx> fiber) {
    const auto n = static_cast<std::size_t>(m.rows());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) fiber[i * n + j] = m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
}

Matrix expm(const Matrix& m) {
    if (m.rows() == 1) {
        Matrix e(1, 1);
        e(0, 0) = std::exp(m(0, 0));
        return e;
    }
    return m.exp();
}

void apply_in_place(const Matrix& m, std::span<cplx> fiber) {
    if (m.rows() == 1) {
        fiber[0] *= m(0, 0);
        return;
    }
    Vector v = Eigen::Map<const Vector>(fiber.data(), static_cast<Eigen::Index>(fiber.size()));
    Eigen::Map<Vector>(fiber.data(), static_cast<Eigen::Index>(fiber.size())) = m * v;
}

}  // namespace parreg
