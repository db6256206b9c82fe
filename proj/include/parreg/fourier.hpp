#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "parreg/grid.hpp"
#include "parreg/linalg.hpp"
#include "parreg/operators.hpp"
#include "parreg/report.hpp"
#include "parreg/spaces.hpp"
#include "parreg/weights.hpp"

namespace parreg::fourier {

using SymbolOfK = std::function<Matrix(const Point& k)>;

/// A symbol materialized on every DFT node of a periodic grid.
class MultiplierOperator {
public:
    MultiplierOperator(std::vector<Axis> axes, std::size_t n, const SymbolOfK& symbol,
                       weights::WeightSystem weight = weights::WeightSystem::trivial(1), double eta = 1.0);

    [[nodiscard]] const std::vector<Axis>& axes() const { return axes_; }
    [[nodiscard]] std::size_t fiber() const { return n_; }
    [[nodiscard]] const weights::WeightSystem& weight() const { return weight_; }
    [[nodiscard]] double eta() const { return eta_; }
    [[nodiscard]] const Matrix& at(std::size_t node) const { return symbol_[node]; }
    [[nodiscard]] bool invertible() const { return invertible_; }

    /// Pointwise product a(k) b(k).
    [[nodiscard]] MultiplierOperator compose(const MultiplierOperator& b) const;
    /// Pointwise inverse. Throws EllipticityError naming the first node whose
    /// condition number exceeds 1e12.
    [[nodiscard]] MultiplierOperator inverse() const;

private:
    MultiplierOperator() = default;
    std::vector<Axis> axes_;
    std::size_t n_ = 1;
    std::vector<Matrix> symbol_;
    weights::WeightSystem weight_ = weights::WeightSystem::trivial(1);
    double eta_ = 1.0;
    bool invertible_ = false;
};

/// F^{-1} a F u with per-node matrix multiplication.
GridFunction apply_multiplier(const MultiplierOperator& a, const GridFunction& u);

/// J_eta^z u with symbol Lambda(k, eta)^z under spec.weight.
GridFunction lift(const GridFunction& u, double z, const spaces::NormSpec& spec);

/// (eta + A(xi)) with the full constant-coefficient symbol of A.
Matrix shifted_symbol(const operators::DifferentialOperator& a, std::span<const double> xi, double eta);

/// Solves (d_t + eta + A) u = f on a fully periodic space-time grid by
/// dividing by i tau + eta + sigma(xi) (d_t has symbol i tau under the
/// exp(-i k x) forward transform). The report carries the relative
/// residual and the window length in decay lengths.
SolveReport solve_fullspace_parabolic(const operators::DifferentialOperator& a, const GridFunction& f, double eta);

/// (d_t + eta + A) u computed spectrally on a periodic or half-line space-time grid.
GridFunction parabolic_apply(const operators::DifferentialOperator& a, const GridFunction& u, double eta);

/// (lambda + eta + A)^{-1} u on a periodic spatial grid.
GridFunction resolvent_apply(const operators::DifferentialOperator& a, cplx lambda, const GridFunction& u, double eta);

/// (|lambda| + eta) ||(lambda + eta + A)^{-1}||_{L2 -> L2} on the grid, which
/// by Plancherel is the max over DFT nodes of the symbol's operator norm.
double resolvent_decay_product(const operators::DifferentialOperator& a, cplx lambda, const std::vector<Axis>& axes,
                               double eta);

/// exp(-t (eta + A)) u on a periodic spatial grid.
GridFunction semigroup_step(const operators::DifferentialOperator& a, double t, const GridFunction& u, double eta);

/// Duhamel integral int_{-inf}^t exp(-(t-s)(eta+A)) f(s) ds for f periodic in
/// time, by an exponential integrator with piecewise linear f (second order).
/// The periodic steady state is obtained from one sweep and a closing solve.
GridFunction convolution_solve(const operators::DifferentialOperator& a, const GridFunction& f, double eta);

/// Causal solve of (d_t + eta + A) v = g on a half-line space-time grid with
/// v(0) = v0 (zero when v0 is null). This is the restriction of the full-line
/// convolution applied to the zero extension of g. Exponential integrator with
/// a local polynomial of the given degree through the samples of g, so the
/// error is O(dt^{degree+1}). Needs degree + 1 time samples.
GridFunction causal_solve(const operators::DifferentialOperator& a, const GridFunction& g, double eta,
                          const GridFunction* v0 = nullptr, int degree = 3);

/// causal_solve with the per-mode exponentials precomputed, for repeated
/// solves with one operator on one grid.
class CausalPropagator {
public:
    CausalPropagator(const operators::DifferentialOperator& a, std::vector<Axis> spatial, Axis time, double eta,
                     int degree = 3);
    [[nodiscard]] GridFunction apply(const GridFunction& g, const GridFunction* v0 = nullptr) const;

private:
    struct Mode {
        Matrix e;
        // w[o][i]: weight of sample i of the stencil at offset o
        std::vector<std::vector<Matrix>> w;
    };
    std::vector<Axis> spatial_;
    Axis time_;
    std::size_t n_;
    int degree_;
    std::vector<Mode> modes_;
};

/// (eta + A) u by spatial DFT for a constant-coefficient A; u may carry
/// trailing (time) axes that are left untouched.
GridFunction shifted_apply(const operators::DifferentialOperator& a, const GridFunction& u, double eta);

/// Time window in units of the slowest decay length 1/(eta + min Re sigma).
double window_decay_lengths(const operators::DifferentialOperator& a, const GridFunction& f, double eta);

/// ||u||_{(s+r)/r; eta^{1/r}} / ||f||_{s/r; eta^{1/r}} on r-parabolic weights.
double mr_ratio(const GridFunction& u, const GridFunction& f, int r, double s, double q, double eta);

}  // namespace parreg::fourier
