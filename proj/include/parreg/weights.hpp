#pragma once

#include <complex>
#include <functional>
#include <json.hpp>
#include <optional>
#include <vector>

#include "parreg/grid.hpp"
#include "parreg/linalg.hpp"

namespace parreg::weights {

/// Weight system [ell, dims, weights] with derived nu = lcm(weights) and the
/// per-coordinate weight vector omega.
class WeightSystem {
public:
    WeightSystem(std::vector<int> dims, std::vector<int> weights);

    /// [d, 1, 1]: every coordinate its own cluster of weight 1.
    static WeightSystem trivial(int d);
    /// [2, (m, 1), (1, r)]: m space coordinates of weight 1, time of weight r.
    static WeightSystem parabolic(int m, int r);

    [[nodiscard]] int ell() const { return static_cast<int>(dims_.size()); }
    [[nodiscard]] const std::vector<int>& dims() const { return dims_; }
    [[nodiscard]] const std::vector<int>& weights() const { return weights_; }
    [[nodiscard]] int d() const { return d_; }
    [[nodiscard]] int nu() const { return nu_; }
    [[nodiscard]] const std::vector<int>& omega() const { return omega_; }
    [[nodiscard]] int abs_omega() const { return abs_omega_; }
    /// First coordinate index of cluster i.
    [[nodiscard]] int offset(int i) const { return offsets_.at(static_cast<std::size_t>(i)); }
    /// Weight of the last cluster (the time weight for parabolic systems).
    [[nodiscard]] int nu_last() const { return weights_.back(); }
    /// Multiindex dot omega.
    [[nodiscard]] int dot(const std::vector<int>& alpha) const;

    [[nodiscard]] nlohmann::json to_json() const;
    static WeightSystem from_json(const nlohmann::json& j);

    bool operator==(const WeightSystem&) const = default;

private:
    std::vector<int> dims_;
    std::vector<int> weights_;
    std::vector<int> offsets_;
    std::vector<int> omega_;
    int d_ = 0;
    int nu_ = 1;
    int abs_omega_ = 0;
};

/// Point zeta = (xi, eta) of the augmented space R^d x [0, inf).
struct AugmentedPoint {
    std::vector<double> xi;
    double eta = 0.0;
};

AugmentedPoint dilate(const WeightSystem& w, double t, const AugmentedPoint& z);
double quasinorm(const WeightSystem& w, const AugmentedPoint& z);
/// Quasinorm with the parameter split off: Lambda(xi, eta).
double quasinorm(const WeightSystem& w, std::span<const double> xi, double eta);
AugmentedPoint lambda_retract(const WeightSystem& w, const AugmentedPoint& z);

/// Quasi-uniform samples of [Lambda = 1]: a grid over the simplex of
/// cluster shares times per-cluster directions (+-1, circle angles, or a
/// Fibonacci sphere). n is the resolution per angular dimension.
std::vector<AugmentedPoint> unit_level_samples(const WeightSystem& w, int n, bool include_eta = true);

/// All multiindices alpha in N^d with alpha . omega <= budget.
std::vector<std::vector<int>> multiindices(const WeightSystem& w, int budget);

using SymbolFn = std::function<Matrix(const AugmentedPoint&)>;

struct HzOptions {
    int samples = 32;
    /// Derivative budget; defaults to 2|omega|.
    std::optional<int> max_order;
    bool include_eta = true;
    double richardson_tol = 1e-3;
};

struct SymbolClassReport {
    double h_norm = 0.0;
    std::complex<double> z;
    int max_order_checked = 0;
    int sample_count = 0;
    /// Samples x multiindices whose step-halving check exceeded the tolerance.
    int richardson_flags = 0;
    [[nodiscard]] nlohmann::json to_json() const;
};

/// Finite-difference estimate of d^alpha_xi a at zeta with order-adapted
/// steps and 4th-order central stencils. With `halved` the steps are halved.
Matrix symbol_derivative(const SymbolFn& a, const WeightSystem& w, const AugmentedPoint& zeta,
                         const std::vector<int>& alpha, bool halved = false);

SymbolClassReport estimate_hz_norm(const SymbolFn& a, std::complex<double> z, const WeightSystem& w,
                                   const HzOptions& opt = {});

struct MEtaReport {
    double norm = 0.0;
    /// True when the max is attained in the outer tenth of the grid, the
    /// signature of a symbol that grows with the grid extent.
    bool attained_at_edge = false;
    std::vector<int> worst_alpha;
};

/// Sampled M_eta norm of a symbol tabulated on a non-periodic frequency grid
/// (fiber N*N, row-major matrix per node).
MEtaReport m_eta_report(const GridFunction& a_eta, const WeightSystem& w, double eta,
                        std::optional<int> max_order = std::nullopt);
double m_eta_norm(const GridFunction& a_eta, const WeightSystem& w, double eta);

/// Tabulates a symbol xi -> matrix on a non-periodic frequency grid.
GridFunction tabulate_symbol(std::vector<Axis> axes, std::size_t n,
                             const std::function<Matrix(const Point&)>& a);

}  // namespace parreg::weights
