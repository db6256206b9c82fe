#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <vector>

#include <json.hpp>

#include "parreg/grid.hpp"
#include "parreg/linalg.hpp"
#include "parreg/weights.hpp"

namespace parreg::operators {

using Multiindex = std::vector<int>;

/// A coefficient a_alpha: a constant N x N matrix or a field of N x N
/// matrices (row-major fiber of length N^2). Time-dependent fields live on a
/// space-time grid whose last axis is time.
struct Coefficient {
    Matrix constant;
    std::optional<GridFunction> field;
    bool time_dependent = false;

    [[nodiscard]] bool is_constant() const { return !field.has_value(); }
    /// Value at a spatial node and time index (ignored when not applicable).
    [[nodiscard]] Matrix at(std::size_t spatial_node, std::size_t time_index = 0) const;
};

/// A = sum_alpha a_alpha D^alpha with D = -i d. Applying A to exp(i x.xi)
/// with frozen coefficients multiplies it by sum_alpha a_alpha xi^alpha.
class DifferentialOperator {
public:
    /// m spatial dimensions, even order r >= 2, fiber dimension N.
    DifferentialOperator(int m, int r, int n, double sigma_bar = 1.0);

    /// -Delta on R^m acting on C^N (sign = -1 gives +Delta).
    static DifferentialOperator laplacian(int m, int n = 1, double sign = 1.0);
    /// Delta^2 on R^m.
    static DifferentialOperator bilaplacian(int m, int n = 1);
    /// -sum_ij d_i(a_ij d_j .) for a constant symmetric matrix a.
    static DifferentialOperator divergence_form(const Eigen::MatrixXd& a);
    /// -sum_ij d_i(a_ij(x) d_j .) with a field of m x m matrices (fiber m^2,
    /// row-major) on a spatial grid. Lower-order terms come from the spectral
    /// or finite-difference derivatives of the field.
    static DifferentialOperator divergence_form(const GridFunction& a);

    void set(const Multiindex& alpha, const Matrix& value);
    void set(const Multiindex& alpha, cplx value);
    void set(const Multiindex& alpha, GridFunction field, bool time_dependent = false);
    /// Adds to an existing constant coefficient (or sets it).
    void add(const Multiindex& alpha, const Matrix& value);

    [[nodiscard]] int m() const { return m_; }
    [[nodiscard]] int order() const { return r_; }
    [[nodiscard]] int fiber() const { return n_; }
    [[nodiscard]] double sigma_bar() const { return sigma_bar_; }
    [[nodiscard]] const std::map<Multiindex, Coefficient>& coeffs() const { return coeffs_; }
    [[nodiscard]] bool is_constant() const;
    [[nodiscard]] bool is_time_dependent() const;
    /// Spatial grid of the first field coefficient, if any.
    [[nodiscard]] std::optional<std::vector<Axis>> spatial_grid() const;
    /// Number of time samples of time-dependent fields (1 otherwise).
    [[nodiscard]] std::size_t time_samples() const;

    /// Constant-coefficient operator with every coefficient evaluated at the node.
    [[nodiscard]] DifferentialOperator frozen(std::size_t spatial_node = 0, std::size_t time_index = 0) const;
    [[nodiscard]] DifferentialOperator principal_part() const;
    [[nodiscard]] DifferentialOperator lower_order_part() const;
    /// Spatial slice of a time-dependent operator.
    [[nodiscard]] DifferentialOperator at_time(std::size_t time_index) const;
    /// sum of sup-norms |a_alpha|, the constant written fraktur a in the theory.
    [[nodiscard]] double coefficient_bound(bool principal_only = true) const;

    /// Applies A to a spatial or space-time grid function (derivatives along
    /// the first m axes only).
    [[nodiscard]] GridFunction apply(const GridFunction& u, int fd_accuracy = 4) const;

    [[nodiscard]] nlohmann::json to_json() const;
    /// Reads {"m","r","N","sigma_bar","coeffs":[{"alpha":[..],"value":..}|{"alpha":[..],"grid":"file"}],
    /// "time_dependent"}. Grid paths are resolved against base_dir.
    static DifferentialOperator from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});

    DifferentialOperator& operator*=(cplx s);

private:
    void check_alpha(const Multiindex& alpha) const;

    int m_;
    int r_;
    int n_;
    double sigma_bar_;
    std::map<Multiindex, Coefficient> coeffs_;
};

/// xi^alpha for a real covector.
double monomial(std::span<const double> xi, const Multiindex& alpha);

/// sum_{|alpha| = r} a_alpha(point) xi^alpha. Throws ArgumentError when a
/// field coefficient is present and no node is given.
Matrix principal_symbol(const DifferentialOperator& a, std::span<const double> xi,
                        std::optional<std::size_t> node = std::nullopt, std::size_t time_index = 0);
/// Full symbol sum_alpha a_alpha xi^alpha of the operator frozen at a node.
Matrix full_symbol(const DifferentialOperator& a, std::span<const double> xi,
                   std::optional<std::size_t> node = std::nullopt, std::size_t time_index = 0);

/// -i tau + eta + sigma_A(xi) of a constant-coefficient operator.
Matrix parabolic_symbol(const DifferentialOperator& a, std::span<const double> xi, double tau, double eta);

/// Unit covectors: {+-1} for m = 1, equally spaced angles for m = 2, a
/// Fibonacci sphere for m = 3.
std::vector<std::vector<double>> cosphere_samples(int m, std::size_t count);

struct EllipticityOptions {
    std::size_t sphere_samples = 256;
    std::size_t point_stride = 4;   // every k-th spatial node of field coefficients
    bool full_grid = false;
    std::size_t time_points = 9;    // Chebyshev points in time for t-dependent fields
    double tol = 1e-9;
};

struct EllipticityReport {
    bool is_elliptic = false;
    double epsilon = 0.0;
    double kappa = 0.0;
    std::vector<double> worst_xi;
    std::size_t worst_node = 0;
    std::size_t worst_time = 0;
    std::size_t samples = 0;
    /// strong reports only: normal epsilon at the same samples and whether
    /// strong <= normal + tol held.
    std::optional<double> normal_epsilon;
    bool consistent = true;
    [[nodiscard]] nlohmann::json to_json() const;
};

/// min over sampled points and unit covectors of min Re spec sigma_A.
EllipticityReport check_normal_ellipticity(const DifferentialOperator& a, const EllipticityOptions& opt = {});
/// min over samples of the smallest eigenvalue of the Hermitian part of sigma_A.
EllipticityReport check_strong_ellipticity(const DifferentialOperator& a, const EllipticityOptions& opt = {});

struct ResolventReport {
    double c_measured = 0.0;
    bool finite = true;
    bool singular = false;
    std::vector<double> worst_xi;
    double worst_eta = 0.0;
    std::size_t samples = 0;
    [[nodiscard]] nlohmann::json to_json() const;
};

/// Random zeta = (xi, eta) samples with log-uniform magnitude in
/// [10^-3, 10^3], directions uniform on the half sphere eta >= 0.
std::vector<weights::AugmentedPoint> resolvent_samples(int m, std::size_t count, unsigned seed);

/// max over samples of |(lambda + a(zeta))^{-1}| (Lambda^r(zeta) + |lambda|)
/// with a(zeta) = eta^r + sigma_A(xi) and Lambda = (|xi|^2 + eta^2)^{1/2}.
/// A nearly singular lambda + a(zeta) (condition > 1e12) marks the report singular.
ResolventReport resolvent_bound_check(const DifferentialOperator& a, cplx lambda,
                                      const std::vector<weights::AugmentedPoint>& zeta);

}  // namespace parreg::operators
