#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "parreg/cauchy.hpp"
#include "parreg/fourier.hpp"
#include "parreg/grid.hpp"
#include "parreg/operators.hpp"
#include "parreg/report.hpp"
#include "parreg/spaces.hpp"

namespace parreg::localize {

/// Polynomial smoothstep S_{order-1}: 0 for x <= 0, 1 for x >= 1, with
/// order - 1 vanishing derivatives at both ends.
double smoothstep(double x, int order);

/// Radial retraction onto the sup-norm cube of radius delta.
Point radial_retraction(const Point& d, double delta);

/// Charts of scale delta on a periodic box: chart z is centred at
/// origin + delta z and the bumps are products over the axes of a profile in
/// |x_k - c_k| / delta (plateau up to 1/2, zero beyond 0.85; chi is 1 up to
/// 0.85 and zero beyond 0.98).
struct LocalizationSystem {
    double delta = 0.0;
    std::size_t cells = 1;
    int bump_order = 5;
    std::vector<Axis> axes;
    std::vector<std::vector<long>> charts;
    std::vector<GridFunction> pi;
    std::vector<GridFunction> chi;

    [[nodiscard]] std::size_t size() const { return charts.size(); }
    [[nodiscard]] Point center(std::size_t k) const;
    [[nodiscard]] std::size_t center_node(std::size_t k) const;
    /// Minimal-image displacement x - center(k).
    [[nodiscard]] Point displacement(std::size_t k, const Point& x) const;
    /// max over nodes of |sum pi^2 - 1|.
    [[nodiscard]] double partition_defect() const;
    [[nodiscard]] nlohmann::json to_json() const;
};

/// delta must split every axis into a whole number of cells, each holding
/// at least 4 nodes. Throws ConfigurationError otherwise.
LocalizationSystem build_localization(const std::vector<Axis>& axes, double delta, int bump_order = 5);
/// Same with delta = length / cells.
LocalizationSystem build_localization_cells(const std::vector<Axis>& axes, std::size_t cells, int bump_order = 5);

/// a(center + h_delta(x - center)) per chart. Points off the grid are
/// evaluated with the trigonometric interpolant of a.
struct FrozenCoefficientField {
    double delta = 0.0;
    std::vector<GridFunction> fields;
    std::vector<Point> centers;
    /// sup_x |frozen(x) - a(center)| per chart (operator norm for matrix fibers).
    std::vector<double> deviation;
    /// max of the deviations, the measured modulus at scale delta.
    double omega = 0.0;
    /// max over charts of |frozen - a| on the chart's own cube (zero up to rounding).
    double cell_mismatch = 0.0;
    [[nodiscard]] nlohmann::json to_json() const;
};

/// `matrix_dim` > 0 reads the fiber as a row-major matrix of that size for
/// the deviation norm; otherwise the Euclidean fiber norm is used.
FrozenCoefficientField freeze_coefficients(const GridFunction& a, const LocalizationSystem& loc, int matrix_dim = 0);

using ChartTuple = std::vector<GridFunction>;

/// Pointwise product with a spatial scalar field, broadcast over trailing axes.
GridFunction times_spatial(const GridFunction& field, const GridFunction& u);

/// R u = sum_k pi_k u_k.
GridFunction r_assemble(const LocalizationSystem& loc, const ChartTuple& pieces);
/// R^c u = (pi_k u)_k.
ChartTuple r_decompose(const LocalizationSystem& loc, const GridFunction& u);

/// l_q sum over charts of ||pi_k u|| in the given norm.
double piece_norm(const LocalizationSystem& loc, const GridFunction& u, const spaces::NormSpec& spec);

using LinearMap = std::function<Eigen::VectorXcd(const Eigen::VectorXcd&)>;

struct NeumannOptions {
    double tol = 1e-12;
    int max_iter = 200;
    int probes = 20;
    double max_contraction = 0.5;
    unsigned seed = 7;
    /// Skips the power-iteration check with a known estimate.
    std::optional<double> contraction;
};

struct NeumannReport {
    Eigen::VectorXcd x;
    bool converged = false;
    int iterations = 0;
    double contraction = 0.0;
    std::vector<double> increments;
    /// Ratios of consecutive increments.
    std::vector<double> rates;
    [[nodiscard]] double max_rate() const;
    [[nodiscard]] nlohmann::json to_json() const;
};

/// Power-iteration estimate of ||b a^{-1}|| from a random start, the largest
/// growth factor over `probes` steps.
double contraction_estimate(const LinearMap& a_inv, const LinearMap& b, Eigen::Index dim, int probes, unsigned seed);

/// Solves (a + b) x = rhs by y = rhs - b a^{-1} y, x = a^{-1} y. Throws
/// ContractionError when the estimate exceeds opts.max_contraction; a run
/// that hits max_iter returns with converged = false.
NeumannReport neumann_solve(const LinearMap& a_inv, const LinearMap& b, const Eigen::VectorXcd& rhs,
                            const NeumannOptions& opts = {});

/// A problem carried by chart pieces. Pieces live on per-chart periodic
/// spatial grids (with a trailing time axis in solves); the assembled
/// function lives on a global grid.
struct ChartedSystem {
    std::vector<std::vector<Axis>> grids;
    /// Frozen principal part per chart and its constant centre value.
    std::vector<operators::DifferentialOperator> principal;
    std::vector<operators::DifferentialOperator> centre;
    /// fraktur B on tuples (spatial or space-time).
    std::function<ChartTuple(const ChartTuple&)> remainder;
    /// R^c and R.
    std::function<ChartTuple(const GridFunction&)> decompose;
    std::function<GridFunction(const ChartTuple&)> assemble;
    /// The operator on the global grid.
    std::function<GridFunction(const GridFunction&)> apply;
    int order = 2;
    std::size_t fiber = 1;
    [[nodiscard]] std::size_t size() const { return grids.size(); }
};

/// (d_t + eta + fraktur A_k)^{-1} with zero initial value on each chart: a
/// Neumann series around the centre operator, whose inverse is a cached
/// causal propagator. Inner contraction estimates above 1/2 throw.
class ChartInverse {
public:
    ChartInverse(const ChartedSystem& sys, const Axis& time, double eta, int degree, double tol, int max_iter,
                 unsigned seed);
    [[nodiscard]] GridFunction solve(std::size_t k, const GridFunction& g) const;
    [[nodiscard]] ChartTuple solve_all(const ChartTuple& g) const;
    [[nodiscard]] const std::vector<double>& inner_contraction() const { return inner_; }
    [[nodiscard]] const std::vector<GridFunction>& shapes() const { return shapes_; }

private:
    [[nodiscard]] GridFunction perturb(std::size_t k, const GridFunction& x) const;
    std::vector<operators::DifferentialOperator> principal_;
    std::vector<operators::DifferentialOperator> centre_;
    std::vector<fourier::CausalPropagator> props_;
    std::vector<GridFunction> shapes_;
    std::vector<double> inner_;
    double tol_;
    int max_iter_;
};

/// c1 = max over random band-limited tuples of ||B u||_{L2} / ||u||_{H^{r-1}}.
double remainder_bound(const ChartedSystem& sys, int probes, unsigned seed);

/// max over charts and (strided) nodes of the resolvent constant of the
/// principal part at lambda = 0.
double principal_resolvent_bound(const ChartedSystem& sys, std::size_t samples);

struct ChartedOptions {
    double tol = 1e-11;
    int max_neumann_iter = 200;
    int degree = 5;
    /// Chain entries beyond u0 matched by the initial lift.
    int lift_order = 3;
    unsigned seed = 11;
    bool measure = true;
    int max_retries = 8;
};

struct EtaChoice {
    double eta = 0.0;
    double contraction = 0.0;
    int retries = 0;
    std::shared_ptr<const ChartInverse> inverse;
};

/// Power-iteration check of ||B a^{-1}|| <= 1/2 at eta. Unless `fixed`, a
/// failing eta is multiplied by 4 up to opt.max_retries times; otherwise
/// ContractionError.
EtaChoice choose_eta(const ChartedSystem& sys, const Axis& time, double eta, bool fixed, const ChartedOptions& opt);

/// (d_t + eta + A) u = f, u(0) = u0 on the global grid. The initial value is
/// lifted by the Taylor polynomial of the compatibility chain; the charted
/// problem carries the remainder from zero by the Neumann series for B.
/// constants: remainder_ratio (l_q sums of ||B u_k||_s and ||u_k||_{s+r}).
SolveReport charted_solve(const ChartedSystem& sys, const GridFunction& f, const GridFunction& u0, const EtaChoice& choice,
                          const spaces::NormSpec& spec, const ChartedOptions& opt = {});

/// Chart decomposition of a variable-coefficient operator: per chart the
/// frozen principal part (fraktur A) and the remainder (fraktur B) holding
/// the lower-order terms and the bump commutators, so that
/// A R = R (fraktur A + fraktur B) on chart tuples.
class LocalizedOperator {
public:
    LocalizedOperator(const operators::DifferentialOperator& a, LocalizationSystem loc);

    [[nodiscard]] const LocalizationSystem& localization() const { return loc_; }
    [[nodiscard]] const operators::DifferentialOperator& op() const { return a_; }
    /// Frozen principal part of chart k.
    [[nodiscard]] const operators::DifferentialOperator& chart_operator(std::size_t k) const { return frozen_[k]; }
    /// Principal part with coefficients at the centre of chart k.
    [[nodiscard]] const operators::DifferentialOperator& center_operator(std::size_t k) const { return center_[k]; }
    /// sup over x of sum_alpha |frozen_alpha(x) - a_alpha(center)| for chart k.
    [[nodiscard]] double deviation(std::size_t k) const { return deviation_[k]; }
    [[nodiscard]] double max_deviation() const;

    [[nodiscard]] ChartTuple principal(const ChartTuple& u) const;
    [[nodiscard]] ChartTuple remainder(const ChartTuple& u) const;
    /// View for the charted solver; refers to this object.
    [[nodiscard]] ChartedSystem system() const;

private:
    operators::DifferentialOperator a_;
    operators::DifferentialOperator low_;
    LocalizationSystem loc_;
    std::vector<operators::DifferentialOperator> frozen_;
    std::vector<operators::DifferentialOperator> center_;
    std::vector<double> deviation_;
};

struct VariableOptions {
    /// Chart scale; empty picks the coarsest 2^j cells whose deviation is at most 1/(2 c0).
    std::optional<double> delta;
    int bump_order = 5;
    /// Shift; 0 picks max(1, eta0), multiplied by 4 until the contraction check passes.
    double eta = 0.0;
    int max_neumann_iter = 200;
    double tol = 1e-11;
    int degree = 5;
    /// Chain entries beyond u0 matched by the initial lift.
    int lift_order = 3;
    std::size_t resolvent_samples = 2000;
    int c1_probes = 4;
    unsigned seed = 11;
    bool measure = true;

    /// {"delta": "auto" | number, "bump_order", "max_neumann_iter", "eta", "tol"}.
    static VariableOptions from_json(const nlohmann::json& j);
    [[nodiscard]] ChartedOptions charted() const;
};

struct LocalizationPlan {
    double delta = 0.0;
    std::size_t cells = 0;
    std::size_t charts = 0;
    double c0 = 0.0;
    double c1 = 0.0;
    double eta0 = 0.0;
    double eta = 0.0;
    double omega = 0.0;
    double contraction = 0.0;
    std::vector<double> inner_contraction;
    int eta_retries = 0;
    [[nodiscard]] nlohmann::json to_json() const;
};

/// Chart scale, constants and shift the variable solve would use on the
/// given spatial grid and half-line time axis.
LocalizationPlan plan_variable_parabolic(const operators::DifferentialOperator& a, const std::vector<Axis>& spatial,
                                         const Axis& time, const VariableOptions& opt = {});

/// (d_t + eta + A) u = f, u(0) = u0 for coefficients depending on x only,
/// through frozen chart problems and a Neumann series for fraktur B
/// (see charted_solve).
/// Constant coefficients go straight to the frozen half-line solve.
/// constants: c0, c1, remainder_ratio; extra: the plan and the Neumann log.
SolveReport solve_variable_parabolic(const cauchy::CauchyProblem& p, const VariableOptions& opt = {});

}  // namespace parreg::localize
