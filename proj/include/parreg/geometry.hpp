#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "parreg/grid.hpp"
#include "parreg/localize.hpp"
#include "parreg/operators.hpp"
#include "parreg/report.hpp"
#include "parreg/spaces.hpp"

namespace parreg::geometry {

using MapFn = std::function<Point(const Point&)>;
using MetricFn = std::function<Eigen::MatrixXd(const Point&)>;

/// A chart on the box prod (-h_a, h_a) in chart coordinates. to_model maps
/// into the model coordinates of the manifold, from_model is its inverse
/// (defined on the whole model; the result may leave the box).
struct Chart {
    std::size_t id = 0;
    Point half_width;
    MapFn to_model;
    MapFn from_model;
    /// Pulled-back metric kappa_* g at a chart point, in closed form.
    MetricFn metric;

    [[nodiscard]] int m() const { return static_cast<int>(half_width.size()); }
    [[nodiscard]] bool contains(const Point& y, double shrink = 1.0) const;
};

/// Bounds an atlas claims for itself; the verifier measures against them.
struct DeclaredBounds {
    std::size_t multiplicity = 1;
    /// eigenvalues of kappa_* g within [1/metric_band, metric_band]
    double metric_band = 1.0;
    /// first and second derivatives of transition maps
    double transition = 1.0;
    /// first and second derivatives of metric entries
    double metric_derivative = 1.0;
};

struct Atlas {
    std::string name;
    int m = 1;
    std::vector<Chart> charts;
    double shrink = 0.8;
    DeclaredBounds declared;
    MetricFn model_metric;
    /// Random model points of the region the atlas claims to cover.
    std::function<std::vector<Point>(std::size_t, unsigned)> sampler;
    /// Periods of a flat periodic model (empty for curved atlases); charts of
    /// such atlases are translations and carry their model centers.
    std::vector<double> model_period;
    std::vector<Point> centers;

    [[nodiscard]] nlohmann::json to_json() const;
};

/// Translation charts on the flat periodic box prod [0, P_a), `counts[a]`
/// charts per axis with half-width 0.75 of the spacing.
Atlas translation_atlas(const std::string& name, const std::vector<double>& periods,
                        const std::vector<std::size_t>& counts);
/// Flat torus of side 2 pi.
Atlas flat_torus(int m, std::size_t charts_per_axis = 2);
/// Cylinder R x S^1 truncated to a periodic window of height 2z, in (z, theta).
Atlas cylinder_window(double z, std::size_t charts_z, std::size_t charts_theta);
/// Cone end dr^2 + r^2 dtheta^2, r >= r0, in (r, theta) coordinates with unit
/// patches r = r_k + y1, theta = theta_j + y2 / r_k, truncated at `rings` rings.
Atlas cone_end(double r0 = 2.0, std::size_t rings = 4);
/// Poincare disc 4|dx|^2 / (1 - |x|^2)^2 in the identity chart on (-1/sqrt2, 1/sqrt2)^2.
Atlas hyperbolic_naive();
/// Poincare disc with the conformal charts y -> phi_a(rho y), phi_a a disc
/// automorphism, centers on a hyperbolic polar lattice covering the
/// hyperbolic ball of the given radius. Pullback metric rho^2 4 I / (1 - rho^2 |y|^2)^2.
Atlas hyperbolic_mobius(double radius = 2.0, double rho = 0.5, double spacing = 0.6);

/// Builds an atlas from {"kind": "torus"|"translation"|"cylinder"|"cone"|"hyperbolic_naive"|"hyperbolic", ...}.
Atlas atlas_from_json(const nlohmann::json& j);

struct RegularityReport {
    std::size_t samples = 0;
    std::size_t multiplicity = 0;
    double uncovered_fraction = 0.0;
    double transition_bound = 0.0;
    double metric_min = 0.0;
    double metric_max = 0.0;
    double metric_derivative = 0.0;
    bool positive_definite = true;
    /// Location of the first evaluator failure, if any.
    std::optional<std::string> evaluator_error;
    std::map<std::string, bool> pass;

    [[nodiscard]] bool passed() const;
    [[nodiscard]] nlohmann::json to_json() const;
};

/// Samples the atlas: multiplicity and coverage by shrunk charts at model
/// samples, transition derivatives (orders 1 and 2) on overlaps, metric
/// eigenvalue band and metric derivatives on a grid of chart points.
RegularityReport verify_uniform_regularity(const Atlas& atlas, std::size_t budget = 2000, unsigned seed = 5,
                                           std::size_t metric_per_axis = 17);

/// Metric data of a chart on a grid of chart points. Fibers: g and ginv
/// m x m row-major, christoffel m^3 with index (k, i, j) for Gamma^k_ij.
struct ChartMetric {
    std::vector<Axis> axes;
    GridFunction g;
    GridFunction ginv;
    GridFunction sqrtg;
    GridFunction christoffel;
    double band_lo = 0.0;
    double band_hi = 0.0;
    /// max |d g_ij| over the grid; zero for constant metrics.
    double variation = 0.0;
};

/// Samples the metric at the nodes; each point is first clamped to the chart
/// box. Christoffel symbols from 4th-order central differences of the grid
/// (wrapped on periodic axes).
ChartMetric chart_metric(const Chart& chart, const std::vector<Axis>& axes);

/// (1/sqrt g) d_i (sqrt g g^ij d_j u) on the spatial grid of u. Derivatives
/// are spectral along periodic axes and finite differences otherwise.
GridFunction laplace_beltrami_local(const Chart& chart, const GridFunction& u, int fd_accuracy = 6);

/// A = -diffusion * Delta_g + potential.
struct GeometricOperator {
    double diffusion = 1.0;
    double potential = 0.0;

    /// Normal ellipticity constant on the manifold.
    [[nodiscard]] double epsilon() const { return diffusion; }
    static GeometricOperator from_json(const nlohmann::json& j);
    [[nodiscard]] nlohmann::json to_json() const;
};

struct PushForward {
    operators::DifferentialOperator op{1, 2, 1};
    /// min over the grid of the principal symbol on the Euclidean cosphere.
    double epsilon = 0.0;
    double band_lo = 0.0;
    double band_hi = 0.0;
    /// sup of the first-order (connection) coefficients.
    double correction = 0.0;
};

/// kappa_* A in multiindex form on the chart grid: principal coefficients
/// from g^ij, first order from the contracted Christoffel symbols
/// -g^ij Gamma^k_ij. Coefficients are constants when the metric is.
PushForward push_forward_operator(const GeometricOperator& a, const Chart& chart, const std::vector<Axis>& axes);

struct SymbolCheck {
    std::size_t samples = 0;
    double max_error = 0.0;
    [[nodiscard]] nlohmann::json to_json() const;
};

/// Compares the pushed principal symbol at random (node, xi) with the model
/// symbol at kappa(y) applied to the covector J^{-T} xi, J the numerical
/// Jacobian of the chart map. Relative errors.
SymbolCheck check_symbol_identity(const GeometricOperator& a, const Atlas& atlas, std::size_t chart,
                                  const std::vector<Axis>& axes, std::size_t samples = 32, unsigned seed = 3);

/// Per-chart functions on chart grids.
struct ManifoldFunction {
    std::vector<GridFunction> pieces;
};

/// Interval grid of a chart box with n nodes per axis.
std::vector<Axis> chart_box_grid(const Chart& chart, std::size_t n);
/// Interval grid of the model grid nodes inside the chart box (translation atlases).
std::vector<Axis> aligned_chart_grid(const Atlas& atlas, std::size_t chart, const std::vector<Axis>& model);

ManifoldFunction sample_manifold(const Atlas& atlas, const std::vector<std::vector<Axis>>& grids,
                                 const std::function<cplx(const Point&)>& f);
/// Largest relative disagreement of pieces at nodes of two charts sitting on
/// the same model point. Nodes within `margin` nodes of a box edge are skipped.
double overlap_disagreement(const Atlas& atlas, const ManifoldFunction& u, std::size_t margin = 0);

/// l_q sum over charts of the anisotropic norms of the pieces (overlaps are
/// counted once per chart).
double manifold_norm(const ManifoldFunction& u, const Atlas& atlas, const spaces::NormSpec& spec);

/// Charted problem of a translation atlas on the periodic model grid. Every
/// chart gets a periodic computational box aligned with the model grid and
/// wide enough for its box; pieces move between the two grids by index maps.
class ManifoldCharts {
public:
    ManifoldCharts(const GeometricOperator& a, const Atlas& atlas, const std::vector<Axis>& model, int bump_order = 5);

    [[nodiscard]] localize::ChartedSystem system() const;
    [[nodiscard]] std::size_t size() const { return boxes_.size(); }
    [[nodiscard]] const std::vector<Axis>& box(std::size_t k) const { return boxes_[k]; }
    [[nodiscard]] const GridFunction& pi(std::size_t k) const { return pi_[k]; }
    [[nodiscard]] const operators::DifferentialOperator& model_operator() const { return model_op_; }
    [[nodiscard]] const PushForward& pushed(std::size_t k) const { return pushed_[k]; }
    [[nodiscard]] double partition_defect() const;

    /// Model-grid function from a chart-box function (zero off the box).
    [[nodiscard]] GridFunction embed(std::size_t k, const GridFunction& v) const;
    [[nodiscard]] GridFunction restrict_to(std::size_t k, const GridFunction& u) const;
    [[nodiscard]] localize::ChartTuple decompose(const GridFunction& u) const;
    [[nodiscard]] GridFunction assemble(const localize::ChartTuple& pieces) const;
    [[nodiscard]] localize::ChartTuple remainder(const localize::ChartTuple& u) const;

private:
    std::vector<Axis> model_;
    std::vector<std::vector<Axis>> boxes_;
    /// model spatial node of every box node
    std::vector<std::vector<std::size_t>> map_;
    std::vector<GridFunction> pi_;
    std::vector<GridFunction> pi_box_;
    std::vector<PushForward> pushed_;
    std::vector<operators::DifferentialOperator> principal_;
    std::vector<operators::DifferentialOperator> centre_;
    std::vector<operators::DifferentialOperator> low_;
    operators::DifferentialOperator model_op_{1, 2, 1};
};

struct ManifoldOptions {
    double eta = 0.0;   // 0 picks eta0 = 2 c1 c0^2 with retries
    int bump_order = 5;
    std::size_t resolvent_samples = 2000;
    int c1_probes = 4;
    bool check_regularity = true;
    localize::ChartedOptions charted;

    static ManifoldOptions from_json(const nlohmann::json& j);
};

/// Model-grid operator of A (identity chart with the model metric).
operators::DifferentialOperator model_operator(const GeometricOperator& a, const Atlas& atlas,
                                               const std::vector<Axis>& model);

struct ManifoldPlan {
    double c0 = 0.0;
    double c1 = 0.0;
    double eta0 = 0.0;
    localize::EtaChoice choice;
    nlohmann::json checks = nlohmann::json::object();
    [[nodiscard]] nlohmann::json to_json() const;
};

/// Preconditions (uniform regularity, chart ellipticity) and the choice of
/// eta >= eta0 = 2 c1 c0^2 for a solve on the given model grid and time axis.
ManifoldPlan plan_manifold_parabolic(const GeometricOperator& a, const Atlas& atlas, const std::vector<Axis>& model,
                                     const Axis& time, const ManifoldOptions& opt = {});

/// (d_t + eta + A) u = f, u(0) = u0 on the periodic model grid, through the
/// chart pieces of a translation atlas. f carries a trailing time axis.
SolveReport solve_manifold_parabolic(const GeometricOperator& a, const GridFunction& f, const GridFunction& u0,
                                     const Atlas& atlas, const spaces::NormSpec& spec, const ManifoldOptions& opt = {});

struct ResolventSweep {
    double eta = 0.0;
    std::vector<cplx> lambdas;
    std::vector<double> products;
    /// relative gap to the direct solve on the model grid
    std::vector<double> direct_gap;
    std::vector<double> contraction;
    [[nodiscard]] double spread() const;
    [[nodiscard]] nlohmann::json to_json() const;
};

/// Solves (lambda + eta + A) u = g through the chart pieces for each lambda
/// with Re lambda >= 0 and records (|lambda| + eta) ||u|| / ||g||.
ResolventSweep resolvent_sweep_manifold(const GeometricOperator& a, const Atlas& atlas, const std::vector<Axis>& model,
                                        const std::vector<cplx>& lambdas, double eta, const GridFunction& g,
                                        const ManifoldOptions& opt = {});

}  // namespace parreg::geometry
