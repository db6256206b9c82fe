#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include <json.hpp>

#include "parreg/grid.hpp"
#include "parreg/operators.hpp"
#include "parreg/report.hpp"
#include "parreg/spaces.hpp"

namespace parreg::cauchy {

/// (d_t + A) u = f on space x [0, T], u(0) = u0.
///
/// f lives on a half-line space-time grid whose spatial axes are periodic and
/// agree with those of u0. Only spec.s and spec.q are read; the weight is
/// always the r-parabolic system of the operator and the norm parameter
/// follows the solve shift.
struct CauchyProblem {
    operators::DifferentialOperator op;
    GridFunction f;
    GridFunction u0;
    spaces::NormSpec spec;
    double horizon = 0.0;

    /// Throws ShapeError / ValidationError on inconsistent grids or an
    /// inadmissible (s, q).
    void validate() const;

    /// {"operator": {...}, "f": file | grid, "u0": file | grid, "s", "q", "horizon"}.
    static CauchyProblem from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
};

/// Entries u_0 .. u_k of u_0 = u0, u_{j+1} = d_t^j f(0) - (eta + A) u_j.
using CompatibilityChain = std::vector<GridFunction>;

CompatibilityChain compatibility_chain(const CauchyProblem& p, int k, double eta);

/// Number k of compatibility conditions for (s, q): the k with
/// r(k + 1/q) < s < r(k + 1 + 1/q), or -1 when s < r/q. For s >= r/q the
/// values in (N + 1/q) or (N + r/q) are rejected with a ValidationError.
int chain_order(double s, double q, int r);

struct FrozenOptions {
    /// Replaces the chain computed from the data (used to study violations).
    std::optional<CompatibilityChain> chain;
    /// Norms, ratios and chain identity checks (the expensive part).
    bool measure = true;
    bool check_ellipticity = true;
    int degree = 5;
    /// t < 0 samples used for the zero extension of the correction.
    std::size_t negative = 0;
};

/// Constant-coefficient half-line solve u = v + w: w lifts the compatibility
/// chain through the trace coretraction, g = f - L w has vanishing traces and
/// v is the causal solution for g (the full-line inverse applied to the zero
/// extension, then restricted).
///
/// constants: mr_ratio = ||u||_{s+r} / (||f||_s + ||u0||_{s+r(1-1/q)}),
/// correction_ratio = same with the zero extension of v in the numerator,
/// trace_error, chain_identity_error. Norm parameter eta^{1/r}.
SolveReport solve_cauchy_frozen(const CauchyProblem& p, double eta, const FrozenOptions& opt = {});

struct IntervalOptions {
    /// Shift; 0 picks max(eta0, 1) with eta0 = 2 c1 c0^2.
    double eta = 0.0;
    /// Smallest admissible subinterval in time steps.
    std::size_t s_min = 4;
    int max_iterations = 200;
    double tol = 1e-13;
    bool measure = false;
    std::size_t resolvent_samples = 2000;
};

/// Time-dependent coefficients (constant in x): solves the shifted problem
/// for exp(-eta t) u by time-freezing on subintervals with a fixed-point
/// correction for A(t) - A(tau), re-chaining at every junction, and undoes
/// the shift. extra: eta0, S, junctions, iterations, modulus.
SolveReport solve_cauchy_interval(const CauchyProblem& p, const IntervalOptions& opt = {});

/// Measured time modulus of continuity of the coefficients at h = dt, 2dt, 4dt.
std::vector<double> coefficient_time_modulus(const operators::DifferentialOperator& a);

struct BootstrapDiagnostic {
    /// Relative mismatch of d_k^j u solved from the differentiated problem
    /// against direct spectral differentiation, per level j (max over k).
    std::vector<double> spatial_errors;
    /// Same for d_t u (differentiated data d_t f, f(0) - A_eta u0).
    double time_error = 0.0;
    [[nodiscard]] nlohmann::json to_json() const;
};

/// For constant-coefficient problems solved by solve_cauchy_frozen.
BootstrapDiagnostic bootstrap_regularity_diagnostic(const CauchyProblem& p, const SolveReport& rep, int levels);

}  // namespace parreg::cauchy
