#pragma once

#include <cstddef>
#include <limits>
#include <vector>

#include "parreg/grid.hpp"
#include "parreg/weights.hpp"

namespace parreg::spaces {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Order s, integrability q and parameter eta of a parameter-dependent norm.
struct NormSpec {
    double s = 0.0;
    double q = 2.0;
    weights::WeightSystem weight = weights::WeightSystem::trivial(1);
    double eta = 1.0;
};

/// True if s is (numerically) a nonnegative integer multiple of m.
bool is_multiple(double s, int m);

/// Throws ValidationError unless (s, q) is nu-admissible: either s in nu*N
/// and 1 < q < inf, or s not in N and 1 <= q <= inf. Also requires eta > 0.
void check_admissible(const NormSpec& spec);

/// (integral |u|^q)^{1/q} by midpoint (periodic) / trapezoid (non-periodic)
/// quadrature, or the grid max for q = inf.
double lq_norm(const GridFunction& u, double q);

/// Sum over alpha.omega <= k of eta^{k - alpha.omega} ||d^alpha u||_q, k = s in nu*N.
double sobolev_norm_param(const GridFunction& u, const NormSpec& spec);

/// Double-sum Slobodeckii seminorm over the coordinates in `cluster`,
/// L_q-composed over the remaining axes. Periodic axes use minimal-image
/// distances; the diagonal is excluded.
double slobodeckii_seminorm(const GridFunction& u, double theta, double q, const std::vector<std::size_t>& cluster);

/// max over pairs with 0 < |x - y| < delta (within `cluster`, all other
/// coordinates equal) of |u(x) - u(y)| / |x - y|^theta.
double holder_seminorm(const GridFunction& u, double theta, double delta, const std::vector<std::size_t>& cluster);
/// Hölder seminorm over all axes.
double holder_seminorm(const GridFunction& u, double theta, double delta = kInf);

/// Gradient tensor of order j in the coordinates of `cluster`. The fiber
/// holds N x (multiindices of length j) entries scaled by sqrt(j!/alpha!),
/// so the fiber norm equals the norm over ordered index tuples.
GridFunction gradient_tensor(const GridFunction& u, const std::vector<std::size_t>& cluster, int j,
                             int fd_accuracy = 4);

/// Axis indices of cluster i of a weight system.
std::vector<std::size_t> cluster_axes(const weights::WeightSystem& w, int i);

/// The parameter-dependent anisotropic norm ||u||_{s/nu, q; eta}.
double anisotropic_norm(const GridFunction& u, const NormSpec& spec);

/// Fourier-side realization of the intersection norm
/// ||(eta^2+|xi'|^2)^{s/2} u^|| + ||(eta^{2 nu_l}+tau^2)^{s/(2 nu_l)} u^|| for
/// r-parabolic weights, q = 2 and a fully periodic space-time grid.
double intersection_norm_surrogate(const GridFunction& u, const NormSpec& spec);

/// k-th time derivative at t = 0 of a half-line function (one-sided, 4th order).
GridFunction trace(const GridFunction& u, int k);

/// Half-line function with traces chain[j] for j = 0..k:
/// u(t) = exp(-t J) sum_n v_n t^n / n!,  v_n = sum_i C(n,i) J^{n-i} chain[i],
/// J = Lambda_eta^{nu_l}(D) acting on the spatial variables.
GridFunction trace_coretraction(const std::vector<GridFunction>& chain, const weights::WeightSystem& w, double eta,
                                const Axis& time_axis);
/// Same, also returning the exact time derivative in `dt_out`.
GridFunction trace_coretraction(const std::vector<GridFunction>& chain, const weights::WeightSystem& w, double eta,
                                const Axis& time_axis, GridFunction* dt_out);

/// Seeley extension coefficients: sum_j c_j (-j)^p = 1, p = 0..ne-1.
std::vector<double> seeley_coefficients(int ne);

/// Extends a half-line function to `negative` samples below t = 0 by
/// E u(-m dt) = sum_j c_j u(j m dt). Throws ExtrapolationError when some
/// j*m exceeds the stored extent. negative < 0 picks the largest admissible count.
GridFunction extend_seeley(const GridFunction& u, int ne = 4, long negative = -1);
GridFunction extend_zero(const GridFunction& u, std::size_t negative);
/// Drops the t < 0 samples of a full-line function.
GridFunction restrict_halfline(const GridFunction& u);

}  // namespace parreg::spaces
