#pragma once

#include <functional>
#include <span>

#include "hahn/core.hpp"

namespace hahn {

// ============================================================================
// Jackson-Norlund (q,omega-) integration
// ============================================================================

/// Stopping rule for the defining series. In tail_tol mode summation stops
/// once |term| < tail_tol * (1 + |partial sum|) holds for a few consecutive
/// terms (a single small term can be an integrand zero on the orbit, not a
/// converged tail); max_terms is the hard cap. In fixed_depth mode exactly
/// max_terms terms are summed with no tail test.
struct QuadratureSpec {
    enum class Mode { fixed_depth, tail_tol };
    int max_terms = 10'000;
    double tail_tol = 1e-13;
    Mode mode = Mode::tail_tol;
};

/// Value of a truncated series plus summation diagnostics.
struct SeriesSum {
    double value = 0.0;
    int terms = 0;           // series terms actually summed
    double tail_bound = 0.0; // geometric estimate of the discarded tail
};

/// The anchored integral from omega0 to x:
///   (x(1-q) - omega) * sum_{k>=0} q^k f(sigma^k(x)),
/// truncated per spec. Throws NonconvergenceError when the cap is hit in
/// tail_tol mode with the tail test still failing.
SeriesSum integral_from_omega0(const std::function<double(double)>& f, const HahnParams& params,
                               double x, const QuadratureSpec& spec = {});

/// integral over [a,b] = anchored integral at b minus anchored integral at a.
/// Antisymmetric under swapping a and b.
SeriesSum integral(const std::function<double(double)>& f, const HahnParams& params,
                   double a, double b, const QuadratureSpec& spec = {});

/// Finite truncation of the defining series using stored per-orbit values:
///   (b(1-q) - omega) * sum_{k<=depth} q^k vb[k]
///   - (a(1-q) - omega) * sum_{k<=depth} q^k va[k].
/// Both spans must cover indices 0..depth.
double grid_integral(std::span<const double> values_a, std::span<const double> values_b,
                     const HahnParams& params, double a, double b, int depth);

/// |integral of D_{q,omega}[f] over [a,b] - (f(b) - f(a))|.
double fundamental_theorem_residual(const std::function<double(double)>& f, const HahnParams& params,
                                    double a, double b, const QuadratureSpec& spec = {});

/// Absolute gap between the two sides of the integration by parts identity:
///   integral f D[g] = [f g]_a^b - integral D[f](t) g(q t + omega).
double integration_by_parts_residual(const std::function<double(double)>& f,
                                     const std::function<double(double)>& g,
                                     const HahnParams& params, double a, double b,
                                     const QuadratureSpec& spec = {});

/// Oriented positivity diagnosis: integrates between omega0 and bound with
/// the orientation that makes the interval run forward (omega0 -> bound when
/// omega0 <= bound, bound -> omega0 otherwise) and reports whether the result
/// is >= -tolerance. When f >= 0 on the orbit of bound this is guaranteed
/// true; for sign-changing f the returned value is just the signed diagnosis.
bool positivity_check(const std::function<double(double)>& f, const HahnParams& params,
                      double bound, const QuadratureSpec& spec = {});

// Note: |integral f| <= integral |f| is NOT an identity of this calculus and
// is asserted nowhere in the library. The anchored series carries signed
// weights, so the two-orbit difference can make the right side smaller than
// the left (see the regression test exhibiting a concrete failing instance).

} // namespace hahn
