#pragma once

#include <functional>

#include "hahn/varcalc.hpp"

namespace hahn {
namespace models {

/// A built-in problem together with its closed-form solution.
struct ModelProblem {
    VariationalProblem problem;
    std::function<double(double)> closed_form;
};

/// extremize integral_0^1 ( y(qt+omega) + (1/2) Dy^2 ) with y(1) = 1 fixed
/// and y(0) free. Closed form:
///   y(t) = t^2/(q+1) - omega t/(q+1) + (q+omega)/(q+1).
ModelProblem example1_problem(const HahnParams& params);

/// Same running cost plus the end-point penalties
/// gamma (yb-1)^2/2 + nu ya^2/2 with both ends free. Closed form:
///   y(t) = t^2/(q+1)
///          - [omega(nu+gamma) - nu(gamma-1)(q+1) + gamma nu] t / [(q+1)(gamma+nu gamma+nu)]
///          + [(gamma-1)(q+1) - gamma(1-omega)] / [(q+1)(gamma+nu gamma+nu)].
ModelProblem example2_problem(const HahnParams& params, double gamma, double nu);

/// Limit of the example 2 family as gamma, nu -> infinity: the minimizer of
/// the fixed-endpoint problem y(0)=0, y(1)=1, namely t^2/(q+1) + q t/(q+1).
std::function<double(double)> example2_penalty_limit(const HahnParams& params);

// ============================================================================
// Quadratic tracking model with q,omega-exponential discounting
// ============================================================================

/// minimize integral_0^T E(1-r, t) [ alpha (y(qt+omega) - ybar(qt+omega))^2
///                                   + (Dy)^2 ], both ends free.
struct AdjustmentSpec {
    HahnParams params;
    double r = 1.05;     // discount rate, > 1
    double alpha = 1.0;  // disequilibrium weight, > 0
    double horizon = 1.0;
    expr::Ast target;    // the tracked path ybar, an expression in t only

    AdjustmentSpec(HahnParams p, double r_, double alpha_, double horizon_, expr::Ast target_);
};

/// Assembles the variational problem. The discount weight E(1-r, .) and the
/// shifted target ybar(qt+omega) enter as per-lattice-point coefficients
/// (the expression language has no product primitive for E). Requires the
/// lattice hull to sit inside the validity window
/// |t - omega0| < 1/((r-1)(1-q)), where the weight stays positive.
VariationalProblem adjustment_problem(const AdjustmentSpec& spec);

/// Solves the stationarity conditions by marching the second-order
/// difference equation
///   [1+(r-1)(t(1-q)-omega)] alpha (y(qt+omega) - ybar(qt+omega))
///       = (r-1) D[y](t) + D[D[y]](t)
/// inward along both orbits, with D[y] = 0 pinned at each anchor, and
/// Newton-matching value and slope of the two tails at omega0. When one
/// anchor coincides with omega0 its orbit is a single point; the remaining
/// orbit is shot alone with a vanishing tail slope as the second condition.
/// The returned grid has the requested depth (the march itself continues to
/// the series-convergence depth).
GridFunction adjustment_shooting_solve(const AdjustmentSpec& spec, int depth, double tol = 1e-12);

/// Closed form of the continuous-limit problem for the default target
/// ybar(t) = t:
///   alpha (y - t) = (r-1) y' + y'',  y'(0) = y'(T) = 0,
/// namely y(t) = t + (r-1)/alpha + A e^{m1 t} + B e^{m2 t} with
/// m_{1,2} = (-(r-1) +- sqrt((r-1)^2 + 4 alpha)) / 2.
std::function<double(double)> continuous_adjustment_oracle(double r, double alpha, double T);

} // namespace models
} // namespace hahn
