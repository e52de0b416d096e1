#pragma once

#include <functional>
#include <vector>

#include "hahn/errors.hpp"

namespace hahn {

// ============================================================================
// Parameters and the sigma orbit geometry
// ============================================================================

/// The pair (q, omega) with 0 < q < 1 and omega >= 0, plus the derived fixed
/// point omega0 = omega/(1-q) of the shift sigma(t) = q*t + omega. Every
/// operator in the library is parameterized by one of these.
struct HahnParams {
    double q = 0.5;
    double omega = 0.0;
    double omega0 = 0.0;

    HahnParams() = default;
    HahnParams(double q_, double omega_);

    /// sigma(t) = q*t + omega. Contracts every point toward omega0.
    double sigma(double t) const { return q * t + omega; }

    /// q-bracket [k]_q = (1 - q^k)/(1 - q), the q-analogue of the integer k.
    double q_bracket(long k) const;

    /// k-fold composition of sigma; negative k inverts. Closed forms:
    ///   sigma^k(t)  = q^k t + omega [k]_q
    ///   sigma^-k(t) = (t - omega [k]_q) / q^k
    /// Throws RangeError if q^-k overflows.
    double sigma_k(double t, long k) const;

    /// True when t is indistinguishable from the fixed point, i.e.
    /// |t - omega0| <= 1e-12 * max(1, |omega0|).
    bool is_omega0(double t) const;
};

/// Truncated sigma-orbit of an anchor point: [sigma^0(s), ..., sigma^N(s)].
struct Orbit {
    double anchor = 0.0;
    int depth = 0; // N >= 1
    std::vector<double> points; // size depth + 1

    int size() const { return static_cast<int>(points.size()); }
};

Orbit build_orbit(const HahnParams& params, double anchor, int depth);

/// The truncated two-orbit point set of [a,b]_{q,omega}: the orbits of the
/// anchors a and b, with omega0 as the distinguished common limit.
struct Lattice {
    HahnParams params;
    double a = 0.0;
    double b = 0.0;
    Orbit orbit_a;
    Orbit orbit_b;

    int depth() const { return orbit_a.depth; }
    double omega0() const { return params.omega0; }
};

/// Builds the lattice for a < b at the given truncation depth (>= 1).
/// Every lattice point lies in the interval hull of {a, b, omega0}.
Lattice build_lattice(const HahnParams& params, double a, double b, int depth);

// ============================================================================
// Grid functions
// ============================================================================

/// Real values of an unknown function on the lattice points. The value at
/// omega0 is stored explicitly: it is never extrapolated from the orbit
/// tails, which only converge to omega0 in the limit.
struct GridFunction {
    Lattice lattice;
    std::vector<double> values_a; // y at orbit_a.points, size depth + 1
    std::vector<double> values_b;
    double value_omega0 = 0.0;

    int depth() const { return lattice.depth(); }
};

/// Zero grid function on the given lattice.
GridFunction zero_grid(const Lattice& lattice);

/// Samples a callable at every lattice point (and at omega0).
GridFunction sample_grid(const Lattice& lattice, const std::function<double(double)>& f);

/// Max of |values| over all stored points, including omega0.
double sup_norm(const GridFunction& gf);

enum class OrbitSide { a, b };

/// Difference quotient restricted to stored lattice values:
///   (values[k+1] - values[k]) / ((q-1) * points[k] + omega).
/// Requires k <= depth-1 so the sigma-neighbor exists, and a nondegenerate
/// orbit (anchor != omega0, where the denominator vanishes identically).
double grid_derivative(const GridFunction& gf, OrbitSide side, int k);

// ============================================================================
// The Hahn difference operator and companions
// ============================================================================

/// D_{q,omega}[f](t) = (f(q t + omega) - f(t)) / ((q-1) t + omega) for
/// t != omega0. At the fixed point the quotient degenerates and the operator
/// is defined through the Frechet derivative f'(omega0); for black-box
/// callables this is estimated by a central finite difference with the
/// supplied step (pass a non-positive step for the default
/// 1e-6 * max(1, |omega0|)).
double hahn_derivative(const std::function<double(double)>& f, const HahnParams& params,
                       double t, double fixed_point_step = -1.0);

/// Closed form of D_{q,omega}(a t + b)^n for n >= 1 and t != omega0:
///   a * sum_{k=0}^{n-1} (a sigma(t) + b)^k (a t + b)^(n-k-1).
double power_rule(const HahnParams& params, double a_coef, double b_coef, int n, double t);

/// Truncated q,omega-exponential product E(z, t) = prod_k (1 + z q^k (t(1-q) - omega)).
struct QwExp {
    double value = 1.0;
    int factors = 0;   // factors multiplied before the tail test passed
    bool hit_zero = false; // a factor was exactly zero; value is an exact 0
};

/// Multiplies factors until the remaining tail deviates from 1 by less than
/// tol (geometric bound |z| q^k |t(1-q)-omega| / (1-q)). A zero factor
/// collapses the product to an exact 0, reported via the flag rather than an
/// error. At t = omega0 every factor is 1 and the result is exactly 1.
QwExp qw_exponential(const HahnParams& params, double z, double t, double tol);

} // namespace hahn
