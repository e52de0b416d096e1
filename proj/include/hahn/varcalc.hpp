#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hahn/core.hpp"
#include "hahn/expr.hpp"
#include "hahn/integral.hpp"

namespace hahn {

// ============================================================================
// Variational problems over the q,omega-lattice
// ============================================================================

/// Per-end boundary condition: a fixed value or a free end (the solver then
/// enforces the corresponding natural boundary condition).
struct BoundarySpec {
    std::optional<double> at_a; // nullopt = free
    std::optional<double> at_b;
};

/// Optional integral constraint J[y] = gamma with integrand F over the same
/// variable set as the Lagrangian.
struct IsoConstraint {
    expr::Ast integrand;
    double gamma = 0.0;
};

enum class Sense { minimize, maximize };

/// extremize integral_a^b L(t, y(qt+omega), D[y](t), y(a), y(b)) d_{q,omega}t
/// over grid functions on [a,b]_{q,omega}, subject to the boundary spec and
/// the optional isoperimetric constraint.
///
/// point_coeffs supplies named coefficients evaluated per lattice point (a
/// function of t); they appear to the expression language as parameters and
/// shadow same-named entries of the parameter table. Partial derivatives
/// treat them as constants, which is exact: they carry no dependence on the
/// unknown y.
struct VariationalProblem {
    HahnParams params;
    double a = 0.0;
    double b = 1.0;
    expr::Ast lagrangian;
    std::map<std::string, double> param_values;
    std::map<std::string, std::function<double(double)>> point_coeffs;
    BoundarySpec boundary;
    std::optional<IsoConstraint> constraint;
    Sense sense = Sense::minimize;
};

struct SolveOptions {
    double tol = 1e-10;      // infinity norm of the stationarity residual
    int max_iter = 60;
    int depth = 60;          // reported lattice depth
    double series_tol = 1e-12;   // drives the internal chain extension
    long max_solve_depth = 200'000;
    unsigned seed = 0x5EED1234u; // restarts and probes; fixed for determinism
};

/// Euler-Lagrange residuals per orbit index k = 0..depth-2 on each orbit.
/// An orbit whose anchor coincides with omega0 is degenerate (a single
/// point) and reports no residuals.
struct ElResiduals {
    std::vector<double> orbit_a;
    std::vector<double> orbit_b;

    double max_abs() const;
};

struct SolveReport {
    GridFunction minimizer;
    double functional_value = 0.0;
    ElResiduals el_residuals;
    std::optional<double> nbc_a; // natural boundary residuals, free ends only
    std::optional<double> nbc_b;
    std::optional<double> lambda;  // isoperimetric multiplier
    std::optional<int> lambda0;    // 1 = normal branch, 0 = abnormal
    int iterations = 0;
    bool converged = false;
    double gradient_norm = 0.0;
    int solve_depth = 0;           // internal chain depth actually used
    double tail_estimate = 0.0;    // magnitude of the closed series tail
    bool gradient_fallback_used = false;
    std::string message;
};

// ============================================================================
// Functional evaluation on grids
// ============================================================================
//
// The defining series is infinite; on a depth-N grid the functional is the
// truncated sum over term indices k = 0..N-1 of both orbits plus a geometric
// closure of the remaining tail, which freezes the integrand at its
// omega0-limit state (y -> value_omega0, Dy -> the deepest stored slope).
// The closure is exact for integrand components that are constant along the
// orbit (in particular any dependence on the end-point values y(a), y(b))
// and leaves an O(q^N) error otherwise, reported as the tail estimate.

struct FunctionalValue {
    double value = 0.0;
    double tail_estimate = 0.0;
};

FunctionalValue functional_with_tail(const VariationalProblem& problem, const GridFunction& gf);

double functional_value(const VariationalProblem& problem, const GridFunction& gf);

/// Gradient of functional_value with respect to every stored grid value, in
/// the flat layout [values_a(0..N), values_b(0..N), value_omega0].
std::vector<double> functional_gradient(const VariationalProblem& problem, const GridFunction& gf);

/// First variation of the functional at gf in direction h (same lattice):
/// the integral of d2L h(qt+omega) + d3L D[h] + d4L h(a) + d5L h(b), which
/// equals the directional derivative of functional_value.
double first_variation(const VariationalProblem& problem, const GridFunction& gf,
                       const GridFunction& h);

/// d2L{y}(t) - D[d3L]{y}(t) at orbit indices k = 0..depth-2.
ElResiduals el_residual(const VariationalProblem& problem, const GridFunction& gf);

/// Natural boundary residual at a free left end:
///   d3L{y}(a) - integral_a^b d4L{y}.  Throws UsageError on a fixed end.
double nbc_residual_a(const VariationalProblem& problem, const GridFunction& gf);

/// Natural boundary residual at a free right end:
///   d3L{y}(b) + integral_a^b d5L{y}.
double nbc_residual_b(const VariationalProblem& problem, const GridFunction& gf);

// ============================================================================
// Solvers
// ============================================================================

/// Stationary-point solve of the reduced finite-dimensional functional by
/// damped Newton on the full chain of lattice values. The chain is extended
/// internally to the depth where the q^k series weights fall below
/// series_tol, the two orbit tails are tied to the shared omega0 value, and
/// the reported grid is the head at opts.depth. "extremize" is resolved by
/// problem.sense (max negates the Lagrangian internally).
SolveReport solve_direct(const VariationalProblem& problem, const SolveOptions& opts = {});

/// Same, starting from the supplied initial grid instead of the default
/// straight line through the pinned end data.
SolveReport solve_direct(const VariationalProblem& problem, const GridFunction& init,
                         const SolveOptions& opts);

/// Isoperimetric solve. Tries the normal branch first (lambda0 = 1): joint
/// Newton on the stationarity of L - lambda F with the constraint equation
/// appended, restarted up to three times. If every attempt fails, tries the
/// abnormal branch (lambda0 = 0, lambda = 1): stationarity of the constraint
/// functional itself, accepted only if the constraint value matches gamma.
SolveReport solve_isoperimetric(const VariationalProblem& problem, const SolveOptions& opts = {});

// ============================================================================
// Convexity probe
// ============================================================================

enum class ConvexityKind { convex_evidence, concave_evidence, neither };

struct ConvexityWitness {
    double t = 0.0;
    double u[4] = {0, 0, 0, 0};  // (y, Dy, ya, yb)
    double du[4] = {0, 0, 0, 0};
    double gap_convex = 0.0;  // L(u+du) - L(u) - sum dL du  (negative = violation)
    double gap_concave = 0.0; // negated inequality
};

struct ConvexityVerdict {
    ConvexityKind kind = ConvexityKind::neither;
    int samples = 0;
    std::optional<ConvexityWitness> witness; // present when kind == neither
};

/// Samples the first-order convexity inequality
///   L(t, u + du) - L(t, u) >= sum_i dL_i(t, u) du_i   (<= for concavity)
/// at random points of the box. Evidence only, never a certificate.
ConvexityVerdict convexity_probe(const VariationalProblem& problem, int samples,
                                 double box_lo, double box_hi, unsigned seed = 0x5EED1234u);

} // namespace hahn
