#include "hahn/integral.hpp"

#include <cmath>
#include <string>

namespace hahn {

namespace {
// Consecutive sub-tolerance terms required before the tail test is trusted.
// An isolated tiny term can be a zero of the integrand on the orbit.
constexpr int kConsecutiveSmall = 3;
} // namespace

SeriesSum integral_from_omega0(const std::function<double(double)>& f, const HahnParams& params,
                               double x, const QuadratureSpec& spec) {
    if (spec.max_terms < 1)
        throw DomainError("integral_from_omega0: max_terms must be >= 1");
    if (!(spec.tail_tol > 0.0))
        throw DomainError("integral_from_omega0: tail_tol must be positive");

    SeriesSum out;
    if (params.is_omega0(x))
        return out; // weight x(1-q) - omega vanishes

    const double weight = x * (1.0 - params.q) - params.omega;
    double sum = 0.0;
    double qk = 1.0;
    double t = x;
    double last_term = 0.0;
    int small_run = 0;
    int k = 0;
    for (; k < spec.max_terms; ++k) {
        last_term = qk * f(t);
        sum += last_term;
        if (!std::isfinite(sum))
            throw NonconvergenceError("integral_from_omega0: series diverged at term " + std::to_string(k));
        if (spec.mode == QuadratureSpec::Mode::tail_tol) {
            if (std::abs(last_term) < spec.tail_tol * (1.0 + std::abs(sum))) {
                if (++small_run >= kConsecutiveSmall) {
                    ++k;
                    break;
                }
            } else {
                small_run = 0;
            }
        }
        qk *= params.q;
        t = params.sigma(t);
    }
    if (spec.mode == QuadratureSpec::Mode::tail_tol && small_run < kConsecutiveSmall)
        throw NonconvergenceError("integral_from_omega0: tail test still failing after " +
                                  std::to_string(spec.max_terms) + " terms");
    out.value = weight * sum;
    out.terms = k;
    // Geometric tail bound assuming |f| stays near its last sampled scale.
    out.tail_bound = std::abs(weight) * std::abs(last_term) * params.q / (1.0 - params.q);
    return out;
}

SeriesSum integral(const std::function<double(double)>& f, const HahnParams& params,
                   double a, double b, const QuadratureSpec& spec) {
    const SeriesSum at_b = integral_from_omega0(f, params, b, spec);
    const SeriesSum at_a = integral_from_omega0(f, params, a, spec);
    SeriesSum out;
    out.value = at_b.value - at_a.value;
    out.terms = std::max(at_a.terms, at_b.terms);
    out.tail_bound = at_a.tail_bound + at_b.tail_bound;
    return out;
}

double grid_integral(std::span<const double> values_a, std::span<const double> values_b,
                     const HahnParams& params, double a, double b, int depth) {
    if (depth < 0)
        throw DomainError("grid_integral: depth must be >= 0");
    const std::size_t need = static_cast<std::size_t>(depth) + 1;
    if (values_a.size() < need || values_b.size() < need)
        throw DomainError("grid_integral: value spans shorter than depth+1");
    const double wa = a * (1.0 - params.q) - params.omega;
    const double wb = b * (1.0 - params.q) - params.omega;
    double sum_a = 0.0, sum_b = 0.0;
    double qk = 1.0;
    for (std::size_t k = 0; k < need; ++k) {
        sum_a += qk * values_a[k];
        sum_b += qk * values_b[k];
        qk *= params.q;
    }
    return wb * sum_b - wa * sum_a;
}

double fundamental_theorem_residual(const std::function<double(double)>& f, const HahnParams& params,
                                    double a, double b, const QuadratureSpec& spec) {
    auto df = [&](double t) { return hahn_derivative(f, params, t); };
    const double lhs = integral(df, params, a, b, spec).value;
    return std::abs(lhs - (f(b) - f(a)));
}

double integration_by_parts_residual(const std::function<double(double)>& f,
                                     const std::function<double(double)>& g,
                                     const HahnParams& params, double a, double b,
                                     const QuadratureSpec& spec) {
    auto dg = [&](double t) { return hahn_derivative(g, params, t); };
    auto df = [&](double t) { return hahn_derivative(f, params, t); };
    auto lhs_integrand = [&](double t) { return f(t) * dg(t); };
    auto rhs_integrand = [&](double t) { return df(t) * g(params.sigma(t)); };
    const double lhs = integral(lhs_integrand, params, a, b, spec).value;
    const double boundary = f(b) * g(b) - f(a) * g(a);
    const double rhs = boundary - integral(rhs_integrand, params, a, b, spec).value;
    return std::abs(lhs - rhs);
}

bool positivity_check(const std::function<double(double)>& f, const HahnParams& params,
                      double bound, const QuadratureSpec& spec) {
    const SeriesSum anchored = integral_from_omega0(f, params, bound, spec);
    // Forward orientation: omega0 -> bound if omega0 <= bound, else bound -> omega0.
    const double oriented = (params.omega0 <= bound) ? anchored.value : -anchored.value;
    const double tolerance = 10.0 * spec.tail_tol * (1.0 + std::abs(oriented));
    return oriented >= -tolerance;
}

} // namespace hahn
