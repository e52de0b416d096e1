#include "hahn/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hahn {

HahnParams::HahnParams(double q_, double omega_) : q(q_), omega(omega_) {
    if (!(q > 0.0) || !(q < 1.0))
        throw DomainError("HahnParams: q must lie strictly inside (0,1), got q=" + std::to_string(q_));
    if (!(omega >= 0.0))
        throw DomainError("HahnParams: omega must be >= 0, got omega=" + std::to_string(omega_));
    if (!std::isfinite(q) || !std::isfinite(omega))
        throw DomainError("HahnParams: parameters must be finite");
    omega0 = omega / (1.0 - q);
}

double HahnParams::q_bracket(long k) const {
    if (k < 0)
        throw DomainError("q_bracket: k must be >= 0");
    // (1 - q^k)/(1 - q); equals 0 for k=0 and 1 for k=1 exactly.
    return (1.0 - std::pow(q, static_cast<double>(k))) / (1.0 - q);
}

double HahnParams::sigma_k(double t, long k) const {
    if (k == 0)
        return t;
    if (k > 0) {
        const double qk = std::pow(q, static_cast<double>(k));
        return qk * t + omega * (1.0 - qk) / (1.0 - q);
    }
    const long m = -k;
    const double qm = std::pow(q, static_cast<double>(m));
    const double bracket = (1.0 - qm) / (1.0 - q);
    const double r = (t - omega * bracket) / qm;
    if (!std::isfinite(r))
        throw RangeError("sigma_k: q^" + std::to_string(k) + " overflows for q=" + std::to_string(q));
    return r;
}

bool HahnParams::is_omega0(double t) const {
    return std::abs(t - omega0) <= 1e-12 * std::max(1.0, std::abs(omega0));
}

Orbit build_orbit(const HahnParams& params, double anchor, int depth) {
    if (depth < 1)
        throw DomainError("build_orbit: depth must be >= 1");
    Orbit orbit;
    orbit.anchor = anchor;
    orbit.depth = depth;
    orbit.points.resize(static_cast<std::size_t>(depth) + 1);
    // Iterated sigma rather than the closed form, so that consecutive points
    // satisfy sigma(points[k]) == points[k+1] bit-exactly.
    double t = anchor;
    for (int k = 0; k <= depth; ++k) {
        orbit.points[static_cast<std::size_t>(k)] = t;
        t = params.sigma(t);
    }
    return orbit;
}

Lattice build_lattice(const HahnParams& params, double a, double b, int depth) {
    if (!(a < b))
        throw DomainError("build_lattice: need a < b");
    if (depth < 1)
        throw DomainError("build_lattice: depth must be >= 1");
    Lattice lat{params, a, b, build_orbit(params, a, depth), build_orbit(params, b, depth)};
    return lat;
}

GridFunction zero_grid(const Lattice& lattice) {
    GridFunction gf{lattice, {}, {}, 0.0};
    gf.values_a.assign(lattice.orbit_a.points.size(), 0.0);
    gf.values_b.assign(lattice.orbit_b.points.size(), 0.0);
    return gf;
}

GridFunction sample_grid(const Lattice& lattice, const std::function<double(double)>& f) {
    GridFunction gf = zero_grid(lattice);
    for (std::size_t k = 0; k < gf.values_a.size(); ++k)
        gf.values_a[k] = f(lattice.orbit_a.points[k]);
    for (std::size_t k = 0; k < gf.values_b.size(); ++k)
        gf.values_b[k] = f(lattice.orbit_b.points[k]);
    gf.value_omega0 = f(lattice.omega0());
    return gf;
}

double sup_norm(const GridFunction& gf) {
    double m = std::abs(gf.value_omega0);
    for (double v : gf.values_a) m = std::max(m, std::abs(v));
    for (double v : gf.values_b) m = std::max(m, std::abs(v));
    return m;
}

double grid_derivative(const GridFunction& gf, OrbitSide side, int k) {
    const Orbit& orbit = (side == OrbitSide::a) ? gf.lattice.orbit_a : gf.lattice.orbit_b;
    const std::vector<double>& v = (side == OrbitSide::a) ? gf.values_a : gf.values_b;
    if (k < 0 || k > orbit.depth - 1)
        throw RangeError("grid_derivative: index k=" + std::to_string(k) +
                         " out of range, need 0 <= k <= depth-1");
    const HahnParams& p = gf.lattice.params;
    const double t = orbit.points[static_cast<std::size_t>(k)];
    const double denom = (p.q - 1.0) * t + p.omega;
    if (denom == 0.0)
        throw DomainError("grid_derivative: degenerate orbit, point coincides with omega0");
    return (v[static_cast<std::size_t>(k) + 1] - v[static_cast<std::size_t>(k)]) / denom;
}

double hahn_derivative(const std::function<double(double)>& f, const HahnParams& params,
                       double t, double fixed_point_step) {
    if (params.is_omega0(t)) {
        // The quotient degenerates at the fixed point; the definition falls
        // back to f'(omega0), estimated here by a central difference.
        double h = fixed_point_step;
        if (!(h > 0.0))
            h = 1e-6 * std::max(1.0, std::abs(params.omega0));
        return (f(params.omega0 + h) - f(params.omega0 - h)) / (2.0 * h);
    }
    const double denom = (params.q - 1.0) * t + params.omega;
    if (denom == 0.0)
        throw DomainError("hahn_derivative: quotient denominator underflowed at t=" +
                          std::to_string(t) + " although t is not flagged as omega0");
    return (f(params.sigma(t)) - f(t)) / denom;
}

double power_rule(const HahnParams& params, double a_coef, double b_coef, int n, double t) {
    if (n < 1)
        throw DomainError("power_rule: n must be a positive integer");
    if (params.is_omega0(t))
        throw DomainError("power_rule: formula requires t != omega0");
    if (a_coef == 0.0)
        return 0.0;
    const double u = a_coef * params.sigma(t) + b_coef;
    const double v = a_coef * t + b_coef;
    // a * sum_{k=0}^{n-1} u^k v^(n-k-1)
    double sum = 0.0;
    for (int k = 0; k <= n - 1; ++k)
        sum += std::pow(u, k) * std::pow(v, n - k - 1);
    return a_coef * sum;
}

QwExp qw_exponential(const HahnParams& params, double z, double t, double tol) {
    if (!(tol > 0.0))
        throw DomainError("qw_exponential: tol must be positive");
    QwExp result;
    if (z == 0.0 || params.is_omega0(t))
        return result; // every factor is exactly 1
    const double w = t * (1.0 - params.q) - params.omega; // = (1-q)(t - omega0)
    double product = 1.0;
    double qk = 1.0;
    const long cap = 10'000'000;
    for (long k = 0; k < cap; ++k) {
        // Remaining tail deviation is bounded by |z w| q^k / (1-q).
        if (std::abs(z * w) * qk / (1.0 - params.q) < tol) {
            result.value = product;
            result.factors = static_cast<int>(k);
            return result;
        }
        const double factor = 1.0 + z * qk * w;
        if (factor == 0.0) {
            result.value = 0.0;
            result.factors = static_cast<int>(k) + 1;
            result.hit_zero = true;
            return result;
        }
        product *= factor;
        if (!std::isfinite(product))
            throw NonconvergenceError("qw_exponential: product diverged");
        qk *= params.q;
    }
    throw NonconvergenceError("qw_exponential: tail test not reached within factor cap");
}

} // namespace hahn
