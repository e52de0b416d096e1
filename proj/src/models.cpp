#include "hahn/models.hpp"

#include <cmath>
#include <initializer_list>
#include <string>

namespace hahn {
namespace models {

using expr::Ast;

ModelProblem example1_problem(const HahnParams& params) {
    ModelProblem mp{
        VariationalProblem{params, 0.0, 1.0, expr::parse("y + (1/2)*Dy^2"), {}, {},
                           BoundarySpec{std::nullopt, 1.0}, std::nullopt, Sense::minimize},
        {}};
    const double q = params.q, omega = params.omega;
    mp.closed_form = [q, omega](double t) {
        return (t * t - omega * t + q + omega) / (q + 1.0);
    };
    return mp;
}

ModelProblem example2_problem(const HahnParams& params, double gamma, double nu) {
    if (!(gamma > 0.0) || !(nu > 0.0))
        throw DomainError("example2_problem: gamma and nu must be positive");
    ModelProblem mp{
        VariationalProblem{params, 0.0, 1.0,
                           expr::parse("y + (1/2)*Dy^2 + gamma*(yb-1)^2/2 + nu*ya^2/2"),
                           {{"gamma", gamma}, {"nu", nu}}, {},
                           BoundarySpec{std::nullopt, std::nullopt}, std::nullopt, Sense::minimize},
        {}};
    const double q = params.q, omega = params.omega;
    const double denom = (q + 1.0) * (gamma + nu * gamma + nu);
    const double c_lin = -(omega * (nu + gamma) - nu * (gamma - 1.0) * (q + 1.0) + gamma * nu) / denom;
    const double c_const = ((gamma - 1.0) * (q + 1.0) - gamma * (1.0 - omega)) / denom;
    mp.closed_form = [q, c_lin, c_const](double t) {
        return t * t / (q + 1.0) + c_lin * t + c_const;
    };
    return mp;
}

std::function<double(double)> example2_penalty_limit(const HahnParams& params) {
    const double q = params.q;
    return [q](double t) { return (t * t + q * t) / (q + 1.0); };
}

// ============================================================================
// Adjustment model
// ============================================================================

AdjustmentSpec::AdjustmentSpec(HahnParams p, double r_, double alpha_, double horizon_, Ast target_)
    : params(p), r(r_), alpha(alpha_), horizon(horizon_), target(std::move(target_)) {
    if (!(r > 1.0))
        throw DomainError("AdjustmentSpec: discount rate r must exceed 1");
    if (!(alpha > 0.0))
        throw DomainError("AdjustmentSpec: alpha must be positive");
    if (!(horizon > 0.0))
        throw DomainError("AdjustmentSpec: horizon must be positive");
    if (expr::uses_var(target, expr::Var::y) || expr::uses_var(target, expr::Var::Dy) ||
        expr::uses_var(target, expr::Var::ya) || expr::uses_var(target, expr::Var::yb))
        throw DomainError("AdjustmentSpec: the target path must be an expression in t only");
}

namespace {

double eval_target(const Ast& target, double t) {
    expr::Env env;
    env.t = t;
    return expr::eval(target, env);
}

void check_validity_window(const AdjustmentSpec& spec) {
    const double window = 1.0 / ((spec.r - 1.0) * (1.0 - spec.params.q));
    const double reach = std::max(std::abs(0.0 - spec.params.omega0),
                                  std::abs(spec.horizon - spec.params.omega0));
    if (!(reach < window))
        throw DomainError(
            "adjustment model: lattice leaves the validity window |t-omega0| < 1/((r-1)(1-q)) "
            "(reach " + std::to_string(reach) + ", window " + std::to_string(window) + ")");
}

} // namespace

namespace {

/// E(z, sigma^k(anchor)) is the k-suffix of the anchor's factor product, so
/// one O(M) sweep per anchor serves every orbit point. Off-orbit arguments
/// fall back to the direct product.
struct DiscountTable {
    HahnParams params;
    double z = 0.0;
    struct OrbitColumn {
        double anchor = 0.0;
        std::vector<double> suffix; // E at sigma^k(anchor), k = 0..M
    };
    std::vector<OrbitColumn> columns;

    DiscountTable(const HahnParams& p, double z_, std::initializer_list<double> anchors)
        : params(p), z(z_) {
        for (double anchor : anchors) {
            if (params.is_omega0(anchor))
                continue;
            OrbitColumn col;
            col.anchor = anchor;
            const double w0 = anchor * (1.0 - params.q) - params.omega;
            std::vector<double> factors;
            double qk = 1.0;
            while (std::abs(z * w0) * qk / (1.0 - params.q) >= 1e-14 &&
                   factors.size() < 4'000'000) {
                factors.push_back(1.0 + z * qk * w0);
                qk *= params.q;
            }
            col.suffix.assign(factors.size() + 1, 1.0);
            for (std::size_t i = factors.size(); i-- > 0;)
                col.suffix[i] = factors[i] * col.suffix[i + 1];
            columns.push_back(std::move(col));
        }
    }

    double operator()(double t) const {
        if (params.is_omega0(t))
            return 1.0;
        for (const OrbitColumn& col : columns) {
            const double ratio = (t - params.omega0) / (col.anchor - params.omega0);
            if (!(ratio > 0.0))
                continue;
            const long k = std::lround(std::log(ratio) / std::log(params.q));
            if (k < 0)
                continue;
            const double expected = params.sigma_k(col.anchor, k);
            if (std::abs(expected - t) <= 1e-9 * (1.0 + std::abs(t)))
                return k < static_cast<long>(col.suffix.size())
                           ? col.suffix[static_cast<std::size_t>(k)]
                           : 1.0;
        }
        return qw_exponential(params, z, t, 1e-14).value;
    }
};

} // namespace

VariationalProblem adjustment_problem(const AdjustmentSpec& spec) {
    check_validity_window(spec);
    VariationalProblem problem{
        spec.params, 0.0, spec.horizon,
        expr::parse("Ew*(alpha*(y - ybar_s)^2 + Dy^2)"),
        {{"alpha", spec.alpha}}, {},
        BoundarySpec{std::nullopt, std::nullopt}, std::nullopt, Sense::minimize};
    const HahnParams params = spec.params;
    // Discount weight: the q,omega-exponential with argument r-1, the only
    // sign for which the stationarity recurrence carries +(r-1) D[y] and the
    // (q,omega) -> (1,0) limit reproduces the continuous-model weight
    // e^{(r-1)t} up to a constant factor.
    const double z = spec.r - 1.0;
    problem.point_coeffs["Ew"] = DiscountTable(params, z, {0.0, spec.horizon});
    const Ast target = spec.target;
    problem.point_coeffs["ybar_s"] = [params, target](double t) {
        return eval_target(target, params.sigma(t));
    };
    return problem;
}

// ============================================================================
// Shooting solver
// ============================================================================

namespace {

struct March {
    std::vector<double> y; // 0..M
    std::vector<double> D; // D[y] at sigma^k(anchor), 0..M
};

/// Marches the rewritten Euler-Lagrange recurrence from an anchor with the
/// quantum Neumann condition D[y](anchor) = 0, carrying the state (y, D[y]).
March march_orbit(const AdjustmentSpec& spec, double anchor, double start_value, int steps) {
    const HahnParams& p = spec.params;
    March m;
    m.y.resize(static_cast<std::size_t>(steps) + 1);
    m.D.assign(static_cast<std::size_t>(steps) + 1, 0.0);
    m.y[0] = start_value;
    double t = anchor;
    for (int k = 0; k < steps; ++k) {
        const double t_next = p.sigma(t);
        const double d = t_next - t;
        if (d == 0.0) {
            // orbit tail collapsed onto omega0 in floating point
            for (int j = k; j < steps; ++j) {
                m.y[static_cast<std::size_t>(j) + 1] = m.y[static_cast<std::size_t>(j)];
                m.D[static_cast<std::size_t>(j) + 1] = m.D[static_cast<std::size_t>(j)];
            }
            break;
        }
        m.y[static_cast<std::size_t>(k) + 1] = m.y[static_cast<std::size_t>(k)] + d * m.D[static_cast<std::size_t>(k)];
        // stationarity recurrence of the discounted functional:
        //   [1 + (r-1)(t(1-q)-omega)] alpha (y(qt+omega) - ybar(qt+omega))
        //     = (r-1) D[y](t) + D[D[y]](t)
        const double c = 1.0 + (spec.r - 1.0) * (t * (1.0 - p.q) - p.omega);
        const double forcing = c * spec.alpha *
                               (m.y[static_cast<std::size_t>(k) + 1] - eval_target(spec.target, t_next));
        m.D[static_cast<std::size_t>(k) + 1] =
            m.D[static_cast<std::size_t>(k)] + d * (forcing - (spec.r - 1.0) * m.D[static_cast<std::size_t>(k)]);
        t = t_next;
    }
    return m;
}

int march_depth(const AdjustmentSpec& spec, int depth) {
    const double q = spec.params.q;
    const long adaptive = static_cast<long>(std::ceil(std::log(1e-13) / std::log(q)));
    return static_cast<int>(std::min<long>(std::max<long>({depth, adaptive, 3}), 400'000));
}

} // namespace

GridFunction adjustment_shooting_solve(const AdjustmentSpec& spec, int depth, double tol) {
    if (depth < 3)
        throw DomainError("adjustment_shooting_solve: depth >= 3 required");
    check_validity_window(spec);
    const HahnParams& p = spec.params;
    const int M = march_depth(spec, depth);
    const bool degenerate_a = p.is_omega0(0.0);
    const bool degenerate_b = p.is_omega0(spec.horizon);
    if (degenerate_a && degenerate_b)
        throw DomainError("adjustment_shooting_solve: both anchors coincide with omega0");

    Lattice lattice = build_lattice(p, 0.0, spec.horizon, depth);
    GridFunction gf = zero_grid(lattice);

    if (!degenerate_a && !degenerate_b) {
        // two scalars: the anchor values; match value and slope at omega0
        double s[2] = {eval_target(spec.target, 0.0), eval_target(spec.target, spec.horizon)};
        auto residual = [&](const double st[2], double r_out[2]) {
            March ma = march_orbit(spec, 0.0, st[0], M);
            March mb = march_orbit(spec, spec.horizon, st[1], M);
            r_out[0] = ma.y[static_cast<std::size_t>(M)] - mb.y[static_cast<std::size_t>(M)];
            r_out[1] = ma.D[static_cast<std::size_t>(M)] - mb.D[static_cast<std::size_t>(M)];
        };
        double r0[2];
        residual(s, r0);
        for (int iter = 0; iter < 50; ++iter) {
            if (std::max(std::abs(r0[0]), std::abs(r0[1])) < tol)
                break;
            double J[2][2];
            for (int col = 0; col < 2; ++col) {
                const double h = 1e-6 * (1.0 + std::abs(s[col]));
                double sp[2] = {s[0], s[1]};
                sp[col] += h;
                double rp[2];
                residual(sp, rp);
                J[0][col] = (rp[0] - r0[0]) / h;
                J[1][col] = (rp[1] - r0[1]) / h;
            }
            const double det = J[0][0] * J[1][1] - J[0][1] * J[1][0];
            if (det == 0.0 || !std::isfinite(det))
                throw NonconvergenceError("adjustment_shooting_solve: singular shooting system");
            const double ds0 = (-r0[0] * J[1][1] + r0[1] * J[0][1]) / det;
            const double ds1 = (-J[0][0] * r0[1] + J[1][0] * r0[0]) / det;
            s[0] += ds0;
            s[1] += ds1;
            residual(s, r0);
        }
        if (std::max(std::abs(r0[0]), std::abs(r0[1])) >= tol)
            throw NonconvergenceError("adjustment_shooting_solve: tail matching did not converge");

        March ma = march_orbit(spec, 0.0, s[0], M);
        March mb = march_orbit(spec, spec.horizon, s[1], M);
        for (int k = 0; k <= depth; ++k) {
            gf.values_a[static_cast<std::size_t>(k)] = ma.y[static_cast<std::size_t>(k)];
            gf.values_b[static_cast<std::size_t>(k)] = mb.y[static_cast<std::size_t>(k)];
        }
        gf.value_omega0 = 0.5 * (ma.y[static_cast<std::size_t>(M)] + mb.y[static_cast<std::size_t>(M)]);
        return gf;
    }

    // one degenerate anchor: shoot the other orbit alone; the second
    // boundary condition becomes a vanishing slope at the tail
    const double anchor = degenerate_a ? spec.horizon : 0.0;
    double s = eval_target(spec.target, anchor);
    auto residual = [&](double st) {
        March m = march_orbit(spec, anchor, st, M);
        return m.D[static_cast<std::size_t>(M)];
    };
    double r0 = residual(s);
    for (int iter = 0; iter < 50 && std::abs(r0) >= tol; ++iter) {
        const double h = 1e-6 * (1.0 + std::abs(s));
        const double slope = (residual(s + h) - r0) / h;
        if (slope == 0.0 || !std::isfinite(slope))
            throw NonconvergenceError("adjustment_shooting_solve: singular shooting system");
        s -= r0 / slope;
        r0 = residual(s);
    }
    if (std::abs(r0) >= tol)
        throw NonconvergenceError("adjustment_shooting_solve: tail slope condition did not converge");

    March m = march_orbit(spec, anchor, s, M);
    std::vector<double>& along = degenerate_a ? gf.values_b : gf.values_a;
    std::vector<double>& flat = degenerate_a ? gf.values_a : gf.values_b;
    for (int k = 0; k <= depth; ++k)
        along[static_cast<std::size_t>(k)] = m.y[static_cast<std::size_t>(k)];
    gf.value_omega0 = m.y[static_cast<std::size_t>(M)];
    for (double& v : flat)
        v = gf.value_omega0;
    return gf;
}

std::function<double(double)> continuous_adjustment_oracle(double r, double alpha, double T) {
    if (!(r > 1.0) || !(alpha > 0.0) || !(T > 0.0))
        throw DomainError("continuous_adjustment_oracle: need r > 1, alpha > 0, T > 0");
    const double disc = std::sqrt((r - 1.0) * (r - 1.0) + 4.0 * alpha);
    const double m1 = (-(r - 1.0) + disc) / 2.0;
    const double m2 = (-(r - 1.0) - disc) / 2.0;
    // y'(0) = 0 and y'(T) = 0 for y = t + (r-1)/alpha + A e^{m1 t} + B e^{m2 t}
    const double a11 = m1, a12 = m2;
    const double a21 = m1 * std::exp(m1 * T), a22 = m2 * std::exp(m2 * T);
    const double det = a11 * a22 - a12 * a21;
    if (det == 0.0)
        throw DomainError("continuous_adjustment_oracle: singular boundary system");
    const double A = (-a22 + a12) / det;
    const double B = (-a11 + a21) / det;
    const double shift = (r - 1.0) / alpha;
    return [=](double t) { return t + shift + A * std::exp(m1 * t) + B * std::exp(m2 * t); };
}

} // namespace models
} // namespace hahn
