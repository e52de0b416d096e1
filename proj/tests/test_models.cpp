#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hahn/models.hpp"
#include "test_util.hpp"

using namespace hahn;
using testutil::uniform;

namespace {

double sup_distance(const GridFunction& gf, const std::function<double(double)>& reference) {
    double m = 0.0;
    for (std::size_t k = 0; k < gf.values_a.size(); ++k)
        m = std::max(m, std::abs(gf.values_a[k] - reference(gf.lattice.orbit_a.points[k])));
    for (std::size_t k = 0; k < gf.values_b.size(); ++k)
        m = std::max(m, std::abs(gf.values_b[k] - reference(gf.lattice.orbit_b.points[k])));
    return m;
}

} // namespace

TEST_CASE("example 1 closed form") {
    for (int trial = 0; trial < 20; ++trial) {
        HahnParams p(uniform(0.3, 0.99), uniform(0.0, 0.8));
        models::ModelProblem mp = models::example1_problem(p);

        // fixed boundary value
        CHECK(mp.closed_form(1.0) == doctest::Approx(1.0).epsilon(1e-14));

        // free-end condition D[y](0) = 0
        CHECK(std::abs(hahn_derivative(mp.closed_form, p, 0.0)) < 1e-12);

        // D[D[y]](t) = 1 at random lattice points
        auto dy = [&](double t) { return hahn_derivative(mp.closed_form, p, t); };
        for (int s = 0; s < 5; ++s) {
            const double t = p.sigma_k(uniform(0.0, 1.0), s);
            if (p.is_omega0(t) || p.is_omega0(p.sigma(t)))
                continue;
            CHECK(hahn_derivative(dy, p, t) == doctest::Approx(1.0).epsilon(1e-7));
        }
    }
}

TEST_CASE("example 2 closed form across the omega family") {
    // q = 0.99, omega in {0, 0.2, 0.5}: the published minimizer family.
    // omega = 0 makes the left anchor coincide with omega0 = 0, exercising
    // the degenerate-orbit handling.
    for (double omega : {0.0, 0.2, 0.5}) {
        CAPTURE(omega);
        HahnParams p(0.99, omega);
        models::ModelProblem mp = models::example2_problem(p, 2.0, 2.0);
        Lattice lat = build_lattice(p, 0.0, 1.0, 60);
        GridFunction gf = sample_grid(lat, mp.closed_form);
        CHECK(el_residual(mp.problem, gf).max_abs() < 1e-9);
        CHECK(std::abs(nbc_residual_b(mp.problem, gf)) < 1e-9);
        // omega = 0 routes through the Frechet-slope estimate at the
        // degenerate left anchor
        CHECK(std::abs(nbc_residual_a(mp.problem, gf)) < 1e-9);
    }
    CHECK_THROWS_AS(models::example2_problem(HahnParams(0.5, 0.1), -1.0, 2.0), DomainError);
}

TEST_CASE("penalty limit of example 2") {
    HahnParams p(0.99, 0.02);
    auto limit = models::example2_penalty_limit(p);
    double previous = 1e300;
    for (double g : {1e2, 1e4, 1e6}) {
        models::ModelProblem mp = models::example2_problem(p, g, g);
        SolveOptions opts;
        opts.depth = 60;
        SolveReport report = solve_direct(mp.problem, opts);
        REQUIRE(report.converged);
        const double dist = sup_distance(report.minimizer, limit);
        CHECK(dist < previous);
        previous = dist;
    }
    CHECK(previous < 1e-4);
}

TEST_CASE("adjustment model construction") {
    HahnParams p(0.9, 0.05);
    models::AdjustmentSpec spec(p, 1.1, 2.0, 1.0, expr::parse("t"));

    SUBCASE("spec validation") {
        CHECK_THROWS_AS(models::AdjustmentSpec(p, 0.9, 1.0, 1.0, expr::parse("t")), DomainError);
        CHECK_THROWS_AS(models::AdjustmentSpec(p, 1.1, -1.0, 1.0, expr::parse("t")), DomainError);
        CHECK_THROWS_AS(models::AdjustmentSpec(p, 1.1, 1.0, -1.0, expr::parse("t")), DomainError);
        CHECK_THROWS_AS(models::AdjustmentSpec(p, 1.1, 1.0, 1.0, expr::parse("y")), DomainError);
    }

    SUBCASE("discount weight at the fixed point is one") {
        CHECK(qw_exponential(p, 1.0 - spec.r, p.omega0, 1e-13).value == 1.0);
        VariationalProblem prob = models::adjustment_problem(spec);
        CHECK(prob.point_coeffs.at("Ew")(p.omega0) == 1.0);
    }

    SUBCASE("validity window violation is rejected") {
        // 1/((r-1)(1-q)) must exceed the lattice reach
        HahnParams tight(0.5, 0.0);
        CHECK_THROWS_AS(
            models::adjustment_problem(models::AdjustmentSpec(tight, 4.0, 1.0, 1.0, expr::parse("t"))),
            DomainError);
    }
}

TEST_CASE("adjustment model: constant target is an exact fixed point") {
    HahnParams p(0.9, 0.05);
    models::AdjustmentSpec spec(p, 1.1, 2.0, 1.0, expr::parse("3.5"));

    GridFunction shot = models::adjustment_shooting_solve(spec, 40);
    CHECK(sup_distance(shot, [](double) { return 3.5; }) < 1e-12);
    CHECK(std::abs(shot.value_omega0 - 3.5) < 1e-12);

    VariationalProblem prob = models::adjustment_problem(spec);
    SolveOptions opts;
    opts.depth = 40;
    SolveReport report = solve_direct(prob, opts);
    REQUIRE(report.converged);
    CHECK(sup_distance(report.minimizer, [](double) { return 3.5; }) < 1e-10);
    CHECK(report.el_residuals.max_abs() < 1e-10);
    CHECK(std::abs(report.functional_value) < 1e-12);
}

TEST_CASE("adjustment model: shooting and direct solver agree") {
    HahnParams p(0.9, 0.05);
    models::AdjustmentSpec spec(p, 1.1, 2.0, 1.0, expr::parse("t"));

    GridFunction shot = models::adjustment_shooting_solve(spec, 60);
    VariationalProblem prob = models::adjustment_problem(spec);
    SolveOptions opts;
    opts.depth = 60;
    SolveReport report = solve_direct(prob, opts);
    REQUIRE(report.converged);

    double gap = 0.0;
    for (std::size_t k = 0; k < shot.values_a.size(); ++k) {
        gap = std::max(gap, std::abs(shot.values_a[k] - report.minimizer.values_a[k]));
        gap = std::max(gap, std::abs(shot.values_b[k] - report.minimizer.values_b[k]));
    }
    CHECK(gap < 1e-6);
}

TEST_CASE("continuous oracle") {
    auto y = models::continuous_adjustment_oracle(1.05, 1.0, 1.0);

    SUBCASE("end slopes vanish by construction") {
        const double h = 1e-6;
        CHECK(std::abs((y(h) - y(-h)) / (2 * h)) < 1e-8);
        CHECK(std::abs((y(1.0 + h) - y(1.0 - h)) / (2 * h)) < 1e-8);
    }

    SUBCASE("satisfies the differential equation at random points") {
        const double r = 1.05, alpha = 1.0;
        for (int trial = 0; trial < 30; ++trial) {
            const double t = uniform(0.0, 1.0);
            const double h = 1e-5;
            const double yp = (y(t + h) - y(t - h)) / (2 * h);
            const double ypp = (y(t + h) - 2 * y(t) + y(t - h)) / (h * h);
            CHECK(std::abs(alpha * (y(t) - t) - (r - 1.0) * yp - ypp) < 1e-5);
        }
    }

    SUBCASE("frozen regression values at r=1.05, alpha=1, T=1") {
        CHECK(y(0.00) == doctest::Approx(0.465845451204865).epsilon(1e-12));
        CHECK(y(0.25) == doctest::Approx(0.477814089028021).epsilon(1e-12));
        CHECK(y(0.50) == doctest::Approx(0.503841452115723).epsilon(1e-12));
        CHECK(y(0.75) == doctest::Approx(0.529769131375989).epsilon(1e-12));
        CHECK(y(1.00) == doctest::Approx(0.541608372522937).epsilon(1e-12));
    }

    CHECK_THROWS_AS(models::continuous_adjustment_oracle(0.9, 1.0, 1.0), DomainError);
}

TEST_CASE("continuum limit of the adjustment model") {
    // (q, omega) = (1 - 10^-k, 10^-k) keeps omega0 = 1 = T: the b-orbit is
    // the fixed point itself and the single-orbit shooting branch runs.
    auto oracle = models::continuous_adjustment_oracle(1.05, 1.0, 1.0);
    double previous = 1e300;
    for (int k = 1; k <= 3; ++k) {
        const double eps = std::pow(10.0, -k);
        HahnParams p(1.0 - eps, eps);
        models::AdjustmentSpec spec(p, 1.05, 1.0, 1.0, expr::parse("t"));
        const int depth = 60;
        GridFunction shot = models::adjustment_shooting_solve(spec, depth);

        // compare on the marching orbit (values_a spans [0, 1))
        double dist = std::abs(shot.value_omega0 - oracle(1.0));
        for (std::size_t j = 0; j < shot.values_a.size(); ++j)
            dist = std::max(dist, std::abs(shot.values_a[j] - oracle(shot.lattice.orbit_a.points[j])));
        CAPTURE(k);
        CHECK(dist < previous);
        previous = dist;
        if (k == 3)
            CHECK(dist < 1e-2);
    }
}
