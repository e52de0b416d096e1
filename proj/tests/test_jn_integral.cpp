#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hahn/integral.hpp"
#include "test_util.hpp"

using namespace hahn;
using testutil::random_poly;
using testutil::uniform;

namespace {

// Independent summation oracle: fixed very deep truncation, no tail test.
double brute_anchored(const std::function<double(double)>& f, const HahnParams& p, double x, int terms) {
    const double w = x * (1.0 - p.q) - p.omega;
    double sum = 0.0;
    double t = x;
    double qk = 1.0;
    for (int k = 0; k < terms; ++k) {
        sum += qk * f(t);
        qk *= p.q;
        t = p.sigma(t);
    }
    return w * sum;
}

} // namespace

TEST_CASE("anchored integral basics") {
    HahnParams p(0.5, 0.5);

    SUBCASE("zero at x = omega0") {
        CHECK(integral_from_omega0([](double) { return 123.0; }, p, p.omega0).value == 0.0);
    }

    SUBCASE("constant 1 integrates to x - omega0") {
        for (int trial = 0; trial < 50; ++trial) {
            HahnParams q(uniform(0.2, 0.95), uniform(0.0, 1.0));
            const double x = uniform(-2.0, 3.0);
            SeriesSum s = integral_from_omega0([](double) { return 1.0; }, q, x);
            CHECK(s.value == doctest::Approx(x - q.omega0).epsilon(1e-12));
        }
    }

    SUBCASE("f(t)=t matches the brute-force oracle") {
        auto f = [](double t) { return t; };
        SeriesSum s = integral_from_omega0(f, p, 2.0, {10'000, 1e-14, QuadratureSpec::Mode::tail_tol});
        CHECK(s.value == doctest::Approx(brute_anchored(f, p, 2.0, 4000)).epsilon(1e-13));
        CHECK(s.terms > 10);
        CHECK(s.tail_bound < 1e-12);
    }

    SUBCASE("nonconvergence is reported, never silently truncated") {
        HahnParams q(0.5, 0.0);
        // f(t) = 1/t on the orbit of 1: terms q^k * q^-k stay constant
        auto bad = [](double t) { return 1.0 / t; };
        CHECK_THROWS_AS(integral_from_omega0(bad, q, 1.0, {500, 1e-13, QuadratureSpec::Mode::tail_tol}),
                        NonconvergenceError);
        // fixed-depth mode sums the requested terms without complaint
        SeriesSum s = integral_from_omega0(bad, q, 1.0, {500, 1e-13, QuadratureSpec::Mode::fixed_depth});
        CHECK(s.value == doctest::Approx(0.5 * 500.0));
    }
}

TEST_CASE("interval integral") {
    HahnParams p(0.7, 0.3);
    auto f = [](double t) { return t * t - 0.5 * t; };

    CHECK(integral(f, p, 1.2, 1.2).value == 0.0);

    SUBCASE("constants integrate to c (b - a)") {
        for (int trial = 0; trial < 30; ++trial) {
            HahnParams q(uniform(0.2, 0.95), uniform(0.0, 1.0));
            const double a = uniform(-2.0, 1.0);
            const double b = a + uniform(0.0, 2.0);
            const double c = uniform(-3.0, 3.0);
            SeriesSum s = integral([c](double) { return c; }, q, a, b);
            CHECK(s.value == doctest::Approx(c * (b - a)).epsilon(1e-11));
        }
    }

    SUBCASE("antisymmetric under swapping the ends") {
        SeriesSum fwd = integral(f, p, 0.0, 1.5);
        SeriesSum bwd = integral(f, p, 1.5, 0.0);
        CHECK(fwd.value == doctest::Approx(-bwd.value).epsilon(1e-14));
    }

    SUBCASE("linearity on random polynomials") {
        for (int trial = 0; trial < 60; ++trial) {
            HahnParams q(uniform(0.3, 0.95), uniform(0.0, 1.0));
            const double scale = std::max({1.0, std::abs(q.omega0), 2.0});
            auto pf = random_poly(6, scale);
            auto pg = random_poly(6, scale);
            const double alpha = uniform(-2.0, 2.0);
            const double beta = uniform(-2.0, 2.0);
            const double a = uniform(-1.0, 0.5);
            const double b = a + uniform(0.1, 1.5);
            auto combo = [&](double t) { return alpha * pf(t) + beta * pg(t); };
            const double lhs = integral(combo, q, a, b).value;
            const double rhs = alpha * integral(pf.fn(), q, a, b).value +
                               beta * integral(pg.fn(), q, a, b).value;
            CHECK(std::abs(lhs - rhs) < 1e-10 * (1.0 + std::abs(lhs)));
        }
    }

    SUBCASE("additivity over a splitting point") {
        for (int trial = 0; trial < 60; ++trial) {
            HahnParams q(uniform(0.3, 0.95), uniform(0.0, 1.0));
            const double scale = std::max({1.0, std::abs(q.omega0), 2.0});
            auto pf = random_poly(6, scale);
            const double a = uniform(-1.0, 0.0);
            const double b = uniform(0.5, 2.0);
            const double c = uniform(-1.5, 2.5);
            const double whole = integral(pf.fn(), q, a, b).value;
            const double split = integral(pf.fn(), q, a, c).value + integral(pf.fn(), q, c, b).value;
            CHECK(std::abs(whole - split) < 1e-10 * (1.0 + std::abs(whole)));
        }
    }
}

TEST_CASE("grid_integral") {
    HahnParams p(0.5, 0.5);

    SUBCASE("zero values") {
        std::vector<double> z(11, 0.0);
        CHECK(grid_integral(z, z, p, 0.0, 2.0, 10) == 0.0);
    }

    SUBCASE("constant values at large depth approach b - a") {
        HahnParams q(0.5, 0.25);
        std::vector<double> ones(61, 1.0);
        const double v = grid_integral(ones, ones, q, 0.0, 1.0, 60);
        CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
    }

    SUBCASE("depth 0 reduces to the two-point formula") {
        std::vector<double> va{3.0}, vb{-2.0};
        const double expect = (2.0 * 0.5 - 0.5) * (-2.0) - (0.0 * 0.5 - 0.5) * 3.0;
        CHECK(grid_integral(va, vb, p, 0.0, 2.0, 0) == doctest::Approx(expect));
    }

    SUBCASE("length mismatch rejected") {
        std::vector<double> va(5, 1.0), vb(11, 1.0);
        CHECK_THROWS_AS(grid_integral(va, vb, p, 0.0, 2.0, 10), DomainError);
    }
}

TEST_CASE("fundamental theorem residual") {
    SUBCASE("constants") {
        HahnParams p(0.6, 0.2);
        CHECK(fundamental_theorem_residual([](double) { return 3.0; }, p, -0.5, 1.0) == 0.0);
    }

    SUBCASE("t^2 at (q=1/2, omega=1/2) over [0,1]") {
        HahnParams p(0.5, 0.5);
        auto f = [](double t) { return t * t; };
        CHECK(fundamental_theorem_residual(f, p, 0.0, 1.0, {10'000, 1e-13, QuadratureSpec::Mode::tail_tol}) < 1e-9);
    }

    SUBCASE("(2t+1)^3 at random parameters") {
        for (int trial = 0; trial < 30; ++trial) {
            HahnParams q(uniform(0.3, 0.9), uniform(0.0, 0.6));
            auto f = [](double t) { return std::pow(2.0 * t + 1.0, 3); };
            CHECK(fundamental_theorem_residual(f, q, 0.0, 1.0) < 1e-9);
        }
    }

    SUBCASE("random polynomials up to degree 6") {
        for (int trial = 0; trial < 100; ++trial) {
            HahnParams q(uniform(0.3, 0.99), uniform(0.0, 1.0));
            const double a = uniform(-1.0, 0.5);
            const double b = a + uniform(0.1, 1.5);
            const double scale = std::max({1.0, std::abs(q.omega0), std::abs(a), std::abs(b)});
            auto poly = random_poly(6, scale);
            CHECK(fundamental_theorem_residual(poly.fn(), q, a, b) < 1e-9);
        }
    }
}

TEST_CASE("integration by parts residual") {
    SUBCASE("f = 1 collapses to the fundamental theorem for g") {
        HahnParams p(0.5, 0.5);
        auto one = [](double) { return 1.0; };
        auto g = [](double t) { return t * t + t; };
        CHECK(integration_by_parts_residual(one, g, p, 0.0, 1.0) < 1e-9);
    }

    SUBCASE("f = g = t at random parameters") {
        for (int trial = 0; trial < 30; ++trial) {
            HahnParams q(uniform(0.3, 0.9), uniform(0.0, 0.8));
            auto id = [](double t) { return t; };
            CHECK(integration_by_parts_residual(id, id, q, 0.0, 1.0) < 1e-9);
        }
    }

    SUBCASE("f = g = 0") {
        HahnParams p(0.4, 0.1);
        auto z = [](double) { return 0.0; };
        CHECK(integration_by_parts_residual(z, z, p, 0.0, 1.0) == 0.0);
    }

    SUBCASE("random polynomial pairs") {
        for (int trial = 0; trial < 100; ++trial) {
            HahnParams q(uniform(0.3, 0.99), uniform(0.0, 1.0));
            const double a = uniform(-1.0, 0.5);
            const double b = a + uniform(0.1, 1.5);
            const double scale = std::max({1.0, std::abs(q.omega0), std::abs(a), std::abs(b)});
            auto pf = random_poly(5, scale);
            auto pg = random_poly(5, scale);
            CHECK(integration_by_parts_residual(pf.fn(), pg.fn(), q, a, b) < 1e-9);
        }
    }
}

TEST_CASE("positivity diagnosis") {
    SUBCASE("nonnegative orbit values, bound above omega0") {
        HahnParams p(0.5, 0.5); // omega0 = 1
        CHECK(positivity_check([](double) { return 1.0; }, p, 2.0));
    }
    SUBCASE("nonnegative orbit values, bound below omega0") {
        HahnParams p(0.5, 0.5);
        auto f = [&p](double t) { return (t - p.omega0) * (t - p.omega0); };
        CHECK(positivity_check(f, p, 0.25));
    }
    SUBCASE("negative integrand is diagnosed, hypothesis not met") {
        HahnParams p(0.5, 0.5);
        CHECK_FALSE(positivity_check([](double) { return -1.0; }, p, 2.0));
    }
}

TEST_CASE("triangle inequality counterexample stays failing") {
    // |integral f| <= integral |f| is NOT valid for this integral. Concrete
    // witness: q = 1/2, omega = 0 (omega0 = 0), [a,b] = [1,3], f = indicator
    // of the powers of two. The orbit of 1 hits only powers of two, the
    // orbit of 3 never does, so the two-orbit difference makes the right
    // side negative while the left side is 1.
    HahnParams p(0.5, 0.0);
    auto f = [](double t) -> double {
        if (t <= 0.0) return 0.0;
        int exponent = 0;
        const double mantissa = std::frexp(t, &exponent);
        return mantissa == 0.5 ? 1.0 : 0.0;
    };
    auto abs_f = [&f](double t) { return std::abs(f(t)); };

    const double lhs = std::abs(integral(f, p, 1.0, 3.0).value);
    const double rhs = integral(abs_f, p, 1.0, 3.0).value;
    CHECK(lhs == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rhs == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(lhs > rhs); // the inequality fails and must keep failing
}
