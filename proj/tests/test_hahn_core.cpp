#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hahn/core.hpp"
#include "test_util.hpp"

using namespace hahn;
using testutil::uniform;
using testutil::uniform_int;

TEST_CASE("HahnParams validation and fixed point") {
    CHECK_THROWS_AS(HahnParams(0.0, 0.5), DomainError);
    CHECK_THROWS_AS(HahnParams(1.0, 0.5), DomainError);
    CHECK_THROWS_AS(HahnParams(1.3, 0.5), DomainError);
    CHECK_THROWS_AS(HahnParams(0.5, -0.1), DomainError);

    HahnParams p(0.5, 0.5);
    CHECK(p.omega0 == doctest::Approx(1.0));
    // sigma fixes omega0 up to one rounding
    CHECK(p.sigma(p.omega0) == doctest::Approx(p.omega0).epsilon(1e-15));
    CHECK(p.is_omega0(p.omega0));
    CHECK_FALSE(p.is_omega0(p.omega0 + 1e-6));
}

TEST_CASE("sigma point values") {
    HahnParams p(0.5, 0.5);
    CHECK(p.sigma(1.0) == 1.0);   // omega0 = 1 is the fixed point
    CHECK(p.sigma(-1.0) == 0.0);  // the step entering the piecewise derivative below
    HahnParams scaling(0.9, 0.0);
    CHECK(scaling.sigma(2.0) == doctest::Approx(1.8));
}

TEST_CASE("q_bracket") {
    HahnParams p(0.5, 0.5);
    CHECK(p.q_bracket(0) == 0.0);
    CHECK(p.q_bracket(1) == 1.0);
    CHECK(p.q_bracket(3) == doctest::Approx(1.75)); // 1 + 0.5 + 0.25
    CHECK_THROWS_AS(p.q_bracket(-1), DomainError);
}

TEST_CASE("sigma_k closed form, identity and inverse") {
    HahnParams p(0.5, 0.5);
    CHECK(p.sigma_k(3.7, 0) == 3.7);
    CHECK(p.sigma_k(0.0, 2) == doctest::Approx(0.75)); // sigma(sigma(0)) = sigma(0.5)
    CHECK(p.sigma_k(0.75, -2) == doctest::Approx(0.0));

    SUBCASE("matches iterated sigma for random parameters") {
        for (int trial = 0; trial < 200; ++trial) {
            HahnParams q(uniform(0.05, 0.95), uniform(0.0, 2.0));
            const double s = uniform(-3.0, 3.0);
            const int k = uniform_int(0, 60);
            double it = s;
            for (int j = 0; j < k; ++j)
                it = q.sigma(it);
            const double cf = q.sigma_k(s, k);
            CHECK(std::abs(cf - it) <= 1e-12 * (1.0 + std::abs(it)));
        }
    }

    SUBCASE("round trip sigma_k(sigma_k(t,k),-k) = t") {
        // The forward map contracts |t - omega0| by q^k, so the inverse can
        // only recover what rounding kept: restrict to q^k >= 1e-4, where
        // 1e-10 accuracy is meaningful.
        for (int trial = 0; trial < 200; ++trial) {
            HahnParams q(uniform(0.3, 0.95), uniform(0.0, 1.5));
            const double t = uniform(-2.0, 2.0);
            const int k_cap = static_cast<int>(std::log(1e-4) / std::log(q.q));
            const int k = uniform_int(0, std::min(30, std::max(0, k_cap)));
            const double back = q.sigma_k(q.sigma_k(t, k), -k);
            CHECK(std::abs(back - t) <= 1e-10 * (1.0 + std::abs(t)));
        }
    }

    SUBCASE("overflow for huge negative k reported") {
        HahnParams q(0.05, 0.0);
        CHECK_THROWS_AS(q.sigma_k(1.0, -400), RangeError);
    }
}

TEST_CASE("orbit construction") {
    HahnParams p(0.5, 0.5);
    Orbit orbit = build_orbit(p, 0.0, 4);
    REQUIRE(orbit.size() == 5);
    CHECK(orbit.points[0] == 0.0);
    CHECK(orbit.points[1] == 0.5);
    CHECK(orbit.points[2] == 0.75);

    SUBCASE("closed form matches stored points") {
        for (int k = 0; k <= orbit.depth; ++k)
            CHECK(orbit.points[(std::size_t)k] == doctest::Approx(p.sigma_k(orbit.anchor, k)).epsilon(1e-14));
    }
    SUBCASE("monotone geometric contraction toward omega0") {
        for (int k = 0; k + 1 <= orbit.depth; ++k) {
            const double d0 = std::abs(orbit.points[(std::size_t)k] - p.omega0);
            const double d1 = std::abs(orbit.points[(std::size_t)k + 1] - p.omega0);
            CHECK(d1 == doctest::Approx(p.q * d0).epsilon(1e-13));
        }
    }
}

TEST_CASE("lattice construction and invariants") {
    HahnParams p(0.5, 0.5);
    Lattice lat = build_lattice(p, 0.0, 2.0, 2);
    CHECK(lat.orbit_a.points == std::vector<double>{0.0, 0.5, 0.75});
    CHECK(lat.orbit_b.points == std::vector<double>{2.0, 1.5, 1.25});

    HahnParams scaling(0.9, 0.0);
    Lattice lat2 = build_lattice(scaling, 1.0, 2.0, 1);
    CHECK(lat2.orbit_a.points == std::vector<double>{1.0, 0.9});
    CHECK(lat2.orbit_b.points == std::vector<double>{2.0, 1.8});

    CHECK_THROWS_AS(build_lattice(p, 1.0, 1.0, 2), DomainError);
    CHECK_THROWS_AS(build_lattice(p, 2.0, 1.0, 2), DomainError);

    SUBCASE("every point lies in the hull of {a, b, omega0}") {
        for (int trial = 0; trial < 100; ++trial) {
            HahnParams q(uniform(0.2, 0.95), uniform(0.0, 1.0));
            const double a = uniform(-2.0, 0.5);
            const double b = a + uniform(0.1, 3.0);
            Lattice l = build_lattice(q, a, b, 40);
            const double lo = std::min({a, b, q.omega0}) - 1e-12;
            const double hi = std::max({a, b, q.omega0}) + 1e-12;
            for (double t : l.orbit_a.points) {
                CHECK(t >= lo);
                CHECK(t <= hi);
            }
            for (double t : l.orbit_b.points) {
                CHECK(t >= lo);
                CHECK(t <= hi);
            }
        }
    }
    SUBCASE("closed under sigma up to truncation depth") {
        Lattice l = build_lattice(p, -1.0, 3.0, 30);
        for (int k = 0; k < l.depth(); ++k) {
            CHECK(p.sigma(l.orbit_a.points[(std::size_t)k]) == l.orbit_a.points[(std::size_t)k + 1]);
            CHECK(p.sigma(l.orbit_b.points[(std::size_t)k]) == l.orbit_b.points[(std::size_t)k + 1]);
        }
    }
}

TEST_CASE("grid functions: sampling, sup_norm, grid_derivative") {
    HahnParams p(0.5, 0.5);
    Lattice lat = build_lattice(p, -1.0, 2.0, 10);

    CHECK(sup_norm(zero_grid(lat)) == 0.0);

    GridFunction ident = sample_grid(lat, [](double t) { return t; });
    CHECK(sup_norm(ident) == 2.0);
    for (int k = 0; k < lat.depth(); ++k) {
        CHECK(grid_derivative(ident, OrbitSide::a, k) == doctest::Approx(1.0));
        CHECK(grid_derivative(ident, OrbitSide::b, k) == doctest::Approx(1.0));
    }

    GridFunction constant = sample_grid(lat, [](double) { return 4.25; });
    CHECK(grid_derivative(constant, OrbitSide::b, 3) == 0.0);

    GridFunction spike = zero_grid(lat);
    spike.values_a[4] = -5.0;
    CHECK(sup_norm(spike) == 5.0);

    Lattice small = build_lattice(p, 0.0, 2.0, 1);
    GridFunction sq = sample_grid(small, [](double t) { return t * t; });
    // points 0, 0.5 -> (0.25 - 0) / 0.5
    CHECK(grid_derivative(sq, OrbitSide::a, 0) == doctest::Approx(0.5));
    CHECK_THROWS_AS(grid_derivative(sq, OrbitSide::a, 1), RangeError);
}

TEST_CASE("hahn_derivative point values") {
    HahnParams p(0.5, 0.5);
    // piecewise function: -t away from {-1, 0}; 0 at -1; 1 at 0
    auto f = [](double t) -> double {
        if (t == -1.0) return 0.0;
        if (t == 0.0) return 1.0;
        return -t;
    };
    CHECK(hahn_derivative(f, p, 0.0) == doctest::Approx(-3.0));
    CHECK(hahn_derivative(f, p, -1.0) == doctest::Approx(1.0));

    auto c7 = [](double) { return 7.0; };
    for (int trial = 0; trial < 20; ++trial) {
        HahnParams q(uniform(0.2, 0.95), uniform(0.0, 1.0));
        double t = uniform(-2.0, 2.0);
        if (q.is_omega0(t)) continue;
        CHECK(hahn_derivative(c7, q, t) == 0.0);
    }

    SUBCASE("fixed point falls back to a central difference") {
        HahnParams q(0.5, 0.5);
        auto sq = [](double t) { return t * t; };
        CHECK(hahn_derivative(sq, q, q.omega0) == doctest::Approx(2.0).epsilon(1e-8));
    }
}

TEST_CASE("operator identities on random polynomials") {
    using testutil::random_poly;

    SUBCASE("shift identity f(sigma(t)) = f(t) + ((q-1)t+omega) D[f](t)") {
        for (int trial = 0; trial < 200; ++trial) {
            HahnParams p(uniform(0.2, 0.95), uniform(0.0, 1.0));
            auto poly = random_poly(6, 3.0);
            double t = uniform(-2.0, 2.0);
            if (p.is_omega0(t)) continue;
            const double lhs = poly(p.sigma(t));
            const double rhs = poly(t) + ((p.q - 1.0) * t + p.omega) * hahn_derivative(poly.fn(), p, t);
            CHECK(std::abs(lhs - rhs) < 1e-10 * (1.0 + std::abs(lhs)));
        }
    }

    SUBCASE("linearity, product and quotient rules") {
        for (int trial = 0; trial < 200; ++trial) {
            HahnParams p(uniform(0.2, 0.95), uniform(0.0, 1.0));
            auto f = random_poly(5, 3.0);
            auto g = random_poly(5, 3.0);
            double t = uniform(-2.0, 2.0);
            if (p.is_omega0(t)) continue;
            const double df = hahn_derivative(f.fn(), p, t);
            const double dg = hahn_derivative(g.fn(), p, t);

            auto sum = [&](double x) { return f(x) + g(x); };
            CHECK(std::abs(hahn_derivative(sum, p, t) - (df + dg)) < 1e-9);

            auto prod = [&](double x) { return f(x) * g(x); };
            const double expect_prod = df * g(t) + f(p.sigma(t)) * dg;
            CHECK(std::abs(hahn_derivative(prod, p, t) - expect_prod) < 1e-9 * (1.0 + std::abs(expect_prod)));

            const double denom = g(t) * g(p.sigma(t));
            if (std::abs(denom) > 1e-3) {
                auto quot = [&](double x) { return f(x) / g(x); };
                const double expect_quot = (df * g(t) - f(t) * dg) / denom;
                CHECK(std::abs(hahn_derivative(quot, p, t) - expect_quot) <
                      1e-9 * (1.0 + std::abs(expect_quot)));
            }
        }
    }
}

TEST_CASE("power_rule") {
    HahnParams p(0.5, 0.5);
    CHECK(power_rule(p, 3.0, 9.0, 1, 0.3) == doctest::Approx(3.0)); // D of a linear function
    CHECK(power_rule(p, 1.0, 0.0, 2, 2.0) == doctest::Approx(3.5)); // sigma(2)=1.5; 1.5+2
    CHECK(power_rule(p, 0.0, 5.0, 4, 0.2) == 0.0);
    CHECK_THROWS_AS(power_rule(p, 1.0, 0.0, 2, p.omega0), DomainError);
    CHECK_THROWS_AS(power_rule(p, 1.0, 0.0, 0, 2.0), DomainError);

    SUBCASE("agrees with hahn_derivative of (at+b)^n") {
        for (int trial = 0; trial < 100; ++trial) {
            HahnParams q(uniform(0.2, 0.95), uniform(0.0, 1.0));
            const double a = uniform(-1.5, 1.5);
            const double b = uniform(-1.5, 1.5);
            const int n = uniform_int(1, 6);
            const double t = uniform(-1.5, 1.5);
            if (q.is_omega0(t) || a == 0.0) continue;
            auto f = [&](double x) { return std::pow(a * x + b, n); };
            const double direct = hahn_derivative(f, q, t);
            const double closed = power_rule(q, a, b, n, t);
            CHECK(std::abs(closed - direct) < 1e-10 * (1.0 + std::abs(direct)));
        }
    }
}

TEST_CASE("qw_exponential") {
    HahnParams p(0.5, 0.0);

    SUBCASE("exactly 1 at the fixed point and for z = 0") {
        for (int trial = 0; trial < 20; ++trial) {
            HahnParams q(uniform(0.2, 0.95), uniform(0.0, 1.0));
            CHECK(qw_exponential(q, uniform(-2.0, 2.0), q.omega0, 1e-12).value == 1.0);
            CHECK(qw_exponential(q, 0.0, uniform(-2.0, 2.0), 1e-12).value == 1.0);
        }
    }

    SUBCASE("truncated product matches brute force") {
        // E(1, 1) at (q=1/2, omega=0): prod_k (1 + 0.5^k * 0.5)
        QwExp r = qw_exponential(p, 1.0, 1.0, 1e-12);
        double brute = 1.0;
        for (int k = 0; k < 200; ++k)
            brute *= 1.0 + std::pow(0.5, k) * 0.5;
        CHECK(r.value == doctest::Approx(brute).epsilon(1e-11));
        CHECK(r.factors > 5);
        CHECK_FALSE(r.hit_zero);
    }

    SUBCASE("zero factor collapses the product with a flag") {
        // 1 + z * (t(1-q) - omega) = 0 at k=0 when z = -1/w
        const double w = 1.0 * 0.5; // t=1, q=0.5, omega=0
        QwExp r = qw_exponential(p, -1.0 / w, 1.0, 1e-12);
        CHECK(r.value == 0.0);
        CHECK(r.hit_zero);
    }

    CHECK_THROWS_AS(qw_exponential(p, 1.0, 1.0, -1.0), DomainError);
}
