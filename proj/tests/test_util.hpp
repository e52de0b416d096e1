#pragma once

// Shared helpers for the test suites: deterministic RNG and a tiny dense
// polynomial type used as the stock of smooth test functions.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace testutil {

inline std::mt19937& rng() {
    static std::mt19937 gen(0xC0FFEEu);
    return gen;
}

inline double uniform(double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(rng());
}

inline int uniform_int(int lo, int hi) {
    std::uniform_int_distribution<int> d(lo, hi);
    return d(rng());
}

/// Dense polynomial with coefficients in ascending degree order.
struct Poly {
    std::vector<double> coef; // coef[j] multiplies x^j

    double operator()(double x) const {
        double acc = 0.0;
        for (std::size_t j = coef.size(); j-- > 0;)
            acc = acc * x + coef[j];
        return acc;
    }

    std::function<double(double)> fn() const {
        return [p = *this](double x) { return p(x); };
    }
};

/// Random polynomial of degree <= max_degree whose values stay O(1) on
/// [-scale, scale]: coefficient j is drawn from U[-1,1] / scale^j.
inline Poly random_poly(int max_degree, double scale) {
    Poly p;
    const int deg = uniform_int(0, max_degree);
    p.coef.resize(static_cast<std::size_t>(deg) + 1);
    double s = 1.0;
    for (int j = 0; j <= deg; ++j) {
        p.coef[static_cast<std::size_t>(j)] = uniform(-1.0, 1.0) / s;
        s *= std::max(1.0, scale);
    }
    return p;
}

} // namespace testutil
