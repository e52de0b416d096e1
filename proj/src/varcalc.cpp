#include "hahn/varcalc.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdio>
#include <random>

namespace hahn {

using expr::Ast;
using expr::Env;
using expr::Var;

namespace {

// ============================================================================
// Symbolic partials of the Lagrangian in the four unknown slots
// ============================================================================

constexpr int kY = 0, kDy = 1, kYa = 2, kYb = 3;

Var slot_var(int s) {
    switch (s) {
        case kY: return Var::y;
        case kDy: return Var::Dy;
        case kYa: return Var::ya;
        default: return Var::yb;
    }
}

struct PartialSet {
    Ast L;
    Ast first[4];
    Ast second[4][4]; // symmetric, filled for i <= j
    bool uses[4] = {false, false, false, false};
    bool first_zero[4] = {true, true, true, true};
    bool second_zero[4][4];

    explicit PartialSet(const Ast& lagrangian) {
        L = expr::fold(lagrangian);
        for (int i = 0; i < 4; ++i)
            uses[i] = expr::uses_var(L, slot_var(i));
        for (int i = 0; i < 4; ++i) {
            first[i] = uses[i] ? expr::fold(expr::diff(L, slot_var(i))) : expr::make_number(0.0);
            first_zero[i] = is_zero(first[i]);
        }
        for (int i = 0; i < 4; ++i)
            for (int j = i; j < 4; ++j) {
                second[i][j] = first_zero[i] ? expr::make_number(0.0)
                                             : expr::fold(expr::diff(first[i], slot_var(j)));
                second_zero[i][j] = is_zero(second[i][j]);
            }
    }

    static bool is_zero(const Ast& a) {
        return a->kind == expr::NodeKind::number && a->number == 0.0;
    }

    const Ast& dd(int i, int j) const { return i <= j ? second[i][j] : second[j][i]; }
    bool dd_zero(int i, int j) const { return i <= j ? second_zero[i][j] : second_zero[j][i]; }
};

// ============================================================================
// Discrete term table: the truncated two-orbit series plus tail closure
// ============================================================================

using Overlay = std::vector<std::pair<std::string, double>>;

/// Affine form c0 + sum_i coef[i] * x[slot[i]] with at most three slots.
/// Every integrand argument is one of these, which lets the solver express
/// its tail-anchored offset variables and fixed-end substitutions without a
/// separate assembly path.
struct Affine {
    int n = 0;
    int slot[3] = {-1, -1, -1};
    double coef[3] = {0.0, 0.0, 0.0};
    double c0 = 0.0;

    void add(int s, double c) {
        assert(n < 3);
        slot[n] = s;
        coef[n] = c;
        ++n;
    }

    double value(const std::vector<double>& x) const {
        double v = c0;
        for (int i = 0; i < n; ++i)
            v += coef[i] * x[static_cast<std::size_t>(slot[i])];
        return v;
    }
};

struct Term {
    double t = 0.0; // evaluation point of the integrand
    double W = 0.0; // signed series weight of this term
    Affine y;       // the y(qt+omega) argument
    Affine dy;      // the D[y](t) argument
    const Overlay* overlay = nullptr;
    bool is_closure = false;
};

struct SideGeom {
    bool degenerate = false;
    double anchor = 0.0;
    double weight = 0.0; // (anchor(1-q) - omega), signed into W with side sign
    double sign = 1.0;   // +1 for the b side, -1 for the a side
    std::vector<double> pts; // sigma^k(anchor), k = 0..N
    std::vector<Overlay> overlays; // per k = 0..N-1
};

struct Geometry {
    HahnParams params;
    int depth = 0;
    SideGeom side[2]; // [0] = a, [1] = b
    Overlay overlay_omega0;
    bool has_coeffs = false;
};

Geometry build_geometry(const VariationalProblem& problem, int depth) {
    Geometry g{problem.params, depth, {}, {}, !problem.point_coeffs.empty()};
    const double anchors[2] = {problem.a, problem.b};
    const double signs[2] = {-1.0, +1.0};
    for (int s = 0; s < 2; ++s) {
        SideGeom& side = g.side[s];
        side.anchor = anchors[s];
        side.sign = signs[s];
        side.degenerate = problem.params.is_omega0(side.anchor);
        if (side.degenerate)
            continue;
        side.weight = side.anchor * (1.0 - problem.params.q) - problem.params.omega;
        side.pts.resize(static_cast<std::size_t>(depth) + 1);
        double t = side.anchor;
        for (int k = 0; k <= depth; ++k) {
            side.pts[static_cast<std::size_t>(k)] = t;
            t = problem.params.sigma(t);
        }
        if (g.has_coeffs) {
            side.overlays.resize(static_cast<std::size_t>(depth));
            for (int k = 0; k < depth; ++k)
                for (const auto& [name, fn] : problem.point_coeffs)
                    side.overlays[static_cast<std::size_t>(k)].emplace_back(
                        name, fn(side.pts[static_cast<std::size_t>(k)]));
        }
    }
    if (g.has_coeffs)
        for (const auto& [name, fn] : problem.point_coeffs)
            g.overlay_omega0.emplace_back(name, fn(problem.params.omega0));
    return g;
}

// ============================================================================
// Assembly of value / gradient / Hessian over the flat slot vector
// ============================================================================

struct HessSink {
    virtual void add(int i, int j, double v) = 0;
    virtual ~HessSink() = default;
};

struct AssemblyOut {
    double value = 0.0;
    double tail_estimate = 0.0;
    std::vector<double>* grad = nullptr;     // sized to the slot count
    std::vector<double>* grad_abs = nullptr; // sum of |contributions| per slot
    HessSink* hess = nullptr;
};

void assemble(const std::vector<Term>& terms, const Affine& ya_form, const Affine& yb_form,
              const PartialSet& P, const std::map<std::string, double>& params,
              const std::vector<double>& x, AssemblyOut& out) {
    Env env;
    env.params = &params;
    env.ya = ya_form.value(x);
    env.yb = yb_form.value(x);
    for (const Term& term : terms) {
        env.t = term.t;
        env.y = term.y.value(x);
        env.dy = term.dy.value(x);
        env.point_params = term.overlay;

        const double value = term.W * expr::eval(P.L, env);
        out.value += value;
        if (term.is_closure)
            out.tail_estimate += std::abs(value);
        if (!out.grad && !out.hess)
            continue;

        const Affine* args[4] = {&term.y, &term.dy, &ya_form, &yb_form};

        double p[4];
        for (int s = 0; s < 4; ++s)
            p[s] = P.first_zero[s] ? 0.0 : expr::eval(P.first[s], env);

        if (out.grad) {
            std::vector<double>& grad = *out.grad;
            for (int s = 0; s < 4; ++s) {
                if (p[s] == 0.0)
                    continue;
                for (int e = 0; e < args[s]->n; ++e) {
                    const double contribution = term.W * p[s] * args[s]->coef[e];
                    grad[static_cast<std::size_t>(args[s]->slot[e])] += contribution;
                    if (out.grad_abs)
                        (*out.grad_abs)[static_cast<std::size_t>(args[s]->slot[e])] +=
                            std::abs(contribution);
                }
            }
        }
        if (out.hess) {
            for (int si = 0; si < 4; ++si)
                for (int sj = 0; sj < 4; ++sj) {
                    if (P.dd_zero(si, sj))
                        continue;
                    const double h = term.W * expr::eval(P.dd(si, sj), env);
                    if (h == 0.0)
                        continue;
                    for (int ei = 0; ei < args[si]->n; ++ei)
                        for (int ej = 0; ej < args[sj]->n; ++ej)
                            out.hess->add(args[si]->slot[ei], args[sj]->slot[ej],
                                          h * args[si]->coef[ei] * args[sj]->coef[ej]);
                }
        }
    }
}

// ============================================================================
// Pivoted tridiagonal LU (LAPACK dgttrf/dgtts2 layout)
// ============================================================================

struct TriFactor {
    int n = 0;
    std::vector<double> dl, d, du, du2;
    std::vector<int> piv;

    bool factor() {
        du2.assign(n > 2 ? static_cast<std::size_t>(n) - 2 : 0, 0.0);
        piv.assign(static_cast<std::size_t>(n), 0);
        for (int i = 0; i + 1 < n; ++i) {
            if (std::abs(d[i]) >= std::abs(dl[i])) {
                if (d[i] == 0.0)
                    return false;
                const double fact = dl[i] / d[i];
                dl[i] = fact;
                d[i + 1] -= fact * du[i];
            } else {
                const double fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                const double temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if (i + 2 < n) {
                    du2[i] = du[i + 1];
                    du[i + 1] = -fact * du[i + 1];
                }
                piv[i] = 1;
            }
        }
        return n == 0 || d[n - 1] != 0.0;
    }

    void solve(double* b) const {
        for (int i = 0; i + 1 < n; ++i) {
            if (piv[i] == 0) {
                b[i + 1] -= dl[i] * b[i];
            } else {
                const double temp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = temp - dl[i] * b[i + 1];
            }
        }
        if (n == 0)
            return;
        b[n - 1] /= d[n - 1];
        if (n > 1)
            b[n - 2] = (b[n - 2] - du[n - 2] * b[n - 1]) / d[n - 2];
        for (int i = n - 3; i >= 0; --i)
            b[i] = (b[i] - du[i] * b[i + 1] - du2[i] * b[i + 2]) / d[i];
    }
};

/// Arrowhead system: block-tridiagonal interior (one block per orbit chain)
/// bordered by a handful of dense rows/columns (free anchors, the shared
/// omega0 value and the isoperimetric multiplier). Solved by a Schur
/// complement on the border after Thomas sweeps over the chains.
struct Bordered {
    int n_int = 0;
    int m = 0;
    int chain_split = 0; // interior indices below this belong to chain a
    std::vector<double> diag, sub, sup; // interior tridiagonal
    std::vector<double> Bc; // n_int x m, column-major border columns
    std::vector<double> Br; // m x n_int, row-major border rows
    std::vector<double> C;  // m x m row-major

    void init(int interior, int border, int split) {
        n_int = interior;
        m = border;
        chain_split = split;
        diag.assign(static_cast<std::size_t>(n_int), 0.0);
        sub.assign(n_int > 0 ? static_cast<std::size_t>(n_int) - 1 : 0, 0.0);
        sup.assign(n_int > 0 ? static_cast<std::size_t>(n_int) - 1 : 0, 0.0);
        Bc.assign(static_cast<std::size_t>(n_int) * m, 0.0);
        Br.assign(static_cast<std::size_t>(n_int) * m, 0.0);
        C.assign(static_cast<std::size_t>(m) * m, 0.0);
    }

    void add(int i, int j, double v) {
        const bool bi = i >= n_int, bj = j >= n_int;
        if (!bi && !bj) {
            if (i == j)
                diag[static_cast<std::size_t>(i)] += v;
            else if (j == i + 1)
                sup[static_cast<std::size_t>(i)] += v;
            else if (j == i - 1)
                sub[static_cast<std::size_t>(j)] += v;
            else
                assert(false && "interior coupling outside the tridiagonal band");
        } else if (!bi) {
            Bc[static_cast<std::size_t>(j - n_int) * n_int + i] += v;
        } else if (!bj) {
            Br[static_cast<std::size_t>(i - n_int) * n_int + j] += v;
        } else {
            C[static_cast<std::size_t>(i - n_int) * m + (j - n_int)] += v;
        }
    }

    // y = H x (diagnostics)
    std::vector<double> apply(const std::vector<double>& x) const {
        std::vector<double> y(static_cast<std::size_t>(n_int + m), 0.0);
        for (int i = 0; i < n_int; ++i) {
            double acc = diag[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)];
            const bool lo_same = i > 0 && (i - 1 < chain_split) == (i < chain_split);
            const bool hi_same = i + 1 < n_int && (i + 1 < chain_split) == (i < chain_split);
            if (lo_same)
                acc += sub[static_cast<std::size_t>(i) - 1] * x[static_cast<std::size_t>(i) - 1];
            if (hi_same)
                acc += sup[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i) + 1];
            for (int j = 0; j < m; ++j)
                acc += Bc[static_cast<std::size_t>(j) * n_int + i] * x[static_cast<std::size_t>(n_int + j)];
            y[static_cast<std::size_t>(i)] = acc;
        }
        for (int j = 0; j < m; ++j) {
            double acc = 0.0;
            for (int k = 0; k < n_int; ++k)
                acc += Br[static_cast<std::size_t>(j) * n_int + k] * x[static_cast<std::size_t>(k)];
            for (int c = 0; c < m; ++c)
                acc += C[static_cast<std::size_t>(j) * m + c] * x[static_cast<std::size_t>(n_int + c)];
            y[static_cast<std::size_t>(n_int + j)] = acc;
        }
        return y;
    }

    // Solves (H + mu I) s = -g. Returns false when a factorization breaks down.
    bool solve(const std::vector<double>& g, double mu, std::vector<double>& s) const {
        TriFactor fa, fb;
        fa.n = chain_split;
        fb.n = n_int - chain_split;
        fa.d.assign(diag.begin(), diag.begin() + chain_split);
        fb.d.assign(diag.begin() + chain_split, diag.end());
        for (double& v : fa.d) v += mu;
        for (double& v : fb.d) v += mu;
        fa.dl.assign(fa.n > 0 ? static_cast<std::size_t>(fa.n) - 1 : 0, 0.0);
        fa.du = fa.dl;
        fb.dl.assign(fb.n > 0 ? static_cast<std::size_t>(fb.n) - 1 : 0, 0.0);
        fb.du = fb.dl;
        for (int i = 0; i + 1 < chain_split; ++i) {
            fa.dl[i] = sub[static_cast<std::size_t>(i)];
            fa.du[i] = sup[static_cast<std::size_t>(i)];
        }
        for (int i = chain_split; i + 1 < n_int; ++i) {
            fb.dl[i - chain_split] = sub[static_cast<std::size_t>(i)];
            fb.du[i - chain_split] = sup[static_cast<std::size_t>(i)];
        }
        if (!fa.factor() || !fb.factor())
            return false;
        auto tri_solve = [&](std::vector<double>& v) {
            if (fa.n > 0) fa.solve(v.data());
            if (fb.n > 0) fb.solve(v.data() + fa.n);
        };

        // u = T^-1 g_int ; X = T^-1 Bc
        std::vector<double> u(g.begin(), g.begin() + n_int);
        tri_solve(u);
        std::vector<std::vector<double>> X(static_cast<std::size_t>(m));
        for (int j = 0; j < m; ++j) {
            X[static_cast<std::size_t>(j)].assign(Bc.begin() + static_cast<std::size_t>(j) * n_int,
                                                  Bc.begin() + static_cast<std::size_t>(j + 1) * n_int);
            tri_solve(X[static_cast<std::size_t>(j)]);
        }

        // S = C + mu I - Br X ; rhs = Br u - g_border
        std::vector<double> S(static_cast<std::size_t>(m) * m, 0.0);
        std::vector<double> rhs(static_cast<std::size_t>(m), 0.0);
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < m; ++j) {
                double dot = 0.0;
                for (int k = 0; k < n_int; ++k)
                    dot += Br[static_cast<std::size_t>(i) * n_int + k] *
                           X[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)];
                S[static_cast<std::size_t>(i) * m + j] = C[static_cast<std::size_t>(i) * m + j] - dot;
            }
            S[static_cast<std::size_t>(i) * m + i] += mu;
            double dot = 0.0;
            for (int k = 0; k < n_int; ++k)
                dot += Br[static_cast<std::size_t>(i) * n_int + k] * u[static_cast<std::size_t>(k)];
            rhs[static_cast<std::size_t>(i)] = dot - g[static_cast<std::size_t>(n_int + i)];
        }

        // dense m x m Gaussian elimination with partial pivoting
        for (int col = 0; col < m; ++col) {
            int p = col;
            for (int r = col + 1; r < m; ++r)
                if (std::abs(S[static_cast<std::size_t>(r) * m + col]) >
                    std::abs(S[static_cast<std::size_t>(p) * m + col]))
                    p = r;
            if (S[static_cast<std::size_t>(p) * m + col] == 0.0)
                return false;
            if (p != col) {
                for (int c = 0; c < m; ++c)
                    std::swap(S[static_cast<std::size_t>(p) * m + c], S[static_cast<std::size_t>(col) * m + c]);
                std::swap(rhs[static_cast<std::size_t>(p)], rhs[static_cast<std::size_t>(col)]);
            }
            for (int r = col + 1; r < m; ++r) {
                const double f = S[static_cast<std::size_t>(r) * m + col] / S[static_cast<std::size_t>(col) * m + col];
                if (f == 0.0) continue;
                for (int c = col; c < m; ++c)
                    S[static_cast<std::size_t>(r) * m + c] -= f * S[static_cast<std::size_t>(col) * m + c];
                rhs[static_cast<std::size_t>(r)] -= f * rhs[static_cast<std::size_t>(col)];
            }
        }
        std::vector<double> sb(static_cast<std::size_t>(m), 0.0);
        for (int r = m - 1; r >= 0; --r) {
            double acc = rhs[static_cast<std::size_t>(r)];
            for (int c = r + 1; c < m; ++c)
                acc -= S[static_cast<std::size_t>(r) * m + c] * sb[static_cast<std::size_t>(c)];
            sb[static_cast<std::size_t>(r)] = acc / S[static_cast<std::size_t>(r) * m + r];
        }

        // back-substitute: s_int = -u - X s_border
        s.assign(static_cast<std::size_t>(n_int + m), 0.0);
        for (int k = 0; k < n_int; ++k) {
            double acc = -u[static_cast<std::size_t>(k)];
            for (int j = 0; j < m; ++j)
                acc -= X[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)] * sb[static_cast<std::size_t>(j)];
            s[static_cast<std::size_t>(k)] = acc;
        }
        for (int j = 0; j < m; ++j)
            s[static_cast<std::size_t>(n_int + j)] = sb[static_cast<std::size_t>(j)];
        for (double v : s)
            if (!std::isfinite(v))
                return false;
        return true;
    }
};

double inf_norm(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

double two_norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

// ============================================================================
// The discrete stationarity system used by both solvers
// ============================================================================
//
// Solver unknowns are offsets from the shared omega0 value:
//   y(sigma^k(anchor)) = v0 + z_k,  z_depth == 0 on both orbits.
// The offsets decay like q^k toward the tails, so the Dy stencils
// (z_{k+1} - z_k)/d_k stay relatively accurate where plain values would
// cancel catastrophically (d_k shrinks like q^k). Fixed anchor values are
// substituted as z_0 = alpha - v0 directly inside the affine forms.

struct DiscreteSystem {
    const VariationalProblem* problem = nullptr;
    Geometry geom;
    std::vector<Term> terms;
    Affine ya_form, yb_form;

    int chain_base[2] = {-1, -1}; // phys slot of z_0 per side (-1 = degenerate)
    int v0_slot = -1;
    int n_phys = 0;

    std::vector<int> theta_of_phys; // -1 = never referenced / pinned
    std::vector<double> pinned;
    int n_int = 0;
    int chain_split = 0;
    int n_border = 0;
    int n_theta() const { return n_int + n_border; }

    double sense_sign = 1.0;

    void build(const VariationalProblem& prob, int solve_depth, double sense) {
        problem = &prob;
        sense_sign = sense;
        geom = build_geometry(prob, solve_depth);
        if (geom.side[0].degenerate && geom.side[1].degenerate)
            throw DomainError("solve: both anchors coincide with omega0");

        int next = 0;
        for (int s = 0; s < 2; ++s)
            if (!geom.side[s].degenerate) {
                chain_base[s] = next;
                next += solve_depth; // z_0..z_{depth-1}; z_depth is identically 0
            }
        v0_slot = next++;
        n_phys = next;

        const std::optional<double> fixed[2] = {prob.boundary.at_a, prob.boundary.at_b};

        // end-value forms
        for (int s = 0; s < 2; ++s) {
            Affine& form = (s == 0) ? ya_form : yb_form;
            if (geom.side[s].degenerate) {
                if (fixed[s])
                    form.c0 = *fixed[s];
                else
                    form.add(v0_slot, 1.0);
            } else if (fixed[s]) {
                form.c0 = *fixed[s];
            } else {
                form.add(v0_slot, 1.0);
                form.add(chain_base[s], 1.0);
            }
        }

        // integrand terms
        const double q = prob.params.q;
        for (int s = 0; s < 2; ++s) {
            const SideGeom& side = geom.side[s];
            if (side.degenerate)
                continue;
            auto z_entry = [&](Affine& form, int k, double coef) {
                // contribution coef * z_k with the tail and fixed-end rules
                if (k == solve_depth)
                    return; // z_depth == 0
                if (k == 0 && fixed[s]) {
                    // z_0 = alpha - v0
                    form.c0 += coef * (*fixed[s]);
                    form.add(v0_slot, -coef);
                    return;
                }
                form.add(chain_base[s] + k, coef);
            };
            double qk = 1.0;
            for (int k = 0; k < solve_depth; ++k) {
                Term term;
                term.t = side.pts[static_cast<std::size_t>(k)];
                const double d = side.pts[static_cast<std::size_t>(k) + 1] -
                                 side.pts[static_cast<std::size_t>(k)];
                if (d == 0.0)
                    throw RangeError("solve: orbit points collapsed inside the solve depth");
                term.W = side.sign * side.weight * qk;
                term.y.add(v0_slot, 1.0);
                z_entry(term.y, k + 1, 1.0);
                z_entry(term.dy, k + 1, 1.0 / d);
                z_entry(term.dy, k, -1.0 / d);
                term.overlay = geom.has_coeffs ? &side.overlays[static_cast<std::size_t>(k)] : nullptr;
                terms.push_back(term);
                qk *= q;
            }
            Term tail;
            tail.t = prob.params.omega0;
            const double d = side.pts[static_cast<std::size_t>(solve_depth)] -
                             side.pts[static_cast<std::size_t>(solve_depth) - 1];
            tail.W = side.sign * side.weight * qk / (1.0 - q);
            tail.y.add(v0_slot, 1.0);
            z_entry(tail.dy, solve_depth, 1.0 / d);
            z_entry(tail.dy, solve_depth - 1, -1.0 / d);
            tail.overlay = geom.has_coeffs ? &geom.overlay_omega0 : nullptr;
            tail.is_closure = true;
            terms.push_back(tail);
        }

        // theta layout: chain interiors, then border [z_a0?, z_b0?, v0?]
        theta_of_phys.assign(static_cast<std::size_t>(n_phys), -1);
        pinned.assign(static_cast<std::size_t>(n_phys), 0.0);
        int ti = 0;
        for (int s = 0; s < 2; ++s) {
            if (geom.side[s].degenerate)
                continue;
            for (int k = 1; k < solve_depth; ++k)
                theta_of_phys[static_cast<std::size_t>(chain_base[s] + k)] = ti++;
            if (s == 0)
                chain_split = ti;
        }
        if (geom.side[0].degenerate)
            chain_split = 0;
        n_int = ti;

        int border = 0;
        for (int s = 0; s < 2; ++s)
            if (!geom.side[s].degenerate && !fixed[s])
                theta_of_phys[static_cast<std::size_t>(chain_base[s])] = n_int + border++;
        std::optional<double> v0_pin;
        if (geom.side[0].degenerate && fixed[0])
            v0_pin = fixed[0];
        if (geom.side[1].degenerate && fixed[1])
            v0_pin = fixed[1];
        if (v0_pin)
            pinned[static_cast<std::size_t>(v0_slot)] = *v0_pin;
        else
            theta_of_phys[static_cast<std::size_t>(v0_slot)] = n_int + border++;
        n_border = border;
    }

    std::vector<double> phys_from_theta(const std::vector<double>& theta) const {
        std::vector<double> x(static_cast<std::size_t>(n_phys), 0.0);
        for (int i = 0; i < n_phys; ++i) {
            const int t = theta_of_phys[static_cast<std::size_t>(i)];
            x[static_cast<std::size_t>(i)] =
                t >= 0 ? theta[static_cast<std::size_t>(t)] : pinned[static_cast<std::size_t>(i)];
        }
        return x;
    }

    /// Default initial iterate: the straight line through the end data.
    std::vector<double> line_init() const {
        const double ya0 = problem->boundary.at_a.value_or(problem->boundary.at_b.value_or(0.0));
        const double yb0 = problem->boundary.at_b.value_or(problem->boundary.at_a.value_or(0.0));
        auto line = [&](double t) {
            return ya0 + (t - problem->a) * (yb0 - ya0) / (problem->b - problem->a);
        };
        const double v0 = line(problem->params.omega0);
        std::vector<double> theta(static_cast<std::size_t>(n_theta()), 0.0);
        for (int s = 0; s < 2; ++s) {
            if (geom.side[s].degenerate)
                continue;
            for (int k = 0; k < geom.depth; ++k) {
                const int t = theta_of_phys[static_cast<std::size_t>(chain_base[s] + k)];
                if (t >= 0)
                    theta[static_cast<std::size_t>(t)] =
                        line(geom.side[s].pts[static_cast<std::size_t>(k)]) - v0;
            }
        }
        const int tv0 = theta_of_phys[static_cast<std::size_t>(v0_slot)];
        if (tv0 >= 0)
            theta[static_cast<std::size_t>(tv0)] = v0;
        return theta;
    }

    /// Seeds theta from a user grid (head values; deeper entries keep the line).
    void seed_from_grid(const GridFunction& init, std::vector<double>& theta) const {
        const double v0 = init.value_omega0;
        for (int s = 0; s < 2; ++s) {
            if (geom.side[s].degenerate)
                continue;
            const std::vector<double>& vals = (s == 0) ? init.values_a : init.values_b;
            const int upto = std::min<int>(geom.depth - 1, static_cast<int>(vals.size()) - 1);
            for (int k = 0; k <= upto; ++k) {
                const int t = theta_of_phys[static_cast<std::size_t>(chain_base[s] + k)];
                if (t >= 0)
                    theta[static_cast<std::size_t>(t)] = vals[static_cast<std::size_t>(k)] - v0;
            }
        }
        const int tv0 = theta_of_phys[static_cast<std::size_t>(v0_slot)];
        if (tv0 >= 0)
            theta[static_cast<std::size_t>(tv0)] = v0;
    }

    struct Eval {
        double value = 0.0;
        double tail = 0.0;
        std::vector<double> grad;     // theta-reduced
        std::vector<double> grad_abs; // per-row assembled magnitude (scale)
    };

    Eval evaluate(const PartialSet& P, const std::vector<double>& theta, Bordered* H) const {
        return evaluate_signed(P, theta, H, sense_sign);
    }

    Eval evaluate_signed(const PartialSet& P, const std::vector<double>& theta, Bordered* H,
                         double sign) const {
        Eval out;
        const std::vector<double> x = phys_from_theta(theta);
        std::vector<double> grad_phys(static_cast<std::size_t>(n_phys), 0.0);

        struct MapSink : HessSink {
            const DiscreteSystem* sys;
            Bordered* H;
            double sign;
            void add(int i, int j, double v) override {
                const int ti = sys->theta_of_phys[static_cast<std::size_t>(i)];
                const int tj = sys->theta_of_phys[static_cast<std::size_t>(j)];
                if (ti < 0 || tj < 0)
                    return;
                H->add(ti, tj, sign * v);
            }
        } sink;
        sink.sys = this;
        sink.H = H;
        sink.sign = sign;
        if (H)
            H->init(n_int, n_border, chain_split);

        std::vector<double> grad_abs_phys(static_cast<std::size_t>(n_phys), 0.0);
        AssemblyOut acc;
        acc.grad = &grad_phys;
        acc.grad_abs = &grad_abs_phys;
        acc.hess = H ? &sink : nullptr;
        assemble(terms, ya_form, yb_form, P, problem->param_values, x, acc);

        out.value = sign * acc.value;
        out.tail = acc.tail_estimate;
        out.grad.assign(static_cast<std::size_t>(n_theta()), 0.0);
        out.grad_abs.assign(static_cast<std::size_t>(n_theta()), 0.0);
        for (int i = 0; i < n_phys; ++i) {
            const int t = theta_of_phys[static_cast<std::size_t>(i)];
            if (t >= 0) {
                out.grad[static_cast<std::size_t>(t)] += sign * grad_phys[static_cast<std::size_t>(i)];
                out.grad_abs[static_cast<std::size_t>(t)] += grad_abs_phys[static_cast<std::size_t>(i)];
            }
        }
        return out;
    }

    /// Head of the chains as a user-facing grid function.
    GridFunction head_grid(const std::vector<double>& theta, int report_depth) const {
        Lattice lat = build_lattice(problem->params, problem->a, problem->b, report_depth);
        GridFunction gf = zero_grid(lat);
        const std::vector<double> x = phys_from_theta(theta);
        const double v0 = x[static_cast<std::size_t>(v0_slot)];
        const std::optional<double> fixed[2] = {problem->boundary.at_a, problem->boundary.at_b};
        for (int s = 0; s < 2; ++s) {
            std::vector<double>& vals = (s == 0) ? gf.values_a : gf.values_b;
            for (int k = 0; k <= report_depth; ++k) {
                double y;
                if (geom.side[s].degenerate)
                    y = v0;
                else if (k == geom.depth)
                    y = v0;
                else if (k == 0 && fixed[s])
                    y = *fixed[s];
                else
                    y = v0 + x[static_cast<std::size_t>(chain_base[s] + k)];
                vals[static_cast<std::size_t>(k)] = y;
            }
        }
        gf.value_omega0 = v0;
        return gf;
    }

    GridFunction deep_grid(const std::vector<double>& theta) const {
        return head_grid(theta, geom.depth);
    }
};

int adaptive_depth(const VariationalProblem& problem, const SolveOptions& opts) {
    const double q = problem.params.q;
    const long needed = static_cast<long>(std::ceil(std::log(opts.series_tol) / std::log(q)));
    long depth = std::max<long>(opts.depth, std::max<long>(needed, 2));
    depth = std::min<long>(depth, opts.max_solve_depth);
    // Geometric representability: the spacing of consecutive orbit points is
    // (1-q) q^k |anchor - omega0|; once it falls under the floating-point
    // spacing near omega0 the points collapse onto one double and the Dy
    // stencils divide by zero. Stop well above that.
    const double floor_gap = 64.0 * 2.22e-16 *
                             std::max({1.0, std::abs(problem.params.omega0), std::abs(problem.a),
                                       std::abs(problem.b)});
    for (double anchor : {problem.a, problem.b}) {
        const double dist = std::abs(anchor - problem.params.omega0) * (1.0 - q);
        if (problem.params.is_omega0(anchor) || dist <= floor_gap)
            continue;
        const long cap = static_cast<long>(std::floor(std::log(floor_gap / dist) / std::log(q)));
        depth = std::min(depth, std::max<long>(cap, 2));
    }
    return static_cast<int>(depth);
}

// ============================================================================
// Newton driver on the stationarity residual
// ============================================================================

struct NewtonOutcome {
    bool converged = false;
    int iterations = 0;
    double residual_norm = 0.0;
    bool gradient_fallback = false;
    std::string message;
};

/// Damped Newton for residual systems R(theta) = 0 with Jacobian supplied as
/// a bordered matrix. The merit is ||R||_2; steps are backtracked and a
/// scaled descent step on the merit is the fallback when the Newton
/// direction stalls. The functional is extremized, not only minimized, so
/// convergence targets stationarity rather than descent of the objective.
/// Residual callback contract: fill R (the stationarity system), S (per-row
/// assembled magnitudes used to scale the convergence test; may be left
/// empty for pure absolute tolerances) and optionally the Jacobian.
using ResidualFn =
    std::function<void(const std::vector<double>&, std::vector<double>&, std::vector<double>&, Bordered*)>;

double scaled_norm(const std::vector<double>& R, const std::vector<double>& S) {
    double m = 0.0;
    for (std::size_t i = 0; i < R.size(); ++i) {
        const double scale = 1.0 + (i < S.size() ? S[i] : 0.0);
        m = std::max(m, std::abs(R[i]) / scale);
    }
    return m;
}

NewtonOutcome newton_solve(const ResidualFn& residual, std::vector<double>& theta, double tol,
                           int max_iter) {
    NewtonOutcome out;
    std::vector<double> R, S;
    Bordered H;
    double mu = 0.0;
    for (int iter = 0; iter < max_iter; ++iter) {
        out.iterations = iter;
        residual(theta, R, S, &H);
        out.residual_norm = scaled_norm(R, S);
        if (out.residual_norm < tol) {
            out.converged = true;
            return out;
        }
        const double merit0 = two_norm(R);

        std::vector<double> step;
        bool have_step = H.solve(R, mu, step);
        for (int bump = 0; !have_step && bump < 10; ++bump) {
            mu = std::max(mu * 100.0, 1e-10);
            have_step = H.solve(R, mu, step);
        }

        bool accepted = false;
        if (have_step) {
#ifdef HAHN_NEWTON_TRACE
            {
                std::vector<double> trial(theta);
                for (std::size_t i = 0; i < trial.size(); ++i) trial[i] += step[i];
                std::vector<double> Rt, St;
                residual(trial, Rt, St, nullptr);
                std::fprintf(stderr, "[newton] iter=%d merit0=%.3e full-step merit=%.3e mu=%.1e\n",
                             iter, merit0, two_norm(Rt), mu);
            }
#endif
            double alpha = 1.0;
            for (int ls = 0; ls < 12; ++ls) {
                std::vector<double> trial(theta);
                for (std::size_t i = 0; i < trial.size(); ++i)
                    trial[i] += alpha * step[i];
                std::vector<double> Rt, St;
                residual(trial, Rt, St, nullptr);
                if (scaled_norm(Rt, St) < tol || two_norm(Rt) < (1.0 - 1e-4 * alpha) * merit0) {
                    theta = std::move(trial);
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
        }
        if (!accepted) {
            out.gradient_fallback = true;
            double alpha = 1.0 / (1.0 + merit0);
            bool improved = false;
            for (int ls = 0; ls < 20; ++ls) {
                std::vector<double> trial(theta);
                for (std::size_t i = 0; i < trial.size(); ++i)
                    trial[i] -= alpha * R[i];
                std::vector<double> Rt, St;
                residual(trial, Rt, St, nullptr);
                if (two_norm(Rt) < merit0) {
                    theta = std::move(trial);
                    improved = true;
                    break;
                }
                alpha *= 0.5;
            }
            if (!improved) {
                out.message = "stalled: neither Newton nor fallback step reduced the residual";
                return out;
            }
            mu = std::max(mu, 1e-8);
        } else {
            mu *= 0.25;
            if (mu < 1e-14)
                mu = 0.0;
        }
    }
    residual(theta, R, S, nullptr);
    out.residual_norm = scaled_norm(R, S);
    out.converged = out.residual_norm < tol;
    out.iterations = max_iter;
    if (!out.converged)
        out.message = "maximum iterations reached";
    return out;
}

// ============================================================================
// Term tables over user grids (plain value storage)
// ============================================================================

struct GridTable {
    Geometry geom;
    std::vector<Term> terms;
    Affine ya_form, yb_form;
    int chain_base[2] = {-1, -1};
    int v0_slot = -1;
    int count = 0;

    GridTable(const VariationalProblem& problem, const GridFunction& gf) {
        const int N = gf.depth();
        geom = build_geometry(problem, N);
        int next = 0;
        for (int s = 0; s < 2; ++s)
            if (!geom.side[s].degenerate) {
                chain_base[s] = next;
                next += N + 1;
            }
        v0_slot = next++;
        count = next;

        for (int s = 0; s < 2; ++s) {
            Affine& form = (s == 0) ? ya_form : yb_form;
            form.add(geom.side[s].degenerate ? v0_slot : chain_base[s], 1.0);
        }
        const double q = problem.params.q;
        for (int s = 0; s < 2; ++s) {
            const SideGeom& side = geom.side[s];
            if (side.degenerate)
                continue;
            double qk = 1.0;
            int last = 0; // deepest index whose stencil pair is distinguishable
            for (int k = 0; k < N; ++k) {
                const double d = side.pts[static_cast<std::size_t>(k) + 1] -
                                 side.pts[static_cast<std::size_t>(k)];
                if (d == 0.0)
                    break; // orbit collapsed onto omega0 in floating point
                Term term;
                term.t = side.pts[static_cast<std::size_t>(k)];
                term.W = side.sign * side.weight * qk;
                term.y.add(chain_base[s] + k + 1, 1.0);
                term.dy.add(chain_base[s] + k + 1, 1.0 / d);
                term.dy.add(chain_base[s] + k, -1.0 / d);
                term.overlay = geom.has_coeffs ? &side.overlays[static_cast<std::size_t>(k)] : nullptr;
                terms.push_back(term);
                qk *= q;
                last = k + 1;
            }
            // tail closure: the integrand frozen at its omega0-limit state
            Term tail;
            tail.t = problem.params.omega0;
            const double d = side.pts[static_cast<std::size_t>(last)] -
                             side.pts[static_cast<std::size_t>(last) - 1];
            tail.W = side.sign * side.weight * qk / (1.0 - q);
            tail.y.add(v0_slot, 1.0);
            tail.dy.add(chain_base[s] + last, 1.0 / d);
            tail.dy.add(chain_base[s] + last - 1, -1.0 / d);
            tail.overlay = geom.has_coeffs ? &geom.overlay_omega0 : nullptr;
            tail.is_closure = true;
            terms.push_back(tail);
        }
    }

    std::vector<double> values(const GridFunction& gf) const {
        std::vector<double> x(static_cast<std::size_t>(count), 0.0);
        for (int s = 0; s < 2; ++s) {
            if (geom.side[s].degenerate)
                continue;
            const std::vector<double>& vals = (s == 0) ? gf.values_a : gf.values_b;
            for (std::size_t k = 0; k < vals.size(); ++k)
                x[static_cast<std::size_t>(chain_base[s]) + k] = vals[k];
        }
        x[static_cast<std::size_t>(v0_slot)] = gf.value_omega0;
        return x;
    }
};

void check_grid_matches(const VariationalProblem& problem, const GridFunction& gf) {
    const HahnParams& p = gf.lattice.params;
    if (std::abs(p.q - problem.params.q) > 1e-15 || std::abs(p.omega - problem.params.omega) > 1e-15 ||
        gf.lattice.a != problem.a || gf.lattice.b != problem.b)
        throw DomainError("grid function lattice does not match the problem");
    if (gf.depth() < 1)
        throw DomainError("grid function depth must be >= 1");
}

/// Integrand evaluation environment at orbit index k of one side.
Env point_env(const VariationalProblem& problem, const GridFunction& gf, int side, int k,
              const Geometry& geom, const Overlay** overlay_out) {
    const SideGeom& sg = geom.side[side];
    const std::vector<double>& vals = (side == 0) ? gf.values_a : gf.values_b;
    Env env;
    env.params = &problem.param_values;
    env.t = sg.pts[static_cast<std::size_t>(k)];
    env.y = vals[static_cast<std::size_t>(k) + 1];
    const double d = sg.pts[static_cast<std::size_t>(k) + 1] - sg.pts[static_cast<std::size_t>(k)];
    env.dy = (vals[static_cast<std::size_t>(k) + 1] - vals[static_cast<std::size_t>(k)]) / d;
    env.ya = geom.side[0].degenerate ? gf.value_omega0 : gf.values_a[0];
    env.yb = geom.side[1].degenerate ? gf.value_omega0 : gf.values_b[0];
    *overlay_out = geom.has_coeffs ? &sg.overlays[static_cast<std::size_t>(k)] : nullptr;
    env.point_params = *overlay_out;
    return env;
}

} // namespace

// ============================================================================
// Public API
// ============================================================================

double ElResiduals::max_abs() const {
    double m = 0.0;
    for (double v : orbit_a) m = std::max(m, std::abs(v));
    for (double v : orbit_b) m = std::max(m, std::abs(v));
    return m;
}

FunctionalValue functional_with_tail(const VariationalProblem& problem, const GridFunction& gf) {
    check_grid_matches(problem, gf);
    GridTable table(problem, gf);
    PartialSet P(problem.lagrangian);
    AssemblyOut acc;
    const std::vector<double> x = table.values(gf);
    assemble(table.terms, table.ya_form, table.yb_form, P, problem.param_values, x, acc);
    return {acc.value, acc.tail_estimate};
}

double functional_value(const VariationalProblem& problem, const GridFunction& gf) {
    return functional_with_tail(problem, gf).value;
}

std::vector<double> functional_gradient(const VariationalProblem& problem, const GridFunction& gf) {
    check_grid_matches(problem, gf);
    GridTable table(problem, gf);
    PartialSet P(problem.lagrangian);
    const std::vector<double> x = table.values(gf);
    std::vector<double> grad_internal(static_cast<std::size_t>(table.count), 0.0);
    AssemblyOut acc;
    acc.grad = &grad_internal;
    assemble(table.terms, table.ya_form, table.yb_form, P, problem.param_values, x, acc);

    // re-emit in the documented flat layout [values_a, values_b, value_omega0]
    const int N = gf.depth();
    std::vector<double> grad(static_cast<std::size_t>(2 * (N + 1) + 1), 0.0);
    for (int s = 0; s < 2; ++s) {
        const int base_out = s * (N + 1);
        if (table.geom.side[s].degenerate)
            continue;
        for (int k = 0; k <= N; ++k)
            grad[static_cast<std::size_t>(base_out + k)] =
                grad_internal[static_cast<std::size_t>(table.chain_base[s] + k)];
    }
    grad[static_cast<std::size_t>(2 * (N + 1))] = grad_internal[static_cast<std::size_t>(table.v0_slot)];
    return grad;
}

double first_variation(const VariationalProblem& problem, const GridFunction& gf,
                       const GridFunction& h) {
    check_grid_matches(problem, gf);
    check_grid_matches(problem, h);
    if (h.depth() != gf.depth())
        throw DomainError("first_variation: h must live on the same lattice as y");
    const std::vector<double> grad = functional_gradient(problem, gf);
    const int N = gf.depth();
    double acc = 0.0;
    for (int k = 0; k <= N; ++k) {
        acc += grad[static_cast<std::size_t>(k)] * h.values_a[static_cast<std::size_t>(k)];
        acc += grad[static_cast<std::size_t>(N + 1 + k)] * h.values_b[static_cast<std::size_t>(k)];
    }
    acc += grad[static_cast<std::size_t>(2 * (N + 1))] * h.value_omega0;
    return acc;
}

ElResiduals el_residual(const VariationalProblem& problem, const GridFunction& gf) {
    check_grid_matches(problem, gf);
    if (gf.depth() < 2)
        throw DomainError("el_residual: depth >= 2 required");
    PartialSet P(problem.lagrangian);
    Geometry geom = build_geometry(problem, gf.depth());
    ElResiduals out;
    for (int s = 0; s < 2; ++s) {
        if (geom.side[s].degenerate)
            continue;
        std::vector<double>& res = (s == 0) ? out.orbit_a : out.orbit_b;
        const int N = gf.depth();
        int usable = N; // indices whose sigma-step is still representable
        for (int k = 0; k < N; ++k)
            if (geom.side[s].pts[static_cast<std::size_t>(k) + 1] ==
                geom.side[s].pts[static_cast<std::size_t>(k)]) {
                usable = k;
                break;
            }
        std::vector<double> p3(static_cast<std::size_t>(usable), 0.0);
        std::vector<double> p2(static_cast<std::size_t>(usable), 0.0);
        for (int k = 0; k < usable; ++k) {
            const Overlay* ov = nullptr;
            Env env = point_env(problem, gf, s, k, geom, &ov);
            p2[static_cast<std::size_t>(k)] = P.first_zero[kY] ? 0.0 : expr::eval(P.first[kY], env);
            p3[static_cast<std::size_t>(k)] = P.first_zero[kDy] ? 0.0 : expr::eval(P.first[kDy], env);
        }
        res.assign(usable > 0 ? static_cast<std::size_t>(usable) - 1 : 0, 0.0);
        for (int k = 0; k + 1 < usable; ++k) {
            const double d = geom.side[s].pts[static_cast<std::size_t>(k) + 1] -
                             geom.side[s].pts[static_cast<std::size_t>(k)];
            res[static_cast<std::size_t>(k)] =
                p2[static_cast<std::size_t>(k)] -
                (p3[static_cast<std::size_t>(k) + 1] - p3[static_cast<std::size_t>(k)]) / d;
        }
    }
    return out;
}

namespace {

/// integral over [a,b] of the chosen partial of L along the trajectory,
/// truncated at the grid depth with the geometric tail closure.
double integral_of_partial(const VariationalProblem& problem, const GridFunction& gf,
                           const PartialSet& P, int slot) {
    GridTable table(problem, gf);
    const std::vector<double> x = table.values(gf);
    Env env;
    env.params = &problem.param_values;
    env.ya = table.ya_form.value(x);
    env.yb = table.yb_form.value(x);
    double acc = 0.0;
    for (const Term& term : table.terms) {
        env.t = term.t;
        env.y = term.y.value(x);
        env.dy = term.dy.value(x);
        env.point_params = term.overlay;
        acc += term.W * (P.first_zero[slot] ? 0.0 : expr::eval(P.first[slot], env));
    }
    return acc;
}

/// d3L{y} at a free anchor. When the anchor sits at omega0 the stencil slope
/// does not exist; the opposite orbit's deepest slope stands in for the
/// Frechet derivative (an approximation, noted in the interface docs).
double d3_at_anchor(const VariationalProblem& problem, const GridFunction& gf,
                    const PartialSet& P, int side) {
    Geometry geom = build_geometry(problem, gf.depth());
    Env env;
    env.params = &problem.param_values;
    Overlay ov;
    if (geom.has_coeffs) {
        const double anchor = side == 0 ? problem.a : problem.b;
        for (const auto& [name, fn] : problem.point_coeffs)
            ov.emplace_back(name, fn(anchor));
        env.point_params = &ov;
    }
    env.ya = geom.side[0].degenerate ? gf.value_omega0 : gf.values_a[0];
    env.yb = geom.side[1].degenerate ? gf.value_omega0 : gf.values_b[0];
    if (!geom.side[side].degenerate) {
        const std::vector<double>& vals = (side == 0) ? gf.values_a : gf.values_b;
        const SideGeom& sg = geom.side[side];
        env.t = sg.pts[0];
        env.y = vals[1];
        env.dy = (vals[1] - vals[0]) / (sg.pts[1] - sg.pts[0]);
    } else {
        const int other = 1 - side;
        const std::vector<double>& vals = (other == 0) ? gf.values_a : gf.values_b;
        const SideGeom& sg = geom.side[other];
        env.t = problem.params.omega0;
        env.y = gf.value_omega0; // sigma fixes omega0

        // Frechet slope at omega0 from the opposite orbit's tail. The
        // stencil slopes behave like A + B q^k, so the Richardson
        // combination (s1 - q s0)/(1 - q) removes the leading curvature.
        // Stay on stencils wide enough that value rounding (amplified by
        // the 1/(1-q) of the extrapolation) cannot surface.
        const double step_floor =
            1e-6 * std::max({1.0, std::abs(problem.params.omega0), std::abs(problem.a),
                             std::abs(problem.b)});
        int deep = gf.depth();
        while (deep > 1 && std::abs(sg.pts[static_cast<std::size_t>(deep)] -
                                    sg.pts[static_cast<std::size_t>(deep) - 1]) < step_floor)
            --deep;
        auto slope = [&](int hi) {
            return (vals[static_cast<std::size_t>(hi)] - vals[static_cast<std::size_t>(hi) - 1]) /
                   (sg.pts[static_cast<std::size_t>(hi)] - sg.pts[static_cast<std::size_t>(hi) - 1]);
        };
        const double s1 = slope(deep);
        if (deep >= 2) {
            const double s0 = slope(deep - 1);
            env.dy = (s1 - problem.params.q * s0) / (1.0 - problem.params.q);
        } else {
            env.dy = s1;
        }
    }
    return P.first_zero[kDy] ? 0.0 : expr::eval(P.first[kDy], env);
}

} // namespace

double nbc_residual_a(const VariationalProblem& problem, const GridFunction& gf) {
    if (problem.boundary.at_a)
        throw UsageError("nbc_residual_a: the left end is fixed, no natural boundary condition applies");
    check_grid_matches(problem, gf);
    PartialSet P(problem.lagrangian);
    return d3_at_anchor(problem, gf, P, 0) - integral_of_partial(problem, gf, P, kYa);
}

double nbc_residual_b(const VariationalProblem& problem, const GridFunction& gf) {
    if (problem.boundary.at_b)
        throw UsageError("nbc_residual_b: the right end is fixed, no natural boundary condition applies");
    check_grid_matches(problem, gf);
    PartialSet P(problem.lagrangian);
    return d3_at_anchor(problem, gf, P, 1) + integral_of_partial(problem, gf, P, kYb);
}

// ============================================================================
// Direct solve
// ============================================================================

namespace {

SolveReport finish_report(const VariationalProblem& problem, const DiscreteSystem& sys,
                          const std::vector<double>& theta, const SolveOptions& opts,
                          const NewtonOutcome& outcome, std::optional<double> lambda,
                          std::optional<int> lambda0) {
    SolveReport report;
    report.converged = outcome.converged;
    report.iterations = outcome.iterations;
    report.gradient_norm = outcome.residual_norm;
    report.gradient_fallback_used = outcome.gradient_fallback;
    report.message = outcome.message;
    report.solve_depth = sys.geom.depth;
    report.lambda = lambda;
    report.lambda0 = lambda0;

    report.minimizer = sys.head_grid(theta, std::min(opts.depth, sys.geom.depth));

    // Residuals refer to the original (un-negated) Lagrangian, or to
    // H = lambda0 L - lambda F for isoperimetric reports.
    VariationalProblem eval_problem = problem;
    eval_problem.sense = Sense::minimize;
    if (lambda && problem.constraint) {
        const double l0 = lambda0.value_or(1);
        eval_problem.lagrangian = expr::fold(expr::make_binary(
            expr::NodeKind::sub,
            expr::make_binary(expr::NodeKind::mul, expr::make_number(l0), problem.lagrangian),
            expr::make_binary(expr::NodeKind::mul, expr::make_number(*lambda),
                              problem.constraint->integrand)));
    }

    GridFunction deep = sys.deep_grid(theta);
    VariationalProblem original = problem;
    original.sense = Sense::minimize;
    const FunctionalValue fv = functional_with_tail(original, deep);
    report.functional_value = fv.value;
    report.tail_estimate = fv.tail_estimate;

    ElResiduals deep_res = el_residual(eval_problem, deep);
    // Reported residuals stop at the reported grid head and at the index
    // where the stencil loses conditioning: each residual divides twice by
    // the local spacing d_k, so below d ~ 1e-3 the entries would only show
    // rounding noise of the stored values, not solve quality.
    const double cond_floor =
        1e-3 * std::max({1.0, std::abs(problem.params.omega0), std::abs(problem.a), std::abs(problem.b)});
    const std::size_t keep = static_cast<std::size_t>(std::max(0, report.minimizer.depth() - 1));
    for (int s = 0; s < 2; ++s) {
        std::vector<double>& v = (s == 0) ? deep_res.orbit_a : deep_res.orbit_b;
        if (v.size() > keep)
            v.resize(keep);
        const Orbit& orbit = (s == 0) ? deep.lattice.orbit_a : deep.lattice.orbit_b;
        std::size_t well = 0;
        while (well < v.size() &&
               std::abs(orbit.points[well + 1] - orbit.points[well]) >= cond_floor)
            ++well;
        v.resize(well);
    }
    report.el_residuals = std::move(deep_res);

    if (!problem.boundary.at_a)
        report.nbc_a = nbc_residual_a(eval_problem, deep);
    if (!problem.boundary.at_b)
        report.nbc_b = nbc_residual_b(eval_problem, deep);
    return report;
}

SolveReport solve_direct_impl(const VariationalProblem& problem, const GridFunction* init,
                              const SolveOptions& opts) {
    if (!(problem.a < problem.b))
        throw DomainError("solve_direct: need a < b");
    if (opts.depth < 2)
        throw DomainError("solve_direct: depth >= 2 required");
    if (problem.constraint)
        throw UsageError("solve_direct: problem carries a constraint; use solve_isoperimetric");

    DiscreteSystem sys;
    sys.build(problem, adaptive_depth(problem, opts), problem.sense == Sense::maximize ? -1.0 : 1.0);
    PartialSet P(problem.lagrangian);

    std::vector<double> theta = sys.line_init();
    if (init)
        sys.seed_from_grid(*init, theta);

    auto residual = [&](const std::vector<double>& th, std::vector<double>& R,
                        std::vector<double>& S, Bordered* H) {
        DiscreteSystem::Eval ev = sys.evaluate(P, th, H);
        R = std::move(ev.grad);
        S = std::move(ev.grad_abs);
    };
    NewtonOutcome outcome = newton_solve(residual, theta, opts.tol, opts.max_iter);
    return finish_report(problem, sys, theta, opts, outcome, std::nullopt, std::nullopt);
}

} // namespace

SolveReport solve_direct(const VariationalProblem& problem, const SolveOptions& opts) {
    return solve_direct_impl(problem, nullptr, opts);
}

SolveReport solve_direct(const VariationalProblem& problem, const GridFunction& init,
                         const SolveOptions& opts) {
    return solve_direct_impl(problem, &init, opts);
}

// ============================================================================
// Isoperimetric solve
// ============================================================================

SolveReport solve_isoperimetric(const VariationalProblem& problem, const SolveOptions& opts) {
    if (!problem.constraint)
        throw UsageError("solve_isoperimetric: no constraint present");
    if (opts.depth < 2)
        throw DomainError("solve_isoperimetric: depth >= 2 required");

    const double sense = problem.sense == Sense::maximize ? -1.0 : 1.0;
    DiscreteSystem sys;
    sys.build(problem, adaptive_depth(problem, opts), sense);
    PartialSet PL(problem.lagrangian);
    PartialSet PF(problem.constraint->integrand);
    const double gamma = problem.constraint->gamma;
    const int n = sys.n_theta();
    std::mt19937 rng(opts.seed);

    // --- normal branch: KKT system in (theta, lambda) ----------------------
    auto kkt_residual = [&](const std::vector<double>& full, std::vector<double>& R,
                            std::vector<double>& S, Bordered* H) {
        std::vector<double> theta(full.begin(), full.end() - 1);
        const double lambda = full.back();

        Bordered HL;
        DiscreteSystem::Eval evL = sys.evaluate(PL, theta, H ? &HL : nullptr);
        Bordered HJ;
        DiscreteSystem::Eval evJ = sys.evaluate_signed(PF, theta, H ? &HJ : nullptr, 1.0);

        R.assign(static_cast<std::size_t>(n) + 1, 0.0);
        S.assign(static_cast<std::size_t>(n) + 1, 0.0);
        for (int i = 0; i < n; ++i) {
            R[static_cast<std::size_t>(i)] = evL.grad[static_cast<std::size_t>(i)] -
                                             lambda * evJ.grad[static_cast<std::size_t>(i)];
            S[static_cast<std::size_t>(i)] = evL.grad_abs[static_cast<std::size_t>(i)] +
                                             std::abs(lambda) * evJ.grad_abs[static_cast<std::size_t>(i)];
        }
        R[static_cast<std::size_t>(n)] = evJ.value - gamma;
        S[static_cast<std::size_t>(n)] = std::abs(evJ.value) + std::abs(gamma);

        if (H) {
            // H_L - lambda H_J with the multiplier column/row appended
            const int m = sys.n_border + 1;
            H->init(sys.n_int, m, sys.chain_split);
            auto merge = [&](const Bordered& src, double scale) {
                for (std::size_t i = 0; i < src.diag.size(); ++i) H->diag[i] += scale * src.diag[i];
                for (std::size_t i = 0; i < src.sub.size(); ++i) H->sub[i] += scale * src.sub[i];
                for (std::size_t i = 0; i < src.sup.size(); ++i) H->sup[i] += scale * src.sup[i];
                for (int j = 0; j < sys.n_border; ++j)
                    for (int i = 0; i < sys.n_int; ++i) {
                        H->Bc[static_cast<std::size_t>(j) * sys.n_int + i] +=
                            scale * src.Bc[static_cast<std::size_t>(j) * sys.n_int + i];
                        H->Br[static_cast<std::size_t>(j) * sys.n_int + i] +=
                            scale * src.Br[static_cast<std::size_t>(j) * sys.n_int + i];
                    }
                for (int i = 0; i < sys.n_border; ++i)
                    for (int j = 0; j < sys.n_border; ++j)
                        H->C[static_cast<std::size_t>(i) * m + j] +=
                            scale * src.C[static_cast<std::size_t>(i) * sys.n_border + j];
            };
            merge(HL, 1.0);
            merge(HJ, -lambda);
            // lambda column: -g_J ; lambda row: +g_J
            const int lcol = sys.n_border;
            for (int i = 0; i < sys.n_int; ++i) {
                H->Bc[static_cast<std::size_t>(lcol) * sys.n_int + i] = -evJ.grad[static_cast<std::size_t>(i)];
                H->Br[static_cast<std::size_t>(lcol) * sys.n_int + i] = evJ.grad[static_cast<std::size_t>(i)];
            }
            for (int j = 0; j < sys.n_border; ++j) {
                H->C[static_cast<std::size_t>(j) * m + lcol] = -evJ.grad[static_cast<std::size_t>(sys.n_int + j)];
                H->C[static_cast<std::size_t>(lcol) * m + j] = evJ.grad[static_cast<std::size_t>(sys.n_int + j)];
            }
            H->C[static_cast<std::size_t>(lcol) * m + lcol] = 0.0;
        }
    };

    NewtonOutcome best;
    std::vector<double> best_full;
    for (int attempt = 0; attempt < 3; ++attempt) {
        std::vector<double> full = sys.line_init();
        if (attempt > 0) {
            std::uniform_real_distribution<double> noise(-0.5, 0.5);
            for (double& v : full)
                v += noise(rng) * (1.0 + std::abs(v));
        }
        full.push_back(attempt == 0 ? 0.0 : std::uniform_real_distribution<double>(-1.0, 1.0)(rng));
        NewtonOutcome outcome = newton_solve(kkt_residual, full, opts.tol, opts.max_iter);
        if (outcome.converged) {
            std::vector<double> theta(full.begin(), full.end() - 1);
            const double lambda_solved = full.back();
            // A converged point only certifies a normal extremizer when the
            // multiplier is identifiable there: the solution must not be an
            // extremal of the constraint functional, and the KKT Jacobian
            // must be nonsingular. Otherwise fall through to the abnormal
            // branch (lambda0 = 0).
            DiscreteSystem::Eval evJ = sys.evaluate_signed(PF, theta, nullptr, 1.0);
            const bool constraint_extremal = inf_norm(evJ.grad) < 100.0 * opts.tol;
            bool jacobian_ok = false;
            if (!constraint_extremal) {
                std::vector<double> R, S;
                Bordered H;
                kkt_residual(full, R, S, &H);
                std::vector<double> probe;
                jacobian_ok = H.solve(R, 0.0, probe);
            }
            if (jacobian_ok) {
                // back out the multiplier for the original sense
                const double lambda = sense < 0 ? -lambda_solved : lambda_solved;
                return finish_report(problem, sys, theta, opts, outcome, lambda, 1);
            }
            best = outcome;
            best_full = full;
            break; // degenerate normal branch; attempt the abnormal certificate
        }
        if (best_full.empty() || outcome.residual_norm < best.residual_norm) {
            best = outcome;
            best_full = full;
        }
    }

    // --- abnormal branch: stationarity of the constraint functional --------
    auto abnormal_residual = [&](const std::vector<double>& th, std::vector<double>& R,
                                 std::vector<double>& S, Bordered* H) {
        DiscreteSystem::Eval ev = sys.evaluate_signed(PF, th, H, 1.0);
        R = std::move(ev.grad);
        S = std::move(ev.grad_abs);
    };
    std::vector<double> theta = sys.line_init();
    NewtonOutcome outcome = newton_solve(abnormal_residual, theta, opts.tol, opts.max_iter);
    if (outcome.converged) {
        const double J = sys.evaluate_signed(PF, theta, nullptr, 1.0).value;
        if (std::abs(J - gamma) <= 1e-8 * (1.0 + std::abs(gamma))) {
            SolveReport report = finish_report(problem, sys, theta, opts, outcome, 1.0, 0);
            report.message = "abnormal extremizer: constraint extremal satisfying J = gamma";
            return report;
        }
        outcome.converged = false;
        outcome.message = "constraint extremal found but J != gamma";
    }

    // combined diagnostic failure
    std::vector<double> theta_best(best_full.empty()
                                       ? sys.line_init()
                                       : std::vector<double>(best_full.begin(), best_full.end() - 1));
    NewtonOutcome combined = best_full.empty() ? outcome : best;
    combined.converged = false;
    if (combined.message.empty())
        combined.message = "no branch converged";
    combined.message = "isoperimetric solve failed (normal and abnormal attempts): " + combined.message;
    return finish_report(problem, sys, theta_best, opts, combined,
                         best_full.empty() ? std::optional<double>{} : best_full.back(),
                         best_full.empty() ? 0 : 1);
}

// ============================================================================
// Convexity probe
// ============================================================================

ConvexityVerdict convexity_probe(const VariationalProblem& problem, int samples,
                                 double box_lo, double box_hi, unsigned seed) {
    if (samples < 1)
        throw DomainError("convexity_probe: samples >= 1 required");
    if (!(box_lo < box_hi) || !std::isfinite(box_lo) || !std::isfinite(box_hi))
        throw DomainError("convexity_probe: box bounds must be finite with lo < hi");

    PartialSet P(problem.lagrangian);
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> in_box(box_lo, box_hi);
    const double t_lo = std::min({problem.a, problem.b, problem.params.omega0});
    const double t_hi = std::max({problem.a, problem.b, problem.params.omega0});
    std::uniform_real_distribution<double> in_t(t_lo, t_hi);

    Overlay ov;
    bool convex_ok = true, concave_ok = true;
    ConvexityVerdict verdict;
    verdict.samples = samples;

    for (int s = 0; s < samples; ++s) {
        ConvexityWitness w;
        w.t = in_t(rng);
        for (int i = 0; i < 4; ++i) {
            w.u[i] = in_box(rng);
            w.du[i] = in_box(rng) - w.u[i]; // u + du stays inside the box
        }
        Env env;
        env.params = &problem.param_values;
        if (!problem.point_coeffs.empty()) {
            ov.clear();
            for (const auto& [name, fn] : problem.point_coeffs)
                ov.emplace_back(name, fn(w.t));
            env.point_params = &ov;
        }
        env.t = w.t;
        env.y = w.u[0]; env.dy = w.u[1]; env.ya = w.u[2]; env.yb = w.u[3];
        double L0, d[4];
        try {
            L0 = expr::eval(P.L, env);
            for (int i = 0; i < 4; ++i)
                d[i] = P.first_zero[i] ? 0.0 : expr::eval(P.first[i], env);
            env.y += w.du[0]; env.dy += w.du[1]; env.ya += w.du[2]; env.yb += w.du[3];
            const double L1 = expr::eval(P.L, env);
            double linear = 0.0;
            for (int i = 0; i < 4; ++i)
                linear += d[i] * w.du[i];
            const double slack = 1e-9 * (1.0 + std::abs(L0) + std::abs(L1));
            w.gap_convex = L1 - L0 - linear;
            w.gap_concave = -(w.gap_convex);
            if (w.gap_convex < -slack)
                convex_ok = false;
            if (w.gap_concave < -slack)
                concave_ok = false;
            if (!convex_ok && !concave_ok) {
                verdict.kind = ConvexityKind::neither;
                verdict.witness = w;
                return verdict;
            }
        } catch (const EvalError&) {
            continue; // domain hit inside the box; skip the sample
        }
    }
    verdict.kind = convex_ok ? ConvexityKind::convex_evidence : ConvexityKind::concave_evidence;
    return verdict;
}

} // namespace hahn

