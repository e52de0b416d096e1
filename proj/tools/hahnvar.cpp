// hahnvar: command-line front end for the Hahn quantum variational toolkit.
//
// Subcommands: solve, check, sweep, derive, integrate. Reports are JSON on
// stdout (or --out), grids go to CSV via --csv. Exit codes: 0 success,
// 1 input error, 2 solver non-convergence.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "hahn/integral.hpp"
#include "hahn/models.hpp"
#include "hahn/problem_file.hpp"
#include "hahn/report.hpp"
#include "hahn/varcalc.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitNoConverge = 2;

struct CommonFlags {
    std::string source;
    std::vector<std::string> params;
    double q = -1.0;
    double omega = -1.0;
    int depth = 0;
    double tol = 0.0;
    int max_iter = 0;
    std::string sense;
    std::string out_path;
    std::string csv_path;
};

void add_problem_flags(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("source", flags.source, "problem file path or catalog name (example1, example2, adjustment)")
        ->required();
    cmd->add_option("--q", flags.q, "override q (0 < q < 1)");
    cmd->add_option("--omega", flags.omega, "override omega (>= 0)");
    cmd->add_option("--depth", flags.depth, "reported lattice depth (default 60)");
    cmd->add_option("--tol", flags.tol, "solver stationarity tolerance (default 1e-10)");
    cmd->add_option("--max-iter", flags.max_iter, "solver iteration cap (default 60)");
    cmd->add_option("--param", flags.params, "parameter value, name=value (repeatable)")
        ->type_name("NAME=VALUE");
    cmd->add_option("--sense", flags.sense, "min or max")->check(CLI::IsMember({"min", "max"}));
    cmd->add_option("--out", flags.out_path, "write the JSON report here instead of stdout");
    cmd->add_option("--csv", flags.csv_path, "also dump the solution grid as CSV");
}

hahn::ProblemOverrides to_overrides(const CommonFlags& flags) {
    hahn::ProblemOverrides o;
    if (flags.q > 0.0) o.q = flags.q;
    if (flags.omega >= 0.0) o.omega = flags.omega;
    if (flags.depth > 0) o.depth = flags.depth;
    if (flags.tol > 0.0) o.tol = flags.tol;
    if (flags.max_iter > 0) o.max_iter = flags.max_iter;
    if (flags.sense == "min") o.sense = hahn::Sense::minimize;
    if (flags.sense == "max") o.sense = hahn::Sense::maximize;
    for (const std::string& kv : flags.params) {
        const std::size_t eq = kv.find('=');
        if (eq == std::string::npos)
            throw hahn::DomainError("--param expects name=value, got '" + kv + "'");
        try {
            o.params[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
        } catch (...) {
            throw hahn::DomainError("--param value is not a number in '" + kv + "'");
        }
    }
    return o;
}

void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        std::fputs(text.c_str(), stdout);
    } else {
        std::ofstream out(out_path, std::ios::binary);
        if (!out)
            throw hahn::DomainError("cannot write to '" + out_path + "'");
        out << text;
    }
}

int cmd_solve(const CommonFlags& flags) {
    hahn::LoadedProblem loaded = hahn::load_problem(flags.source, to_overrides(flags));
    hahn::SolveReport report = loaded.problem.constraint
                                   ? hahn::solve_isoperimetric(loaded.problem, loaded.solver)
                                   : hahn::solve_direct(loaded.problem, loaded.solver);
    emit(hahn::solve_report_json(loaded, report), flags.out_path);
    if (!flags.csv_path.empty())
        emit(hahn::grid_csv(report.minimizer), flags.csv_path);
    return report.converged ? kExitOk : kExitNoConverge;
}

int cmd_check(const CommonFlags& flags, const std::string& candidate_path) {
    hahn::LoadedProblem loaded = hahn::load_problem(flags.source, to_overrides(flags));
    if (loaded.problem.constraint)
        loaded.problem.constraint.reset(); // audits check the plain functional

    std::ifstream in(candidate_path);
    if (!in)
        throw hahn::DomainError("cannot open candidate CSV '" + candidate_path + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    hahn::GridFunction candidate = hahn::read_grid_csv(buffer.str(), loaded.problem);
    if (flags.depth > 0 && candidate.depth() != flags.depth)
        throw hahn::DomainError("candidate depth " + std::to_string(candidate.depth()) +
                                " does not match the requested depth " + std::to_string(flags.depth));

    const hahn::FunctionalValue fv = hahn::functional_with_tail(loaded.problem, candidate);
    const hahn::ElResiduals el = hahn::el_residual(loaded.problem, candidate);
    std::optional<double> nbc_a, nbc_b;
    if (!loaded.problem.boundary.at_a)
        nbc_a = hahn::nbc_residual_a(loaded.problem, candidate);
    if (!loaded.problem.boundary.at_b)
        nbc_b = hahn::nbc_residual_b(loaded.problem, candidate);
    const hahn::ConvexityVerdict verdict = hahn::convexity_probe(loaded.problem, 400, -2.0, 2.0);

    emit(hahn::check_report_json(loaded, candidate, fv.value, fv.tail_estimate, el, nbc_a, nbc_b, verdict),
         flags.out_path);
    return kExitOk;
}

struct VaryAxis {
    std::string name;
    double start = 0.0, stop = 0.0;
    int count = 0;

    double at(int i) const {
        return count == 1 ? start : start + (stop - start) * i / double(count - 1);
    }
};

VaryAxis parse_vary(const std::string& text) {
    const std::size_t eq = text.find('=');
    if (eq == std::string::npos)
        throw hahn::DomainError("--vary expects name=start:stop:count, got '" + text + "'");
    VaryAxis axis;
    axis.name = text.substr(0, eq);
    const std::string range = text.substr(eq + 1);
    const std::size_t c1 = range.find(':');
    const std::size_t c2 = c1 == std::string::npos ? std::string::npos : range.find(':', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
        throw hahn::DomainError("--vary expects name=start:stop:count, got '" + text + "'");
    try {
        axis.start = std::stod(range.substr(0, c1));
        axis.stop = std::stod(range.substr(c1 + 1, c2 - c1 - 1));
        axis.count = std::stoi(range.substr(c2 + 1));
    } catch (...) {
        throw hahn::DomainError("--vary range is not numeric in '" + text + "'");
    }
    if (axis.count < 1)
        throw hahn::DomainError("--vary count must be >= 1 in '" + text + "'");
    return axis;
}

int cmd_sweep(const CommonFlags& flags, const std::vector<std::string>& vary_specs) {
    if (vary_specs.empty())
        throw hahn::DomainError("sweep requires at least one --vary axis");
    std::vector<VaryAxis> axes;
    for (const std::string& spec : vary_specs)
        axes.push_back(parse_vary(spec));

    hahn::LoadedProblem base = hahn::load_problem(flags.source, to_overrides(flags));

    long total = 1;
    for (const VaryAxis& axis : axes)
        total *= axis.count;
    if (total > 100000)
        throw hahn::DomainError("sweep grid too large (" + std::to_string(total) + " points)");

    std::vector<hahn::SweepRecord> records(static_cast<std::size_t>(total));
    bool any_failed = false;
    for (long index = 0; index < total; ++index) {
        hahn::SweepRecord& rec = records[static_cast<std::size_t>(index)];
        hahn::ProblemOverrides point = to_overrides(flags);
        long rest = index;
        for (const VaryAxis& axis : axes) {
            const double value = axis.at(static_cast<int>(rest % axis.count));
            rest /= axis.count;
            rec.varied[axis.name] = value;
            if (axis.name == "q")
                point.q = value;
            else if (axis.name == "omega")
                point.omega = value;
            else
                point.params[axis.name] = value;
        }
        try {
            hahn::LoadedProblem loaded = hahn::load_problem(flags.source, point);
            hahn::SolveReport report = loaded.problem.constraint
                                           ? hahn::solve_isoperimetric(loaded.problem, loaded.solver)
                                           : hahn::solve_direct(loaded.problem, loaded.solver);
            rec.ok = true;
            rec.converged = report.converged;
            rec.functional_value = report.functional_value;
            rec.y_at_a = report.minimizer.values_a.front();
            rec.y_at_b = report.minimizer.values_b.front();
            rec.el_residual_max = report.el_residuals.max_abs();
            rec.nbc_a = report.nbc_a;
            rec.nbc_b = report.nbc_b;
            rec.lambda = report.lambda;
            if (!report.converged)
                any_failed = true;
        } catch (const hahn::Error& e) {
            rec.ok = false;
            rec.error = e.what();
            any_failed = true;
        }
    }
    emit(hahn::sweep_report_json(base, records), flags.out_path);
    return any_failed ? kExitNoConverge : kExitOk;
}

int cmd_derive(const std::string& text, double q, double omega, double t, double step) {
    hahn::HahnParams params(q, omega);
    hahn::expr::Ast ast = hahn::expr::parse(text, std::set<std::string>{});
    auto f = [&](double x) {
        hahn::expr::Env env;
        env.t = x;
        return hahn::expr::eval(ast, env);
    };
    const double value = hahn::hahn_derivative(f, params, t, step);
    std::printf("%s\n", hahn::JsonWriter::format(value).c_str());
    return kExitOk;
}

int cmd_integrate(const std::string& text, double q, double omega, double a, double b,
                  double tail_tol, int max_terms) {
    hahn::HahnParams params(q, omega);
    hahn::expr::Ast ast = hahn::expr::parse(text, std::set<std::string>{});
    auto f = [&](double x) {
        hahn::expr::Env env;
        env.t = x;
        return hahn::expr::eval(ast, env);
    };
    hahn::QuadratureSpec spec;
    if (tail_tol > 0.0)
        spec.tail_tol = tail_tol;
    if (max_terms > 0)
        spec.max_terms = max_terms;
    const hahn::SeriesSum sum = hahn::integral(f, params, a, b, spec);
    std::printf("%s\n", hahn::JsonWriter::format(sum.value).c_str());
    std::printf("terms %d\ntail_bound %s\n", sum.terms, hahn::JsonWriter::format(sum.tail_bound).c_str());
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hahn quantum variational calculus toolkit"};
    app.require_subcommand(1);

    CommonFlags solve_flags, check_flags, sweep_flags;
    std::string candidate_path;
    std::vector<std::string> vary_specs;

    CLI::App* solve = app.add_subcommand("solve", "solve a variational problem and report JSON");
    add_problem_flags(solve, solve_flags);

    CLI::App* check = app.add_subcommand("check", "audit a candidate grid: residuals, convexity, sufficiency");
    add_problem_flags(check, check_flags);
    check->add_option("--candidate", candidate_path, "candidate grid CSV (t,y,Dy,orbit,k)")->required();

    CLI::App* sweep = app.add_subcommand("sweep", "one solve per point of a parameter grid");
    add_problem_flags(sweep, sweep_flags);
    sweep->add_option("--vary", vary_specs, "axis name=start:stop:count (repeatable; q, omega or a parameter)")
        ->required();

    std::string expr_text;
    double dq = 0.5, domega = 0.0, dt = 0.0, dstep = -1.0, da = 0.0, db = 1.0;
    double itail = -1.0;
    int imax = 0;

    CLI::App* derive = app.add_subcommand("derive", "Hahn derivative of an expression in t at a point");
    derive->add_option("expr", expr_text, "expression in t")->required();
    derive->add_option("--q", dq, "q (0 < q < 1)")->required();
    derive->add_option("--omega", domega, "omega (>= 0)")->required();
    derive->add_option("--t", dt, "evaluation point")->required();
    derive->add_option("--step", dstep, "central-difference step used only at t = omega0");

    CLI::App* integrate = app.add_subcommand("integrate", "q,omega-integral of an expression in t over [a,b]");
    integrate->add_option("expr", expr_text, "expression in t")->required();
    integrate->add_option("--a", da, "lower end")->required();
    integrate->add_option("--b", db, "upper end")->required();
    integrate->add_option("--q", dq, "q (0 < q < 1)")->required();
    integrate->add_option("--omega", domega, "omega (>= 0)")->required();
    integrate->add_option("--tail-tol", itail, "series tail tolerance (default 1e-13)");
    integrate->add_option("--max-terms", imax, "series term cap (default 10000)");

    try {
        app.parse(argc, argv);
        if (solve->parsed())
            return cmd_solve(solve_flags);
        if (check->parsed())
            return cmd_check(check_flags, candidate_path);
        if (sweep->parsed())
            return cmd_sweep(sweep_flags, vary_specs);
        if (derive->parsed())
            return cmd_derive(expr_text, dq, domega, dt, dstep);
        if (integrate->parsed())
            return cmd_integrate(expr_text, dq, domega, da, db, itail, imax);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitInput;
    } catch (const hahn::ParseError& e) {
        std::fprintf(stderr, "error: %s (offset %zu, expected %s)\n", e.message.c_str(), e.position,
                     e.expected.c_str());
        return kExitInput;
    } catch (const hahn::NonconvergenceError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitNoConverge;
    } catch (const hahn::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitInput;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitInput;
    }
    return kExitInput;
}
