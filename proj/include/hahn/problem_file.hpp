#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "hahn/varcalc.hpp"

namespace hahn {

/// A problem resolved from a file or the built-in catalog, with the solver
/// settings it carries and a stable hash of everything that shaped it.
struct LoadedProblem {
    VariationalProblem problem;
    SolveOptions solver;
    std::string source;
    std::uint64_t input_hash = 0;
};

/// Overrides applied on top of a file or catalog problem (command line).
struct ProblemOverrides {
    std::optional<double> q;
    std::optional<double> omega;
    std::optional<int> depth;
    std::optional<double> tol;
    std::optional<int> max_iter;
    std::optional<Sense> sense;
    std::map<std::string, double> params;
};

/// Parses the plain-text problem format:
///
///   [hahn]        q = <real> ; omega = <real>
///   [interval]    a = <real> ; b = <real>
///   [lagrangian]  expr = <expression over t, y, Dy, ya, yb and parameters>
///   [boundary]    a = fixed:<v> | free ; b = fixed:<v> | free
///   [params]      <name> = <real> pairs (optional section)
///   [constraint]  expr = <expression> ; gamma = <real> (optional)
///   [solver]      depth, tol, max_iter, sense = min|max (optional)
///
/// One key per line; '#' starts a comment. Unknown sections or keys are
/// rejected with a ParseError carrying the byte offset.
LoadedProblem parse_problem_text(const std::string& text, const ProblemOverrides& overrides = {});

/// Built-in catalog: "example1", "example2" (parameters gamma, nu,
/// default 2) and "adjustment" (parameters r, alpha, T with defaults
/// 1.05, 1, 1 and the target path ybar(t) = t).
bool is_catalog_name(const std::string& name);
LoadedProblem load_catalog(const std::string& name, const ProblemOverrides& overrides = {});

/// Loads from the catalog when the name matches, otherwise reads the file.
LoadedProblem load_problem(const std::string& source, const ProblemOverrides& overrides = {});

/// FNV-1a over the canonical problem description; stable across runs.
std::uint64_t fnv1a(const std::string& text);

} // namespace hahn
