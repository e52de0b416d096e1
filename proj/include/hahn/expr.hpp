#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "hahn/errors.hpp"

namespace hahn {
namespace expr {

// ============================================================================
// A small expression language for Lagrangians L(t, y, Dy, ya, yb)
// ============================================================================
//
// Grammar (precedence low to high; ^ is right-associative and binds above
// unary minus):
//   expr   := term (("+"|"-") term)*
//   term   := factor (("*"|"/") factor)*
//   factor := "-" factor | power
//   power  := atom ("^" factor)?
//   atom   := number | ident | ident "(" expr ")" | "(" expr ")"
//
// Reserved variable idents: t, y, Dy, ya, yb. Function idents: sin, cos,
// exp, log, sqrt, abs. Any other ident is a named parameter.

enum class Var { t, y, Dy, ya, yb };
enum class Func { sin, cos, exp, log, sqrt, abs };

enum class NodeKind { number, param, var, neg, add, sub, mul, div, pow, call };

struct Node;
using Ast = std::shared_ptr<const Node>;

struct Node {
    NodeKind kind;
    double number = 0.0;  // number
    std::string name;     // param
    Var var = Var::t;     // var
    Func func = Func::sin; // call
    Ast lhs, rhs;          // neg/call use lhs only
};

Ast make_number(double v);
Ast make_param(std::string name);
Ast make_var(Var v);
Ast make_neg(Ast x);
Ast make_binary(NodeKind op, Ast lhs, Ast rhs);
Ast make_call(Func f, Ast arg);

/// Parses per the grammar above. With a declared-parameter set, identifiers
/// outside {variables, functions, declared} raise ParseError; without one,
/// any non-reserved identifier becomes a parameter node.
Ast parse(const std::string& text,
          const std::optional<std::set<std::string>>& declared_params = std::nullopt);

/// Variable and parameter bindings for evaluation. Parameter lookups consult
/// point_params first (per-lattice-point coefficient overlays), then params.
struct Env {
    double t = 0.0;
    double y = 0.0;
    double dy = 0.0;
    double ya = 0.0;
    double yb = 0.0;
    const std::map<std::string, double>* params = nullptr;
    const std::vector<std::pair<std::string, double>>* point_params = nullptr;

    double var_value(Var v) const;
};

/// Standard real evaluation. Unbound names and numeric domain violations
/// (division by zero, log/sqrt of a negative) raise EvalError carrying the
/// offending node's printed form.
double eval(const Ast& ast, const Env& env);

/// Symbolic partial derivative; parameters and the other variables are
/// constants. Differentiation through abs is rejected (DomainError).
Ast diff(const Ast& ast, Var v);

/// Constant folding and 0/1 identity simplification, eval-equivalent on any
/// env where the input evaluates.
Ast fold(const Ast& ast);

/// Renders the fold-normalized AST so that parse(print(x)) == fold(x)
/// structurally. Numbers print with round-trip precision.
std::string print(const Ast& ast);

/// Renders the AST as-is with grammar-exact parenthesization.
std::string to_string(const Ast& ast);

/// Structural equality (exact number comparison).
bool equal(const Ast& x, const Ast& y);

/// True when the given variable appears anywhere in the tree.
bool uses_var(const Ast& ast, Var v);

/// Collects parameter names appearing in the tree.
std::set<std::string> param_names(const Ast& ast);

} // namespace expr
} // namespace hahn
