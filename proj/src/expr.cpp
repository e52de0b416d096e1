#include "hahn/expr.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>

namespace hahn {
namespace expr {

// ============================================================================
// Construction
// ============================================================================

Ast make_number(double v) {
    auto n = std::make_shared<Node>();
    n->kind = NodeKind::number;
    n->number = v;
    return n;
}

Ast make_param(std::string name) {
    auto n = std::make_shared<Node>();
    n->kind = NodeKind::param;
    n->name = std::move(name);
    return n;
}

Ast make_var(Var v) {
    auto n = std::make_shared<Node>();
    n->kind = NodeKind::var;
    n->var = v;
    return n;
}

Ast make_neg(Ast x) {
    auto n = std::make_shared<Node>();
    n->kind = NodeKind::neg;
    n->lhs = std::move(x);
    return n;
}

Ast make_binary(NodeKind op, Ast lhs, Ast rhs) {
    auto n = std::make_shared<Node>();
    n->kind = op;
    n->lhs = std::move(lhs);
    n->rhs = std::move(rhs);
    return n;
}

Ast make_call(Func f, Ast arg) {
    auto n = std::make_shared<Node>();
    n->kind = NodeKind::call;
    n->func = f;
    n->lhs = std::move(arg);
    return n;
}

namespace {

const char* var_name(Var v) {
    switch (v) {
        case Var::t: return "t";
        case Var::y: return "y";
        case Var::Dy: return "Dy";
        case Var::ya: return "ya";
        case Var::yb: return "yb";
    }
    return "?";
}

const char* func_name(Func f) {
    switch (f) {
        case Func::sin: return "sin";
        case Func::cos: return "cos";
        case Func::exp: return "exp";
        case Func::log: return "log";
        case Func::sqrt: return "sqrt";
        case Func::abs: return "abs";
    }
    return "?";
}

std::optional<Var> lookup_var(const std::string& s) {
    if (s == "t") return Var::t;
    if (s == "y") return Var::y;
    if (s == "Dy") return Var::Dy;
    if (s == "ya") return Var::ya;
    if (s == "yb") return Var::yb;
    return std::nullopt;
}

std::optional<Func> lookup_func(const std::string& s) {
    if (s == "sin") return Func::sin;
    if (s == "cos") return Func::cos;
    if (s == "exp") return Func::exp;
    if (s == "log") return Func::log;
    if (s == "sqrt") return Func::sqrt;
    if (s == "abs") return Func::abs;
    return std::nullopt;
}

// ============================================================================
// Parser: recursive descent over the grammar in the header
// ============================================================================

class Parser {
public:
    Parser(const std::string& text, const std::optional<std::set<std::string>>& declared)
        : text_(text), declared_(declared) {}

    Ast run() {
        Ast e = parse_expr();
        skip_ws();
        if (pos_ != text_.size())
            fail("unexpected trailing input", "end of input");
        return e;
    }

private:
    const std::string& text_;
    const std::optional<std::set<std::string>>& declared_;
    std::size_t pos_ = 0;

    [[noreturn]] void fail(const std::string& msg, const std::string& expected) {
        throw ParseError(pos_, msg, expected);
    }

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_])))
            ++pos_;
    }

    bool peek_char(char c) {
        skip_ws();
        return pos_ < text_.size() && text_[pos_] == c;
    }

    bool accept_char(char c) {
        if (peek_char(c)) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect_char(char c) {
        if (!accept_char(c))
            fail(std::string("expected '") + c + "'", std::string(1, c));
    }

    Ast parse_expr() {
        Ast lhs = parse_term();
        for (;;) {
            if (accept_char('+'))
                lhs = make_binary(NodeKind::add, lhs, parse_term());
            else if (accept_char('-'))
                lhs = make_binary(NodeKind::sub, lhs, parse_term());
            else
                return lhs;
        }
    }

    Ast parse_term() {
        Ast lhs = parse_factor();
        for (;;) {
            if (accept_char('*'))
                lhs = make_binary(NodeKind::mul, lhs, parse_factor());
            else if (accept_char('/'))
                lhs = make_binary(NodeKind::div, lhs, parse_factor());
            else
                return lhs;
        }
    }

    Ast parse_factor() {
        if (accept_char('-'))
            return make_neg(parse_factor());
        return parse_power();
    }

    Ast parse_power() {
        Ast base = parse_atom();
        if (accept_char('^'))
            return make_binary(NodeKind::pow, base, parse_factor());
        return base;
    }

    Ast parse_atom() {
        skip_ws();
        if (pos_ >= text_.size())
            fail("unexpected end of input", "number, identifier or '('");
        const char c = text_[pos_];
        if (accept_char('(')) {
            Ast e = parse_expr();
            expect_char(')');
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.')
            return parse_number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_')
            return parse_ident();
        fail("unexpected character", "number, identifier or '('");
    }

    Ast parse_number() {
        const std::size_t start = pos_;
        bool saw_digit = false;
        while (pos_ < text_.size() && (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.')) {
            saw_digit |= std::isdigit(static_cast<unsigned char>(text_[pos_])) != 0;
            ++pos_;
        }
        if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
            std::size_t exp_pos = pos_ + 1;
            if (exp_pos < text_.size() && (text_[exp_pos] == '+' || text_[exp_pos] == '-'))
                ++exp_pos;
            if (exp_pos < text_.size() && std::isdigit(static_cast<unsigned char>(text_[exp_pos]))) {
                pos_ = exp_pos;
                while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_])))
                    ++pos_;
            }
        }
        if (!saw_digit) {
            pos_ = start;
            fail("malformed number", "decimal literal");
        }
        double value = 0.0;
        const auto [ptr, ec] = std::from_chars(text_.data() + start, text_.data() + pos_, value);
        if (ec != std::errc{} || ptr != text_.data() + pos_) {
            pos_ = start;
            fail("malformed number", "decimal literal");
        }
        return make_number(value);
    }

    Ast parse_ident() {
        const std::size_t start = pos_;
        while (pos_ < text_.size() &&
               (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
            ++pos_;
        const std::string name = text_.substr(start, pos_ - start);
        if (auto f = lookup_func(name)) {
            if (!accept_char('(')) {
                pos_ = start;
                fail("function name '" + name + "' requires an argument list", "'('");
            }
            Ast arg = parse_expr();
            expect_char(')');
            return make_call(*f, arg);
        }
        if (auto v = lookup_var(name))
            return make_var(*v);
        if (declared_ && !declared_->count(name)) {
            pos_ = start;
            fail("unknown identifier '" + name + "'", "variable, function or declared parameter");
        }
        return make_param(name);
    }
};

} // namespace

Ast parse(const std::string& text, const std::optional<std::set<std::string>>& declared_params) {
    return Parser(text, declared_params).run();
}

// ============================================================================
// Evaluation
// ============================================================================

double Env::var_value(Var v) const {
    switch (v) {
        case Var::t: return t;
        case Var::y: return y;
        case Var::Dy: return dy;
        case Var::ya: return ya;
        case Var::yb: return yb;
    }
    return 0.0;
}

double eval(const Ast& ast, const Env& env) {
    switch (ast->kind) {
        case NodeKind::number:
            return ast->number;
        case NodeKind::var:
            return env.var_value(ast->var);
        case NodeKind::param: {
            if (env.point_params) {
                for (const auto& [name, value] : *env.point_params)
                    if (name == ast->name)
                        return value;
            }
            if (env.params) {
                auto it = env.params->find(ast->name);
                if (it != env.params->end())
                    return it->second;
            }
            throw EvalError("unbound parameter '" + ast->name + "'", to_string(ast));
        }
        case NodeKind::neg:
            return -eval(ast->lhs, env);
        case NodeKind::add:
            return eval(ast->lhs, env) + eval(ast->rhs, env);
        case NodeKind::sub:
            return eval(ast->lhs, env) - eval(ast->rhs, env);
        case NodeKind::mul:
            return eval(ast->lhs, env) * eval(ast->rhs, env);
        case NodeKind::div: {
            const double denom = eval(ast->rhs, env);
            if (denom == 0.0)
                throw EvalError("division by zero", to_string(ast));
            return eval(ast->lhs, env) / denom;
        }
        case NodeKind::pow: {
            const double base = eval(ast->lhs, env);
            const double exponent = eval(ast->rhs, env);
            if (base == 0.0 && exponent < 0.0)
                throw EvalError("zero raised to a negative power", to_string(ast));
            if (base < 0.0 && exponent != std::floor(exponent))
                throw EvalError("negative base with non-integer exponent", to_string(ast));
            return std::pow(base, exponent);
        }
        case NodeKind::call: {
            const double x = eval(ast->lhs, env);
            switch (ast->func) {
                case Func::sin: return std::sin(x);
                case Func::cos: return std::cos(x);
                case Func::exp: return std::exp(x);
                case Func::log:
                    if (x <= 0.0)
                        throw EvalError("log of a non-positive value", to_string(ast));
                    return std::log(x);
                case Func::sqrt:
                    if (x < 0.0)
                        throw EvalError("sqrt of a negative value", to_string(ast));
                    return std::sqrt(x);
                case Func::abs: return std::abs(x);
            }
            break;
        }
    }
    throw EvalError("corrupt expression node", "?");
}

// ============================================================================
// Symbolic differentiation
// ============================================================================

namespace {

bool is_number(const Ast& a, double v) {
    return a->kind == NodeKind::number && a->number == v;
}

bool depends_on(const Ast& ast, Var v) { return uses_var(ast, v); }

} // namespace

Ast diff(const Ast& ast, Var v) {
    switch (ast->kind) {
        case NodeKind::number:
        case NodeKind::param:
            return make_number(0.0);
        case NodeKind::var:
            return make_number(ast->var == v ? 1.0 : 0.0);
        case NodeKind::neg:
            return make_neg(diff(ast->lhs, v));
        case NodeKind::add:
            return make_binary(NodeKind::add, diff(ast->lhs, v), diff(ast->rhs, v));
        case NodeKind::sub:
            return make_binary(NodeKind::sub, diff(ast->lhs, v), diff(ast->rhs, v));
        case NodeKind::mul:
            return make_binary(NodeKind::add,
                               make_binary(NodeKind::mul, diff(ast->lhs, v), ast->rhs),
                               make_binary(NodeKind::mul, ast->lhs, diff(ast->rhs, v)));
        case NodeKind::div:
            // (u/g)' = (u' g - u g') / g^2
            return make_binary(
                NodeKind::div,
                make_binary(NodeKind::sub,
                            make_binary(NodeKind::mul, diff(ast->lhs, v), ast->rhs),
                            make_binary(NodeKind::mul, ast->lhs, diff(ast->rhs, v))),
                make_binary(NodeKind::pow, ast->rhs, make_number(2.0)));
        case NodeKind::pow: {
            const Ast& u = ast->lhs;
            const Ast& w = ast->rhs;
            if (!depends_on(w, v)) {
                // w u^(w-1) u'
                return make_binary(
                    NodeKind::mul,
                    make_binary(NodeKind::mul, w,
                                make_binary(NodeKind::pow, u,
                                            make_binary(NodeKind::sub, w, make_number(1.0)))),
                    diff(u, v));
            }
            if (!depends_on(u, v)) {
                // u^w log(u) w'
                return make_binary(NodeKind::mul,
                                   make_binary(NodeKind::mul, ast, make_call(Func::log, u)),
                                   diff(w, v));
            }
            // u^w (w' log u + w u'/u)
            return make_binary(
                NodeKind::mul, ast,
                make_binary(NodeKind::add,
                            make_binary(NodeKind::mul, diff(w, v), make_call(Func::log, u)),
                            make_binary(NodeKind::div,
                                        make_binary(NodeKind::mul, w, diff(u, v)), u)));
        }
        case NodeKind::call: {
            if (!depends_on(ast->lhs, v))
                return make_number(0.0);
            Ast inner = diff(ast->lhs, v);
            Ast outer;
            switch (ast->func) {
                case Func::sin: outer = make_call(Func::cos, ast->lhs); break;
                case Func::cos: outer = make_neg(make_call(Func::sin, ast->lhs)); break;
                case Func::exp: outer = make_call(Func::exp, ast->lhs); break;
                case Func::log: outer = make_binary(NodeKind::div, make_number(1.0), ast->lhs); break;
                case Func::sqrt:
                    outer = make_binary(NodeKind::div, make_number(0.5),
                                        make_call(Func::sqrt, ast->lhs));
                    break;
                case Func::abs:
                    throw DomainError("diff: abs is not differentiable; rejected");
            }
            return make_binary(NodeKind::mul, outer, inner);
        }
    }
    throw EvalError("corrupt expression node", "?");
}

// ============================================================================
// Constant folding
// ============================================================================

namespace {

// Decomposes a mul/div/neg chain into a numeric coefficient and symbolic
// numerator/denominator factors, so constants merge across nesting levels
// ((1/2)*(2*Dy) becomes Dy). Returns false when a constant denominator is
// zero; the caller then leaves the chain alone.
bool flatten_product(const Ast& a, double& coef, std::vector<Ast>& num, std::vector<Ast>& den,
                     bool inverted) {
    switch (a->kind) {
        case NodeKind::number: {
            if (inverted) {
                if (a->number == 0.0)
                    return false;
                coef /= a->number;
            } else {
                coef *= a->number;
            }
            return true;
        }
        case NodeKind::neg:
            coef = -coef;
            return flatten_product(a->lhs, coef, num, den, inverted);
        case NodeKind::mul:
            return flatten_product(a->lhs, coef, num, den, inverted) &&
                   flatten_product(a->rhs, coef, num, den, inverted);
        case NodeKind::div:
            return flatten_product(a->lhs, coef, num, den, inverted) &&
                   flatten_product(a->rhs, coef, num, den, !inverted);
        default:
            (inverted ? den : num).push_back(a);
            return true;
    }
}

Ast rebuild_product(double coef, const std::vector<Ast>& num, const std::vector<Ast>& den) {
    if (coef == 0.0)
        return make_number(0.0);
    Ast acc;
    const bool negate = coef == -1.0 && !num.empty();
    const double c = negate ? 1.0 : coef;
    if (c != 1.0 || num.empty())
        acc = make_number(c);
    for (const Ast& f : num)
        acc = acc ? make_binary(NodeKind::mul, acc, f) : f;
    for (const Ast& g : den)
        acc = make_binary(NodeKind::div, acc, g);
    return negate ? make_neg(acc) : acc;
}

} // namespace

Ast fold(const Ast& ast) {
    switch (ast->kind) {
        case NodeKind::number:
        case NodeKind::param:
        case NodeKind::var:
            return ast;
        case NodeKind::neg: {
            Ast x = fold(ast->lhs);
            if (x->kind == NodeKind::number)
                return make_number(-x->number);
            if (x->kind == NodeKind::neg)
                return x->lhs;
            if (x->kind == NodeKind::mul || x->kind == NodeKind::div) {
                double coef = -1.0;
                std::vector<Ast> num, den;
                if (flatten_product(x, coef, num, den, false))
                    return rebuild_product(coef, num, den);
            }
            return make_neg(x);
        }
        case NodeKind::call: {
            Ast x = fold(ast->lhs);
            if (x->kind == NodeKind::number) {
                Env empty;
                try {
                    return make_number(eval(make_call(ast->func, x), empty));
                } catch (const EvalError&) {
                    // leave domain violations unfolded
                }
            }
            return make_call(ast->func, x);
        }
        default:
            break;
    }

    Ast l = fold(ast->lhs);
    Ast r = fold(ast->rhs);
    if (l->kind == NodeKind::number && r->kind == NodeKind::number) {
        Env empty;
        try {
            return make_number(eval(make_binary(ast->kind, l, r), empty));
        } catch (const EvalError&) {
            return make_binary(ast->kind, l, r);
        }
    }
    switch (ast->kind) {
        case NodeKind::add:
            if (is_number(l, 0.0)) return r;
            if (is_number(r, 0.0)) return l;
            break;
        case NodeKind::sub:
            if (is_number(r, 0.0)) return l;
            if (is_number(l, 0.0)) return fold(make_neg(r));
            break;
        case NodeKind::mul:
        case NodeKind::div: {
            double coef = 1.0;
            std::vector<Ast> num, den;
            if (flatten_product(make_binary(ast->kind, l, r), coef, num, den, false))
                return rebuild_product(coef, num, den);
            break;
        }
        case NodeKind::pow:
            if (is_number(r, 1.0)) return l;
            if (is_number(r, 0.0)) return make_number(1.0);
            break;
        default:
            break;
    }
    return make_binary(ast->kind, l, r);
}

// ============================================================================
// Printing and structural helpers
// ============================================================================

namespace {

// Precedence levels for minimal parenthesization; atoms are highest.
int precedence(const Ast& a) {
    switch (a->kind) {
        case NodeKind::add:
        case NodeKind::sub: return 1;
        case NodeKind::mul:
        case NodeKind::div: return 2;
        case NodeKind::neg: return 3;
        case NodeKind::pow: return 4;
        default: return 5;
    }
}

std::string format_number(double v) {
    if (v < 0.0) // negative literals render through unary minus
        return "-" + format_number(-v);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    // trim digits while the value still round-trips
    for (int prec = 1; prec < 17; ++prec) {
        char probe[64];
        std::snprintf(probe, sizeof probe, "%.*g", prec, v);
        double back = 0.0;
        std::sscanf(probe, "%lf", &back);
        if (back == v)
            return probe;
    }
    return buf;
}

void render(const Ast& a, std::string& out) {
    switch (a->kind) {
        case NodeKind::number:
            out += format_number(a->number);
            return;
        case NodeKind::param:
            out += a->name;
            return;
        case NodeKind::var:
            out += var_name(a->var);
            return;
        case NodeKind::neg: {
            out += '-';
            const bool need = precedence(a->lhs) < precedence(a) ||
                              (a->lhs->kind == NodeKind::number && a->lhs->number < 0.0);
            if (need) out += '(';
            render(a->lhs, out);
            if (need) out += ')';
            return;
        }
        case NodeKind::call:
            out += func_name(a->func);
            out += '(';
            render(a->lhs, out);
            out += ')';
            return;
        case NodeKind::pow: {
            // grammar: power := atom ("^" factor)? -- the base must be an atom
            const bool base_needs = precedence(a->lhs) < 5 ||
                                    (a->lhs->kind == NodeKind::number && a->lhs->number < 0.0);
            if (base_needs) out += '(';
            render(a->lhs, out);
            if (base_needs) out += ')';
            out += '^';
            // the exponent is a factor: unary minus and nested pow are fine bare
            const bool exp_needs = precedence(a->rhs) < 3;
            if (exp_needs) out += '(';
            render(a->rhs, out);
            if (exp_needs) out += ')';
            return;
        }
        default:
            break;
    }
    const int prec = precedence(a);
    const char op = a->kind == NodeKind::add ? '+'
                  : a->kind == NodeKind::sub ? '-'
                  : a->kind == NodeKind::mul ? '*'
                                             : '/';
    const bool l_needs = precedence(a->lhs) < prec;
    if (l_needs) out += '(';
    render(a->lhs, out);
    if (l_needs) out += ')';
    out += op;
    // left-associative: an equal-precedence rhs needs parens (a-(b-c));
    // a negative-literal rhs would fuse with the operator otherwise
    const bool r_needs = precedence(a->rhs) <= prec ||
                         (a->rhs->kind == NodeKind::number && a->rhs->number < 0.0);
    if (r_needs) out += '(';
    render(a->rhs, out);
    if (r_needs) out += ')';
}

} // namespace

std::string to_string(const Ast& ast) {
    std::string out;
    render(ast, out);
    return out;
}

std::string print(const Ast& ast) { return to_string(fold(ast)); }

bool equal(const Ast& x, const Ast& y) {
    if (x.get() == y.get())
        return true;
    if (x->kind != y->kind)
        return false;
    switch (x->kind) {
        case NodeKind::number: return x->number == y->number;
        case NodeKind::param: return x->name == y->name;
        case NodeKind::var: return x->var == y->var;
        case NodeKind::neg: return equal(x->lhs, y->lhs);
        case NodeKind::call: return x->func == y->func && equal(x->lhs, y->lhs);
        default: return equal(x->lhs, y->lhs) && equal(x->rhs, y->rhs);
    }
}

bool uses_var(const Ast& ast, Var v) {
    switch (ast->kind) {
        case NodeKind::number:
        case NodeKind::param:
            return false;
        case NodeKind::var:
            return ast->var == v;
        case NodeKind::neg:
        case NodeKind::call:
            return uses_var(ast->lhs, v);
        default:
            return uses_var(ast->lhs, v) || uses_var(ast->rhs, v);
    }
}

namespace {
void collect_params(const Ast& ast, std::set<std::string>& out) {
    switch (ast->kind) {
        case NodeKind::param:
            out.insert(ast->name);
            return;
        case NodeKind::number:
        case NodeKind::var:
            return;
        case NodeKind::neg:
        case NodeKind::call:
            collect_params(ast->lhs, out);
            return;
        default:
            collect_params(ast->lhs, out);
            collect_params(ast->rhs, out);
    }
}
} // namespace

std::set<std::string> param_names(const Ast& ast) {
    std::set<std::string> out;
    collect_params(ast, out);
    return out;
}

} // namespace expr
} // namespace hahn
