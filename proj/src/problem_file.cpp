#include "hahn/problem_file.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "hahn/models.hpp"

namespace hahn {

std::uint64_t fnv1a(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

namespace {

std::string format_real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct KeyValue {
    std::string section;
    std::string key;
    std::string value;
    std::size_t offset; // byte offset of the line start
};

std::vector<KeyValue> tokenize(const std::string& text) {
    std::vector<KeyValue> out;
    std::string section;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string::npos)
            eol = text.size();
        std::string line = text.substr(pos, eol - pos);
        const std::size_t line_start = pos;
        pos = eol + 1;

        const std::size_t hash = line.find('#');
        if (hash != std::string::npos)
            line.resize(hash);
        auto trim = [](std::string s) {
            const auto from = s.find_first_not_of(" \t\r");
            const auto to = s.find_last_not_of(" \t\r");
            return from == std::string::npos ? std::string{} : s.substr(from, to - from + 1);
        };
        line = trim(line);
        if (line.empty())
            continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ParseError(line_start, "malformed section header", "']'");
            section = trim(line.substr(1, line.size() - 2));
            out.push_back({section, "", "", line_start});
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError(line_start, "expected key = value", "'='");
        out.push_back({section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)), line_start});
    }
    return out;
}

double parse_real(const KeyValue& kv) {
    double v = 0.0;
    const char* begin = kv.value.c_str();
    const char* end = begin + kv.value.size();
    const auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc{} || ptr != end)
        throw ParseError(kv.offset, "expected a real number for '" + kv.key + "', got '" + kv.value + "'",
                         "decimal literal");
    return v;
}

int parse_int(const KeyValue& kv) {
    int v = 0;
    const char* begin = kv.value.c_str();
    const char* end = begin + kv.value.size();
    const auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc{} || ptr != end)
        throw ParseError(kv.offset, "expected an integer for '" + kv.key + "'", "integer literal");
    return v;
}

std::optional<double> parse_end(const KeyValue& kv) {
    if (kv.value == "free")
        return std::nullopt;
    if (kv.value.rfind("fixed:", 0) == 0) {
        KeyValue sub = kv;
        sub.value = kv.value.substr(6);
        return parse_real(sub);
    }
    throw ParseError(kv.offset, "boundary must be 'free' or 'fixed:<value>'", "free|fixed:<v>");
}

void apply_solver_overrides(SolveOptions& solver, Sense& sense, const ProblemOverrides& o) {
    if (o.depth) solver.depth = *o.depth;
    if (o.tol) solver.tol = *o.tol;
    if (o.max_iter) solver.max_iter = *o.max_iter;
    if (o.sense) sense = *o.sense;
}

void reject_reserved_param_names(const std::map<std::string, double>& params) {
    static const std::set<std::string> reserved{"t", "y", "Dy", "ya", "yb",
                                                "sin", "cos", "exp", "log", "sqrt", "abs"};
    for (const auto& [name, value] : params)
        if (reserved.count(name))
            throw DomainError("parameter name '" + name + "' collides with a reserved identifier");
}

std::string canonical_description(const VariationalProblem& p, const SolveOptions& s,
                                  const std::string& source) {
    std::ostringstream os;
    os << "source=" << source << ";q=" << format_real(p.params.q) << ";omega=" << format_real(p.params.omega)
       << ";a=" << format_real(p.a) << ";b=" << format_real(p.b)
       << ";L=" << expr::print(p.lagrangian) << ";boundary="
       << (p.boundary.at_a ? "fixed:" + format_real(*p.boundary.at_a) : std::string("free")) << ","
       << (p.boundary.at_b ? "fixed:" + format_real(*p.boundary.at_b) : std::string("free"));
    for (const auto& [k, v] : p.param_values)
        os << ";" << k << "=" << format_real(v);
    if (p.constraint)
        os << ";constraint=" << expr::print(p.constraint->integrand)
           << ";gamma=" << format_real(p.constraint->gamma);
    os << ";sense=" << (p.sense == Sense::maximize ? "max" : "min");
    os << ";depth=" << s.depth << ";tol=" << format_real(s.tol) << ";max_iter=" << s.max_iter;
    return os.str();
}

} // namespace

LoadedProblem parse_problem_text(const std::string& text, const ProblemOverrides& overrides) {
    static const std::set<std::string> known_sections{"hahn", "interval", "lagrangian",
                                                      "boundary", "params", "constraint", "solver"};
    std::optional<double> q, omega, a, b, gamma;
    std::optional<std::string> lagrangian_text, constraint_text;
    std::size_t lagrangian_offset = 0, constraint_offset = 0;
    BoundarySpec boundary;
    bool boundary_a_seen = false, boundary_b_seen = false;
    std::map<std::string, double> params;
    SolveOptions solver;
    Sense sense = Sense::minimize;

    for (const KeyValue& kv : tokenize(text)) {
        if (kv.key.empty()) { // section header
            if (!known_sections.count(kv.section))
                throw ParseError(kv.offset, "unknown section [" + kv.section + "]",
                                 "hahn|interval|lagrangian|boundary|params|constraint|solver");
            continue;
        }
        if (kv.section == "hahn") {
            if (kv.key == "q") q = parse_real(kv);
            else if (kv.key == "omega") omega = parse_real(kv);
            else throw ParseError(kv.offset, "unknown key '" + kv.key + "' in [hahn]", "q|omega");
        } else if (kv.section == "interval") {
            if (kv.key == "a") a = parse_real(kv);
            else if (kv.key == "b") b = parse_real(kv);
            else throw ParseError(kv.offset, "unknown key '" + kv.key + "' in [interval]", "a|b");
        } else if (kv.section == "lagrangian") {
            if (kv.key == "expr") {
                lagrangian_text = kv.value;
                lagrangian_offset = kv.offset;
            } else {
                throw ParseError(kv.offset, "unknown key '" + kv.key + "' in [lagrangian]", "expr");
            }
        } else if (kv.section == "boundary") {
            if (kv.key == "a") { boundary.at_a = parse_end(kv); boundary_a_seen = true; }
            else if (kv.key == "b") { boundary.at_b = parse_end(kv); boundary_b_seen = true; }
            else throw ParseError(kv.offset, "unknown key '" + kv.key + "' in [boundary]", "a|b");
        } else if (kv.section == "params") {
            params[kv.key] = parse_real(kv);
        } else if (kv.section == "constraint") {
            if (kv.key == "expr") { constraint_text = kv.value; constraint_offset = kv.offset; }
            else if (kv.key == "gamma") gamma = parse_real(kv);
            else throw ParseError(kv.offset, "unknown key '" + kv.key + "' in [constraint]", "expr|gamma");
        } else if (kv.section == "solver") {
            if (kv.key == "depth") solver.depth = parse_int(kv);
            else if (kv.key == "tol") solver.tol = parse_real(kv);
            else if (kv.key == "max_iter") solver.max_iter = parse_int(kv);
            else if (kv.key == "sense") {
                if (kv.value == "min") sense = Sense::minimize;
                else if (kv.value == "max") sense = Sense::maximize;
                else throw ParseError(kv.offset, "sense must be min or max", "min|max");
            } else {
                throw ParseError(kv.offset, "unknown key '" + kv.key + "' in [solver]",
                                 "depth|tol|max_iter|sense");
            }
        } else {
            throw ParseError(kv.offset, "key outside any section", "a [section] header");
        }
    }

    if (!q || !omega)
        throw ParseError(0, "[hahn] must set q and omega", "q|omega");
    if (!a || !b)
        throw ParseError(0, "[interval] must set a and b", "a|b");
    if (!lagrangian_text)
        throw ParseError(0, "[lagrangian] must set expr", "expr");
    if (!boundary_a_seen || !boundary_b_seen)
        throw ParseError(0, "[boundary] must set both a and b", "a|b");
    if (constraint_text && !gamma)
        throw ParseError(constraint_offset, "[constraint] needs gamma alongside expr", "gamma");

    ProblemOverrides o = overrides;
    const double q_final = o.q.value_or(*q);
    const double omega_final = o.omega.value_or(*omega);
    std::map<std::string, double> params_final = params;
    for (const auto& [k, v] : o.params)
        params_final[k] = v;
    reject_reserved_param_names(params_final);
    std::set<std::string> declared;
    for (const auto& [k, v] : params_final)
        declared.insert(k);

    LoadedProblem loaded{
        VariationalProblem{HahnParams(q_final, omega_final), *a, *b, nullptr, params_final, {},
                           boundary, std::nullopt, sense},
        solver, "file", 0};
    try {
        loaded.problem.lagrangian = expr::parse(*lagrangian_text, declared);
    } catch (const ParseError& e) {
        throw ParseError(lagrangian_offset + e.position, "in lagrangian expr: " + e.message, e.expected);
    }
    if (constraint_text) {
        try {
            loaded.problem.constraint = IsoConstraint{expr::parse(*constraint_text, declared), *gamma};
        } catch (const ParseError& e) {
            throw ParseError(constraint_offset + e.position, "in constraint expr: " + e.message, e.expected);
        }
    }
    if (!(loaded.problem.a < loaded.problem.b))
        throw ParseError(0, "[interval] requires a < b", "a < b");

    apply_solver_overrides(loaded.solver, loaded.problem.sense, o);
    loaded.input_hash = fnv1a(canonical_description(loaded.problem, loaded.solver, "file"));
    return loaded;
}

bool is_catalog_name(const std::string& name) {
    return name == "example1" || name == "example2" || name == "adjustment";
}

LoadedProblem load_catalog(const std::string& name, const ProblemOverrides& overrides) {
    if (!is_catalog_name(name))
        throw DomainError("unknown catalog problem '" + name + "'");

    reject_reserved_param_names(overrides.params);
    auto get = [&](const char* key, double fallback) {
        auto it = overrides.params.find(key);
        return it == overrides.params.end() ? fallback : it->second;
    };

    LoadedProblem loaded;
    loaded.source = name;
    if (name == "example1") {
        HahnParams p(overrides.q.value_or(0.99), overrides.omega.value_or(0.02));
        loaded.problem = models::example1_problem(p).problem;
    } else if (name == "example2") {
        HahnParams p(overrides.q.value_or(0.99), overrides.omega.value_or(0.02));
        loaded.problem = models::example2_problem(p, get("gamma", 2.0), get("nu", 2.0)).problem;
    } else {
        HahnParams p(overrides.q.value_or(0.99), overrides.omega.value_or(0.01));
        models::AdjustmentSpec spec(p, get("r", 1.05), get("alpha", 1.0), get("T", 1.0),
                                    expr::parse("t"));
        loaded.problem = models::adjustment_problem(spec);
    }
    apply_solver_overrides(loaded.solver, loaded.problem.sense, overrides);
    loaded.input_hash = fnv1a(canonical_description(loaded.problem, loaded.solver, name));
    return loaded;
}

LoadedProblem load_problem(const std::string& source, const ProblemOverrides& overrides) {
    if (is_catalog_name(source))
        return load_catalog(source, overrides);
    std::ifstream in(source);
    if (!in)
        throw DomainError("cannot open problem file '" + source + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    LoadedProblem loaded = parse_problem_text(buffer.str(), overrides);
    loaded.source = source;
    loaded.input_hash = fnv1a(canonical_description(loaded.problem, loaded.solver, source));
    return loaded;
}

} // namespace hahn
