#include "hahn/report.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace hahn {

// ============================================================================
// JsonWriter
// ============================================================================

std::string JsonWriter::format(double v) {
    if (!std::isfinite(v))
        return v > 0 ? "1e308" : (v < 0 ? "-1e308" : "0");
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void JsonWriter::comma() {
    if (need_comma_)
        out_ += ',';
    need_comma_ = false;
}

void JsonWriter::begin_object() {
    comma();
    out_ += '{';
}

void JsonWriter::end_object() {
    out_ += '}';
    need_comma_ = true;
}

void JsonWriter::begin_array(const std::string& key) {
    comma();
    out_ += '"';
    out_ += key;
    out_ += "\":[";
}

void JsonWriter::begin_object(const std::string& key) {
    comma();
    out_ += '"';
    out_ += key;
    out_ += "\":{";
}

void JsonWriter::end_array() {
    out_ += ']';
    need_comma_ = true;
}

namespace {
std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            default:
                if (static_cast<unsigned char>(c) < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof buf, "\\u%04x", c);
                    out += buf;
                } else {
                    out += c;
                }
        }
    }
    return out;
}
} // namespace

void JsonWriter::field(const std::string& key, double v) {
    comma();
    out_ += '"';
    out_ += key;
    out_ += "\":";
    out_ += format(v);
    need_comma_ = true;
}

void JsonWriter::field(const std::string& key, long v) {
    comma();
    out_ += '"';
    out_ += key;
    out_ += "\":";
    out_ += std::to_string(v);
    need_comma_ = true;
}

void JsonWriter::field(const std::string& key, bool v) {
    comma();
    out_ += '"';
    out_ += key;
    out_ += "\":";
    out_ += v ? "true" : "false";
    need_comma_ = true;
}

void JsonWriter::field(const std::string& key, const std::string& v) {
    comma();
    out_ += '"';
    out_ += key;
    out_ += "\":\"";
    out_ += escape(v);
    out_ += '"';
    need_comma_ = true;
}

void JsonWriter::field(const std::string& key, const char* v) {
    field(key, std::string(v));
}

void JsonWriter::field_null(const std::string& key) {
    comma();
    out_ += '"';
    out_ += key;
    out_ += "\":null";
    need_comma_ = true;
}

void JsonWriter::element(double v) {
    comma();
    out_ += format(v);
    need_comma_ = true;
}

void JsonWriter::object_element() {
    comma();
    out_ += '{';
}

// ============================================================================
// Reports
// ============================================================================

namespace {

char hash_hex_digit(std::uint64_t v) {
    return "0123456789abcdef"[v & 0xf];
}

std::string hash_hex(std::uint64_t h) {
    std::string s = "0x";
    for (int shift = 60; shift >= 0; shift -= 4)
        s += hash_hex_digit(h >> shift);
    return s;
}

void write_provenance(JsonWriter& w, const LoadedProblem& loaded, int solve_depth,
                      double tail_estimate) {
    w.begin_object("provenance");
    w.field("source", loaded.source);
    w.field("input_hash", hash_hex(loaded.input_hash));
    w.field("q", loaded.problem.params.q);
    w.field("omega", loaded.problem.params.omega);
    w.field("omega0", loaded.problem.params.omega0);
    w.field("a", loaded.problem.a);
    w.field("b", loaded.problem.b);
    w.field("depth", static_cast<long>(loaded.solver.depth));
    w.field("solve_depth", static_cast<long>(solve_depth));
    w.field("tail_estimate", tail_estimate);
    w.field("tol", loaded.solver.tol);
    w.field("sense", std::string(loaded.problem.sense == Sense::maximize ? "max" : "min"));
    w.end_object();
}

void write_grid(JsonWriter& w, const GridFunction& gf) {
    w.begin_object("grid");
    w.field("depth", static_cast<long>(gf.depth()));
    w.field("value_omega0", gf.value_omega0);
    w.begin_array("t_a");
    for (double t : gf.lattice.orbit_a.points) w.element(t);
    w.end_array();
    w.begin_array("y_a");
    for (double y : gf.values_a) w.element(y);
    w.end_array();
    w.begin_array("t_b");
    for (double t : gf.lattice.orbit_b.points) w.element(t);
    w.end_array();
    w.begin_array("y_b");
    for (double y : gf.values_b) w.element(y);
    w.end_array();
    w.end_object();
}

void write_residuals(JsonWriter& w, const ElResiduals& el, const std::optional<double>& nbc_a,
                     const std::optional<double>& nbc_b) {
    w.field("el_residual_max", el.max_abs());
    w.begin_object("el_residuals");
    w.begin_array("orbit_a");
    for (double r : el.orbit_a) w.element(r);
    w.end_array();
    w.begin_array("orbit_b");
    for (double r : el.orbit_b) w.element(r);
    w.end_array();
    w.end_object();
    if (nbc_a)
        w.field("nbc_a", *nbc_a);
    else
        w.field_null("nbc_a");
    if (nbc_b)
        w.field("nbc_b", *nbc_b);
    else
        w.field_null("nbc_b");
}

} // namespace

std::string solve_report_json(const LoadedProblem& loaded, const SolveReport& report) {
    JsonWriter w;
    w.begin_object();
    write_provenance(w, loaded, report.solve_depth, report.tail_estimate);
    w.field("converged", report.converged);
    w.field("iterations", static_cast<long>(report.iterations));
    w.field("gradient_norm", report.gradient_norm);
    w.field("functional_value", report.functional_value);
    write_residuals(w, report.el_residuals, report.nbc_a, report.nbc_b);
    if (report.lambda)
        w.field("lambda", *report.lambda);
    else
        w.field_null("lambda");
    if (report.lambda0)
        w.field("lambda0", static_cast<long>(*report.lambda0));
    else
        w.field_null("lambda0");
    w.field("gradient_fallback_used", report.gradient_fallback_used);
    w.field("message", report.message);
    write_grid(w, report.minimizer);
    w.end_object();
    return w.str() + "\n";
}

std::string check_report_json(const LoadedProblem& loaded, const GridFunction& candidate,
                              double functional, double tail_estimate, const ElResiduals& el,
                              const std::optional<double>& nbc_a, const std::optional<double>& nbc_b,
                              const ConvexityVerdict& verdict) {
    JsonWriter w;
    w.begin_object();
    write_provenance(w, loaded, candidate.depth(), tail_estimate);
    w.field("functional_value", functional);
    write_residuals(w, el, nbc_a, nbc_b);
    w.begin_object("convexity");
    switch (verdict.kind) {
        case ConvexityKind::convex_evidence: w.field("kind", std::string("convex-evidence")); break;
        case ConvexityKind::concave_evidence: w.field("kind", std::string("concave-evidence")); break;
        case ConvexityKind::neither: w.field("kind", std::string("neither")); break;
    }
    w.field("samples", static_cast<long>(verdict.samples));
    if (verdict.witness) {
        w.begin_object("witness");
        w.field("t", verdict.witness->t);
        w.begin_array("u");
        for (double v : verdict.witness->u) w.element(v);
        w.end_array();
        w.begin_array("du");
        for (double v : verdict.witness->du) w.element(v);
        w.end_array();
        w.field("gap_convex", verdict.witness->gap_convex);
        w.field("gap_concave", verdict.witness->gap_concave);
        w.end_object();
    }
    w.end_object();

    const bool residuals_small = el.max_abs() < 1e-6 &&
                                 (!nbc_a || std::abs(*nbc_a) < 1e-6) &&
                                 (!nbc_b || std::abs(*nbc_b) < 1e-6);
    std::string sufficiency;
    if (verdict.kind == ConvexityKind::convex_evidence && residuals_small)
        sufficiency = "global minimizer supported by joint-convexity evidence (" +
                      std::to_string(verdict.samples) + " samples)";
    else if (verdict.kind == ConvexityKind::concave_evidence && residuals_small)
        sufficiency = "global maximizer supported by joint-concavity evidence (" +
                      std::to_string(verdict.samples) + " samples)";
    else
        sufficiency = "not established";
    w.field("sufficiency", sufficiency);
    w.end_object();
    return w.str() + "\n";
}

std::string sweep_report_json(const LoadedProblem& loaded, const std::vector<SweepRecord>& records) {
    JsonWriter w;
    w.begin_object();
    write_provenance(w, loaded, loaded.solver.depth, 0.0);
    w.begin_array("sweep");
    for (const SweepRecord& rec : records) {
        w.object_element();
        w.begin_object("varied");
        for (const auto& [k, v] : rec.varied)
            w.field(k, v);
        w.end_object();
        w.field("ok", rec.ok);
        if (!rec.ok) {
            w.field("error", rec.error);
            w.end_object();
            continue;
        }
        w.field("converged", rec.converged);
        w.field("functional_value", rec.functional_value);
        w.field("y_at_a", rec.y_at_a);
        w.field("y_at_b", rec.y_at_b);
        w.field("el_residual_max", rec.el_residual_max);
        if (rec.nbc_a) w.field("nbc_a", *rec.nbc_a); else w.field_null("nbc_a");
        if (rec.nbc_b) w.field("nbc_b", *rec.nbc_b); else w.field_null("nbc_b");
        if (rec.lambda) w.field("lambda", *rec.lambda); else w.field_null("lambda");
        w.end_object();
    }
    w.end_array();
    w.end_object();
    return w.str() + "\n";
}

// ============================================================================
// CSV grid format
// ============================================================================

std::string grid_csv(const GridFunction& gf) {
    std::string out = "t,y,Dy,orbit,k\n";
    auto row = [&](double t, double y, const std::string& dy, const char* orbit, int k) {
        out += JsonWriter::format(t);
        out += ',';
        out += JsonWriter::format(y);
        out += ',';
        out += dy;
        out += ',';
        out += orbit;
        out += ',';
        out += k >= 0 ? std::to_string(k) : std::string();
        out += '\n';
    };
    const int N = gf.depth();
    for (int s = 0; s < 2; ++s) {
        const Orbit& orbit = (s == 0) ? gf.lattice.orbit_a : gf.lattice.orbit_b;
        const std::vector<double>& vals = (s == 0) ? gf.values_a : gf.values_b;
        const char* name = (s == 0) ? "a" : "b";
        for (int k = 0; k <= N; ++k) {
            std::string dy;
            if (k < N) {
                const double d = orbit.points[static_cast<std::size_t>(k) + 1] -
                                 orbit.points[static_cast<std::size_t>(k)];
                if (d != 0.0)
                    dy = JsonWriter::format(
                        (vals[static_cast<std::size_t>(k) + 1] - vals[static_cast<std::size_t>(k)]) / d);
            }
            row(orbit.points[static_cast<std::size_t>(k)], vals[static_cast<std::size_t>(k)], dy, name, k);
        }
    }
    row(gf.lattice.omega0(), gf.value_omega0, "", "omega0", -1);
    return out;
}

GridFunction read_grid_csv(const std::string& text, const VariationalProblem& problem) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line.rfind("t,y,Dy,orbit,k", 0) != 0)
        throw DomainError("candidate CSV: missing 't,y,Dy,orbit,k' header");

    struct Row {
        double t, y;
        std::string orbit;
        int k;
    };
    std::vector<Row> rows;
    int max_k = -1;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        std::istringstream ls(line);
        std::string t_s, y_s, dy_s, orbit_s, k_s;
        std::getline(ls, t_s, ',');
        std::getline(ls, y_s, ',');
        std::getline(ls, dy_s, ',');
        std::getline(ls, orbit_s, ',');
        std::getline(ls, k_s, ',');
        Row r{};
        try {
            r.t = std::stod(t_s);
            r.y = std::stod(y_s);
        } catch (...) {
            throw DomainError("candidate CSV: malformed numeric field in line '" + line + "'");
        }
        r.orbit = orbit_s;
        r.k = k_s.empty() ? -1 : std::stoi(k_s);
        if (r.orbit != "a" && r.orbit != "b" && r.orbit != "omega0")
            throw DomainError("candidate CSV: orbit column must be a, b or omega0");
        if (r.orbit != "omega0")
            max_k = std::max(max_k, r.k);
        rows.push_back(r);
    }
    if (max_k < 1)
        throw DomainError("candidate CSV: no orbit rows found");

    Lattice lat = build_lattice(problem.params, problem.a, problem.b, max_k);
    GridFunction gf = zero_grid(lat);
    std::vector<bool> seen_a(static_cast<std::size_t>(max_k) + 1, false);
    std::vector<bool> seen_b(seen_a);
    bool seen_omega0 = false;
    for (const Row& r : rows) {
        if (r.orbit == "omega0") {
            gf.value_omega0 = r.y;
            seen_omega0 = true;
            continue;
        }
        if (r.k < 0 || r.k > max_k)
            throw DomainError("candidate CSV: orbit index out of range");
        const Orbit& orbit = r.orbit == "a" ? lat.orbit_a : lat.orbit_b;
        const double expected_t = orbit.points[static_cast<std::size_t>(r.k)];
        if (std::abs(r.t - expected_t) > 1e-9 * (1.0 + std::abs(expected_t)))
            throw DomainError("candidate CSV: t value at orbit " + r.orbit + ", k=" +
                              std::to_string(r.k) + " does not lie on the problem lattice");
        ((r.orbit == "a") ? gf.values_a : gf.values_b)[static_cast<std::size_t>(r.k)] = r.y;
        ((r.orbit == "a") ? seen_a : seen_b)[static_cast<std::size_t>(r.k)] = true;
    }
    for (int k = 0; k <= max_k; ++k)
        if (!seen_a[static_cast<std::size_t>(k)] || !seen_b[static_cast<std::size_t>(k)])
            throw DomainError("candidate CSV: missing row for orbit index " + std::to_string(k));
    if (!seen_omega0)
        gf.value_omega0 = 0.5 * (gf.values_a.back() + gf.values_b.back());
    return gf;
}

} // namespace hahn
