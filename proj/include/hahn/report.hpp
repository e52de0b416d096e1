#pragma once

#include <string>

#include "hahn/problem_file.hpp"
#include "hahn/varcalc.hpp"

namespace hahn {

/// Minimal JSON emitter with a fixed key order and floats rendered with 17
/// significant digits, so identical inputs produce byte-identical reports.
class JsonWriter {
public:
    void begin_object();
    void end_object();
    void begin_array(const std::string& key);
    void begin_object(const std::string& key);
    void end_array();
    void field(const std::string& key, double v);
    void field(const std::string& key, long v);
    void field(const std::string& key, bool v);
    void field(const std::string& key, const std::string& v);
    void field(const std::string& key, const char* v);
    void field_null(const std::string& key);
    void element(double v);
    void object_element();
    const std::string& str() const { return out_; }

    static std::string format(double v);

private:
    void comma();
    std::string out_;
    bool need_comma_ = false;
};

/// Full JSON report of a solve, mirroring SolveReport plus provenance.
std::string solve_report_json(const LoadedProblem& loaded, const SolveReport& report);

/// Residual-audit report for an externally supplied candidate.
std::string check_report_json(const LoadedProblem& loaded, const GridFunction& candidate,
                              double functional, double tail_estimate, const ElResiduals& el,
                              const std::optional<double>& nbc_a, const std::optional<double>& nbc_b,
                              const ConvexityVerdict& verdict);

/// One record per parameter tuple of a sweep.
struct SweepRecord {
    std::map<std::string, double> varied;
    bool ok = false;
    std::string error;
    bool converged = false;
    double functional_value = 0.0;
    double y_at_a = 0.0;
    double y_at_b = 0.0;
    double el_residual_max = 0.0;
    std::optional<double> nbc_a, nbc_b;
    std::optional<double> lambda;
};

std::string sweep_report_json(const LoadedProblem& loaded, const std::vector<SweepRecord>& records);

/// CSV grid dump with columns t, y, Dy, orbit, k; one row per lattice point
/// and a final omega0 row. Dy is left empty where the stencil has no deeper
/// neighbor.
std::string grid_csv(const GridFunction& gf);

/// Reads a grid written by grid_csv back onto the lattice of the problem
/// (depth taken from the file). Throws DomainError when the lattice points
/// disagree with the problem's.
GridFunction read_grid_csv(const std::string& text, const VariationalProblem& problem);

} // namespace hahn
