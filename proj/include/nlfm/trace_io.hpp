#pragma once

#include "nlfm/solver.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace nlfm {

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

/// CSV schema:
/// iter,loss,data_term,balance_term,tikhonov_term,delta_fro,phi_h_err,E_t,D_t,V_t,regret_avg,wall_ms
/// one row per trace row, missing diagnostics as empty fields.
void write_trace(const SolverTrace& trace, std::ostream& out);
void write_trace(const SolverTrace& trace, const std::string& path);

std::vector<TraceRow> read_trace(std::istream& in);
std::vector<TraceRow> read_trace_file(const std::string& path);

}  // namespace nlfm
