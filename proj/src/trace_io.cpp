#include "nlfm/trace_io.hpp"

#include <charconv>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace nlfm {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

void put(std::ostream& out, const std::optional<double>& v) {
  if (v.has_value()) out << format_double(*v);
}

std::optional<double> parse_field(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{}) throw std::runtime_error("read_trace: bad numeric field '" + s + "'");
  return v;
}

}  // namespace

void write_trace(const SolverTrace& trace, std::ostream& out) {
  out << "iter,loss,data_term,balance_term,tikhonov_term,delta_fro,phi_h_err,E_t,D_t,V_t,regret_avg,wall_ms\n";
  for (const auto& row : trace.rows) {
    out << row.iter << ',' << format_double(row.loss) << ',' << format_double(row.data_term) << ','
        << format_double(row.balance_term) << ',' << format_double(row.tikhonov_term) << ',';
    put(out, row.delta_fro);
    out << ',';
    put(out, row.phi_h_err);
    out << ',';
    put(out, row.e_t);
    out << ',';
    put(out, row.d_t);
    out << ',';
    put(out, row.v_t);
    out << ',';
    put(out, row.regret_avg);
    out << ',' << format_double(row.wall_ms) << '\n';
  }
}

void write_trace(const SolverTrace& trace, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_trace: cannot open " + path);
  write_trace(trace, out);
  out.flush();
  if (!out) throw std::runtime_error("write_trace: write failed for " + path);
}

std::vector<TraceRow> read_trace(std::istream& in) {
  std::vector<TraceRow> rows;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("read_trace: empty stream");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string cur;
    std::istringstream ss(line);
    while (std::getline(ss, cur, ',')) fields.push_back(cur);
    while (fields.size() < 12) fields.emplace_back();
    TraceRow row;
    row.iter = static_cast<int>(*parse_field(fields[0]));
    row.loss = *parse_field(fields[1]);
    row.data_term = *parse_field(fields[2]);
    row.balance_term = *parse_field(fields[3]);
    row.tikhonov_term = *parse_field(fields[4]);
    row.delta_fro = parse_field(fields[5]);
    row.phi_h_err = parse_field(fields[6]);
    row.e_t = parse_field(fields[7]);
    row.d_t = parse_field(fields[8]);
    row.v_t = parse_field(fields[9]);
    row.regret_avg = parse_field(fields[10]);
    row.wall_ms = *parse_field(fields[11]);
    rows.push_back(row);
  }
  return rows;
}

std::vector<TraceRow> read_trace_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_trace: cannot open " + path);
  return read_trace(in);
}

}  // namespace nlfm
