#include "nlfm/io.hpp"

#include "nlfm/trace_io.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace nlfm {

namespace {

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  return out;
}

}  // namespace

void save_observations(const ObservationSet& obs, const std::string& path) {
  auto out = open_out(path);
  out << "# n=" << obs.n << " T=" << obs.T << "\n";
  out << "i,t,y\n";
  for (Index k = 0; k < obs.M(); ++k)
    out << obs.i[k] << ',' << obs.t[k] << ',' << format_double(obs.y[k]) << '\n';
}

ObservationSet load_observations(const std::string& path) {
  auto in = open_in(path);
  ObservationSet obs;
  std::string line;
  if (!std::getline(in, line) || line.rfind("# n=", 0) != 0)
    throw std::runtime_error("load_observations: missing dimension comment in " + path);
  std::istringstream head(line.substr(1));
  std::string tok;
  while (head >> tok) {
    if (tok.rfind("n=", 0) == 0) obs.n = std::stoll(tok.substr(2));
    if (tok.rfind("T=", 0) == 0) obs.T = std::stoll(tok.substr(2));
  }
  std::getline(in, line);  // header
  std::vector<int> is, ts;
  std::vector<double> ys;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string a, b, c;
    std::getline(ss, a, ',');
    std::getline(ss, b, ',');
    std::getline(ss, c, ',');
    is.push_back(std::stoi(a));
    ts.push_back(std::stoi(b));
    ys.push_back(std::stod(c));
  }
  obs.i = Eigen::Map<IndexVec>(is.data(), static_cast<Index>(is.size()));
  obs.t = Eigen::Map<IndexVec>(ts.data(), static_cast<Index>(ts.size()));
  obs.y = Eigen::Map<Vec>(ys.data(), static_cast<Index>(ys.size()));
  obs.validate();
  return obs;
}

void save_factors(const FactorMatrix& z, const std::string& path) {
  auto out = open_out(path);
  out << "# n=" << z.n << " T=" << z.T << " r=" << z.r << "\n";
  for (Index a = 0; a < z.z.rows(); ++a) {
    for (Index b = 0; b < z.r; ++b) {
      if (b > 0) out << ',';
      out << format_double(z.z(a, b));
    }
    out << '\n';
  }
}

FactorMatrix load_factors(const std::string& path) {
  auto in = open_in(path);
  FactorMatrix z;
  std::string line;
  if (!std::getline(in, line) || line.rfind("# n=", 0) != 0)
    throw std::runtime_error("load_factors: missing dimension comment in " + path);
  std::istringstream head(line.substr(1));
  std::string tok;
  while (head >> tok) {
    if (tok.rfind("n=", 0) == 0) z.n = std::stoll(tok.substr(2));
    if (tok.rfind("T=", 0) == 0) z.T = std::stoll(tok.substr(2));
    if (tok.rfind("r=", 0) == 0) z.r = std::stoll(tok.substr(2));
  }
  z.z.resize(z.n + z.T, z.r);
  Index row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string field;
    for (Index b = 0; b < z.r; ++b) {
      std::getline(ss, field, ',');
      z.z(row, b) = std::stod(field);
    }
    ++row;
  }
  if (row != z.n + z.T) throw std::runtime_error("load_factors: row count mismatch in " + path);
  z.validate();
  return z;
}

void save_link(const Link& phi, const std::string& path) {
  nlohmann::json j;
  if (const auto* analytic = std::get_if<AnalyticLink>(&phi)) {
    j["analytic"] = to_string(*analytic);
  } else {
    const auto& dict = std::get<LinkFunction>(phi);
    j["kernel"]["family"] = dict.kernel.family == KernelFamily::gaussian ? "gaussian" : "laplacian";
    j["kernel"]["bandwidth"] = dict.kernel.bandwidth;
    j["offset"] = dict.offset;
    j["centers"] = std::vector<double>(dict.centers.begin(), dict.centers.end());
    j["coeffs"] = std::vector<double>(dict.coeffs.begin(), dict.coeffs.end());
  }
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

Link load_link(const std::string& path) {
  auto in = open_in(path);
  nlohmann::json j;
  in >> j;
  if (j.contains("analytic")) {
    const std::string name = j["analytic"].get<std::string>();
    if (name == "identity") return AnalyticLink::identity;
    if (name == "sigmoid") return AnalyticLink::sigmoid;
    if (name == "piecewise") return AnalyticLink::piecewise;
    throw std::runtime_error("load_link: unknown analytic link " + name);
  }
  LinkFunction dict;
  const std::string family = j["kernel"]["family"].get<std::string>();
  dict.kernel.family = family == "laplacian" ? KernelFamily::laplacian : KernelFamily::gaussian;
  dict.kernel.bandwidth = j["kernel"]["bandwidth"].get<double>();
  dict.offset = j["offset"].get<double>();
  const auto centers = j["centers"].get<std::vector<double>>();
  const auto coeffs = j["coeffs"].get<std::vector<double>>();
  dict.centers = Eigen::Map<const Vec>(centers.data(), static_cast<Index>(centers.size()));
  dict.coeffs = Eigen::Map<const Vec>(coeffs.data(), static_cast<Index>(coeffs.size()));
  return dict;
}

}  // namespace nlfm
