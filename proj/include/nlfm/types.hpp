#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace nlfm {

using Scalar = double;
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using IndexVec = Eigen::ArrayXi;
using Index = Eigen::Index;

/// Observed triples (i_k, t_k, y_k) over an n x T index grid. Duplicate
/// (i, t) pairs are legal (i.i.d. sampling with replacement); iteration
/// order is the storage order and never changes.
struct ObservationSet {
  Index n = 0;  // loading rows
  Index T = 0;  // factor columns
  IndexVec i;   // row index of sample k, in [0, n)
  IndexVec t;   // column index of sample k, in [0, T)
  Vec y;        // observed response of sample k

  Index M() const { return y.size(); }

  void validate() const {
    if (n <= 0 || T <= 0) throw std::invalid_argument("ObservationSet: n and T must be positive");
    if (i.size() != t.size() || i.size() != y.size())
      throw std::invalid_argument("ObservationSet: sample arrays must have equal length");
    if (y.size() < 1) throw std::invalid_argument("ObservationSet: at least one sample required");
    for (Index k = 0; k < i.size(); ++k) {
      if (i[k] < 0 || i[k] >= n) throw std::out_of_range("ObservationSet: row index out of range at sample " + std::to_string(k));
      if (t[k] < 0 || t[k] >= T) throw std::out_of_range("ObservationSet: column index out of range at sample " + std::to_string(k));
    }
  }
};

/// Stacked factor representation Z, rows 0..n-1 the loading block and rows
/// n..n+T-1 the factor block, each row in R^r.
struct FactorMatrix {
  Mat z;        // (n+T) x r
  Index n = 0;
  Index T = 0;
  Index r = 0;

  auto u() const { return z.topRows(n); }
  auto v() const { return z.bottomRows(T); }

  void validate() const {
    if (r < 1) throw std::invalid_argument("FactorMatrix: rank must be >= 1");
    if (z.rows() != n + T || z.cols() != r)
      throw std::invalid_argument("FactorMatrix: storage is not (n+T) x r");
    if (!z.allFinite()) throw std::invalid_argument("FactorMatrix: non-finite entry");
  }
};

/// <A_k, Z Z^T> for the sampling matrix of pair (i, t); reduces to the dot
/// product of loading row i with factor row n + t.
inline double sample_inner_product(const FactorMatrix& z, Index i, Index t) {
  if (i < 0 || i >= z.n) throw std::out_of_range("sample_inner_product: row index out of range");
  if (t < 0 || t >= z.T) throw std::out_of_range("sample_inner_product: column index out of range");
  return z.z.row(i).dot(z.z.row(z.n + t));
}

/// (n+T) * max_row ||Z_row||^2 / ||Z||_F^2.
template <typename Derived>
double incoherence(const Eigen::MatrixBase<Derived>& z) {
  const double fro_sq = z.squaredNorm();
  if (fro_sq == 0.0) return 1.0;
  const double max_row_sq = z.rowwise().squaredNorm().maxCoeff();
  return static_cast<double>(z.rows()) * max_row_sq / fro_sq;
}

/// Named closed-form links used for ground truth and frozen-link runs.
enum class AnalyticLink { identity, sigmoid, piecewise };

inline double link_eval(AnalyticLink f, double x) {
  switch (f) {
    case AnalyticLink::identity: return x;
    case AnalyticLink::sigmoid: return 1.0 / (1.0 + std::exp(-x));
    case AnalyticLink::piecewise:
      if (x < -1.0) return -1.0 + 0.25 * (x + 1.0);
      if (x > 1.0) return 1.0 + 3.0 * (x - 1.0);
      return x;
  }
  return x;
}

inline double link_deriv(AnalyticLink f, double x) {
  switch (f) {
    case AnalyticLink::identity: return 1.0;
    case AnalyticLink::sigmoid: {
      const double s = 1.0 / (1.0 + std::exp(-x));
      return s * (1.0 - s);
    }
    case AnalyticLink::piecewise:
      if (x < -1.0) return 0.25;
      if (x > 1.0) return 3.0;
      return 1.0;
  }
  return 1.0;
}

inline const char* to_string(AnalyticLink f) {
  switch (f) {
    case AnalyticLink::identity: return "identity";
    case AnalyticLink::sigmoid: return "sigmoid";
    case AnalyticLink::piecewise: return "piecewise";
  }
  return "identity";
}

}  // namespace nlfm
