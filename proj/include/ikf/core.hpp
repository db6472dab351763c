#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "ikf/chi2.hpp"
#include "ikf/error.hpp"

namespace ikf {

using Tick = std::int64_t;
using NodeId = std::uint32_t;
using AgentId = std::uint32_t;

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Derived>
Mat<typename Derived::Scalar> symmetrized(const Eigen::MatrixBase<Derived>& m) {
  return (m + m.transpose()) / typename Derived::Scalar(2);
}

template <typename Scalar = double>
struct Belief {
  Tick t = 0;
  Vec<Scalar> mean;
  Mat<Scalar> cov;

  Belief() = default;
  Belief(Tick t_, Vec<Scalar> mean_, const Mat<Scalar>& cov_) : t(t_), mean(std::move(mean_)) {
    if (cov_.rows() != cov_.cols() || cov_.rows() != mean.size())
      fail(ErrorCode::DimensionMismatch, "belief mean and covariance disagree");
    cov = symmetrized(cov_);
  }

  Eigen::Index dim() const { return mean.size(); }
};

// min eigenvalue >= -rel_tol * |trace|
template <typename Derived>
bool is_psd(const Eigen::MatrixBase<Derived>& m, double rel_tol = 1e-9) {
  using S = typename Derived::Scalar;
  if (m.rows() == 0) return true;
  Mat<S> s = symmetrized(m);
  Eigen::SelfAdjointEigenSolver<Mat<S>> es(s, Eigen::EigenvaluesOnly);
  const S tr = std::abs(s.trace());
  return es.eigenvalues().minCoeff() >= -S(rel_tol) * tr;
}

namespace detail {

template <typename S>
Eigen::LDLT<Mat<S>> checked_ldlt(const Mat<S>& m, double rel, ErrorCode code, const char* what) {
  Eigen::LDLT<Mat<S>> ldlt(m);
  const S scale = std::max(std::abs(m.trace()), std::numeric_limits<S>::min());
  if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= S(rel) * scale) fail(code, what);
  return ldlt;
}

}  // namespace detail

template <typename DerivedE, typename DerivedC>
typename DerivedE::Scalar nees(const Eigen::MatrixBase<DerivedE>& err,
                               const Eigen::MatrixBase<DerivedC>& cov) {
  using S = typename DerivedE::Scalar;
  if (cov.rows() != err.size() || cov.cols() != err.size())
    fail(ErrorCode::DimensionMismatch, "error and covariance disagree");
  Mat<S> c = symmetrized(cov);
  auto ldlt = detail::checked_ldlt<S>(c, 1e-12, ErrorCode::SingularCovariance, "covariance not invertible");
  Vec<S> e = err;
  return e.dot(ldlt.solve(e));
}

template <typename Derived, typename Scalar>
Scalar mahalanobis_sq(const Eigen::MatrixBase<Derived>& p, const Belief<Scalar>& b) {
  if (p.size() != b.dim()) fail(ErrorCode::DimensionMismatch, "point and belief disagree");
  return nees(Vec<Scalar>(p - b.mean), b.cov);
}

struct GateResult {
  bool outlier = false;
  double s = 0.0;
};

template <typename DerivedR, typename DerivedS>
GateResult nis_gate(const Eigen::MatrixBase<DerivedR>& r, const Eigen::MatrixBase<DerivedS>& S,
                    double p = 0.997) {
  using Sc = typename DerivedR::Scalar;
  if (S.rows() != r.size() || S.cols() != r.size())
    fail(ErrorCode::DimensionMismatch, "residual and innovation covariance disagree");
  Mat<Sc> s = symmetrized(S);
  auto ldlt = detail::checked_ldlt<Sc>(s, 1e-14, ErrorCode::SingularInnovation,
                                       "innovation covariance not positive definite");
  Vec<Sc> rr = r;
  GateResult g;
  g.s = static_cast<double>(rr.dot(ldlt.solve(rr)));
  g.outlier = g.s > chi2_inv_cdf(p, static_cast<int>(r.size()));
  return g;
}

struct CredibilityBounds {
  double lower = 0.0;
  double upper = 0.0;
  int dof = 1;
  int runs = 1;
  double alpha = 0.05;
};

inline CredibilityBounds anees_bounds(int dof, int runs, double alpha = 0.05) {
  if (dof < 1 || runs < 1 || !(alpha > 0.0 && alpha < 1.0))
    fail(ErrorCode::DomainError, "anees bounds need dof >= 1, runs >= 1, alpha in (0,1)");
  const int n = dof * runs;
  return {chi2_inv_cdf(alpha / 2, n) / runs, chi2_inv_cdf(1 - alpha / 2, n) / runs, dof, runs, alpha};
}

struct ArmseResult {
  std::vector<double> rmse;
  double armse = 0.0;
};

// errors[k][i]: error vector of run i at step k
template <typename Scalar>
ArmseResult armse(const std::vector<std::vector<Vec<Scalar>>>& errors) {
  if (errors.empty()) fail(ErrorCode::EmptyInput, "no steps");
  ArmseResult out;
  out.rmse.reserve(errors.size());
  const Eigen::Index dim = errors.front().empty() ? 0 : errors.front().front().size();
  for (const auto& step : errors) {
    if (step.empty()) fail(ErrorCode::EmptyInput, "step without runs");
    double acc = 0.0;
    for (const auto& e : step) {
      if (e.size() != dim) fail(ErrorCode::DimensionMismatch, "inconsistent error dimension");
      acc += static_cast<double>(e.squaredNorm());
    }
    out.rmse.push_back(std::sqrt(acc / step.size()));
  }
  double sum = 0.0;
  for (double v : out.rmse) sum += v;
  out.armse = sum / out.rmse.size();
  return out;
}

// Zeroes negative eigenvalues.
template <typename Derived>
Mat<typename Derived::Scalar> psd_projection(const Eigen::MatrixBase<Derived>& m) {
  using S = typename Derived::Scalar;
  Eigen::SelfAdjointEigenSolver<Mat<S>> es(symmetrized(m));
  Vec<S> d = es.eigenvalues().cwiseMax(S(0));
  return symmetrized(es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose());
}

template <typename Derived>
Mat<typename Derived::Scalar> correlation_matrix(const Eigen::MatrixBase<Derived>& cov) {
  using S = typename Derived::Scalar;
  Mat<S> c = symmetrized(cov);
  if (!is_psd(c, 0.0)) c = psd_projection(c);
  Vec<S> sd = c.diagonal();
  if (sd.size() > 0 && sd.minCoeff() <= S(1e-15)) fail(ErrorCode::ZeroVariance, "zero variance on diagonal");
  sd = sd.cwiseSqrt();
  Mat<S> k = sd.cwiseInverse().asDiagonal() * c * sd.cwiseInverse().asDiagonal();
  k.diagonal().setOnes();
  return k.cwiseMax(S(-1)).cwiseMin(S(1));
}

}  // namespace ikf
