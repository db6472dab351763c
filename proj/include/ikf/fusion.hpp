#pragma once

#include <cmath>

#include "ikf/core.hpp"

namespace ikf {

template <typename Scalar>
struct CiResult {
  Belief<Scalar> fused;
  Scalar omega{};
};

template <typename Scalar>
CiResult<Scalar> ci_fuse(const Belief<Scalar>& a, const Belief<Scalar>& b, double tol = 1e-6) {
  if (a.dim() != b.dim()) fail(ErrorCode::DimensionMismatch, "ci_fuse dimension mismatch");
  auto la = detail::checked_ldlt<Scalar>(a.cov, 1e-12, ErrorCode::SingularCovariance, "Sigma_a singular");
  auto lb = detail::checked_ldlt<Scalar>(b.cov, 1e-12, ErrorCode::SingularCovariance, "Sigma_b singular");
  const Eigen::Index n = a.dim();
  const Mat<Scalar> Ia = la.solve(Mat<Scalar>::Identity(n, n));
  const Mat<Scalar> Ib = lb.solve(Mat<Scalar>::Identity(n, n));
  // maximize log det of the fused information
  auto objective = [&](Scalar w) {
    Mat<Scalar> info = symmetrized(w * Ia + (Scalar(1) - w) * Ib);
    Eigen::LDLT<Mat<Scalar>> l(info);
    return -l.vectorD().array().log().sum();
  };
  const Scalar phi = (std::sqrt(Scalar(5)) - Scalar(1)) / Scalar(2);
  Scalar lo = 0, hi = 1;
  Scalar c = hi - phi * (hi - lo), d = lo + phi * (hi - lo);
  Scalar fc = objective(c), fd = objective(d);
  while (hi - lo > Scalar(tol)) {
    const Scalar gap = std::abs(fc - fd);
    if (gap <= Scalar(1e-14) * (Scalar(1) + std::abs(fc))) {
      lo = c;
      hi = d;
      c = hi - phi * (hi - lo);
      d = lo + phi * (hi - lo);
      fc = objective(c);
      fd = objective(d);
    } else if (fc < fd) {
      hi = d; d = c; fd = fc;
      c = hi - phi * (hi - lo);
      fc = objective(c);
    } else {
      lo = c; c = d; fc = fd;
      d = lo + phi * (hi - lo);
      fd = objective(d);
    }
  }
  Scalar w = (lo + hi) / 2;
  // the optimum may sit on the boundary
  if (objective(Scalar(1)) < objective(w)) w = 1;
  if (objective(Scalar(0)) < objective(w)) w = 0;
  Mat<Scalar> info = symmetrized(w * Ia + (Scalar(1) - w) * Ib);
  Mat<Scalar> cov = info.ldlt().solve(Mat<Scalar>::Identity(n, n));
  Vec<Scalar> mean = cov * (w * Ia * a.mean + (Scalar(1) - w) * Ib * b.mean);
  return {Belief<Scalar>(std::max(a.t, b.t), mean, cov), w};
}

template <typename Scalar, typename Derived>
Belief<Scalar> blue_fuse(const Belief<Scalar>& a, const Belief<Scalar>& b, const Eigen::MatrixBase<Derived>& cross) {
  if (a.dim() != b.dim() || cross.rows() != a.dim() || cross.cols() != a.dim())
    fail(ErrorCode::DimensionMismatch, "blue_fuse dimension mismatch");
  const Mat<Scalar> Sab = cross;
  const Mat<Scalar> Sba = Sab.transpose();
  const Mat<Scalar> D = a.cov + b.cov - Sab - Sba;
  Eigen::FullPivLU<Mat<Scalar>> lu(D);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible()) fail(ErrorCode::SingularDenominator, "Sigma_aa + Sigma_bb - Sigma_ab - Sigma_ba singular");
  const Mat<Scalar> Dinv = lu.inverse();
  Vec<Scalar> mean = (b.cov - Sba) * Dinv * a.mean + (a.cov - Sab) * Dinv * b.mean;
  Mat<Scalar> cov = a.cov - (a.cov - Sab).transpose() * Dinv * (a.cov - Sab);
  return Belief<Scalar>(std::max(a.t, b.t), mean, cov);
}

// One-step completion of the missing (i,k) block given the (i,j), (j,j), (j,k) blocks.
template <typename D1, typename D2, typename D3>
Mat<typename D1::Scalar> max_det_completion(const Eigen::MatrixBase<D1>& S_ij, const Eigen::MatrixBase<D2>& S_jj,
                                            const Eigen::MatrixBase<D3>& S_jk) {
  using S = typename D1::Scalar;
  Mat<S> jj = symmetrized(S_jj);
  auto ldlt = detail::checked_ldlt<S>(jj, 1e-12, ErrorCode::SingularCovariance, "Sigma_jj singular");
  return S_ij * ldlt.solve(Mat<S>(S_jk));
}

}  // namespace ikf
