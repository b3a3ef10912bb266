#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <numbers>

#include "varphase/error.hpp"

namespace varphase {

/// Largest state dimension supported. Vectors and matrices live on the stack.
inline constexpr int kMaxDim = 6;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Reduce an angle to [0, 2pi).
inline double wrap_angle(double theta) {
  double r = std::fmod(theta, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  if (r >= kTwoPi) r -= kTwoPi;
  return r;
}

/// Signed distance between two angles, in (-pi, pi].
inline double angle_diff(double a, double b) {
  double d = std::remainder(a - b, kTwoPi);
  return d;
}

template <class Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

inline double spectral_norm(const Mat& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(m);
  return svd.singularValues()(0);
}

/// Symmetric square root factor L with L L^T = Q. Eigenvalues down to -1e-12 are
/// clipped to zero; anything more negative is rejected.
inline Mat covariance_factor(const Mat& q) {
  if (q.rows() != q.cols()) throw Error(ErrorCode::BadCovariance, "Q must be square");
  if (!q.allFinite()) throw Error(ErrorCode::BadCovariance, "Q has non-finite entries");
  if ((q - q.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, q.cwiseAbs().maxCoeff()))
    throw Error(ErrorCode::BadCovariance, "Q is not symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> es(q);
  Vec lam = es.eigenvalues();
  for (int i = 0; i < lam.size(); ++i) {
    if (lam(i) < -1e-12) throw Error(ErrorCode::BadCovariance, "Q is not positive semidefinite");
    lam(i) = std::sqrt(std::max(lam(i), 0.0));
  }
  return es.eigenvectors() * lam.asDiagonal();
}

inline double max_eigenvalue_symmetric(const Mat& q) {
  Eigen::SelfAdjointEigenSolver<Mat> es(q, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

}  // namespace varphase
