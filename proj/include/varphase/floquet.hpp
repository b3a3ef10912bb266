#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "varphase/periodic.hpp"

namespace varphase {

/// Floquet frame P(theta) with Pi(t) = P(omega0 t) e^{tS} P(0)^{-1}, S = diag(nu), nu_1 = 0.
/// W = [P P^T]^{-1} = P^{-T} P^{-1} is the weight of the phase-dependent inner product.
struct FloquetFrame {
  int dim = 0;
  double frequency = 0.0;
  Vec exponents;          // nu_1 (trivial) first, the rest in descending order
  Eigen::VectorXd multipliers;
  double decay_bound = 0.0;  // b = min_{i>=2} -nu_i
  Mat monodromy;          // principal monodromy X(Delta0), X(0) = I
  double periodicity_defect = 0.0;  // max |P(Delta0) - P(0)| from direct integration
  double eigenbasis_condition = 1.0;
  PeriodicTable P, dP, Pinv, dPinv, d2Pinv, W, dW, d2W, R;

  Mat S() const { return Mat(exponents.asDiagonal()); }
};

namespace detail {

// u' = F(u), Y' = J(u) Y - Y diag(shift) (columns appended column-major).
struct ShiftedVariationalRhs {
  const OscillatorModel* model;
  Vec shift;
  void operator()(double, const Eigen::VectorXd& y, Eigen::VectorXd& dy) const {
    const int d = model->dim;
    Vec u = head_vec(y, d);
    dy.head(d) = model->drift(u);
    Mat j = model->jacobian ? model->jacobian(u) : finite_difference_jacobian(*model, u);
    Eigen::Map<const Eigen::MatrixXd> z(y.data() + d, d, d);
    Eigen::Map<Eigen::MatrixXd> dz(dy.data() + d, d, d);
    dz = j * z;
    for (int i = 0; i < d; ++i) dz.col(i) -= shift(i) * z.col(i);
  }
};

inline Eigen::VectorXd pack_state(const Vec& u, const Mat& z) {
  const int d = static_cast<int>(u.size());
  Eigen::VectorXd y(d + d * d);
  y.head(d) = u;
  Eigen::Map<Eigen::MatrixXd>(y.data() + d, d, d) = z;
  return y;
}

inline Mat unpack_matrix(const Eigen::VectorXd& y, int d) {
  return Mat(Eigen::Map<const Eigen::MatrixXd>(y.data() + d, d, d));
}

}  // namespace detail

/// Z(0) = [Phi'(0) | q_2 | ... | q_d], the q_i completing Phi'(0) to an orthogonal basis
/// by Gram-Schmidt on the standard basis, skipping the vector most parallel to Phi'(0).
inline Mat initial_fundamental(const LimitCycle& cycle) {
  const int d = cycle.dim;
  Vec t = cycle.dphi.sample_vec(0);
  Mat z(d, d);
  z.col(0) = t;
  int skip = 0;
  for (int i = 1; i < d; ++i)
    if (std::abs(t(i)) > std::abs(t(skip))) skip = i;
  int col = 1;
  for (int i = 0; i < d; ++i) {
    if (i == skip) continue;
    Vec q = Vec::Unit(d, i);
    for (int c = 0; c < col; ++c) q -= (z.col(c).dot(q) / z.col(c).squaredNorm()) * z.col(c);
    z.col(col++) = q / q.norm();
  }
  return z;
}

/// Fundamental matrix Z(t) of z' = J(Phi(omega0 t)) z from initial_fundamental(cycle).
inline Mat fundamental_matrix(const OscillatorModel& model, const LimitCycle& cycle, double t,
                              const OdeOptions& opt = {1e-14, 1e-13}) {
  const int d = cycle.dim;
  Mat z0 = initial_fundamental(cycle);
  if (t == 0.0) return z0;
  DormandPrince dp(opt);
  detail::ShiftedVariationalRhs rhs{&model, Vec::Zero(d)};
  Eigen::VectorXd y = dp.integrate(rhs, 0.0, detail::pack_state(cycle.phi.sample_vec(0), z0), t);
  return detail::unpack_matrix(y, d);
}

namespace detail {

inline PeriodicTable smooth_derivative(const PeriodicTable& t, int order) {
  return t.filtered(kSpectralFloor).derivative(order);
}

}  // namespace detail

/// Assembles every derived table of a frame from P sampled on the cycle grid.
inline FloquetFrame make_frame(const LimitCycle& cycle, const Vec& exponents, const std::vector<Mat>& p_samples) {
  const int d = cycle.dim;
  const int n = cycle.n_grid();
  if (static_cast<int>(p_samples.size()) != n) throw Error(ErrorCode::InvalidArgument, "P needs one sample per grid node");
  if (exponents.size() != d) throw Error(ErrorCode::InvalidArgument, "need d exponents");
  FloquetFrame f;
  f.dim = d;
  f.frequency = cycle.frequency;
  f.exponents = exponents;
  f.decay_bound = d > 1 ? -exponents.tail(d - 1).maxCoeff() : 0.0;
  std::vector<Mat> inv(n), w(n), r(n);
  for (int j = 0; j < n; ++j) {
    inv[j] = p_samples[j].inverse();
    w[j] = inv[j].transpose() * inv[j];
    r[j] = w[j] * cycle.dphi.sample_vec(j);
  }
  f.P = PeriodicTable(p_samples);
  f.dP = detail::smooth_derivative(f.P, 1);
  f.Pinv = PeriodicTable(inv);
  f.dPinv = detail::smooth_derivative(f.Pinv, 1);
  f.d2Pinv = detail::smooth_derivative(f.Pinv, 2);
  f.W = PeriodicTable(w);
  f.dW = detail::smooth_derivative(f.W, 1);
  f.d2W = detail::smooth_derivative(f.W, 2);
  f.R = PeriodicTable(r);
  f.monodromy = Mat::Identity(d, d);
  return f;
}

/// Monodromy eigendecomposition and the Floquet frame on the cycle grid.
inline FloquetFrame floquet_decompose(const OscillatorModel& model, const LimitCycle& cycle,
                                      const OdeOptions& opt = {1e-14, 1e-13}) {
  const int d = cycle.dim;
  const int n = cycle.n_grid();
  const double period = cycle.period;
  if (d < 2) throw Error(ErrorCode::InvalidArgument, "Floquet frame needs d >= 2");

  Mat z0 = initial_fundamental(cycle);
  Mat zp = fundamental_matrix(model, cycle, period, opt);
  Mat x = zp * z0.inverse();

  Eigen::EigenSolver<Mat> es(x);
  if (es.info() != Eigen::Success) throw Error(ErrorCode::ComplexMultipliers, "eigendecomposition failed");
  auto mu = es.eigenvalues();
  auto vecs = es.eigenvectors();
  for (int i = 0; i < d; ++i) {
    if (std::abs(mu(i).imag()) > 1e-8) throw Error(ErrorCode::ComplexMultipliers, "non-real Floquet multiplier");
    if (mu(i).real() <= 0.0)
      throw Error(ErrorCode::ComplexMultipliers, "non-positive multiplier has no real logarithm");
  }
  std::vector<int> order(d);
  std::iota(order.begin(), order.end(), 0);
  int trivial = 0;
  for (int i = 1; i < d; ++i)
    if (std::abs(mu(i).real() - 1.0) < std::abs(mu(trivial).real() - 1.0)) trivial = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (a == trivial || b == trivial) return a == trivial && b != trivial;
    return mu(a).real() > mu(b).real();
  });

  FloquetFrame frame;
  Vec nu(d);
  Eigen::VectorXd mult(d);
  Mat p0(d, d);
  for (int c = 0; c < d; ++c) {
    int i = order[c];
    mult(c) = mu(i).real();
    nu(c) = std::log(mu(i).real()) / period;
    Vec v = vecs.col(i).real();
    v /= v.norm();
    int big = 0;
    v.cwiseAbs().maxCoeff(&big);
    if (v(big) < 0) v = -v;
    p0.col(c) = v;
  }
  for (int c = 1; c < d; ++c)
    if (nu(c) > -1e-8) throw Error(ErrorCode::UnstableCycle, "nontrivial Floquet exponent >= 0");
  Eigen::JacobiSVD<Mat> svd(p0);
  const double cond = svd.singularValues()(0) / svd.singularValues()(d - 1);
  if (!(cond <= 1e8)) throw Error(ErrorCode::DegenerateEigenbasis, "eigenvector matrix is ill-conditioned");
  p0.col(0) = cycle.dphi.sample_vec(0);

  // P(omega0 t) = Pi(t) P(0) e^{-tS}: integrate each column with its exponent removed.
  std::vector<Mat> ps(n);
  ps[0] = p0;
  DormandPrince dp(opt);
  detail::ShiftedVariationalRhs rhs{&model, nu};
  Eigen::VectorXd y = detail::pack_state(cycle.phi.sample_vec(0), p0);
  for (int j = 1; j <= n; ++j) {
    y = dp.integrate(rhs, period * (j - 1) / n, y, period * j / n);
    if (j < n) ps[j] = detail::unpack_matrix(y, d);
  }
  const double defect = (detail::unpack_matrix(y, d) - p0).cwiseAbs().maxCoeff();

  frame = make_frame(cycle, nu, ps);
  frame.multipliers = mult;
  frame.monodromy = x;
  frame.periodicity_defect = defect;
  frame.eigenbasis_condition = cond;
  return frame;
}

/// Same frame with the phase origin moved forward by `nodes` grid points (pairs with LimitCycle::shifted).
inline FloquetFrame shift_frame(const FloquetFrame& f, int nodes) {
  FloquetFrame g = f;
  for (PeriodicTable* t : {&g.P, &g.dP, &g.Pinv, &g.dPinv, &g.d2Pinv, &g.W, &g.dW, &g.d2W, &g.R}) *t = t->shifted(nodes);
  return g;
}

inline double weighted_inner(const FloquetFrame& frame, const Vec& u, const Vec& v, double theta) {
  if (!u.allFinite() || !v.allFinite() || !std::isfinite(theta))
    throw Error(ErrorCode::NonFiniteInput, "non-finite argument to weighted_inner");
  Mat pinv = frame.Pinv.eval(theta);
  return (pinv * u).dot(pinv * v);
}

inline double weighted_norm(const FloquetFrame& frame, const Vec& u, double theta) {
  return std::sqrt(weighted_inner(frame, u, u, theta));
}

/// R(theta) = [P P^T]^{-1} Phi'(theta).
inline Vec prc(const FloquetFrame& frame, double theta) { return frame.R.eval_vec(theta); }

inline Mat weight_product_derivs(const FloquetFrame& frame, double theta, int order) {
  switch (order) {
    case 0: return frame.W.eval(theta);
    case 1: return frame.dW.eval(theta);
    case 2: return frame.d2W.eval(theta);
    default: throw Error(ErrorCode::BadOrder, "order must be 0..2, got " + std::to_string(order));
  }
}

/// Periodic solution of omega0 R' = -J^T(Phi) R obtained by integrating backward in time
/// (where the nontrivial modes decay), normalized so <R, Phi'> = 1.
inline PeriodicTable adjoint_prc_table(const OscillatorModel& model, const LimitCycle& cycle,
                                       const OdeOptions& opt = {1e-14, 1e-13}, int max_periods = 200) {
  const int n = cycle.n_grid();
  const double period = cycle.period, w0 = cycle.frequency;
  auto rhs = [&](double t, const Eigen::VectorXd& r, Eigen::VectorXd& dr) {
    Vec u = cycle.phi.eval_vec(w0 * t);
    Mat j = eval_jacobian(model, u);
    dr = -(j.transpose() * Vec(r));
  };
  DormandPrince dp(opt);
  Eigen::VectorXd r = cycle.dphi.sample_vec(0);
  r /= r.squaredNorm();
  for (int p = 0; p < max_periods; ++p) {
    Eigen::VectorXd next = dp.integrate(rhs, 0.0, r, -period);
    next /= next.dot(Eigen::VectorXd(cycle.dphi.sample_vec(0)));
    double change = (next - r).cwiseAbs().maxCoeff();
    r = next;
    if (change < 1e-14) break;
  }
  // One more backward period, sampled at theta_j = 2 pi - 2 pi j / n.
  std::vector<Mat> samples(n);
  samples[0] = Vec(r);
  Eigen::VectorXd y = r;
  for (int j = 1; j < n; ++j) {
    y = dp.integrate(rhs, -period * (j - 1) / n, y, -period * j / n);
    samples[n - j] = Vec(y);
  }
  double norm = 0.0;
  for (int j = 0; j < n; ++j) norm += samples[j].col(0).dot(cycle.dphi.sample_vec(j));
  norm /= n;
  for (auto& s : samples) s /= norm;
  return PeriodicTable(samples);
}

/// Grid maxima of the frame identities.
struct FrameDiagnostics {
  double nu1 = 0.0;             // |nu_1|
  double tangent_error = 0.0;   // max |P^{-1} Phi' - e|
  double metric_error = 0.0;    // max | ||Phi'||_theta^2 - 1 |
  double floquet_residual = 0.0;  // max |omega0 P' - J P + P S|
  double prc_normalization = 0.0;  // max |<R, Phi'> - 1|
  double adjoint_residual = 0.0;   // max |omega0 R' + J^T R|
  double min_weight_eigenvalue = 0.0;
};

inline FrameDiagnostics frame_diagnostics(const OscillatorModel& model, const LimitCycle& cycle,
                                          const FloquetFrame& frame) {
  const int d = cycle.dim;
  FrameDiagnostics g;
  g.nu1 = std::abs(frame.exponents(0));
  g.min_weight_eigenvalue = std::numeric_limits<double>::infinity();
  PeriodicTable dR = detail::smooth_derivative(frame.R, 1);
  Mat s = frame.S();
  for (int j = 0; j < cycle.n_grid(); ++j) {
    Vec dphi = cycle.dphi.sample_vec(j);
    Mat pinv = frame.Pinv.sample(j);
    Mat p = frame.P.sample(j);
    Mat jac = eval_jacobian(model, cycle.phi.sample_vec(j));
    g.tangent_error = std::max(g.tangent_error, (pinv * dphi - Vec::Unit(d, 0)).cwiseAbs().maxCoeff());
    g.metric_error = std::max(g.metric_error, std::abs((pinv * dphi).squaredNorm() - 1.0));
    Mat res = frame.frequency * frame.dP.sample(j) - jac * p + p * s;
    g.floquet_residual = std::max(g.floquet_residual, res.cwiseAbs().maxCoeff());
    Vec r = frame.R.sample_vec(j);
    g.prc_normalization = std::max(g.prc_normalization, std::abs(r.dot(dphi) - 1.0));
    Vec ar = frame.frequency * dR.sample_vec(j) + jac.transpose() * r;
    g.adjoint_residual = std::max(g.adjoint_residual, ar.cwiseAbs().maxCoeff());
    g.min_weight_eigenvalue = std::min(g.min_weight_eigenvalue, max_eigenvalue_symmetric(-frame.W.sample(j)) * -1.0);
  }
  return g;
}

}  // namespace varphase
