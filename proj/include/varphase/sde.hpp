#pragma once

#include <optional>
#include <string>
#include <vector>

#include "varphase/noise.hpp"
#include "varphase/variational.hpp"

namespace varphase {

/// Uniformly sampled trajectory. Full runs fill `states`; coupled runs fill `phase`,
/// `amplitude` (v = r / sqrt(eps), or r when eps = 0) and `m_value`; reduced and
/// isochronal runs fill `phase` only.
struct TrajectoryRecord {
  std::string kind;
  std::vector<double> times;
  std::vector<Vec> states;
  std::vector<double> phase;
  std::vector<Vec> amplitude;
  std::vector<double> m_value;
  std::optional<std::size_t> tau_index;
};

struct SimOptions {
  double blowup_bound = 1e6;
  int record_stride = 1;  // keep every k-th step (the final step is always kept)
};

namespace detail {

inline int checked_steps(double T, double dt, const NoisePath& noise, int dim) {
  if (!(dt > 0.0) || !(T >= 0.0) || !std::isfinite(T) || !std::isfinite(dt))
    throw Error(ErrorCode::InvalidArgument, "need dt > 0 and T >= 0");
  const double ratio = T / dt;
  const long n = std::lround(ratio);
  if (std::abs(n * dt - T) > 1e-12 * std::max(1.0, T))
    throw Error(ErrorCode::InvalidArgument, "dt must divide T");
  if (noise.n_steps() < n) throw Error(ErrorCode::InvalidArgument, "noise path is shorter than T / dt");
  if (n > 0 && noise.dim() != dim) throw Error(ErrorCode::InvalidArgument, "noise dimension mismatch");
  if (n > 0 && std::abs(noise.dt - dt) > 1e-12 * dt) throw Error(ErrorCode::InvalidArgument, "noise dt mismatch");
  return static_cast<int>(n);
}

inline bool keep(int k, int n, int stride) { return k % stride == 0 || k == n; }

}  // namespace detail

/// One Euler-Maruyama step of du = F dt + sqrt(eps) G dW.
inline Vec full_step(const OscillatorModel& model, const Vec& u, double eps, double dt, const Vec& dw) {
  return u + model.drift(u) * dt + std::sqrt(eps) * (model.noise_map(u) * dw);
}

inline TrajectoryRecord simulate_full(const OscillatorModel& model, const Vec& u0, double eps, double dt, double T,
                                      const NoisePath& noise, const SimOptions& opt = {}) {
  if (!u0.allFinite()) throw Error(ErrorCode::NonFiniteInput, "initial state is not finite");
  if (!(eps >= 0.0)) throw Error(ErrorCode::InvalidArgument, "epsilon must be >= 0");
  const int n = detail::checked_steps(T, dt, noise, model.dim);
  TrajectoryRecord rec;
  rec.kind = "full";
  Vec u = u0;
  rec.times.push_back(0.0);
  rec.states.push_back(u);
  for (int k = 1; k <= n; ++k) {
    u = full_step(model, u, eps, dt, noise.increment(k - 1));
    if (!u.allFinite() || u.norm() > opt.blowup_bound)
      throw Error(ErrorCode::BlowUp, "state norm exceeded " + std::to_string(opt.blowup_bound) + " at step " +
                                         std::to_string(k));
    if (detail::keep(k, n, opt.record_stride)) {
      rec.times.push_back(k * dt);
      rec.states.push_back(u);
    }
  }
  return rec;
}

/// Cycle, frame and model quantities entering kappa at (u, beta).
struct KappaTerms {
  double m = 1.0;
  double quad = 0.0;      // A = <K Phi', Q K Phi'>
  double term_curv = 0.0;  // <K Phi'', Q K Phi'>
  double term_weight = 0.0;  // <G^T W' Phi', Q K Phi'>
  double bracket = 0.0;
  double kappa = 0.0;
};

inline KappaTerms kappa_terms(const FloquetFrame& frame, const LimitCycle& cycle, const OscillatorModel& model,
                              const Vec& u, double beta) {
  const Vec phi = cycle.phi.eval_vec(beta), d1 = cycle.dphi.eval_vec(beta), d2 = cycle.d2phi.eval_vec(beta),
            d3 = cycle.d3phi.eval_vec(beta);
  const Mat w = frame.W.eval(beta), w1 = frame.dW.eval(beta), w2 = frame.d2W.eval(beta);
  const Mat g = model.noise_map(u);
  const Mat& q = model.covariance;
  const Vec r = u - phi;
  KappaTerms t;
  t.m = 1.0 - r.dot(w * d2) - r.dot(w1 * d1);
  if (t.m <= kTauThreshold) throw Error(ErrorCode::DegenerateMinimum, "M <= 1e-6 in kappa");
  const Mat k = g.transpose() * w;
  const Vec kd1 = k * d1;
  const Vec qkd1 = q * kd1;
  t.quad = kd1.dot(qkd1);
  t.term_curv = (k * d2).dot(qkd1);
  t.term_weight = (g.transpose() * (w1 * d1)).dot(qkd1);
  t.bracket = r.dot(w * d3) - d1.dot(w * d2) + r.dot(w2 * d1) + 2.0 * r.dot(w1 * d2) - d1.dot(w1 * d1);
  t.kappa = (t.term_curv + t.term_weight) / t.m + 0.5 * t.bracket * t.quad / (t.m * t.m);
  return t;
}

/// O(eps) drift correction of the exact phase equation. eps does not enter kappa itself.
inline double kappa(const FloquetFrame& frame, const LimitCycle& cycle, const OscillatorModel& model, const Vec& u,
                    double beta, double /*eps*/ = 0.0) {
  if (!u.allFinite() || !std::isfinite(beta)) throw Error(ErrorCode::NonFiniteInput, "non-finite argument");
  return kappa_terms(frame, cycle, model, u, beta).kappa;
}

/// State of the coupled system: phase beta and unscaled residual r = u - Phi(beta).
struct CoupledState {
  double beta = 0.0;
  Vec r;
  double m = 1.0;
};

/// One Euler-Maruyama step of the exact (beta, r) system. Returns false (state untouched)
/// when M <= 1e-6, i.e. at the stopping time.
inline bool coupled_step(const FloquetFrame& frame, const LimitCycle& cycle, const OscillatorModel& model,
                         CoupledState& s, double eps, double dt, const Vec& dw) {
  const double beta = s.beta;
  const Vec phi = cycle.phi.eval_vec(beta), d1 = cycle.dphi.eval_vec(beta), d2 = cycle.d2phi.eval_vec(beta),
            d3 = cycle.d3phi.eval_vec(beta);
  const Mat w = frame.W.eval(beta), w1 = frame.dW.eval(beta), w2 = frame.d2W.eval(beta);
  const Vec u = phi + s.r;
  const Vec& r = s.r;
  const double m = 1.0 - r.dot(w * d2) - r.dot(w1 * d1);
  s.m = m;
  if (m <= kTauThreshold) return false;
  const Mat g = model.noise_map(u);
  const Mat& q = model.covariance;
  const Vec f = model.drift(u);
  const Vec wd1 = w * d1;
  const Vec kd1 = g.transpose() * wd1;
  const Vec qkd1 = q * kd1;
  const double quad = kd1.dot(qkd1);
  double kap = 0.0;
  if (eps > 0.0) {
    const double bracket = r.dot(w * d3) - d1.dot(w * d2) + r.dot(w2 * d1) + 2.0 * r.dot(w1 * d2) - d1.dot(w1 * d1);
    kap = ((g.transpose() * (w * d2)).dot(qkd1) + (g.transpose() * (w1 * d1)).dot(qkd1)) / m +
          0.5 * bracket * quad / (m * m);
  }
  const double fp = f.dot(wd1);
  const Vec gdw = g * dw;
  const double gp = gdw.dot(wd1);
  const double se = std::sqrt(eps);
  const double vdrift = (fp + eps * kap) / m;
  s.beta = beta + vdrift * dt + se * gp / m;
  s.r = r + (f - d1 * vdrift - (0.5 * eps * quad / (m * m)) * d2) * dt + se * (gdw - d1 * (gp / m));
  return true;
}

inline TrajectoryRecord simulate_exact_coupled(const FloquetFrame& frame, const LimitCycle& cycle,
                                               const OscillatorModel& model, const Vec& u0, double eps, double dt,
                                               double T, const NoisePath& noise, const SimOptions& opt = {}) {
  const int n = detail::checked_steps(T, dt, noise, model.dim);
  PhaseState st0 = extract_phase_global(frame, cycle, u0, eps);
  CoupledState s{st0.beta, u0 - cycle.phi.eval_vec(st0.beta), st0.m_value};
  TrajectoryRecord rec;
  rec.kind = "coupled";
  auto push = [&](double t) {
    rec.times.push_back(t);
    rec.phase.push_back(s.beta);
    rec.amplitude.push_back(detail::scaled_amplitude(s.r, eps));
    rec.m_value.push_back(s.m);
  };
  push(0.0);
  for (int k = 1; k <= n; ++k) {
    if (!coupled_step(frame, cycle, model, s, eps, dt, noise.increment(k - 1))) {
      rec.m_value.back() = s.m;
      rec.tau_index = rec.times.size() - 1;
      return rec;
    }
    if (!std::isfinite(s.beta) || !s.r.allFinite() || s.r.norm() > opt.blowup_bound)
      throw Error(ErrorCode::BlowUp, "coupled state diverged at step " + std::to_string(k));
    if (detail::keep(k, n, opt.record_stride)) push(k * dt);
  }
  return rec;
}

/// kappa_hat(theta) = kappa(Phi(theta), theta) on the cycle grid.
inline PeriodicTable kappa_hat_table(const FloquetFrame& frame, const LimitCycle& cycle, const OscillatorModel& model) {
  const int n = cycle.n_grid();
  std::vector<Mat> s(n);
  for (int j = 0; j < n; ++j) {
    Mat v(1, 1);
    v(0, 0) = kappa(frame, cycle, model, cycle.phi.sample_vec(j), PeriodicTable::node(n, j));
    s[j] = v;
  }
  return PeriodicTable(s);
}

/// Z(theta) = G^T(Phi(theta)) R(theta) on the cycle grid.
inline PeriodicTable isochronal_z_table(const FloquetFrame& frame, const LimitCycle& cycle,
                                        const OscillatorModel& model) {
  const int n = cycle.n_grid();
  std::vector<Mat> s(n);
  for (int j = 0; j < n; ++j) s[j] = model.noise_map(cycle.phi.sample_vec(j)).transpose() * frame.R.sample_vec(j);
  return PeriodicTable(s);
}

/// Scalar phase SDE d theta = (omega0 + eps a(theta)) dt + sqrt(eps) <Z(theta), dW>.
class ScalarPhaseModel {
 public:
  ScalarPhaseModel(std::string kind, double omega0, PeriodicTable drift_correction, PeriodicTable z)
      : kind_(std::move(kind)), omega0_(omega0), corr_(std::move(drift_correction)), z_(std::move(z)) {}

  double step(double theta, double eps, double dt, const Vec& dw) const {
    double drift = omega0_;
    if (eps > 0.0) drift += eps * corr_.eval(theta)(0, 0);
    double noise = eps > 0.0 ? std::sqrt(eps) * z_.eval_vec(theta).dot(dw) : 0.0;
    return theta + drift * dt + noise;
  }

  double correction(double theta) const { return corr_.eval(theta)(0, 0); }
  Vec z(double theta) const { return z_.eval_vec(theta); }
  const std::string& kind() const { return kind_; }

  TrajectoryRecord simulate(double theta0, double eps, double dt, double T, const NoisePath& noise,
                            const SimOptions& opt = {}) const {
    if (!std::isfinite(theta0)) throw Error(ErrorCode::NonFiniteInput, "theta0 is not finite");
    const int n = detail::checked_steps(T, dt, noise, z_.rows());
    TrajectoryRecord rec;
    rec.kind = kind_;
    double th = theta0;
    rec.times.push_back(0.0);
    rec.phase.push_back(th);
    for (int k = 1; k <= n; ++k) {
      th = step(th, eps, dt, noise.increment(k - 1));
      if (!std::isfinite(th)) throw Error(ErrorCode::NonFiniteInput, "phase became non-finite");
      if (detail::keep(k, n, opt.record_stride)) {
        rec.times.push_back(k * dt);
        rec.phase.push_back(th);
      }
    }
    return rec;
  }

 private:
  std::string kind_;
  double omega0_;
  PeriodicTable corr_, z_;
};

/// d theta = [omega0 + eps kappa_hat(theta)] dt + sqrt(eps) <G(Phi(theta)) dW, R(theta)>.
inline ScalarPhaseModel reduced_phase_model(const FloquetFrame& frame, const LimitCycle& cycle,
                                            const OscillatorModel& model) {
  return ScalarPhaseModel("reduced", cycle.frequency, kappa_hat_table(frame, cycle, model),
                          isochronal_z_table(frame, cycle, model));
}

/// d theta = [omega0 + eps <Z'(theta), Q Z(theta)>] dt + sqrt(eps) <Z(theta), dW>.
inline ScalarPhaseModel isochronal_phase_model(const FloquetFrame& frame, const LimitCycle& cycle,
                                               const OscillatorModel& model) {
  PeriodicTable z = isochronal_z_table(frame, cycle, model);
  PeriodicTable dz = z.filtered(kSpectralFloor).derivative(1);
  const int n = cycle.n_grid();
  std::vector<Mat> s(n);
  for (int j = 0; j < n; ++j) {
    Mat v(1, 1);
    v(0, 0) = dz.sample_vec(j).dot(model.covariance * z.sample_vec(j));
    s[j] = v;
  }
  return ScalarPhaseModel("isochronal", cycle.frequency, PeriodicTable(s), z);
}

inline TrajectoryRecord simulate_reduced_phase(const FloquetFrame& frame, const LimitCycle& cycle,
                                               const OscillatorModel& model, double theta0, double eps, double dt,
                                               double T, const NoisePath& noise, const SimOptions& opt = {}) {
  return reduced_phase_model(frame, cycle, model).simulate(theta0, eps, dt, T, noise, opt);
}

inline TrajectoryRecord simulate_isochronal(const FloquetFrame& frame, const LimitCycle& cycle,
                                            const OscillatorModel& model, double theta0, double eps, double dt,
                                            double T, const NoisePath& noise, const SimOptions& opt = {}) {
  return isochronal_phase_model(frame, cycle, model).simulate(theta0, eps, dt, T, noise, opt);
}

/// H(v, theta) = <F(Phi(theta) + sqrt(eps) v), R_hat(v, theta)>_theta with
/// R_hat = Phi'(theta) / (1 - sqrt(eps) <v, Phi''>_theta - sqrt(eps) <v, W' Phi'>).
inline double h_function(const FloquetFrame& frame, const LimitCycle& cycle, const OscillatorModel& model,
                         double theta, const Vec& v, double eps) {
  const Vec phi = cycle.phi.eval_vec(theta), d1 = cycle.dphi.eval_vec(theta), d2 = cycle.d2phi.eval_vec(theta);
  const Mat w = frame.W.eval(theta), w1 = frame.dW.eval(theta);
  const double se = std::sqrt(eps);
  const double mhat = 1.0 - se * v.dot(w * d2) - se * v.dot(w1 * d1);
  return model.drift(phi + se * v).dot(w * d1) / mhat;
}

/// Central difference (step 1e-5 in v) of H along v at v = 0. With `project`, v is first
/// made transverse: v <- v - <v, Phi'>_theta Phi' / ||Phi'||_theta^2.
inline double decoupling_check(const FloquetFrame& frame, const LimitCycle& cycle, const OscillatorModel& model,
                               double theta, const Vec& v_in, double eps, bool project = true) {
  if (!v_in.allFinite() || !std::isfinite(theta)) throw Error(ErrorCode::NonFiniteInput, "non-finite argument");
  Vec v = v_in;
  if (project) {
    const Vec d1 = cycle.dphi.eval_vec(theta);
    const Mat w = frame.W.eval(theta);
    v -= (v.dot(w * d1) / d1.dot(w * d1)) * d1;
  }
  const double h = 1e-5;
  return (h_function(frame, cycle, model, theta, h * v, eps) - h_function(frame, cycle, model, theta, -h * v, eps)) /
         (2.0 * h);
}

}  // namespace varphase
