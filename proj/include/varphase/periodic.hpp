#pragma once

#include <limits>
#include <vector>

#include "varphase/models.hpp"
#include "varphase/ode.hpp"
#include "varphase/spectral.hpp"

namespace varphase {

/// Periodic orbit Phi(theta) with theta = omega0 t, plus Phi', Phi'', Phi''' tables.
struct LimitCycle {
  double period = 0.0;
  double frequency = 0.0;
  int dim = 0;
  PeriodicTable phi, dphi, d2phi, d3phi;
  int section_coordinate = -1;  // coordinate held fixed during shooting, -1 if synthetic

  int n_grid() const { return phi.size(); }

  /// Same orbit with the phase origin moved forward by `nodes` grid points.
  LimitCycle shifted(int nodes) const {
    LimitCycle c = *this;
    c.phi = phi.shifted(nodes);
    c.dphi = dphi.shifted(nodes);
    c.d2phi = d2phi.shifted(nodes);
    c.d3phi = d3phi.shifted(nodes);
    return c;
  }
};

/// Relative mode amplitude below which integration noise is dropped before differentiating.
inline constexpr double kSpectralFloor = 1e-13;

/// Builds the derivative chain spectrally from uniform samples Phi(2 pi j / n).
inline LimitCycle make_limit_cycle(double period, const std::vector<Vec>& samples) {
  if (!(period > 0.0) || !std::isfinite(period)) throw Error(ErrorCode::InvalidArgument, "period must be > 0");
  LimitCycle c;
  c.period = period;
  c.frequency = kTwoPi / period;
  c.phi = PeriodicTable::from_vectors(samples);
  c.dim = c.phi.rows();
  PeriodicTable smooth = c.phi.filtered(kSpectralFloor);
  c.dphi = smooth.derivative(1);
  c.d2phi = smooth.derivative(2);
  c.d3phi = smooth.derivative(3);
  return c;
}

inline Vec eval_phi(const LimitCycle& cycle, double theta, int order = 0) {
  if (!std::isfinite(theta)) throw Error(ErrorCode::NonFiniteInput, "theta is not finite");
  switch (order) {
    case 0: return cycle.phi.eval_vec(theta);
    case 1: return cycle.dphi.eval_vec(theta);
    case 2: return cycle.d2phi.eval_vec(theta);
    case 3: return cycle.d3phi.eval_vec(theta);
    default: throw Error(ErrorCode::BadOrder, "order must be 0..3, got " + std::to_string(order));
  }
}

struct CycleOptions {
  int n_grid = 256;
  double relax_periods = 20.0;
  double tolerance = 1e-10;
  int max_newton = 50;
  bool check_stability = false;
  OdeOptions ode{};
  // Resampling runs tighter than shooting: closure defects leak into Phi''' through slow 1/k tails.
  OdeOptions resample_ode{1e-14, 1e-13};
};

namespace detail {

inline Vec head_vec(const Eigen::VectorXd& y, int d) { return Vec(y.head(d)); }

// Right-hand side of u' = F(u), optionally with Z' = J(u) Z appended column-major.
struct FlowRhs {
  const OscillatorModel* model;
  bool variational;
  void operator()(double, const Eigen::VectorXd& y, Eigen::VectorXd& dy) const {
    const int d = model->dim;
    Vec u = head_vec(y, d);
    dy.head(d) = model->drift(u);
    if (variational) {
      Mat j = model->jacobian ? model->jacobian(u) : finite_difference_jacobian(*model, u);
      Eigen::Map<const Eigen::MatrixXd> z(y.data() + d, d, d);
      Eigen::Map<Eigen::MatrixXd> dz(dy.data() + d, d, d);
      dz = j * z;
    }
  }
};

inline Eigen::VectorXd flow_with_variation(const OscillatorModel& m, const Vec& u0, double t,
                                           const OdeOptions& opt) {
  const int d = m.dim;
  Eigen::VectorXd y(d + d * d);
  y.head(d) = u0;
  Eigen::Map<Eigen::MatrixXd>(y.data() + d, d, d).setIdentity();
  DormandPrince dp(opt);
  return dp.integrate(FlowRhs{&m, true}, 0.0, y, t);
}

struct Crossing {
  int coord;
  Vec point;
  double score;
};

}  // namespace detail

/// Newton shooting for the stable periodic orbit reached from `guess_point`.
/// The phase origin is the crossing of a coordinate hyperplane through the guess.
inline LimitCycle find_limit_cycle(const OscillatorModel& model, const Vec& guess_point, double guess_period,
                                   const CycleOptions& opt = {}) {
  const int d = model.dim;
  if (!(guess_period > 0.0) || !std::isfinite(guess_period))
    throw Error(ErrorCode::InvalidArgument, "guess_period must be > 0");
  if (guess_point.size() != d) throw Error(ErrorCode::InvalidArgument, "guess point has wrong dimension");
  if (!guess_point.allFinite()) throw Error(ErrorCode::NonFiniteInput, "guess point is not finite");
  if (opt.n_grid < 8 || (opt.n_grid & (opt.n_grid - 1)) != 0)
    throw Error(ErrorCode::InvalidArgument, "n_grid must be a power of two >= 8");

  DormandPrince dp(opt.ode);
  detail::FlowRhs plain{&model, false};

  // Relax onto the attractor.
  Eigen::VectorXd y = guess_point;
  try {
    y = dp.integrate(plain, 0.0, y, opt.relax_periods * guess_period);
  } catch (const Error& e) {
    throw Error(ErrorCode::NoCycleFound, std::string("relaxation failed: ") + e.what());
  }
  Vec relaxed = detail::head_vec(y, d);
  if (!relaxed.allFinite() || relaxed.norm() > 1e8) throw Error(ErrorCode::NoCycleFound, "relaxation diverged");
  if (model.drift(relaxed).norm() < 1e-8 * std::max(1.0, relaxed.norm()))
    throw Error(ErrorCode::NoCycleFound, "flow relaxes onto an equilibrium");

  // Record hyperplane crossings u_k = guess_k over about two periods.
  std::vector<detail::Crossing> crossings;
  auto observer = [&](double t0, const Eigen::VectorXd& y0, const Eigen::VectorXd& f0, double t1,
                      const Eigen::VectorXd& y1, const Eigen::VectorXd& f1) {
    for (int k = 0; k < d; ++k) {
      double s0 = y0(k) - guess_point(k), s1 = y1(k) - guess_point(k);
      if (s0 == 0.0 || s0 * s1 >= 0.0) continue;
      double lo = t0, hi = t1;
      for (int it = 0; it < 60; ++it) {
        double mid = 0.5 * (lo + hi);
        double sm = hermite(t0, y0, f0, t1, y1, f1, mid)(k) - guess_point(k);
        (sm * s0 > 0.0 ? lo : hi) = mid;
      }
      Vec p = detail::head_vec(hermite(t0, y0, f0, t1, y1, f1, 0.5 * (lo + hi)), d);
      Vec f = model.drift(p);
      crossings.push_back({k, p, std::abs(f(k)) / std::max(f.norm(), 1e-300)});
    }
    return true;
  };
  dp.integrate(plain, 0.0, y, 2.0 * guess_period, observer);
  if (crossings.empty()) throw Error(ErrorCode::NoCycleFound, "relaxed orbit never recrosses the section");

  double best = 0.0;
  for (const auto& c : crossings) best = std::max(best, c.score);
  const detail::Crossing* pick = nullptr;
  for (const auto& c : crossings) {
    if (c.score < 0.5 * best) continue;
    if (!pick || (c.point - guess_point).norm() < (pick->point - guess_point).norm()) pick = &c;
  }
  const int k = pick->coord;
  Vec u0 = pick->point;
  u0(k) = guess_point(k);

  // Return time to the section from the crossing, for the initial period estimate.
  double delta = guess_period;
  {
    const double sign0 = model.drift(u0)(k);
    double t_hit = -1.0;
    Eigen::VectorXd yy = u0;
    dp.reset_step();
    dp.integrate(plain, 0.0, yy, 3.0 * guess_period,
                 [&](double t0, const Eigen::VectorXd& y0, const Eigen::VectorXd&, double t1,
                     const Eigen::VectorXd& y1, const Eigen::VectorXd&) {
                   double s0 = y0(k) - guess_point(k), s1 = y1(k) - guess_point(k);
                   if (t0 > 0.1 * guess_period && s0 * s1 <= 0.0 && (s1 - s0) * sign0 > 0.0) {
                     t_hit = t0 + (t1 - t0) * s0 / (s0 - s1);
                     return false;
                   }
                   return true;
                 });
    if (t_hit <= 0.0) throw Error(ErrorCode::NoCycleFound, "no return to the section");
    delta = t_hit;
  }

  // Newton on (u0 without coordinate k, Delta).
  Eigen::MatrixXd monodromy;
  double res_norm = std::numeric_limits<double>::infinity();
  bool converged = false;
  const OdeOptions* ode = &opt.ode;
  auto residual = [&](const Vec& u, double del, Eigen::VectorXd& r, Eigen::MatrixXd& jac, Eigen::MatrixXd& pi) {
    Eigen::VectorXd yend = detail::flow_with_variation(model, u, del, *ode);
    Vec uend = detail::head_vec(yend, d);
    pi = Eigen::Map<const Eigen::MatrixXd>(yend.data() + d, d, d);
    r = (uend - u);
    jac.resize(d, d);
    int col = 0;
    for (int j = 0; j < d; ++j) {
      if (j == k) continue;
      jac.col(col) = pi.col(j);
      jac(j, col) -= 1.0;
      ++col;
    }
    jac.col(d - 1) = model.drift(uend);
  };
  Eigen::VectorXd r;
  Eigen::MatrixXd jac;
  // One damped Newton step; false when no decrease is found.
  auto newton_step = [&]() {
    Eigen::VectorXd step = jac.fullPivLu().solve(-r);
    if (!step.allFinite()) return false;
    double lam = 1.0;
    for (int ls = 0; ls < 12; ++ls, lam *= 0.5) {
      Vec u1 = u0;
      int col = 0;
      for (int j = 0; j < d; ++j) {
        if (j == k) continue;
        u1(j) += lam * step(col++);
      }
      double del1 = delta + lam * step(d - 1);
      if (!(del1 > 0.0)) continue;
      Eigen::VectorXd r1;
      Eigen::MatrixXd jac1, pi1;
      residual(u1, del1, r1, jac1, pi1);
      if (r1.norm() < res_norm) {
        u0 = u1;
        delta = del1;
        r = r1;
        jac = jac1;
        monodromy = pi1;
        res_norm = r1.norm();
        return true;
      }
    }
    return false;
  };
  try {
    residual(u0, delta, r, jac, monodromy);
    res_norm = r.norm();
    for (int it = 0; it < opt.max_newton; ++it) {
      if (res_norm <= opt.tolerance) {
        converged = true;
        break;
      }
      if (!newton_step()) break;
    }
    if (converged) {
      // Polish at the resampling tolerance so the table closes on itself.
      ode = &opt.resample_ode;
      residual(u0, delta, r, jac, monodromy);
      res_norm = r.norm();
      for (int it = 0; it < 4 && res_norm > 1e-14; ++it)
        if (!newton_step()) break;
    }
  } catch (const Error& e) {
    throw Error(ErrorCode::NoCycleFound, std::string("shooting failed: ") + e.what());
  }
  if (!converged)
    throw Error(ErrorCode::NoCycleFound, "Newton shooting did not converge (residual " + std::to_string(res_norm) + ")");

  if (opt.check_stability) {
    Eigen::EigenSolver<Eigen::MatrixXd> es(monodromy);
    auto mu = es.eigenvalues();
    int trivial = 0;
    for (int i = 1; i < d; ++i)
      if (std::abs(mu(i) - 1.0) < std::abs(mu(trivial) - 1.0)) trivial = i;
    for (int i = 0; i < d; ++i)
      if (i != trivial && std::abs(mu(i)) >= 1.0)
        throw Error(ErrorCode::UnstableCycle, "nontrivial multiplier with modulus >= 1");
  }

  // Resample at uniform phases.
  const int n = opt.n_grid;
  std::vector<Vec> samples(n);
  Eigen::VectorXd ys = u0;
  samples[0] = u0;
  DormandPrince dps(opt.resample_ode);
  for (int j = 1; j < n; ++j) {
    ys = dps.integrate(plain, delta * (j - 1) / n, ys, delta * j / n);
    samples[j] = detail::head_vec(ys, d);
  }
  LimitCycle c = make_limit_cycle(delta, samples);
  c.section_coordinate = k;
  return c;
}

/// Max over grid nodes of ||omega0 Phi'(theta) - F(Phi(theta))||_inf.
inline double cycle_residual(const OscillatorModel& model, const LimitCycle& cycle) {
  double worst = 0.0;
  for (int j = 0; j < cycle.n_grid(); ++j) {
    Vec r = cycle.frequency * cycle.dphi.sample_vec(j) - model.drift(cycle.phi.sample_vec(j));
    worst = std::max(worst, r.cwiseAbs().maxCoeff());
  }
  return worst;
}

}  // namespace varphase
