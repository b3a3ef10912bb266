#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "varphase/parallel.hpp"
#include "varphase/sde.hpp"

namespace varphase {

// ---------------------------------------------------------------------------------------------
// OU first-hitting oracle

enum class HittingMethod { monte_carlo, asymptotic };

/// g(z) = sqrt(z / (2 pi)) exp(-z / 2).
inline double hitting_rate_g(double z) {
  if (!(z >= 0.0)) throw Error(ErrorCode::InvalidArgument, "g(z) needs z >= 0");
  return std::sqrt(z / kTwoPi) * std::exp(-0.5 * z);
}

struct OuOptions {
  int n_paths = 100000;
  double dt = 0.0;  // 0: min(1e-3, 1 / (100 b))
  std::uint64_t seed = 0x5eed0u;
  bool bridge = true;  // Brownian-bridge crossing test between grid points
  int threads = 0;
};

namespace detail {

// Hits of dY = -bY dt + dW started at x before T for paths [first, last).
inline long ou_hits(double b, double x, double a, double T, double dt, const OuOptions& opt, int first, int last) {
  const long n_steps = static_cast<long>(std::ceil(T / dt - 1e-9));
  const double h = T / static_cast<double>(n_steps);
  const double decay = std::exp(-b * h);
  const double sd = std::sqrt(-std::expm1(-2.0 * b * h) / (2.0 * b));
  const double bridge_scale = 2.0 / h;
  long hits = 0;
  for (int p = first; p < last; ++p) {
    const std::uint64_t key = splitmix(splitmix(opt.seed) ^ (0xA24BAED4963EE407ull * (static_cast<std::uint64_t>(p) + 1)));
    double y = x;
    double spare = 0.0;
    bool have_spare = false;
    for (long k = 0; k < n_steps; ++k) {
      double xi;
      if (have_spare) {
        xi = spare;
        have_spare = false;
      } else {
        const std::uint64_t hsh = splitmix(key + static_cast<std::uint64_t>(k));
        const double u1 = to_unit_open(hsh), u2 = to_unit_open(splitmix(hsh ^ 0x632BE59BD9B4E019ull));
        const double rad = std::sqrt(-2.0 * std::log(u1));
        xi = rad * std::cos(kTwoPi * u2);
        spare = rad * std::sin(kTwoPi * u2);
        have_spare = true;
      }
      const double y1 = y * decay + sd * xi;
      if (y1 >= a) {
        ++hits;
        break;
      }
      if (opt.bridge) {
        const double expo = bridge_scale * (a - y) * (a - y1);
        if (expo < 40.0) {
          const double u = to_unit_open(splitmix(key ^ splitmix(static_cast<std::uint64_t>(k) ^ 0xB7E151628AED2A6Bull)));
          if (u < std::exp(-expo)) {
            ++hits;
            break;
          }
        }
      }
      y = y1;
    }
  }
  return hits;
}

}  // namespace detail

/// P(OU started at x_bar reaches a_bar by T) for dY = -bY dt + dW.
/// a_bar <= x_bar counts as an immediate hit (probability 1).
inline double ou_hitting_probability(double b, double x_bar, double a_bar, double T, HittingMethod method,
                                     const OuOptions& opt = {}) {
  if (!std::isfinite(b) || !std::isfinite(x_bar) || !std::isfinite(a_bar) || !std::isfinite(T))
    throw Error(ErrorCode::NonFiniteInput, "non-finite argument");
  if (!(b > 0.0)) throw Error(ErrorCode::BadDecay, "decay rate b must be > 0, got " + std::to_string(b));
  if (T < 0.0) throw Error(ErrorCode::InvalidArgument, "T must be >= 0");
  if (a_bar <= x_bar) return 1.0;
  if (T == 0.0) return 0.0;
  if (method == HittingMethod::asymptotic) {
    const double z = 2.0 * b * a_bar * a_bar;
    return -std::expm1(-b * T * hitting_rate_g(z));
  }
  if (opt.n_paths <= 0) throw Error(ErrorCode::InvalidArgument, "n_paths must be > 0");
  const double dt = opt.dt > 0.0 ? opt.dt : std::min(1e-3, 1.0 / (100.0 * b));
  const int chunks = std::min(opt.n_paths, 64);
  std::vector<long> hits(chunks, 0);
  parallel_for(
      chunks,
      [&](int c) {
        const int first = static_cast<int>(static_cast<long>(opt.n_paths) * c / chunks);
        const int last = static_cast<int>(static_cast<long>(opt.n_paths) * (c + 1) / chunks);
        hits[c] = detail::ou_hits(b, x_bar, a_bar, T, dt, opt, first, last);
      },
      opt.threads);
  long total = 0;
  for (long h : hits) total += h;
  return static_cast<double>(total) / opt.n_paths;
}

struct TheoremBound {
  double x_bar = 0.0, a_bar = 0.0;
  double probability = 0.0;
};

/// OU hitting probability at x_bar = x / sqrt(lambda eps), a_bar = rho a / sqrt(lambda eps).
/// lambda = 0 (no noise reaches the amplitude) gives probability 0.
inline TheoremBound theorem_bound(double b, double lambda, double eps, double a, double x, double T,
                                  HittingMethod method, const OuOptions& opt = {}, double rho = 0.5) {
  if (!(lambda >= 0.0) || !(eps > 0.0)) throw Error(ErrorCode::InvalidArgument, "need lambda >= 0 and eps > 0");
  TheoremBound tb;
  if (lambda == 0.0) {
    tb.x_bar = tb.a_bar = std::numeric_limits<double>::infinity();
    return tb;
  }
  const double scale = std::sqrt(lambda * eps);
  tb.x_bar = x / scale;
  tb.a_bar = rho * a / scale;
  tb.probability = ou_hitting_probability(b, tb.x_bar, tb.a_bar, T, method, opt);
  return tb;
}

// ---------------------------------------------------------------------------------------------
// Tube geometry: amax, transformed diffusion, lambda

/// (1/2) / sup_theta || Phi'' - (P P^T)' W Phi' ||_theta, the sup taken on the cycle grid refined 4x.
inline double amax(const FloquetFrame& frame, const LimitCycle& cycle) {
  const int n = 4 * cycle.n_grid();
  double sup = 0.0;
  for (int j = 0; j < n; ++j) {
    const double th = PeriodicTable::node(n, j);
    const Mat p = frame.P.eval(th), dp = frame.dP.eval(th), pinv = frame.Pinv.eval(th);
    const Mat dppt = dp * p.transpose() + p * dp.transpose();
    const Vec v = cycle.d2phi.eval_vec(th) - dppt * (frame.W.eval(th) * cycle.dphi.eval_vec(th));
    sup = std::max(sup, (pinv * v).norm());
  }
  if (!(sup > 0.0)) throw Error(ErrorCode::InvalidArgument, "curvature expression vanishes on the whole cycle");
  return 0.5 / sup;
}

/// Terms of the drift of w = P^{-1}(beta)(u - Phi(beta)) beyond S w, and its diffusion.
struct Gamma2 {
  double gamma2 = 0.0;    // gamma2_1 + eps * gamma2_2
  double gamma2_1 = 0.0;  // <w, gamma^1>: nonlinear drift remainder
  double gamma2_2 = 0.0;  // <w, gamma^2> + tr(Gbar Q Gbar^T) / 2
  double trace_term = 0.0;
  double norm_drift = 0.0;  // gamma2 - (eps/2) w_hat^T Gbar Q Gbar^T w_hat (w_hat = w/|w|)
  double m = 1.0;
  Vec w;
  Mat gbar;
};

/// Transformed diffusion Gbar(u, beta) = P^{-1} G_t + (P^{-1})' r M^{-1} Phi'^T W G, with
/// G_t = G - M^{-1} Phi' Phi'^T W G the tangentially projected noise map.
inline Mat transformed_diffusion(const FloquetFrame& frame, const LimitCycle& cycle, const OscillatorModel& model,
                                 const Vec& u, double beta) {
  const Vec phi = cycle.phi.eval_vec(beta), d1 = cycle.dphi.eval_vec(beta), d2 = cycle.d2phi.eval_vec(beta);
  const Mat w = frame.W.eval(beta), w1 = frame.dW.eval(beta);
  const Vec r = u - phi;
  const double m = 1.0 - r.dot(w * d2) - r.dot(w1 * d1);
  if (m <= kTauThreshold) throw Error(ErrorCode::DegenerateMinimum, "M <= 1e-6 in the transformed diffusion");
  const Mat g = model.noise_map(u);
  const Eigen::RowVectorXd tg = (w * d1).transpose() * g / m;  // M^{-1} Phi'^T W G
  const Mat gt = g - d1 * tg;
  return frame.Pinv.eval(beta) * gt + (frame.dPinv.eval(beta) * r) * tg;
}

inline Gamma2 gamma2_eval(const OscillatorModel& model, const FloquetFrame& frame, const LimitCycle& cycle,
                          const Vec& u, double beta, double eps) {
  if (!u.allFinite() || !std::isfinite(beta) || !std::isfinite(eps))
    throw Error(ErrorCode::NonFiniteInput, "non-finite argument");
  if (eps < 0.0) throw Error(ErrorCode::InvalidArgument, "epsilon must be >= 0");
  const Vec phi = cycle.phi.eval_vec(beta), d1 = cycle.dphi.eval_vec(beta), d2 = cycle.d2phi.eval_vec(beta);
  const Mat wt = frame.W.eval(beta);
  const Mat pinv = frame.Pinv.eval(beta), dpinv = frame.dPinv.eval(beta), d2pinv = frame.d2Pinv.eval(beta);
  const Vec r = u - phi;
  const KappaTerms kt = kappa_terms(frame, cycle, model, u, beta);  // raises DegenerateMinimum
  const double m = kt.m;
  const Mat g = model.noise_map(u);
  const Mat& q = model.covariance;
  const Vec f = model.drift(u);
  const Vec wd1 = wt * d1;
  const Eigen::RowVectorXd tg = wd1.transpose() * g / m;
  const Mat gt = g - d1 * tg;
  const Vec dpinv_r = dpinv * r;

  Gamma2 out;
  out.m = m;
  out.w = pinv * r;
  out.gbar = pinv * gt + dpinv_r * tg;
  const Mat s = frame.S();
  const double fp = f.dot(wd1);

  const Vec gamma1 = pinv * (f - d1 * (fp / m)) + dpinv_r * (fp / m) - s * out.w;
  const Vec cross = gt * (q * (g.transpose() * wd1));  // G_t Q G^T W Phi'
  const double a = kt.quad;
  const Vec gamma2v = pinv * (-(kt.kappa / m) * d1 - (0.5 * a / (m * m)) * d2) + dpinv_r * (kt.kappa / m) +
                      (dpinv * cross) / m + (0.5 * a / (m * m)) * (d2pinv * r);
  const Mat cov = out.gbar * q * out.gbar.transpose();
  out.trace_term = 0.5 * cov.trace();
  out.gamma2_1 = out.w.dot(gamma1);
  out.gamma2_2 = out.w.dot(gamma2v) + out.trace_term;
  out.gamma2 = out.gamma2_1 + eps * out.gamma2_2;
  const double wn = out.w.norm();
  const double radial = wn > 0.0 ? out.w.dot(cov * out.w) / (wn * wn) : 0.0;
  out.norm_drift = out.gamma2 - 0.5 * eps * radial;
  return out;
}

/// A tube state u = Phi(theta) + P(theta) w with w orthogonal to e_1, so theta solves G(u, .) = 0.
struct TubeSample {
  double theta = 0.0;
  Vec u;
  Vec w;
};

/// Tube states with theta uniform on [0, 2 pi), |w| uniform on (0, radius] and a uniformly random
/// transverse direction.
inline std::vector<TubeSample> sample_tube(const FloquetFrame& frame, const LimitCycle& cycle, int n, double radius,
                                           std::uint64_t seed) {
  if (n < 0 || !(radius > 0.0)) throw Error(ErrorCode::InvalidArgument, "need n >= 0 and radius > 0");
  const int d = cycle.dim;
  if (d < 2) throw Error(ErrorCode::InvalidArgument, "tube sampling needs dimension >= 2");
  CounterNormal gen(seed, 0x7b);
  std::vector<TubeSample> out(n);
  Eigen::VectorXd z(d + 1);
  for (int i = 0; i < n; ++i) {
    gen.fill(static_cast<std::uint64_t>(i), z);
    const std::uint64_t h = detail::splitmix(seed ^ detail::splitmix(0x51ull + static_cast<std::uint64_t>(i)));
    const double th = kTwoPi * (1.0 - detail::to_unit_open(h));
    const double rad = radius * detail::to_unit_open(detail::splitmix(h + 1));
    Vec dir = Vec::Zero(d);
    for (int k = 1; k < d; ++k) dir(k) = z(k);
    if (dir.norm() == 0.0) dir(1) = 1.0;
    dir /= dir.norm();
    out[i].theta = th;
    out[i].w = rad * dir;
    out[i].u = cycle.phi.eval_vec(th) + frame.P.eval(th) * out[i].w;
  }
  return out;
}

struct LambdaEstimate {
  double lambda = 0.0;      // inflated by 1.05
  double lambda_raw = 0.0;  // lambda_GP^2 lambda_Q
  double lambda_gp = 0.0;   // sup of the spectral norm of Gbar
  double lambda_q = 0.0;
  int n_samples = 0;
  int n_skipped = 0;  // tube states with M <= 1e-6
};

/// lambda = lambda_GP^2 lambda_Q with lambda_GP the sup of |Gbar| over the cycle grid and
/// `per_node` tube states per node (|w| <= radius; radius <= 0 means amax).
inline LambdaEstimate lambda_estimate(const OscillatorModel& model, const FloquetFrame& frame, const LimitCycle& cycle,
                                      double radius = 0.0, int per_node = 8, std::uint64_t seed = 17) {
  if (radius <= 0.0) radius = amax(frame, cycle);
  const int n = cycle.n_grid();
  const int d = cycle.dim;
  LambdaEstimate est;
  est.lambda_q = max_eigenvalue_symmetric(model.covariance);
  CounterNormal gen(seed, 0x1a);
  Eigen::VectorXd z(d);
  for (int j = 0; j < n; ++j) {
    const double th = PeriodicTable::node(n, j);
    const Vec phi = cycle.phi.sample_vec(j);
    const Mat p = frame.P.sample(j);
    for (int i = 0; i <= per_node; ++i) {
      // i = 0 is the on-cycle state; the rest spread |w| over (0, radius] along random transverse directions.
      Vec w = Vec::Zero(d);
      if (i > 0 && d > 1) {
        gen.fill(static_cast<std::uint64_t>(j) * (per_node + 1) + i, z);
        for (int k = 1; k < d; ++k) w(k) = z(k);
        if (w.norm() == 0.0) w(1) = 1.0;
        w *= radius * static_cast<double>(i) / per_node / w.norm();
      }
      ++est.n_samples;
      try {
        est.lambda_gp = std::max(est.lambda_gp, spectral_norm(transformed_diffusion(frame, cycle, model, phi + p * w, th)));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::DegenerateMinimum) throw;
        ++est.n_skipped;
      }
    }
  }
  est.lambda_raw = est.lambda_gp * est.lambda_gp * est.lambda_q;
  est.lambda = 1.05 * est.lambda_raw;
  return est;
}

inline double compute_lambda(const OscillatorModel& model, const FloquetFrame& frame, const LimitCycle& cycle) {
  return lambda_estimate(model, frame, cycle).lambda;
}

// ---------------------------------------------------------------------------------------------
// Envelope constants

struct ConstantsFit {
  double c1 = 0.0, c2 = 0.0;          // inflated by 1.1
  double c1_raw = 0.0, c2_raw = 0.0;
  double radius = 0.0;
  int n_valid = 0;
  int n_skipped = 0;
};

struct EnvelopeSample {
  double wnorm;
  double gamma2;
};

/// Smallest (C1, C2) >= 0 covering |gamma2| <= C1 eps |w| + C2 |w|^3 on every sample, choosing
/// among feasible pairs the one with the smallest mean envelope.
inline std::pair<double, double> fit_envelope(const std::vector<EnvelopeSample>& s, double eps) {
  double c2_max = 0.0;
  for (const auto& e : s) c2_max = std::max(c2_max, std::abs(e.gamma2) / (e.wnorm * e.wnorm * e.wnorm));
  if (!(eps > 0.0) || s.empty()) return {0.0, c2_max};
  double mean1 = 0.0, mean3 = 0.0;
  for (const auto& e : s) {
    mean1 += e.wnorm;
    mean3 += e.wnorm * e.wnorm * e.wnorm;
  }
  auto c1_of = [&](double c2) {
    double c1 = 0.0;
    for (const auto& e : s)
      c1 = std::max(c1, (std::abs(e.gamma2) - c2 * e.wnorm * e.wnorm * e.wnorm) / (eps * e.wnorm));
    return c1;
  };
  // Mean envelope is convex and piecewise linear in C2: golden-section search.
  auto cost = [&](double c2) { return c1_of(c2) * eps * mean1 + c2 * mean3; };
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double lo = 0.0, hi = c2_max;
  double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
  double f1 = cost(x1), f2 = cost(x2);
  for (int it = 0; it < 200 && hi - lo > 1e-14 * std::max(1.0, c2_max); ++it) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - phi * (hi - lo);
      f1 = cost(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + phi * (hi - lo);
      f2 = cost(x2);
    }
  }
  double c2 = 0.5 * (lo + hi);
  for (double cand : {0.0, c2_max})
    if (cost(cand) <= cost(c2)) c2 = cand;
  return {c1_of(c2), c2};
}

inline ConstantsFit estimate_constants(const OscillatorModel& model, const FloquetFrame& frame, const LimitCycle& cycle,
                                       double eps, int n_samples, std::uint64_t seed = 1, double radius = 0.0) {
  if (!(eps >= 0.0)) throw Error(ErrorCode::InvalidArgument, "epsilon must be >= 0");
  ConstantsFit fit;
  fit.radius = radius > 0.0 ? radius : amax(frame, cycle);
  std::vector<EnvelopeSample> env;
  for (const auto& ts : sample_tube(frame, cycle, n_samples, fit.radius, seed)) {
    try {
      env.push_back({ts.w.norm(), gamma2_eval(model, frame, cycle, ts.u, ts.theta, eps).gamma2});
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateMinimum) throw;
      ++fit.n_skipped;
    }
  }
  fit.n_valid = static_cast<int>(env.size());
  if (fit.n_valid < 100)
    throw Error(ErrorCode::InsufficientSamples, "only " + std::to_string(fit.n_valid) + " valid tube samples (< 100)");
  std::tie(fit.c1_raw, fit.c2_raw) = fit_envelope(env, eps);
  fit.c1 = 1.1 * fit.c1_raw;
  fit.c2 = 1.1 * fit.c2_raw;
  return fit;
}

// ---------------------------------------------------------------------------------------------
// Admissible threshold interval

enum class IntervalStatus { inside, below_useful_range, outside };

inline const char* interval_status_name(IntervalStatus s) {
  switch (s) {
    case IntervalStatus::inside: return "inside";
    case IntervalStatus::below_useful_range: return "below_useful_range";
    case IntervalStatus::outside: return "outside";
  }
  return "unknown";
}

struct IntervalDetails {
  bool drift_condition = false;      // C1 eps + C2 a^2 <= b a / 2
  bool curvature_condition = false;  // a <= amax
  bool below_useful = false;         // a <= sqrt(eps / b)
  bool in_interval() const { return drift_condition && curvature_condition; }
};

inline IntervalDetails interval_details(double a, double eps, double b, double c1, double c2, double a_max) {
  for (double v : {a, eps, b, c1, c2, a_max})
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteInput, "non-finite argument");
  IntervalDetails d;
  d.drift_condition = c1 * eps + c2 * a * a <= 0.5 * b * a;
  d.curvature_condition = a <= a_max;
  d.below_useful = a <= std::sqrt(eps / b);
  return d;
}

/// below_useful_range takes precedence: such thresholds are reached almost surely whatever the constants say.
inline IntervalStatus interval_check(double a, double eps, double b, double c1, double c2, double a_max) {
  const IntervalDetails d = interval_details(a, eps, b, c1, c2, a_max);
  if (d.below_useful) return IntervalStatus::below_useful_range;
  return d.in_interval() ? IntervalStatus::inside : IntervalStatus::outside;
}

// ---------------------------------------------------------------------------------------------
// Monte Carlo escape probability

struct EscapeConfig {
  double a = 0.1;
  double T = 1.0;
  double eps = 1e-3;
  int n_paths = 1000;
  double dt = 1e-3;
  std::uint64_t seed = 1;
  double x = 0.0;       // initial transverse offset |w_0| (< a / 2)
  double theta0 = 0.0;  // initial phase
  double rho = 0.5;     // a_bar = rho a / sqrt(lambda eps)
  int ou_paths = 100000;
  int constant_samples = 2000;
  int threads = 0;
};

struct EscapeReport {
  double p_hat = 0.0, ci_low = 0.0, ci_high = 0.0, se = 0.0;
  int n_paths = 0, escapes = 0;
  int failures = 0;           // simulator errors, counted as escapes
  int tau_before_escape = 0;  // M <= 1e-6 while |w| < a, counted as escapes
  double min_m_in_tube = 1.0;
  double bound = 0.0, bound_asymptotic = 0.0;
  double lambda = 0.0, x_bar = 0.0, a_bar = 0.0, b = 0.0;
  double c1 = 0.0, c2 = 0.0, a_max = 0.0;
  IntervalStatus interval_status = IntervalStatus::outside;
  IntervalDetails interval;
  double dt = 0.0;
  std::uint64_t seed = 0;
  int lambda_skipped = 0;
};

/// Wilson score interval at 95%.
inline std::pair<double, double> wilson_interval(int k, int n) {
  if (n <= 0) throw Error(ErrorCode::InvalidArgument, "n must be > 0");
  const double z = 1.959963984540054;
  const double p = static_cast<double>(k) / n, z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double centre = (p + z2 / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  // the endpoints are exact at k = 0 and k = n; the formula loses them to rounding
  return {k == 0 ? 0.0 : std::max(0.0, centre - half), k == n ? 1.0 : std::min(1.0, centre + half)};
}

struct PathOutcome {
  bool escaped = false;
  bool failed = false;
  bool tau_first = false;
  double min_m = 1.0;
};

/// One full-SDE path with tracked phase extraction, stopped at the first step where
/// |P^{-1}(beta)(u - Phi(beta))| >= a (escapes are detected on the time grid only).
inline PathOutcome escape_path(const OscillatorModel& model, const FloquetFrame& frame, const LimitCycle& cycle,
                               const EscapeConfig& cfg, int path) {
  const int d = model.dim;
  const long n_steps = std::lround(cfg.T / cfg.dt);
  const Mat l = covariance_factor(model.covariance);
  CounterNormal gen(cfg.seed, static_cast<std::uint64_t>(path));
  Vec w0 = Vec::Zero(d);
  if (d > 1) w0(1) = cfg.x;
  Vec u = cycle.phi.eval_vec(cfg.theta0) + frame.P.eval(cfg.theta0) * w0;
  double beta = cfg.theta0;
  const double sdt = std::sqrt(cfg.dt);
  ExtractOptions xo;
  xo.throw_on_degenerate = false;
  Vec xi(d);
  PathOutcome out;
  try {
    for (long k = 0; k < n_steps; ++k) {
      gen.fill(static_cast<std::uint64_t>(k), xi);
      u = full_step(model, u, cfg.eps, cfg.dt, Vec(sdt * (l * xi)));
      if (!u.allFinite()) throw Error(ErrorCode::BlowUp, "state is not finite");
      PhaseState st = extract_phase_tracked(frame, cycle, u, beta, cfg.eps, xo);
      beta = st.beta;
      const double amp = (frame.Pinv.eval(beta) * (u - cycle.phi.eval_vec(beta))).norm();
      if (amp >= cfg.a) {
        out.escaped = true;
        return out;
      }
      out.min_m = std::min(out.min_m, st.m_value);
      if (st.tau_triggered) {
        out.escaped = out.tau_first = true;
        return out;
      }
    }
  } catch (const Error&) {
    out.escaped = out.failed = true;
  }
  return out;
}

inline EscapeReport escape_probability_mc(const OscillatorModel& model, const FloquetFrame& frame,
                                          const LimitCycle& cycle, const EscapeConfig& cfg) {
  for (double v : {cfg.a, cfg.T, cfg.eps, cfg.dt, cfg.x, cfg.rho})
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteInput, "non-finite escape configuration");
  if (!(cfg.a > 0.0) || !(cfg.T > 0.0) || !(cfg.eps > 0.0) || !(cfg.dt > 0.0) || cfg.n_paths <= 0)
    throw Error(ErrorCode::InvalidArgument, "need a, T, eps, dt > 0 and n_paths > 0");
  if (cfg.x < 0.0 || cfg.x >= 0.5 * cfg.a) throw Error(ErrorCode::InvalidArgument, "start offset must satisfy 0 <= x < a/2");
  if (!(cfg.rho > 0.0 && cfg.rho < 1.0)) throw Error(ErrorCode::InvalidArgument, "rho must lie in (0, 1)");
  if (std::abs(std::lround(cfg.T / cfg.dt) * cfg.dt - cfg.T) > 1e-9 * cfg.T)
    throw Error(ErrorCode::InvalidArgument, "dt must divide T");

  EscapeReport rep;
  rep.n_paths = cfg.n_paths;
  rep.dt = cfg.dt;
  rep.seed = cfg.seed;
  rep.b = frame.decay_bound;

  std::vector<PathOutcome> outcomes(cfg.n_paths);
  parallel_for(
      cfg.n_paths, [&](int p) { outcomes[p] = escape_path(model, frame, cycle, cfg, p); }, cfg.threads);
  for (const auto& o : outcomes) {
    rep.escapes += o.escaped;
    rep.failures += o.failed;
    rep.tau_before_escape += o.tau_first;
    rep.min_m_in_tube = std::min(rep.min_m_in_tube, o.min_m);
  }
  rep.p_hat = static_cast<double>(rep.escapes) / cfg.n_paths;
  rep.se = std::sqrt(rep.p_hat * (1.0 - rep.p_hat) / cfg.n_paths);
  std::tie(rep.ci_low, rep.ci_high) = wilson_interval(rep.escapes, cfg.n_paths);

  const LambdaEstimate lam = lambda_estimate(model, frame, cycle);
  rep.lambda = lam.lambda;
  rep.lambda_skipped = lam.n_skipped;
  rep.a_max = amax(frame, cycle);
  const ConstantsFit fit = estimate_constants(model, frame, cycle, cfg.eps, cfg.constant_samples, cfg.seed ^ 0xC0FFEEull);
  rep.c1 = fit.c1;
  rep.c2 = fit.c2;
  rep.interval = interval_details(cfg.a, cfg.eps, rep.b, rep.c1, rep.c2, rep.a_max);
  rep.interval_status = interval_check(cfg.a, cfg.eps, rep.b, rep.c1, rep.c2, rep.a_max);

  OuOptions oo;
  oo.n_paths = cfg.ou_paths;
  oo.seed = cfg.seed ^ 0x0B0Bull;
  oo.threads = cfg.threads;
  const TheoremBound tb = theorem_bound(rep.b, rep.lambda, cfg.eps, cfg.a, cfg.x, cfg.T, HittingMethod::monte_carlo, oo, cfg.rho);
  rep.x_bar = tb.x_bar;
  rep.a_bar = tb.a_bar;
  rep.bound = tb.probability;
  rep.bound_asymptotic =
      theorem_bound(rep.b, rep.lambda, cfg.eps, cfg.a, cfg.x, cfg.T, HittingMethod::asymptotic, oo, cfg.rho).probability;
  return rep;
}

}  // namespace varphase
