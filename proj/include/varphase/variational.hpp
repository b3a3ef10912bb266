#pragma once

#include <cmath>
#include <vector>

#include "varphase/floquet.hpp"

namespace varphase {

/// M threshold standing in for the stopping time tau (M reaching 0).
inline constexpr double kTauThreshold = 1e-6;

/// Variational phase beta (unwrapped), amplitude v = (u - Phi(beta)) / sqrt(eps),
/// curvature M(u, beta) and the stopping flag.
struct PhaseState {
  double beta = 0.0;
  Vec amplitude;
  double m_value = 1.0;
  bool tau_triggered = false;
  double g_value = 0.0;
  int iterations = 0;
};

/// Cycle and frame quantities at one phase a.
struct LocalGeometry {
  Vec phi, d1, d2;
  Mat w, w1;
};

inline LocalGeometry local_geometry(const LimitCycle& cycle, const FloquetFrame& frame, double a) {
  return {cycle.phi.eval_vec(a), cycle.dphi.eval_vec(a), cycle.d2phi.eval_vec(a), frame.W.eval(a), frame.dW.eval(a)};
}

inline double g_from(const LocalGeometry& g, const Vec& z) { return -2.0 * (z - g.phi).dot(g.w * g.d1); }

inline double m_from(const LocalGeometry& g, const Vec& z) {
  Vec r = z - g.phi;
  return 1.0 - r.dot(g.w * g.d2) - r.dot(g.w1 * g.d1);
}

/// G(z, a) = -2 <z - Phi(a), Phi'(a)>_a.
inline double g_objective(const FloquetFrame& frame, const LimitCycle& cycle, const Vec& z, double a) {
  if (!z.allFinite() || !std::isfinite(a)) throw Error(ErrorCode::NonFiniteInput, "non-finite argument");
  return g_from(local_geometry(cycle, frame, a), z);
}

/// M(z, a) = 1 - <z - Phi(a), Phi''(a)>_a - <z - Phi(a), W'(a) Phi'(a)>.
inline double m_curvature(const FloquetFrame& frame, const LimitCycle& cycle, const Vec& z, double a) {
  if (!z.allFinite() || !std::isfinite(a)) throw Error(ErrorCode::NonFiniteInput, "non-finite argument");
  return m_from(local_geometry(cycle, frame, a), z);
}

/// Weighted squared distance ||z - Phi(a)||_a^2.
inline double weighted_distance2(const FloquetFrame& frame, const LimitCycle& cycle, const Vec& z, double a) {
  Vec r = z - cycle.phi.eval_vec(a);
  return r.dot(frame.W.eval(a) * r);
}

struct ExtractOptions {
  bool throw_on_degenerate = true;  // false: report tau_triggered instead of raising
  int max_iterations = 50;
  double tie_tolerance = 1e-10;
};

namespace detail {

inline Vec scaled_amplitude(const Vec& r, double eps) { return eps > 0.0 ? Vec(r / std::sqrt(eps)) : r; }

struct PolishResult {
  double a;
  double g;
  double m;
  int iterations;
  bool ok;
};

// Safeguarded Newton on G(u, a) = 0 inside [lo, hi] where G(lo) <= 0 <= G(hi).
inline PolishResult polish_bracketed(const LimitCycle& cycle, const FloquetFrame& frame, const Vec& u, double lo,
                                     double hi, int max_it) {
  double a = 0.5 * (lo + hi);
  for (int it = 1; it <= max_it; ++it) {
    LocalGeometry geo = local_geometry(cycle, frame, a);
    double g = g_from(geo, u);
    double m = m_from(geo, u);
    if (std::abs(g) <= 1e-12) return {a, g, m, it, true};
    if (g < 0.0) lo = a; else hi = a;
    double next = (m > 0.0) ? a - g / (2.0 * m) : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - a) <= 4e-16 * std::max(1.0, std::abs(a)) || hi - lo <= 4e-16 * std::max(1.0, std::abs(a))) {
      // Rounding floor: accept when G is at the noise level.
      LocalGeometry g2 = local_geometry(cycle, frame, next);
      double gn = g_from(g2, u);
      return {next, gn, m_from(g2, u), it, std::abs(gn) <= 1e-10};
    }
    a = next;
  }
  LocalGeometry geo = local_geometry(cycle, frame, a);
  double g = g_from(geo, u);
  return {a, g, m_from(geo, u), max_it, std::abs(g) <= 1e-12};
}

}  // namespace detail

/// Global variational phase: every root of G(u, .) with positive slope (a minimum of the
/// weighted distance with the weight frozen at the root) is bracketed on the cycle grid and
/// polished; the root with the smallest ||u - Phi(a)||_a^2 wins.
inline PhaseState extract_phase_global(const FloquetFrame& frame, const LimitCycle& cycle, const Vec& u, double eps,
                                       const ExtractOptions& opt = {}) {
  if (!u.allFinite()) throw Error(ErrorCode::NonFiniteInput, "state contains NaN or Inf");
  if (!(eps >= 0.0) || !std::isfinite(eps)) throw Error(ErrorCode::InvalidArgument, "epsilon must be >= 0");
  const int n = cycle.n_grid();
  const double h = kTwoPi / n;
  std::vector<double> gs(n), dist(n);
  for (int j = 0; j < n; ++j) {
    Vec r = u - cycle.phi.sample_vec(j);
    Mat w = frame.W.sample(j);
    gs[j] = -2.0 * r.dot(w * cycle.dphi.sample_vec(j));
    dist[j] = r.dot(w * r);
  }
  struct Candidate {
    detail::PolishResult res;
    double d2;
  };
  std::vector<Candidate> found;
  bool any_failed = false;
  for (int j = 0; j < n; ++j) {
    const double glo = gs[j], ghi = gs[(j + 1) % n];
    if (!(glo < 0.0 && ghi >= 0.0)) continue;
    detail::PolishResult res = detail::polish_bracketed(cycle, frame, u, h * j, h * (j + 1), opt.max_iterations);
    if (!res.ok) {
      any_failed = true;
      continue;
    }
    found.push_back({res, weighted_distance2(frame, cycle, u, res.a)});
  }
  if (found.empty()) {
    int jb = static_cast<int>(std::min_element(dist.begin(), dist.end()) - dist.begin());
    double m = m_curvature(frame, cycle, u, h * jb);
    if (m <= kTauThreshold) {
      if (opt.throw_on_degenerate) throw Error(ErrorCode::DegenerateMinimum, "M <= 1e-6 at the best candidate");
      PhaseState st;
      st.beta = h * jb;
      st.m_value = m;
      st.g_value = gs[jb];
      st.tau_triggered = true;
      st.amplitude = detail::scaled_amplitude(u - cycle.phi.sample_vec(jb), eps);
      return st;
    }
    throw Error(ErrorCode::NewtonDivergence,
                any_failed ? "no candidate converged to |G| <= 1e-12" : "G(u, .) has no sign change on the grid");
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < found.size(); ++i)
    if (found[i].d2 < found[best].d2) best = i;
  const auto& b = found[best].res;

  PhaseState st;
  st.beta = wrap_angle(b.a);
  st.m_value = b.m;
  st.g_value = b.g;
  st.iterations = b.iterations;
  st.amplitude = detail::scaled_amplitude(u - cycle.phi.eval_vec(b.a), eps);
  if (b.m <= kTauThreshold) {
    if (opt.throw_on_degenerate) throw Error(ErrorCode::DegenerateMinimum, "M <= 1e-6 at the minimizer");
    st.tau_triggered = true;
    return st;
  }
  for (std::size_t i = 0; i < found.size(); ++i) {
    if (i == best) continue;
    if (std::abs(angle_diff(found[i].res.a, b.a)) > 1e-6 &&
        std::abs(found[i].d2 - found[best].d2) <= opt.tie_tolerance)
      throw Error(ErrorCode::NewtonDivergence,
                  "tie: two minima within 1e-10 at a = " + std::to_string(wrap_angle(b.a)) + " and " +
                      std::to_string(wrap_angle(found[i].res.a)));
  }
  return st;
}

/// Newton from beta_prev without a global scan; beta is unwrapped to stay within pi of beta_prev.
inline PhaseState extract_phase_tracked(const FloquetFrame& frame, const LimitCycle& cycle, const Vec& u,
                                        double beta_prev, double eps, const ExtractOptions& opt = {}) {
  if (!u.allFinite() || !std::isfinite(beta_prev)) throw Error(ErrorCode::NonFiniteInput, "non-finite argument");
  double a = beta_prev;
  double g = 0.0, m = 1.0;
  int it = 0;
  bool ok = false;
  for (; it < opt.max_iterations; ++it) {
    LocalGeometry geo = local_geometry(cycle, frame, a);
    g = g_from(geo, u);
    m = m_from(geo, u);
    if (std::abs(g) <= 1e-12) {
      ok = true;
      break;
    }
    // Non-positive curvature: walk downhill in small fixed steps instead of jumping to a maximum.
    double step = m > 1e-3 ? std::clamp(-g / (2.0 * m), -0.25 * std::numbers::pi, 0.25 * std::numbers::pi)
                           : (g > 0.0 ? -0.05 : 0.05);
    a += step;
    if (std::abs(step) <= 4e-16 * std::max(1.0, std::abs(a))) {
      LocalGeometry g2 = local_geometry(cycle, frame, a);
      g = g_from(g2, u);
      m = m_from(g2, u);
      ok = std::abs(g) <= 1e-10;
      ++it;
      break;
    }
  }
  if (!ok || std::abs(g) > 1e-10)
    throw Error(ErrorCode::NewtonDivergence, "tracked Newton did not reach |G| <= 1e-10");
  PhaseState st;
  st.beta = a + kTwoPi * std::round((beta_prev - a) / kTwoPi);
  st.m_value = m;
  st.g_value = g;
  st.iterations = it + 1;
  st.amplitude = detail::scaled_amplitude(u - cycle.phi.eval_vec(a), eps);
  if (m <= kTauThreshold) {
    if (opt.throw_on_degenerate) throw Error(ErrorCode::DegenerateMinimum, "M <= 1e-6 at the tracked solution");
    st.tau_triggered = true;
  }
  return st;
}

}  // namespace varphase
