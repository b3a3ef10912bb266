#pragma once

#include <functional>
#include <map>
#include <random>
#include <string>
#include <utility>

#include "varphase/linalg.hpp"

namespace varphase {

/// Drift F, Jacobian DF, noise map G and Brownian covariance Q of
/// du = F(u) dt + sqrt(eps) G(u) dW with E[W W^T] = t Q.
struct OscillatorModel {
  std::string name;
  int dim = 0;
  std::function<Vec(const Vec&)> drift;
  std::function<Mat(const Vec&)> jacobian;  // empty: central finite differences
  std::function<Mat(const Vec&)> noise_map;
  Mat covariance;
  Mat covariance_sqrt;  // L with L L^T = Q
  double noise_bound = 0.0;  // declared sup ||G(u)||

  bool has_analytic_jacobian() const { return static_cast<bool>(jacobian); }
};

using ParamMap = std::map<std::string, double>;

inline OscillatorModel make_model(std::string name, int dim, std::function<Vec(const Vec&)> drift,
                                  std::function<Mat(const Vec&)> jacobian,
                                  std::function<Mat(const Vec&)> noise_map, Mat covariance,
                                  double noise_bound) {
  if (dim <= 0 || dim > kMaxDim)
    throw Error(ErrorCode::InvalidArgument, "state dimension must be in 1.." + std::to_string(kMaxDim));
  if (!drift || !noise_map) throw Error(ErrorCode::InvalidArgument, "drift and noise map are required");
  if (covariance.rows() != dim || covariance.cols() != dim)
    throw Error(ErrorCode::BadCovariance, "Q must be d x d");
  if (!(noise_bound >= 0.0) || !std::isfinite(noise_bound))
    throw Error(ErrorCode::InvalidArgument, "noise bound must be finite and non-negative");
  OscillatorModel m;
  m.name = std::move(name);
  m.dim = dim;
  m.drift = std::move(drift);
  m.jacobian = std::move(jacobian);
  m.noise_map = std::move(noise_map);
  m.covariance_sqrt = covariance_factor(covariance);
  m.covariance = std::move(covariance);
  m.noise_bound = noise_bound;
  return m;
}

namespace detail {

inline double take_param(ParamMap& p, const std::string& key, const std::string& model) {
  auto it = p.find(key);
  if (it == p.end()) throw Error(ErrorCode::MissingParam, model + " requires parameter '" + key + "'");
  double v = it->second;
  p.erase(it);
  return v;
}

inline double take_optional(ParamMap& p, const std::string& key, double fallback) {
  auto it = p.find(key);
  if (it == p.end()) return fallback;
  double v = it->second;
  p.erase(it);
  return v;
}

// Isotropic G = g_scale * I and unit-variance Q with optional correlation q_corr.
inline std::pair<double, Mat> take_noise_params(ParamMap& p, int dim) {
  double g = take_optional(p, "g_scale", 1.0);
  double rho = take_optional(p, "q_corr", 0.0);
  if (!std::isfinite(g) || g < 0.0) throw Error(ErrorCode::NonPositiveParam, "g_scale must be >= 0");
  if (!(std::abs(rho) <= 1.0)) throw Error(ErrorCode::BadCovariance, "q_corr must lie in [-1, 1]");
  Mat q = Mat::Constant(dim, dim, rho);
  q.diagonal().setOnes();
  return {g, q};
}

}  // namespace detail

/// Built-in oscillators:
///   stuart_landau: x' = x - w y - (x^2+y^2) x,  y' = w x + y - (x^2+y^2) y   (omega > 0)
///   van_der_pol:   x' = y,  y' = mu (1 - x^2) y - x                          (mu > 0)
/// Optional keys g_scale (G = g_scale I) and q_corr (unit-variance Q with that correlation).
inline OscillatorModel builtin_model(const std::string& name, ParamMap params) {
  if (name == "stuart_landau") {
    double w = detail::take_param(params, "omega", name);
    if (!(w > 0.0)) throw Error(ErrorCode::NonPositiveParam, "omega must be > 0");
    auto [g, q] = detail::take_noise_params(params, 2);
    if (!params.empty()) throw Error(ErrorCode::UnknownParam, "unknown parameter '" + params.begin()->first + "'");
    auto drift = [w](const Vec& u) {
      double r2 = u(0) * u(0) + u(1) * u(1);
      Vec f(2);
      f << u(0) - w * u(1) - r2 * u(0), w * u(0) + u(1) - r2 * u(1);
      return f;
    };
    auto jac = [w](const Vec& u) {
      double x = u(0), y = u(1);
      Mat j(2, 2);
      j << 1.0 - 3.0 * x * x - y * y, -w - 2.0 * x * y,
           w - 2.0 * x * y, 1.0 - x * x - 3.0 * y * y;
      return j;
    };
    auto noise = [g](const Vec&) { return Mat(g * Mat::Identity(2, 2)); };
    return make_model(name, 2, drift, jac, noise, q, g);
  }
  if (name == "van_der_pol") {
    double mu = detail::take_param(params, "mu", name);
    if (!(mu > 0.0)) throw Error(ErrorCode::NonPositiveParam, "mu must be > 0");
    auto [g, q] = detail::take_noise_params(params, 2);
    if (!params.empty()) throw Error(ErrorCode::UnknownParam, "unknown parameter '" + params.begin()->first + "'");
    auto drift = [mu](const Vec& u) {
      Vec f(2);
      f << u(1), mu * (1.0 - u(0) * u(0)) * u(1) - u(0);
      return f;
    };
    auto jac = [mu](const Vec& u) {
      Mat j(2, 2);
      j << 0.0, 1.0, -2.0 * mu * u(0) * u(1) - 1.0, mu * (1.0 - u(0) * u(0));
      return j;
    };
    auto noise = [g](const Vec&) { return Mat(g * Mat::Identity(2, 2)); };
    return make_model(name, 2, drift, jac, noise, q, g);
  }
  throw Error(ErrorCode::UnknownModel, "unknown model '" + name + "'");
}

/// F(u) = A u with constant noise map.
inline OscillatorModel linear_model(const Mat& a, const Mat& g, const Mat& q) {
  const int d = static_cast<int>(a.rows());
  return make_model(
      "linear", d, [a](const Vec& u) { return Vec(a * u); }, [a](const Vec&) { return a; },
      [g](const Vec&) { return g; }, q, spectral_norm(g));
}

inline Vec eval_drift(const OscillatorModel& model, const Vec& u) {
  if (u.size() != model.dim) throw Error(ErrorCode::InvalidArgument, "state has wrong dimension");
  if (!u.allFinite()) throw Error(ErrorCode::NonFiniteInput, "state contains NaN or Inf");
  return model.drift(u);
}

/// Central differences with step 1e-6 * max(1, ||u||).
inline Mat finite_difference_jacobian(const OscillatorModel& model, const Vec& u) {
  const int d = model.dim;
  const double h = 1e-6 * std::max(1.0, u.norm());
  Mat j(d, d);
  Vec up = u, um = u;
  for (int k = 0; k < d; ++k) {
    up(k) = u(k) + h;
    um(k) = u(k) - h;
    j.col(k) = (model.drift(up) - model.drift(um)) / (2.0 * h);
    up(k) = u(k);
    um(k) = u(k);
  }
  return j;
}

inline Mat eval_jacobian(const OscillatorModel& model, const Vec& u) {
  if (u.size() != model.dim) throw Error(ErrorCode::InvalidArgument, "state has wrong dimension");
  if (!u.allFinite()) throw Error(ErrorCode::NonFiniteInput, "state contains NaN or Inf");
  if (model.jacobian) return model.jacobian(u);
  return finite_difference_jacobian(model, u);
}

inline Mat eval_noise(const OscillatorModel& model, const Vec& u) { return model.noise_map(u); }

/// Max over random points in [-half_width, half_width]^d of
/// ||J_analytic - J_fd|| / (1 + ||J_analytic||). Zero when no analytic Jacobian exists.
inline double jacobian_consistency(const OscillatorModel& model, int n_points, double half_width,
                                   std::uint64_t seed) {
  if (!model.has_analytic_jacobian()) return 0.0;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-half_width, half_width);
  double worst = 0.0;
  for (int i = 0; i < n_points; ++i) {
    Vec u(model.dim);
    for (int k = 0; k < model.dim; ++k) u(k) = unif(rng);
    Mat ja = model.jacobian(u);
    Mat jf = finite_difference_jacobian(model, u);
    worst = std::max(worst, spectral_norm(ja - jf) / (1.0 + spectral_norm(ja)));
  }
  return worst;
}

/// Largest ||G(u)|| seen on random points of the box; compare against noise_bound.
inline double sampled_noise_sup(const OscillatorModel& model, int n_points, double half_width,
                                std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-half_width, half_width);
  double worst = 0.0;
  for (int i = 0; i < n_points; ++i) {
    Vec u(model.dim);
    for (int k = 0; k < model.dim; ++k) u(k) = unif(rng);
    worst = std::max(worst, spectral_norm(model.noise_map(u)));
  }
  return worst;
}

}  // namespace varphase
