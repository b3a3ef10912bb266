#pragma once

#include <cmath>
#include <cstdint>

#include "varphase/linalg.hpp"

namespace varphase {

namespace detail {

inline constexpr std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline double to_unit_open(std::uint64_t x) {
  // (0, 1]: never zero, so the logarithm below is finite.
  return (static_cast<double>(x >> 11) + 1.0) * 0x1.0p-53;
}

}  // namespace detail

/// Counter-based standard normals: the value at (seed, stream, step, index) is a pure function
/// of its coordinates, so paths are reproducible regardless of evaluation order or threading.
class CounterNormal {
 public:
  CounterNormal(std::uint64_t seed, std::uint64_t stream)
      : key_(detail::splitmix(detail::splitmix(seed) ^ (stream * 0xD1B54A32D192ED03ull))) {}

  /// Fills out(0..n-1) with the normals of one step (Box-Muller on hashed uniform pairs).
  template <class V>
  void fill(std::uint64_t step, V& out) const {
    const auto n = out.size();
    const std::uint64_t base = detail::splitmix(key_ ^ detail::splitmix(step));
    for (decltype(out.size()) i = 0; i < n; i += 2) {
      std::uint64_t h = detail::splitmix(base + static_cast<std::uint64_t>(i));
      double u1 = detail::to_unit_open(h);
      double u2 = detail::to_unit_open(detail::splitmix(h ^ 0x632BE59BD9B4E019ull));
      double rad = std::sqrt(-2.0 * std::log(u1));
      double ang = kTwoPi * u2;
      out[i] = rad * std::cos(ang);
      if (i + 1 < n) out[i + 1] = rad * std::sin(ang);
    }
  }

 private:
  std::uint64_t key_;
};

/// Brownian increments with covariance dt * Q, one row per step.
struct NoisePath {
  double dt = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  Eigen::MatrixXd increments;  // n_steps x d

  int n_steps() const { return static_cast<int>(increments.rows()); }
  int dim() const { return static_cast<int>(increments.cols()); }
  Vec increment(int step) const { return Vec(increments.row(step).transpose()); }
};

/// increments = sqrt(dt) L xi with L L^T = Q and xi from CounterNormal(seed, stream).
inline NoisePath sample_noise(const Mat& q, double dt, int n_steps, std::uint64_t seed, std::uint64_t stream) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw Error(ErrorCode::InvalidArgument, "dt must be > 0");
  if (n_steps < 0) throw Error(ErrorCode::InvalidArgument, "n_steps must be >= 0");
  const Mat l = covariance_factor(q);
  const int d = static_cast<int>(q.rows());
  NoisePath p;
  p.dt = dt;
  p.seed = seed;
  p.stream = stream;
  p.increments.resize(n_steps, d);
  CounterNormal gen(seed, stream);
  Vec xi(d);
  const double s = std::sqrt(dt);
  for (int k = 0; k < n_steps; ++k) {
    gen.fill(static_cast<std::uint64_t>(k), xi);
    p.increments.row(k) = (s * (l * xi)).transpose();
  }
  return p;
}

/// Same Brownian path on a grid twice as coarse (pairs of increments summed).
inline NoisePath coarsen(const NoisePath& fine) {
  NoisePath c;
  c.dt = 2.0 * fine.dt;
  c.seed = fine.seed;
  c.stream = fine.stream;
  const int n = fine.n_steps() / 2;
  c.increments.resize(n, fine.dim());
  for (int k = 0; k < n; ++k) c.increments.row(k) = fine.increments.row(2 * k) + fine.increments.row(2 * k + 1);
  return c;
}

}  // namespace varphase
