#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "varphase/error.hpp"

namespace varphase {

struct OdeOptions {
  double atol = 1e-12;
  double rtol = 1e-10;
  double h_init = 0.0;  // 0: pick from the initial derivative
  long max_steps = 5'000'000;
};

/// Adaptive Dormand-Prince 5(4) with FSAL and PI step control.
/// `rhs(t, y, dy)` writes dy/dt. `observer(t0, y0, f0, t1, y1, f1)` is called after
/// every accepted step and may return false to stop early.
class DormandPrince {
 public:
  explicit DormandPrince(OdeOptions opt = {}) : opt_(opt) {}

  template <class Rhs, class Observer>
  Eigen::VectorXd integrate(Rhs&& rhs, double t0, Eigen::VectorXd y, double t1, Observer&& observer) {
    const double span = t1 - t0;
    if (span == 0.0) return y;
    const double dir = span > 0 ? 1.0 : -1.0;
    const Eigen::Index n = y.size();
    Eigen::VectorXd k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), ytmp(n), ynew(n), err(n);

    double t = t0;
    rhs(t, y, k1);
    double h = opt_.h_init > 0 ? opt_.h_init : initial_step(y, k1, std::abs(span));
    if (last_h_ > 0 && opt_.h_init <= 0) h = last_h_;
    h = std::min(h, std::abs(span));
    double err_prev = 1e-4;
    long steps = 0;

    while (dir * (t1 - t) > 0.0) {
      if (++steps > opt_.max_steps) throw Error(ErrorCode::IntegrationFailure, "step budget exhausted");
      bool last = false;
      if (h >= std::abs(t1 - t) * (1.0 - 1e-13)) {
        h = std::abs(t1 - t);
        last = true;
      }
      const double hs = dir * h;
      ytmp = y + hs * (a21 * k1);
      rhs(t + c2 * hs, ytmp, k2);
      ytmp = y + hs * (a31 * k1 + a32 * k2);
      rhs(t + c3 * hs, ytmp, k3);
      ytmp = y + hs * (a41 * k1 + a42 * k2 + a43 * k3);
      rhs(t + c4 * hs, ytmp, k4);
      ytmp = y + hs * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
      rhs(t + c5 * hs, ytmp, k5);
      ytmp = y + hs * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
      rhs(t + hs, ytmp, k6);
      ynew = y + hs * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
      const double tnew = last ? t1 : t + hs;
      rhs(tnew, ynew, k7);
      err = hs * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

      double en = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        double sc = opt_.atol + opt_.rtol * std::max(std::abs(y(i)), std::abs(ynew(i)));
        en += (err(i) / sc) * (err(i) / sc);
      }
      en = std::sqrt(en / static_cast<double>(n));
      if (!std::isfinite(en)) {
        h *= 0.1;
        if (h < 1e-14 * std::max(1.0, std::abs(t))) throw Error(ErrorCode::IntegrationFailure, "non-finite state");
        continue;
      }
      if (en <= 1.0) {
        bool go_on = observer(t, y, k1, tnew, ynew, k7);
        t = tnew;
        y = ynew;
        k1 = k7;
        double fac = 0.9 * std::pow(en, -0.7 / 5.0) * std::pow(err_prev, 0.4 / 5.0);
        if (en == 0.0) fac = 5.0;
        fac = std::clamp(fac, 0.2, 5.0);
        err_prev = std::max(en, 1e-4);
        if (!last) last_h_ = h;
        h *= fac;
        if (!go_on) break;
      } else {
        h *= std::max(0.2, 0.9 * std::pow(en, -0.2));
        if (h < 1e-14 * std::max(1.0, std::abs(t)))
          throw Error(ErrorCode::IntegrationFailure, "step size underflow at t = " + std::to_string(t));
      }
    }
    return y;
  }

  template <class Rhs>
  Eigen::VectorXd integrate(Rhs&& rhs, double t0, Eigen::VectorXd y, double t1) {
    return integrate(std::forward<Rhs>(rhs), t0, std::move(y), t1,
                     [](double, const Eigen::VectorXd&, const Eigen::VectorXd&, double,
                        const Eigen::VectorXd&, const Eigen::VectorXd&) { return true; });
  }

  void reset_step() { last_h_ = 0.0; }

 private:
  double initial_step(const Eigen::VectorXd& y, const Eigen::VectorXd& f, double span) const {
    Eigen::VectorXd sc = (opt_.atol + opt_.rtol * y.array().abs()).matrix();
    double d0 = (y.array() / sc.array()).matrix().norm();
    double d1 = (f.array() / sc.array()).matrix().norm();
    double h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    return std::min(h, 0.1 * span);
  }

  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                          a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192,
                          a75 = -2187.0 / 6784, a76 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

  OdeOptions opt_;
  double last_h_ = 0.0;
};

/// Cubic Hermite interpolation inside one accepted step.
inline Eigen::VectorXd hermite(double t0, const Eigen::VectorXd& y0, const Eigen::VectorXd& f0, double t1,
                               const Eigen::VectorXd& y1, const Eigen::VectorXd& f1, double t) {
  const double h = t1 - t0;
  const double s = (t - t0) / h;
  const double h00 = (1 + 2 * s) * (1 - s) * (1 - s), h10 = s * (1 - s) * (1 - s);
  const double h01 = s * s * (3 - 2 * s), h11 = s * s * (s - 1);
  return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1;
}

}  // namespace varphase
