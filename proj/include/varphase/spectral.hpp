#pragma once

#include <unsupported/Eigen/FFT>

#include <complex>
#include <vector>

#include "varphase/linalg.hpp"

namespace varphase {

/// Uniform samples of a 2pi-periodic vector- or matrix-valued function on
/// theta_j = 2 pi j / n, with a cached trigonometric interpolant.
class PeriodicTable {
 public:
  using Complex = std::complex<double>;
  using CoefMatrix = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic>;

  PeriodicTable() = default;

  /// All samples must share one shape. n must be an even power of two >= 4.
  explicit PeriodicTable(const std::vector<Mat>& samples) {
    const int n = static_cast<int>(samples.size());
    if (n < 4 || (n & (n - 1)) != 0) throw Error(ErrorCode::InvalidArgument, "n_grid must be a power of two >= 4");
    rows_ = static_cast<int>(samples[0].rows());
    cols_ = static_cast<int>(samples[0].cols());
    n_ = n;
    values_.resize(n, channels());
    for (int j = 0; j < n; ++j) {
      if (samples[j].rows() != rows_ || samples[j].cols() != cols_)
        throw Error(ErrorCode::InvalidArgument, "inconsistent sample shapes");
      if (!samples[j].allFinite()) throw Error(ErrorCode::NonFiniteInput, "non-finite table sample");
      for (int c = 0; c < channels(); ++c) values_(j, c) = samples[j](c % rows_, c / rows_);
    }
    transform();
  }

  static PeriodicTable from_vectors(const std::vector<Vec>& samples) {
    std::vector<Mat> m(samples.begin(), samples.end());
    return PeriodicTable(m);
  }

  template <class F>
  static PeriodicTable from_function(int n, F&& f) {
    std::vector<Mat> s(n);
    for (int j = 0; j < n; ++j) s[j] = f(node(n, j));
    return PeriodicTable(s);
  }

  static double node(int n, int j) { return kTwoPi * j / n; }

  int size() const { return n_; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int channels() const { return rows_ * cols_; }
  int bandwidth() const { return kmax_; }
  bool empty() const { return n_ == 0; }

  Mat sample(int j) const {
    Mat m(rows_, cols_);
    for (int c = 0; c < channels(); ++c) m(c % rows_, c / rows_) = values_(j, c);
    return m;
  }
  Vec sample_vec(int j) const { return sample(j).col(0); }

  /// Trigonometric interpolant at theta (reduced mod 2pi first).
  Mat eval(double theta) const {
    const double th = wrap_angle(theta);
    const int nc = channels();
    Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim * kMaxDim, 1> acc(nc);
    for (int c = 0; c < nc; ++c) acc(c) = coef_(0, c).real();
    const Complex step(std::cos(th), std::sin(th));
    Complex z(1.0, 0.0);
    // The Nyquist mode is real and contributes cos(n theta / 2) once.
    const int top = kmax_ == n_ / 2 ? kmax_ - 1 : kmax_;
    for (int k = 1; k <= top; ++k) {
      // Re-anchor periodically so the recurrence does not drift.
      z = (k % 16 == 0) ? Complex(std::cos(k * th), std::sin(k * th)) : z * step;
      const double zr = 2.0 * z.real(), zi = 2.0 * z.imag();
      for (int c = 0; c < nc; ++c) acc(c) += coef_(k, c).real() * zr - coef_(k, c).imag() * zi;
    }
    if (kmax_ == n_ / 2 && nyquist_) {
      const double cn = std::cos(0.5 * n_ * th);
      for (int c = 0; c < nc; ++c) acc(c) += coef_(kmax_, c).real() * cn;
    }
    Mat m(rows_, cols_);
    for (int c = 0; c < nc; ++c) m(c % rows_, c / rows_) = acc(c);
    return m;
  }

  Vec eval_vec(double theta) const { return eval(theta).col(0); }

  /// Table of the order-th theta-derivative (Nyquist mode dropped).
  PeriodicTable derivative(int order = 1) const {
    PeriodicTable d;
    d.n_ = n_;
    d.rows_ = rows_;
    d.cols_ = cols_;
    d.nyquist_ = false;
    d.coef_ = coef_;
    for (int k = 0; k <= n_ / 2; ++k) {
      Complex f = (k == n_ / 2) ? Complex(0.0) : std::pow(Complex(0.0, k), order);
      d.coef_.row(k) *= f;
    }
    d.synthesize();
    return d;
  }

  /// Same table with every mode above the last one exceeding rel * peak removed.
  /// Used to strip integration noise before differentiating.
  PeriodicTable filtered(double rel) const {
    double peak = 0.0;
    for (int k = 0; k <= n_ / 2; ++k)
      for (int c = 0; c < channels(); ++c) peak = std::max(peak, std::abs(coef_(k, c)));
    int cut = 0;
    for (int k = n_ / 2; k > 0; --k) {
      double m = 0.0;
      for (int c = 0; c < channels(); ++c) m = std::max(m, std::abs(coef_(k, c)));
      if (m > rel * peak) {
        cut = k;
        break;
      }
    }
    PeriodicTable f = *this;
    for (int k = cut + 1; k <= n_ / 2; ++k) f.coef_.row(k).setZero();
    f.nyquist_ = nyquist_ && cut == n_ / 2;
    f.synthesize();
    return f;
  }

  /// Table of theta -> f(theta + shift * 2pi/n), an exact rotation of the samples.
  PeriodicTable shifted(int shift) const {
    std::vector<Mat> s(n_);
    for (int j = 0; j < n_; ++j) s[j] = sample(((j + shift) % n_ + n_) % n_);
    return PeriodicTable(s);
  }

  const Eigen::MatrixXd& values() const { return values_; }

 private:
  void transform() {
    Eigen::FFT<double> fft;
    coef_.resize(n_ / 2 + 1, channels());
    std::vector<double> in(n_);
    std::vector<Complex> out;
    for (int c = 0; c < channels(); ++c) {
      for (int j = 0; j < n_; ++j) in[j] = values_(j, c);
      fft.fwd(out, in);
      for (int k = 0; k <= n_ / 2; ++k) coef_(k, c) = out[k] / static_cast<double>(n_);
    }
    nyquist_ = true;
    trim();
  }

  // Rebuild samples from coefficients (used by derivative tables).
  void synthesize() {
    Eigen::FFT<double> fft;
    values_.resize(n_, channels());
    std::vector<Complex> spec(n_);
    std::vector<double> out;
    for (int c = 0; c < channels(); ++c) {
      for (int k = 0; k <= n_ / 2; ++k) spec[k] = coef_(k, c) * static_cast<double>(n_);
      for (int k = 1; k < n_ / 2; ++k) spec[n_ - k] = std::conj(spec[k]);
      spec[n_ / 2] = Complex(spec[n_ / 2].real(), 0.0);
      fft.inv(out, spec);
      for (int j = 0; j < n_; ++j) values_(j, c) = out[j];
    }
    trim();
  }

  // Effective bandwidth: skip modes at the FFT round-off level across all channels.
  void trim() {
    double peak = 0.0;
    for (int k = 0; k <= n_ / 2; ++k)
      for (int c = 0; c < channels(); ++c) peak = std::max(peak, std::abs(coef_(k, c)));
    kmax_ = 0;
    for (int k = n_ / 2; k > 0; --k) {
      double m = 0.0;
      for (int c = 0; c < channels(); ++c) m = std::max(m, std::abs(coef_(k, c)));
      if (m > 1e-15 * peak) {
        kmax_ = k;
        break;
      }
    }
  }

  int n_ = 0, rows_ = 0, cols_ = 0, kmax_ = 0;
  bool nyquist_ = false;
  Eigen::MatrixXd values_;
  CoefMatrix coef_;
};

}  // namespace varphase
