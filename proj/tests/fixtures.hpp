#pragma once

#include <catch_amalgamated.hpp>

#include "varphase/varphase.hpp"

namespace fx {

using namespace varphase;

struct Oscillator {
  OscillatorModel model;
  LimitCycle cycle;
  FloquetFrame frame;
};

inline Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

inline Mat mat2(double a, double b, double c, double d) {
  Mat m(2, 2);
  m << a, b, c, d;
  return m;
}

inline Oscillator build(OscillatorModel m, const Vec& guess, double period) {
  LimitCycle c = find_limit_cycle(m, guess, period);
  FloquetFrame f = floquet_decompose(m, c);
  return {std::move(m), std::move(c), std::move(f)};
}

inline const Oscillator& stuart_landau() {
  static const Oscillator o = build(builtin_model("stuart_landau", {{"omega", 1.0}}), vec2(1.3, 0.0), 6.0);
  return o;
}

inline const Oscillator& van_der_pol() {
  static const Oscillator o = build(builtin_model("van_der_pol", {{"mu", 1.0}}), vec2(2.0, 0.0), 6.5);
  return o;
}

/// Error code thrown by f, or nullopt.
template <class F>
std::optional<ErrorCode> code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

}  // namespace fx
