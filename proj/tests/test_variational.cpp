#include <random>

#include "fixtures.hpp"

using namespace varphase;
using fx::vec2;

TEST_CASE("G vanishes on the cycle and is periodic in a", "[variational]") {
  const auto& o = fx::van_der_pol();
  for (double a : {0.0, 1.3, 4.9}) {
    CHECK(std::abs(g_objective(o.frame, o.cycle, eval_phi(o.cycle, a), a)) <= 1e-12);
    Vec z = eval_phi(o.cycle, a) + 0.01 * eval_phi(o.cycle, a, 1);
    CHECK(g_objective(o.frame, o.cycle, z, a) < 0.0);
    Vec y = vec2(0.7, -2.1);
    CHECK(std::abs(g_objective(o.frame, o.cycle, y, a) - g_objective(o.frame, o.cycle, y, a + kTwoPi)) <= 1e-12);
  }
}

TEST_CASE("M equals half the a-derivative of G", "[variational]") {
  const auto& o = fx::van_der_pol();
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n01;
  for (int i = 0; i < 20; ++i) {
    double a = 0.3 * i;
    CHECK(std::abs(m_curvature(o.frame, o.cycle, eval_phi(o.cycle, a), a) - 1.0) <= 1e-10);
    Vec z = eval_phi(o.cycle, a) + 0.05 * vec2(n01(rng), n01(rng));
    const double h = 1e-5;
    double fd = (g_objective(o.frame, o.cycle, z, a + h) - g_objective(o.frame, o.cycle, z, a - h)) / (2 * h);
    double m = m_curvature(o.frame, o.cycle, z, a);
    CHECK(std::abs(0.5 * fd - m) <= 1e-4 * std::abs(m));
  }
}

TEST_CASE("M stays above one half inside the amax tube", "[variational]") {
  for (const auto* o : {&fx::stuart_landau(), &fx::van_der_pol()}) {
    const double am = amax(o->frame, o->cycle);
    double worst = 1.0;
    for (const auto& s : sample_tube(o->frame, o->cycle, 2000, am, 21))
      worst = std::min(worst, m_curvature(o->frame, o->cycle, s.u, s.theta));
    CHECK(worst >= 0.5);
  }
}

TEST_CASE("global extraction of on-cycle and radial points", "[variational]") {
  const auto& vdp = fx::van_der_pol();
  PhaseState st = extract_phase_global(vdp.frame, vdp.cycle, eval_phi(vdp.cycle, 1.2345), 1e-4);
  CHECK(std::abs(angle_diff(st.beta, 1.2345)) <= 1e-10);
  CHECK(st.amplitude.norm() <= 1e-9);
  CHECK_FALSE(st.tau_triggered);

  const auto& sl = fx::stuart_landau();
  for (double th0 : {0.4, 2.0, 5.9})
    for (double delta : {-0.2, 0.05, 0.3}) {
      PhaseState s = extract_phase_global(sl.frame, sl.cycle, (1 + delta) * vec2(std::cos(th0), std::sin(th0)), 1e-3);
      CHECK(std::abs(angle_diff(s.beta, th0)) <= 1e-8);
    }
}

TEST_CASE("states far from every tube are degenerate", "[variational]") {
  const auto& sl = fx::stuart_landau();
  CHECK(fx::code_of([&] { extract_phase_global(sl.frame, sl.cycle, vec2(0, 0), 1e-3); }) ==
        ErrorCode::DegenerateMinimum);
  ExtractOptions quiet;
  quiet.throw_on_degenerate = false;
  CHECK(extract_phase_global(sl.frame, sl.cycle, vec2(0, 0), 1e-3, quiet).tau_triggered);
  CHECK(fx::code_of([&] { extract_phase_global(sl.frame, sl.cycle, vec2(NAN, 0), 1e-3); }) ==
        ErrorCode::NonFiniteInput);
}

TEST_CASE("extracted states satisfy orthogonality and reconstruction", "[variational]") {
  const auto& o = fx::van_der_pol();
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> ang(0, kTwoPi);
  const double eps = 1e-3;
  for (int i = 0; i < 200; ++i) {
    Vec u = eval_phi(o.cycle, ang(rng)) + 0.05 * vec2(n01(rng), n01(rng));
    PhaseState s = extract_phase_global(o.frame, o.cycle, u, eps);
    Vec r = std::sqrt(eps) * s.amplitude;
    CHECK(std::abs(weighted_inner(o.frame, r, eval_phi(o.cycle, s.beta, 1), s.beta)) <= 1e-8);
    CHECK((eval_phi(o.cycle, s.beta) + r - u).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("tracked extraction follows a deterministic rotation", "[variational]") {
  const auto& o = fx::van_der_pol();
  double beta = 0.0;
  double prev = -1;
  for (int k = 1; k <= 400; ++k) {
    double t = 0.05 * k;
    double target = o.cycle.frequency * t;
    PhaseState s = extract_phase_tracked(o.frame, o.cycle, eval_phi(o.cycle, target), beta, 1e-4);
    CHECK(std::abs(s.beta - target) <= 1e-9);
    CHECK(s.beta > prev);
    prev = beta = s.beta;
  }
}

TEST_CASE("tracked and global extraction agree near the cycle", "[variational]") {
  const auto& o = fx::van_der_pol();
  std::mt19937_64 rng(13);
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> ang(0, kTwoPi);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    double th = ang(rng);
    Vec u = eval_phi(o.cycle, th) + 0.03 * vec2(n01(rng), n01(rng));
    PhaseState g = extract_phase_global(o.frame, o.cycle, u, 1e-3);
    PhaseState t = extract_phase_tracked(o.frame, o.cycle, u, g.beta + 0.02, 1e-3);
    worst = std::max(worst, std::abs(angle_diff(g.beta, t.beta)));
  }
  CHECK(worst <= 1e-8);
}

TEST_CASE("tracked extraction never returns a non-stationary point", "[variational]") {
  const auto& o = fx::van_der_pol();
  int converged = 0;
  for (int i = 0; i < 40; ++i) {
    double th = 0.157 * i;
    Vec u = eval_phi(o.cycle, th) + vec2(0.02, -0.01);
    try {
      PhaseState s = extract_phase_tracked(o.frame, o.cycle, u, th + std::numbers::pi, 1e-3);
      CHECK(std::abs(g_objective(o.frame, o.cycle, u, s.beta)) <= 1e-10);
      ++converged;
    } catch (const Error& e) {
      CHECK((e.code() == ErrorCode::NewtonDivergence || e.code() == ErrorCode::DegenerateMinimum));
    }
  }
  CHECK(converged > 0);
}

TEST_CASE("extraction is equivariant under a phase-origin shift", "[variational]") {
  const auto& o = fx::van_der_pol();
  const int k = 19;
  LimitCycle c2 = o.cycle.shifted(k);
  FloquetFrame f2 = shift_frame(o.frame, k);
  const double shift = k * kTwoPi / o.cycle.n_grid();
  for (double th : {0.3, 2.5, 4.4}) {
    Vec u = eval_phi(o.cycle, th) + vec2(0.03, 0.02);
    double b1 = extract_phase_global(o.frame, o.cycle, u, 1e-3).beta;
    double b2 = extract_phase_global(f2, c2, u, 1e-3).beta;
    CHECK(std::abs(angle_diff(b1 - shift, b2)) <= 1e-8);
  }
}

TEST_CASE("phase shift is first order in the weighted tangent coefficient", "[variational]") {
  const double eps = 1e-6;
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n01;
  for (const auto* o : {&fx::stuart_landau(), &fx::van_der_pol()}) {
    for (int i = 0; i < 50; ++i) {
      double th = 0.12 * i + 0.05;
      Vec v = vec2(n01(rng), n01(rng));
      v /= v.norm();
      Vec u = eval_phi(o->cycle, th) + std::sqrt(eps) * v;
      double beta = extract_phase_global(o->frame, o->cycle, u, eps).beta;
      double lin = std::sqrt(eps) * weighted_inner(o->frame, v, eval_phi(o->cycle, th, 1), th);
      CHECK(std::abs(angle_diff(beta, th) - lin) <= 10 * eps);
    }
  }
}
