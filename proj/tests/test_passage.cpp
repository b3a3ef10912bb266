#include "fixtures.hpp"

using namespace varphase;
using fx::vec2;

namespace {

const fx::Oscillator& silent_sl() {
  static const fx::Oscillator o =
      fx::build(builtin_model("stuart_landau", {{"omega", 1.0}, {"g_scale", 0.0}}), vec2(1.3, 0.0), 6.0);
  return o;
}

// |w(u)|^2 with w = P^{-1}(beta(u)) (u - Phi(beta(u)))
double wnorm2(const fx::Oscillator& o, const Vec& u, double guess) {
  double b = extract_phase_tracked(o.frame, o.cycle, u, guess, 0.0).beta;
  return (o.frame.Pinv.eval(b) * (u - eval_phi(o.cycle, b))).squaredNorm();
}

}  // namespace

TEST_CASE("hitting rate and trivial OU cases", "[passage]") {
  CHECK(hitting_rate_g(1.0) == Catch::Approx(0.2419707245).epsilon(1e-9));
  CHECK(hitting_rate_g(0.0) == 0.0);
  CHECK(ou_hitting_probability(1.0, 0.5, 0.5, 1.0, HittingMethod::monte_carlo) == 1.0);
  CHECK(ou_hitting_probability(1.0, 0.0, 2.0, 0.0, HittingMethod::monte_carlo) == 0.0);
  CHECK(ou_hitting_probability(1.0, 0.0, 2.0, 0.0, HittingMethod::asymptotic) == 0.0);
  CHECK(fx::code_of([] { ou_hitting_probability(0.0, 0.0, 1.0, 1.0, HittingMethod::asymptotic); }) == ErrorCode::BadDecay);
  CHECK(fx::code_of([] { ou_hitting_probability(-1.0, 0.0, 1.0, 1.0, HittingMethod::asymptotic); }) == ErrorCode::BadDecay);
  CHECK(fx::code_of([] { ou_hitting_probability(1.0, 0.0, NAN, 1.0, HittingMethod::asymptotic); }) ==
        ErrorCode::NonFiniteInput);
  double z = 2.0 * 3.0 * 1.5 * 1.5;
  CHECK(ou_hitting_probability(3.0, 0.0, 1.5, 2.0, HittingMethod::asymptotic) ==
        Catch::Approx(1.0 - std::exp(-6.0 * hitting_rate_g(z))).epsilon(1e-12));
}

TEST_CASE("bound is invariant under eps -> 4 eps with doubled thresholds", "[passage]") {
  OuOptions o;
  o.n_paths = 2000;
  for (auto m : {HittingMethod::asymptotic, HittingMethod::monte_carlo}) {
    TheoremBound p = theorem_bound(2.0, 1.3, 0.01, 0.2, 0.05, 3.0, m, o);
    TheoremBound q = theorem_bound(2.0, 1.3, 0.04, 0.4, 0.10, 3.0, m, o);
    CHECK(std::abs(p.x_bar - q.x_bar) <= 1e-10);
    CHECK(std::abs(p.a_bar - q.a_bar) <= 1e-10);
    CHECK(std::abs(p.probability - q.probability) <= 1e-10);
  }
  TheoremBound none = theorem_bound(2.0, 0.0, 0.01, 0.2, 0.0, 3.0, HittingMethod::monte_carlo, o);
  CHECK(none.probability == 0.0);
  CHECK(std::isinf(none.a_bar));
}

TEST_CASE("bridge-corrected OU estimate is stable under step refinement", "[passage]") {
  OuOptions o;
  o.n_paths = 20000;
  o.dt = 1e-2;
  double coarse = ou_hitting_probability(1.0, 0.0, 1.2, 2.0, HittingMethod::monte_carlo, o);
  o.dt = 1e-3;
  double fine = ou_hitting_probability(1.0, 0.0, 1.2, 2.0, HittingMethod::monte_carlo, o);
  o.bridge = false;
  double plain = ou_hitting_probability(1.0, 0.0, 1.2, 2.0, HittingMethod::monte_carlo, o);
  double se = std::sqrt(fine * (1 - fine) / o.n_paths);
  CHECK(std::abs(coarse - fine) <= 4 * std::sqrt(2.0) * se);
  CHECK(plain <= fine);
}

TEST_CASE("OU estimate does not depend on the thread count", "[passage]") {
  OuOptions o;
  o.n_paths = 3000;
  o.threads = 1;
  double one = ou_hitting_probability(2.0, 0.1, 1.0, 1.0, HittingMethod::monte_carlo, o);
  o.threads = 3;
  CHECK(ou_hitting_probability(2.0, 0.1, 1.0, 1.0, HittingMethod::monte_carlo, o) == one);
}

TEST_CASE("lambda scaling", "[passage]") {
  const auto& o = fx::stuart_landau();
  CHECK(compute_lambda(silent_sl().model, silent_sl().frame, silent_sl().cycle) == 0.0);
  auto loud = builtin_model("stuart_landau", {{"omega", 1.0}, {"g_scale", 2.0}});
  double l1 = compute_lambda(o.model, o.frame, o.cycle);
  double l2 = compute_lambda(loud, o.frame, o.cycle);
  CHECK(l2 == Catch::Approx(4.0 * l1).epsilon(1e-12));
  // at w = 0 the projected diffusion of a unit isotropic noise has norm 1
  LambdaEstimate e = lambda_estimate(o.model, o.frame, o.cycle);
  CHECK(e.lambda_gp >= 1.0 - 1e-9);
  CHECK(e.lambda >= max_eigenvalue_symmetric(o.model.covariance) * (1.0 - 1e-9));
  CHECK(e.n_skipped == 0);
}

TEST_CASE("tube radius", "[passage]") {
  const auto& o = fx::stuart_landau();
  CHECK(std::abs(amax(o.frame, o.cycle) - 0.5) <= 1e-6);

  // constant P = I frame: amax is 1 / (2 sup |Phi''|), so doubling the orbit halves it
  const int n = o.cycle.n_grid();
  std::vector<Vec> s1(n), s2(n);
  std::vector<Mat> eye(n, Mat::Identity(2, 2));
  for (int j = 0; j < n; ++j) {
    s1[j] = o.cycle.phi.sample_vec(j);
    s2[j] = 2.0 * s1[j];
  }
  LimitCycle c1 = make_limit_cycle(o.cycle.period, s1), c2 = make_limit_cycle(o.cycle.period, s2);
  FloquetFrame f1 = make_frame(c1, o.frame.exponents, eye), f2 = make_frame(c2, o.frame.exponents, eye);
  CHECK(amax(f2, c2) == Catch::Approx(0.5 * amax(f1, c1)).epsilon(1e-10));

  for (const auto* osc : {&fx::stuart_landau(), &fx::van_der_pol()}) {
    double r = amax(osc->frame, osc->cycle);
    double worst = 1e300;
    for (const auto& t : sample_tube(osc->frame, osc->cycle, 10000, r, 8))
      worst = std::min(worst, m_curvature(osc->frame, osc->cycle, t.u, t.theta));
    CHECK(worst >= 0.5);
  }
}

TEST_CASE("amplitude drift on the stuart-landau cycle", "[passage]") {
  const auto& o = fx::stuart_landau();
  const double eps = 0.01;
  Gamma2 on = gamma2_eval(o.model, o.frame, o.cycle, eval_phi(o.cycle, 0.7), 0.7, eps);
  CHECK(std::abs(on.gamma2_1) <= 1e-12);
  CHECK(on.trace_term == Catch::Approx(0.5).epsilon(1e-9));
  CHECK(on.gamma2 == Catch::Approx(0.5 * eps).epsilon(1e-9));

  // radial offset s: gamma2_1 = -s^3 (s + 3), gamma2_2 = (2 rho - 1) / (2 rho), rho = 1 + s
  for (double s : {-0.3, -0.1, 0.05, 0.2, 0.4}) {
    double th = 2.1, rho = 1.0 + s;
    Gamma2 g = gamma2_eval(o.model, o.frame, o.cycle, rho * eval_phi(o.cycle, th), th, eps);
    CHECK(std::abs(g.gamma2_1 + s * s * s * (s + 3.0)) <= 1e-9);
    CHECK(std::abs(g.gamma2_2 - (2.0 * rho - 1.0) / (2.0 * rho)) <= 1e-9);
    CHECK(std::abs(g.w.norm() - std::abs(s)) <= 1e-12);
  }
  CHECK(fx::code_of([&] { gamma2_eval(o.model, o.frame, o.cycle, vec2(0, 0), 0.0, eps); }) ==
        ErrorCode::DegenerateMinimum);
}

TEST_CASE("amplitude drift matches the generator of |w|^2", "[passage]") {
  // gamma2 = L f / 2 - <w, S w> with f = |w(u)|^2, L the generator; derivatives by central differences
  const auto& o = fx::van_der_pol();
  const double eps = 0.01, h = 1e-3;
  for (const auto& t : sample_tube(o.frame, o.cycle, 6, amax(o.frame, o.cycle), 3)) {
    Gamma2 g = gamma2_eval(o.model, o.frame, o.cycle, t.u, t.theta, eps);
    auto f = [&](const Vec& u) { return wnorm2(o, u, t.theta); };
    Vec grad(2);
    Mat hess(2, 2);
    for (int i = 0; i < 2; ++i) {
      Vec ei = Vec::Zero(2);
      ei(i) = h;
      grad(i) = (f(t.u + ei) - f(t.u - ei)) / (2 * h);
      for (int j = 0; j < 2; ++j) {
        Vec ej = Vec::Zero(2);
        ej(j) = h;
        hess(i, j) = (f(t.u + ei + ej) - f(t.u + ei - ej) - f(t.u - ei + ej) + f(t.u - ei - ej)) / (4 * h * h);
      }
    }
    Mat gm = o.model.noise_map(t.u);
    Mat diff = gm * o.model.covariance * gm.transpose();
    double lf = grad.dot(o.model.drift(t.u)) + 0.5 * eps * (diff * hess).trace();
    double oracle = 0.5 * lf - g.w.dot(o.frame.S() * g.w);
    CHECK(std::abs(g.gamma2 - oracle) <= 1e-4 * std::max(1.0, std::abs(oracle)));
  }
}

TEST_CASE("envelope constants", "[passage]") {
  const auto& q = silent_sl();
  ConstantsFit fit = estimate_constants(q.model, q.frame, q.cycle, 0.01, 2000, 1);
  CHECK(fit.c1 <= 1e-10);  // zero up to rounding in the cubic fit
  CHECK(fit.c2 > 0.0);
  int violations = 0;
  for (const auto& t : sample_tube(q.frame, q.cycle, 10000, fit.radius, 99)) {
    double wn = t.w.norm();
    double g = gamma2_eval(q.model, q.frame, q.cycle, t.u, t.theta, 0.01).gamma2;
    violations += std::abs(g) > fit.c1 * 0.01 * wn + fit.c2 * wn * wn * wn;
  }
  CHECK(violations == 0);

  const auto silent_vdp = builtin_model("van_der_pol", {{"mu", 1.0}, {"g_scale", 0.0}});
  const auto& v = fx::van_der_pol();
  for (auto [m, f, c] : {std::tuple{&q.model, &q.frame, &q.cycle}, std::tuple{&silent_vdp, &v.frame, &v.cycle}}) {
    ConstantsFit full = estimate_constants(*m, *f, *c, 0.01, 1000, 4);
    ConstantsFit half = estimate_constants(*m, *f, *c, 0.01, 1000, 4, 0.5 * full.radius);
    CHECK(half.c2 <= full.c2);
  }
  CHECK(fx::code_of([&] { estimate_constants(q.model, q.frame, q.cycle, 0.01, 50); }) == ErrorCode::InsufficientSamples);

  // pure linear envelope in eps
  std::vector<EnvelopeSample> lin;
  for (int i = 1; i <= 50; ++i) lin.push_back({0.01 * i, 0.03 * 0.01 * i});
  auto [c1, c2] = fit_envelope(lin, 0.01);
  CHECK(c1 == Catch::Approx(3.0));
  CHECK(c2 == 0.0);
}

TEST_CASE("admissible threshold interval", "[passage]") {
  // C1 eps + C2 a^2 <= b a / 2 with b = 2, C1 = 1, C2 = 2, eps = 0.01: roots of 2a^2 - a + 0.01
  const double lo = (1.0 - std::sqrt(1.0 - 0.08)) / 4.0, hi = (1.0 + std::sqrt(1.0 - 0.08)) / 4.0;
  CHECK(interval_check(0.2, 0.01, 2.0, 1.0, 2.0, 0.5) == IntervalStatus::inside);
  CHECK(interval_check(0.999 * hi, 0.01, 2.0, 1.0, 2.0, 0.5) == IntervalStatus::inside);
  CHECK(interval_check(1.001 * hi, 0.01, 2.0, 1.0, 2.0, 0.5) == IntervalStatus::outside);
  CHECK(interval_check(0.4, 0.01, 2.0, 1.0, 2.0, 0.3) == IntervalStatus::outside);
  // below sqrt(eps / b) = 0.0707 the useful-range flag wins even though lo = 0.0102 is admissible
  CHECK(lo < 0.05);
  CHECK(interval_check(0.05, 0.01, 2.0, 1.0, 2.0, 0.5) == IntervalStatus::below_useful_range);
  IntervalDetails d = interval_details(0.05, 0.01, 2.0, 1.0, 2.0, 0.5);
  CHECK(d.in_interval());
  CHECK(d.below_useful);
  CHECK(std::string(interval_status_name(IntervalStatus::below_useful_range)) == "below_useful_range");
}

TEST_CASE("wilson interval", "[passage]") {
  for (int n : {10, 100, 1000}) {
    auto [l0, h0] = wilson_interval(0, n);
    CHECK(l0 == 0.0);
    const double z2 = 1.959963984540054 * 1.959963984540054;
    CHECK(h0 == Catch::Approx(z2 / (n + z2)).epsilon(1e-12));
    for (int k : {1, n / 3, n - 1}) {
      auto [l, h] = wilson_interval(k, n);
      double p = double(k) / n;
      CHECK(l < p);
      CHECK(p < h);
      auto [l2, h2] = wilson_interval(n - k, n);
      CHECK(l2 == Catch::Approx(1.0 - h).epsilon(1e-12));
      CHECK(h2 == Catch::Approx(1.0 - l).epsilon(1e-12));
    }
  }
  CHECK(fx::code_of([] { wilson_interval(0, 0); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("escape probability with negligible noise", "[passage]") {
  const auto& o = fx::stuart_landau();
  EscapeConfig cfg;
  cfg.a = 0.2;
  cfg.T = 1.0;
  cfg.eps = 1e-8;
  cfg.n_paths = 100;
  cfg.dt = 1e-2;
  cfg.ou_paths = 500;
  cfg.constant_samples = 500;
  EscapeReport r = escape_probability_mc(o.model, o.frame, o.cycle, cfg);
  CHECK(r.escapes == 0);
  CHECK(r.p_hat == 0.0);
  CHECK(r.ci_high <= 3.85 / r.n_paths);
  CHECK(r.failures == 0);
  CHECK(r.tau_before_escape == 0);
  CHECK(r.min_m_in_tube >= 0.5);
  CHECK(r.b == Catch::Approx(2.0).epsilon(1e-6));
  CHECK(r.bound == 0.0);
  EscapeReport again = escape_probability_mc(o.model, o.frame, o.cycle, cfg);
  CHECK(again.bound_asymptotic == r.bound_asymptotic);
}

TEST_CASE("thresholds inside the noise floor are crossed", "[passage]") {
  const auto& o = fx::stuart_landau();
  EscapeConfig cfg;
  cfg.a = 0.05;  // sqrt(eps / b) = 0.0707
  cfg.T = 5.0;
  cfg.eps = 0.01;
  cfg.n_paths = 100;
  cfg.dt = 1e-2;
  cfg.ou_paths = 500;
  cfg.constant_samples = 500;
  EscapeReport r = escape_probability_mc(o.model, o.frame, o.cycle, cfg);
  CHECK(r.p_hat >= 0.9);
  CHECK(r.interval_status == IntervalStatus::below_useful_range);
  cfg.x = 0.03;
  CHECK(fx::code_of([&] { escape_probability_mc(o.model, o.frame, o.cycle, cfg); }) == ErrorCode::InvalidArgument);
  cfg.x = 0.0;
  cfg.dt = 0.03;
  CHECK(fx::code_of([&] { escape_probability_mc(o.model, o.frame, o.cycle, cfg); }) == ErrorCode::InvalidArgument);
}
