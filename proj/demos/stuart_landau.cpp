// Stuart-Landau walkthrough: cycle, Floquet frame, one noisy path with its variational phase,
// and the escape-bound ingredients.
#include <cstdio>

#include "varphase/varphase.hpp"

using namespace varphase;

int main() {
  const OscillatorModel model = builtin_model("stuart_landau", {{"omega", 1.0}});
  Vec guess(2);
  guess << 1.3, 0.0;
  const LimitCycle cyc = find_limit_cycle(model, guess, 6.0);
  const FloquetFrame frame = floquet_decompose(model, cyc);
  std::printf("period %.12f  exponents %.3e %.6f\n", cyc.period, frame.exponents(0), frame.exponents(1));

  const double eps = 1e-3, dt = cyc.period / 1000, T = 5 * cyc.period;
  const NoisePath noise = sample_noise(model.covariance, dt, 5000, 42, 0);
  const TrajectoryRecord full = simulate_full(model, cyc.phi.eval_vec(0.0), eps, dt, T, noise);
  double beta = 0.0;
  for (std::size_t k = 1; k < full.states.size(); ++k) {
    beta = extract_phase_tracked(frame, cyc, full.states[k], beta, eps).beta;
    if (k % 1000 == 0) std::printf("t=%7.3f  beta - omega t = %+.5f\n", full.times[k], beta - cyc.frequency * full.times[k]);
  }

  const double am = amax(frame, cyc), lam = compute_lambda(model, frame, cyc);
  std::printf("amax %.4f  lambda %.4f  b %.4f\n", am, lam, frame.decay_bound);
  const double a = 0.3, abar = a / (2.0 * std::sqrt(lam * 0.01));
  std::printf("a=%.2f eps=0.01: abar %.3f, asymptotic bound over T=20: %.4f\n", a, abar,
              ou_hitting_probability(frame.decay_bound, 0.0, abar, 20.0, HittingMethod::asymptotic));
}
