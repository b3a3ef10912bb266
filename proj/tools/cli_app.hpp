#pragma once

// Config-driven front end: cycle, floquet, simulate, extract, escape, validate.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "varphase/varphase.hpp"

namespace varphase::cli {

using json = nlohmann::json;
using Flat = std::map<std::string, json>;

// ---------------------------------------------------------------------------------------------
// Config: nested JSON flattened to dotted keys, checked against a fixed schema

enum class Kind { number, integer, string, vector };

inline const std::map<std::string, Kind>& schema() {
  static const std::map<std::string, Kind> s = {
      {"model.name", Kind::string},       {"model.guess", Kind::vector},
      {"model.period_guess", Kind::number}, {"epsilon", Kind::number},
      {"dt", Kind::number},               {"T", Kind::number},
      {"n_paths", Kind::integer},         {"seed", Kind::integer},
      {"threads", Kind::integer},         {"cycle.n_grid", Kind::integer},
      {"cycle.output", Kind::string},     {"floquet.output", Kind::string},
      {"simulate.kind", Kind::string},    {"simulate.output", Kind::string},
      {"simulate.theta0", Kind::number},  {"simulate.u0", Kind::vector},
      {"simulate.record_stride", Kind::integer}, {"extract.input_path", Kind::string},
      {"extract.output", Kind::string},   {"escape.a", Kind::number},
      {"escape.x", Kind::number},         {"escape.rho", Kind::number},
      {"escape.ou_paths", Kind::integer}, {"escape.theta0", Kind::number},
      {"escape.output", Kind::string},    {"validate.output", Kind::string},
  };
  return s;
}

inline void flatten_into(const json& j, const std::string& prefix, Flat& out) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it)
      flatten_into(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
    return;
  }
  out[prefix] = j;
}

inline Flat flatten(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ConfigParse, "config root must be an object");
  Flat out;
  flatten_into(j, "", out);
  return out;
}

inline void check_key(const std::string& key, const json& v) {
  const std::string params = "model.params.";
  Kind kind;
  if (key.rfind(params, 0) == 0 && key.size() > params.size()) {
    kind = Kind::number;
  } else {
    auto it = schema().find(key);
    if (it == schema().end()) throw Error(ErrorCode::ConfigParse, "unknown config key '" + key + "'");
    kind = it->second;
  }
  bool ok = false;
  switch (kind) {
    case Kind::number: ok = v.is_number() && std::isfinite(v.get<double>()); break;
    case Kind::integer: ok = v.is_number_integer(); break;
    case Kind::string: ok = v.is_string(); break;
    case Kind::vector:
      ok = v.is_array() && !v.empty();
      for (const auto& e : v) ok = ok && e.is_number() && std::isfinite(e.get<double>());
      break;
  }
  if (!ok) throw Error(ErrorCode::ConfigParse, "config key '" + key + "' has the wrong type");
}

inline Flat parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ConfigParse, std::string("malformed JSON: ") + e.what());
  }
  return flatten(j);
}

/// --set key=value; the value is read as JSON when it parses, else as a bare string.
inline void apply_override(Flat& cfg, const std::string& assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw Error(ErrorCode::ConfigParse, "override must be key=value: " + assignment);
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  json v = json::parse(text, nullptr, false);
  if (v.is_discarded()) v = text;
  cfg[key] = v;
}

inline void validate_config(const Flat& cfg) {
  for (const auto& [k, v] : cfg) check_key(k, v);
}

inline std::string canonical(const Flat& cfg) {
  std::string s;
  for (const auto& [k, v] : cfg) s += k + "=" + v.dump() + "\n";
  return s;
}

/// FNV-1a 64 of the canonical (sorted, flattened) config, as 16 hex digits.
inline std::string config_hash(const Flat& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : canonical(cfg)) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline bool has(const Flat& c, const std::string& k) { return c.count(k) > 0; }

inline const json& need(const Flat& c, const std::string& k) {
  auto it = c.find(k);
  if (it == c.end()) throw Error(ErrorCode::ConfigParse, "missing required key '" + k + "'");
  return it->second;
}

inline double positive(const Flat& c, const std::string& k) {
  double v = need(c, k).get<double>();
  if (!(v > 0.0)) throw Error(ErrorCode::ConfigParse, "'" + k + "' must be > 0");
  return v;
}

inline double number_or(const Flat& c, const std::string& k, double fallback) {
  return has(c, k) ? c.at(k).get<double>() : fallback;
}

inline long integer_or(const Flat& c, const std::string& k, long fallback) {
  return has(c, k) ? c.at(k).get<long>() : fallback;
}

inline std::string string_or(const Flat& c, const std::string& k, const std::string& fallback) {
  return has(c, k) ? c.at(k).get<std::string>() : fallback;
}

inline Vec vector_of(const json& j) {
  Vec v(static_cast<int>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<int>(i)) = j[i].get<double>();
  return v;
}

// ---------------------------------------------------------------------------------------------
// Output helpers

inline std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// Temp file + rename so readers never see a partial file.
inline void write_atomic(const std::string& path, const std::string& content) {
  const std::filesystem::path target(path);
  if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorCode::InvalidArgument, "cannot write '" + tmp + "'");
    f << content;
    if (!f.flush()) throw Error(ErrorCode::InvalidArgument, "write failed for '" + tmp + "'");
  }
  std::filesystem::rename(tmp, target);
}

struct Context {
  Flat cfg;
  std::string hash;
  int threads = 0;

  std::string csv_header(const std::string& command) const {
    return "# varphase " + std::string(VARPHASE_VERSION) + " command=" + command + " config_hash=" + hash + "\n";
  }
  json meta(const std::string& command) const {
    return {{"command", command}, {"version", VARPHASE_VERSION}, {"config_hash", hash}};
  }
};

// ---------------------------------------------------------------------------------------------
// Pipeline pieces

inline OscillatorModel model_from(const Flat& c) {
  const std::string name = need(c, "model.name").get<std::string>();
  ParamMap params;
  const std::string prefix = "model.params.";
  for (const auto& [k, v] : c)
    if (k.rfind(prefix, 0) == 0) params[k.substr(prefix.size())] = v.get<double>();
  return builtin_model(name, params);
}

inline LimitCycle cycle_from(const Flat& c, const OscillatorModel& model) {
  Vec guess;
  double period;
  if (model.name == "stuart_landau") {
    guess = Vec(2);
    guess << 1.3, 0.0;
    period = kTwoPi / c.at("model.params.omega").get<double>();
  } else {
    guess = Vec(2);
    guess << 2.0, 0.0;
    period = kTwoPi * std::max(1.0, 0.3 * c.at("model.params.mu").get<double>());
  }
  if (has(c, "model.guess")) guess = vector_of(c.at("model.guess"));
  if (guess.size() != model.dim) throw Error(ErrorCode::ConfigParse, "'model.guess' must have one entry per state");
  period = number_or(c, "model.period_guess", period);
  CycleOptions opt;
  opt.n_grid = static_cast<int>(integer_or(c, "cycle.n_grid", 256));
  return find_limit_cycle(model, guess, period, opt);
}

inline json diagnostics_json(const FrameDiagnostics& d) {
  return {{"nu1", d.nu1},
          {"tangent_error", d.tangent_error},
          {"metric_error", d.metric_error},
          {"floquet_residual", d.floquet_residual},
          {"prc_normalization", d.prc_normalization},
          {"adjoint_residual", d.adjoint_residual},
          {"min_weight_eigenvalue", d.min_weight_eigenvalue}};
}

inline json cmd_cycle(const Context& ctx) {
  const OscillatorModel model = model_from(ctx.cfg);
  const LimitCycle cyc = cycle_from(ctx.cfg, model);
  const std::string out = string_or(ctx.cfg, "cycle.output", "cycle.csv");
  std::string csv = ctx.csv_header("cycle");
  csv += "# period=" + fmt(cyc.period) + "\ntheta";
  for (int i = 0; i < cyc.dim; ++i) csv += ",u" + std::to_string(i);
  csv += "\n";
  for (int j = 0; j < cyc.n_grid(); ++j) {
    csv += fmt(PeriodicTable::node(cyc.n_grid(), j));
    Vec u = cyc.phi.sample_vec(j);
    for (int i = 0; i < cyc.dim; ++i) csv += "," + fmt(u(i));
    csv += "\n";
  }
  write_atomic(out, csv);
  json s = ctx.meta("cycle");
  s["period"] = cyc.period;
  s["frequency"] = cyc.frequency;
  s["residual"] = cycle_residual(model, cyc);
  s["n_grid"] = cyc.n_grid();
  s["output"] = out;
  return s;
}

inline json cmd_floquet(const Context& ctx) {
  const OscillatorModel model = model_from(ctx.cfg);
  const LimitCycle cyc = cycle_from(ctx.cfg, model);
  const FloquetFrame frame = floquet_decompose(model, cyc);
  const FrameDiagnostics diag = frame_diagnostics(model, cyc, frame);
  json report = ctx.meta("floquet");
  report["period"] = cyc.period;
  report["exponents"] = std::vector<double>(frame.exponents.data(), frame.exponents.data() + frame.exponents.size());
  report["multipliers"] =
      std::vector<double>(frame.multipliers.data(), frame.multipliers.data() + frame.multipliers.size());
  report["decay_bound"] = frame.decay_bound;
  report["eigenbasis_condition"] = frame.eigenbasis_condition;
  report["amax"] = amax(frame, cyc);
  report["lambda"] = compute_lambda(model, frame, cyc);
  report["diagnostics"] = diagnostics_json(diag);
  json prc = json::array();
  for (int j = 0; j < cyc.n_grid(); ++j) {
    Vec r = frame.R.sample_vec(j);
    json row = {PeriodicTable::node(cyc.n_grid(), j)};
    for (int i = 0; i < r.size(); ++i) row.push_back(r(i));
    prc.push_back(row);
  }
  report["prc"] = prc;
  const std::string out = string_or(ctx.cfg, "floquet.output", "floquet.json");
  write_atomic(out, report.dump(2) + "\n");
  json s = ctx.meta("floquet");
  s["exponents"] = report["exponents"];
  s["decay_bound"] = frame.decay_bound;
  s["output"] = out;
  return s;
}

inline double quantile(std::vector<double> x, double q) {
  std::sort(x.begin(), x.end());
  const double pos = q * static_cast<double>(x.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (pos - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

/// Final phase deviation beta_T - theta0 - omega0 T over `paths` independent noise streams.
inline json simulate_stats(const Context& ctx, const std::string& kind, const OscillatorModel& model,
                           const LimitCycle& cyc, const FloquetFrame& frame, double eps, double dt, double T,
                           double theta0, const Vec& u0, std::uint64_t seed, int paths) {
  const int n = static_cast<int>(std::lround(T / dt));
  std::vector<double> dev(paths, 0.0);
  std::vector<char> tau(paths, 0);
  parallel_for(
      paths,
      [&](int p) {
        const NoisePath noise = sample_noise(model.covariance, dt, n, seed, static_cast<std::uint64_t>(p));
        double beta_t = 0.0;
        if (kind == "full") {
          const TrajectoryRecord rec = simulate_full(model, u0, eps, dt, T, noise);
          ExtractOptions xo;
          xo.throw_on_degenerate = false;
          // the global minimizer lives in [0, 2 pi); start from the branch nearest theta0
          double beta = extract_phase_global(frame, cyc, u0, eps, xo).beta;
          beta = theta0 + std::remainder(beta - theta0, kTwoPi);
          for (std::size_t k = 1; k < rec.states.size(); ++k) {
            PhaseState st = extract_phase_tracked(frame, cyc, rec.states[k], beta, eps, xo);
            beta = st.beta;
            if (st.tau_triggered) {
              tau[p] = 1;
              break;
            }
          }
          beta_t = beta;
        } else {
          TrajectoryRecord rec;
          if (kind == "coupled") rec = simulate_exact_coupled(frame, cyc, model, u0, eps, dt, T, noise);
          else if (kind == "reduced") rec = simulate_reduced_phase(frame, cyc, model, theta0, eps, dt, T, noise);
          else rec = simulate_isochronal(frame, cyc, model, theta0, eps, dt, T, noise);
          tau[p] = rec.tau_index.has_value();
          beta_t = rec.phase.back();
        }
        dev[p] = beta_t - theta0 - cyc.frequency * T;
      },
      ctx.threads);
  // paths stopped at tau have no phase at T; moments use the rest
  std::vector<double> kept;
  for (int p = 0; p < paths; ++p)
    if (!tau[p]) kept.push_back(dev[p]);
  const int used = static_cast<int>(kept.size());
  double mean = 0.0, var = 0.0;
  for (double d : kept) mean += d / used;
  for (double d : kept) var += (d - mean) * (d - mean);
  var = used > 1 ? var / (used - 1) : 0.0;
  json q;
  if (used > 0)
    for (double level : {0.05, 0.25, 0.5, 0.75, 0.95}) q[fmt(level)] = quantile(kept, level);
  json s = ctx.meta("simulate");
  s["kind"] = kind;
  s["n_paths"] = paths;
  s["n_used"] = used;
  s["mean"] = mean;
  s["variance"] = var;
  s["quantiles"] = q;
  s["tau_incidence"] = static_cast<double>(paths - used) / paths;
  return s;
}

inline json cmd_simulate(const Context& ctx, int paths = 0) {
  const Flat& c = ctx.cfg;
  const double eps = need(c, "epsilon").get<double>();
  if (eps < 0.0) throw Error(ErrorCode::ConfigParse, "'epsilon' must be >= 0");
  const double dt = positive(c, "dt"), T = positive(c, "T");
  const std::string kind = string_or(c, "simulate.kind", "full");
  static const std::set<std::string> kinds = {"full", "coupled", "reduced", "isochronal"};
  if (!kinds.count(kind)) throw Error(ErrorCode::ConfigParse, "simulate.kind must be full, coupled, reduced or isochronal");
  const auto seed = static_cast<std::uint64_t>(integer_or(c, "seed", 0));
  const OscillatorModel model = model_from(c);
  const LimitCycle cyc = cycle_from(c, model);
  const FloquetFrame frame = floquet_decompose(model, cyc);
  const long n = std::lround(T / dt);
  SimOptions so;
  so.record_stride = static_cast<int>(integer_or(c, "simulate.record_stride", 1));
  if (so.record_stride < 1) throw Error(ErrorCode::ConfigParse, "'simulate.record_stride' must be >= 1");
  const double theta0 = number_or(c, "simulate.theta0", 0.0);
  Vec u0 = has(c, "simulate.u0") ? vector_of(c.at("simulate.u0")) : cyc.phi.eval_vec(theta0);
  if (u0.size() != model.dim) throw Error(ErrorCode::ConfigParse, "'simulate.u0' must have one entry per state");

  if (paths > 0) {
    json stats = simulate_stats(ctx, kind, model, cyc, frame, eps, dt, T, theta0, u0, seed, paths);
    const std::string out = string_or(c, "simulate.output", "stats.json");
    write_atomic(out, stats.dump(2) + "\n");
    json s = stats;
    s.erase("quantiles");
    s["output"] = out;
    return s;
  }

  const NoisePath noise = sample_noise(model.covariance, dt, static_cast<int>(n), seed, 0);
  TrajectoryRecord rec;
  if (kind == "full") rec = simulate_full(model, u0, eps, dt, T, noise, so);
  else if (kind == "coupled") rec = simulate_exact_coupled(frame, cyc, model, u0, eps, dt, T, noise, so);
  else if (kind == "reduced") rec = simulate_reduced_phase(frame, cyc, model, theta0, eps, dt, T, noise, so);
  else rec = simulate_isochronal(frame, cyc, model, theta0, eps, dt, T, noise, so);

  std::string csv = ctx.csv_header("simulate") + "# kind=" + kind + "\nt";
  if (kind == "full")
    for (int i = 0; i < model.dim; ++i) csv += ",u" + std::to_string(i);
  else
    csv += ",beta";
  if (kind == "coupled") {
    for (int i = 0; i < model.dim; ++i) csv += ",v" + std::to_string(i);
    csv += ",M";
  }
  csv += "\n";
  for (std::size_t k = 0; k < rec.times.size(); ++k) {
    csv += fmt(rec.times[k]);
    if (kind == "full") {
      for (int i = 0; i < model.dim; ++i) csv += "," + fmt(rec.states[k](i));
    } else {
      csv += "," + fmt(rec.phase[k]);
    }
    if (kind == "coupled") {
      for (int i = 0; i < model.dim; ++i) csv += "," + fmt(rec.amplitude[k](i));
      csv += "," + fmt(rec.m_value[k]);
    }
    csv += "\n";
  }
  const std::string out = string_or(c, "simulate.output", "trajectory.csv");
  write_atomic(out, csv);
  json s = ctx.meta("simulate");
  s["kind"] = kind;
  s["rows"] = rec.times.size();
  s["stopped_at_tau"] = rec.tau_index.has_value();
  s["output"] = out;
  return s;
}

/// Rows of numbers from a CSV; '#' lines and a non-numeric header line are skipped.
inline std::vector<std::vector<double>> read_numeric_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::ConfigParse, "cannot open extract.input_path '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (used != cell.size()) numeric = false;
      } catch (const std::exception&) {
        numeric = false;
      }
    }
    if (!numeric) {
      if (rows.empty()) continue;  // column header
      throw Error(ErrorCode::ConfigParse, "non-numeric row in '" + path + "'");
    }
    rows.push_back(row);
  }
  return rows;
}

/// Input columns t,u0..u{d-1} (as written by `simulate` with kind=full). Extraction stops at the
/// first row where M drops to the tau threshold; that row carries tau_flag = 1.
inline json cmd_extract(const Context& ctx) {
  const Flat& c = ctx.cfg;
  const std::string in = need(c, "extract.input_path").get<std::string>();
  const double eps = need(c, "epsilon").get<double>();
  if (eps < 0.0) throw Error(ErrorCode::ConfigParse, "'epsilon' must be >= 0");
  const OscillatorModel model = model_from(c);
  const auto rows = read_numeric_csv(in);
  const LimitCycle cyc = cycle_from(c, model);
  const FloquetFrame frame = floquet_decompose(model, cyc);
  std::string csv = ctx.csv_header("extract") + "t,beta";
  for (int i = 0; i < model.dim; ++i) csv += ",v" + std::to_string(i);
  csv += ",M,tau_flag\n";
  ExtractOptions xo;
  xo.throw_on_degenerate = false;
  double beta = 0.0;
  std::size_t written = 0;
  bool tau = false;
  for (std::size_t k = 0; k < rows.size() && !tau; ++k) {
    if (static_cast<int>(rows[k].size()) != model.dim + 1)
      throw Error(ErrorCode::ConfigParse, "row " + std::to_string(k) + " must hold t and " + std::to_string(model.dim) +
                                              " state entries");
    Vec u(model.dim);
    for (int i = 0; i < model.dim; ++i) u(i) = rows[k][i + 1];
    PhaseState st =
        k == 0 ? extract_phase_global(frame, cyc, u, eps, xo) : extract_phase_tracked(frame, cyc, u, beta, eps, xo);
    beta = st.beta;
    tau = st.tau_triggered;
    csv += fmt(rows[k][0]) + "," + fmt(st.beta);
    for (int i = 0; i < model.dim; ++i) csv += "," + fmt(st.amplitude(i));
    csv += "," + fmt(st.m_value) + (tau ? ",1\n" : ",0\n");
    ++written;
  }
  const std::string out = string_or(c, "extract.output", "phase.csv");
  write_atomic(out, csv);
  json s = ctx.meta("extract");
  s["rows"] = written;
  s["stopped_at_tau"] = tau;
  s["output"] = out;
  return s;
}

inline json cmd_escape(const Context& ctx) {
  const Flat& c = ctx.cfg;
  EscapeConfig e;
  e.eps = positive(c, "epsilon");
  e.dt = positive(c, "dt");
  e.T = positive(c, "T");
  e.a = positive(c, "escape.a");
  e.n_paths = static_cast<int>(need(c, "n_paths").get<long>());
  if (e.n_paths <= 0) throw Error(ErrorCode::ConfigParse, "'n_paths' must be > 0");
  e.seed = static_cast<std::uint64_t>(integer_or(c, "seed", 0));
  e.x = number_or(c, "escape.x", 0.0);
  e.rho = number_or(c, "escape.rho", 0.5);
  e.theta0 = number_or(c, "escape.theta0", 0.0);
  e.ou_paths = static_cast<int>(integer_or(c, "escape.ou_paths", 100000));
  e.threads = ctx.threads;
  const OscillatorModel model = model_from(c);
  const LimitCycle cyc = cycle_from(c, model);
  const FloquetFrame frame = floquet_decompose(model, cyc);
  const EscapeReport r = escape_probability_mc(model, frame, cyc, e);
  json report = ctx.meta("escape");
  report.update({{"p_hat", r.p_hat},
                 {"ci_low", r.ci_low},
                 {"ci_high", r.ci_high},
                 {"se", r.se},
                 {"bound", r.bound},
                 {"bound_asymptotic", r.bound_asymptotic},
                 {"lambda", r.lambda},
                 {"a_bar", r.a_bar},
                 {"x_bar", r.x_bar},
                 {"b", r.b},
                 {"interval_status", interval_status_name(r.interval_status)},
                 {"c1", r.c1},
                 {"c2", r.c2},
                 {"amax", r.a_max},
                 {"failures", r.failures},
                 {"tau_before_escape", r.tau_before_escape},
                 {"escape_detection", "discrete time grid"},
                 {"n_paths", r.n_paths},
                 {"dt", r.dt},
                 {"seed", r.seed}});
  const std::string out = string_or(c, "escape.output", "escape.json");
  write_atomic(out, report.dump(2) + "\n");
  json s = ctx.meta("escape");
  s["p_hat"] = r.p_hat;
  s["bound"] = r.bound;
  s["interval_status"] = interval_status_name(r.interval_status);
  s["output"] = out;
  return s;
}

/// Invariant suite on one model: each entry is (name, measured value, tolerance).
inline json cmd_validate(const Context& ctx, std::ostream& err, bool& all_pass) {
  const OscillatorModel model = model_from(ctx.cfg);
  const LimitCycle cyc = cycle_from(ctx.cfg, model);
  const FloquetFrame frame = floquet_decompose(model, cyc);
  const FrameDiagnostics d = frame_diagnostics(model, cyc, frame);
  struct Check {
    std::string name;
    double value, tol;
  };
  std::vector<Check> checks = {
      {"cycle_residual", cycle_residual(model, cyc), 1e-8},
      {"trivial_exponent", d.nu1, 1e-7},
      {"tangent_identity", d.tangent_error, 1e-6},
      {"unit_weighted_tangent", d.metric_error, 1e-6},
      {"floquet_equation", d.floquet_residual, 1e-5},
      {"prc_normalization", d.prc_normalization, 1e-8},
      {"adjoint_equation", d.adjoint_residual, 1e-5},
  };
  // Decoupling of the phase drift from the amplitude at first order.
  double dec = 0.0;
  CounterNormal gen(integer_or(ctx.cfg, "seed", 0), 0xdec);
  Eigen::VectorXd z(model.dim + 1);
  for (int i = 0; i < 100; ++i) {
    gen.fill(static_cast<std::uint64_t>(i), z);
    Vec v = z.head(model.dim);
    double th = wrap_angle(3.0 * z(model.dim));
    dec = std::max(dec, std::abs(decoupling_check(frame, cyc, model, th, v, 1e-6)) / (1e-3 * v.norm()));
  }
  checks.push_back({"phase_amplitude_decoupling", dec, 1e-4});
  // M >= 1/2 inside the tube of radius amax.
  const double am = amax(frame, cyc);
  double m_min = 1.0;
  for (const auto& s : sample_tube(frame, cyc, 2000, am, 11))
    m_min = std::min(m_min, m_curvature(frame, cyc, s.u, s.theta));
  checks.push_back({"tube_curvature_deficit", std::max(0.0, 0.5 - m_min), 0.0});

  json inv = json::object();
  all_pass = true;
  for (const auto& ch : checks) {
    const bool pass = ch.value <= ch.tol;
    all_pass = all_pass && pass;
    err << (pass ? "PASS " : "FAIL ") << ch.name << " value=" << fmt(ch.value) << " tol=" << fmt(ch.tol) << "\n";
    inv[ch.name] = {{"value", ch.value}, {"tolerance", ch.tol}, {"pass", pass}};
  }
  json report = ctx.meta("validate");
  report["model"] = model.name;
  report["invariants"] = inv;
  report["all_pass"] = all_pass;
  const std::string out = string_or(ctx.cfg, "validate.output", "validate.json");
  write_atomic(out, report.dump(2) + "\n");
  json s = ctx.meta("validate");
  s["all_pass"] = all_pass;
  s["output"] = out;
  return s;
}

// ---------------------------------------------------------------------------------------------

/// Exit codes: 0 success, 1 domain error (or failed validation), 2 config or usage error.
inline int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"varphase: variational phase reduction experiments"};
  std::string command, config_path;
  std::vector<std::string> sets;
  long seed = -1;
  int threads = 0;
  int paths = 0;
  app.add_option("command", command, "cycle | floquet | simulate | extract | escape | validate")
      ->required()
      ->check(CLI::IsMember({"cycle", "floquet", "simulate", "extract", "escape", "validate"}));
  app.add_option("-c,--config", config_path, "JSON config file")->required();
  app.add_option("--seed", seed, "override the config seed");
  app.add_option("--set", sets, "override a config key: key=value (repeatable)");
  app.add_option("--paths", paths, "simulate: run N paths and write summary statistics JSON")->check(CLI::PositiveNumber);
  app.add_option("--threads", threads, "worker threads (default: VARPHASE_THREADS or all cores)");
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "ConfigParse: " << e.what() << "\n";
    return 2;
  }

  try {
    std::ifstream f(config_path);
    if (!f) throw Error(ErrorCode::ConfigParse, "cannot open config '" + config_path + "'");
    std::stringstream buf;
    buf << f.rdbuf();
    Context ctx;
    ctx.cfg = parse_config_text(buf.str());
    for (const auto& s : sets) apply_override(ctx.cfg, s);
    if (seed >= 0) ctx.cfg["seed"] = seed;
    if (threads > 0) ctx.cfg["threads"] = threads;
    validate_config(ctx.cfg);
    ctx.threads = static_cast<int>(integer_or(ctx.cfg, "threads", 0));
    ctx.hash = config_hash(ctx.cfg);
    need(ctx.cfg, "model.name");

    json summary;
    int code = 0;
    if (command == "cycle") summary = cmd_cycle(ctx);
    else if (command == "floquet") summary = cmd_floquet(ctx);
    else if (command == "simulate") summary = cmd_simulate(ctx, paths);
    else if (command == "extract") summary = cmd_extract(ctx);
    else if (command == "escape") summary = cmd_escape(ctx);
    else {
      bool ok = true;
      summary = cmd_validate(ctx, err, ok);
      code = ok ? 0 : 1;
    }
    out << summary.dump() << "\n";
    return code;
  } catch (const Error& e) {
    err << e.what() << "\n";
    return e.code() == ErrorCode::ConfigParse ? 2 : 1;
  } catch (const json::exception& e) {
    err << "ConfigParse: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace varphase::cli
