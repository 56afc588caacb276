#pragma once

// Subcommand orchestration shared by the CLI binary and the tests: load a
// config, run the requested pipeline, emit CSV/SVG artifacts under --out.
// Exit codes: 0 success, 1 numerical failure, 2 config error.

#include <cmath>
#include <filesystem>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "backstep/analysis.hpp"
#include "backstep/config_io.hpp"
#include "backstep/csv.hpp"
#include "backstep/kernels.hpp"
#include "backstep/simulator.hpp"
#include "backstep/svg.hpp"
#include "backstep/transforms.hpp"

namespace backstep {

struct RunManifest {
  std::string subcommand;
  std::string config_path;
  std::string out_dir = ".";
  int grid_m = 200;
  int kernel_m = 100;
  double t_final = 10.0;
  double cfl = 0.9;
  std::string controller = "backstep";
  std::string ic = "sine:1,1,1";
  int stride = 10;
  unsigned long long seed = 1;
  bool svg = false;
};

// Grammar: "zero" | "constant:a,b,c" | "sine:a,b,c" | "samples:path".
inline InitialPreset parse_ic_preset(const std::string& text) {
  const size_t colon = text.find(':');
  const std::string name = text.substr(0, colon);
  const std::string args = colon == std::string::npos ? "" : text.substr(colon + 1);
  if (name == "zero") {
    if (!args.empty()) throw ConfigError("ic preset zero takes no arguments");
    return zero_preset();
  }
  if (name == "samples") {
    if (args.empty()) throw ConfigError("ic preset samples requires a file path");
    InitialPreset p;
    p.kind = InitialPreset::Kind::samples;
    p.file = args;
    return p;
  }
  if (name == "constant" || name == "sine") {
    double vals[3];
    size_t pos = 0;
    for (int k = 0; k < 3; ++k) {
      const size_t comma = args.find(',', pos);
      const bool last = k == 2;
      if (last != (comma == std::string::npos))
        throw ConfigError("ic preset " + name + " expects three comma-separated numbers");
      const std::string tok = args.substr(pos, last ? std::string::npos : comma - pos);
      try {
        size_t used = 0;
        vals[k] = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ConfigError("ic preset " + name + ": cannot parse number '" + tok + "'");
      }
      pos = comma + 1;
    }
    return name == "constant" ? constant_preset(vals[0], vals[1], vals[2])
                              : sine_preset(vals[0], vals[1], vals[2]);
  }
  throw ConfigError("unknown ic preset: " + name);
}

namespace detail {

inline std::string joined_errors(const ConfigCheck& chk) {
  std::string s;
  for (const auto& e : chk.errors) {
    if (!s.empty()) s += "; ";
    s += e;
  }
  return s;
}

inline PlantConfig load_plant(const RunManifest& man) {
  if (man.config_path.empty()) throw ConfigError("--config is required");
  ParsedConfig pc = load_config_file(man.config_path);
  if (pc.kind != ParsedConfig::Kind::plant)
    throw ConfigError("subcommand " + man.subcommand + " requires a plant config");
  const ConfigCheck chk = validate_config(pc.plant);
  if (!chk.ok()) throw ConfigError(joined_errors(chk));
  return pc.plant;
}

inline std::filesystem::path out_path(const RunManifest& man, const std::string& name) {
  std::filesystem::create_directories(man.out_dir);
  return std::filesystem::path(man.out_dir) / name;
}

inline double lsq_log_slope(const std::vector<StepRecord>& steps, double t_from) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int cnt = 0;
  for (const StepRecord& r : steps) {
    if (r.t < t_from || !(r.lyapunov > 0.0)) continue;
    const double y = std::log(r.lyapunov);
    sx += r.t;
    sy += y;
    sxx += r.t * r.t;
    sxy += r.t * y;
    ++cnt;
  }
  if (cnt < 2) return std::numeric_limits<double>::quiet_NaN();
  return (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
}

inline int run_check(const RunManifest& man, std::ostream& log) {
  if (man.config_path.empty()) throw ConfigError("--config is required");
  ParsedConfig pc = load_config_file(man.config_path);
  if (pc.kind == ParsedConfig::Kind::simplified) {
    const SimplifiedConfig& sc = pc.simplified;
    if (!(sc.lambda > 0.0) || !std::isfinite(sc.lambda)) {
      log << "config error: lambda must be positive\n";
      return 2;
    }
    if (!std::isfinite(sc.psi) || !std::isfinite(sc.omega)) {
      log << "config error: psi and omega must be finite\n";
      return 2;
    }
    log << "simplified config ok: lambda=" << sc.lambda << " psi=" << sc.psi
        << " omega=" << sc.omega << "\n";
    return 0;
  }
  const ConfigCheck chk = validate_config(pc.plant);
  if (!chk.ok()) {
    log << "config error: " << joined_errors(chk) << "\n";
    return 2;
  }
  log << "plant config ok: n=" << pc.plant.n << " hurwitz=" << (chk.hurwitz ? "yes" : "no")
      << " sym_neg_definite=" << (chk.sym_neg_definite ? "yes" : "no") << "\n";
  return 0;
}

inline int run_kernels(const RunManifest& man, std::ostream& log) {
  const PlantConfig cfg = load_plant(man);
  const KernelSet ks = solve_direct_kernels(cfg, man.kernel_m);
  write_kernels_csv(out_path(man, "kernels.csv").string(), ks);
  const KernelResiduals res = kernel_residual(ks, cfg);
  log << "kernel grid " << man.kernel_m << ": converged in " << ks.iterations
      << " sweeps (last delta " << ks.last_delta << ")\n";
  log << "boundary/diagonal data error: " << kernel_data_error(ks, cfg) << "\n";
  log << "equation residual max: " << res.max_equation() << " (K1 " << res.k1 << ", K2 "
      << res.k2 << ", Q1 " << res.q1 << ", Q2 " << res.q2 << ", G " << res.g << ", R "
      << res.r << ")\n";
  return 0;
}

inline int run_simulate(const RunManifest& man, std::ostream& log) {
  const PlantConfig cfg = load_plant(man);
  const Grid grid(man.grid_m, man.cfl);
  const StateSnapshot ic = initial_condition(parse_ic_preset(man.ic), grid, cfg.n);

  KernelSet ks;
  Controller ctl = Controller::open_loop();
  SimOptions opt;
  opt.stride = man.stride;
  std::optional<LyapunovParams> lp;
  if (man.controller == "backstep") {
    ks = solve_direct_kernels(cfg, man.kernel_m);
    ctl = Controller::backstepping(ks);
    lp = lyapunov_constants(cfg, invert_kernels(ks, cfg));
    if (lp)
      opt.tracker = [&cfg, &ks, &lp](const StateSnapshot& s, StepRecord& rec) {
        const TargetState tg = forward_transform(s, ks);
        rec.lyapunov = lyapunov_value(tg.alpha, tg.beta, s.v, *lp, cfg);
        rec.alpha0 = tg.alpha[0];
      };
  } else if (man.controller != "open" && man.controller != "zero") {
    throw ConfigError("unknown controller: " + man.controller);
  }

  const Trajectory tr = simulate(cfg, grid, ic, man.t_final, ctl, opt);
  write_norms_csv(out_path(man, "norms.csv").string(), tr);
  write_fields_csv(out_path(man, "fields.csv").string(), tr, grid, cfg.n);
  if (man.svg) {
    Vec t, nu, np, nv, uc, lt, logv;
    for (const StepRecord& r : tr.steps) {
      t.push_back(r.t);
      nu.push_back(r.norm_u);
      np.push_back(r.norm_p);
      nv.push_back(r.norm_v);
      uc.push_back(r.U);
      if (r.lyapunov > 0.0) {
        lt.push_back(r.t);
        logv.push_back(std::log10(r.lyapunov));
      }
    }
    write_line_svg(out_path(man, "norms.svg").string(), "state norms",
                   {{"norm_u", t, nu}, {"norm_p", t, np}, {"norm_v", t, nv}, {"U", t, uc}});
    if (!lt.empty())
      write_line_svg(out_path(man, "lyapunov.svg").string(), "certificate functional",
                     {{"log10 V", lt, logv}});
  }
  if (tr.aborted)
    log << "simulation aborted at step " << tr.abort_step << " (state norm above "
        << 1e12 << "); partial results written\n";
  else
    log << "simulated " << tr.steps.size() - 1 << " steps to t=" << tr.steps.back().t
        << "; final total norm " << total_norm(tr.steps.back()) << "\n";
  return 0;
}

inline int run_verify(const RunManifest& man, std::ostream& log) {
  const PlantConfig cfg = load_plant(man);
  const Grid grid(man.grid_m, man.cfl);
  const KernelSet ks = solve_direct_kernels(cfg, man.kernel_m);
  const InverseKernelSet iks = invert_kernels(ks, cfg);

  std::vector<std::pair<std::string, double>> metrics;
  metrics.emplace_back("kernel_sweeps", ks.iterations);
  metrics.emplace_back("kernel_data_error", kernel_data_error(ks, cfg));
  metrics.emplace_back("kernel_residual_max", kernel_residual(ks, cfg).max_equation());

  const Grid kgrid(man.kernel_m, man.cfl);
  const StateSnapshot probe =
      random_smooth_state(kgrid, cfg.n, static_cast<unsigned>(man.seed));
  const TargetState tg = forward_transform(probe, ks);
  const auto [uback, pback] = inverse_transform(tg.alpha, tg.beta, probe.v, iks);
  double round = 0.0;
  for (int j = 0; j <= kgrid.m; ++j) {
    round = std::max(round, std::abs(uback[j] - probe.u[j]));
    round = std::max(round, std::abs(pback[j] - probe.p[j]));
  }
  metrics.emplace_back("roundtrip_error", round);

  const std::optional<LyapunovParams> lp = lyapunov_constants(cfg, iks);
  const StateSnapshot ic = initial_condition(parse_ic_preset(man.ic), grid, cfg.n);
  SimOptions opt;
  opt.stride = man.stride;
  opt.tracker = [&](const StateSnapshot& s, StepRecord& rec) {
    const TargetState t = forward_transform(s, ks);
    rec.alpha0 = t.alpha[0];
    if (lp) rec.lyapunov = lyapunov_value(t.alpha, t.beta, s.v, *lp, cfg);
  };
  const Trajectory tr =
      simulate(cfg, grid, ic, man.t_final, Controller::backstepping(ks), opt);
  double alpha0 = 0.0;
  for (const StepRecord& r : tr.steps)
    if (std::isfinite(r.alpha0)) alpha0 = std::max(alpha0, std::abs(r.alpha0));
  metrics.emplace_back("alpha0_max", alpha0);

  const TargetResidualReport rep = target_residual(tr.frames, ks, iks, cfg);
  metrics.emplace_back("alpha_transport_residual", rep.max_alpha_transport);
  metrics.emplace_back("beta_transport_residual", rep.max_beta_transport);
  metrics.emplace_back("v_residual", rep.max_v_residual);
  metrics.emplace_back("edge_mismatch", rep.max_edge_mismatch);

  const double nan = std::numeric_limits<double>::quiet_NaN();
  metrics.emplace_back("rho_star", lp ? lp->rho_star : nan);
  metrics.emplace_back("mu", lp ? lp->mu : nan);
  metrics.emplace_back("vartheta", lp ? lp->vartheta : nan);
  metrics.emplace_back("A", lp ? lp->A : nan);
  metrics.emplace_back("B", lp ? lp->B : nan);
  metrics.emplace_back("K", lp ? lp->K : nan);
  const double tstar = 1.0 / cfg.lambda1 + 1.0 / cfg.lambda2;
  metrics.emplace_back("lyapunov_slope", lsq_log_slope(tr.steps, tstar));

  write_verify_csv(out_path(man, "verify.csv").string(), metrics);
  if (lp) {
    write_lyapunov_csv(out_path(man, "lyapunov.csv").string(), tr);
    if (man.svg) {
      Vec t, logv;
      for (const StepRecord& r : tr.steps)
        if (r.lyapunov > 0.0) {
          t.push_back(r.t);
          logv.push_back(std::log10(r.lyapunov));
        }
      write_line_svg(out_path(man, "lyapunov.svg").string(), "certificate functional",
                     {{"log10 V", t, logv}});
    }
  }
  for (const auto& [name, value] : metrics) log << name << " = " << value << "\n";
  if (tr.aborted) {
    log << "numerical failure: closed-loop run aborted on overflow\n";
    return 1;
  }
  return 0;
}

inline int run_obstruct(const RunManifest& man, std::ostream& log) {
  SimplifiedConfig scfg{1.0, 0.5, 1.0};
  if (!man.config_path.empty()) {
    ParsedConfig pc = load_config_file(man.config_path);
    if (pc.kind != ParsedConfig::Kind::simplified)
      throw ConfigError("subcommand obstruct requires a simplified config");
    scfg = pc.simplified;
  }
  const Grid grid(man.grid_m, man.cfl);
  const int m = grid.m;

  auto u0f = [](double x) { return std::cos(2.0 * M_PI * x); };
  auto v0f = [](double x) { return 0.2 + 0.5 * std::cos(2.0 * M_PI * x); };
  auto input = [](double t) { return 0.4 * std::sin(2.5 * t); };
  Vec u0(m + 1), v0(m + 1);
  for (int j = 0; j <= m; ++j) {
    u0[j] = u0f(grid.node(j));
    v0[j] = v0f(grid.node(j));
  }

  std::vector<double> times;
  for (int k = 1; k <= 40; ++k) times.push_back(man.t_final * k / 40.0);
  const Trajectory tr = simulate_simplified_exact(scfg, u0f, v0f, input, times, grid);

  const GrowthFunctional g0 = functional_R(scfg, u0, v0, u0, v0, grid);
  std::vector<ObstructionRow> rows;
  auto add_row = [&](double t, const Vec& u, const Vec& v) {
    ObstructionRow row;
    row.t = t;
    row.R = functional_R(scfg, u0, v0, u, v, grid).value;
    Vec w = w_transform(scfg, u, v, grid);
    for (double x : w) row.w_maxabs = std::max(row.w_maxabs, std::abs(x));
    row.in_s = in_subspace_S(scfg, u, v, grid).member;
    rows.push_back(row);
  };
  add_row(0.0, u0, v0);
  for (size_t k = 0; k < times.size(); ++k) add_row(times[k], tr.frames[k].u, tr.frames[k].v[0]);

  write_obstruction_csv(out_path(man, "obstruction.csv").string(), rows);
  if (man.svg) {
    Vec t, rv, wv;
    for (const ObstructionRow& r : rows) {
      t.push_back(r.t);
      rv.push_back(r.R);
      wv.push_back(r.w_maxabs);
    }
    write_line_svg(out_path(man, "obstruction.svg").string(), "growth off the subspace",
                   {{"R", t, rv}, {"max|w|", t, wv}});
  }

  const double grown = rows.back().R / g0.value;
  const double expect = std::exp(scfg.psi * rows.back().t);
  log << "R(0) = " << g0.value << "; R(T)/R(0) = " << grown << " vs e^{psi T} = " << expect
      << "\n";

  // A member of S stays there; the same inputs cannot move it off. The
  // membership integral is a trapezoid rule, so allow its O(h^2) error.
  auto vm = [&](double x) { return std::exp(-scfg.psi * x / scfg.lambda) * 0.8; };
  std::vector<double> mtimes{0.5 * man.t_final, man.t_final};
  const Trajectory trm = simulate_simplified_exact(
      scfg, [](double) { return 0.0; }, vm, input, mtimes, grid);
  const double mtol = std::min(500.0 * grid.dx() * grid.dx(), 1e-2);
  bool stays = true;
  for (size_t k = 0; k < mtimes.size(); ++k)
    stays = stays &&
            in_subspace_S(scfg, trm.frames[k].u, trm.frames[k].v[0], grid, mtol).member;
  log << "constructed subspace member stays in S: " << (stays ? "yes" : "NO") << "\n";

  const OdePair ode = ode_counterexample(
      scfg, 0.5, [](double) { return 0.0; }, 2.0, 0.1, 0.0);
  log << "two-point reduction: w(x1) = " << ode.w_at_x1 << ", w(t_final) = "
      << ode.w.back() << " (autonomous growth)\n";
  return stays ? 0 : 1;
}

}  // namespace detail

inline int run_manifest(const RunManifest& man, std::ostream& log) {
  try {
    if (man.subcommand == "check") return detail::run_check(man, log);
    if (man.subcommand == "kernels") return detail::run_kernels(man, log);
    if (man.subcommand == "simulate") return detail::run_simulate(man, log);
    if (man.subcommand == "verify") return detail::run_verify(man, log);
    if (man.subcommand == "obstruct") return detail::run_obstruct(man, log);
    throw ConfigError("unknown subcommand: " + man.subcommand);
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    log << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    log << "numerical failure: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace backstep
