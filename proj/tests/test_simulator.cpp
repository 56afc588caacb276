#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "backstep/kernels.hpp"
#include "backstep/model.hpp"
#include "backstep/simulator.hpp"
#include "backstep/transforms.hpp"

using namespace backstep;

namespace {

PlantConfig demo_config() {
  PlantConfig cfg;
  cfg.n = 2;
  cfg.lambda1 = 1.25;
  cfg.lambda2 = 0.9;
  cfg.sigma12 = 2.5;
  cfg.sigma21 = -3.5;
  cfg.theta1 = {0.25, 0.1};
  cfg.theta2 = {0.25, -0.1};
  cfg.omega1 = {0.3, 0.8};
  cfg.omega2 = {-0.65, 0.3};
  cfg.psi = Mat{2, {-1.5, 2.0, -1.0, -2.0}};
  cfg.q = -0.7;
  cfg.rho = 0.5;
  return cfg;
}

PlantConfig transport_config(double q, double rho) {
  PlantConfig cfg;
  cfg.n = 1;
  cfg.lambda1 = 1.0;
  cfg.lambda2 = 1.0;
  cfg.sigma12 = 0.0;
  cfg.sigma21 = 0.0;
  cfg.theta1 = {0.0};
  cfg.theta2 = {0.0};
  cfg.omega1 = {0.0};
  cfg.omega2 = {0.0};
  cfg.psi = Mat{1, {-1.0}};
  cfg.q = q;
  cfg.rho = rho;
  return cfg;
}

}  // namespace

TEST_CASE("zero initial data stays identically zero in open loop") {
  const PlantConfig cfg = demo_config();
  const Grid grid(40, 0.9);
  const Trajectory traj = simulate(cfg, grid, zero_state(grid, 2), 1.0, Controller::open_loop());
  REQUIRE_FALSE(traj.aborted);
  for (const StepRecord& r : traj.steps) {
    REQUIRE(r.U == 0.0);
    REQUIRE(total_norm(r) == 0.0);
  }
  for (const StateSnapshot& s : traj.frames) REQUIRE(s.max_abs() == 0.0);
  // strictly increasing recorded times
  for (size_t k = 1; k < traj.steps.size(); ++k) REQUIRE(traj.steps[k].t > traj.steps[k - 1].t);
}

TEST_CASE("pure transport translates the rightward profile") {
  const PlantConfig cfg = transport_config(1e-9, 1e-9);
  SECTION("unit CFL propagates exactly along the lattice") {
    const Grid grid(100, 1.0);
    StateSnapshot ic = zero_state(grid, 1);
    for (int j = 0; j <= 100; ++j) ic.u[j] = std::sin(2.0 * M_PI * j * grid.dx());
    const Trajectory traj = simulate(cfg, grid, ic, 0.5, Controller::open_loop(), {.stride = 1});
    const StateSnapshot& last = traj.frames.back();
    REQUIRE(last.t == Catch::Approx(0.5).margin(1e-12));
    for (int j = 0; j <= 100; ++j) {
      const double x = j * grid.dx() - last.t;
      const double exact = x >= -1e-15 ? std::sin(2.0 * M_PI * x) : 0.0;
      REQUIRE(last.u[j] == Catch::Approx(exact).margin(1e-10));
    }
  }
  SECTION("fractional CFL is first-order accurate") {
    double prev_err = 0.0;
    for (int m : {100, 200}) {
      const Grid grid(m, 0.9);
      StateSnapshot ic = zero_state(grid, 1);
      for (int j = 0; j <= m; ++j) ic.u[j] = std::sin(2.0 * M_PI * j * grid.dx());
      const Trajectory traj = simulate(cfg, grid, ic, 0.5, Controller::open_loop());
      const StateSnapshot& last = traj.frames.back();
      Vec err(m + 1, 0.0);
      for (int j = 0; j <= m; ++j) {
        const double x = j * grid.dx() - last.t;
        err[j] = last.u[j] - (x >= 0.0 ? std::sin(2.0 * M_PI * x) : 0.0);
      }
      const double e = l2_norm(err, grid.dx());
      INFO("m=" << m << " err=" << e);
      REQUIRE(e <= 12.0 * grid.dx());
      if (prev_err > 0.0) REQUIRE(prev_err / e >= 1.4);
      prev_err = e;
    }
  }
}

TEST_CASE("open-loop scheme commutes exactly with scaling by four") {
  const PlantConfig cfg = demo_config();
  const Grid grid(64, 0.9);
  const StateSnapshot ic = random_smooth_state(grid, 2, 23u);
  StateSnapshot scaled = ic;
  for (int j = 0; j <= 64; ++j) {
    scaled.u[j] *= 4.0;
    scaled.p[j] *= 4.0;
    for (int c = 0; c < 2; ++c) scaled.v[c][j] *= 4.0;
  }
  const Trajectory a = simulate(cfg, grid, ic, 0.5, Controller::open_loop(), {.stride = 5});
  const Trajectory b = simulate(cfg, grid, scaled, 0.5, Controller::open_loop(), {.stride = 5});
  REQUIRE(a.frames.size() == b.frames.size());
  for (size_t f = 0; f < a.frames.size(); ++f)
    for (int j = 0; j <= 64; ++j) {
      REQUIRE(b.frames[f].u[j] == 4.0 * a.frames[f].u[j]);
      REQUIRE(b.frames[f].p[j] == 4.0 * a.frames[f].p[j]);
      for (int c = 0; c < 2; ++c) REQUIRE(b.frames[f].v[c][j] == 4.0 * a.frames[f].v[c][j]);
    }
}

TEST_CASE("states before a change in the input signal are unaffected by it") {
  const PlantConfig cfg = demo_config();
  const Grid grid(50, 0.8);
  const StateSnapshot ic = random_smooth_state(grid, 2, 5u);
  auto base = [](double t) { return std::sin(3.0 * t); };
  auto tampered = [&](double t) { return t > 0.6 ? base(t) + 5.0 : base(t); };
  const Trajectory a =
      simulate(cfg, grid, ic, 1.0, Controller::signal(base), {.stride = 1});
  const Trajectory b =
      simulate(cfg, grid, ic, 1.0, Controller::signal(tampered), {.stride = 1});
  REQUIRE(a.frames.size() == b.frames.size());
  bool diverged_later = false;
  for (size_t f = 0; f < a.frames.size(); ++f) {
    if (a.frames[f].t <= 0.6) {
      for (int j = 0; j <= 50; ++j) {
        REQUIRE(b.frames[f].u[j] == a.frames[f].u[j]);
        REQUIRE(b.frames[f].p[j] == a.frames[f].p[j]);
      }
    } else if (a.frames[f].u[0] != b.frames[f].u[0]) {
      diverged_later = true;
    }
  }
  REQUIRE(diverged_later);
}

TEST_CASE("an amplifying boundary loop overflows and aborts") {
  const PlantConfig cfg = transport_config(5.0, 1.0);  // round-trip gain 5
  const Grid grid(32, 0.9);
  StateSnapshot ic = zero_state(grid, 1);
  for (int j = 0; j <= 32; ++j) ic.u[j] = std::sin(2.0 * M_PI * j * grid.dx());
  const Trajectory traj = simulate(cfg, grid, ic, 100.0, Controller::open_loop());
  REQUIRE(traj.aborted);
  REQUIRE(traj.abort_step > 0);
  REQUIRE(traj.frames.back().max_abs() > 1e12);
  REQUIRE(traj.steps.size() == static_cast<size_t>(traj.abort_step) + 1);
  REQUIRE(traj.steps.back().t < 100.0);
}

TEST_CASE("simulate validates its inputs") {
  const PlantConfig cfg = demo_config();
  const Grid grid(40, 0.9);
  const StateSnapshot ic = zero_state(grid, 2);
  CHECK_THROWS_AS(simulate(cfg, grid, ic, -1.0, Controller::open_loop()), std::invalid_argument);
  CHECK_THROWS_AS(simulate(cfg, grid, zero_state(grid, 1), 1.0, Controller::open_loop()),
                  std::invalid_argument);
  Controller bad;
  bad.kind = Controller::Kind::backstepping;
  CHECK_THROWS_AS(simulate(cfg, grid, ic, 1.0, bad), std::invalid_argument);
  CHECK_THROWS_AS(simulate(cfg, grid, ic, 1.0, Controller::signal(nullptr)),
                  std::invalid_argument);
  CHECK_THROWS_AS(simulate(cfg, grid, ic, 1.0, Controller::open_loop(), {.stride = 0}),
                  std::invalid_argument);
}

TEST_CASE("closed-loop demo run decays and drains the target transport field") {
  const PlantConfig cfg = demo_config();
  const int m = 100;
  const Grid grid(m, 0.9);
  const KernelSet ks = solve_direct_kernels(cfg, m);
  const InverseKernelSet iks = invert_kernels(ks, cfg);
  StateSnapshot ic = initial_condition(sine_preset(1.0, 1.0, 1.0), grid, 2);

  const Trajectory traj =
      simulate(cfg, grid, ic, 8.0, Controller::backstepping(ks), {.stride = 5});
  REQUIRE_FALSE(traj.aborted);
  const double n0 = total_norm(traj.steps.front());
  const double n8 = total_norm(traj.steps.back());
  INFO("norm 0 " << n0 << " norm 8 " << n8);
  REQUIRE(n8 <= 0.01 * n0);

  const TargetResidualReport rep = target_residual(traj.frames, ks, iks, cfg);
  const double scale = ic.max_abs();
  REQUIRE(rep.max_alpha0 <= 1e-8 * scale);
  REQUIRE(rep.max_edge_mismatch <= 1e-12 * scale);

  // alpha is drained once the inflow-free transport has swept the domain
  const double drain_alpha = 1.0 / cfg.lambda1 + 5.0 * grid.dx() / cfg.lambda1;
  const double drain_beta = drain_alpha + 1.0 / cfg.lambda2 +
                            5.0 * grid.dx() * (1.0 / cfg.lambda1 + 1.0 / cfg.lambda2);
  double worst_alpha = 0.0, worst_beta = 0.0;
  for (const StateSnapshot& s : traj.frames) {
    const TargetState ts = forward_transform(s, ks);
    double ma = 0.0, mb = 0.0;
    for (double x : ts.alpha) ma = std::max(ma, std::abs(x));
    for (double x : ts.beta) mb = std::max(mb, std::abs(x));
    if (s.t >= drain_alpha) worst_alpha = std::max(worst_alpha, ma);
    if (s.t >= drain_beta) worst_beta = std::max(worst_beta, mb);
  }
  INFO("drained alpha " << worst_alpha << " beta " << worst_beta);
  REQUIRE(worst_alpha <= 1e-2 * scale);
  REQUIRE(worst_beta <= 1e-2 * scale);
}

TEST_CASE("target transport residuals shrink at first order under refinement") {
  // Initial data built by inverse-transforming a smooth target state whose
  // endpoint derivatives vanish, so the feedback is compatible at t = 0 and
  // no boundary discontinuity pollutes the max-norm residual.
  const PlantConfig cfg = demo_config();
  double prev = 0.0;
  for (int m : {50, 100}) {
    const Grid grid(m, 0.9);
    const KernelSet ks = solve_direct_kernels(cfg, m);
    const InverseKernelSet iks = invert_kernels(ks, cfg);
    Vec alpha0(m + 1), beta0(m + 1);
    std::vector<Vec> v0(2, Vec(m + 1));
    for (int j = 0; j <= m; ++j) {
      const double s = std::sin(M_PI * j * grid.dx());
      alpha0[j] = s * s;
      beta0[j] = s * s;
      v0[0][j] = s * s;
      v0[1][j] = -0.5 * s * s;
    }
    const auto up = inverse_transform(alpha0, beta0, v0, iks);
    StateSnapshot ic;
    ic.u = up.first;
    ic.p = up.second;
    ic.v = v0;
    const Trajectory traj =
        simulate(cfg, grid, ic, 1.0, Controller::backstepping(ks), {.stride = 1});
    const TargetResidualReport rep = target_residual(traj.frames, ks, iks, cfg);
    INFO("m=" << m << " alpha residual " << rep.max_alpha_transport);
    REQUIRE(rep.max_alpha_transport > 0.0);
    if (prev > 0.0) {
      const double ratio = prev / rep.max_alpha_transport;
      INFO("ratio " << ratio);
      REQUIRE(ratio >= 1.3);
      REQUIRE(ratio <= 2.9);
    }
    prev = rep.max_alpha_transport;
  }
}

TEST_CASE("simplified cascade examples") {
  SECTION("decoupled zero input freezes the zero-speed field") {
    const SimplifiedConfig scfg{1.0, 0.0, 0.0};
    const Grid grid(60, 0.9);
    Vec u0(61, 0.0), v0(61);
    for (int j = 0; j <= 60; ++j) v0[j] = std::cos(M_PI * j * grid.dx());
    const Trajectory traj =
        simulate_simplified_fd(scfg, grid, u0, v0, [](double) { return 0.0; }, 1.0);
    for (int j = 0; j <= 60; ++j) REQUIRE(traj.frames.back().v[0][j] == v0[j]);
  }
  SECTION("ramp accumulation v = min(t, x)") {
    const SimplifiedConfig scfg{1.0, 0.0, 1.0};
    const int m = 80;
    const Grid grid(m, 0.9);
    Vec u0(m + 1, 1.0), v0(m + 1, 0.0);
    const Trajectory traj =
        simulate_simplified_fd(scfg, grid, u0, v0, [](double) { return 0.0; }, 0.5);
    const StateSnapshot& last = traj.frames.back();
    const int j = static_cast<int>(std::lround(0.75 * m));
    REQUIRE(last.v[0][j] == Catch::Approx(0.5).margin(4.0 * grid.dx()));
  }
}

TEST_CASE("exact evaluator closed forms") {
  SECTION("time zero returns the initial data exactly") {
    const SimplifiedConfig scfg{2.0, 0.3, 1.5};
    const Grid grid(40, 0.9);
    const Trajectory traj = simulate_simplified_exact(
        scfg, [](double x) { return x * x; }, [](double x) { return 1.0 - x; },
        [](double) { return 0.0; }, {0.0}, grid);
    for (int j = 0; j <= 40; ++j) {
      const double x = j * grid.dx();
      REQUIRE(traj.frames[0].u[j] == Catch::Approx(x * x).margin(1e-15));
      REQUIRE(traj.frames[0].v[0][j] == Catch::Approx(1.0 - x).margin(1e-15));
    }
  }
  SECTION("decoupled field is constant in time") {
    const SimplifiedConfig scfg{1.0, 0.0, 0.0};
    const Grid grid(40, 0.9);
    const Trajectory traj = simulate_simplified_exact(
        scfg, [](double x) { return std::sin(x); }, [](double x) { return std::cos(x); },
        [](double) { return 0.0; }, {0.5, 1.0, 2.0}, grid);
    for (const StateSnapshot& s : traj.frames)
      for (int j = 0; j <= 40; ++j)
        REQUIRE(s.v[0][j] == Catch::Approx(std::cos(j * grid.dx())).margin(1e-15));
  }
  SECTION("exponential accumulation reaches e - 1") {
    const SimplifiedConfig scfg{1.0, 1.0, 1.0};
    const Grid grid(200, 0.9);
    const Trajectory traj = simulate_simplified_exact(
        scfg, [](double) { return 1.0; }, [](double) { return 0.0; },
        [](double) { return 0.0; }, {1.0}, grid);
    REQUIRE(traj.frames[0].v[0][200] == Catch::Approx(std::exp(1.0) - 1.0).margin(1e-6));
  }
  SECTION("ramp accumulation is exact for piecewise-constant integrands") {
    const SimplifiedConfig scfg{1.0, 0.0, 1.0};
    const Grid grid(80, 0.9);
    const Trajectory traj = simulate_simplified_exact(
        scfg, [](double) { return 1.0; }, [](double) { return 0.0; },
        [](double) { return 0.0; }, {0.5}, grid);
    const int j = static_cast<int>(std::lround(0.75 * 80));
    REQUIRE(traj.frames[0].v[0][j] == Catch::Approx(0.5).margin(1e-12));
  }
}

TEST_CASE("finite differences converge to the exact evaluator at first order") {
  const SimplifiedConfig scfg{1.0, 0.5, 1.0};
  auto u0f = [](double x) { return std::sin(2.0 * M_PI * x); };
  auto v0f = [](double x) { return std::cos(M_PI * x); };
  auto input = [](double t) { return -std::sin(2.0 * M_PI * t); };
  const double t_final = 0.5;

  std::vector<double> errs;
  for (int m : {100, 200, 400}) {
    const Grid grid(m, 0.9);
    Vec u0(m + 1), v0(m + 1);
    for (int j = 0; j <= m; ++j) {
      u0[j] = u0f(j * grid.dx());
      v0[j] = v0f(j * grid.dx());
    }
    const Trajectory fd = simulate_simplified_fd(scfg, grid, u0, v0, input, t_final);
    const Trajectory exact =
        simulate_simplified_exact(scfg, u0f, v0f, input, {fd.frames.back().t}, grid);
    Vec du(m + 1), dv(m + 1);
    for (int j = 0; j <= m; ++j) {
      du[j] = fd.frames.back().u[j] - exact.frames[0].u[j];
      dv[j] = fd.frames.back().v[0][j] - exact.frames[0].v[0][j];
    }
    const double e = std::sqrt(l2_norm(du, grid.dx()) * l2_norm(du, grid.dx()) +
                               l2_norm(dv, grid.dx()) * l2_norm(dv, grid.dx()));
    INFO("m=" << m << " err=" << e);
    errs.push_back(e);
  }
  for (size_t k = 1; k < errs.size(); ++k) {
    const double ratio = errs[k - 1] / errs[k];
    INFO("ratio " << ratio);
    REQUIRE(ratio >= 1.6);
    REQUIRE(ratio <= 2.6);
  }
  const double order = std::log2(errs[0] / errs[2]) / 2.0;
  INFO("order " << order);
  REQUIRE(order >= 0.9);
}
