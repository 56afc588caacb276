#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "backstep/kernels.hpp"
#include "backstep/model.hpp"
#include "backstep/transforms.hpp"

namespace backstep {

struct StepRecord {
  double t = 0.0;
  double U = 0.0;
  double norm_u = 0.0, norm_p = 0.0, norm_v = 0.0;
  double lyapunov = std::numeric_limits<double>::quiet_NaN();
  double alpha0 = std::numeric_limits<double>::quiet_NaN();
};

inline double total_norm(const StepRecord& r) {
  return std::sqrt(r.norm_u * r.norm_u + r.norm_p * r.norm_p + r.norm_v * r.norm_v);
}

struct Trajectory {
  std::vector<StateSnapshot> frames;  // subsampled by stride, first and last always kept
  std::vector<StepRecord> steps;      // one per time level including t = 0
  bool aborted = false;
  int abort_step = -1;
  double dx = 0.0, dt = 0.0;
};

struct Controller {
  enum class Kind { open_loop_zero, backstepping, signal };
  Kind kind = Kind::open_loop_zero;
  const KernelSet* ks = nullptr;
  std::function<double(double)> u_of_t;

  static Controller open_loop() { return {}; }
  static Controller backstepping(const KernelSet& kernels) {
    Controller c;
    c.kind = Kind::backstepping;
    c.ks = &kernels;
    return c;
  }
  static Controller signal(std::function<double(double)> f) {
    Controller c;
    c.kind = Kind::signal;
    c.u_of_t = std::move(f);
    return c;
  }
};

struct SimOptions {
  int stride = 10;
  double abort_threshold = 1e12;
  // invoked once per recorded step on the committed state
  std::function<void(const StateSnapshot&, StepRecord&)> tracker;
};

namespace detail {

// Solves u(t,0) so that the transformed boundary value alpha(t,0) vanishes
// on the lattice, then returns {u0, U} with U = u0 - q p(t,0).
inline std::pair<double, double> boundary_feedback(const Vec& u, const Vec& p,
                                                   const std::vector<Vec>& v, const KernelSet& ks,
                                                   const PlantConfig& cfg) {
  const int m = static_cast<int>(u.size()) - 1;
  const bool direct = (m == ks.mk);
  const double dx = 1.0 / m;
  auto row = [&](const Vec& f, int j) {
    return direct ? f[ks.idx(0, j)] : sample_triangle_field(f, ks.mk, 0.0, j * dx);
  };
  double rest = 0.0;
  for (int j = 0; j <= m; ++j) {
    const double w = (j == 0 || j == m) ? 0.5 : 1.0;
    double s = row(ks.K2, j) * p[j];
    for (int c = 0; c < ks.n; ++c) s += row(ks.G[c], j) * v[c][j];
    if (j > 0) s += row(ks.K1, j) * u[j];
    rest += w * s * dx;
  }
  const double denom = 1.0 - 0.5 * dx * row(ks.K1, 0);
  if (std::abs(denom) < 1e-6)
    throw std::runtime_error("backstepping boundary equation is singular on this grid");
  const double u0 = rest / denom;
  return {u0, u0 - cfg.q * p[0]};
}

}  // namespace detail

// Explicit first-order scheme for the full plant: backward-difference upwind
// for the rightward field, forward-difference upwind for the leftward field,
// forward Euler for the zero-speed block, sources at the current level, then
// boundary values from the reflection and the selected controller.
inline Trajectory simulate(const PlantConfig& cfg, const Grid& grid, const StateSnapshot& ic,
                           double t_final, const Controller& ctl, const SimOptions& opt = {}) {
  require_valid(cfg);
  if (!(t_final > 0.0)) throw std::invalid_argument("final time must be positive");
  if (opt.stride < 1) throw std::invalid_argument("snapshot stride must be >= 1");
  const int m = grid.m;
  if (static_cast<int>(ic.u.size()) != m + 1 || static_cast<int>(ic.p.size()) != m + 1 ||
      static_cast<int>(ic.v.size()) != cfg.n)
    throw std::invalid_argument("initial state does not match the grid and configuration");
  for (const auto& rowv : ic.v)
    if (static_cast<int>(rowv.size()) != m + 1)
      throw std::invalid_argument("initial state does not match the grid and configuration");
  if (ctl.kind == Controller::Kind::backstepping && ctl.ks == nullptr)
    throw std::invalid_argument("backstepping controller requires kernels");
  if (ctl.kind == Controller::Kind::signal && !ctl.u_of_t)
    throw std::invalid_argument("signal controller requires an input function");

  const double dx = grid.dx();
  const double dt = grid.dt(std::max(cfg.lambda1, cfg.lambda2));
  const double c1 = cfg.lambda1 * dt / dx;
  const double c2 = cfg.lambda2 * dt / dx;
  const long nsteps = static_cast<long>(std::ceil(t_final / dt - 1e-12));

  Trajectory traj;
  traj.dx = dx;
  traj.dt = dt;

  StateSnapshot state = ic;
  state.t = 0.0;

  auto feedback = [&](const Vec& u, const Vec& p, const std::vector<Vec>& v, double t) {
    switch (ctl.kind) {
      case Controller::Kind::open_loop_zero:
        return std::pair<double, double>{cfg.q * p[0], 0.0};
      case Controller::Kind::signal: {
        const double uin = ctl.u_of_t(t);
        return std::pair<double, double>{uin + cfg.q * p[0], uin};
      }
      case Controller::Kind::backstepping:
        return detail::boundary_feedback(u, p, v, *ctl.ks, cfg);
    }
    return std::pair<double, double>{0.0, 0.0};
  };

  // apply the boundary relations to the initial data
  state.p[m] = cfg.rho * state.u[m];
  auto [u0_init, U_init] = feedback(state.u, state.p, state.v, 0.0);
  state.u[0] = u0_init;

  auto record = [&](double U) {
    StepRecord r;
    r.t = state.t;
    r.U = U;
    r.norm_u = l2_norm(state.u, dx);
    r.norm_p = l2_norm(state.p, dx);
    r.norm_v = l2_norm_rows(state.v, dx);
    if (opt.tracker) opt.tracker(state, r);
    traj.steps.push_back(r);
  };

  record(U_init);
  traj.frames.push_back(state);

  Vec unew(m + 1), pnew(m + 1);
  std::vector<Vec> vnew(cfg.n, Vec(m + 1));
  for (long k = 1; k <= nsteps; ++k) {
    const double t_new = k * dt;
    for (int j = 1; j <= m; ++j) {
      double src = cfg.sigma12 * state.p[j];
      for (int c = 0; c < cfg.n; ++c) src += cfg.theta1[c] * state.v[c][j];
      unew[j] = state.u[j] - c1 * (state.u[j] - state.u[j - 1]) + dt * src;
    }
    for (int j = 0; j < m; ++j) {
      double src = cfg.sigma21 * state.u[j];
      for (int c = 0; c < cfg.n; ++c) src += cfg.theta2[c] * state.v[c][j];
      pnew[j] = state.p[j] + c2 * (state.p[j + 1] - state.p[j]) + dt * src;
    }
    for (int r = 0; r < cfg.n; ++r)
      for (int j = 0; j <= m; ++j) {
        double src = cfg.omega1[r] * state.u[j] + cfg.omega2[r] * state.p[j];
        for (int c = 0; c < cfg.n; ++c) src += cfg.psi.at(r, c) * state.v[c][j];
        vnew[r][j] = state.v[r][j] + dt * src;
      }
    pnew[m] = cfg.rho * unew[m];
    auto [u0, U] = feedback(unew, pnew, vnew, t_new);
    unew[0] = u0;

    state.t = t_new;
    state.u.swap(unew);
    state.p.swap(pnew);
    state.v.swap(vnew);

    if (!state.finite() || state.max_abs() > opt.abort_threshold) {
      traj.aborted = true;
      traj.abort_step = static_cast<int>(k);
      record(U);
      traj.frames.push_back(state);
      break;
    }
    record(U);
    if (k % opt.stride == 0 || k == nsteps) traj.frames.push_back(state);
  }
  return traj;
}

// Simplified scalar cascade: one rightward transport feeding one scalar
// zero-speed equation v_t = psi v + omega u, inflow u(t,0) = U(t).
inline Trajectory simulate_simplified_fd(const SimplifiedConfig& scfg, const Grid& grid,
                                         const Vec& u0, const Vec& v0,
                                         const std::function<double(double)>& input,
                                         double t_final, int stride = 10) {
  if (!(scfg.lambda > 0.0)) throw std::invalid_argument("transport speed must be positive");
  if (!(t_final > 0.0)) throw std::invalid_argument("final time must be positive");
  if (stride < 1) throw std::invalid_argument("snapshot stride must be >= 1");
  const int m = grid.m;
  if (static_cast<int>(u0.size()) != m + 1 || static_cast<int>(v0.size()) != m + 1)
    throw std::invalid_argument("initial state does not match the grid");
  if (!input) throw std::invalid_argument("input signal required");

  const double dx = grid.dx();
  const double dt = grid.dt(scfg.lambda);
  const double c = scfg.lambda * dt / dx;
  const long nsteps = static_cast<long>(std::ceil(t_final / dt - 1e-12));

  Trajectory traj;
  traj.dx = dx;
  traj.dt = dt;

  StateSnapshot state;
  state.t = 0.0;
  state.u = u0;
  state.p.assign(m + 1, 0.0);
  state.v.assign(1, v0);
  state.u[0] = input(0.0);

  auto record = [&](double U) {
    StepRecord r;
    r.t = state.t;
    r.U = U;
    r.norm_u = l2_norm(state.u, dx);
    r.norm_p = 0.0;
    r.norm_v = l2_norm_rows(state.v, dx);
    traj.steps.push_back(r);
  };
  record(state.u[0]);
  traj.frames.push_back(state);

  Vec unew(m + 1), vnew(m + 1);
  for (long k = 1; k <= nsteps; ++k) {
    const double t_new = k * dt;
    for (int j = 1; j <= m; ++j) unew[j] = state.u[j] - c * (state.u[j] - state.u[j - 1]);
    for (int j = 0; j <= m; ++j)
      vnew[j] = state.v[0][j] + dt * (scfg.psi * state.v[0][j] + scfg.omega * state.u[j]);
    unew[0] = input(t_new);

    state.t = t_new;
    state.u.swap(unew);
    state.v[0].swap(vnew);

    if (!state.finite() || state.max_abs() > 1e12) {
      traj.aborted = true;
      traj.abort_step = static_cast<int>(k);
      record(state.u[0]);
      traj.frames.push_back(state);
      break;
    }
    record(state.u[0]);
    if (k % stride == 0 || k == nsteps) traj.frames.push_back(state);
  }
  return traj;
}

// Exact solution of the simplified cascade by the method of characteristics,
// with the zero-speed integral split at the characteristic crossing and each
// piece integrated by composite trapezoid.
inline Trajectory simulate_simplified_exact(const SimplifiedConfig& scfg,
                                            const std::function<double(double)>& u0,
                                            const std::function<double(double)>& v0,
                                            const std::function<double(double)>& input,
                                            const std::vector<double>& times, const Grid& grid) {
  if (!(scfg.lambda > 0.0)) throw std::invalid_argument("transport speed must be positive");
  if (!u0 || !v0 || !input) throw std::invalid_argument("initial data and input signal required");
  if (times.empty()) throw std::invalid_argument("at least one evaluation time required");
  for (size_t i = 0; i < times.size(); ++i) {
    if (times[i] < 0.0) throw std::invalid_argument("evaluation times must be nonnegative");
    if (i > 0 && times[i] <= times[i - 1])
      throw std::invalid_argument("evaluation times must be strictly increasing");
  }
  const int m = grid.m;
  const double dx = grid.dx();
  const double dt = grid.dt(scfg.lambda);
  const double substep = dt / 4.0;

  auto u_exact = [&](double t, double x) {
    return t <= x / scfg.lambda ? u0(x - scfg.lambda * t) : input(t - x / scfg.lambda);
  };
  auto integrate = [&](double a, double b, double t, double x) {
    if (b <= a) return 0.0;
    const int np = std::max(1, static_cast<int>(std::ceil((b - a) / substep)));
    const double hs = (b - a) / np;
    auto f = [&](double s) { return std::exp(scfg.psi * (t - s)) * u_exact(s, x); };
    double acc = 0.5 * (f(a) + f(b));
    for (int i = 1; i < np; ++i) acc += f(a + i * hs);
    return acc * hs;
  };

  Trajectory traj;
  traj.dx = dx;
  traj.dt = dt;
  for (double t : times) {
    StateSnapshot s;
    s.t = t;
    s.u.assign(m + 1, 0.0);
    s.p.assign(m + 1, 0.0);
    s.v.assign(1, Vec(m + 1, 0.0));
    for (int j = 0; j <= m; ++j) {
      const double x = j * dx;
      s.u[j] = u_exact(t, x);
      const double split = std::min(t, x / scfg.lambda);
      s.v[0][j] = std::exp(scfg.psi * t) * v0(x) +
                  scfg.omega * (integrate(0.0, split, t, x) + integrate(split, t, t, x));
    }
    StepRecord r;
    r.t = t;
    r.U = input(t);
    r.norm_u = l2_norm(s.u, dx);
    r.norm_p = 0.0;
    r.norm_v = l2_norm_rows(s.v, dx);
    traj.steps.push_back(r);
    traj.frames.push_back(std::move(s));
  }
  return traj;
}

}  // namespace backstep
