#pragma once

// Post-processing layer: Lyapunov certificates for the stabilized plant, and
// the subspace machinery (operator P, growth functional R, moving-frame
// mismatch w, two-point ODE reduction) that witnesses why the scalar
// transport-ODE cascade cannot be stabilized off the subspace S.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "backstep/matops.hpp"
#include "backstep/model.hpp"
#include "backstep/transforms.hpp"

namespace backstep {

// Constants of the weighted-norm functional
//   V = int (A/l1) e^{-mu x} alpha^2 + (B/l2) e^{mu x} beta^2 dx
//     + 1/2 int v' e^{-vartheta x} v dx
// together with the certified decay rate K.
struct LyapunovParams {
  double rho_star = 0.0;  // decay margin of the symmetric part of the ODE block
  double mu = 0.0;
  double vartheta = 0.0;
  double A = 0.0;
  double B = 0.0;
  double K = 0.0;
  double nbar1 = 0.0;  // lattice sup norms of the target coupling fields
  double nbar2 = 0.0;
  double nbar3 = 0.0;
};

namespace detail {

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline void require_simplified(const SimplifiedConfig& scfg) {
  if (!(scfg.lambda > 0.0)) throw std::invalid_argument("transport speed must be positive");
  if (!std::isfinite(scfg.psi) || !std::isfinite(scfg.omega))
    throw std::invalid_argument("simplified config has a non-finite coefficient");
}

}  // namespace detail

// Builds the functional constants from the plant data and the target coupling
// fields. Returns nothing when the symmetric part of the ODE block is not
// negative definite, in which case this certificate does not apply.
inline std::optional<LyapunovParams> lyapunov_constants(const PlantConfig& cfg,
                                                        const InverseKernelSet& iks) {
  require_valid(cfg);
  if (iks.n != cfg.n) throw std::invalid_argument("inverse kernel set does not match config");
  const std::optional<double> margin = sym_decay_margin(cfg.psi);
  if (!margin || !(*margin > 0.0)) return std::nullopt;

  LyapunovParams lp;
  lp.rho_star = *margin;
  double s1 = 0.0, s2 = 0.0, s3 = 0.0;
  for (int i = 0; i <= iks.mk; ++i)
    for (int j = i; j <= iks.mk; ++j) {
      const size_t id = iks.idx(i, j);
      double a = 0.0, b = 0.0, c = 0.0;
      for (int r = 0; r < cfg.n; ++r) {
        a += iks.N1[r][id] * iks.N1[r][id];
        b += iks.N2[r][id] * iks.N2[r][id];
        for (int q = 0; q < cfg.n; ++q) {
          const double e = iks.N3[static_cast<size_t>(r) * cfg.n + q][id];
          c += e * e;
        }
      }
      s1 = std::max(s1, a);
      s2 = std::max(s2, b);
      s3 = std::max(s3, c);
    }
  lp.nbar1 = std::sqrt(s1);
  lp.nbar2 = std::sqrt(s2);
  lp.nbar3 = std::sqrt(s3);

  const double o1 = detail::dot(cfg.omega1, cfg.omega1);
  const double o2 = detail::dot(cfg.omega2, cfg.omega2);
  lp.mu = std::max(2.0 * (o1 + s1) / lp.rho_star, 2.0 * (o2 + s2) / lp.rho_star) + 1.0;
  lp.vartheta = 16.0 * s3 / (lp.rho_star * lp.rho_star);
  lp.B = 1.0;
  // A large enough that both boundary terms of dV/dt are nonpositive.
  lp.A = cfg.rho * cfg.rho * std::exp(2.0 * lp.mu) + 1.0;
  lp.K = std::min({cfg.lambda1 / lp.A, cfg.lambda2 / lp.B, 0.5 * lp.rho_star});
  return lp;
}

inline double lyapunov_value(const Vec& alpha, const Vec& beta, const std::vector<Vec>& v,
                             const LyapunovParams& lp, const PlantConfig& cfg) {
  const size_t count = alpha.size();
  if (count < 2 || beta.size() != count)
    throw std::invalid_argument("alpha and beta must share a grid with at least two nodes");
  if (v.size() != static_cast<size_t>(cfg.n))
    throw std::invalid_argument("v must have n component rows");
  for (const Vec& row : v)
    if (row.size() != count) throw std::invalid_argument("v rows must match the grid");

  const int m = static_cast<int>(count) - 1;
  const double h = 1.0 / m;
  Vec f(count);
  for (int j = 0; j <= m; ++j) {
    const double x = h * j;
    double s = (lp.A / cfg.lambda1) * std::exp(-lp.mu * x) * alpha[j] * alpha[j] +
               (lp.B / cfg.lambda2) * std::exp(lp.mu * x) * beta[j] * beta[j];
    double vv = 0.0;
    for (int r = 0; r < cfg.n; ++r) vv += v[r][j] * v[r][j];
    f[j] = s + 0.5 * std::exp(-lp.vartheta * x) * vv;
  }
  return trapz(f, h);
}

namespace detail {

struct DecayIntegral {
  Vec decay;     // e^{-psi x_j / lambda}
  Vec integral;  // int_0^{x_j} e^{-psi (x_j - s)/lambda} u(s) ds
};

// One exponential per node plus a running weighted trapezoid; the recurrence
// I_j = e^{-psi h/lambda} I_{j-1} + (h/2)(e^{-psi h/lambda} u_{j-1} + u_j)
// reproduces the plain trapezoid rule applied to e^{psi s/lambda} u(s).
inline DecayIntegral decay_integral(const SimplifiedConfig& scfg, const Vec& u,
                                    const Grid& grid) {
  require_simplified(scfg);
  if (u.size() != static_cast<size_t>(grid.m) + 1)
    throw std::invalid_argument("array size does not match grid");
  const double h = grid.dx();
  const double step = std::exp(-scfg.psi * h / scfg.lambda);
  DecayIntegral di;
  di.decay.assign(u.size(), 1.0);
  di.integral.assign(u.size(), 0.0);
  for (int j = 1; j <= grid.m; ++j) {
    di.decay[j] = std::exp(-scfg.psi * grid.node(j) / scfg.lambda);
    di.integral[j] = di.integral[j - 1] * step + 0.5 * h * (step * u[j - 1] + u[j]);
  }
  return di;
}

inline Vec cumtrapz(const Vec& f, double h) {
  Vec c(f.size(), 0.0);
  for (size_t j = 1; j < f.size(); ++j) c[j] = c[j - 1] + 0.5 * h * (f[j - 1] + f[j]);
  return c;
}

}  // namespace detail

// P(u,v)(x) = v(x) - e^{-psi x/lambda} v(0) + (omega/lambda) int_0^x e^{-psi (x-s)/lambda} u ds.
// States with P(u,v) = 0 form the subspace on which the cascade is stabilizable.
inline Vec operator_P(const SimplifiedConfig& scfg, const Vec& u, const Vec& v,
                      const Grid& grid) {
  if (v.size() != u.size()) throw std::invalid_argument("u and v must share the grid");
  const detail::DecayIntegral di = detail::decay_integral(scfg, u, grid);
  const double gain = scfg.omega / scfg.lambda;
  Vec p(u.size());
  for (size_t j = 0; j < u.size(); ++j)
    p[j] = v[j] - di.decay[j] * v[0] + gain * di.integral[j];
  return p;
}

// Inverts the defining relation: the returned v makes the discrete P vanish
// to roundoff because both sides evaluate the same decay/integral recurrence.
inline Vec make_subspace_member(const SimplifiedConfig& scfg, double v_at_zero,
                                const Vec& u, const Grid& grid) {
  const detail::DecayIntegral di = detail::decay_integral(scfg, u, grid);
  const double gain = scfg.omega / scfg.lambda;
  Vec v(u.size());
  for (size_t j = 0; j < u.size(); ++j)
    v[j] = di.decay[j] * v_at_zero - gain * di.integral[j];
  return v;
}

struct SubspaceCheck {
  bool member = false;
  double max_abs_p = 0.0;
  double tol = 0.0;
};

inline SubspaceCheck in_subspace_S(const SimplifiedConfig& scfg, const Vec& u, const Vec& v,
                                   const Grid& grid, double tol = 0.0) {
  SubspaceCheck out;
  double vmax = 0.0;
  for (double x : v) vmax = std::max(vmax, std::abs(x));
  out.tol = tol > 0.0 ? tol : 1e-6 * (1.0 + vmax);
  const Vec p = operator_P(scfg, u, v, grid);
  for (double x : p) out.max_abs_p = std::max(out.max_abs_p, std::abs(x));
  out.member = out.max_abs_p <= out.tol;
  return out;
}

// R pairs the current state against the zero-mean profile h built once from
// the initial data; off the subspace R grows like e^{psi t}, which caps the
// achievable decay of any feedback.
struct GrowthFunctional {
  double value = 0.0;
  double constant = 0.0;  // mean of phi over [0,1]
  Vec phi;
  Vec h;  // phi - constant; integrates to zero by construction
};

inline GrowthFunctional functional_R(const SimplifiedConfig& scfg, const Vec& u0,
                                     const Vec& v0, const Vec& u, const Vec& v,
                                     const Grid& grid) {
  detail::require_simplified(scfg);
  const size_t want = static_cast<size_t>(grid.m) + 1;
  if (u0.size() != want || v0.size() != want || u.size() != want || v.size() != want)
    throw std::invalid_argument("array size does not match grid");
  const double h = grid.dx();

  const Vec cu0 = detail::cumtrapz(u0, h);
  const Vec cv0 = detail::cumtrapz(v0, h);
  GrowthFunctional out;
  out.phi.resize(want);
  for (size_t j = 0; j < want; ++j)
    out.phi[j] = scfg.psi * cv0[j] + scfg.omega * cu0[j] + scfg.lambda * v0[j];
  out.constant = trapz(out.phi, h);
  out.h.resize(want);
  for (size_t j = 0; j < want; ++j) out.h[j] = out.phi[j] - out.constant;

  const Vec cu = detail::cumtrapz(u, h);
  const Vec cv = detail::cumtrapz(v, h);
  Vec prod(want);
  for (size_t j = 0; j < want; ++j)
    prod[j] = out.h[j] * (scfg.psi * cv[j] + scfg.omega * cu[j] + scfg.lambda * v[j]);
  out.value = trapz(prod, h);
  return out;
}

// Same formula as operator_P; named separately because it is the quantity
// tracked along trajectories (it obeys dw/dt = psi w in the moving frame).
inline Vec w_transform(const SimplifiedConfig& scfg, const Vec& u, const Vec& v,
                       const Grid& grid) {
  return operator_P(scfg, u, v, grid);
}

// Two-point reduction: v1 follows the input directly, v2 sees it delayed by
// x1, and w(t) = v1(t - x1) - v2(t) evolves autonomously. The input must
// supply history back to t = -x1; it stands in for the initial transport data.
struct OdePair {
  Vec t;
  Vec v1;
  Vec v2;
  Vec w;  // NaN for t < x1
  double x1 = 0.0;       // delay snapped to the integration lattice
  double w_at_x1 = 0.0;  // variation-of-constants value, independent of the march
};

inline OdePair ode_counterexample(const SimplifiedConfig& scfg, double x1,
                                  const std::function<double(double)>& input,
                                  double t_final, double v1_at_zero = 0.0,
                                  double v2_at_zero = 0.0, double dt = 1e-4) {
  detail::require_simplified(scfg);
  if (!(x1 > 0.0 && x1 <= 1.0)) throw std::invalid_argument("x1 must lie in (0,1]");
  if (!input) throw std::invalid_argument("input signal required");
  if (!(t_final > 0.0) || !(dt > 0.0))
    throw std::invalid_argument("t_final and dt must be positive");

  const std::int64_t kx = std::max<std::int64_t>(1, std::llround(x1 / dt));
  const std::int64_t nsteps = static_cast<std::int64_t>(std::ceil(t_final / dt - 1e-12));
  OdePair out;
  out.x1 = dt * static_cast<double>(kx);
  out.t.resize(nsteps + 1);
  out.v1.resize(nsteps + 1);
  out.v2.resize(nsteps + 1);
  out.w.assign(nsteps + 1, std::numeric_limits<double>::quiet_NaN());
  out.t[0] = 0.0;
  out.v1[0] = v1_at_zero;
  out.v2[0] = v2_at_zero;
  for (std::int64_t i = 0; i < nsteps; ++i) {
    const double t = dt * static_cast<double>(i);
    out.v1[i + 1] = out.v1[i] + dt * (scfg.psi * out.v1[i] + input(t));
    out.v2[i + 1] = out.v2[i] + dt * (scfg.psi * out.v2[i] + input(t - out.x1));
    out.t[i + 1] = dt * static_cast<double>(i + 1);
  }
  for (std::int64_t i = kx; i <= nsteps; ++i) out.w[i] = out.v1[i - kx] - out.v2[i];

  // w(x1) = v1(0) - e^{psi x1} v2(0) - int_{-x1}^0 e^{-psi tau} U(tau) dtau,
  // evaluated by a trapezoid finer than the Euler lattice.
  const std::int64_t nq = 4 * kx;
  const double hq = out.x1 / static_cast<double>(nq);
  double acc = 0.0;
  for (std::int64_t i = 0; i <= nq; ++i) {
    const double tau = -out.x1 + hq * static_cast<double>(i);
    const double wgt = (i == 0 || i == nq) ? 0.5 : 1.0;
    acc += wgt * std::exp(-scfg.psi * tau) * input(tau);
  }
  out.w_at_x1 = v1_at_zero - std::exp(scfg.psi * out.x1) * v2_at_zero - hq * acc;
  return out;
}

// Boundary feedback that works on the subspace: U = -(k/omega) v(t,0). With
// omega = 0 the subspace collapses and the zero input already stabilizes,
// reported through the flag. Decay examples choose k > psi.
struct FeedbackValue {
  double U = 0.0;
  bool zero_coupling = false;
};

inline FeedbackValue subspace_feedback(const SimplifiedConfig& scfg, double k,
                                       double v_at_zero) {
  detail::require_simplified(scfg);
  if (scfg.omega == 0.0) return {0.0, true};
  return {-(k / scfg.omega) * v_at_zero, false};
}

}  // namespace backstep
