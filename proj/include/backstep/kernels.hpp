#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "backstep/matops.hpp"
#include "backstep/model.hpp"

namespace backstep {

// Discretized transformation kernels on the triangle {0 <= x <= xi <= 1}.
// Fields are stored as full (mk+1)^2 row-major arrays; only entries with
// j >= i are meaningful.
struct KernelSet {
  int mk = 0;
  int n = 0;
  Vec K1, K2, Q1, Q2;
  std::vector<Vec> G, R;  // n components each
  int iterations = 0;
  double last_delta = 0.0;

  double h() const { return 1.0 / mk; }
  size_t idx(int i, int j) const { return static_cast<size_t>(i) * (mk + 1) + j; }
};

struct KernelResiduals {
  double k1 = 0.0, k2 = 0.0, q1 = 0.0, q2 = 0.0, g = 0.0, r = 0.0;
  double max_equation() const { return std::max(std::max(k1, k2), std::max(q1, q2)); }
};

// State-transition factor e^{psi (xi-x)/lambda_k}.
inline Mat eval_transition(const PlantConfig& cfg, double x, double xi, int which) {
  if (which != 1 && which != 2) throw std::invalid_argument("transition index must be 1 or 2");
  const double lam = which == 1 ? cfg.lambda1 : cfg.lambda2;
  return expm(cfg.psi, (xi - x) / lam);
}

namespace detail {

// Row vector times matrix, n small.
inline void row_times_mat(const Vec& row, const Mat& m, Vec& out) {
  const int n = m.n;
  for (int j = 0; j < n; ++j) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += row[i] * m.at(i, j);
    out[j] = s;
  }
}

struct TransitionTable {
  // positive[d] = e^{psi d h / lambda1}, negative[d] = e^{-psi d h / lambda2}
  std::vector<Mat> positive, negative;
  std::vector<Vec> theta1_pos, theta2_neg;  // theta1 * positive[d], theta2 * negative[d]
};

inline TransitionTable make_transition_table(const PlantConfig& cfg, int mk) {
  TransitionTable t;
  const double h = 1.0 / mk;
  const Mat step_pos = expm(cfg.psi, h / cfg.lambda1);
  const Mat step_neg = expm(cfg.psi, -h / cfg.lambda2);
  t.positive.resize(mk + 1);
  t.negative.resize(mk + 1);
  t.positive[0] = Mat::identity(cfg.n);
  t.negative[0] = Mat::identity(cfg.n);
  for (int d = 1; d <= mk; ++d) {
    t.positive[d] = t.positive[d - 1] * step_pos;
    t.negative[d] = t.negative[d - 1] * step_neg;
  }
  t.theta1_pos.assign(mk + 1, Vec(cfg.n, 0.0));
  t.theta2_neg.assign(mk + 1, Vec(cfg.n, 0.0));
  for (int d = 0; d <= mk; ++d) {
    row_times_mat(cfg.theta1, t.positive[d], t.theta1_pos[d]);
    row_times_mat(cfg.theta2, t.negative[d], t.theta2_neg[d]);
  }
  return t;
}

}  // namespace detail

// Solves the kernel boundary-value problem by successive-approximation
// sweeps: the two diagonal-direction kernels integrate backward from the
// xi = 1 edge, the two cross-direction kernels integrate from the diagonal
// (semi-Lagrangian single steps with linear interpolation at the foot), and
// the zero-speed kernels are refreshed from their explicit integral
// formulas each sweep.
inline KernelSet solve_direct_kernels(const PlantConfig& cfg, int mk, double tol = 1e-9,
                                      int max_iter = 200) {
  require_valid(cfg);
  if (mk < 16) throw std::invalid_argument("kernel grid must have at least 16 cells");
  if (!(tol > 0.0)) throw std::invalid_argument("kernel tolerance must be positive");

  const int n = cfg.n;
  const int np1 = mk + 1;
  const double h = 1.0 / mk;
  const double l1 = cfg.lambda1, l2 = cfg.lambda2;
  const double k2_diag = -cfg.sigma12 / (l1 + l2);
  const double q1_diag = cfg.sigma21 / (l1 + l2);
  Vec g_diag(n), r_diag(n);
  for (int c = 0; c < n; ++c) {
    g_diag[c] = -cfg.theta1[c] / l1;
    r_diag[c] = cfg.theta2[c] / l2;
  }
  const double k1_edge_factor = l2 * cfg.rho / l1;
  const double q2_edge_factor = l1 / (l2 * cfg.rho);

  const detail::TransitionTable tab = detail::make_transition_table(cfg, mk);

  KernelSet ks;
  ks.mk = mk;
  ks.n = n;
  const size_t sz = static_cast<size_t>(np1) * np1;
  ks.K1.assign(sz, k1_edge_factor * k2_diag);
  ks.K2.assign(sz, k2_diag);
  ks.Q1.assign(sz, q1_diag);
  ks.Q2.assign(sz, q2_edge_factor * q1_diag);
  ks.G.assign(n, Vec());
  ks.R.assign(n, Vec());
  for (int c = 0; c < n; ++c) {
    ks.G[c].assign(sz, g_diag[c]);
    ks.R[c].assign(sz, r_diag[c]);
  }

  auto id = [np1](int i, int j) { return static_cast<size_t>(i) * np1 + j; };
  auto g_dot_omega1 = [&](size_t k) {
    double s = 0.0;
    for (int c = 0; c < n; ++c) s += ks.G[c][k] * cfg.omega1[c];
    return s;
  };
  auto g_dot_omega2 = [&](size_t k) {
    double s = 0.0;
    for (int c = 0; c < n; ++c) s += ks.G[c][k] * cfg.omega2[c];
    return s;
  };
  auto r_dot_omega1 = [&](size_t k) {
    double s = 0.0;
    for (int c = 0; c < n; ++c) s += ks.R[c][k] * cfg.omega1[c];
    return s;
  };
  auto r_dot_omega2 = [&](size_t k) {
    double s = 0.0;
    for (int c = 0; c < n; ++c) s += ks.R[c][k] * cfg.omega2[c];
    return s;
  };

  double delta = 0.0;
  auto track = [&delta](double& slot, double value) {
    delta = std::max(delta, std::abs(value - slot));
    slot = value;
  };

  // Backward integration along xi - x = const from the xi = 1 edge.
  auto march_k1 = [&]() {
    for (int i = 0; i <= mk; ++i) track(ks.K1[id(i, mk)], k1_edge_factor * ks.K2[id(i, mk)]);
    for (int d = 0; d < mk; ++d)
      for (int i = mk - d - 1; i >= 0; --i) {
        const size_t up = id(i + 1, i + d + 1);
        const double rhs = (-cfg.sigma21 * ks.K2[up] - g_dot_omega1(up)) / l1;
        track(ks.K1[id(i, i + d)], ks.K1[up] - h * rhs);
      }
  };
  auto march_q2 = [&]() {
    for (int i = 0; i <= mk; ++i) track(ks.Q2[id(i, mk)], q2_edge_factor * ks.Q1[id(i, mk)]);
    for (int d = 0; d < mk; ++d)
      for (int i = mk - d - 1; i >= 0; --i) {
        const size_t up = id(i + 1, i + d + 1);
        const double rhs = (cfg.sigma12 * ks.Q1[up] + r_dot_omega2(up)) / l2;
        track(ks.Q2[id(i, i + d)], ks.Q2[up] - h * rhs);
      }
  };

  // Single semi-Lagrangian step toward the diagonal for the kernels whose
  // characteristics cross rows: speed_x forward in x, one row down in xi.
  auto march_cross = [&](Vec& field, double field_diag, double speed_x, double speed_xi,
                         auto rhs_at) {
    const double row_step = h / speed_xi;           // s to drop one row
    const double shift = speed_x / speed_xi;        // lattice x-shift per row
    for (int j = 1; j <= mk; ++j)
      for (int i = j - 1; i >= 0; --i) {
        const int d = j - i;
        const double s_star = d * h / (speed_x + speed_xi);
        if (s_star <= row_step * (1.0 + 1e-12)) {
          // foot on the diagonal at lattice coordinate f
          const double f = i + speed_x * d / (speed_x + speed_xi);
          int k0 = static_cast<int>(f);
          if (k0 > mk - 1) k0 = mk - 1;
          const double th = f - k0;
          const double value = field_diag;
          const double rhs = rhs_at(k0, k0, k0 + 1, k0 + 1, th, true);
          track(field[id(i, j)], value - s_star * rhs);
        } else {
          const double f = i + shift;
          int k0 = static_cast<int>(f);
          if (k0 > j - 2) k0 = j - 2;
          const double th = f - k0;
          const size_t a = id(k0, j - 1), b = id(k0 + 1, j - 1);
          const double value = (1.0 - th) * field[a] + th * field[b];
          const double rhs = rhs_at(k0, j - 1, k0 + 1, j - 1, th, false);
          track(field[id(i, j)], value - row_step * rhs);
        }
      }
  };

  auto k2_rhs = [&](int ia, int ja, int ib, int jb, double th, bool on_diag) {
    double k1v, gdot;
    if (on_diag) {
      k1v = (1.0 - th) * ks.K1[id(ia, ja)] + th * ks.K1[id(ib, jb)];
      gdot = 0.0;
      for (int c = 0; c < n; ++c) gdot += g_diag[c] * cfg.omega2[c];
    } else {
      const size_t a = id(ia, ja), b = id(ib, jb);
      k1v = (1.0 - th) * ks.K1[a] + th * ks.K1[b];
      gdot = (1.0 - th) * g_dot_omega2(a) + th * g_dot_omega2(b);
    }
    return -cfg.sigma12 * k1v - gdot;
  };
  auto q1_rhs = [&](int ia, int ja, int ib, int jb, double th, bool on_diag) {
    double q2v, rdot;
    if (on_diag) {
      q2v = (1.0 - th) * ks.Q2[id(ia, ja)] + th * ks.Q2[id(ib, jb)];
      rdot = 0.0;
      for (int c = 0; c < n; ++c) rdot += r_diag[c] * cfg.omega1[c];
    } else {
      const size_t a = id(ia, ja), b = id(ib, jb);
      q2v = (1.0 - th) * ks.Q2[a] + th * ks.Q2[b];
      rdot = (1.0 - th) * r_dot_omega1(a) + th * r_dot_omega1(b);
    }
    return cfg.sigma21 * q2v + rdot;
  };

  // Explicit integral formulas for the zero-speed kernels, evaluated with
  // an incremental trapezoid recurrence down each column.
  Vec tvec(n), svec(n), fcur(n), fnext(n), tmp(n);
  auto refresh_g_r = [&]() {
    for (int j = 0; j <= mk; ++j) {
      for (int c = 0; c < n; ++c) {
        track(ks.G[c][id(j, j)], g_diag[c]);
        track(ks.R[c][id(j, j)], r_diag[c]);
        tvec[c] = 0.0;
        svec[c] = 0.0;
      }
      for (int i = j - 1; i >= 0; --i) {
        const size_t cur = id(i, j), nxt = id(i + 1, j);
        const int d = j - i;
        for (int c = 0; c < n; ++c) {
          fcur[c] = ks.K1[cur] * cfg.theta1[c] + ks.K2[cur] * cfg.theta2[c];
          fnext[c] = ks.K1[nxt] * cfg.theta1[c] + ks.K2[nxt] * cfg.theta2[c];
          tmp[c] = tvec[c] + 0.5 * fnext[c];
        }
        detail::row_times_mat(tmp, tab.positive[1], tvec);
        for (int c = 0; c < n; ++c) {
          tvec[c] += 0.5 * fcur[c];
          track(ks.G[c][cur], -tab.theta1_pos[d][c] / l1 + h * tvec[c] / l1);
        }
        for (int c = 0; c < n; ++c) {
          fcur[c] = ks.Q1[cur] * cfg.theta1[c] + ks.Q2[cur] * cfg.theta2[c];
          fnext[c] = ks.Q1[nxt] * cfg.theta1[c] + ks.Q2[nxt] * cfg.theta2[c];
          tmp[c] = svec[c] + 0.5 * fnext[c];
        }
        detail::row_times_mat(tmp, tab.negative[1], svec);
        for (int c = 0; c < n; ++c) {
          svec[c] += 0.5 * fcur[c];
          track(ks.R[c][cur], tab.theta2_neg[d][c] / l2 - h * svec[c] / l2);
        }
      }
    }
  };

  int sweep = 0;
  for (; sweep < max_iter; ++sweep) {
    delta = 0.0;
    march_k1();
    march_q2();
    march_cross(ks.K2, k2_diag, l1, l2, k2_rhs);
    march_cross(ks.Q1, q1_diag, l2, l1, q1_rhs);
    refresh_g_r();
    if (delta <= tol) break;
  }
  ks.iterations = sweep + 1;
  ks.last_delta = delta;
  if (delta > tol)
    throw std::runtime_error("kernel solve did not converge after " + std::to_string(max_iter) +
                             " sweeps; last change " + std::to_string(delta));

  // One more backward pass so the edge relations hold against the final
  // cross-direction fields to machine precision.
  march_k1();
  march_q2();
  return ks;
}

// Worst violation of the diagonal data and the xi = 1 edge relations.
inline double kernel_data_error(const KernelSet& ks, const PlantConfig& cfg) {
  const int mk = ks.mk, np1 = mk + 1;
  const double l1 = cfg.lambda1, l2 = cfg.lambda2;
  auto id = [np1](int i, int j) { return static_cast<size_t>(i) * np1 + j; };
  double err = 0.0;
  for (int i = 0; i <= mk; ++i) {
    err = std::max(err, std::abs(ks.K2[id(i, i)] + cfg.sigma12 / (l1 + l2)));
    err = std::max(err, std::abs(ks.Q1[id(i, i)] - cfg.sigma21 / (l1 + l2)));
    for (int c = 0; c < ks.n; ++c) {
      err = std::max(err, std::abs(ks.G[c][id(i, i)] + cfg.theta1[c] / l1));
      err = std::max(err, std::abs(ks.R[c][id(i, i)] - cfg.theta2[c] / l2));
    }
    err = std::max(err, std::abs(ks.K1[id(i, mk)] - l2 * cfg.rho / l1 * ks.K2[id(i, mk)]));
    err = std::max(err, std::abs(ks.Q2[id(i, mk)] - l1 / (l2 * cfg.rho) * ks.Q1[id(i, mk)]));
  }
  return err;
}

// Residuals of the integro-differential kernel equations: centered
// differences where both neighbors lie in the triangle, one-sided at edges,
// with the zero-speed kernels recomputed by direct trapezoid quadrature.
inline KernelResiduals kernel_residual(const KernelSet& ks, const PlantConfig& cfg) {
  const int mk = ks.mk, n = ks.n, np1 = mk + 1;
  const double h = ks.h();
  const double l1 = cfg.lambda1, l2 = cfg.lambda2;
  auto id = [np1](int i, int j) { return static_cast<size_t>(i) * np1 + j; };

  const detail::TransitionTable tab = detail::make_transition_table(cfg, mk);

  // Independent evaluation of the explicit integral formulas.
  std::vector<Vec> ghat(n, Vec(static_cast<size_t>(np1) * np1, 0.0));
  std::vector<Vec> rhat(n, Vec(static_cast<size_t>(np1) * np1, 0.0));
  Vec accum_g(n), accum_r(n), frow(n);
  for (int j = 0; j <= mk; ++j)
    for (int i = j; i >= 0; --i) {
      for (int c = 0; c < n; ++c) {
        accum_g[c] = 0.0;
        accum_r[c] = 0.0;
      }
      for (int k = i; k <= j; ++k) {
        const double w = (k == i || k == j) ? 0.5 : 1.0;
        const size_t node = id(k, j);
        for (int c = 0; c < n; ++c) frow[c] = ks.K1[node] * cfg.theta1[c] + ks.K2[node] * cfg.theta2[c];
        const Mat& pos = tab.positive[k - i];
        for (int col = 0; col < n; ++col) {
          double s = 0.0;
          for (int rr = 0; rr < n; ++rr) s += frow[rr] * pos.at(rr, col);
          accum_g[col] += w * s;
        }
        for (int c = 0; c < n; ++c) frow[c] = ks.Q1[node] * cfg.theta1[c] + ks.Q2[node] * cfg.theta2[c];
        const Mat& neg = tab.negative[k - i];
        for (int col = 0; col < n; ++col) {
          double s = 0.0;
          for (int rr = 0; rr < n; ++rr) s += frow[rr] * neg.at(rr, col);
          accum_r[col] += w * s;
        }
      }
      const int d = j - i;
      for (int c = 0; c < n; ++c) {
        ghat[c][id(i, j)] = -tab.theta1_pos[d][c] / l1 + (i == j ? 0.0 : h * accum_g[c] / l1);
        rhat[c][id(i, j)] = tab.theta2_neg[d][c] / l2 - (i == j ? 0.0 : h * accum_r[c] / l2);
      }
    }

  KernelResiduals res;
  for (int c = 0; c < n; ++c)
    for (int j = 0; j <= mk; ++j)
      for (int i = 0; i <= j; ++i) {
        res.g = std::max(res.g, std::abs(ks.G[c][id(i, j)] - ghat[c][id(i, j)]));
        res.r = std::max(res.r, std::abs(ks.R[c][id(i, j)] - rhat[c][id(i, j)]));
      }

  // df/dx at (i,j): neighbors (i-1,j), (i+1,j) subject to i+1 <= j.
  auto dx = [&](const Vec& f, int i, int j, bool& ok) {
    const bool lo = i - 1 >= 0, hi = i + 1 <= j;
    ok = lo || hi;
    if (lo && hi) return (f[id(i + 1, j)] - f[id(i - 1, j)]) / (2.0 * h);
    if (hi) return (f[id(i + 1, j)] - f[id(i, j)]) / h;
    if (lo) return (f[id(i, j)] - f[id(i - 1, j)]) / h;
    return 0.0;
  };
  // df/dxi at (i,j): neighbors (i,j-1) subject to j-1 >= i, and (i,j+1).
  auto dxi = [&](const Vec& f, int i, int j, bool& ok) {
    const bool lo = j - 1 >= i, hi = j + 1 <= mk;
    ok = lo || hi;
    if (lo && hi) return (f[id(i, j + 1)] - f[id(i, j - 1)]) / (2.0 * h);
    if (hi) return (f[id(i, j + 1)] - f[id(i, j)]) / h;
    if (lo) return (f[id(i, j)] - f[id(i, j - 1)]) / h;
    return 0.0;
  };

  for (int j = 0; j <= mk; ++j)
    for (int i = 0; i <= j; ++i) {
      const size_t node = id(i, j);
      bool okx, okxi;
      double gdot1 = 0.0, gdot2 = 0.0, rdot1 = 0.0, rdot2 = 0.0;
      for (int c = 0; c < n; ++c) {
        gdot1 += ghat[c][node] * cfg.omega1[c];
        gdot2 += ghat[c][node] * cfg.omega2[c];
        rdot1 += rhat[c][node] * cfg.omega1[c];
        rdot2 += rhat[c][node] * cfg.omega2[c];
      }
      {
        const double ax = dx(ks.K1, i, j, okx);
        const double axi = dxi(ks.K1, i, j, okxi);
        if (okx && okxi)
          res.k1 = std::max(res.k1, std::abs(l1 * ax + l1 * axi + cfg.sigma21 * ks.K2[node] + gdot1));
      }
      {
        const double ax = dx(ks.K2, i, j, okx);
        const double axi = dxi(ks.K2, i, j, okxi);
        if (okx && okxi)
          res.k2 = std::max(res.k2, std::abs(l1 * ax - l2 * axi + cfg.sigma12 * ks.K1[node] + gdot2));
      }
      {
        const double ax = dx(ks.Q1, i, j, okx);
        const double axi = dxi(ks.Q1, i, j, okxi);
        if (okx && okxi)
          res.q1 = std::max(res.q1, std::abs(l2 * ax - l1 * axi - cfg.sigma21 * ks.Q2[node] - rdot1));
      }
      {
        const double ax = dx(ks.Q2, i, j, okx);
        const double axi = dxi(ks.Q2, i, j, okxi);
        if (okx && okxi)
          res.q2 = std::max(res.q2, std::abs(l2 * ax + l2 * axi - cfg.sigma12 * ks.Q1[node] - rdot2));
      }
    }
  return res;
}

}  // namespace backstep
