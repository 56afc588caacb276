#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "backstep/kernels.hpp"
#include "backstep/model.hpp"

namespace backstep {

// Inverse-transformation kernels and the target-system coupling kernels,
// on the same triangle lattice as the source KernelSet.
struct InverseKernelSet {
  int mk = 0;
  int n = 0;
  Vec L1, L2, M1, M2;
  std::vector<Vec> S, E;   // row-vector fields, n components
  std::vector<Vec> N1, N2; // column-vector fields, n components
  std::vector<Vec> N3;     // n x n matrix field, row-major components
  int iterations = 0;
  double last_delta = 0.0;

  double h() const { return 1.0 / mk; }
  size_t idx(int i, int j) const { return static_cast<size_t>(i) * (mk + 1) + j; }
};

struct TargetState {
  double t = 0.0;
  Vec alpha, beta;
};

struct TargetResidualReport {
  double max_alpha0 = 0.0;          // |alpha(t,0)|
  double max_alpha_transport = 0.0; // d/dt alpha + lambda1 d/dx alpha
  double max_beta_transport = 0.0;  // d/dt beta - lambda2 d/dx beta
  double max_v_residual = 0.0;      // zero-speed target equation
  double max_edge_mismatch = 0.0;   // |beta(t,1) - rho alpha(t,1)|
};

// Piecewise-bilinear sample of a triangle field at (x, xi); the cell that
// straddles the diagonal is interpolated on its upper triangle only.
inline double sample_triangle_field(const Vec& f, int mk, double x, double xi) {
  if (x < 0.0) x = 0.0;
  if (xi > 1.0) xi = 1.0;
  if (x > xi) x = xi;
  const double gx = x * mk, gxi = xi * mk;
  int l = static_cast<int>(gxi);
  if (l > mk - 1) l = mk - 1;
  int k = static_cast<int>(gx);
  if (k > l) k = l;
  const double s = gx - k, t = gxi - l;
  const int np1 = mk + 1;
  auto id = [np1](int i, int j) { return static_cast<size_t>(i) * np1 + j; };
  if (l == k) {
    const double fa = f[id(k, l)], fc = f[id(k, l + 1)], fd = f[id(k + 1, l + 1)];
    return fa + (fd - fc) * s + (fc - fa) * t;
  }
  const double f00 = f[id(k, l)], f10 = f[id(k + 1, l)];
  const double f01 = f[id(k, l + 1)], f11 = f[id(k + 1, l + 1)];
  return (1.0 - s) * ((1.0 - t) * f00 + t * f01) + s * ((1.0 - t) * f10 + t * f11);
}

namespace detail {

inline int state_cells(const StateSnapshot& state) {
  const int m = static_cast<int>(state.u.size()) - 1;
  if (m < 1 || state.p.size() != state.u.size())
    throw std::invalid_argument("state arrays must share a grid with at least two nodes");
  for (const auto& row : state.v)
    if (row.size() != state.u.size()) throw std::invalid_argument("state arrays must share a grid");
  return m;
}

// Integral over [x_i, 1] of sum_f fields[f](x_i, xi) * values[f](xi),
// trapezoid on the state nodes. Fields are sampled when grids differ.
template <typename RowValue>
double trapezoid_row(int i, int m, int mk, RowValue value) {
  if (i == m) return 0.0;
  const double h = 1.0 / m;
  double acc = 0.5 * value(i) + 0.5 * value(m);
  for (int j = i + 1; j < m; ++j) acc += value(j);
  return acc * h;
}

}  // namespace detail

inline TargetState forward_transform(const StateSnapshot& state, const KernelSet& ks) {
  const int m = detail::state_cells(state);
  if (static_cast<int>(state.v.size()) != ks.n)
    throw std::invalid_argument("state has wrong number of zero-speed components");
  TargetState out;
  out.t = state.t;
  out.alpha.assign(m + 1, 0.0);
  out.beta.assign(m + 1, 0.0);
  const bool direct = (m == ks.mk);
  const double dx = 1.0 / m;
  for (int i = 0; i <= m; ++i) {
    const double x = i * dx;
    auto k1 = [&](int j) {
      return direct ? ks.K1[ks.idx(i, j)] : sample_triangle_field(ks.K1, ks.mk, x, j * dx);
    };
    auto k2 = [&](int j) {
      return direct ? ks.K2[ks.idx(i, j)] : sample_triangle_field(ks.K2, ks.mk, x, j * dx);
    };
    auto q1 = [&](int j) {
      return direct ? ks.Q1[ks.idx(i, j)] : sample_triangle_field(ks.Q1, ks.mk, x, j * dx);
    };
    auto q2 = [&](int j) {
      return direct ? ks.Q2[ks.idx(i, j)] : sample_triangle_field(ks.Q2, ks.mk, x, j * dx);
    };
    auto gv = [&](int j) {
      double s = 0.0;
      for (int c = 0; c < ks.n; ++c)
        s += (direct ? ks.G[c][ks.idx(i, j)] : sample_triangle_field(ks.G[c], ks.mk, x, j * dx)) *
             state.v[c][j];
      return s;
    };
    auto rv = [&](int j) {
      double s = 0.0;
      for (int c = 0; c < ks.n; ++c)
        s += (direct ? ks.R[c][ks.idx(i, j)] : sample_triangle_field(ks.R[c], ks.mk, x, j * dx)) *
             state.v[c][j];
      return s;
    };
    out.alpha[i] = state.u[i] - detail::trapezoid_row(i, m, ks.mk, [&](int j) {
                     return k1(j) * state.u[j] + k2(j) * state.p[j] + gv(j);
                   });
    out.beta[i] = state.p[i] - detail::trapezoid_row(i, m, ks.mk, [&](int j) {
                    return q1(j) * state.u[j] + q2(j) * state.p[j] + rv(j);
                  });
  }
  return out;
}

// Boundary feedback U(t) = -q p(t,0) + integral of the x = 0 kernel row
// against the state.
inline double control_law(const StateSnapshot& state, const KernelSet& ks, const PlantConfig& cfg) {
  const int m = detail::state_cells(state);
  const bool direct = (m == ks.mk);
  const double dx = 1.0 / m;
  const double integral = detail::trapezoid_row(0, m, ks.mk, [&](int j) {
    const double xj = j * dx;
    double s = 0.0;
    if (direct) {
      s = ks.K1[ks.idx(0, j)] * state.u[j] + ks.K2[ks.idx(0, j)] * state.p[j];
      for (int c = 0; c < ks.n; ++c) s += ks.G[c][ks.idx(0, j)] * state.v[c][j];
    } else {
      s = sample_triangle_field(ks.K1, ks.mk, 0.0, xj) * state.u[j] +
          sample_triangle_field(ks.K2, ks.mk, 0.0, xj) * state.p[j];
      for (int c = 0; c < ks.n; ++c)
        s += sample_triangle_field(ks.G[c], ks.mk, 0.0, xj) * state.v[c][j];
    }
    return s;
  });
  return -cfg.q * state.p[0] + integral;
}

// Discrete resolvent of the transport-pair Volterra block by Neumann
// iteration L = K + K*L on the lattice quadrature, then the zero-speed
// columns S = (I + L)*(G;R) and the target coupling kernels N1, N2, N3.
inline InverseKernelSet invert_kernels(const KernelSet& ks, const PlantConfig& cfg) {
  const int mk = ks.mk, n = ks.n, np1 = mk + 1;
  const double h = ks.h();
  const int B = 2 * np1;
  auto fid = [np1](int i, int j) { return static_cast<size_t>(i) * np1 + j; };
  auto weight = [mk](int i, int j) {
    if (i == mk) return 0.0;  // empty integration interval
    return (j == i || j == mk) ? 0.5 : 1.0;
  };

  // Quadrature matrix of the (K1 K2; Q1 Q2) block, entries (2i+a, 2j+b).
  Vec tk(static_cast<size_t>(B) * B, 0.0);
  auto mid = [B](int r, int c) { return static_cast<size_t>(r) * B + c; };
  for (int i = 0; i < mk; ++i)
    for (int j = i; j <= mk; ++j) {
      const double wh = weight(i, j) * h;
      tk[mid(2 * i, 2 * j)] = wh * ks.K1[fid(i, j)];
      tk[mid(2 * i, 2 * j + 1)] = wh * ks.K2[fid(i, j)];
      tk[mid(2 * i + 1, 2 * j)] = wh * ks.Q1[fid(i, j)];
      tk[mid(2 * i + 1, 2 * j + 1)] = wh * ks.Q2[fid(i, j)];
    }

  // Block-upper-triangular product C = tk * A.
  Vec tl = tk, next(static_cast<size_t>(B) * B, 0.0);
  auto compose = [&](const Vec& a, Vec& out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (int i = 0; i <= mk; ++i)
      for (int k = i; k <= mk; ++k) {
        const double t00 = tk[mid(2 * i, 2 * k)], t01 = tk[mid(2 * i, 2 * k + 1)];
        const double t10 = tk[mid(2 * i + 1, 2 * k)], t11 = tk[mid(2 * i + 1, 2 * k + 1)];
        if (t00 == 0.0 && t01 == 0.0 && t10 == 0.0 && t11 == 0.0) continue;
        const size_t row0 = mid(2 * k, 0), row1 = mid(2 * k + 1, 0);
        const size_t out0 = mid(2 * i, 0), out1 = mid(2 * i + 1, 0);
        for (int c = 2 * k; c < B; ++c) {
          const double a0 = a[row0 + c], a1 = a[row1 + c];
          out[out0 + c] += t00 * a0 + t01 * a1;
          out[out1 + c] += t10 * a0 + t11 * a1;
        }
      }
  };

  const int max_iter = 10 * mk;
  int iter = 0;
  double delta = 0.0;
  for (; iter < max_iter; ++iter) {
    compose(tl, next);
    delta = 0.0;
    for (size_t k = 0; k < next.size(); ++k) {
      const double value = tk[k] + next[k];
      delta = std::max(delta, std::abs(value - tl[k]));
      tl[k] = value;
    }
    if (delta <= 1e-12) break;
  }
  if (delta > 1e-12)
    throw std::runtime_error("inverse kernel series did not converge after " +
                             std::to_string(max_iter) + " iterations; last change " +
                             std::to_string(delta));

  InverseKernelSet iks;
  iks.mk = mk;
  iks.n = n;
  iks.iterations = iter + 1;
  iks.last_delta = delta;
  const size_t sz = static_cast<size_t>(np1) * np1;
  iks.L1.assign(sz, 0.0);
  iks.L2.assign(sz, 0.0);
  iks.M1.assign(sz, 0.0);
  iks.M2.assign(sz, 0.0);
  for (int i = 0; i < mk; ++i)
    for (int j = i; j <= mk; ++j) {
      const double wh = weight(i, j) * h;
      iks.L1[fid(i, j)] = tl[mid(2 * i, 2 * j)] / wh;
      iks.L2[fid(i, j)] = tl[mid(2 * i, 2 * j + 1)] / wh;
      iks.M1[fid(i, j)] = tl[mid(2 * i + 1, 2 * j)] / wh;
      iks.M2[fid(i, j)] = tl[mid(2 * i + 1, 2 * j + 1)] / wh;
    }
  // Degenerate corner row: continue the resolvent by its diagonal identity.
  iks.L1[fid(mk, mk)] = ks.K1[fid(mk, mk)];
  iks.L2[fid(mk, mk)] = ks.K2[fid(mk, mk)];
  iks.M1[fid(mk, mk)] = ks.Q1[fid(mk, mk)];
  iks.M2[fid(mk, mk)] = ks.Q2[fid(mk, mk)];

  // Zero-speed columns: T = (I + L) * (G;R) per component.
  iks.S.assign(n, Vec(sz, 0.0));
  iks.E.assign(n, Vec(sz, 0.0));
  Vec tg(static_cast<size_t>(B) * np1, 0.0);
  auto gid = [np1](int r, int j) { return static_cast<size_t>(r) * np1 + j; };
  for (int c = 0; c < n; ++c) {
    std::fill(tg.begin(), tg.end(), 0.0);
    for (int i = 0; i < mk; ++i)
      for (int j = i; j <= mk; ++j) {
        const double wh = weight(i, j) * h;
        tg[gid(2 * i, j)] = wh * ks.G[c][fid(i, j)];
        tg[gid(2 * i + 1, j)] = wh * ks.R[c][fid(i, j)];
      }
    for (int i = 0; i < mk; ++i)
      for (int j = i; j <= mk; ++j) {
        double acc0 = tg[gid(2 * i, j)], acc1 = tg[gid(2 * i + 1, j)];
        for (int k = i; k <= j; ++k) {
          const double g0 = tg[gid(2 * k, j)], g1 = tg[gid(2 * k + 1, j)];
          acc0 += tl[mid(2 * i, 2 * k)] * g0 + tl[mid(2 * i, 2 * k + 1)] * g1;
          acc1 += tl[mid(2 * i + 1, 2 * k)] * g0 + tl[mid(2 * i + 1, 2 * k + 1)] * g1;
        }
        const double wh = weight(i, j) * h;
        iks.S[c][fid(i, j)] = acc0 / wh;
        iks.E[c][fid(i, j)] = acc1 / wh;
      }
    iks.S[c][fid(mk, mk)] = ks.G[c][fid(mk, mk)];
    iks.E[c][fid(mk, mk)] = ks.R[c][fid(mk, mk)];
  }

  iks.N1.assign(n, Vec(sz, 0.0));
  iks.N2.assign(n, Vec(sz, 0.0));
  iks.N3.assign(static_cast<size_t>(n) * n, Vec(sz, 0.0));
  for (int r = 0; r < n; ++r)
    for (size_t k = 0; k < sz; ++k) {
      iks.N1[r][k] = cfg.omega1[r] * iks.L1[k] + cfg.omega2[r] * iks.M1[k];
      iks.N2[r][k] = cfg.omega1[r] * iks.L2[k] + cfg.omega2[r] * iks.M2[k];
      for (int c = 0; c < n; ++c)
        iks.N3[static_cast<size_t>(r) * n + c][k] =
            cfg.omega1[r] * iks.S[c][k] + cfg.omega2[r] * iks.E[c][k];
    }
  return iks;
}

inline std::pair<Vec, Vec> inverse_transform(const Vec& alpha, const Vec& beta,
                                             const std::vector<Vec>& v,
                                             const InverseKernelSet& iks) {
  const int m = static_cast<int>(alpha.size()) - 1;
  if (m < 1 || beta.size() != alpha.size())
    throw std::invalid_argument("target arrays must share a grid with at least two nodes");
  if (static_cast<int>(v.size()) != iks.n)
    throw std::invalid_argument("state has wrong number of zero-speed components");
  for (const auto& row : v)
    if (row.size() != alpha.size()) throw std::invalid_argument("state arrays must share a grid");
  const bool direct = (m == iks.mk);
  const double dx = 1.0 / m;
  Vec u(m + 1, 0.0), p(m + 1, 0.0);
  for (int i = 0; i <= m; ++i) {
    const double x = i * dx;
    auto at = [&](const Vec& f, int j) {
      return direct ? f[iks.idx(i, j)] : sample_triangle_field(f, iks.mk, x, j * dx);
    };
    u[i] = alpha[i] + detail::trapezoid_row(i, m, iks.mk, [&](int j) {
             double s = at(iks.L1, j) * alpha[j] + at(iks.L2, j) * beta[j];
             for (int c = 0; c < iks.n; ++c) s += at(iks.S[c], j) * v[c][j];
             return s;
           });
    p[i] = beta[i] + detail::trapezoid_row(i, m, iks.mk, [&](int j) {
             double s = at(iks.M1, j) * alpha[j] + at(iks.M2, j) * beta[j];
             for (int c = 0; c < iks.n; ++c) s += at(iks.E[c], j) * v[c][j];
             return s;
           });
  }
  return {std::move(u), std::move(p)};
}

// Residuals of the transformed trajectory against the target dynamics:
// transport equations forward in time and centered in space, the zero-speed
// equation with its coupling integrals, and the two boundary relations.
inline TargetResidualReport target_residual(const std::vector<StateSnapshot>& frames,
                                            const KernelSet& ks, const InverseKernelSet& iks,
                                            const PlantConfig& cfg) {
  if (frames.size() < 2) throw std::invalid_argument("trajectory lacks stored snapshots");
  const int m = detail::state_cells(frames.front());
  const double dx = 1.0 / m;
  const int n = cfg.n;
  const bool direct = (m == iks.mk);

  TargetResidualReport rep;
  TargetState cur = forward_transform(frames.front(), ks);
  for (size_t f = 0; f < frames.size(); ++f) {
    if (f > 0) {
      const TargetState next = forward_transform(frames[f], ks);
      const double dt = frames[f].t - frames[f - 1].t;
      if (!(dt > 0.0)) throw std::invalid_argument("trajectory snapshots must advance in time");
      for (int j = 1; j < m; ++j) {
        const double da = (next.alpha[j] - cur.alpha[j]) / dt +
                          cfg.lambda1 * (cur.alpha[j + 1] - cur.alpha[j - 1]) / (2.0 * dx);
        const double db = (next.beta[j] - cur.beta[j]) / dt -
                          cfg.lambda2 * (cur.beta[j + 1] - cur.beta[j - 1]) / (2.0 * dx);
        rep.max_alpha_transport = std::max(rep.max_alpha_transport, std::abs(da));
        rep.max_beta_transport = std::max(rep.max_beta_transport, std::abs(db));
      }
      const StateSnapshot& s0 = frames[f - 1];
      const StateSnapshot& s1 = frames[f];
      for (int r = 0; r < n; ++r)
        for (int i = 0; i <= m; ++i) {
          const double x = i * dx;
          auto at = [&](const Vec& field, int j) {
            return direct ? field[iks.idx(i, j)] : sample_triangle_field(field, iks.mk, x, j * dx);
          };
          double rhs = cfg.omega1[r] * cur.alpha[i] + cfg.omega2[r] * cur.beta[i];
          for (int c = 0; c < n; ++c) rhs += cfg.psi.at(r, c) * s0.v[c][i];
          rhs += detail::trapezoid_row(i, m, iks.mk, [&](int j) {
            double s = at(iks.N1[r], j) * cur.alpha[j] + at(iks.N2[r], j) * cur.beta[j];
            for (int c = 0; c < n; ++c) s += at(iks.N3[static_cast<size_t>(r) * n + c], j) * s0.v[c][j];
            return s;
          });
          const double dv = (s1.v[r][i] - s0.v[r][i]) / dt;
          rep.max_v_residual = std::max(rep.max_v_residual, std::abs(dv - rhs));
        }
      cur = next;
    }
    rep.max_alpha0 = std::max(rep.max_alpha0, std::abs(cur.alpha[0]));
    rep.max_edge_mismatch =
        std::max(rep.max_edge_mismatch, std::abs(cur.beta[m] - cfg.rho * cur.alpha[m]));
  }
  return rep;
}

}  // namespace backstep
