#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace backstep {

using Vec = std::vector<double>;

// Small dense square matrix, row-major.
struct Mat {
  int n = 0;
  Vec a;

  Mat() = default;
  explicit Mat(int order) : n(order), a(static_cast<size_t>(order) * order, 0.0) {
    if (order < 1) throw std::invalid_argument("matrix order must be >= 1");
  }
  Mat(int order, Vec values) : n(order), a(std::move(values)) {
    if (order < 1) throw std::invalid_argument("matrix order must be >= 1");
    if (a.size() != static_cast<size_t>(order) * order)
      throw std::invalid_argument("matrix data size does not match order");
  }

  double& at(int i, int j) { return a[static_cast<size_t>(i) * n + j]; }
  double at(int i, int j) const { return a[static_cast<size_t>(i) * n + j]; }

  static Mat identity(int order) {
    Mat m(order);
    for (int i = 0; i < order; ++i) m.at(i, i) = 1.0;
    return m;
  }

  bool finite() const {
    for (double x : a)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

inline Mat operator*(const Mat& x, const Mat& y) {
  if (x.n != y.n) throw std::invalid_argument("matrix order mismatch");
  Mat z(x.n);
  const int n = x.n;
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) {
      const double xik = x.at(i, k);
      if (xik == 0.0) continue;
      for (int j = 0; j < n; ++j) z.at(i, j) += xik * y.at(k, j);
    }
  return z;
}

inline Vec operator*(const Mat& x, const Vec& v) {
  if (static_cast<int>(v.size()) != x.n) throw std::invalid_argument("matrix/vector size mismatch");
  Vec r(x.n, 0.0);
  for (int i = 0; i < x.n; ++i) {
    double s = 0.0;
    for (int j = 0; j < x.n; ++j) s += x.at(i, j) * v[j];
    r[i] = s;
  }
  return r;
}

inline double inf_norm(const Mat& x) {
  double best = 0.0;
  for (int i = 0; i < x.n; ++i) {
    double row = 0.0;
    for (int j = 0; j < x.n; ++j) row += std::abs(x.at(i, j));
    best = std::max(best, row);
  }
  return best;
}

// e^{a*s} by scaling-and-squaring with a truncated series.
inline Mat expm(const Mat& a, double s) {
  if (!a.finite() || !std::isfinite(s)) throw std::invalid_argument("expm: non-finite input");
  Mat b(a.n);
  for (size_t k = 0; k < a.a.size(); ++k) b.a[k] = a.a[k] * s;
  double norm = inf_norm(b);
  int squarings = 0;
  while (norm > 0.25) {
    norm *= 0.5;
    ++squarings;
  }
  const double scale = std::ldexp(1.0, -squarings);
  for (double& x : b.a) x *= scale;

  Mat result = Mat::identity(a.n);
  Mat term = Mat::identity(a.n);
  for (int j = 1; j <= 40; ++j) {
    term = term * b;
    const double inv = 1.0 / j;
    for (double& x : term.a) x *= inv;
    for (size_t k = 0; k < result.a.size(); ++k) result.a[k] += term.a[k];
    if (inf_norm(term) < 1e-18) break;
  }
  for (int k = 0; k < squarings; ++k) result = result * result;
  return result;
}

namespace detail {

// Householder reduction to upper Hessenberg form (similarity transform).
inline void to_hessenberg(Mat& h) {
  const int n = h.n;
  std::vector<double> w(n, 0.0);
  for (int k = 1; k < n - 1; ++k) {
    double scale = 0.0;
    for (int i = k; i < n; ++i) scale += std::abs(h.at(i, k - 1));
    if (scale == 0.0) continue;
    double sum = 0.0;
    for (int i = k; i < n; ++i) {
      w[i] = h.at(i, k - 1) / scale;
      sum += w[i] * w[i];
    }
    double g = std::sqrt(sum);
    if (w[k] > 0.0) g = -g;
    const double denom = sum - w[k] * g;
    if (denom == 0.0) continue;
    w[k] -= g;
    for (int j = 0; j < n; ++j) {
      double f = 0.0;
      for (int i = k; i < n; ++i) f += w[i] * h.at(i, j);
      f /= denom;
      for (int i = k; i < n; ++i) h.at(i, j) -= f * w[i];
    }
    for (int i = 0; i < n; ++i) {
      double f = 0.0;
      for (int j = k; j < n; ++j) f += h.at(i, j) * w[j];
      f /= denom;
      for (int j = k; j < n; ++j) h.at(i, j) -= f * w[j];
    }
    h.at(k, k - 1) = scale * g;
    for (int i = k + 1; i < n; ++i) h.at(i, k - 1) = 0.0;
  }
}

// Francis double-shift QR on a Hessenberg matrix; returns eigenvalue real
// parts. Destroys its argument.
inline Vec hqr_real_parts(Mat& hm) {
  const int n = hm.n;
  auto h = [&hm, n](int i, int j) -> double& { return hm.a[static_cast<size_t>(i) * n + j]; };
  Vec wr;
  wr.reserve(n);

  double anorm = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = std::max(i - 1, 0); j < n; ++j) anorm += std::abs(h(i, j));
  if (anorm == 0.0) return Vec(static_cast<size_t>(n), 0.0);

  int nn = n - 1;
  double t = 0.0;
  while (nn >= 0) {
    int its = 0;
    for (;;) {
      int l;
      for (l = nn; l >= 1; --l) {
        double s = std::abs(h(l - 1, l - 1)) + std::abs(h(l, l));
        if (s == 0.0) s = anorm;
        if (std::abs(h(l, l - 1)) + s == s) {
          h(l, l - 1) = 0.0;
          break;
        }
      }
      if (l < 0) l = 0;
      double x = h(nn, nn);
      if (l == nn) {
        wr.push_back(x + t);
        --nn;
        break;
      }
      double y = h(nn - 1, nn - 1);
      double w = h(nn, nn - 1) * h(nn - 1, nn);
      if (l == nn - 1) {
        const double p = 0.5 * (y - x);
        const double q = p * p + w;
        double z = std::sqrt(std::abs(q));
        x += t;
        if (q >= 0.0) {
          z = p + (p >= 0.0 ? std::abs(z) : -std::abs(z));
          wr.push_back(x + z);
          wr.push_back(z != 0.0 ? x - w / z : x + z);
        } else {
          wr.push_back(x + p);
          wr.push_back(x + p);
        }
        nn -= 2;
        break;
      }
      if (its == 30) throw std::runtime_error("eigenvalue QR iteration failed to converge");
      if (its == 10 || its == 20) {
        t += x;
        for (int i = 0; i <= nn; ++i) h(i, i) -= x;
        const double s = std::abs(h(nn, nn - 1)) + std::abs(h(nn - 1, nn - 2));
        y = x = 0.75 * s;
        w = -0.4375 * s * s;
      }
      ++its;

      double p = 0.0, q = 0.0, r = 0.0, z = 0.0;
      int m;
      for (m = nn - 2; m >= l; --m) {
        z = h(m, m);
        const double rr = x - z;
        const double ss = y - z;
        p = (rr * ss - w) / h(m + 1, m) + h(m, m + 1);
        q = h(m + 1, m + 1) - z - rr - ss;
        r = h(m + 2, m + 1);
        const double sc = std::abs(p) + std::abs(q) + std::abs(r);
        p /= sc;
        q /= sc;
        r /= sc;
        if (m == l) break;
        const double u = std::abs(h(m, m - 1)) * (std::abs(q) + std::abs(r));
        const double v = std::abs(p) * (std::abs(h(m - 1, m - 1)) + std::abs(z) + std::abs(h(m + 1, m + 1)));
        if (u + v == v) break;
      }
      for (int i = m + 2; i <= nn; ++i) {
        h(i, i - 2) = 0.0;
        if (i != m + 2) h(i, i - 3) = 0.0;
      }
      for (int k = m; k <= nn - 1; ++k) {
        if (k != m) {
          p = h(k, k - 1);
          q = h(k + 1, k - 1);
          r = (k != nn - 1) ? h(k + 2, k - 1) : 0.0;
          x = std::abs(p) + std::abs(q) + std::abs(r);
          if (x != 0.0) {
            p /= x;
            q /= x;
            r /= x;
          }
        }
        double s = std::sqrt(p * p + q * q + r * r);
        if (p < 0.0) s = -s;
        if (s == 0.0) continue;
        if (k == m) {
          if (l != m) h(k, k - 1) = -h(k, k - 1);
        } else {
          h(k, k - 1) = -s * x;
        }
        p += s;
        x = p / s;
        y = q / s;
        z = r / s;
        q /= p;
        r /= p;
        for (int j = k; j <= nn; ++j) {
          double pp = h(k, j) + q * h(k + 1, j);
          if (k != nn - 1) {
            pp += r * h(k + 2, j);
            h(k + 2, j) -= pp * z;
          }
          h(k + 1, j) -= pp * y;
          h(k, j) -= pp * x;
        }
        const int mmin = (nn < k + 3) ? nn : k + 3;
        for (int i = l; i <= mmin; ++i) {
          double pp = x * h(i, k) + y * h(i, k + 1);
          if (k != nn - 1) {
            pp += z * h(i, k + 2);
            h(i, k + 2) -= pp * r;
          }
          h(i, k + 1) -= pp * q;
          h(i, k) -= pp;
        }
      }
    }
  }
  return wr;
}

}  // namespace detail

// Real parts of all eigenvalues, ascending, repeats preserved.
inline Vec eigen_real_parts(const Mat& a) {
  if (!a.finite()) throw std::invalid_argument("eigen_real_parts: non-finite input");
  if (a.n == 1) return {a.at(0, 0)};
  Mat h = a;
  detail::to_hessenberg(h);
  Vec wr = detail::hqr_real_parts(h);
  std::sort(wr.begin(), wr.end());
  return wr;
}

// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
inline Vec sym_eigenvalues(Mat a) {
  const int n = a.n;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += a.at(i, j) * a.at(i, j);
    if (off < 1e-30) break;
    for (int p = 0; p < n - 1; ++p)
      for (int q = p + 1; q < n; ++q) {
        const double apq = a.at(p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
        const double sign = theta >= 0.0 ? 1.0 : -1.0;
        const double tt = sign / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(tt * tt + 1.0);
        const double s = tt * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a.at(k, p);
          const double akq = a.at(k, q);
          a.at(k, p) = c * akp - s * akq;
          a.at(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a.at(p, k);
          const double aqk = a.at(q, k);
          a.at(p, k) = c * apk - s * aqk;
          a.at(q, k) = s * apk + c * aqk;
        }
      }
  }
  Vec d(n);
  for (int i = 0; i < n; ++i) d[i] = a.at(i, i);
  std::sort(d.begin(), d.end());
  return d;
}

// Coercivity constant of the symmetric part: the largest rho with
// v'av <= -rho|v|^2, i.e. -lambda_max((a+a')/2), when that is positive.
inline std::optional<double> sym_decay_margin(const Mat& a) {
  Mat s(a.n);
  for (int i = 0; i < a.n; ++i)
    for (int j = 0; j < a.n; ++j) s.at(i, j) = 0.5 * (a.at(i, j) + a.at(j, i));
  const Vec eig = sym_eigenvalues(s);
  const double lmax = eig.back();
  if (lmax >= 0.0) return std::nullopt;
  return -lmax;
}

inline bool is_hurwitz(const Mat& a) {
  const Vec re = eigen_real_parts(a);
  return re.back() < 0.0;
}

}  // namespace backstep
