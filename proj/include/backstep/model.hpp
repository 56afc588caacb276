#pragma once

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "backstep/matops.hpp"

namespace backstep {

// Coefficients of the (1+n+1) plant: one rightward transport state u, n
// zero-speed states v, one leftward transport state p with boundary input.
struct PlantConfig {
  int n = 1;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double sigma12 = 0.0;
  double sigma21 = 0.0;
  Vec theta1;  // couples v into u, length n
  Vec theta2;  // couples v into p, length n
  Vec omega1;  // couples u into v, length n
  Vec omega2;  // couples p into v, length n
  Mat psi;     // internal dynamics of v, n x n
  double q = 1.0;
  double rho = 1.0;
};

// (lambda, psi, omega) scalar system used by the stabilizability study.
struct SimplifiedConfig {
  double lambda = 1.0;
  double psi = 0.0;
  double omega = 0.0;
};

struct ConfigCheck {
  std::vector<std::string> errors;
  bool hurwitz = false;
  bool sym_neg_definite = false;
  bool ok() const { return errors.empty(); }
};

inline ConfigCheck validate_config(const PlantConfig& cfg) {
  ConfigCheck r;
  auto err = [&r](const std::string& m) { r.errors.push_back(m); };
  if (cfg.n < 1) err("n must be a positive integer");
  if (!(cfg.lambda1 > 0.0)) err("lambda1 must be positive");
  if (!(cfg.lambda2 > 0.0)) err("lambda2 must be positive");
  if (cfg.q == 0.0) err("q must be nonzero");
  if (cfg.rho == 0.0) err("rho must be nonzero");
  const size_t n = static_cast<size_t>(std::max(cfg.n, 0));
  if (cfg.theta1.size() != n) err("theta1 must have length n");
  if (cfg.theta2.size() != n) err("theta2 must have length n");
  if (cfg.omega1.size() != n) err("omega1 must have length n");
  if (cfg.omega2.size() != n) err("omega2 must have length n");
  if (cfg.psi.n != cfg.n || cfg.psi.a.size() != n * n) err("psi must be an n x n matrix");
  for (double x : cfg.theta1)
    if (!std::isfinite(x)) err("theta1 has a non-finite entry");
  for (double x : cfg.theta2)
    if (!std::isfinite(x)) err("theta2 has a non-finite entry");
  for (double x : cfg.omega1)
    if (!std::isfinite(x)) err("omega1 has a non-finite entry");
  for (double x : cfg.omega2)
    if (!std::isfinite(x)) err("omega2 has a non-finite entry");
  if (!std::isfinite(cfg.lambda1) || !std::isfinite(cfg.lambda2) || !std::isfinite(cfg.sigma12) ||
      !std::isfinite(cfg.sigma21) || !std::isfinite(cfg.q) || !std::isfinite(cfg.rho))
    err("scalar coefficient is non-finite");
  if (r.ok()) {
    r.hurwitz = is_hurwitz(cfg.psi);
    r.sym_neg_definite = sym_decay_margin(cfg.psi).has_value();
  }
  return r;
}

inline void require_valid(const PlantConfig& cfg) {
  const ConfigCheck c = validate_config(cfg);
  if (c.ok()) return;
  std::string joined;
  for (const auto& e : c.errors) {
    if (!joined.empty()) joined += "; ";
    joined += e;
  }
  throw std::invalid_argument("invalid plant config: " + joined);
}

// Uniform nodes x_j = j/m on [0,1]; dt chosen from the CFL number.
struct Grid {
  int m = 8;
  double cfl = 0.9;

  Grid() = default;
  Grid(int cells, double cfl_number) : m(cells), cfl(cfl_number) {
    if (m < 8) throw std::invalid_argument("grid must have at least 8 cells");
    if (!(cfl > 0.0) || cfl > 1.0) throw std::invalid_argument("cfl must lie in (0, 1]");
  }

  double dx() const { return 1.0 / m; }
  double node(int j) const { return static_cast<double>(j) / m; }
  double dt(double max_speed) const { return cfl * dx() / max_speed; }
};

struct StateSnapshot {
  double t = 0.0;
  Vec u, p;
  std::vector<Vec> v;  // n rows, each m+1 samples

  bool finite() const {
    auto all = [](const Vec& f) {
      for (double x : f)
        if (!std::isfinite(x)) return false;
      return true;
    };
    if (!all(u) || !all(p)) return false;
    for (const auto& row : v)
      if (!all(row)) return false;
    return true;
  }

  double max_abs() const {
    double s = 0.0;
    for (double x : u) s = std::max(s, std::abs(x));
    for (double x : p) s = std::max(s, std::abs(x));
    for (const auto& row : v)
      for (double x : row) s = std::max(s, std::abs(x));
    return s;
  }
};

inline StateSnapshot zero_state(const Grid& grid, int n) {
  StateSnapshot s;
  s.u.assign(grid.m + 1, 0.0);
  s.p.assign(grid.m + 1, 0.0);
  s.v.assign(static_cast<size_t>(n), Vec(grid.m + 1, 0.0));
  return s;
}

// Composite trapezoid rule over uniformly spaced samples.
inline double trapz(const double* f, int count, double h) {
  if (count < 2) return 0.0;
  double s = 0.5 * (f[0] + f[count - 1]);
  for (int j = 1; j < count - 1; ++j) s += f[j];
  return s * h;
}

inline double trapz(const Vec& f, double h) { return trapz(f.data(), static_cast<int>(f.size()), h); }

inline double l2_norm(const Vec& f, double h) {
  Vec sq(f.size());
  for (size_t j = 0; j < f.size(); ++j) sq[j] = f[j] * f[j];
  return std::sqrt(trapz(sq, h));
}

// Frobenius-style L2 norm over the n rows of v.
inline double l2_norm_rows(const std::vector<Vec>& v, double h) {
  double s = 0.0;
  for (const auto& row : v) {
    const double nr = l2_norm(row, h);
    s += nr * nr;
  }
  return std::sqrt(s);
}

struct InitialPreset {
  enum class Kind { zero, constant, sine, samples } kind = Kind::zero;
  double a_u = 0.0, a_p = 0.0, a_v = 0.0;  // constant values or sine frequencies
  std::string file;                        // samples path
};

inline InitialPreset zero_preset() { return {}; }

inline InitialPreset constant_preset(double cu, double cp, double cv) {
  return {InitialPreset::Kind::constant, cu, cp, cv, ""};
}

inline InitialPreset sine_preset(double ku, double kp, double kv) {
  return {InitialPreset::Kind::sine, ku, kp, kv, ""};
}

// Reads node samples from a CSV with header u,p,v_1,...,v_n and exactly
// m+1 data rows.
inline StateSnapshot load_samples_snapshot(const std::string& path, const Grid& grid, int n) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open sample file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("sample file is empty: " + path);
  StateSnapshot s = zero_state(grid, n);
  int row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (row > grid.m) throw std::runtime_error("sample file length mismatch: more rows than grid nodes");
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
    if (static_cast<int>(vals.size()) != 2 + n)
      throw std::runtime_error("sample file column count mismatch at row " + std::to_string(row));
    s.u[row] = vals[0];
    s.p[row] = vals[1];
    for (int c = 0; c < n; ++c) s.v[c][row] = vals[2 + c];
    ++row;
  }
  if (row != grid.m + 1) throw std::runtime_error("sample file length mismatch: expected m+1 rows");
  return s;
}

inline StateSnapshot initial_condition(const InitialPreset& preset, const Grid& grid, int n) {
  StateSnapshot s = zero_state(grid, n);
  const double two_pi = 2.0 * 3.14159265358979323846;
  switch (preset.kind) {
    case InitialPreset::Kind::zero:
      break;
    case InitialPreset::Kind::constant:
      for (int j = 0; j <= grid.m; ++j) {
        s.u[j] = preset.a_u;
        s.p[j] = preset.a_p;
        for (auto& row : s.v) row[j] = preset.a_v;
      }
      break;
    case InitialPreset::Kind::sine:
      for (int j = 0; j <= grid.m; ++j) {
        const double x = grid.node(j);
        s.u[j] = std::sin(two_pi * preset.a_u * x);
        s.p[j] = std::sin(two_pi * preset.a_p * x);
        for (auto& row : s.v) row[j] = std::sin(two_pi * preset.a_v * x);
      }
      break;
    case InitialPreset::Kind::samples:
      return load_samples_snapshot(preset.file, grid, n);
  }
  return s;
}

// Deterministic uniform in [lo, hi): explicit bit mapping so results do not
// depend on the standard library's distribution implementation.
inline double uniform_det(std::mt19937& rng, double lo, double hi) {
  const double u = (rng() >> 5) * 0x1.0p-27;
  return lo + (hi - lo) * u;
}

// Smooth pseudo-random state: a short sine/cosine series with seeded
// coefficients; used by roundtrip checks and test fixtures.
inline StateSnapshot random_smooth_state(const Grid& grid, int n, unsigned seed) {
  std::mt19937 rng(seed);
  StateSnapshot s = zero_state(grid, n);
  const double pi = 3.14159265358979323846;
  auto fill = [&](Vec& f) {
    double c0 = uniform_det(rng, -1.0, 1.0);
    double ak[4], bk[4];
    for (int k = 0; k < 4; ++k) {
      ak[k] = uniform_det(rng, -1.0, 1.0);
      bk[k] = uniform_det(rng, -1.0, 1.0);
    }
    for (int j = 0; j <= grid.m; ++j) {
      const double x = grid.node(j);
      double val = c0;
      for (int k = 0; k < 4; ++k) val += ak[k] * std::sin((k + 1) * pi * x) + bk[k] * std::cos((k + 1) * pi * x);
      f[j] = val;
    }
  };
  fill(s.u);
  fill(s.p);
  for (auto& row : s.v) fill(row);
  return s;
}

}  // namespace backstep
