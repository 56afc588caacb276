#pragma once

// CSV emission. One fixed numeric format (17 significant digits, "nan" for
// missing values) so identical runs produce byte-identical files.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "backstep/kernels.hpp"
#include "backstep/model.hpp"
#include "backstep/simulator.hpp"

namespace backstep {

inline std::string csv_number(double x) {
  if (std::isnan(x)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace detail {

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open output file: " + path);
  return out;
}

}  // namespace detail

inline void write_norms_csv(const std::string& path, const Trajectory& tr) {
  std::ofstream out = detail::open_output(path);
  out << "t,U,norm_u,norm_p,norm_v,V\n";
  for (const StepRecord& r : tr.steps)
    out << csv_number(r.t) << ',' << csv_number(r.U) << ',' << csv_number(r.norm_u) << ','
        << csv_number(r.norm_p) << ',' << csv_number(r.norm_v) << ','
        << csv_number(r.lyapunov) << '\n';
}

inline void write_fields_csv(const std::string& path, const Trajectory& tr, const Grid& grid,
                             int n) {
  std::ofstream out = detail::open_output(path);
  out << "t,x";
  out << ",u,p";
  for (int r = 1; r <= n; ++r) out << ",v_" << r;
  out << '\n';
  for (const StateSnapshot& s : tr.frames)
    for (int j = 0; j <= grid.m; ++j) {
      out << csv_number(s.t) << ',' << csv_number(grid.node(j)) << ',' << csv_number(s.u[j])
          << ',' << csv_number(s.p[j]);
      for (int r = 0; r < n; ++r) out << ',' << csv_number(s.v[r][j]);
      out << '\n';
    }
}

inline void write_kernels_csv(const std::string& path, const KernelSet& ks) {
  std::ofstream out = detail::open_output(path);
  out << "x,xi,K1,K2,Q1,Q2";
  for (int r = 1; r <= ks.n; ++r) out << ",G_" << r;
  for (int r = 1; r <= ks.n; ++r) out << ",R_" << r;
  out << '\n';
  const double h = ks.h();
  for (int i = 0; i <= ks.mk; ++i)
    for (int j = i; j <= ks.mk; ++j) {
      const size_t id = ks.idx(i, j);
      out << csv_number(h * i) << ',' << csv_number(h * j) << ',' << csv_number(ks.K1[id])
          << ',' << csv_number(ks.K2[id]) << ',' << csv_number(ks.Q1[id]) << ','
          << csv_number(ks.Q2[id]);
      for (int r = 0; r < ks.n; ++r) out << ',' << csv_number(ks.G[r][id]);
      for (int r = 0; r < ks.n; ++r) out << ',' << csv_number(ks.R[r][id]);
      out << '\n';
    }
}

inline void write_verify_csv(const std::string& path,
                             const std::vector<std::pair<std::string, double>>& metrics) {
  std::ofstream out = detail::open_output(path);
  out << "metric,value\n";
  for (const auto& [name, value] : metrics) out << name << ',' << csv_number(value) << '\n';
}

// Per-row slope is the backward difference of log V; first row has none.
inline void write_lyapunov_csv(const std::string& path, const Trajectory& tr) {
  std::ofstream out = detail::open_output(path);
  out << "t,V,logV_slope\n";
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (size_t i = 0; i < tr.steps.size(); ++i) {
    const StepRecord& r = tr.steps[i];
    double slope = nan;
    if (i > 0) {
      const StepRecord& prev = tr.steps[i - 1];
      if (r.lyapunov > 0.0 && prev.lyapunov > 0.0 && r.t > prev.t)
        slope = (std::log(r.lyapunov) - std::log(prev.lyapunov)) / (r.t - prev.t);
    }
    out << csv_number(r.t) << ',' << csv_number(r.lyapunov) << ',' << csv_number(slope)
        << '\n';
  }
}

struct ObstructionRow {
  double t = 0.0;
  double R = 0.0;
  double w_maxabs = 0.0;
  bool in_s = false;
};

inline void write_obstruction_csv(const std::string& path,
                                  const std::vector<ObstructionRow>& rows) {
  std::ofstream out = detail::open_output(path);
  out << "t,R,w_maxabs,in_S\n";
  for (const ObstructionRow& r : rows)
    out << csv_number(r.t) << ',' << csv_number(r.R) << ',' << csv_number(r.w_maxabs) << ','
        << (r.in_s ? 1 : 0) << '\n';
}

}  // namespace backstep
