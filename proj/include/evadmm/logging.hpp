#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

namespace evadmm {

/// Message counters for one run. Load is normalized against the
/// full-communication count of one package per channel per round; reset
/// traffic is tracked separately.
struct CommLog {
  long uploads_sent = 0;
  long uploads_dropped = 0;
  long downloads_sent = 0;
  long downloads_dropped = 0;
  long reset_messages = 0;
  long full_comm_messages = 0;  // denominator over the horizon

  long total_sent() const { return uploads_sent + downloads_sent; }
  double load() const {
    return full_comm_messages > 0
               ? static_cast<double>(total_sent()) / static_cast<double>(full_comm_messages)
               : 0.0;
  }
  double load_with_resets() const {
    return full_comm_messages > 0
               ? static_cast<double>(total_sent() + reset_messages) /
                     static_cast<double>(full_comm_messages)
               : 0.0;
  }
};

/// One per-iteration record. Reference-dependent fields are NaN when the
/// run had no fixed point attached.
struct TraceRow {
  int k = 0;
  double f_value = 0.0;
  double f_gap = 0.0;
  double z_err_sq = 0.0;
  double lyapunov = 0.0;      // V_k = |z-z*|^2 + (1/N) sum |u-u*|^2
  double zeta_err = 0.0;      // |zeta_hat - zeta|
  double delta_k = 0.0;       // threshold in force
  double residual_sq = 0.0;   // sum_i |x^i - z|^2
  double grad_surrogate_sq = 0.0;  // |G_{k+1}|^2
  long uploads = 0;
  long downloads = 0;
  long drops = 0;
  long resets = 0;
  double load = 0.0;
};

struct RunTrace {
  std::vector<TraceRow> rows;
  double d0 = 0.0;          // initial error constant of Cor. 1
  double kappa = 0.0;       // condition number reported in the header
  bool has_reference = false;

  void append(const TraceRow& r) { rows.push_back(r); }
  const TraceRow& back() const { return rows.back(); }
  bool empty() const { return rows.empty(); }
};

/// Fixed "%.17g" formatting so identical runs serialize byte-identically.
std::string format_double(double v);

void write_trace_csv(const RunTrace& trace, const std::string& path,
                     const std::vector<std::string>& extra_columns = {},
                     const std::vector<std::vector<double>>& extra_values = {});

}  // namespace evadmm
