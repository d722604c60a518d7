#include "evadmm/logging.hpp"

#include <cmath>
#include <stdexcept>

namespace evadmm {

std::string format_double(double v) {
  char buf[40];
  if (std::isnan(v)) return "nan";
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_trace_csv(const RunTrace& trace, const std::string& path,
                     const std::vector<std::string>& extra_columns,
                     const std::vector<std::vector<double>>& extra_values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "# kappa=" << format_double(trace.kappa) << " d0=" << format_double(trace.d0) << "\n";
  out << "k,f_gap,z_err_sq,V,zeta_err,delta_k,uploads,downloads,drops,resets,load";
  for (const auto& c : extra_columns) out << "," << c;
  out << "\n";
  for (std::size_t i = 0; i < trace.rows.size(); ++i) {
    const auto& r = trace.rows[i];
    out << r.k << "," << format_double(r.f_gap) << "," << format_double(r.z_err_sq) << ","
        << format_double(r.lyapunov) << "," << format_double(r.zeta_err) << ","
        << format_double(r.delta_k) << "," << r.uploads << "," << r.downloads << ","
        << r.drops << "," << r.resets << "," << format_double(r.load);
    for (const auto& col : extra_values) out << "," << format_double(col[i]);
    out << "\n";
  }
}

}  // namespace evadmm
