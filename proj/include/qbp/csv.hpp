#pragma once

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace qbp {

/// "%.12g", with nan/inf spelled the same on every platform.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

using ConfigRecord = std::vector<std::pair<std::string, std::string>>;

/// Comma-separated output: one '#' line with the resolved configuration, a
/// header row, then data rows.
class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& out) : out_(&out) {}

  void config(const ConfigRecord& cfg) {
    *out_ << '#';
    for (const auto& [k, v] : cfg) *out_ << ' ' << k << '=' << v;
    *out_ << '\n';
  }

  void header(const std::vector<std::string>& cols) { row(cols); }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t k = 0; k < cells.size(); ++k) *out_ << (k ? "," : "") << cells[k];
    *out_ << '\n';
  }

 private:
  std::ostream* out_;
};

}  // namespace qbp
