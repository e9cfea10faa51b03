#pragma once

#include "elastic_paths/core.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

namespace elastic_paths::io {

// 17 significant digits round-trip every double.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class CsvWriter {
public:
  explicit CsvWriter(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw Error("cannot open " + path + " for writing");
  }

  void header(const std::vector<std::string>& cols) {
    for (std::size_t i = 0; i < cols.size(); ++i) {
      if (i) out_ << ',';
      out_ << cols[i];
    }
    out_ << '\n';
  }

  void row(const std::vector<double>& vals) {
    for (std::size_t i = 0; i < vals.size(); ++i) {
      if (i) out_ << ',';
      out_ << format_double(vals[i]);
    }
    out_ << '\n';
  }

  // Mixed row: leading text cells then numbers.
  void row(const std::vector<std::string>& text, const std::vector<double>& vals) {
    for (std::size_t i = 0; i < text.size(); ++i) {
      if (i) out_ << ',';
      out_ << text[i];
    }
    for (std::size_t i = 0; i < vals.size(); ++i) {
      if (i || !text.empty()) out_ << ',';
      out_ << format_double(vals[i]);
    }
    out_ << '\n';
  }

  void close() {
    out_.close();
    if (!out_) throw Error("failed to write CSV output");
  }

private:
  std::ofstream out_;
};

// Centered moving average of odd width; the window shrinks at the ends.
inline std::vector<double> moving_average(const std::vector<double>& v, int width) {
  if (width <= 1) return v;
  const int half = width / 2;
  const int n = static_cast<int>(v.size());
  std::vector<double> out(v.size());
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - half);
    const int hi = std::min(n - 1, i + half);
    double s = 0.0;
    for (int j = lo; j <= hi; ++j) s += v[static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(i)] = s / static_cast<double>(hi - lo + 1);
  }
  return out;
}

} // namespace elastic_paths::io
