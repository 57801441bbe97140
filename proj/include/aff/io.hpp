#pragma once

// Small CSV helpers. Numbers are written with %.17g so that files round-trip
// exactly and identical inputs produce identical bytes.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "aff/errors.hpp"
#include "aff/signal_path.hpp"

namespace aff {

inline std::string fmt_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path) : path_(path), out_(path) {
    if (!out_) throw IoError("cannot open '" + path.string() + "' for writing");
  }

  void header(const std::vector<std::string>& cols) { row_strings(cols); }

  void row_strings(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
    if (!out_) throw IoError("write failed for '" + path_.string() + "'");
  }

  void row(const std::vector<double>& cells) {
    std::vector<std::string> s;
    s.reserve(cells.size());
    for (double x : cells) s.push_back(fmt_double(x));
    row_strings(s);
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw IoError("missing CSV column '" + name + "'");
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty CSV '" + path.string() + "'");
  t.header = split_csv_line(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != t.header.size()) throw IoError("ragged CSV row in '" + path.string() + "'");
    t.rows.push_back(std::move(cells));
  }
  return t;
}

inline double parse_double(const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw IoError("bad number '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    throw IoError("bad number '" + s + "'");
  }
}

/// Columns t, then the state components x0, x1, ... (vech order for matrices).
inline void write_signal_csv(const std::filesystem::path& path, const SignalPath& sp) {
  CsvWriter w(path);
  std::vector<std::string> h = {"t"};
  const Eigen::Index p = sp.states.empty() ? 0 : sp.states.front().size();
  for (Eigen::Index k = 0; k < p; ++k) h.push_back("x" + std::to_string(k));
  w.header(h);
  for (std::size_t i = 0; i < sp.size(); ++i) {
    std::vector<double> r = {sp.grid[i]};
    for (Eigen::Index k = 0; k < p; ++k) r.push_back(sp.states[i][k]);
    w.row(r);
  }
}

}  // namespace aff
