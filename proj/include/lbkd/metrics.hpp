#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lbkd/error.hpp"

namespace lbkd {

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

// Population mean/STD using shifted data: identical inputs give exactly
// (value, 0), and the result depends only on the input order.
inline MeanStd mean_std(const std::vector<double>& v) {
  if (v.empty()) return {};
  const double shift = v.front();
  double s = 0.0, s2 = 0.0;
  for (double x : v) {
    s += x - shift;
    s2 += (x - shift) * (x - shift);
  }
  const double n = static_cast<double>(v.size());
  const double m = s / n;
  const double var = std::max(0.0, s2 / n - m * m);
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return {std::clamp(shift + m, *lo, *hi), std::sqrt(var)};
}

struct ExampleMetrics {
  std::string id;
  double sdr_db = 0.0;
  double si_sdr_db = 0.0;
  double stoi = 0.0;
};

struct MetricsReport {
  std::vector<ExampleMetrics> examples;

  MeanStd sdr() const { return column(&ExampleMetrics::sdr_db); }
  MeanStd si_sdr() const { return column(&ExampleMetrics::si_sdr_db); }
  MeanStd stoi() const { return column(&ExampleMetrics::stoi); }

  MeanStd column(double ExampleMetrics::*field) const {
    std::vector<double> v;
    v.reserve(examples.size());
    for (const auto& e : examples) v.push_back(e.*field);
    return mean_std(v);
  }
};

namespace detail {

inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

// Tab-separated. Header line, one "example" row per item, then "mean" and
// "std" rows:
//   record  id  sdr_db  si_sdr_db  stoi
inline std::string format_report(const MetricsReport& r) {
  std::ostringstream os;
  os << "record\tid\tsdr_db\tsi_sdr_db\tstoi\n";
  for (const auto& e : r.examples) {
    os << "example\t" << e.id << '\t' << detail::fmt_double(e.sdr_db) << '\t'
       << detail::fmt_double(e.si_sdr_db) << '\t' << detail::fmt_double(e.stoi) << '\n';
  }
  const MeanStd a = r.sdr(), b = r.si_sdr(), c = r.stoi();
  os << "mean\t*\t" << detail::fmt_double(a.mean) << '\t' << detail::fmt_double(b.mean) << '\t'
     << detail::fmt_double(c.mean) << '\n';
  os << "std\t*\t" << detail::fmt_double(a.std) << '\t' << detail::fmt_double(b.std) << '\t'
     << detail::fmt_double(c.std) << '\n';
  return os.str();
}

inline MetricsReport parse_report(const std::string& text) {
  MetricsReport r;
  std::istringstream is(text);
  std::string line;
  std::getline(is, line);
  if (line != "record\tid\tsdr_db\tsi_sdr_db\tstoi") throw FormatError("metrics report: bad header '" + line + "'");
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string kind, id, a, b, c;
    if (!(std::getline(ls, kind, '\t') && std::getline(ls, id, '\t') && std::getline(ls, a, '\t') &&
          std::getline(ls, b, '\t') && std::getline(ls, c))) {
      throw FormatError("metrics report: malformed row '" + line + "'");
    }
    if (kind == "example") r.examples.push_back({id, std::stod(a), std::stod(b), std::stod(c)});
  }
  return r;
}

inline void write_report(const MetricsReport& r, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write metrics report " + path.string());
  out << format_report(r);
}

// One row per model in a "Mean/STD of evaluation metrics" table; cells are
// mean/std with 4 decimals.
struct TableRow {
  std::string model;
  MeanStd sdr, si_sdr, stoi;
};

inline std::string format_mean_std_table(const std::vector<TableRow>& rows) {
  auto cell = [](MeanStd m) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f/%.4f", m.mean, m.std);
    return std::string(buf);
  };
  std::ostringstream os;
  os << "Mean/STD of evaluation metrics\n";
  char line[256];
  std::snprintf(line, sizeof line, "%-28s %-18s %-18s %-18s\n", "Model", "SDR", "SI-SDR", "STOI");
  os << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-28s %-18s %-18s %-18s\n", r.model.c_str(), cell(r.sdr).c_str(),
                  cell(r.si_sdr).c_str(), cell(r.stoi).c_str());
    os << line;
  }
  return os.str();
}

}  // namespace lbkd
