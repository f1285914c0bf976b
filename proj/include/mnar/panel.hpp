#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mnar/error.hpp"

namespace mnar {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;
using Index = Eigen::Index;

// A units-by-periods panel with an explicit observation mask. Values at
// masked-out cells are stored as 0 and must never be read. Immutable after
// construction; safe to share across concurrent readers.
struct ObservedPanel {
  Matrix values;
  Mask mask;
  std::vector<std::string> unit_labels;
  std::vector<std::string> time_labels;

  Index units() const { return values.rows(); }
  Index periods() const { return values.cols(); }

  void validate() const {
    const Index n = values.rows(), t = values.cols();
    if (n < 2 || t < 2) throw input_error("panel must be at least 2x2");
    if (mask.rows() != n || mask.cols() != t) throw input_error("mask shape mismatch");
    if (static_cast<Index>(unit_labels.size()) != n ||
        static_cast<Index>(time_labels.size()) != t) {
      throw input_error("label count mismatch");
    }
    for (Index i = 0; i < n; ++i) {
      bool any = false;
      for (Index s = 0; s < t; ++s) {
        if (mask(i, s)) {
          any = true;
          if (!std::isfinite(values(i, s))) {
            throw input_error("non-finite observed value at unit '" + unit_labels[i] +
                              "', time '" + time_labels[s] + "'");
          }
        }
      }
      if (!any) throw input_error("empty row: unit '" + unit_labels[i] + "' has no observations");
    }
    for (Index s = 0; s < t; ++s) {
      bool any = false;
      for (Index i = 0; i < n; ++i) any = any || mask(i, s);
      if (!any) throw input_error("empty column: time '" + time_labels[s] + "' has no observations");
    }
  }
};

inline ObservedPanel make_panel(Matrix values, Mask mask, std::vector<std::string> units = {},
                                std::vector<std::string> times = {}) {
  ObservedPanel p;
  p.values = std::move(values);
  p.mask = std::move(mask);
  if (units.empty()) {
    for (Index i = 0; i < p.values.rows(); ++i) units.push_back("u" + std::to_string(i));
  }
  if (times.empty()) {
    for (Index s = 0; s < p.values.cols(); ++s) times.push_back("t" + std::to_string(s));
  }
  p.unit_labels = std::move(units);
  p.time_labels = std::move(times);
  for (Index i = 0; i < p.values.rows(); ++i)
    for (Index s = 0; s < p.values.cols(); ++s)
      if (!p.mask(i, s)) p.values(i, s) = 0.0;
  p.validate();
  return p;
}

// Unit partition into a control group I_0 and treatment groups I_1..I_D,
// plus the first pilot period (periods before it are prepilot).
struct TreatmentAssignment {
  std::vector<std::vector<Index>> groups;  // groups[d] = unit indices of I_d
  Index pilot_start = 0;                   // first treated period (0-based)

  Index treatment_count() const { return static_cast<Index>(groups.size()) - 1; }

  void validate(Index n_units) const {
    if (groups.size() < 2) throw input_error("assignment needs a control group and >=1 treatment");
    if (groups[0].empty()) throw input_error("control group I_0 is empty");
    std::vector<char> seen(static_cast<std::size_t>(n_units), 0);
    for (const auto& g : groups) {
      for (Index u : g) {
        if (u < 0 || u >= n_units) throw input_error("assignment references unknown unit index");
        if (seen[static_cast<std::size_t>(u)]++) {
          throw input_error("unit assigned to more than one treatment group");
        }
      }
    }
    for (Index u = 0; u < n_units; ++u)
      if (!seen[static_cast<std::size_t>(u)]) throw input_error("unit missing from assignment");
  }
};

enum class PanelFormat { wide, long_form };

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::string_view trimmed(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

inline bool is_missing_token(std::string_view s) {
  if (s.empty()) return true;
  if (s == "NA" || s == "na" || s == "Na") return true;
  return s.size() == 3 && (s[0] == 'n' || s[0] == 'N') && (s[1] == 'a' || s[1] == 'A') &&
         (s[2] == 'n' || s[2] == 'N');
}

inline double parse_number(std::string_view s, const std::string& where) {
  double v = 0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    throw input_error("non-numeric value '" + std::string(s) + "' " + where);
  }
  return v;
}

}  // namespace detail

// Wide CSV: header row holds time labels (first cell is a corner label),
// each following row is one unit. Empty cells, "NA", and "NaN" are missing.
inline ObservedPanel load_panel_wide(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw input_error("empty input");
  auto header = detail::split_csv_line(line);
  if (header.size() < 2) throw input_error("wide header needs at least one time column");
  std::vector<std::string> times(header.begin() + 1, header.end());
  std::vector<std::string> units;
  std::vector<std::vector<double>> rows;
  std::vector<std::vector<bool>> obs;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) {
      throw input_error("row '" + cells[0] + "' has " + std::to_string(cells.size() - 1) +
                        " cells, expected " + std::to_string(times.size()));
    }
    units.push_back(std::string(detail::trimmed(cells[0])));
    std::vector<double> v(times.size(), 0.0);
    std::vector<bool> m(times.size(), false);
    for (std::size_t j = 0; j < times.size(); ++j) {
      const auto tok = detail::trimmed(cells[j + 1]);
      if (detail::is_missing_token(tok)) continue;
      v[j] = detail::parse_number(tok, "at unit '" + units.back() + "', time '" + times[j] + "'");
      if (std::isnan(v[j])) {
        v[j] = 0.0;
        continue;
      }
      m[j] = true;
    }
    rows.push_back(std::move(v));
    obs.push_back(std::move(m));
  }
  const Index n = static_cast<Index>(rows.size()), t = static_cast<Index>(times.size());
  if (n == 0) throw input_error("wide input has no unit rows");
  Matrix values(n, t);
  Mask mask(n, t);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < t; ++j) {
      values(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      mask(i, j) = obs[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  return make_panel(std::move(values), std::move(mask), std::move(units), std::move(times));
}

// Long CSV with header `unit,time,value`; one row per observed cell. Label
// order is first appearance. Optional declared label sets extend the panel
// to units/times that may have no observations at all (which is an error,
// reported by name).
inline ObservedPanel load_panel_long(std::istream& in,
                                     const std::vector<std::string>& declared_units = {},
                                     const std::vector<std::string>& declared_times = {}) {
  std::string line;
  if (!std::getline(in, line)) throw input_error("empty input");
  auto header = detail::split_csv_line(line);
  if (header.size() != 3 || detail::trimmed(header[0]) != "unit" ||
      detail::trimmed(header[1]) != "time" || detail::trimmed(header[2]) != "value") {
    throw input_error("long format requires header 'unit,time,value'");
  }
  std::vector<std::string> units = declared_units, times = declared_times;
  std::map<std::string, Index> unit_ix, time_ix;
  for (std::size_t i = 0; i < units.size(); ++i) unit_ix[units[i]] = static_cast<Index>(i);
  for (std::size_t i = 0; i < times.size(); ++i) time_ix[times[i]] = static_cast<Index>(i);
  std::vector<std::tuple<Index, Index, double>> triples;
  std::set<std::pair<Index, Index>> keys;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != 3) throw input_error("long row must have exactly 3 cells: " + line);
    const std::string u(detail::trimmed(cells[0])), s(detail::trimmed(cells[1]));
    auto [uit, unew] = unit_ix.try_emplace(u, static_cast<Index>(units.size()));
    if (unew) units.push_back(u);
    auto [tit, tnew] = time_ix.try_emplace(s, static_cast<Index>(times.size()));
    if (tnew) times.push_back(s);
    const double v =
        detail::parse_number(detail::trimmed(cells[2]), "at unit '" + u + "', time '" + s + "'");
    if (!keys.insert({uit->second, tit->second}).second) {
      throw input_error("duplicate (unit,time) key: ('" + u + "','" + s + "')");
    }
    triples.emplace_back(uit->second, tit->second, v);
  }
  const Index n = static_cast<Index>(units.size()), t = static_cast<Index>(times.size());
  if (n == 0 || t == 0) throw input_error("long input has no data rows");
  Matrix values = Matrix::Zero(n, t);
  Mask mask = Mask::Constant(n, t, false);
  for (const auto& [i, j, v] : triples) {
    values(i, j) = v;
    mask(i, j) = true;
  }
  return make_panel(std::move(values), std::move(mask), std::move(units), std::move(times));
}

inline ObservedPanel load_panel(std::istream& in, PanelFormat format) {
  return format == PanelFormat::wide ? load_panel_wide(in) : load_panel_long(in);
}

// Wide CSV writer; missing cells are left empty. `digits` controls the
// shortest-round-trip precision used for values.
inline void write_panel_wide(std::ostream& out, const ObservedPanel& p,
                             const Mask* write_mask = nullptr, int digits = 17) {
  out << "unit";
  for (const auto& s : p.time_labels) out << ',' << s;
  out << '\n';
  char buf[64];
  const Mask& wm = write_mask ? *write_mask : p.mask;
  for (Index i = 0; i < p.units(); ++i) {
    out << p.unit_labels[static_cast<std::size_t>(i)];
    for (Index j = 0; j < p.periods(); ++j) {
      out << ',';
      if (wm(i, j)) {
        std::snprintf(buf, sizeof buf, "%.*g", digits, p.values(i, j));
        out << buf;
      }
    }
    out << '\n';
  }
}

}  // namespace mnar
