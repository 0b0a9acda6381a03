// Copyright 2026 The RLPF Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cstdio>

#include "rlpf/error.hpp"
#include "rlpf/stats.hpp"

namespace rlpf::stats {
namespace {

std::vector<std::string> row_names(const RegressionTable& t) {
  if (!t.rows.empty()) return t.rows;
  std::vector<std::string> out;
  for (const auto& c : t.columns)
    for (const auto& n : c.fit->names)
      if (std::find(out.begin(), out.end(), n) == out.end()) out.push_back(n);
  // The intercept goes last, as in the published tables.
  const auto it = std::find(out.begin(), out.end(), "Constant");
  if (it != out.end()) std::rotate(it, it + 1, out.end());
  return out;
}

std::optional<std::size_t> find(const Fit& f, const std::string& name) {
  for (std::size_t i = 0; i < f.names.size(); ++i)
    if (f.names[i] == name) return i;
  return std::nullopt;
}

std::string with_commas(std::size_t v) {
  std::string s = std::to_string(v);
  for (int i = static_cast<int>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
  return s;
}

}  // namespace

std::string stars(double p) {
  if (p < 0.01) return "***";
  if (p < 0.05) return "**";
  if (p < 0.1) return "*";
  return "";
}

std::string regression_text(const RegressionTable& t) {
  for (const auto& c : t.columns)
    if (!c.fit) fail(ErrorKind::InvalidInput, "regression table column has no fit");
  const auto rows = row_names(t);
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> labels;
  for (const auto& name : rows) {
    std::vector<std::string> line;
    for (const auto& c : t.columns) {
      const auto i = find(*c.fit, name);
      if (!i) {
        line.emplace_back("");
        continue;
      }
      const double b = c.fit->coef[static_cast<Eigen::Index>(*i)];
      const double se = c.fit->se(*i, c.robust);
      const double p = se > 0.0 ? two_sided_p(b / se) : 1.0;
      line.push_back(format_fixed(b, 4) + stars(p) + " (" + format_fixed(se, 4) + ")");
    }
    labels.push_back(name);
    cells.push_back(std::move(line));
  }
  labels.emplace_back("Observations");
  std::vector<std::string> obs;
  for (const auto& c : t.columns) obs.push_back(with_commas(c.fit->n));
  cells.push_back(obs);
  std::vector<std::string> footer_labels;
  for (const auto& c : t.columns)
    for (const auto& [k, v] : c.footer)
      if (std::find(footer_labels.begin(), footer_labels.end(), k) == footer_labels.end()) footer_labels.push_back(k);
  for (const auto& k : footer_labels) {
    std::vector<std::string> line;
    for (const auto& c : t.columns) {
      const auto it = std::find_if(c.footer.begin(), c.footer.end(), [&](const auto& kv) { return kv.first == k; });
      line.push_back(it == c.footer.end() ? "" : it->second);
    }
    labels.push_back(k);
    cells.push_back(std::move(line));
  }

  std::size_t w0 = 0;
  for (const auto& l : labels) w0 = std::max(w0, l.size());
  std::vector<std::size_t> w(t.columns.size());
  for (std::size_t j = 0; j < t.columns.size(); ++j) {
    w[j] = t.columns[j].dependent.size();
    for (const auto& line : cells) w[j] = std::max(w[j], line[j].size());
  }
  std::size_t width = w0;
  for (auto x : w) width += 3 + x;

  std::string out = t.title + "\n" + std::string(width, '=') + "\n";
  auto emit = [&](const std::string& label, const std::vector<std::string>& line) {
    std::string s = label + std::string(w0 - label.size(), ' ');
    for (std::size_t j = 0; j < line.size(); ++j) s += "   " + std::string(w[j] - line[j].size(), ' ') + line[j];
    out += s + "\n";
  };
  std::vector<std::string> deps;
  for (const auto& c : t.columns) deps.push_back(c.dependent);
  emit("", deps);
  out += std::string(width, '-') + "\n";
  const std::size_t n_coef = rows.size();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (i == n_coef) out += std::string(width, '-') + "\n";
    emit(labels[i], cells[i]);
  }
  out += std::string(width, '=') + "\n";
  if (!t.note.empty()) out += "Note: " + t.note + "\n";
  out += "*p<0.1; **p<0.05; ***p<0.01\n";
  return out;
}

std::string regression_csv(const RegressionTable& t) {
  std::string out = "term,dependent,estimate,std_error,z,p_value,stars\n";
  const auto rows = row_names(t);
  for (const auto& name : rows) {
    for (const auto& c : t.columns) {
      const auto i = find(*c.fit, name);
      if (!i) continue;
      const double b = c.fit->coef[static_cast<Eigen::Index>(*i)];
      const double se = c.fit->se(*i, c.robust);
      const double z = se > 0.0 ? b / se : 0.0;
      const double p = se > 0.0 ? two_sided_p(z) : 1.0;
      out += csv_escape(name) + "," + csv_escape(c.dependent) + "," + format_double(b) + "," + format_double(se) +
             "," + format_double(z) + "," + format_double(p) + "," + stars(p) + "\n";
    }
  }
  for (const auto& c : t.columns) {
    out += "Observations," + csv_escape(c.dependent) + "," + std::to_string(c.fit->n) + ",,,,\n";
    for (const auto& [k, v] : c.footer) out += csv_escape(k) + "," + csv_escape(c.dependent) + "," + csv_escape(v) + ",,,,\n";
  }
  return out;
}

}  // namespace rlpf::stats
