#pragma once

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "htmllstm/error.hpp"

namespace htmllstm {

struct ClassMetrics {
  std::string name;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0;
  // Set when the class never occurs in gold or predictions; scores are then 1.
  bool vacuous = false;
};

struct MetricsTable {
  std::vector<ClassMetrics> classes;
  ClassMetrics mean;  // macro averages

  double macro_f1() const { return mean.f1; }
};

// One-vs-rest precision/recall/F1 per class plus the macro mean row.
inline MetricsTable evaluate_metrics(const std::vector<std::size_t>& predicted, const std::vector<std::size_t>& gold,
                                     const std::vector<std::string>& classes) {
  if (predicted.size() != gold.size()) throw LengthMismatch("predicted and gold label counts differ");
  MetricsTable table;
  for (const auto& name : classes) table.classes.push_back(ClassMetrics{name});
  for (std::size_t k = 0; k < gold.size(); ++k) {
    if (predicted[k] >= classes.size() || gold[k] >= classes.size()) throw IndexOutOfRange("label out of range");
    if (predicted[k] == gold[k]) {
      table.classes[gold[k]].tp++;
    } else {
      table.classes[predicted[k]].fp++;
      table.classes[gold[k]].fn++;
    }
  }
  table.mean.name = "mean";
  for (auto& m : table.classes) {
    if (m.tp + m.fp + m.fn == 0) {
      m.precision = m.recall = m.f1 = 1.0;
      m.vacuous = true;
    } else {
      m.precision = m.tp + m.fp ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp) : 0.0;
      m.recall = m.tp + m.fn ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn) : 0.0;
      m.f1 = m.precision + m.recall > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    }
    table.mean.precision += m.precision;
    table.mean.recall += m.recall;
    table.mean.f1 += m.f1;
  }
  if (!classes.empty()) {
    const double n = static_cast<double>(classes.size());
    table.mean.precision /= n;
    table.mean.recall /= n;
    table.mean.f1 /= n;
  }
  return table;
}

// Rows = classes then "mean"; columns = precision, recall, f1.
inline std::string metrics_csv(const MetricsTable& t) {
  std::ostringstream out;
  out << std::setprecision(6) << std::fixed;
  out << "class,precision,recall,f1\n";
  auto row = [&](const ClassMetrics& m) {
    out << m.name << ',' << m.precision << ',' << m.recall << ',' << m.f1 << '\n';
  };
  for (const auto& m : t.classes) row(m);
  row(t.mean);
  return out.str();
}

inline void write_metrics_csv(const std::string& path, const MetricsTable& t) {
  std::ofstream out(path);
  if (!out) throw IoFailure("cannot write metrics: " + path);
  out << metrics_csv(t);
}

}  // namespace htmllstm
