#pragma once

// Per-table attribute extraction from node predictions and assembly of the
// unified output table.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "htmllstm/dom.hpp"
#include "htmllstm/error.hpp"
#include "htmllstm/model.hpp"

namespace htmllstm {

struct NodeCandidate {
  int node_id = 0;
  std::string text;
  std::size_t predicted = 0;
  double score = 0.0;
};

struct ScoredText {
  std::string text;
  double score = 0.0;

  friend bool operator==(const ScoredText&, const ScoredText&) = default;
};

// Nodes without text have nothing to extract and are skipped.
inline std::vector<NodeCandidate> candidates_from(const PreparedTree& tree, const std::vector<NodePrediction>& preds) {
  if (tree.size() != preds.size()) throw LengthMismatch("one prediction per node required");
  std::vector<NodeCandidate> out;
  for (std::size_t k = 0; k < preds.size(); ++k) {
    if (tree.texts[k].empty()) continue;
    out.push_back({tree.node_ids[k], tree.texts[k], preds[k].predicted, preds[k].score});
  }
  return out;
}

inline std::size_t attribute_index(const std::vector<std::string>& classes, const std::string& cls) {
  auto it = std::find(classes.begin(), classes.end(), cls);
  if (it == classes.end() || cls == kOtherLabel) throw UnknownClass("'" + cls + "' is not an attribute class");
  return static_cast<std::size_t>(it - classes.begin());
}

// All nodes predicted as `cls` with score >= threshold, by descending score
// and then ascending node_id.
inline std::vector<ScoredText> extract_multi(const std::vector<NodeCandidate>& nodes,
                                             const std::vector<std::string>& classes, const std::string& cls,
                                             double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("threshold must be in [0,1]");
  const std::size_t c = attribute_index(classes, cls);
  std::vector<const NodeCandidate*> hits;
  for (const auto& n : nodes)
    if (n.predicted == c && n.score >= threshold) hits.push_back(&n);
  std::stable_sort(hits.begin(), hits.end(), [](const NodeCandidate* a, const NodeCandidate* b) {
    return a->score != b->score ? a->score > b->score : a->node_id < b->node_id;
  });
  std::vector<ScoredText> out;
  for (const auto* h : hits) out.push_back({h->text, h->score});
  return out;
}

// The highest-scoring node predicted as `cls`; ties go to the lowest node_id.
inline std::optional<ScoredText> extract_single(const std::vector<NodeCandidate>& nodes,
                                                const std::vector<std::string>& classes, const std::string& cls) {
  auto all = extract_multi(nodes, classes, cls, 0.0);
  if (all.empty()) return std::nullopt;
  return all.front();
}

// Every candidate of every attribute for one table, best first.
struct TableExtractions {
  std::string table_id;
  std::map<std::string, std::vector<ScoredText>> by_class;

  friend bool operator==(const TableExtractions&, const TableExtractions&) = default;
};

inline TableExtractions extract_table(const std::string& table_id, const std::vector<NodeCandidate>& nodes,
                                      const std::vector<std::string>& classes,
                                      const std::vector<std::string>& schema) {
  TableExtractions t{table_id, {}};
  for (const auto& a : schema) t.by_class[a] = extract_multi(nodes, classes, a, 0.0);
  return t;
}

inline nlohmann::json extractions_to_json(const TableExtractions& t) {
  nlohmann::json classes = nlohmann::json::object();
  for (const auto& [cls, texts] : t.by_class) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : texts) arr.push_back({{"text", s.text}, {"score", s.score}});
    classes[cls] = arr;
  }
  return {{"table_id", t.table_id}, {"classes", classes}};
}

inline TableExtractions extractions_from_json(const nlohmann::json& j) {
  TableExtractions t{j.at("table_id").get<std::string>(), {}};
  for (const auto& [cls, arr] : j.at("classes").items()) {
    auto& v = t.by_class[cls];
    for (const auto& s : arr) v.push_back({s.at("text").get<std::string>(), s.at("score").get<double>()});
  }
  return t;
}

enum class ExtractMode { Single, Multi };

inline ExtractMode parse_extract_mode(const std::string& s) {
  if (s == "single") return ExtractMode::Single;
  if (s == "multi") return ExtractMode::Multi;
  throw ConfigError("mode must be single or multi, got '" + s + "'");
}
inline std::string to_string(ExtractMode m) { return m == ExtractMode::Single ? "single" : "multi"; }

struct IntegrateOptions {
  ExtractMode mode = ExtractMode::Single;
  std::map<std::string, ExtractMode> per_attribute;  // overrides `mode`
  double threshold = 0.5;
  std::string delimiter = "; ";
};

struct IntegratedRow {
  std::string table_id;
  std::vector<std::string> cells;

  friend bool operator==(const IntegratedRow&, const IntegratedRow&) = default;
};

struct IntegratedTable {
  std::vector<std::string> schema;
  std::vector<IntegratedRow> rows;

  friend bool operator==(const IntegratedTable&, const IntegratedTable&) = default;
};

inline IntegratedTable integrate(const std::vector<TableExtractions>& tables, const std::vector<std::string>& schema,
                                 const IntegrateOptions& opt = {}) {
  if (schema.empty()) throw ConfigError("schema must not be empty");
  if (!(opt.threshold >= 0.0 && opt.threshold <= 1.0)) throw ConfigError("threshold must be in [0,1]");
  IntegratedTable out{schema, {}};
  std::set<std::string> seen;
  for (const auto& t : tables) {
    if (!seen.insert(t.table_id).second) throw DuplicateTableId("table id '" + t.table_id + "' appears twice");
    IntegratedRow row{t.table_id, {}};
    for (const auto& a : schema) {
      std::string cell;
      auto it = t.by_class.find(a);
      if (it != t.by_class.end() && !it->second.empty()) {
        auto m = opt.per_attribute.find(a);
        const ExtractMode mode = m == opt.per_attribute.end() ? opt.mode : m->second;
        if (mode == ExtractMode::Single) {
          cell = it->second.front().text;
        } else {
          for (const auto& s : it->second) {
            if (s.score < opt.threshold) continue;
            if (!cell.empty()) cell += opt.delimiter;
            cell += s.text;
          }
        }
      }
      row.cells.push_back(std::move(cell));
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Output formats

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string table_to_csv(const IntegratedTable& t) {
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t k = 0; k < cells.size(); ++k) out += (k ? "," : "") + csv_field(cells[k]);
    out += "\r\n";
  };
  line(t.schema);
  for (const auto& r : t.rows) line(r.cells);
  return out;
}

// One object per row: {"table_id": ..., "cells": {attribute: text, ...}} with
// attributes in schema order.
inline std::string table_to_jsonl(const IntegratedTable& t) {
  std::string out;
  for (const auto& r : t.rows) {
    nlohmann::ordered_json cells = nlohmann::ordered_json::object();
    for (std::size_t k = 0; k < t.schema.size(); ++k) cells[t.schema[k]] = r.cells[k];
    nlohmann::ordered_json row{{"table_id", r.table_id}, {"cells", cells}};
    out += row.dump() + "\n";
  }
  return out;
}

inline IntegratedTable table_from_jsonl(std::istream& in) {
  IntegratedTable t;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto j = nlohmann::ordered_json::parse(line);
    IntegratedRow row{j.at("table_id").get<std::string>(), {}};
    std::vector<std::string> schema;
    for (const auto& [k, v] : j.at("cells").items()) {
      schema.push_back(k);
      row.cells.push_back(v.get<std::string>());
    }
    if (t.rows.empty()) {
      t.schema = schema;
    } else if (schema != t.schema) {
      throw CorpusFormatError("rows disagree on the schema");
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline std::string html_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string table_to_html(const IntegratedTable& t) {
  std::string out = "<table>\n<tr>";
  for (const auto& a : t.schema) out += "<th>" + html_escape(a) + "</th>";
  out += "</tr>\n";
  for (const auto& r : t.rows) {
    out += "<tr>";
    for (const auto& c : r.cells) out += "<td>" + html_escape(c) + "</td>";
    out += "</tr>\n";
  }
  return out + "</table>\n";
}

inline void write_table(const IntegratedTable& t, const std::string& format, const std::string& path) {
  std::string body;
  if (format == "csv") {
    body = table_to_csv(t);
  } else if (format == "jsonl") {
    body = table_to_jsonl(t);
  } else if (format == "html") {
    body = table_to_html(t);
  } else {
    throw ConfigError("unknown table format '" + format + "' (csv, jsonl, html)");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot write " + path);
  out << body;
  if (!out) throw IoFailure("write failed: " + path);
}

}  // namespace htmllstm
