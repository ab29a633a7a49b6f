#pragma once

// JSON-Lines corpus records: one table per line,
//   {"id": str, "html": str, "labels": [{"node_path": [int...], "class": str}], "source": str}
// Nodes without a label entry are Other.

#include <nlohmann/json.hpp>

#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "htmllstm/dom.hpp"
#include "htmllstm/error.hpp"

namespace htmllstm {

struct CorpusRecord {
  std::string id;
  std::string html;
  std::vector<LabelAssignment> labels;
  std::string source;

  friend bool operator==(const CorpusRecord& a, const CorpusRecord& b) {
    if (a.id != b.id || a.html != b.html || a.source != b.source || a.labels.size() != b.labels.size()) return false;
    for (std::size_t i = 0; i < a.labels.size(); ++i) {
      if (a.labels[i].node_path != b.labels[i].node_path || a.labels[i].label != b.labels[i].label) return false;
    }
    return true;
  }
};

// A parsed, fully labeled table.
struct LabeledTable {
  std::string id;
  std::string source;
  DomTree tree;
};

using Corpus = std::vector<LabeledTable>;

inline nlohmann::json record_to_json(const CorpusRecord& r) {
  nlohmann::json labels = nlohmann::json::array();
  for (const auto& l : r.labels) labels.push_back({{"node_path", l.node_path}, {"class", l.label}});
  return {{"id", r.id}, {"html", r.html}, {"labels", labels}, {"source", r.source}};
}

inline CorpusRecord record_from_json(const nlohmann::json& j) {
  try {
    CorpusRecord r;
    r.id = j.at("id").get<std::string>();
    r.html = j.at("html").get<std::string>();
    r.source = j.value("source", std::string{});
    for (const auto& l : j.value("labels", nlohmann::json::array())) {
      r.labels.push_back({l.at("node_path").get<std::vector<int>>(), l.at("class").get<std::string>()});
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw CorpusFormatError(std::string("malformed corpus record: ") + e.what());
  }
}

inline std::vector<CorpusRecord> read_corpus_jsonl(std::istream& in) {
  std::vector<CorpusRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw CorpusFormatError("corpus line " + std::to_string(lineno) + ": " + e.what());
    }
    out.push_back(record_from_json(j));
  }
  return out;
}

inline std::vector<CorpusRecord> read_corpus_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open corpus: " + path);
  return read_corpus_jsonl(in);
}

inline void write_corpus_jsonl(std::ostream& out, const std::vector<CorpusRecord>& records) {
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

inline void write_corpus_jsonl(const std::string& path, const std::vector<CorpusRecord>& records) {
  std::ofstream out(path);
  if (!out) throw IoFailure("cannot write corpus: " + path);
  write_corpus_jsonl(out, records);
  if (!out) throw IoFailure("write failed: " + path);
}

inline LabeledTable load_record(const CorpusRecord& r, const std::string& tagger = kDefaultTagger) {
  LabeledTable t{r.id, r.source, parse_html(r.html, tagger)};
  apply_labels(t.tree, r.labels);
  return t;
}

inline Corpus load_corpus(const std::vector<CorpusRecord>& records, const std::string& tagger = kDefaultTagger) {
  Corpus c;
  c.reserve(records.size());
  for (const auto& r : records) c.push_back(load_record(r, tagger));
  return c;
}

// Class list of a corpus: non-Other labels in order of first appearance,
// then Other.
inline std::vector<std::string> corpus_classes(const Corpus& corpus) {
  std::vector<std::string> classes;
  std::set<std::string> seen;
  for (const auto& t : corpus) {
    visit_preorder(t.tree.root, [&](const DomNode& n, int) {
      if (!n.gold_label || *n.gold_label == kOtherLabel) return;
      if (seen.insert(*n.gold_label).second) classes.push_back(*n.gold_label);
    });
  }
  classes.push_back(kOtherLabel);
  return classes;
}

}  // namespace htmllstm
