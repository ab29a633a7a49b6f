#pragma once

#include <cstdint>
#include <functional>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "htmllstm/dom.hpp"
#include "htmllstm/error.hpp"
#include "htmllstm/random.hpp"

namespace htmllstm {

// ---------------------------------------------------------------------------
// Post-order clipping

// Keeps the first `limit` nodes in post-order plus every ancestor of a kept
// node, so the result stays a single rooted tree.
inline DomTree clip_postorder(const DomTree& tree, std::size_t limit) {
  if (limit < 1) throw ConfigError("clip limit must be >= 1");
  std::size_t counter = 0;
  std::function<std::optional<DomNode>(const DomNode&)> clip = [&](const DomNode& n) -> std::optional<DomNode> {
    DomNode out = n;
    out.children.clear();
    for (const auto& c : n.children) {
      if (auto kept = clip(c)) out.children.push_back(std::move(*kept));
    }
    const bool self_kept = ++counter <= limit;
    if (self_kept || !out.children.empty()) return out;
    return std::nullopt;
  };
  auto root = clip(tree.root);
  // The root has the largest post-order index; it survives whenever any node does.
  return DomTree{std::move(*root)};
}

// ---------------------------------------------------------------------------
// Left-child / right-sibling binarization

struct BinaryNode {
  const DomNode* payload = nullptr;
  std::optional<std::size_t> left;   // first child
  std::optional<std::size_t> right;  // next sibling
};

// Nodes are stored in pre-order (which is the same order for the DOM tree
// and its binary view), so children always have larger indices than their
// parent. Index 0 is the root. Payload pointers borrow from the source tree.
struct BinaryTree {
  std::vector<BinaryNode> nodes;

  std::size_t size() const { return nodes.size(); }
  const BinaryNode& operator[](std::size_t i) const { return nodes[i]; }
};

inline BinaryTree binarize(const DomTree& tree) {
  BinaryTree bt;
  std::function<std::size_t(const DomNode&)> add = [&](const DomNode& n) -> std::size_t {
    const std::size_t id = bt.nodes.size();
    bt.nodes.push_back(BinaryNode{&n, std::nullopt, std::nullopt});
    std::optional<std::size_t> prev;
    for (const auto& c : n.children) {
      const std::size_t cid = add(c);
      if (prev) {
        bt.nodes[*prev].right = cid;
      } else {
        bt.nodes[id].left = cid;
      }
      prev = cid;
    }
    return id;
  };
  add(tree.root);
  return bt;
}

inline DomTree unbinarize(const BinaryTree& bt) {
  if (bt.nodes.empty()) throw ConfigError("cannot unbinarize an empty binary tree");
  std::function<DomNode(std::size_t)> build = [&](std::size_t i) -> DomNode {
    DomNode n = *bt.nodes[i].payload;
    n.children.clear();
    for (auto c = bt.nodes[i].left; c; c = bt.nodes[*c].right) n.children.push_back(build(*c));
    return n;
  };
  return DomTree{build(0)};
}

// ---------------------------------------------------------------------------
// Row/column permutation augmentation

struct AugmentStats {
  std::size_t rows = 0;
  std::size_t row_swaps = 0;
  std::size_t columns = 0;
  std::size_t column_swaps = 0;
  bool columns_skipped = false;
};

namespace augment_detail {

inline bool is_cell(const DomNode& n) { return n.tag == "td" || n.tag == "th"; }

// Rows of this table (directly or via thead/tbody/tfoot), not of nested tables.
inline void collect_rows(DomNode& n, std::vector<DomNode*>& rows) {
  for (auto& c : n.children) {
    if (c.tag == "tr") {
      rows.push_back(&c);
    } else if (c.tag == "thead" || c.tag == "tbody" || c.tag == "tfoot") {
      collect_rows(c, rows);
    }
  }
}

inline std::vector<std::size_t> cell_positions(const DomNode& row) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < row.children.size(); ++i)
    if (is_cell(row.children[i])) out.push_back(i);
  return out;
}

}  // namespace augment_detail

// Swaps every unordered pair of rows (then of columns) with probability p,
// visiting pairs in lexicographic order. Column swapping needs a rectangular
// grid without colspan/rowspan; otherwise that phase is skipped.
inline DomTree augment_table(const DomTree& tree, std::uint64_t seed, double p, AugmentStats* stats = nullptr) {
  using namespace augment_detail;
  if (tree.root.tag != "table") throw ConfigError("augment_table expects a table root");
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("augmentation probability must be in [0,1]");
  DomTree out = tree;
  AugmentStats local;
  AugmentStats& st = stats ? *stats : local;
  st = AugmentStats{};
  if (p == 0.0) return out;

  Rng rng(seed);
  std::vector<DomNode*> rows;
  collect_rows(out.root, rows);
  st.rows = rows.size();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = i + 1; j < rows.size(); ++j) {
      if (uniform01(rng) < p) {
        std::swap(*rows[i], *rows[j]);
        ++st.row_swaps;
      }
    }
  }

  if (rows.empty()) return out;
  const std::size_t ncols = cell_positions(*rows[0]).size();
  bool rectangular = ncols > 0;
  for (DomNode* r : rows) {
    const auto pos = cell_positions(*r);
    if (pos.size() != ncols) rectangular = false;
    for (std::size_t k : pos) {
      const DomNode& cell = r->children[k];
      if (cell.has_attribute("colspan") || cell.has_attribute("rowspan")) rectangular = false;
    }
  }
  if (!rectangular) {
    st.columns_skipped = true;
    return out;
  }
  st.columns = ncols;
  for (std::size_t a = 0; a < ncols; ++a) {
    for (std::size_t b = a + 1; b < ncols; ++b) {
      if (uniform01(rng) < p) {
        for (DomNode* r : rows) {
          const auto pos = cell_positions(*r);
          std::swap(r->children[pos[a]], r->children[pos[b]]);
        }
        ++st.column_swaps;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Attribute-name unification

inline std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

// Surface attribute name -> canonical name. Canonical names map to
// themselves.
class SynonymDictionary {
 public:
  void add(const std::string& surface, const std::string& canonical) {
    const std::string s = trim(surface);
    const std::string c = trim(canonical);
    if (s.empty() || c.empty()) throw ConfigError("synonym entries must be non-empty");
    if (auto it = map_.find(c); it != map_.end() && it->second != c) {
      throw ConfigError("canonical name '" + c + "' is itself mapped to '" + it->second + "'");
    }
    if (canonicals_.count(s) && s != c) {
      throw ConfigError("'" + s + "' is already a canonical name and cannot be remapped");
    }
    map_[s] = c;
    canonicals_.insert(c);
  }

  std::optional<std::string> lookup(std::string_view surface) const {
    const std::string key = trim(surface);
    if (auto it = map_.find(key); it != map_.end()) return it->second;
    if (canonicals_.count(key)) return key;
    return std::nullopt;
  }

  bool empty() const { return map_.empty(); }
  std::size_t size() const { return map_.size(); }
  const std::map<std::string, std::string>& entries() const { return map_; }

  // One "surface<TAB>canonical" pair per line; blank lines are skipped.
  static SynonymDictionary load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open synonym dictionary: " + path);
    SynonymDictionary d;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (trim(line).empty()) continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos) {
        throw ConfigError(path + ":" + std::to_string(lineno) + ": expected surface<TAB>canonical");
      }
      d.add(line.substr(0, tab), line.substr(tab + 1));
    }
    return d;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoFailure("cannot write synonym dictionary: " + path);
    for (const auto& [s, c] : map_) out << s << '\t' << c << '\n';
  }

 private:
  std::map<std::string, std::string> map_;
  std::set<std::string> canonicals_;
};

// Replaces the text of every node whose trimmed text exactly equals a
// dictionary key with the canonical name (re-tokenized and re-tagged).
inline DomTree normalize_attribute_names(const DomTree& tree, const SynonymDictionary& dict,
                                         const std::string& tagger = kDefaultTagger) {
  DomTree out = tree;
  if (dict.empty()) return out;
  visit_preorder(out.root, [&](DomNode& n, int) {
    if (n.text.empty()) return;
    auto it = dict.entries().find(trim(n.text));
    if (it != dict.entries().end() && it->second != n.text) set_text(n, it->second, tagger);
  });
  return out;
}

}  // namespace htmllstm
