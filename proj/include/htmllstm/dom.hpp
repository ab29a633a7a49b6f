#pragma once

// Annotated DOM trees and a tolerant HTML parser.
//
// Each node carries its tag, the text found directly between its start and
// end tags, that text's tokens and PoS tags, and an optional gold label.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "htmllstm/error.hpp"
#include "htmllstm/tagger.hpp"

namespace htmllstm {

inline constexpr const char* kOtherLabel = "Other";

struct DomNode {
  int node_id = 0;
  std::string tag;
  std::string text;  // whitespace-collapsed direct text
  std::vector<std::string> tokens;
  std::vector<std::string> pos_tags;
  std::vector<std::pair<std::string, std::string>> attributes;
  std::vector<DomNode> children;
  std::optional<std::string> gold_label;

  bool has_attribute(std::string_view name) const {
    return std::any_of(attributes.begin(), attributes.end(), [&](const auto& a) { return a.first == name; });
  }

  friend bool operator==(const DomNode&, const DomNode&) = default;
};

struct DomTree {
  DomNode root;

  std::size_t size() const;
  std::size_t depth() const;

  friend bool operator==(const DomTree&, const DomTree&) = default;
};

template <typename Node, typename Fn>
void visit_preorder(Node& node, Fn&& fn, int depth = 0) {
  fn(node, depth);
  for (auto& c : node.children) visit_preorder(c, fn, depth + 1);
}

template <typename Node, typename Fn>
void visit_postorder(Node& node, Fn&& fn) {
  for (auto& c : node.children) visit_postorder(c, fn);
  fn(node);
}

inline std::size_t DomTree::size() const {
  std::size_t n = 0;
  visit_preorder(root, [&](const DomNode&, int) { ++n; });
  return n;
}

// Number of edges on the longest root-to-leaf path.
inline std::size_t DomTree::depth() const {
  std::size_t d = 0;
  visit_preorder(root, [&](const DomNode&, int depth) { d = std::max(d, static_cast<std::size_t>(depth)); });
  return d;
}

inline void assign_preorder_ids(DomTree& tree) {
  int next = 0;
  visit_preorder(tree.root, [&](DomNode& n, int) { n.node_id = next++; });
}

inline void set_text(DomNode& node, std::string text, const std::string& tagger = kDefaultTagger) {
  TaggedText tagged = tokenize_and_tag(text, tagger);
  node.text = std::move(text);
  node.tokens = std::move(tagged.tokens);
  node.pos_tags = std::move(tagged.pos_tags);
}

// Follows child indices from the root; nullptr when the path leaves the tree.
inline const DomNode* node_at_path(const DomNode& root, const std::vector<int>& path) {
  const DomNode* n = &root;
  for (int i : path) {
    if (i < 0 || static_cast<std::size_t>(i) >= n->children.size()) return nullptr;
    n = &n->children[static_cast<std::size_t>(i)];
  }
  return n;
}
inline DomNode* node_at_path(DomNode& root, const std::vector<int>& path) {
  return const_cast<DomNode*>(node_at_path(static_cast<const DomNode&>(root), path));
}

// ---------------------------------------------------------------------------
// Tree debug dump: one line per node in pre-order, indented two spaces per
// level: `postorder_idx tag "joined tokens" [label]` (post-order 1-based).

inline std::string quote_tokens(const std::vector<std::string>& tokens) {
  std::string out = "\"";
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    for (char c : tokens[i]) {
      if (c == '"' || c == '\\') out += '\\';
      out += c;
    }
  }
  out += '"';
  return out;
}

inline std::string dump_tree(const DomTree& tree) {
  std::unordered_map<const DomNode*, std::size_t> postorder_index;
  visit_postorder(tree.root, [&](const DomNode& n) { postorder_index.emplace(&n, postorder_index.size() + 1); });
  std::ostringstream out;
  visit_preorder(tree.root, [&](const DomNode& n, int depth) {
    out << std::string(static_cast<std::size_t>(depth) * 2, ' ') << postorder_index.at(&n) << ' ' << n.tag << ' '
        << quote_tokens(n.tokens);
    if (n.gold_label) out << " [" << *n.gold_label << ']';
    out << '\n';
  });
  return out.str();
}

// ---------------------------------------------------------------------------
// Parser

namespace html_detail {

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline bool is_void_element(std::string_view tag) {
  static const char* const kVoid[] = {"area", "base",  "br",   "col",   "embed",  "hr",    "img",
                                      "input", "link", "meta", "param", "source", "track", "wbr"};
  return std::any_of(std::begin(kVoid), std::end(kVoid), [&](const char* v) { return tag == v; });
}

inline void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x110000) {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

inline std::string decode_entities(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '&') {
      out += s[i];
      continue;
    }
    const std::size_t semi = s.find(';', i);
    if (semi == std::string_view::npos || semi - i > 10) {
      out += '&';
      continue;
    }
    const std::string_view name = s.substr(i + 1, semi - i - 1);
    bool ok = true;
    if (!name.empty() && name[0] == '#') {
      std::uint32_t cp = 0;
      try {
        cp = (name.size() > 1 && (name[1] == 'x' || name[1] == 'X'))
                 ? static_cast<std::uint32_t>(std::stoul(std::string(name.substr(2)), nullptr, 16))
                 : static_cast<std::uint32_t>(std::stoul(std::string(name.substr(1)), nullptr, 10));
        append_utf8(out, cp);
      } catch (const std::exception&) {
        ok = false;
      }
    } else if (name == "amp") {
      out += '&';
    } else if (name == "lt") {
      out += '<';
    } else if (name == "gt") {
      out += '>';
    } else if (name == "quot") {
      out += '"';
    } else if (name == "apos") {
      out += '\'';
    } else if (name == "nbsp") {
      out += ' ';
    } else {
      ok = false;
    }
    if (ok) {
      i = semi;
    } else {
      out += '&';
    }
  }
  return out;
}

inline std::string collapse_whitespace(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
    } else {
      if (pending_space) out += ' ';
      pending_space = false;
      out += c;
    }
  }
  return out;
}

struct Builder {
  // Owned nodes by index; the tree is assembled at the end.
  struct Proto {
    std::string tag;
    std::string text;
    std::vector<std::pair<std::string, std::string>> attributes;
    std::vector<std::size_t> children;
  };
  std::vector<Proto> nodes{Proto{"#document", {}, {}, {}}};
  std::vector<std::size_t> stack{0};

  const std::string& top_tag() const { return nodes[stack.back()].tag; }

  bool in_scope(std::string_view tag, std::initializer_list<std::string_view> boundaries) const {
    for (auto it = stack.rbegin(); it != stack.rend(); ++it) {
      const std::string& t = nodes[*it].tag;
      if (t == tag) return true;
      if (std::find(boundaries.begin(), boundaries.end(), t) != boundaries.end()) return false;
    }
    return false;
  }

  void pop_until(std::string_view tag) {
    while (stack.size() > 1) {
      const bool match = nodes[stack.back()].tag == tag;
      stack.pop_back();
      if (match) return;
    }
  }

  // Closes elements whose end tags HTML allows to be omitted.
  void close_implied(const std::string& tag) {
    auto close_cells = [&] {
      // Also pops unclosed inline content left open inside the cell.
      while (in_scope("td", {"tr", "table"}) || in_scope("th", {"tr", "table"})) stack.pop_back();
    };
    if (tag == "td" || tag == "th") {
      close_cells();
    } else if (tag == "tr") {
      close_cells();
      if (in_scope("tr", {"table"})) pop_until("tr");
    } else if (tag == "thead" || tag == "tbody" || tag == "tfoot") {
      close_cells();
      if (in_scope("tr", {"table"})) pop_until("tr");
      for (const char* s : {"thead", "tbody", "tfoot"}) {
        if (in_scope(s, {"table"})) pop_until(s);
      }
    } else if (tag == "li") {
      if (in_scope("li", {"ul", "ol"})) pop_until("li");
    } else if (tag == "p" || tag == "div" || tag == "table" || tag == "ul" || tag == "ol") {
      if (top_tag() == "p") stack.pop_back();
    } else if (tag == "option") {
      if (top_tag() == "option") stack.pop_back();
    } else if (tag == "dt" || tag == "dd") {
      if (top_tag() == "dt" || top_tag() == "dd") stack.pop_back();
    }
  }

  void start(std::string tag, std::vector<std::pair<std::string, std::string>> attrs, bool self_closing) {
    close_implied(tag);
    const std::size_t id = nodes.size();
    nodes.push_back(Proto{tag, {}, std::move(attrs), {}});
    nodes[stack.back()].children.push_back(id);
    if (!self_closing && !is_void_element(tag)) stack.push_back(id);
  }

  void end(const std::string& tag) {
    for (auto it = stack.rbegin(); it != stack.rend(); ++it) {
      if (*it == 0) break;
      if (nodes[*it].tag == tag) {
        pop_until(tag);
        return;
      }
    }
    // Unmatched end tag: ignored.
  }

  void text(std::string_view raw) {
    std::string t = collapse_whitespace(decode_entities(raw));
    if (t.empty()) return;
    std::string& owner = nodes[stack.back()].text;
    if (!owner.empty()) owner += ' ';
    owner += t;
  }

  DomNode build(std::size_t id, const std::string& tagger) const {
    const Proto& p = nodes[id];
    DomNode n;
    n.tag = p.tag;
    n.attributes = p.attributes;
    set_text(n, p.text, tagger);
    for (std::size_t c : p.children) n.children.push_back(build(c, tagger));
    return n;
  }
};

inline std::vector<std::pair<std::string, std::string>> parse_attributes(std::string_view s) {
  std::vector<std::pair<std::string, std::string>> attrs;
  std::size_t i = 0;
  auto skip_ws = [&] {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  };
  while (true) {
    skip_ws();
    if (i >= s.size()) break;
    if (s[i] == '/') {
      ++i;
      continue;
    }
    std::size_t start = i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i])) && s[i] != '=' && s[i] != '/') ++i;
    std::string name = lower(s.substr(start, i - start));
    skip_ws();
    std::string value;
    if (i < s.size() && s[i] == '=') {
      ++i;
      skip_ws();
      if (i < s.size() && (s[i] == '"' || s[i] == '\'')) {
        const char q = s[i++];
        const std::size_t close = s.find(q, i);
        const std::size_t stop = close == std::string_view::npos ? s.size() : close;
        value = decode_entities(s.substr(i, stop - i));
        i = close == std::string_view::npos ? s.size() : close + 1;
      } else {
        start = i;
        while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        value = decode_entities(s.substr(start, i - start));
      }
    }
    if (!name.empty()) attrs.emplace_back(std::move(name), std::move(value));
  }
  return attrs;
}

inline bool is_tag_name_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }

}  // namespace html_detail

// Parses HTML into a DOM tree. Tags are lowercased, script/style/comment
// content is dropped, and common omitted end tags (cells, rows, list items,
// paragraphs) are inferred. When the document has a single top-level
// element it becomes the root; otherwise a synthetic "#document" root holds
// the top-level elements. Node ids are pre-order positions.
inline DomTree parse_html(std::string_view html, const std::string& tagger = kDefaultTagger) {
  using namespace html_detail;
  if (html.empty()) throw UnparsableHtml("empty input");
  Builder b;
  std::size_t i = 0;
  std::size_t text_start = 0;
  auto flush_text = [&](std::size_t end) {
    if (end > text_start) b.text(html.substr(text_start, end - text_start));
  };
  while (i < html.size()) {
    if (html[i] != '<') {
      ++i;
      continue;
    }
    if (html.compare(i, 4, "<!--") == 0) {
      flush_text(i);
      const std::size_t close = html.find("-->", i + 4);
      i = close == std::string_view::npos ? html.size() : close + 3;
      text_start = i;
      continue;
    }
    if (i + 1 < html.size() && (html[i + 1] == '!' || html[i + 1] == '?')) {
      flush_text(i);
      const std::size_t close = html.find('>', i);
      i = close == std::string_view::npos ? html.size() : close + 1;
      text_start = i;
      continue;
    }
    const bool closing = i + 1 < html.size() && html[i + 1] == '/';
    const std::size_t name_pos = i + (closing ? 2 : 1);
    if (name_pos >= html.size() || !is_tag_name_start(html[name_pos])) {
      ++i;  // a literal '<' in text
      continue;
    }
    flush_text(i);
    std::size_t j = name_pos;
    while (j < html.size() && (std::isalnum(static_cast<unsigned char>(html[j])) || html[j] == '-' ||
                               html[j] == ':' || html[j] == '_')) {
      ++j;
    }
    std::string tag = lower(html.substr(name_pos, j - name_pos));
    // Find the end of the tag, respecting quoted attribute values.
    std::size_t k = j;
    char quote = 0;
    while (k < html.size()) {
      const char c = html[k];
      if (quote) {
        if (c == quote) quote = 0;
      } else if (c == '"' || c == '\'') {
        quote = c;
      } else if (c == '>') {
        break;
      }
      ++k;
    }
    const std::size_t tag_end = k;  // position of '>' or size()
    std::string_view inner = html.substr(j, tag_end - j);
    i = tag_end == html.size() ? html.size() : tag_end + 1;
    text_start = i;
    if (closing) {
      b.end(tag);
      continue;
    }
    const bool self_closing = !inner.empty() && inner.back() == '/';
    if (tag == "script" || tag == "style") {
      const std::string lowered = lower(html.substr(i));
      const std::size_t close = lowered.find("</" + tag);
      if (close == std::string::npos) {
        i = html.size();
      } else {
        const std::size_t gt = html.find('>', i + close);
        i = gt == std::string_view::npos ? html.size() : gt + 1;
      }
      text_start = i;
      continue;
    }
    b.start(std::move(tag), parse_attributes(inner), self_closing);
  }
  flush_text(html.size());

  const auto& doc = b.nodes[0];
  if (doc.children.empty()) throw UnparsableHtml("no element structure found");
  DomTree tree;
  if (doc.children.size() == 1 && doc.text.empty()) {
    tree.root = b.build(doc.children[0], tagger);
  } else {
    tree.root = b.build(0, tagger);
  }
  assign_preorder_ids(tree);
  return tree;
}

// Maximal subtrees rooted at <table>, in document order. Tables nested in a
// table are returned only as part of their outermost table.
inline std::vector<DomTree> extract_table_subtrees(const DomTree& tree) {
  std::vector<DomTree> out;
  std::function<void(const DomNode&)> walk = [&](const DomNode& n) {
    if (n.tag == "table") {
      out.push_back(DomTree{n});
      return;
    }
    for (const auto& c : n.children) walk(c);
  };
  walk(tree.root);
  return out;
}

// Sets every node's gold label to Other, then applies (path, class) pairs.
struct LabelAssignment {
  std::vector<int> node_path;
  std::string label;
};

inline void apply_labels(DomTree& tree, const std::vector<LabelAssignment>& labels) {
  visit_preorder(tree.root, [](DomNode& n, int) { n.gold_label = kOtherLabel; });
  for (const auto& l : labels) {
    DomNode* n = node_at_path(tree.root, l.node_path);
    if (n == nullptr) throw CorpusFormatError("label path does not resolve to a node");
    n->gold_label = l.label;
  }
}

// (path, label) pairs for every node whose label is not Other.
inline std::vector<LabelAssignment> collect_labels(const DomTree& tree) {
  std::vector<LabelAssignment> out;
  std::vector<int> path;
  std::function<void(const DomNode&)> walk = [&](const DomNode& n) {
    if (n.gold_label && *n.gold_label != kOtherLabel) out.push_back({path, *n.gold_label});
    for (std::size_t i = 0; i < n.children.size(); ++i) {
      path.push_back(static_cast<int>(i));
      walk(n.children[i]);
      path.pop_back();
    }
  };
  walk(tree.root);
  return out;
}

}  // namespace htmllstm
