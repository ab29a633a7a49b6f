#pragma once

#include <nlohmann/json.hpp>

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "htmllstm/dom.hpp"
#include "htmllstm/error.hpp"

namespace htmllstm {

inline constexpr const char* kUnkSymbol = "<unk>";
inline constexpr const char* kEmptySymbol = "<empty>";

// Dense symbol <-> index map. Specials occupy the first indices.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(bool with_empty) {
    add(kUnkSymbol);
    if (with_empty) add(kEmptySymbol);
  }

  std::size_t add(const std::string& symbol) {
    if (auto it = index_.find(symbol); it != index_.end()) return it->second;
    if (frozen_) return unk();
    index_.emplace(symbol, symbols_.size());
    symbols_.push_back(symbol);
    return symbols_.size() - 1;
  }

  std::size_t index(const std::string& symbol) const {
    auto it = index_.find(symbol);
    return it == index_.end() ? unk() : it->second;
  }
  std::size_t unk() const { return index_.at(kUnkSymbol); }
  std::size_t empty_index() const {
    auto it = index_.find(kEmptySymbol);
    if (it == index_.end()) throw IndexOutOfRange("vocabulary has no EMPTY symbol");
    return it->second;
  }
  const std::string& symbol(std::size_t i) const { return symbols_.at(i); }
  std::size_t size() const { return symbols_.size(); }
  const std::vector<std::string>& symbols() const { return symbols_; }

  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }

  static Vocabulary from_symbols(const std::vector<std::string>& symbols) {
    Vocabulary v;
    for (const auto& s : symbols) v.add(s);
    if (!v.index_.count(kUnkSymbol)) throw CorpusFormatError("vocabulary lacks the UNK symbol");
    v.freeze();
    return v;
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.symbols_ == b.symbols_; }

 private:
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, std::size_t> index_;
  bool frozen_ = false;
};

struct Vocabularies {
  Vocabulary tags{false};
  Vocabulary tokens{true};
  Vocabulary pos{true};
  int min_count = 1;

  void freeze() {
    tags.freeze();
    tokens.freeze();
    pos.freeze();
  }
  bool frozen() const { return tags.frozen() && tokens.frozen() && pos.frozen(); }

  friend bool operator==(const Vocabularies&, const Vocabularies&) = default;
};

// Indexes every tag, token, and PoS symbol of the given trees; tokens seen
// fewer than min_count times are left out and map to UNK. Returned frozen.
inline Vocabularies build_vocabularies(const std::vector<const DomTree*>& trees, int min_count = 1) {
  if (trees.empty()) throw EmptyCorpus("cannot build vocabularies from an empty corpus");
  Vocabularies v;
  v.min_count = min_count;
  std::map<std::string, int> token_counts;
  std::vector<std::string> token_order;
  for (const DomTree* t : trees) {
    visit_preorder(t->root, [&](const DomNode& n, int) {
      v.tags.add(n.tag);
      for (const auto& tok : n.tokens) {
        if (token_counts[tok]++ == 0) token_order.push_back(tok);
      }
      for (const auto& p : n.pos_tags) v.pos.add(p);
    });
  }
  for (const auto& tok : token_order) {
    if (token_counts[tok] >= min_count) v.tokens.add(tok);
  }
  v.freeze();
  return v;
}

inline nlohmann::json vocab_to_json(const Vocabularies& v) {
  return {{"tags", v.tags.symbols()}, {"tokens", v.tokens.symbols()}, {"pos", v.pos.symbols()},
          {"min_count", v.min_count}};
}

inline Vocabularies vocab_from_json(const nlohmann::json& j) {
  Vocabularies v;
  v.tags = Vocabulary::from_symbols(j.at("tags").get<std::vector<std::string>>());
  v.tokens = Vocabulary::from_symbols(j.at("tokens").get<std::vector<std::string>>());
  v.pos = Vocabulary::from_symbols(j.at("pos").get<std::vector<std::string>>());
  v.min_count = j.value("min_count", 1);
  v.tokens.empty_index();
  v.pos.empty_index();
  return v;
}

}  // namespace htmllstm
