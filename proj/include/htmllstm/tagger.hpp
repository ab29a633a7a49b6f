#pragma once

// Tokenizer/PoS-tagger plugins. The built-in "default" tagger splits on
// whitespace and ASCII punctuation and tags NUM / PUNCT / WORD.

#include <algorithm>
#include <cctype>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "htmllstm/error.hpp"

namespace htmllstm {

struct TaggedText {
  std::vector<std::string> tokens;
  std::vector<std::string> pos_tags;
};

using TaggerPlugin = std::function<TaggedText(std::string_view)>;

inline constexpr const char* kDefaultTagger = "default";

inline TaggedText rule_tagger(std::string_view text) {
  TaggedText out;
  auto is_punct = [](unsigned char c) { return c < 0x80 && std::ispunct(c); };
  auto is_space = [](unsigned char c) { return c < 0x80 && std::isspace(c); };
  std::string current;
  auto flush = [&] {
    if (current.empty()) return;
    const bool digits = std::all_of(current.begin(), current.end(),
                                    [](unsigned char c) { return c >= '0' && c <= '9'; });
    out.tokens.push_back(current);
    out.pos_tags.push_back(digits ? "NUM" : "WORD");
    current.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_space(c)) {
      flush();
    } else if (is_punct(c)) {
      flush();
      out.tokens.emplace_back(1, ch);
      out.pos_tags.emplace_back("PUNCT");
    } else {
      current.push_back(ch);
    }
  }
  flush();
  return out;
}

class TaggerRegistry {
 public:
  static TaggerRegistry& global() {
    static TaggerRegistry registry;
    return registry;
  }

  void add(const std::string& name, TaggerPlugin plugin) {
    std::lock_guard lock(mutex_);
    plugins_[name] = std::move(plugin);
  }

  TaggerPlugin get(const std::string& name) const {
    std::lock_guard lock(mutex_);
    auto it = plugins_.find(name);
    if (it == plugins_.end()) throw UnknownTagger("no tagger registered as '" + name + "'");
    return it->second;
  }

  bool contains(const std::string& name) const {
    std::lock_guard lock(mutex_);
    return plugins_.count(name) != 0;
  }

 private:
  TaggerRegistry() { plugins_[kDefaultTagger] = rule_tagger; }

  mutable std::mutex mutex_;
  std::map<std::string, TaggerPlugin> plugins_;
};

inline TaggedText tokenize_and_tag(std::string_view text, const std::string& tagger = kDefaultTagger) {
  TaggedText out = TaggerRegistry::global().get(tagger)(text);
  if (out.tokens.size() != out.pos_tags.size()) {
    throw UnknownTagger("tagger '" + tagger + "' returned unequal token and tag counts");
  }
  return out;
}

}  // namespace htmllstm
