#pragma once

// Flat run configuration shared by every subcommand. Files hold one
// "key = value" per line ('#' starts a comment); list values are
// comma-separated. Unknown keys are rejected. snapshot() writes the same
// format, so a resolved config can be fed back with --config.

#include <cctype>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "htmllstm/error.hpp"
#include "htmllstm/integrate.hpp"
#include "htmllstm/synth.hpp"
#include "htmllstm/tagger.hpp"
#include "htmllstm/training.hpp"

namespace htmllstm {

struct RunConfig {
  TrainConfig train;

  // corpus generation
  std::size_t synth_n = 200;
  std::size_t sites_per_family = 5;
  bool structure_only = false;
  std::vector<std::string> schema{"name", "address", "phone"};

  // ingestion
  std::string tagger = kDefaultTagger;
  std::string synonyms;  // TSV dictionary path; empty disables unification

  // extraction and integration
  IntegrateOptions integrate;
  std::string format = "csv";

  std::vector<std::uint64_t> ablation_seeds{1, 2, 3};

  std::size_t gradcheck_trees = 5;
  std::size_t gradcheck_max_nodes = 12;
  double gradcheck_eps = 1e-5;
  std::size_t gradcheck_samples = 16;
  double gradcheck_tolerance = 1e-4;

  SynthConfig synth_config() const {
    SynthConfig s;
    s.n = synth_n;
    s.schema = schema;
    s.sites_per_family = sites_per_family;
    s.structure_only = structure_only;
    s.seed = train.seed;
    return s;
  }

  void validate() const {
    train.validate();
    if (synth_n < 1) throw ConfigError("synth_n must be >= 1");
    if (sites_per_family < 1) throw ConfigError("sites_per_family must be >= 1");
    if (schema.empty()) throw ConfigError("schema must not be empty");
    if (!(integrate.threshold >= 0 && integrate.threshold <= 1)) throw ConfigError("threshold must be in [0,1]");
    if (format != "csv" && format != "jsonl" && format != "html") throw ConfigError("format must be csv, jsonl or html");
    if (ablation_seeds.empty()) throw ConfigError("ablation_seeds must not be empty");
    if (gradcheck_trees < 1 || gradcheck_max_nodes < 1) throw ConfigError("gradcheck needs trees and nodes");
    if (!(gradcheck_eps > 0)) throw ConfigError("gradcheck_eps must be > 0");
  }
};

namespace config_detail {

inline std::string trim_copy(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc{} || ptr != end) throw ConfigError("bad value for " + key + ": '" + text + "'");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("bad value for " + key + ": '" + text + "' (true/false)");
}

inline std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim_copy(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
  return out;
}

// Values may be wrapped in double quotes to keep surrounding spaces.
inline std::string unquote(const std::string& v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  return v;
}

inline std::string quote_if_padded(const std::string& v) {
  if (!v.empty() && (std::isspace(static_cast<unsigned char>(v.front())) ||
                     std::isspace(static_cast<unsigned char>(v.back())) || v.find('#') != std::string::npos)) {
    return "\"" + v + "\"";
  }
  return v;
}

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

struct Field {
  std::function<void(RunConfig&, const std::string& key, const std::string& value)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define HTMLLSTM_NUMBER(type, expr)                                                                      \
  Field {                                                                                                \
    [](RunConfig& c, const std::string& k, const std::string& v) { c.expr = parse_number<type>(k, v); }, \
        [](const RunConfig& c) {                                                                         \
          if constexpr (std::is_floating_point_v<type>) return format_double(c.expr);                    \
          else return std::to_string(c.expr);                                                            \
        }                                                                                                \
  }
#define HTMLLSTM_BOOL(expr)                                                                        \
  Field {                                                                                          \
    [](RunConfig& c, const std::string& k, const std::string& v) { c.expr = parse_bool(k, v); },   \
        [](const RunConfig& c) { return std::string(c.expr ? "true" : "false"); }                  \
  }
#define HTMLLSTM_STRING(expr)                                                                      \
  Field {                                                                                          \
    [](RunConfig& c, const std::string&, const std::string& v) { c.expr = v; },                    \
        [](const RunConfig& c) { return quote_if_padded(c.expr); }                                 \
  }

// Key table in snapshot order.
inline const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"seed", HTMLLSTM_NUMBER(std::uint64_t, train.seed)},
      {"alpha", HTMLLSTM_NUMBER(double, train.optim.alpha)},
      {"beta1", HTMLLSTM_NUMBER(double, train.optim.beta1)},
      {"beta2", HTMLLSTM_NUMBER(double, train.optim.beta2)},
      {"epsilon", HTMLLSTM_NUMBER(double, train.optim.epsilon)},
      {"halve_every", HTMLLSTM_NUMBER(int, train.optim.halve_every)},
      {"epochs", HTMLLSTM_NUMBER(int, train.optim.epochs)},
      {"minibatch", HTMLLSTM_NUMBER(int, train.optim.minibatch)},
      {"dropout_p", HTMLLSTM_NUMBER(double, train.optim.dropout_p)},
      {"gamma", HTMLLSTM_NUMBER(double, train.loss.gamma)},
      {"f1_epsilon", HTMLLSTM_NUMBER(double, train.loss.f1_epsilon)},
      {"f1_include_other", HTMLLSTM_BOOL(train.loss.f1_include_other)},
      {"d_w", HTMLLSTM_NUMBER(std::size_t, train.model.encoder.d_w)},
      {"d_p", HTMLLSTM_NUMBER(std::size_t, train.model.encoder.d_p)},
      {"d_enc", HTMLLSTM_NUMBER(std::size_t, train.model.encoder.d_enc)},
      {"max_tokens", HTMLLSTM_NUMBER(std::size_t, train.model.encoder.max_tokens)},
      {"d_h", HTMLLSTM_NUMBER(std::size_t, train.model.d_h)},
      {"d_cls", HTMLLSTM_NUMBER(std::size_t, train.model.d_cls)},
      {"variant",
       {[](RunConfig& c, const std::string&, const std::string& v) { c.train.model.variant = parse_variant(v); },
        [](const RunConfig& c) { return to_string(c.train.model.variant); }}},
      {"downward_cell",
       {[](RunConfig& c, const std::string&, const std::string& v) {
          c.train.model.downward_cell = parse_downward_cell(v);
        },
        [](const RunConfig& c) { return to_string(c.train.model.downward_cell); }}},
      {"seed_mode",
       {[](RunConfig& c, const std::string&, const std::string& v) { c.train.model.seed_mode = parse_seed_mode(v); },
        [](const RunConfig& c) { return to_string(c.train.model.seed_mode); }}},
      {"clip_limit", HTMLLSTM_NUMBER(std::size_t, train.clip_limit)},
      {"augment", HTMLLSTM_BOOL(train.augment)},
      {"augment_p", HTMLLSTM_NUMBER(double, train.augment_p)},
      {"augment_copies", HTMLLSTM_NUMBER(std::size_t, train.augment_copies)},
      {"folds", HTMLLSTM_NUMBER(std::size_t, train.folds)},
      {"test_fold", HTMLLSTM_NUMBER(std::size_t, train.test_fold)},
      {"group_by_source", HTMLLSTM_BOOL(train.group_by_source)},
      {"min_count", HTMLLSTM_NUMBER(int, train.min_count)},
      {"synth_n", HTMLLSTM_NUMBER(std::size_t, synth_n)},
      {"sites_per_family", HTMLLSTM_NUMBER(std::size_t, sites_per_family)},
      {"structure_only", HTMLLSTM_BOOL(structure_only)},
      {"schema",
       {[](RunConfig& c, const std::string&, const std::string& v) { c.schema = split_list(v); },
        [](const RunConfig& c) { return join(c.schema); }}},
      {"tagger", HTMLLSTM_STRING(tagger)},
      {"synonyms", HTMLLSTM_STRING(synonyms)},
      {"mode",
       {[](RunConfig& c, const std::string&, const std::string& v) { c.integrate.mode = parse_extract_mode(v); },
        [](const RunConfig& c) { return to_string(c.integrate.mode); }}},
      {"multi_attributes",
       {[](RunConfig& c, const std::string&, const std::string& v) {
          c.integrate.per_attribute.clear();
          for (const auto& a : split_list(v)) c.integrate.per_attribute[a] = ExtractMode::Multi;
        },
        [](const RunConfig& c) {
          std::vector<std::string> names;
          for (const auto& [a, m] : c.integrate.per_attribute)
            if (m == ExtractMode::Multi) names.push_back(a);
          return join(names);
        }}},
      {"threshold", HTMLLSTM_NUMBER(double, integrate.threshold)},
      {"delimiter", HTMLLSTM_STRING(integrate.delimiter)},
      {"format", HTMLLSTM_STRING(format)},
      {"ablation_seeds",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          c.ablation_seeds.clear();
          for (const auto& s : split_list(v)) c.ablation_seeds.push_back(parse_number<std::uint64_t>(k, s));
        },
        [](const RunConfig& c) {
          std::vector<std::string> s;
          for (auto x : c.ablation_seeds) s.push_back(std::to_string(x));
          return join(s);
        }}},
      {"gradcheck_trees", HTMLLSTM_NUMBER(std::size_t, gradcheck_trees)},
      {"gradcheck_max_nodes", HTMLLSTM_NUMBER(std::size_t, gradcheck_max_nodes)},
      {"gradcheck_eps", HTMLLSTM_NUMBER(double, gradcheck_eps)},
      {"gradcheck_samples", HTMLLSTM_NUMBER(std::size_t, gradcheck_samples)},
      {"gradcheck_tolerance", HTMLLSTM_NUMBER(double, gradcheck_tolerance)},
  };
  return table;
}

#undef HTMLLSTM_NUMBER
#undef HTMLLSTM_BOOL
#undef HTMLLSTM_STRING

}  // namespace config_detail

inline std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, f] : config_detail::fields()) keys.push_back(k);
  return keys;
}

inline void set_config_value(RunConfig& c, const std::string& key, const std::string& value) {
  for (const auto& [k, f] : config_detail::fields()) {
    if (k == key) {
      f.set(c, key, config_detail::unquote(config_detail::trim_copy(value)));
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

inline std::string get_config_value(const RunConfig& c, const std::string& key) {
  for (const auto& [k, f] : config_detail::fields())
    if (k == key) return f.get(c);
  throw ConfigError("unknown config key '" + key + "'");
}

inline void apply_config_text(RunConfig& c, std::istream& in, const std::string& origin = "config") {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.erase(i);
        break;
      }
    }
    line = config_detail::trim_copy(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    try {
      set_config_value(c, config_detail::trim_copy(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

inline void apply_config_file(RunConfig& c, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open config: " + path);
  apply_config_text(c, in, path);
}

inline std::string config_snapshot(const RunConfig& c) {
  std::string out;
  for (const auto& [k, f] : config_detail::fields()) out += k + " = " + f.get(c) + "\n";
  return out;
}

inline void write_config_snapshot(const RunConfig& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoFailure("cannot write " + path);
  out << config_snapshot(c);
  if (!out) throw IoFailure("write failed: " + path);
}

}  // namespace htmllstm
