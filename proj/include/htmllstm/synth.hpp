#pragma once

// Synthetic labeled table corpora. A layout family fixes the table shape
// (orientation, header style, decorations); each site inside a family fixes
// one concrete layout (attribute order, header synonyms, noise slots) and
// acts as a fold source. Tables of one site differ in entities and values.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "htmllstm/corpus.hpp"
#include "htmllstm/error.hpp"
#include "htmllstm/random.hpp"
#include "htmllstm/tree_ops.hpp"

namespace htmllstm {

enum class Orientation { Row, Column };
enum class HeaderStyle { Th, BoldTd, None };

inline std::string to_string(Orientation o) { return o == Orientation::Row ? "row" : "column"; }
inline std::string to_string(HeaderStyle h) {
  switch (h) {
    case HeaderStyle::Th: return "th";
    case HeaderStyle::BoldTd: return "bold-td";
    case HeaderStyle::None: return "none";
  }
  return "none";
}

struct LayoutSpec {
  std::string family;
  Orientation orientation = Orientation::Row;
  HeaderStyle header = HeaderStyle::Th;
  // Permutation of slot ids [0, schema + noise_count); ids >= schema.size() are noise slots.
  std::vector<std::size_t> slot_order;
  std::size_t noise_count = 0;
  std::vector<std::string> wrappers;         // around each value, outermost first
  std::vector<std::size_t> synonym_choice;   // per schema attribute
  bool sections = false;                     // thead/tbody around row-major rows
  std::size_t min_entities = 2;
  std::size_t max_entities = 4;
  bool structure_only = false;

  void validate(std::size_t schema_size) const {
    std::vector<std::size_t> sorted = slot_order;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> expect(schema_size + noise_count);
    std::iota(expect.begin(), expect.end(), 0);
    if (sorted != expect) throw ConfigError("layout slot_order is not a permutation of the attribute and noise slots");
    if (synonym_choice.size() != schema_size) throw ConfigError("layout needs one synonym choice per attribute");
    if (min_entities < 1 || max_entities < min_entities) throw ConfigError("layout entity range is invalid");
  }
};

namespace synth_detail {

// Header surface forms; the first entry is the canonical name.
inline std::vector<std::string> synonyms_for(const std::string& attribute) {
  if (attribute == "name") return {"Name", "Facility name", "Facility"};
  if (attribute == "address") return {"Address", "Location", "Addr"};
  if (attribute == "phone") return {"Telephone number", "Tel", "Phone"};
  std::string cap = attribute;
  if (!cap.empty()) cap[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(cap[0])));
  return {cap};
}

inline const std::vector<std::string>& noise_headers() {
  static const std::vector<std::string> h{"Note", "Remarks"};
  return h;
}

enum class ValueKind { Name, Address, Phone, Remark };

inline ValueKind kind_for(const std::string& attribute) {
  if (attribute == "name") return ValueKind::Name;
  if (attribute == "address") return ValueKind::Address;
  if (attribute == "phone") return ValueKind::Phone;
  return ValueKind::Remark;
}

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& v) {
  return v[uniform_index(rng, v.size())];
}

inline std::string digits(Rng& rng, int n) {
  std::string s;
  for (int k = 0; k < n; ++k) s.push_back(static_cast<char>('0' + uniform_index(rng, 10)));
  return s;
}

inline std::string make_value(ValueKind kind, Rng& rng) {
  static const std::vector<std::string> surnames{
      "Tanaka",   "Suzuki", "Sato",      "Takahashi", "Watanabe", "Ito",    "Yamamoto", "Nakamura",
      "Kobayashi", "Kato",  "Yoshida",   "Yamada",    "Sasaki",   "Yamaguchi", "Matsumoto", "Inoue",
      "Kimura",   "Hayashi", "Shimizu",  "Yamazaki",  "Mori",     "Abe",    "Ikeda",    "Hashimoto"};
  static const std::vector<std::string> given{"Sakura", "Hinata", "Aoi",  "Yui",   "Haruto", "Sota",
                                              "Minato", "Ren",    "Mio",  "Riko",  "Yuto",   "Kaito",
                                              "Hana",   "Emma",   "Akari", "Daiki"};
  static const std::vector<std::string> streets{"Sakura", "Midori", "Kawa", "Hikari", "Oka", "Matsu", "Umi", "Kita"};
  static const std::vector<std::string> suffix{"Street", "Avenue", "Lane", "Road"};
  static const std::vector<std::string> wards{"Minato", "Chuo", "Kita", "Nishi", "Higashi", "Aoba", "Naka"};
  static const std::vector<std::string> remarks{"Open weekdays", "Closed on Sundays", "Parking available",
                                                "None", "Lunch provided", "Bus service", "Under renovation"};
  switch (kind) {
    case ValueKind::Name: return pick(rng, surnames) + " " + pick(rng, given);
    case ValueKind::Address:
      return std::to_string(1 + uniform_index(rng, 40)) + " " + pick(rng, streets) + " " + pick(rng, suffix) + " " +
             pick(rng, wards);
    case ValueKind::Phone: return digits(rng, 3) + "-" + digits(rng, 4);
    case ValueKind::Remark: return pick(rng, remarks);
  }
  return {};
}

// Minimal element tree used to emit HTML and the matching label paths.
struct Element {
  std::string tag;
  std::string text;
  std::string label;  // empty means Other
  std::vector<Element> children;
};

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

inline void emit(const Element& e, std::vector<int>& path, std::string& html, std::vector<LabelAssignment>& labels) {
  html += "<" + e.tag + ">" + escape(e.text);
  if (!e.label.empty()) labels.push_back({path, e.label});
  for (std::size_t k = 0; k < e.children.size(); ++k) {
    path.push_back(static_cast<int>(k));
    emit(e.children[k], path, html, labels);
    path.pop_back();
  }
  html += "</" + e.tag + ">";
}

inline Element text_element(std::string tag, std::string text, std::string label = {}) {
  return Element{std::move(tag), std::move(text), std::move(label), {}};
}

}  // namespace synth_detail

struct GeneratedTable {
  std::string html;
  std::vector<LabelAssignment> labels;  // non-Other nodes only
};

// Builds one table. Value cells carry their attribute label; headers,
// decoration wrappers' outer nodes, and noise cells are Other.
inline GeneratedTable generate_table(std::uint64_t seed, const std::vector<std::string>& schema,
                                     const LayoutSpec& layout) {
  using namespace synth_detail;
  if (schema.empty()) throw ConfigError("schema must not be empty");
  layout.validate(schema.size());
  Rng rng(seed);
  const std::size_t entities =
      layout.min_entities + uniform_index(rng, layout.max_entities - layout.min_entities + 1);
  const std::size_t noise_header = uniform_index(rng, noise_headers().size());

  auto header_text = [&](std::size_t slot) {
    if (slot >= schema.size()) return noise_headers()[noise_header];
    const auto syn = synonyms_for(schema[slot]);
    return syn[layout.synonym_choice[slot] % syn.size()];
  };
  auto header_cell = [&](std::size_t slot) {
    if (layout.header == HeaderStyle::BoldTd) {
      Element td{"td", {}, {}, {text_element("b", header_text(slot))}};
      return td;
    }
    return text_element("th", header_text(slot));
  };
  const std::vector<ValueKind> all_kinds{ValueKind::Name, ValueKind::Address, ValueKind::Phone, ValueKind::Remark};
  auto value_cell = [&](std::size_t slot) {
    const bool noise = slot >= schema.size();
    const ValueKind kind = layout.structure_only ? pick(rng, all_kinds)
                                                 : (noise ? ValueKind::Remark : kind_for(schema[slot]));
    const std::string label = noise ? std::string{} : schema[slot];
    Element leaf = text_element(layout.wrappers.empty() ? "td" : layout.wrappers.back(), make_value(kind, rng), label);
    for (std::size_t w = layout.wrappers.size(); w-- > 0;) {
      const std::string outer = w == 0 ? "td" : layout.wrappers[w - 1];
      leaf = Element{outer, {}, {}, {std::move(leaf)}};
    }
    return leaf;
  };

  Element table{"table", {}, {}, {}};
  const bool has_header = layout.header != HeaderStyle::None;
  if (layout.orientation == Orientation::Row) {
    std::vector<Element> header_rows, body_rows;
    if (has_header) {
      Element tr{"tr", {}, {}, {}};
      for (std::size_t slot : layout.slot_order) tr.children.push_back(header_cell(slot));
      header_rows.push_back(std::move(tr));
    }
    for (std::size_t e = 0; e < entities; ++e) {
      Element tr{"tr", {}, {}, {}};
      for (std::size_t slot : layout.slot_order) tr.children.push_back(value_cell(slot));
      body_rows.push_back(std::move(tr));
    }
    if (layout.sections) {
      if (!header_rows.empty()) table.children.push_back(Element{"thead", {}, {}, std::move(header_rows)});
      table.children.push_back(Element{"tbody", {}, {}, std::move(body_rows)});
    } else {
      for (auto& r : header_rows) table.children.push_back(std::move(r));
      for (auto& r : body_rows) table.children.push_back(std::move(r));
    }
  } else {
    for (std::size_t slot : layout.slot_order) {
      Element tr{"tr", {}, {}, {}};
      if (has_header) tr.children.push_back(header_cell(slot));
      for (std::size_t e = 0; e < entities; ++e) tr.children.push_back(value_cell(slot));
      table.children.push_back(std::move(tr));
    }
  }

  GeneratedTable out;
  std::vector<int> path;
  emit(table, path, out.html, out.labels);
  return out;
}

// A layout family draws one concrete site layout from an rng.
struct LayoutFamily {
  std::string name;
  std::function<LayoutSpec(Rng&, std::size_t schema_size)> make_site;
};

inline std::vector<std::size_t> random_slots(Rng& rng, std::size_t n) {
  std::vector<std::size_t> s(n);
  std::iota(s.begin(), s.end(), 0);
  shuffle(s, rng);
  return s;
}

inline std::vector<std::size_t> random_synonyms(Rng& rng, std::size_t n) {
  std::vector<std::size_t> s(n);
  for (auto& x : s) x = uniform_index(rng, 3);
  return s;
}

// Four structurally distinct families: header row of th inside thead/tbody;
// one attribute per row with a leading th; header row of bold td cells with
// span-wrapped values; and a plain grid without headers in fixed order.
inline std::vector<LayoutFamily> default_families() {
  return {
      {"row-th",
       [](Rng& rng, std::size_t n) {
         LayoutSpec l;
         l.family = "row-th";
         l.noise_count = uniform_index(rng, 2);
         l.slot_order = random_slots(rng, n + l.noise_count);
         l.synonym_choice = random_synonyms(rng, n);
         l.sections = true;
         return l;
       }},
      {"column-th",
       [](Rng& rng, std::size_t n) {
         LayoutSpec l;
         l.family = "column-th";
         l.orientation = Orientation::Column;
         l.noise_count = uniform_index(rng, 2);
         l.slot_order = random_slots(rng, n + l.noise_count);
         l.synonym_choice = random_synonyms(rng, n);
         return l;
       }},
      {"row-bold",
       [](Rng& rng, std::size_t n) {
         LayoutSpec l;
         l.family = "row-bold";
         l.header = HeaderStyle::BoldTd;
         l.noise_count = uniform_index(rng, 2);
         l.slot_order = random_slots(rng, n + l.noise_count);
         l.synonym_choice = random_synonyms(rng, n);
         l.wrappers = {"span"};
         return l;
       }},
      {"column-bold",
       [](Rng& rng, std::size_t n) {
         LayoutSpec l;
         l.family = "column-bold";
         l.orientation = Orientation::Column;
         l.header = HeaderStyle::BoldTd;
         l.noise_count = uniform_index(rng, 2);
         l.slot_order = random_slots(rng, n + l.noise_count);
         l.synonym_choice = random_synonyms(rng, n);
         l.wrappers = {"div"};
         return l;
       }},
  };
}

struct SynthConfig {
  std::size_t n = 200;
  std::vector<std::string> schema{"name", "address", "phone"};
  std::size_t sites_per_family = 5;
  bool structure_only = false;
  std::uint64_t seed = 1;
};

struct SynthCorpus {
  std::vector<CorpusRecord> records;
  nlohmann::json manifest;
};

inline nlohmann::json layout_to_json(const LayoutSpec& l) {
  return {{"family", l.family},         {"orientation", to_string(l.orientation)},
          {"header", to_string(l.header)}, {"slot_order", l.slot_order},
          {"noise_count", l.noise_count}, {"wrappers", l.wrappers},
          {"synonym_choice", l.synonym_choice}, {"sections", l.sections},
          {"entities", {l.min_entities, l.max_entities}}, {"structure_only", l.structure_only}};
}

// Table i goes to family i mod F and, within it, to site (i / F) mod S.
// The source of a table is "<family>/site<k>".
inline SynthCorpus generate_corpus(const SynthConfig& cfg, const std::vector<LayoutFamily>& families) {
  if (cfg.n < 1) throw ConfigError("corpus size must be >= 1");
  if (families.empty()) throw ConfigError("at least one layout family is required");
  if (cfg.sites_per_family < 1) throw ConfigError("sites_per_family must be >= 1");
  SynthCorpus out;
  std::vector<std::vector<LayoutSpec>> sites(families.size());
  nlohmann::json site_json = nlohmann::json::array();
  for (std::size_t f = 0; f < families.size(); ++f) {
    for (std::size_t s = 0; s < cfg.sites_per_family; ++s) {
      Rng rng(derive_seed(cfg.seed, {1, f, s}));
      LayoutSpec l = families[f].make_site(rng, cfg.schema.size());
      l.structure_only = cfg.structure_only;
      l.validate(cfg.schema.size());
      site_json.push_back({{"source", families[f].name + "/site" + std::to_string(s)}, {"layout", layout_to_json(l)}});
      sites[f].push_back(std::move(l));
    }
  }
  char id[32];
  for (std::size_t i = 0; i < cfg.n; ++i) {
    const std::size_t f = i % families.size();
    const std::size_t s = (i / families.size()) % cfg.sites_per_family;
    GeneratedTable t = generate_table(derive_seed(cfg.seed, {2, i}), cfg.schema, sites[f][s]);
    std::snprintf(id, sizeof id, "t%05zu", i);
    out.records.push_back({id, std::move(t.html), std::move(t.labels), families[f].name + "/site" + std::to_string(s)});
  }
  nlohmann::json fams = nlohmann::json::array();
  for (const auto& f : families) fams.push_back(f.name);
  out.manifest = {{"n", cfg.n},           {"schema", cfg.schema},
                  {"families", fams},     {"sites_per_family", cfg.sites_per_family},
                  {"structure_only", cfg.structure_only}, {"seed", cfg.seed},
                  {"sites", site_json}};
  return out;
}

// Header synonyms used by the generator, mapped to their canonical form.
inline SynonymDictionary synth_synonyms(const std::vector<std::string>& schema) {
  SynonymDictionary dict;
  for (const auto& a : schema) {
    const auto syn = synth_detail::synonyms_for(a);
    for (const auto& s : syn) dict.add(s, syn[0]);
  }
  return dict;
}

}  // namespace htmllstm
