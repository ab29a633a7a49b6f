#include "htmllstm/corpus.hpp"
#include "htmllstm/dom.hpp"
#include "htmllstm/tagger.hpp"
#include "htmllstm/tree_ops.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <sstream>
#include <tuple>

#include "test_util.hpp"

namespace htmllstm {
namespace {

using Strings = std::vector<std::string>;

TEST(ParseHtml, SimpleTable) {
  DomTree t = parse_html("<table><tr><td>Name</td></tr></table>");
  EXPECT_EQ(t.root.tag, "table");
  ASSERT_EQ(t.root.children.size(), 1u);
  EXPECT_EQ(t.root.children[0].tag, "tr");
  ASSERT_EQ(t.root.children[0].children.size(), 1u);
  EXPECT_EQ(t.root.children[0].children[0].tokens, Strings{"Name"});
}

TEST(ParseHtml, EmptyInputThrows) {
  EXPECT_THROW(parse_html(""), UnparsableHtml);
  EXPECT_THROW(parse_html("just text, no markup"), UnparsableHtml);
}

TEST(ParseHtml, PreservesDocumentOrder) {
  DomTree t = parse_html("<div><p>x</p><p>y</p></div>");
  EXPECT_EQ(t.root.tag, "div");
  ASSERT_EQ(t.root.children.size(), 2u);
  EXPECT_EQ(t.root.children[0].tokens, Strings{"x"});
  EXPECT_EQ(t.root.children[1].tokens, Strings{"y"});
}

TEST(ParseHtml, LowercasesAndDropsScriptStyleComments) {
  DomTree t = parse_html(
      "<DIV><script>var x = '<p>';</script><!-- <p>gone</p> --><style>p{}</style><P CLASS=a>kept</P></DIV>");
  EXPECT_EQ(t.root.tag, "div");
  ASSERT_EQ(t.root.children.size(), 1u);
  EXPECT_EQ(t.root.children[0].tag, "p");
  EXPECT_TRUE(t.root.children[0].has_attribute("class"));
  EXPECT_EQ(t.root.children[0].tokens, Strings{"kept"});
}

TEST(ParseHtml, ToleratesOmittedEndTags) {
  DomTree t = parse_html("<table><tr><td>a<td>b<tr><td>c</table>");
  ASSERT_EQ(t.root.children.size(), 2u);
  EXPECT_EQ(t.root.children[0].children.size(), 2u);
  EXPECT_EQ(t.root.children[1].children.size(), 1u);
  EXPECT_EQ(t.root.children[1].children[0].tokens, Strings{"c"});
}

TEST(ParseHtml, DecodesEntitiesAndCollapsesWhitespace) {
  DomTree t = parse_html("<p>  a &amp;\n   b&nbsp;</p>");
  EXPECT_EQ(t.root.text, "a & b");
}

TEST(ParseHtml, MultipleTopLevelElementsGetDocumentRoot) {
  DomTree t = parse_html("<p>a</p><p>b</p>");
  EXPECT_EQ(t.root.children.size(), 2u);
}

TEST(ParseHtml, NodeIdsArePreorderAndUnique) {
  DomTree t = parse_html("<table><tr><td>a</td><td>b</td></tr><tr><td>c</td></tr></table>");
  int expected = 0;
  visit_preorder(t.root, [&](const DomNode& n, int) { EXPECT_EQ(n.node_id, expected++); });
}

TEST(ExtractTables, OneNoneAndTwo) {
  EXPECT_EQ(extract_table_subtrees(parse_html("<div><table><tr><td>x</td></tr></table></div>")).size(), 1u);
  EXPECT_TRUE(extract_table_subtrees(parse_html("<div><p>x</p></div>")).empty());
  auto two = extract_table_subtrees(parse_html("<div><table id=a></table><table id=b></table></div>"));
  ASSERT_EQ(two.size(), 2u);
  EXPECT_EQ(two[0].root.attributes[0].second, "a");
  EXPECT_EQ(two[1].root.attributes[0].second, "b");
}

TEST(ExtractTables, NestedTableReturnedOnce) {
  auto t = extract_table_subtrees(parse_html("<table><tr><td><table><tr><td>in</td></tr></table></td></tr></table>"));
  ASSERT_EQ(t.size(), 1u);
  for (const auto& s : t) EXPECT_EQ(s.root.tag, "table");
}

TEST(Tagger, DefaultRules) {
  auto a = tokenize_and_tag("Age: 12");
  EXPECT_EQ(a.tokens, (Strings{"Age", ":", "12"}));
  EXPECT_EQ(a.pos_tags, (Strings{"WORD", "PUNCT", "NUM"}));
  auto b = tokenize_and_tag("");
  EXPECT_TRUE(b.tokens.empty());
  EXPECT_TRUE(b.pos_tags.empty());
  auto c = tokenize_and_tag("492-4717");
  EXPECT_EQ(c.tokens, (Strings{"492", "-", "4717"}));
  EXPECT_EQ(c.pos_tags, (Strings{"NUM", "PUNCT", "NUM"}));
}

TEST(Tagger, UnknownPluginThrows) { EXPECT_THROW(tokenize_and_tag("x", "no-such-tagger"), UnknownTagger); }

TEST(Tagger, RegisteredPluginIsUsed) {
  TaggerRegistry::global().add("upper-test", [](std::string_view s) {
    return TaggedText{{std::string(s)}, {"X"}};
  });
  auto r = tokenize_and_tag("a b", "upper-test");
  EXPECT_EQ(r.tokens, Strings{"a b"});
  EXPECT_EQ(r.pos_tags, Strings{"X"});
}

DomTree single_cell(const std::string& text) {
  return parse_html("<table><tr><td>" + text + "</td></tr></table>");
}

const DomNode& cell_of(const DomTree& t) { return t.root.children[0].children[0]; }

TEST(Normalize, ExactMatchOnly) {
  SynonymDictionary dict;
  dict.add("Tel", "telephone number");
  EXPECT_EQ(cell_of(normalize_attribute_names(single_cell("Tel"), dict)).tokens,
            (Strings{"telephone", "number"}));
  EXPECT_EQ(cell_of(normalize_attribute_names(single_cell("  Tel "), dict)).tokens,
            (Strings{"telephone", "number"}));
  DomTree dotted = single_cell("Tel.");
  EXPECT_EQ(normalize_attribute_names(dotted, dict), dotted);
  EXPECT_EQ(normalize_attribute_names(dotted, SynonymDictionary{}), dotted);
}

TEST(Normalize, CanonicalNamesAreFixedPoints) {
  SynonymDictionary dict;
  dict.add("Tel", "phone");
  EXPECT_EQ(dict.lookup("phone"), std::optional<std::string>("phone"));
  EXPECT_THROW(dict.add("phone", "other"), ConfigError);
}

TEST(Normalize, DictionaryFileRoundTrip) {
  SynonymDictionary dict;
  dict.add("Tel", "phone");
  dict.add("Addr", "address");
  const auto path = (std::filesystem::temp_directory_path() / "htmllstm_syn_test.tsv").string();
  dict.save(path);
  auto back = SynonymDictionary::load(path);
  EXPECT_EQ(back.lookup("Tel"), std::optional<std::string>("phone"));
  EXPECT_EQ(back.lookup("Addr"), std::optional<std::string>("address"));
  std::filesystem::remove(path);
}

DomNode leaf(const std::string& tag) {
  DomNode n;
  n.tag = tag;
  return n;
}

DomTree r_ab() {
  DomTree t{leaf("r")};
  t.root.children = {leaf("a"), leaf("b")};
  assign_preorder_ids(t);
  return t;
}

std::vector<std::string> tags_preorder(const DomTree& t) {
  std::vector<std::string> out;
  visit_preorder(t.root, [&](const DomNode& n, int) { out.push_back(n.tag); });
  return out;
}

TEST(Clip, HandRunExamples) {
  EXPECT_EQ(tags_preorder(clip_postorder(r_ab(), 2)), (Strings{"r", "a", "b"}));
  EXPECT_EQ(tags_preorder(clip_postorder(r_ab(), 1)), (Strings{"r", "a"}));
  EXPECT_EQ(clip_postorder(r_ab(), 3), r_ab());
  EXPECT_EQ(clip_postorder(r_ab(), 1000), r_ab());
}

TEST(Clip, SizeBoundAndPrefixKept) {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    DomTree t = testing::random_tree(20 + uniform_index(rng, 200), rng);
    const std::size_t limit = 1 + uniform_index(rng, 60);
    DomTree c = clip_postorder(t, limit);
    EXPECT_LE(c.size(), limit + t.depth());
    // Post-order prefix of the input, identified by node_id, must survive.
    std::vector<int> prefix, kept;
    visit_postorder(t.root, [&](const DomNode& n) {
      if (prefix.size() < limit) prefix.push_back(n.node_id);
    });
    visit_preorder(c.root, [&](const DomNode& n, int) { kept.push_back(n.node_id); });
    std::sort(kept.begin(), kept.end());
    for (int id : prefix) EXPECT_TRUE(std::binary_search(kept.begin(), kept.end(), id));
  }
}

TEST(Binarize, ChildrenBecomeSiblingChain) {
  DomTree t{leaf("A")};
  t.root.children = {leaf("B"), leaf("C"), leaf("D")};
  BinaryTree bt = binarize(t);
  ASSERT_EQ(bt.size(), 4u);
  EXPECT_EQ(bt[0].payload->tag, "A");
  EXPECT_FALSE(bt[0].right);
  EXPECT_EQ(bt[*bt[0].left].payload->tag, "B");
  const auto b = *bt[0].left;
  EXPECT_EQ(bt[*bt[b].right].payload->tag, "C");
  const auto c = *bt[b].right;
  EXPECT_EQ(bt[*bt[c].right].payload->tag, "D");
  EXPECT_FALSE(bt[*bt[c].right].right);
  EXPECT_EQ(unbinarize(bt), t);
}

TEST(Binarize, SingleNode) {
  DomTree t{leaf("x")};
  BinaryTree bt = binarize(t);
  ASSERT_EQ(bt.size(), 1u);
  EXPECT_FALSE(bt[0].left);
  EXPECT_FALSE(bt[0].right);
  EXPECT_EQ(unbinarize(bt), t);
}

TEST(Binarize, RoundTripOnRandomTrees) {
  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    DomTree t = testing::random_tree(1 + uniform_index(rng, 200), rng);
    BinaryTree bt = binarize(t);
    ASSERT_EQ(bt.size(), t.size());
    for (std::size_t i = 0; i < bt.size(); ++i) {
      if (bt[i].left) ASSERT_GT(*bt[i].left, i);
      if (bt[i].right) ASSERT_GT(*bt[i].right, i);
    }
    ASSERT_EQ(unbinarize(bt), t);
  }
}

DomTree grid(std::size_t rows, std::size_t cols) {
  std::string html = "<table>";
  for (std::size_t r = 0; r < rows; ++r) {
    html += "<tr>";
    for (std::size_t c = 0; c < cols; ++c) html += "<td>r" + std::to_string(r) + "c" + std::to_string(c) + "</td>";
    html += "</tr>";
  }
  DomTree t = parse_html(html + "</table>");
  visit_preorder(t.root, [&](DomNode& n, int) { n.gold_label = n.tag == "td" ? n.text.substr(2) : kOtherLabel; });
  return t;
}

using Triple = std::tuple<std::string, Strings, std::string>;

std::vector<Triple> triples(const DomTree& t) {
  std::vector<Triple> out;
  visit_preorder(t.root, [&](const DomNode& n, int) { out.emplace_back(n.tag, n.tokens, n.gold_label.value_or("")); });
  std::sort(out.begin(), out.end());
  return out;
}

TEST(Augment, IdentityAtZero) {
  DomTree t = grid(3, 3);
  EXPECT_EQ(dump_tree(augment_table(t, 5, 0.0)), dump_tree(t));
  EXPECT_EQ(augment_table(t, 5, 0.0), t);
}

TEST(Augment, ForcedSwapOfTwoRows) {
  DomTree t = grid(2, 1);
  AugmentStats stats;
  DomTree a = augment_table(t, 1, 1.0, &stats);
  EXPECT_EQ(stats.row_swaps, 1u);
  EXPECT_EQ(a.root.children[0].children[0].text, "r1c0");
  EXPECT_EQ(a.root.children[1].children[0].text, "r0c0");
  EXPECT_EQ(triples(a), triples(t));
}

TEST(Augment, ColumnsSwapInEveryRowAndLabelsTravel) {
  DomTree t = grid(1, 2);
  DomTree a = augment_table(t, 1, 1.0);
  EXPECT_EQ(a.root.children[0].children[0].text, "r0c1");
  EXPECT_EQ(a.root.children[0].children[0].gold_label, std::optional<std::string>("c1"));
}

TEST(Augment, SeededReplay) {
  DomTree t = grid(5, 4);
  EXPECT_EQ(dump_tree(augment_table(t, 77, 0.5)), dump_tree(augment_table(t, 77, 0.5)));
  EXPECT_EQ(triples(augment_table(t, 77, 0.5)), triples(t));
}

TEST(Augment, NonRectangularSkipsColumns) {
  DomTree t = parse_html("<table><tr><td colspan=2>a</td></tr><tr><td>b</td><td>c</td></tr></table>");
  AugmentStats stats;
  DomTree a = augment_table(t, 3, 1.0, &stats);
  EXPECT_TRUE(stats.columns_skipped);
  EXPECT_EQ(stats.column_swaps, 0u);
  EXPECT_EQ(triples(a), triples(t));
}

TEST(Augment, RejectsNonTableRoot) { EXPECT_THROW(augment_table(DomTree{leaf("div")}, 1, 0.5), ConfigError); }

TEST(Dump, FormatUsesPostorderIndex) {
  DomTree t = r_ab();
  t.root.children[0].tokens = {"x", "y"};
  t.root.children[0].gold_label = "name";
  EXPECT_EQ(dump_tree(t), "3 r \"\"\n  1 a \"x y\" [name]\n  2 b \"\"\n");
}

TEST(Corpus, JsonlRoundTripAndLabels) {
  CorpusRecord r{"t1", "<table><tr><td>Tanaka</td><td>12</td></tr></table>", {{{0, 0}, "Name"}, {{0, 1}, "Age"}}, "s"};
  std::stringstream ss;
  write_corpus_jsonl(ss, {r});
  auto back = read_corpus_jsonl(ss);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0], r);
  LabeledTable lt = load_record(back[0]);
  EXPECT_EQ(lt.tree.root.gold_label, std::optional<std::string>(kOtherLabel));
  EXPECT_EQ(lt.tree.root.children[0].children[1].gold_label, std::optional<std::string>("Age"));
  EXPECT_EQ(corpus_classes({lt}), (Strings{"Name", "Age", "Other"}));
  auto collected = collect_labels(lt.tree);
  ASSERT_EQ(collected.size(), 2u);
  EXPECT_EQ(collected[0].node_path, (std::vector<int>{0, 0}));
}

TEST(Corpus, BadPathOrJsonThrows) {
  CorpusRecord r{"t1", "<table><tr><td>x</td></tr></table>", {{{3}, "Name"}}, "s"};
  EXPECT_THROW(load_record(r), CorpusFormatError);
  std::stringstream bad("{not json}\n");
  EXPECT_THROW(read_corpus_jsonl(bad), CorpusFormatError);
}

}  // namespace
}  // namespace htmllstm
