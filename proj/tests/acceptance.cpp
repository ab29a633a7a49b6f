// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. `acceptance 1 2 6` runs a subset. The lines are also
// written to acceptance_results.txt in the working directory.

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "htmllstm/htmllstm.hpp"

using namespace htmllstm;

namespace {

// Tolerances and budgets.
constexpr double kGradTolerance = 1e-4;
constexpr double kGradSeconds = 60;
constexpr double kFocalCeTolerance = 1e-12;
constexpr double kSoftF1Tolerance = 1e-6;
constexpr double kHeldOutF1 = 0.90;
constexpr double kTrainF1 = 0.99;
constexpr double kLearnSeconds = 600;
constexpr double kFullOverUpward = 0.02;
constexpr double kAugSlack = 0.005;
constexpr double kAblationSeconds = 1800;

struct Outcome {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream o;
  o << std::setprecision(precision) << v;
  return o.str();
}

Corpus synthetic(std::size_t n, bool structure_only, std::uint64_t seed) {
  SynthConfig sc;
  sc.n = n;
  sc.structure_only = structure_only;
  sc.seed = seed;
  return load_corpus(generate_corpus(sc, default_families()).records);
}

// 1. Tape gradients against central differences.
Outcome gradient_fidelity() {
  const auto t0 = Clock::now();
  ModelGradCheckOptions opt;
  opt.model.encoder.d_enc = 8;
  opt.model.d_h = 8;
  opt.trees = 5;
  opt.max_nodes = 12;
  opt.eps = 1e-5;
  opt.samples_per_tensor = 32;
  const ModelGradCheck r = run_model_gradcheck(2024, opt);
  const double secs = seconds_since(t0);
  Outcome o;
  const std::set<std::string> expected{"embedding", "encoder", "upward", "downward", "classifier"};
  std::set<std::string> seen;
  std::ostringstream d;
  for (const auto& [g, err] : r.report.per_group) {
    seen.insert(g);
    d << g << "=" << fmt(err, 3) << " ";
    if (!(err < kGradTolerance)) o.pass = false;
  }
  if (seen != expected) o.pass = false;
  if (secs >= kGradSeconds) o.pass = false;
  d << "(" << r.report.coordinates << " coords, " << r.nodes << " nodes, " << fmt(secs, 3) << "s)";
  o.detail = d.str();
  return o;
}

// 2. Loss identities.
Outcome loss_identities() {
  Outcome o;
  LossConfig plain;
  plain.gamma = 0.0;
  double worst_ce = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const double py = std::pow(10.0, -6.0 + 6.0 * k / 999.0);
    const std::vector<double> probs{py, (1.0 - py) * 0.25, (1.0 - py) * 0.75};
    worst_ce = std::max(worst_ce, std::abs(focal_loss(probs, 0, plain) - (-std::log(py))));
  }
  if (!(worst_ce <= kFocalCeTolerance)) o.pass = false;

  Rng rng(17);
  const std::vector<std::string> classes{"a", "b", "c", kOtherLabel};
  std::vector<Tensor> probs;
  std::vector<std::vector<std::size_t>> targets;
  std::vector<std::size_t> pred_flat, gold_flat;
  for (int b = 0; b < 4; ++b) {
    const std::size_t n = 20 + uniform_index(rng, 20);
    Tensor p(classes.size(), n);
    std::vector<std::size_t> y(n);
    for (std::size_t j = 0; j < n; ++j) {
      y[j] = uniform_index(rng, classes.size());
      const std::size_t guess = uniform01(rng) < 0.6 ? y[j] : uniform_index(rng, classes.size());
      p(guess, j) = 1.0;
      pred_flat.push_back(guess);
      gold_flat.push_back(y[j]);
    }
    probs.push_back(std::move(p));
    targets.push_back(std::move(y));
  }
  // Hard macro F1 from raw counts.
  double hard = 0.0;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t k = 0; k < gold_flat.size(); ++k) {
      tp += pred_flat[k] == c && gold_flat[k] == c;
      fp += pred_flat[k] == c && gold_flat[k] != c;
      fn += pred_flat[k] != c && gold_flat[k] == c;
    }
    hard += 2 * tp / (2 * tp + fp + fn);
  }
  hard /= static_cast<double>(classes.size());
  const LossConfig dflt;
  const double soft = soft_f1_loss(probs, targets, dflt);
  const double f1_gap = std::abs(soft - (1.0 - hard));
  if (!(f1_gap <= kSoftF1Tolerance)) o.pass = false;

  LossConfig weighted;
  weighted.alpha = {0.5, 1.5, 1.0, 1.0};
  for (auto& p : probs) {
    for (std::size_t j = 0; j < p.cols(); ++j) {
      double s = 0;
      for (std::size_t c = 0; c < p.rows(); ++c) s += (p(c, j) = 0.05 + uniform01(rng));
      for (std::size_t c = 0; c < p.rows(); ++c) p(c, j) /= s;
    }
  }
  const double focal = mean_focal_loss(probs, targets, weighted);
  const double f1 = soft_f1_loss(probs, targets, weighted);
  const bool total_exact = total_loss(probs, targets, weighted) == focal + f1;
  Tape tape;
  std::vector<Var> leaves;
  for (const auto& p : probs) leaves.push_back(tape.leaf(p));
  const LossTerms terms = batch_loss(tape, leaves, targets, weighted);
  const bool tape_exact = terms.total.value()[0] == terms.focal.value()[0] + terms.f1.value()[0];
  if (!total_exact || !tape_exact) o.pass = false;
  o.detail = "focal-vs-CE max diff " + fmt(worst_ce, 3) + ", soft-vs-hard F1 diff " + fmt(f1_gap, 3) +
             ", total==sum " + (total_exact && tape_exact ? "yes" : "no");
  return o;
}

// 3. Structural round-trips.
Outcome round_trips() {
  Outcome o;
  Rng rng(33);
  std::size_t tree_failures = 0;
  for (int k = 0; k < 1000; ++k) {
    const DomTree t = random_labeled_tree(1 + uniform_index(rng, 200), rng, {"x", kOtherLabel});
    if (!(unbinarize(binarize(t)) == t)) ++tree_failures;
  }

  const Corpus small = synthetic(12, false, 5);
  TrainConfig tc;
  tc.optim.epochs = 2;
  const TrainResult tr = train(small, tc);
  const auto path = (std::filesystem::temp_directory_path() / "htmllstm_acceptance_ckpt.json").string();
  save_checkpoint(path, tr.model);
  const HtmlLstm back = load_checkpoint(path);
  std::filesystem::remove(path);
  std::size_t ckpt_mismatch = 0;
  for (const auto& t : small) {
    const auto a = predict_tree(tr.model, t, 100).predictions;
    const auto b = predict_tree(back, t, 100).predictions;
    for (std::size_t j = 0; j < a.size(); ++j)
      if (a[j].probs != b[j].probs || a[j].predicted != b[j].predicted) ++ckpt_mismatch;
  }

  SynthConfig sc;
  sc.n = 200;
  const SynthCorpus gen = generate_corpus(sc, default_families());
  std::stringstream io;
  write_corpus_jsonl(io, gen.records);
  const auto reread = read_corpus_jsonl(io);
  std::size_t corpus_failures = reread == gen.records ? 0 : 1;
  for (const auto& r : reread) {
    const LabeledTable t = load_record(r);
    std::size_t non_other = 0;
    visit_preorder(t.tree.root, [&](const DomNode& n, int) { non_other += n.gold_label && *n.gold_label != kOtherLabel; });
    std::size_t expected = 0;
    for (const auto& l : r.labels) {
      const DomNode* n = node_at_path(t.tree.root, l.node_path);
      if (!n || n->gold_label != l.label) ++corpus_failures;
      expected += l.label != kOtherLabel;
    }
    if (non_other != expected) ++corpus_failures;
  }
  o.pass = tree_failures == 0 && ckpt_mismatch == 0 && corpus_failures == 0;
  o.detail = "binarize failures " + std::to_string(tree_failures) + "/1000, checkpoint mismatches " +
             std::to_string(ckpt_mismatch) + ", corpus failures " + std::to_string(corpus_failures) + "/200";
  return o;
}

// 4. End-to-end learning on the synthetic corpus.
Outcome end_to_end() {
  const auto t0 = Clock::now();
  const Corpus corpus = synthetic(200, false, 1);
  TrainConfig cfg;
  const FoldSplit folds = split_folds(corpus, cfg.folds, cfg.group_by_source, cfg.seed);
  const TrainTestSplit split = train_test_split(corpus, folds, cfg.test_fold);
  const TrainResult r = train(split.train, cfg);
  const double train_f1 = evaluate(r.model, split.train).metrics.macro_f1();
  const double test_f1 = evaluate(r.model, split.test).metrics.macro_f1();
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = test_f1 >= kHeldOutF1 && train_f1 >= kTrainF1 && secs < kLearnSeconds;
  o.detail = "held-out macro F1 " + fmt(test_f1) + " (>= " + fmt(kHeldOutF1) + "), train " + fmt(train_f1) +
             " (>= " + fmt(kTrainF1) + "), " + std::to_string(split.train.size()) + "/" +
             std::to_string(split.test.size()) + " tables, " + fmt(secs, 3) + "s";
  return o;
}

// 5. Ablation ordering on the structure-only corpus.
Outcome ablation() {
  const auto t0 = Clock::now();
  const Corpus corpus = synthetic(200, true, 1);
  TrainConfig cfg;
  const AblationReport rep = run_ablation(corpus, cfg, {1, 2, 3}, [](const std::string& v, std::uint64_t s, double f1) {
    std::cerr << "  ablation " << v << " seed " << s << " macro F1 " << f1 << "\n";
  });
  const double secs = seconds_since(t0);
  const double up = rep.mean(0), full = rep.mean(1), aug = rep.mean(2);
  int aug_best = 0;
  for (std::size_t s = 0; s < rep.seeds.size(); ++s)
    aug_best += rep.macro_f1[2][s] > rep.macro_f1[1][s] && rep.macro_f1[2][s] > rep.macro_f1[0][s];
  Outcome o;
  o.pass = full >= up + kFullOverUpward && aug >= full - kAugSlack && aug_best >= 2 && secs < kAblationSeconds;
  o.detail = "means upward " + fmt(up) + ", full " + fmt(full) + ", full+aug " + fmt(aug) + "; aug best in " +
             std::to_string(aug_best) + "/3 seeds, " + fmt(secs, 4) + "s";
  return o;
}

// 6. Extraction on the worked example.
Outcome integration_semantics() {
  const std::vector<std::string> classes{"Name", "Age", kOtherLabel};
  const std::vector<NodeCandidate> nodes{{0, "", 2, 0.99},     {1, "Name", 2, 0.95}, {2, "Tanaka", 0, 0.91},
                                         {3, "Age", 2, 0.93},  {4, "12", 1, 0.87},   {5, "None", 1, 0.23}};
  const auto best = extract_single(nodes, classes, "Age");
  const bool single_ok = best && best->text == "12" && best->score == 0.87;
  const std::vector<NodeCandidate> names{{1, "Tanaka", 0, 0.97}, {2, "Apple", 0, 0.23}, {3, "Suzuki", 0, 0.89}};
  const auto multi = extract_multi(names, classes, "Name", 0.5);
  const bool multi_ok = multi.size() == 2 && multi[0].text == "Tanaka" && multi[0].score == 0.97 &&
                        multi[1].text == "Suzuki" && multi[1].score == 0.89;
  Outcome o;
  o.pass = single_ok && multi_ok;
  o.detail = "single picks " + (best ? "\"" + best->text + "\" (" + fmt(best->score) + ")" : std::string("nothing")) +
             ", threshold 0.5 keeps " + std::to_string(multi.size());
  return o;
}

using Triple = std::tuple<std::string, std::vector<std::string>, std::string>;

std::multiset<Triple> node_triples(const DomTree& t) {
  std::multiset<Triple> out;
  visit_preorder(t.root, [&](const DomNode& n, int) { out.insert({n.tag, n.tokens, n.gold_label.value_or("")}); });
  return out;
}

// 7. Augmentation soundness.
Outcome augmentation() {
  const Corpus corpus = synthetic(100, false, 77);
  std::size_t multiset_failures = 0, identity_failures = 0, swaps = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const DomTree& t = corpus[i].tree;
    const auto before = node_triples(t);
    for (double p : {0.0, 0.5, 1.0}) {
      AugmentStats st;
      const DomTree a = augment_table(t, derive_seed(9, {i}), p, &st);
      swaps += st.row_swaps + st.column_swaps;
      if (node_triples(a) != before) ++multiset_failures;
      if (p == 0.0 && dump_tree(a) != dump_tree(t)) ++identity_failures;
    }
  }
  Outcome o;
  o.pass = multiset_failures == 0 && identity_failures == 0 && swaps > 0;
  o.detail = "multiset failures " + std::to_string(multiset_failures) + "/300, p=0 differences " +
             std::to_string(identity_failures) + "/100, swaps performed " + std::to_string(swaps);
  return o;
}

// 8. Post-order clipping.
Outcome clipping() {
  Rng rng(88);
  std::size_t failures = 0;
  for (int k = 0; k < 100; ++k) {
    DomTree t = random_labeled_tree(150 + uniform_index(rng, 151), rng, {"x", kOtherLabel});
    // Name every node by its 1-based post-order index; remember its parent.
    std::size_t next = 0;
    std::map<std::string, std::string> parent_of;
    std::function<void(DomNode&)> number = [&](DomNode& n) {
      for (auto& c : n.children) number(c);
      n.text = std::to_string(++next);
      for (const auto& c : n.children) parent_of[c.text] = n.text;
    };
    number(t.root);
    const std::size_t depth = t.depth();
    const DomTree clipped = clip_postorder(t, 100);
    std::set<std::size_t> kept;
    bool connected = true;
    std::function<void(const DomNode&, const DomNode*)> walk = [&](const DomNode& n, const DomNode* parent) {
      kept.insert(std::stoul(n.text));
      if (parent && parent_of[n.text] != parent->text) connected = false;
      if (!parent && n.text != t.root.text) connected = false;
      for (const auto& c : n.children) walk(c, &n);
    };
    walk(clipped.root, nullptr);
    bool prefix = true;
    for (std::size_t i = 1; i <= 100; ++i) prefix = prefix && kept.count(i);
    if (!connected || !prefix || clipped.size() > 100 + depth || kept.size() != clipped.size()) ++failures;
  }
  Outcome o;
  o.pass = failures == 0;
  o.detail = "failures " + std::to_string(failures) + "/100";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient fidelity", gradient_fidelity}, {"loss identities", loss_identities},
      {"structural round-trips", round_trips},  {"end-to-end learning", end_to_end},
      {"ablation ordering", ablation},          {"integration semantics", integration_semantics},
      {"augmentation soundness", augmentation}, {"clipping", clipping}};
  std::set<std::size_t> only;
  for (int i = 1; i < argc; ++i) only.insert(std::stoul(argv[i]));
  bool all_pass = true;
  std::ofstream results("acceptance_results.txt");
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    if (!only.empty() && !only.count(k + 1)) continue;
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all_pass = all_pass && o.pass;
    const std::string line =
        std::string(o.pass ? "PASS" : "FAIL") + " " + std::to_string(k + 1) + " " + criteria[k].first + ": " + o.detail;
    std::cout << line << std::endl;
    results << line << std::endl;
  }
  return all_pass ? 0 : 1;
}
