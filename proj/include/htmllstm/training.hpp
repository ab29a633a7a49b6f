#pragma once

// Source-grouped folds, the minibatch training loop, evaluation, and the
// three-variant ablation.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "htmllstm/corpus.hpp"
#include "htmllstm/error.hpp"
#include "htmllstm/loss.hpp"
#include "htmllstm/metrics.hpp"
#include "htmllstm/model.hpp"
#include "htmllstm/optim.hpp"
#include "htmllstm/random.hpp"
#include "htmllstm/tree_ops.hpp"
#include "htmllstm/vocab.hpp"

namespace htmllstm {

struct TrainConfig {
  OptimConfig optim;
  LossConfig loss;  // alpha is filled from the training split
  ModelConfig model;
  std::size_t clip_limit = 100;
  bool augment = false;
  double augment_p = 0.5;
  std::size_t augment_copies = 1;
  std::size_t folds = 5;
  std::size_t test_fold = 0;
  bool group_by_source = true;
  int min_count = 1;
  std::uint64_t seed = 1;
  std::string dump_dir;  // where a diverged run leaves its last state; empty disables

  void validate() const {
    optim.validate();
    if (folds < 2) throw ConfigError("folds must be >= 2");
    if (test_fold >= folds) throw ConfigError("test_fold must be < folds");
    if (clip_limit < 1) throw ConfigError("clip_limit must be >= 1");
    if (!(augment_p >= 0 && augment_p <= 1)) throw ConfigError("augment_p must be in [0,1]");
    if (min_count < 1) throw ConfigError("min_count must be >= 1");
    if (!(loss.gamma >= 0)) throw ConfigError("gamma must be >= 0");
  }
};

// ---------------------------------------------------------------------------
// Folds

struct FoldSplit {
  std::vector<std::vector<std::string>> sources;  // per fold
  std::vector<std::size_t> table_fold;            // per table
};

// Distinct sources are sorted, shuffled under `seed`, and dealt to folds in
// turn, so fold sizes differ by at most one. Without grouping every table is
// its own source.
inline FoldSplit split_folds(const std::vector<std::string>& table_sources, std::size_t k, bool group_by_source,
                             std::uint64_t seed) {
  if (k < 2) throw ConfigError("k must be >= 2");
  std::vector<std::string> keys;
  for (std::size_t i = 0; i < table_sources.size(); ++i) {
    keys.push_back(group_by_source ? table_sources[i] : "#" + std::to_string(i));
  }
  const std::set<std::string> unique(keys.begin(), keys.end());
  std::vector<std::string> distinct(unique.begin(), unique.end());
  if (distinct.size() < k) {
    throw TooFewSources("need at least " + std::to_string(k) + " sources, found " + std::to_string(distinct.size()));
  }
  Rng rng(seed);
  shuffle(distinct, rng);
  FoldSplit split;
  split.sources.resize(k);
  std::map<std::string, std::size_t> fold_of;
  for (std::size_t i = 0; i < distinct.size(); ++i) {
    split.sources[i % k].push_back(distinct[i]);
    fold_of[distinct[i]] = i % k;
  }
  for (const auto& key : keys) split.table_fold.push_back(fold_of.at(key));
  return split;
}

inline FoldSplit split_folds(const Corpus& corpus, std::size_t k, bool group_by_source, std::uint64_t seed) {
  std::vector<std::string> sources;
  for (const auto& t : corpus) sources.push_back(t.source);
  return split_folds(sources, k, group_by_source, seed);
}

struct TrainTestSplit {
  Corpus train;
  Corpus test;
};

inline TrainTestSplit train_test_split(const Corpus& corpus, const FoldSplit& folds, std::size_t test_fold) {
  TrainTestSplit s;
  for (std::size_t i = 0; i < corpus.size(); ++i) (folds.table_fold[i] == test_fold ? s.test : s.train).push_back(corpus[i]);
  return s;
}

// ---------------------------------------------------------------------------
// Minibatch gradient

struct BatchResult {
  double loss = 0.0;
  double focal = 0.0;
  double f1 = 0.0;
  std::size_t nodes = 0;
};

// Forward every tree on its own tape, evaluate the joint loss on a separate
// tape whose leaves are the probability matrices, then push dL/dP back into
// each tree tape. Parameter gradients are added to `grads` in batch order.
inline BatchResult batch_gradients(const HtmlLstm& model, const std::vector<const PreparedTree*>& batch,
                                   const ParamStore& params, const LossConfig& loss_cfg, bool training,
                                   const std::vector<std::uint64_t>& dropout_seeds, GradStore* grads) {
  if (batch.empty()) throw EmptyBatch("empty minibatch");
  std::vector<std::unique_ptr<Tape>> tapes;
  std::vector<Var> probs;
  std::vector<std::vector<std::size_t>> targets;
  Tape loss_tape;
  std::vector<Var> leaves;
  BatchResult r;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const PreparedTree& pt = *batch[k];
    if (!pt.labeled) throw CorpusFormatError("training tree has unlabeled nodes");
    tapes.push_back(std::make_unique<Tape>());
    probs.push_back(model.build(*tapes.back(), pt, params, training, dropout_seeds.empty() ? 0 : dropout_seeds[k]));
    leaves.push_back(loss_tape.leaf(probs.back().value()));
    targets.push_back(pt.targets);
    r.nodes += pt.size();
  }
  LossTerms terms = batch_loss(loss_tape, leaves, targets, loss_cfg);
  r.loss = terms.total.value()[0];
  r.focal = terms.focal.value()[0];
  r.f1 = terms.f1.value()[0];
  if (grads != nullptr && std::isfinite(r.loss)) {
    loss_tape.backward(terms.total);
    for (std::size_t k = 0; k < batch.size(); ++k) {
      std::pair<Var, Tensor> seed{probs[k], loss_tape.grad(leaves[k])};
      tapes[k]->backward(std::span<std::pair<Var, Tensor>>(&seed, 1));
      tapes[k]->accumulate_parameter_grads(*grads);
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Training loop

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double mean_loss = 0.0;
  double wall_ms = 0.0;
};

inline nlohmann::json epoch_log_to_json(const EpochLog& e) {
  return {{"epoch", e.epoch}, {"lr", e.lr}, {"mean_loss", e.mean_loss}, {"wall_ms", e.wall_ms}};
}

struct TrainResult {
  HtmlLstm model;
  std::vector<EpochLog> log;
};

inline std::vector<std::size_t> class_counts(const Corpus& corpus, const std::vector<std::string>& classes) {
  std::vector<std::size_t> counts(classes.size(), 0);
  for (const auto& t : corpus) {
    visit_preorder(t.tree.root, [&](const DomNode& n, int) {
      if (!n.gold_label) throw CorpusFormatError("table " + t.id + " has an unlabeled node");
      auto it = std::find(classes.begin(), classes.end(), *n.gold_label);
      if (it != classes.end()) counts[static_cast<std::size_t>(it - classes.begin())]++;
    });
  }
  return counts;
}

// Clipped copies of the trees; vocabularies and class weights are built from
// these, never from held-out data.
inline std::vector<DomTree> clipped_trees(const Corpus& corpus, std::size_t limit) {
  std::vector<DomTree> out;
  out.reserve(corpus.size());
  for (const auto& t : corpus) out.push_back(clip_postorder(t.tree, limit));
  return out;
}

using EpochCallback = std::function<void(const EpochLog&)>;

inline TrainResult train(const Corpus& corpus, TrainConfig cfg, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (corpus.empty()) throw EmptyCorpus("training corpus is empty");
  cfg.model.dropout_p = cfg.optim.dropout_p;

  Corpus clipped;
  for (const auto& t : corpus) clipped.push_back({t.id, t.source, clip_postorder(t.tree, cfg.clip_limit)});
  std::vector<const DomTree*> tree_ptrs;
  for (const auto& t : clipped) tree_ptrs.push_back(&t.tree);
  Vocabularies vocab = build_vocabularies(tree_ptrs, cfg.min_count);
  const std::vector<std::string> classes = corpus_classes(clipped);
  if (classes.size() < 2) throw ConfigError("training corpus needs at least one non-Other class");
  const auto counts = class_counts(clipped, classes);
  cfg.loss.alpha = compute_alpha(counts);
  cfg.loss.other_class = classes.size() - 1;

  TrainResult result{HtmlLstm::initialize(cfg.model, std::move(vocab), classes, derive_seed(cfg.seed, {0})), {}};
  HtmlLstm& model = result.model;
  AdamState adam(model.params());
  GradStore grads(model.params());

  std::vector<PreparedTree> originals;
  for (const auto& t : clipped) originals.push_back(model.prepare(t.tree));
  const bool make_copies = cfg.augment && cfg.augment_p > 0.0 && cfg.augment_copies > 0;

  for (int epoch = 0; epoch < cfg.optim.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::vector<PreparedTree> copies;
    if (make_copies) {
      for (std::size_t i = 0; i < corpus.size(); ++i) {
        if (corpus[i].tree.root.tag != "table") continue;
        for (std::size_t c = 0; c < cfg.augment_copies; ++c) {
          DomTree a = augment_table(corpus[i].tree, derive_seed(cfg.seed, {1, static_cast<std::uint64_t>(epoch), i, c}),
                                    cfg.augment_p);
          copies.push_back(model.prepare(clip_postorder(a, cfg.clip_limit)));
        }
      }
    }
    std::vector<const PreparedTree*> order;
    for (const auto& p : originals) order.push_back(&p);
    for (const auto& p : copies) order.push_back(&p);
    Rng rng(derive_seed(cfg.seed, {2, static_cast<std::uint64_t>(epoch)}));
    shuffle(order, rng);

    double loss_sum = 0.0;
    std::size_t node_sum = 0;
    const std::size_t mb = static_cast<std::size_t>(cfg.optim.minibatch);
    for (std::size_t b0 = 0, batch = 0; b0 < order.size(); b0 += mb, ++batch) {
      std::vector<const PreparedTree*> items(order.begin() + static_cast<std::ptrdiff_t>(b0),
                                             order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), b0 + mb)));
      std::vector<std::uint64_t> seeds;
      for (std::size_t k = 0; k < items.size(); ++k) {
        seeds.push_back(derive_seed(cfg.seed, {3, static_cast<std::uint64_t>(epoch), batch, k}));
      }
      grads.zero();
      BatchResult r = batch_gradients(model, items, model.params(), cfg.loss, true, seeds, &grads);
      if (!std::isfinite(r.loss) || !grads.all_finite()) {
        std::string where = "epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch);
        if (!cfg.dump_dir.empty()) {
          const auto path = (std::filesystem::path(cfg.dump_dir) / "diverged_checkpoint.json").string();
          save_checkpoint(path, model, {{"epoch", epoch}, {"batch", batch}, {"loss", r.loss}});
          where += " (state written to " + path + ")";
        }
        throw DivergedLoss("non-finite loss or gradient at " + where);
      }
      adam_step(model.params(), grads, adam, cfg.optim, epoch);
      loss_sum += r.loss * static_cast<double>(r.nodes);
      node_sum += r.nodes;
    }
    EpochLog e;
    e.epoch = epoch;
    e.lr = effective_learning_rate(cfg.optim, epoch);
    e.mean_loss = loss_sum / static_cast<double>(node_sum);
    e.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(e);
    if (on_epoch) on_epoch(e);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation

struct TreePredictions {
  std::string table_id;
  PreparedTree tree;
  std::vector<NodePrediction> predictions;
};

inline TreePredictions predict_tree(const HtmlLstm& model, const LabeledTable& table, std::size_t clip_limit) {
  TreePredictions out{table.id, model.prepare(clip_postorder(table.tree, clip_limit)), {}};
  out.predictions = predictions_from(model.probabilities(out.tree));
  return out;
}

struct Evaluation {
  MetricsTable metrics;
  std::vector<std::size_t> predicted;
  std::vector<std::size_t> gold;
};

inline Evaluation evaluate(const HtmlLstm& model, const Corpus& corpus, std::size_t clip_limit = 100) {
  Evaluation ev;
  for (const auto& t : corpus) {
    TreePredictions tp = predict_tree(model, t, clip_limit);
    if (!tp.tree.labeled) throw CorpusFormatError("evaluation table " + t.id + " has unlabeled nodes");
    for (std::size_t k = 0; k < tp.predictions.size(); ++k) {
      ev.predicted.push_back(tp.predictions[k].predicted);
      ev.gold.push_back(tp.tree.targets[k]);
    }
  }
  ev.metrics = evaluate_metrics(ev.predicted, ev.gold, model.classes());
  return ev;
}

// ---------------------------------------------------------------------------
// Ablation

struct AblationVariant {
  std::string name;
  Variant variant;
  bool augment;
};

inline std::vector<AblationVariant> ablation_variants() {
  return {{"upward-only", Variant::UpwardOnly, false}, {"full", Variant::Full, false}, {"full+aug", Variant::Full, true}};
}

struct AblationReport {
  std::vector<std::string> variants;
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<double>> macro_f1;  // [variant][seed]

  double mean(std::size_t v) const {
    double s = 0;
    for (double x : macro_f1[v]) s += x;
    return s / static_cast<double>(macro_f1[v].size());
  }
};

inline nlohmann::json ablation_to_json(const AblationReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t v = 0; v < r.variants.size(); ++v) {
    rows.push_back({{"variant", r.variants[v]}, {"macro_f1", r.macro_f1[v]}, {"mean", r.mean(v)}});
  }
  std::vector<std::size_t> order(r.variants.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return r.mean(a) < r.mean(b); });
  std::vector<std::string> ascending;
  for (auto i : order) ascending.push_back(r.variants[i]);
  return {{"seeds", r.seeds}, {"rows", rows}, {"ascending", ascending}};
}

inline std::string ablation_text(const AblationReport& r) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << "variant,mean";
  for (auto s : r.seeds) out << ",seed" << s;
  out << '\n';
  for (std::size_t v = 0; v < r.variants.size(); ++v) {
    out << r.variants[v] << ',' << r.mean(v);
    for (double x : r.macro_f1[v]) out << ',' << x;
    out << '\n';
  }
  return out.str();
}

using AblationProgress = std::function<void(const std::string& variant, std::uint64_t seed, double macro_f1)>;

// Trains the three variants on the same train/test split for each seed.
// The split itself is fixed by cfg.seed; each run uses the listed seed.
inline AblationReport run_ablation(const Corpus& corpus, const TrainConfig& cfg, const std::vector<std::uint64_t>& seeds,
                                   const AblationProgress& progress = {}) {
  if (seeds.empty()) throw ConfigError("ablation needs at least one seed");
  const FoldSplit folds = split_folds(corpus, cfg.folds, cfg.group_by_source, cfg.seed);
  const TrainTestSplit split = train_test_split(corpus, folds, cfg.test_fold);
  AblationReport report;
  report.seeds = seeds;
  for (const auto& v : ablation_variants()) {
    report.variants.push_back(v.name);
    report.macro_f1.emplace_back();
    for (std::uint64_t seed : seeds) {
      TrainConfig c = cfg;
      c.seed = seed;
      c.model.variant = v.variant;
      c.augment = v.augment;
      TrainResult tr = train(split.train, c);
      const double f1 = evaluate(tr.model, split.test, c.clip_limit).metrics.macro_f1();
      report.macro_f1.back().push_back(f1);
      if (progress) progress(v.name, seed, f1);
    }
  }
  return report;
}

}  // namespace htmllstm
