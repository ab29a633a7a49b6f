#pragma once

// End-to-end gradient check of the whole model on small random labeled trees.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "htmllstm/corpus.hpp"
#include "htmllstm/dom.hpp"
#include "htmllstm/loss.hpp"
#include "htmllstm/model.hpp"
#include "htmllstm/optim.hpp"
#include "htmllstm/random.hpp"
#include "htmllstm/training.hpp"

namespace htmllstm {

// Random ordered tree of exactly n nodes: each new node hangs under a
// uniformly chosen earlier node. Nodes get 0-3 tokens from a small pool and a
// label from `labels`.
inline DomTree random_labeled_tree(std::size_t n, Rng& rng, const std::vector<std::string>& labels) {
  static const std::vector<std::string> tags{"table", "tr", "td", "th", "div", "span", "b"};
  static const std::vector<std::string> words{"alpha", "beta", "gamma", "delta", "42", "x"};
  static const std::vector<std::string> pos{"NOUN", "NUM", "WORD"};
  if (n == 0) throw ConfigError("a tree needs at least one node");
  std::vector<std::vector<std::size_t>> children(n);
  for (std::size_t k = 1; k < n; ++k) children[uniform_index(rng, k)].push_back(k);
  std::function<DomNode(std::size_t)> make = [&](std::size_t k) {
    DomNode node;
    node.tag = tags[uniform_index(rng, tags.size())];
    const std::size_t count = uniform_index(rng, 4);
    for (std::size_t t = 0; t < count; ++t) {
      node.tokens.push_back(words[uniform_index(rng, words.size())]);
      node.pos_tags.push_back(pos[uniform_index(rng, pos.size())]);
    }
    for (std::size_t t = 0; t < node.tokens.size(); ++t) node.text += (t ? " " : "") + node.tokens[t];
    node.gold_label = labels[uniform_index(rng, labels.size())];
    for (std::size_t c : children[k]) node.children.push_back(make(c));
    return node;
  };
  DomTree tree;
  tree.root = make(0);
  assign_preorder_ids(tree);
  return tree;
}

struct ModelGradCheckOptions {
  ModelConfig model;
  std::size_t trees = 5;
  std::size_t max_nodes = 12;
  double eps = 1e-5;
  std::size_t samples_per_tensor = 16;
};

struct ModelGradCheck {
  GradCheckReport report;
  std::size_t nodes = 0;
};

// Dropout is forced off; focal weights come from the sampled label counts.
inline ModelGradCheck run_model_gradcheck(std::uint64_t seed, ModelGradCheckOptions opt) {
  if (opt.trees == 0 || opt.max_nodes == 0) throw ConfigError("gradcheck needs at least one non-empty tree");
  opt.model.dropout_p = 0.0;
  Rng rng(derive_seed(seed, {0}));
  Corpus corpus;
  for (std::size_t t = 0; t < opt.trees; ++t) {
    const std::size_t n = 1 + uniform_index(rng, opt.max_nodes);
    corpus.push_back({"g" + std::to_string(t), "gradcheck", random_labeled_tree(n, rng, {"a", "b", kOtherLabel})});
  }
  std::vector<const DomTree*> ptrs;
  for (const auto& t : corpus) ptrs.push_back(&t.tree);
  std::vector<std::string> classes{"a", "b", kOtherLabel};
  HtmlLstm model = HtmlLstm::initialize(opt.model, build_vocabularies(ptrs), classes, derive_seed(seed, {1}));

  LossConfig lc;
  std::vector<std::size_t> counts = class_counts(corpus, classes);
  for (auto& c : counts) c = std::max<std::size_t>(c, 1);
  lc.alpha = compute_alpha(counts);
  lc.other_class = classes.size() - 1;

  std::vector<PreparedTree> prepared;
  ModelGradCheck out;
  for (const auto& t : corpus) {
    prepared.push_back(model.prepare(t.tree));
    out.nodes += prepared.back().size();
  }
  std::vector<const PreparedTree*> batch;
  for (const auto& p : prepared) batch.push_back(&p);
  const std::vector<std::uint64_t> seeds(batch.size(), 0);
  DifferentiableLoss loss = [&](const ParamStore& p, GradStore* g) {
    return batch_gradients(model, batch, p, lc, false, seeds, g).loss;
  };
  out.report = grad_check(loss, model.params(), opt.eps, opt.samples_per_tensor, derive_seed(seed, {2}));
  return out;
}

}  // namespace htmllstm
