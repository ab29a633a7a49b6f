#pragma once

// Focal loss with inverse-frequency class weights, differentiable soft-F1
// loss, and their sum. Each loss has a plain-value form and a tape form; the
// two are kept formula-for-formula identical.

#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "htmllstm/error.hpp"
#include "htmllstm/tensor.hpp"

namespace htmllstm {

inline constexpr double kProbFloor = 1e-12;

struct LossConfig {
  double gamma = 2.0;
  std::vector<double> alpha;  // per class; empty means all ones
  double f1_epsilon = 1e-8;
  bool f1_include_other = true;
  std::optional<std::size_t> other_class;  // consulted when f1_include_other is false

  double alpha_for(std::size_t c) const { return alpha.empty() ? 1.0 : alpha.at(c); }

  void validate(std::size_t num_classes) const {
    if (!(gamma >= 0)) throw ConfigError("gamma must be >= 0");
    if (!alpha.empty()) {
      if (alpha.size() != num_classes) throw ConfigError("alpha has the wrong number of classes");
      for (double a : alpha)
        if (!(a > 0)) throw ConfigError("alpha entries must be > 0");
    }
  }

  // Per-class weights of the soft-F1 average.
  std::vector<double> f1_weights(std::size_t num_classes) const {
    std::vector<double> w(num_classes, 1.0);
    if (!f1_include_other && other_class && *other_class < num_classes && num_classes > 1) w[*other_class] = 0.0;
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (double& x : w) x /= total;
    return w;
  }
};

// alpha_i proportional to 1/count_i, scaled so the weights sum to N.
inline std::vector<double> compute_alpha(std::span<const std::size_t> counts) {
  if (counts.empty()) throw ZeroCount("no classes");
  double inv_total = 0.0;
  for (std::size_t c : counts) {
    if (c == 0) throw ZeroCount("every class needs at least one example");
    inv_total += 1.0 / static_cast<double>(c);
  }
  std::vector<double> alpha;
  const double n = static_cast<double>(counts.size());
  for (std::size_t c : counts) alpha.push_back(n * (1.0 / static_cast<double>(c)) / inv_total);
  return alpha;
}

inline void require_distribution(std::span<const double> probs) {
  double s = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) throw InvalidDistribution("negative or NaN probability");
    s += p;
  }
  if (std::abs(s - 1.0) > 1e-6) throw InvalidDistribution("probabilities sum to " + std::to_string(s));
}

// -alpha_y (1 - p_y)^gamma log(p_y) for the true class y.
inline double focal_loss(std::span<const double> probs, std::size_t target, const LossConfig& cfg) {
  require_distribution(probs);
  if (target >= probs.size()) throw IndexOutOfRange("target class out of range");
  const double p = probs[target];
  return -cfg.alpha_for(target) * std::pow(1.0 - p, cfg.gamma) * std::log(std::max(p, kProbFloor));
}

// probs: one N x n_i matrix per tree (column j = node j); targets likewise.
inline double soft_f1_loss(std::span<const Tensor> probs, std::span<const std::vector<std::size_t>> targets,
                           const LossConfig& cfg) {
  if (probs.empty() || probs.size() != targets.size()) throw EmptyBatch("soft-F1 needs a non-empty batch");
  const std::size_t n_classes = probs[0].rows();
  std::vector<double> tp(n_classes, 0.0), fp(n_classes, 0.0), fn(n_classes, 0.0);
  std::size_t nodes = 0;
  for (std::size_t b = 0; b < probs.size(); ++b) {
    const Tensor& P = probs[b];
    if (P.rows() != n_classes || P.cols() != targets[b].size()) throw LengthMismatch("probs/targets shape mismatch");
    for (std::size_t j = 0; j < P.cols(); ++j) {
      for (std::size_t c = 0; c < n_classes; ++c) {
        const double p = P(c, j);
        const double t = targets[b][j] == c ? 1.0 : 0.0;
        tp[c] += p * t;
        fp[c] += p * (1.0 - t);
        fn[c] += (1.0 - p) * t;
      }
    }
    nodes += P.cols();
  }
  if (nodes == 0) throw EmptyBatch("soft-F1 batch has no nodes");
  const auto w = cfg.f1_weights(n_classes);
  double f1 = 0.0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    f1 += w[c] * (2.0 * tp[c] / (2.0 * tp[c] + fp[c] + fn[c] + cfg.f1_epsilon));
  }
  return 1.0 - f1;
}

inline double mean_focal_loss(std::span<const Tensor> probs, std::span<const std::vector<std::size_t>> targets,
                              const LossConfig& cfg) {
  double total = 0.0;
  std::size_t nodes = 0;
  for (std::size_t b = 0; b < probs.size(); ++b) {
    for (std::size_t j = 0; j < probs[b].cols(); ++j) {
      std::vector<double> col(probs[b].rows());
      for (std::size_t c = 0; c < col.size(); ++c) col[c] = probs[b](c, j);
      total += focal_loss(col, targets[b][j], cfg);
    }
    nodes += probs[b].cols();
  }
  if (nodes == 0) throw EmptyBatch("focal loss batch has no nodes");
  return total / static_cast<double>(nodes);
}

inline double total_loss(std::span<const Tensor> probs, std::span<const std::vector<std::size_t>> targets,
                         const LossConfig& cfg) {
  return mean_focal_loss(probs, targets, cfg) + soft_f1_loss(probs, targets, cfg);
}

// ---------------------------------------------------------------------------
// Tape form

struct LossTerms {
  Var total;
  Var focal;
  Var f1;
};

inline LossTerms batch_loss(Tape& tape, std::span<const Var> probs,
                            std::span<const std::vector<std::size_t>> targets, const LossConfig& cfg) {
  if (probs.empty() || probs.size() != targets.size()) throw EmptyBatch("loss needs a non-empty batch");
  Var P = probs.size() == 1 ? probs[0] : concat_cols(probs);
  const std::size_t n_classes = P.rows();
  const std::size_t nodes = P.cols();
  if (nodes == 0) throw EmptyBatch("loss batch has no nodes");
  cfg.validate(n_classes);

  Tensor onehot(n_classes, nodes);
  Tensor weighted(n_classes, nodes);
  std::size_t col = 0;
  for (std::size_t b = 0; b < targets.size(); ++b) {
    if (targets[b].size() != probs[b].cols()) throw LengthMismatch("targets do not match prediction count");
    for (std::size_t y : targets[b]) {
      if (y >= n_classes) throw IndexOutOfRange("target class out of range");
      onehot(y, col) = 1.0;
      weighted(y, col) = cfg.alpha_for(y);
      ++col;
    }
  }
  Var T = tape.constant(onehot);
  Var not_T = tape.constant([&] {
    Tensor t = onehot;
    t.arr() = 1.0 - t.arr();
    return t;
  }());
  Var W = tape.constant(std::move(weighted));

  Var one_minus_p = affine(P, -1.0, 1.0);
  Var focal_terms = mul(mul(W, pow(one_minus_p, cfg.gamma)), log(clamp_min(P, kProbFloor)));
  Var focal = scale(sum(focal_terms), -1.0 / static_cast<double>(nodes));

  Var tp = sum_cols(mul(P, T));
  Var fp = sum_cols(mul(P, not_T));
  Var fn = sum_cols(mul(one_minus_p, T));
  Var denom = affine(add(add(scale(tp, 2.0), fp), fn), 1.0, cfg.f1_epsilon);
  Var f1_per_class = div(scale(tp, 2.0), denom);
  Var weights = tape.constant(Tensor::column(cfg.f1_weights(n_classes)));
  Var f1 = affine(sum(mul(f1_per_class, weights)), -1.0, 1.0);

  return {add(focal, f1), focal, f1};
}

}  // namespace htmllstm
