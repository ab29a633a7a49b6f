#pragma once

// Adam with step-halving learning rate, inverted dropout, and a central
// finite-difference gradient checker.

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "htmllstm/error.hpp"
#include "htmllstm/random.hpp"
#include "htmllstm/tensor.hpp"

namespace htmllstm {

struct OptimConfig {
  double alpha = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int halve_every = 15;
  int epochs = 50;
  int minibatch = 128;
  double dropout_p = 0.5;

  void validate() const {
    if (!(alpha > 0)) throw ConfigError("alpha must be > 0");
    if (!(beta1 > 0 && beta1 < 1)) throw ConfigError("beta1 must be in (0,1)");
    if (!(beta2 > 0 && beta2 < 1)) throw ConfigError("beta2 must be in (0,1)");
    if (halve_every < 1) throw ConfigError("halve_every must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (minibatch < 1) throw ConfigError("minibatch must be >= 1");
    if (!(dropout_p >= 0 && dropout_p < 1)) throw ConfigError("dropout_p must be in [0,1)");
  }
};

// alpha / 2^floor(epoch / halve_every), epochs counted from 0.
inline double effective_learning_rate(const OptimConfig& cfg, int epoch) {
  return cfg.alpha / std::ldexp(1.0, epoch / cfg.halve_every);
}

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;

  AdamState() = default;
  explicit AdamState(const ParamStore& params) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      m.emplace_back(params.value(i).rows(), params.value(i).cols());
      v.emplace_back(params.value(i).rows(), params.value(i).cols());
    }
  }
};

inline void adam_step(ParamStore& params, const GradStore& grads, AdamState& state, const OptimConfig& cfg,
                      int epoch) {
  if (grads.size() != params.size() || state.m.size() != params.size()) {
    throw ShapeMismatch("adam_step: parameter/gradient/state counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!grads[i].same_shape(params.value(i)) || !state.m[i].same_shape(params.value(i))) {
      throw ShapeMismatch("adam_step: shape mismatch for " + params.name(i));
    }
  }
  state.step += 1;
  const double lr = effective_learning_rate(cfg, epoch);
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params.value(i).arr();
    auto g = grads[i].arr();
    auto m = state.m[i].arr();
    auto v = state.v[i].arr();
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.square();
    p -= lr * (m / bc1) / ((v / bc2).sqrt() + cfg.epsilon);
  }
}

// Keep-mask scaled by 1/(1-p); entries are 0 or 1/(1-p).
inline Tensor dropout_mask(std::size_t rows, std::size_t cols, double p, std::uint64_t seed) {
  Tensor mask(rows, cols);
  Rng rng(seed);
  const double keep_scale = 1.0 / (1.0 - p);
  for (double& m : mask.data()) m = uniform01(rng) < p ? 0.0 : keep_scale;
  return mask;
}

inline Var dropout(Var x, double p, std::uint64_t seed, bool training) {
  if (!(p >= 0 && p < 1)) throw ConfigError("dropout probability must be in [0,1)");
  if (!training || p == 0.0) return x;
  Var mask = x.tape->constant(dropout_mask(x.rows(), x.cols(), p, seed));
  return mul(x, mask);
}

// Loss evaluated at params; when grads is non-null it also receives the
// analytic gradient.
using DifferentiableLoss = std::function<double(const ParamStore& params, GradStore* grads)>;

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::map<std::string, double> per_group;  // group -> max relative error
  std::size_t coordinates = 0;
};

// Relative error used throughout: |a - n| / max(|a|, |n|, floor). The floor
// keeps coordinates whose true gradient is ~0 from being judged on
// round-off alone.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

// Group name of a parameter: the text before the first '.'.
inline std::string parameter_group(const std::string& name) {
  auto dot = name.find('.');
  return dot == std::string::npos ? name : name.substr(0, dot);
}

// Compares analytic gradients with central differences on a random sample of
// coordinates from every parameter tensor (all coordinates when a tensor has
// at most samples_per_tensor entries).
inline GradCheckReport grad_check(const DifferentiableLoss& loss, ParamStore params, double eps = 1e-5,
                                  std::size_t samples_per_tensor = 16, std::uint64_t seed = 0) {
  GradStore analytic(params);
  const double base = loss(params, &analytic);
  const double again = loss(params, nullptr);
  if (base != again) throw NonDeterministicLoss("loss differs between two evaluations at identical parameters");

  GradCheckReport report;
  Rng rng(seed);
  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor& value = params.value(t);
    std::vector<std::size_t> coords;
    if (value.size() <= samples_per_tensor) {
      for (std::size_t k = 0; k < value.size(); ++k) coords.push_back(k);
    } else {
      for (std::size_t s = 0; s < samples_per_tensor; ++s) coords.push_back(uniform_index(rng, value.size()));
    }
    const std::string group = parameter_group(params.name(t));
    double& group_err = report.per_group[group];
    for (std::size_t k : coords) {
      const double saved = value[k];
      value[k] = saved + eps;
      const double plus = loss(params, nullptr);
      value[k] = saved - eps;
      const double minus = loss(params, nullptr);
      value[k] = saved;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double err = relative_error(analytic[t][k], numeric);
      group_err = std::max(group_err, err);
      report.max_relative_error = std::max(report.max_relative_error, err);
      report.coordinates += 1;
    }
  }
  return report;
}

}  // namespace htmllstm
