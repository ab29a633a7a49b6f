#pragma once

// Node encoder: every time step sees [onehot(tag) | E_content(token) | E_pos(pos)];
// a forward and a backward sequence LSTM run over the steps and their final
// hidden states are concatenated into the node feature (2 * d_enc).

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "htmllstm/dom.hpp"
#include "htmllstm/error.hpp"
#include "htmllstm/random.hpp"
#include "htmllstm/tensor.hpp"
#include "htmllstm/vocab.hpp"

namespace htmllstm {

struct EncoderConfig {
  std::size_t d_w = 128;
  std::size_t d_p = 5;
  std::size_t d_enc = 64;
  std::size_t max_tokens = 64;
};

// Uniform(-r, r) with r = 1/sqrt(cols).
inline void init_uniform(Tensor& t, Rng& rng) {
  const double r = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(t.cols(), 1)));
  for (double& v : t.data()) v = uniform(rng, -r, r);
}

// Sets rows [block*h, (block+1)*h) of a bias column to value.
inline void fill_bias_block(Tensor& b, std::size_t block, std::size_t h, double value) {
  for (std::size_t r = block * h; r < (block + 1) * h; ++r) b[r] = value;
}

inline std::size_t step_width(const EncoderConfig& cfg, const Vocabularies& v) {
  return v.tags.size() + cfg.d_w + cfg.d_p;
}

struct EncoderParamIds {
  std::size_t content, pos;
  std::size_t fwd_W, fwd_U, fwd_b;
  std::size_t bwd_W, bwd_U, bwd_b;
};

inline EncoderParamIds add_encoder_params(ParamStore& store, const EncoderConfig& cfg, const Vocabularies& v,
                                          Rng& rng) {
  const std::size_t d_in = step_width(cfg, v);
  const std::size_t h = cfg.d_enc;
  auto make = [&](const char* name, std::size_t r, std::size_t c) {
    Tensor t(r, c);
    init_uniform(t, rng);
    return store.add(name, std::move(t));
  };
  EncoderParamIds ids{};
  ids.content = make("embedding.content", v.tokens.size(), cfg.d_w);
  ids.pos = make("embedding.pos", v.pos.size(), cfg.d_p);
  ids.fwd_W = make("encoder.fwd.W", 4 * h, d_in);
  ids.fwd_U = make("encoder.fwd.U", 4 * h, h);
  ids.fwd_b = store.add("encoder.fwd.b", Tensor(4 * h, 1));
  fill_bias_block(store.value(ids.fwd_b), 1, h, 1.0);
  ids.bwd_W = make("encoder.bwd.W", 4 * h, d_in);
  ids.bwd_U = make("encoder.bwd.U", 4 * h, h);
  ids.bwd_b = store.add("encoder.bwd.b", Tensor(4 * h, 1));
  fill_bias_block(store.value(ids.bwd_b), 1, h, 1.0);
  return ids;
}

inline EncoderParamIds find_encoder_params(const ParamStore& s) {
  return {s.index_of("embedding.content"), s.index_of("embedding.pos"), s.index_of("encoder.fwd.W"),
          s.index_of("encoder.fwd.U"),     s.index_of("encoder.fwd.b"), s.index_of("encoder.bwd.W"),
          s.index_of("encoder.bwd.U"),     s.index_of("encoder.bwd.b")};
}

struct StepIndices {
  std::size_t tag;
  std::size_t token;
  std::size_t pos;
};

// Vocabulary indices of a node's time steps; an empty text becomes the
// single step (tag, EMPTY, EMPTY); texts longer than max_tokens keep their
// first max_tokens tokens.
inline std::vector<StepIndices> index_node(const DomNode& n, const Vocabularies& v, std::size_t max_tokens) {
  if (n.tokens.size() != n.pos_tags.size()) throw LengthMismatch("node has unequal token and PoS counts");
  std::vector<StepIndices> steps;
  const std::size_t tag = v.tags.index(n.tag);
  if (n.tokens.empty()) {
    steps.push_back({tag, v.tokens.empty_index(), v.pos.empty_index()});
    return steps;
  }
  const std::size_t count = std::min(n.tokens.size(), max_tokens);
  for (std::size_t t = 0; t < count; ++t) steps.push_back({tag, v.tokens.index(n.tokens[t]), v.pos.index(n.pos_tags[t])});
  return steps;
}

struct EncoderVars {
  Var content, pos;
  LstmWeights fwd, bwd;
  std::size_t tag_count = 0;
};

inline EncoderVars encoder_vars(Tape& tape, const ParamStore& store, const EncoderParamIds& ids,
                                std::size_t tag_count) {
  return {tape.parameter(store, ids.content),
          tape.parameter(store, ids.pos),
          {tape.parameter(store, ids.fwd_W), tape.parameter(store, ids.fwd_U), tape.parameter(store, ids.fwd_b)},
          {tape.parameter(store, ids.bwd_W), tape.parameter(store, ids.bwd_U), tape.parameter(store, ids.bwd_b)},
          tag_count};
}

// Step inputs e_t as columns: (|tags| + d_w + d_p) x steps.
inline Var embed_steps(Tape& tape, const EncoderVars& ev, const std::vector<StepIndices>& steps) {
  Tensor onehot(ev.tag_count, steps.size());
  std::vector<std::size_t> tokens, pos;
  tokens.reserve(steps.size());
  pos.reserve(steps.size());
  for (std::size_t s = 0; s < steps.size(); ++s) {
    if (steps[s].tag >= ev.tag_count) throw IndexOutOfRange("tag index out of range");
    onehot(steps[s].tag, s) = 1.0;
    tokens.push_back(steps[s].token);
    pos.push_back(steps[s].pos);
  }
  return concat_rows({tape.constant(std::move(onehot)), embedding_lookup(ev.content, std::move(tokens)),
                      embedding_lookup(ev.pos, std::move(pos))});
}

// Runs one direction over projected step columns [first, first + count).
inline Var run_sequence(Var projected, std::size_t first, std::size_t count, bool reverse, Var U) {
  std::optional<LstmState> state;
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t s = reverse ? first + count - 1 - k : first + k;
    Var pre = column(projected, s);
    if (state) pre = add(pre, matmul(U, state->h));
    state = lstm_gates(pre, state ? &state->c : nullptr);
  }
  return state->h;
}

// Encodes all nodes of a tree at once; returns X with one 2*d_enc column per node.
inline Var encode_nodes(Tape& tape, const EncoderVars& ev, const std::vector<std::vector<StepIndices>>& nodes) {
  std::vector<StepIndices> steps;
  std::vector<std::size_t> offsets;
  for (const auto& n : nodes) {
    if (n.empty()) throw LengthMismatch("every node needs at least one step");
    offsets.push_back(steps.size());
    steps.insert(steps.end(), n.begin(), n.end());
  }
  Var E = embed_steps(tape, ev, steps);
  Var Gf = add_broadcast(matmul(ev.fwd.W, E), ev.fwd.b);
  Var Gb = add_broadcast(matmul(ev.bwd.W, E), ev.bwd.b);
  std::vector<Var> features;
  features.reserve(nodes.size());
  for (std::size_t j = 0; j < nodes.size(); ++j) {
    Var hf = run_sequence(Gf, offsets[j], nodes[j].size(), false, ev.fwd.U);
    Var hb = run_sequence(Gb, offsets[j], nodes[j].size(), true, ev.bwd.U);
    features.push_back(concat_rows({hf, hb}));
  }
  return concat_cols(features);
}

// Single step input e_t as a plain vector.
inline Tensor embed_step(std::size_t tag_idx, std::size_t token_idx, std::size_t pos_idx, const ParamStore& store,
                         const EncoderParamIds& ids, std::size_t tag_count) {
  Tape tape;
  EncoderVars ev = encoder_vars(tape, store, ids, tag_count);
  return embed_steps(tape, ev, {{tag_idx, token_idx, pos_idx}}).value();
}

// Feature x of one node as a plain vector.
inline Tensor encode_node(const DomNode& node, const ParamStore& store, const EncoderParamIds& ids,
                          const Vocabularies& v, const EncoderConfig& cfg) {
  if (!v.frozen()) throw ConfigError("vocabularies must be frozen before encoding");
  Tape tape;
  EncoderVars ev = encoder_vars(tape, store, ids, v.tags.size());
  return encode_nodes(tape, ev, {index_node(node, v, cfg.max_tokens)}).value();
}

}  // namespace htmllstm
