#pragma once

// The tree model: node encoder, upward tree LSTM (leaves -> root), downward
// tree LSTM (root -> leaves, separate gates toward each child), feature
// combination, and the softmax node classifier.
//
// Trees are consumed in their left-child/right-sibling binary form.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "htmllstm/dom.hpp"
#include "htmllstm/encoder.hpp"
#include "htmllstm/error.hpp"
#include "htmllstm/optim.hpp"
#include "htmllstm/random.hpp"
#include "htmllstm/tensor.hpp"
#include "htmllstm/tree_ops.hpp"
#include "htmllstm/vocab.hpp"

namespace htmllstm {

enum class DownwardCell { PerChild, Summed };
enum class SeedMode { UpwardRoot, Zero };
enum class Variant { Full, UpwardOnly };

inline std::string to_string(DownwardCell c) { return c == DownwardCell::PerChild ? "perchild" : "summed"; }
inline std::string to_string(SeedMode m) { return m == SeedMode::UpwardRoot ? "upward-root" : "zero"; }
inline std::string to_string(Variant v) { return v == Variant::Full ? "full" : "upward"; }

inline DownwardCell parse_downward_cell(const std::string& s) {
  if (s == "perchild") return DownwardCell::PerChild;
  if (s == "summed") return DownwardCell::Summed;
  throw ConfigError("downward_cell must be perchild or summed, got '" + s + "'");
}
inline SeedMode parse_seed_mode(const std::string& s) {
  if (s == "upward-root") return SeedMode::UpwardRoot;
  if (s == "zero") return SeedMode::Zero;
  throw ConfigError("seed_mode must be upward-root or zero, got '" + s + "'");
}
inline Variant parse_variant(const std::string& s) {
  if (s == "full") return Variant::Full;
  if (s == "upward") return Variant::UpwardOnly;
  throw ConfigError("variant must be upward or full, got '" + s + "'");
}

struct ModelConfig {
  EncoderConfig encoder;
  std::size_t d_h = 64;
  std::size_t d_cls = 64;
  double dropout_p = 0.5;
  DownwardCell downward_cell = DownwardCell::PerChild;
  SeedMode seed_mode = SeedMode::UpwardRoot;
  Variant variant = Variant::Full;
};

inline nlohmann::json model_config_to_json(const ModelConfig& c) {
  return {{"d_w", c.encoder.d_w},         {"d_p", c.encoder.d_p},
          {"d_enc", c.encoder.d_enc},     {"max_tokens", c.encoder.max_tokens},
          {"d_h", c.d_h},                 {"d_cls", c.d_cls},
          {"dropout_p", c.dropout_p},     {"downward_cell", to_string(c.downward_cell)},
          {"seed_mode", to_string(c.seed_mode)}, {"variant", to_string(c.variant)}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.encoder.d_w = j.at("d_w").get<std::size_t>();
  c.encoder.d_p = j.at("d_p").get<std::size_t>();
  c.encoder.d_enc = j.at("d_enc").get<std::size_t>();
  c.encoder.max_tokens = j.at("max_tokens").get<std::size_t>();
  c.d_h = j.at("d_h").get<std::size_t>();
  c.d_cls = j.at("d_cls").get<std::size_t>();
  c.dropout_p = j.at("dropout_p").get<double>();
  c.downward_cell = parse_downward_cell(j.at("downward_cell").get<std::string>());
  c.seed_mode = parse_seed_mode(j.at("seed_mode").get<std::string>());
  c.variant = parse_variant(j.at("variant").get<std::string>());
  return c;
}

// ---------------------------------------------------------------------------
// Parameter layout
//
// upward.W   (4h x 2d_enc)  row blocks i, f, o, u  (f shared by both children)
// upward.U_L (5h x h)       row blocks i, f_L, f_R, o, u applied to the left child's h
// upward.U_R (5h x h)       same blocks applied to the right child's h
// upward.b   (4h x 1)       i, f, o, u
// downward.W (4h x 2d_enc)  i, f, o, u  (f and o shared by both directions)
// downward.U (6h x h)       i, f_L, f_R, o_L, o_R, u applied to the incoming h
// downward.b (4h x 1)       i, f, o, u
// classifier.W_hidden (d_cls x 3h), classifier.b_hidden, classifier.W_s (N x d_cls), classifier.b_s

struct UpwardParamIds {
  std::size_t W, U_L, U_R, b;
};
struct DownwardParamIds {
  std::size_t W, U, b;
};
struct ClassifierParamIds {
  std::size_t W_hidden, b_hidden, W_s, b_s;
};

struct UpwardVars {
  Var W, U_L, U_R, b;
};
struct DownwardVars {
  Var W, U, b;
};
struct ClassifierVars {
  Var W_hidden, b_hidden, W_s, b_s;
};

// Binary structure of a tree in pre-order; children have larger indices.
struct BinaryStructure {
  std::vector<std::optional<std::size_t>> left;
  std::vector<std::optional<std::size_t>> right;

  std::size_t size() const { return left.size(); }

  static BinaryStructure from(const BinaryTree& bt) {
    BinaryStructure s;
    for (const auto& n : bt.nodes) {
      s.left.push_back(n.left);
      s.right.push_back(n.right);
    }
    return s;
  }
};

struct UpwardStates {
  std::vector<Var> h;
  std::vector<Var> c;
};

// One upward node. `pre` holds W x + b expanded to the i, f_L, f_R, o, u
// blocks; absent children contribute zero h and c, which is the same as
// leaving their terms out.
inline LstmState upward_cell(Var pre, const LstmState* left, const LstmState* right, Var U_L, Var U_R) {
  const std::size_t h = U_L.cols();
  if (left) pre = add(pre, matmul(U_L, left->h));
  if (right) pre = add(pre, matmul(U_R, right->h));
  Var sig = sigmoid(slice_rows(pre, 0, 4 * h));
  Var i = slice_rows(sig, 0, h);
  Var o = slice_rows(sig, 3 * h, h);
  Var u = tanh(slice_rows(pre, 4 * h, h));
  Var c = mul(i, u);
  if (left) c = add(c, mul(slice_rows(sig, h, h), left->c));
  if (right) c = add(c, mul(slice_rows(sig, 2 * h, h), right->c));
  return {mul(o, tanh(c)), c};
}

// Expands i,f,o,u input projections to i,f,f,o,u so they line up with the U blocks.
inline Var upward_projection(Var X, const UpwardVars& p) {
  const std::size_t h = p.U_L.cols();
  Var WX = add_broadcast(matmul(p.W, X), p.b);
  return concat_rows({slice_rows(WX, 0, 2 * h), slice_rows(WX, h, 3 * h)});
}

// Post-order evaluation of the binary tree LSTM over every node.
inline UpwardStates upward_pass(const BinaryStructure& bt, Var X, const UpwardVars& p) {
  const std::size_t n = bt.size();
  if (X.cols() != n) throw ShapeMismatch("upward_pass: one feature column per node required");
  Var WX5 = upward_projection(X, p);
  UpwardStates st{std::vector<Var>(n), std::vector<Var>(n)};
  std::vector<LstmState> states(n);
  for (std::size_t k = n; k-- > 0;) {
    const auto L = bt.left[k];
    const auto R = bt.right[k];
    states[k] = upward_cell(column(WX5, k), L ? &states[*L] : nullptr, R ? &states[*R] : nullptr, p.U_L, p.U_R);
    st.h[k] = states[k].h;
    st.c[k] = states[k].c;
  }
  return st;
}

// States emitted by each node toward its left and right binary children.
struct DownwardEmissions {
  std::vector<Var> h_left, c_left, h_right, c_right;
};

struct DownwardCellOutput {
  LstmState left, right;
};

// One downward node. `pre` holds W x + b expanded to the i, f_L, f_R, o_L,
// o_R, u blocks; `in` is the incoming parent state (absent means zero).
inline DownwardCellOutput downward_cell(Var pre, const LstmState* in, Var U, DownwardCell cell) {
  const std::size_t h = U.cols();
  if (in) pre = add(pre, matmul(U, in->h));
  Var sig = sigmoid(slice_rows(pre, 0, 5 * h));
  Var i = slice_rows(sig, 0, h);
  Var u = tanh(slice_rows(pre, 5 * h, h));
  Var iu = mul(i, u);
  Var cl = iu;
  Var cr = iu;
  if (in) {
    Var fl = slice_rows(sig, h, h);
    Var fr = slice_rows(sig, 2 * h, h);
    if (cell == DownwardCell::PerChild) {
      cl = add(iu, mul(fl, in->c));
      cr = add(iu, mul(fr, in->c));
    } else {
      cl = add(iu, mul(add(fl, fr), in->c));
      cr = cl;
    }
  }
  return {{mul(slice_rows(sig, 3 * h, h), tanh(cl)), cl}, {mul(slice_rows(sig, 4 * h, h), tanh(cr)), cr}};
}

// i,f,o,u -> i,f,f,o,o,u to line up with the U blocks.
inline Var downward_projection(Var X, const DownwardVars& p) {
  const std::size_t h = p.U.cols();
  Var WX = add_broadcast(matmul(p.W, X), p.b);
  return concat_rows({slice_rows(WX, 0, 2 * h), slice_rows(WX, h, 2 * h), slice_rows(WX, 2 * h, 2 * h)});
}

// Pre-order evaluation. The root's incoming state is the upward root state
// (SeedMode::UpwardRoot) or zero; every other node receives its parent's
// emission on the matching side.
inline DownwardEmissions downward_pass(const BinaryStructure& bt, Var X, const DownwardVars& p, SeedMode seed_mode,
                                       const UpwardStates* upward, DownwardCell cell) {
  const std::size_t n = bt.size();
  if (X.cols() != n) throw ShapeMismatch("downward_pass: one feature column per node required");
  if (seed_mode == SeedMode::UpwardRoot && upward == nullptr) {
    throw ConfigError("downward_pass: upward-root seeding needs the upward states");
  }
  Var WX6 = downward_projection(X, p);
  std::vector<std::optional<LstmState>> incoming(n);
  if (n > 0 && seed_mode == SeedMode::UpwardRoot) incoming[0] = LstmState{upward->h[0], upward->c[0]};

  DownwardEmissions em{std::vector<Var>(n), std::vector<Var>(n), std::vector<Var>(n), std::vector<Var>(n)};
  for (std::size_t k = 0; k < n; ++k) {
    auto out = downward_cell(column(WX6, k), incoming[k] ? &*incoming[k] : nullptr, p.U, cell);
    em.h_left[k] = out.left.h;
    em.c_left[k] = out.left.c;
    em.h_right[k] = out.right.h;
    em.c_right[k] = out.right.c;
    if (bt.left[k]) incoming[*bt.left[k]] = out.left;
    if (bt.right[k]) incoming[*bt.right[k]] = out.right;
  }
  return em;
}

// [h_up | h_left_down | h_right_down], column-wise for matrices.
inline Var combine_features(Var h_up, Var h_left, Var h_right) {
  if (h_up.rows() != h_left.rows() || h_up.rows() != h_right.rows() || h_up.cols() != h_left.cols() ||
      h_up.cols() != h_right.cols()) {
    throw ShapeMismatch("combine_features: operand shapes differ");
  }
  return concat_rows({h_up, h_left, h_right});
}

// Class probabilities (N x nodes) from combined features (3h x nodes).
inline Var classify(Var H, const ClassifierVars& p, double dropout_p, bool training, std::uint64_t dropout_seed) {
  Var hidden = tanh(add_broadcast(matmul(p.W_hidden, H), p.b_hidden));
  hidden = dropout(hidden, dropout_p, dropout_seed, training);
  return softmax(add_broadcast(matmul(p.W_s, hidden), p.b_s));
}

struct NodePrediction {
  std::vector<double> probs;
  std::size_t predicted = 0;
  double score = 0.0;
};

// Argmax with ties going to the lowest class index.
inline NodePrediction prediction_from(std::span<const double> probs) {
  NodePrediction p;
  p.probs.assign(probs.begin(), probs.end());
  for (std::size_t c = 0; c < probs.size(); ++c) {
    if (c == 0 || probs[c] > p.score) {
      p.score = probs[c];
      p.predicted = c;
    }
  }
  return p;
}

inline std::vector<NodePrediction> predictions_from(const Tensor& P) {
  std::vector<NodePrediction> out;
  std::vector<double> col(P.rows());
  for (std::size_t j = 0; j < P.cols(); ++j) {
    for (std::size_t c = 0; c < P.rows(); ++c) col[c] = P(c, j);
    out.push_back(prediction_from(col));
  }
  return out;
}

// A tree converted to vocabulary indices and binary structure.
struct PreparedTree {
  std::vector<std::vector<StepIndices>> steps;  // per node, pre-order
  BinaryStructure structure;
  std::vector<std::size_t> targets;  // gold class per node (when labeled)
  std::vector<int> node_ids;
  std::vector<std::string> texts;
  bool labeled = false;

  std::size_t size() const { return steps.size(); }
};

class HtmlLstm {
 public:
  HtmlLstm() = default;

  static HtmlLstm initialize(const ModelConfig& cfg, Vocabularies vocab, std::vector<std::string> classes,
                             std::uint64_t seed) {
    if (classes.size() < 2) throw ConfigError("at least two classes are required");
    if (!vocab.frozen()) vocab.freeze();
    HtmlLstm m;
    m.cfg_ = cfg;
    m.vocab_ = std::move(vocab);
    m.classes_ = std::move(classes);
    Rng rng(seed);
    m.enc_ = add_encoder_params(m.params_, cfg.encoder, m.vocab_, rng);
    const std::size_t h = cfg.d_h;
    const std::size_t dx = 2 * cfg.encoder.d_enc;
    auto make = [&](const char* name, std::size_t r, std::size_t c) {
      Tensor t(r, c);
      init_uniform(t, rng);
      return m.params_.add(name, std::move(t));
    };
    m.up_.W = make("upward.W", 4 * h, dx);
    m.up_.U_L = make("upward.U_L", 5 * h, h);
    m.up_.U_R = make("upward.U_R", 5 * h, h);
    m.up_.b = m.params_.add("upward.b", Tensor(4 * h, 1));
    fill_bias_block(m.params_.value(m.up_.b), 1, h, 1.0);
    m.down_.W = make("downward.W", 4 * h, dx);
    m.down_.U = make("downward.U", 6 * h, h);
    m.down_.b = m.params_.add("downward.b", Tensor(4 * h, 1));
    fill_bias_block(m.params_.value(m.down_.b), 1, h, 1.0);
    m.cls_.W_hidden = make("classifier.W_hidden", cfg.d_cls, 3 * h);
    m.cls_.b_hidden = m.params_.add("classifier.b_hidden", Tensor(cfg.d_cls, 1));
    m.cls_.W_s = make("classifier.W_s", m.classes_.size(), cfg.d_cls);
    m.cls_.b_s = m.params_.add("classifier.b_s", Tensor(m.classes_.size(), 1));
    return m;
  }

  // Rebuilds a model around an existing parameter store (checkpoint load).
  static HtmlLstm from_parts(const ModelConfig& cfg, Vocabularies vocab, std::vector<std::string> classes,
                             ParamStore params) {
    HtmlLstm m = initialize(cfg, std::move(vocab), std::move(classes), 0);
    if (params.names() != m.params_.names()) throw ClassMismatch("checkpoint parameters do not match the model layout");
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!params.value(i).same_shape(m.params_.value(i))) {
        throw ShapeMismatch("checkpoint tensor " + params.name(i) + " has shape " + shape_string(params.value(i)) +
                            ", expected " + shape_string(m.params_.value(i)));
      }
    }
    m.params_ = std::move(params);
    return m;
  }

  const ModelConfig& config() const { return cfg_; }
  ModelConfig& config() { return cfg_; }
  const Vocabularies& vocab() const { return vocab_; }
  const std::vector<std::string>& classes() const { return classes_; }
  const ParamStore& params() const { return params_; }
  ParamStore& params() { return params_; }

  std::size_t class_index(const std::string& label) const {
    auto it = std::find(classes_.begin(), classes_.end(), label);
    if (it == classes_.end()) throw ClassMismatch("label '" + label + "' is not one of the model classes");
    return static_cast<std::size_t>(it - classes_.begin());
  }

  // Indexes an already clipped tree. Gold labels are mapped when every node has one.
  PreparedTree prepare(const DomTree& tree) const {
    PreparedTree pt;
    BinaryTree bt = binarize(tree);
    pt.structure = BinaryStructure::from(bt);
    pt.labeled = true;
    for (const auto& bn : bt.nodes) {
      const DomNode& n = *bn.payload;
      pt.steps.push_back(index_node(n, vocab_, cfg_.encoder.max_tokens));
      pt.node_ids.push_back(n.node_id);
      pt.texts.push_back(n.text);
      if (n.gold_label) {
        pt.targets.push_back(class_index(*n.gold_label));
      } else {
        pt.labeled = false;
      }
    }
    if (!pt.labeled) pt.targets.clear();
    return pt;
  }

  // Records the whole forward computation; returns class probabilities
  // (N x nodes). `params` must share this model's layout.
  Var build(Tape& tape, const PreparedTree& tree, const ParamStore& params, bool training,
            std::uint64_t dropout_seed) const {
    if (tree.size() == 0) throw ShapeMismatch("cannot run the model on an empty tree");
    EncoderVars ev = encoder_vars(tape, params, enc_, vocab_.tags.size());
    Var X = encode_nodes(tape, ev, tree.steps);
    UpwardVars uv{tape.parameter(params, up_.W), tape.parameter(params, up_.U_L), tape.parameter(params, up_.U_R),
                  tape.parameter(params, up_.b)};
    UpwardStates up = upward_pass(tree.structure, X, uv);
    Var H_up = concat_cols(up.h);
    Var H;
    if (cfg_.variant == Variant::UpwardOnly) {
      Var zeros = tape.constant(Tensor(cfg_.d_h, tree.size()));
      H = combine_features(H_up, zeros, zeros);
    } else {
      DownwardVars dv{tape.parameter(params, down_.W), tape.parameter(params, down_.U),
                      tape.parameter(params, down_.b)};
      DownwardEmissions down = downward_pass(tree.structure, X, dv, cfg_.seed_mode, &up, cfg_.downward_cell);
      H = combine_features(H_up, concat_cols(down.h_left), concat_cols(down.h_right));
    }
    ClassifierVars cv{tape.parameter(params, cls_.W_hidden), tape.parameter(params, cls_.b_hidden),
                      tape.parameter(params, cls_.W_s), tape.parameter(params, cls_.b_s)};
    return classify(H, cv, cfg_.dropout_p, training, dropout_seed);
  }

  Var build(Tape& tape, const PreparedTree& tree, bool training, std::uint64_t dropout_seed) const {
    return build(tape, tree, params_, training, dropout_seed);
  }

  Tensor probabilities(const PreparedTree& tree) const {
    Tape tape;
    return build(tape, tree, false, 0).value();
  }

  // Inference on a raw tree: clipped to clip_limit nodes, one prediction per
  // remaining node in pre-order.
  std::vector<NodePrediction> forward(const DomTree& tree, std::size_t clip_limit = 100) const {
    return predictions_from(probabilities(prepare(clip_postorder(tree, clip_limit))));
  }

  const EncoderParamIds& encoder_ids() const { return enc_; }

 private:
  ModelConfig cfg_;
  Vocabularies vocab_;
  std::vector<std::string> classes_;
  ParamStore params_;
  EncoderParamIds enc_{};
  UpwardParamIds up_{};
  DownwardParamIds down_{};
  ClassifierParamIds cls_{};
};

// ---------------------------------------------------------------------------
// Checkpoints: one JSON document holding format version, model config,
// vocabularies, class list, named tensors, and free-form metadata. Doubles
// are written in shortest round-trip form, so reloads are bit-exact.

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json checkpoint_to_json(const HtmlLstm& model, const nlohmann::json& metadata = nlohmann::json::object()) {
  nlohmann::json params = nlohmann::json::array();
  const ParamStore& ps = model.params();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const Tensor& t = ps.value(i);
    params.push_back({{"name", ps.name(i)}, {"shape", {t.rows(), t.cols()}}, {"data", t.values()}});
  }
  return {{"format", "html-lstm-checkpoint"},
          {"version", kCheckpointVersion},
          {"config", model_config_to_json(model.config())},
          {"vocab", vocab_to_json(model.vocab())},
          {"classes", model.classes()},
          {"params", params},
          {"metadata", metadata}};
}

inline HtmlLstm checkpoint_from_json(const nlohmann::json& j, nlohmann::json* metadata = nullptr) {
  try {
    if (j.at("format").get<std::string>() != "html-lstm-checkpoint") throw CorpusFormatError("not a checkpoint");
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw CorpusFormatError("unsupported checkpoint version " + std::to_string(version));
    }
    ParamStore ps;
    for (const auto& p : j.at("params")) {
      auto shape = p.at("shape").get<std::vector<std::size_t>>();
      if (shape.size() != 2) throw ShapeMismatch("checkpoint tensors must be 2-D");
      ps.add(p.at("name").get<std::string>(), Tensor(shape[0], shape[1], p.at("data").get<std::vector<double>>()));
    }
    if (metadata) *metadata = j.value("metadata", nlohmann::json::object());
    return HtmlLstm::from_parts(model_config_from_json(j.at("config")), vocab_from_json(j.at("vocab")),
                                j.at("classes").get<std::vector<std::string>>(), std::move(ps));
  } catch (const nlohmann::json::exception& e) {
    throw CorpusFormatError(std::string("malformed checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const std::string& path, const HtmlLstm& model,
                            const nlohmann::json& metadata = nlohmann::json::object()) {
  std::ofstream out(path);
  if (!out) throw IoFailure("cannot write checkpoint: " + path);
  out << checkpoint_to_json(model, metadata).dump() << '\n';
  if (!out) throw IoFailure("write failed: " + path);
}

inline HtmlLstm load_checkpoint(const std::string& path, nlohmann::json* metadata = nullptr) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open checkpoint: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw CorpusFormatError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  return checkpoint_from_json(j, metadata);
}

}  // namespace htmllstm
