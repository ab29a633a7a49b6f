#include "htmllstm/config.hpp"
#include "htmllstm/gradcheck.hpp"

#include <gtest/gtest.h>

#include <sstream>

namespace htmllstm {
namespace {

RunConfig from_text(const std::string& text) {
  RunConfig c;
  std::istringstream in(text);
  apply_config_text(c, in);
  return c;
}

TEST(Config, DefaultsMatchTrainingSetup) {
  RunConfig c;
  EXPECT_EQ(c.train.optim.alpha, 1e-2);
  EXPECT_EQ(c.train.optim.minibatch, 128);
  EXPECT_EQ(c.train.optim.halve_every, 15);
  EXPECT_EQ(c.train.optim.epochs, 50);
  EXPECT_EQ(c.train.optim.dropout_p, 0.5);
  EXPECT_EQ(c.train.loss.gamma, 2.0);
  EXPECT_EQ(c.train.clip_limit, 100u);
  EXPECT_EQ(c.train.model.encoder.d_enc, 64u);
  EXPECT_EQ(c.train.model.d_h, 64u);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, ParsesKeysCommentsAndLists) {
  RunConfig c = from_text(
      "# run\n"
      "epochs = 7   # short\n"
      "\n"
      "augment = true\n"
      "schema = a, b ,c\n"
      "variant = upward\n"
      "downward_cell = summed\n"
      "seed_mode = zero\n"
      "ablation_seeds = 4,5\n"
      "delimiter = \" | \"\n"
      "multi_attributes = b\n");
  EXPECT_EQ(c.train.optim.epochs, 7);
  EXPECT_TRUE(c.train.augment);
  EXPECT_EQ(c.schema, (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(c.train.model.variant, Variant::UpwardOnly);
  EXPECT_EQ(c.train.model.downward_cell, DownwardCell::Summed);
  EXPECT_EQ(c.train.model.seed_mode, SeedMode::Zero);
  EXPECT_EQ(c.ablation_seeds, (std::vector<std::uint64_t>{4, 5}));
  EXPECT_EQ(c.integrate.delimiter, " | ");
  EXPECT_EQ(c.integrate.per_attribute.at("b"), ExtractMode::Multi);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(from_text("epoch = 3\n"), ConfigError);
  EXPECT_THROW(from_text("epochs = three\n"), ConfigError);
  EXPECT_THROW(from_text("epochs = 3x\n"), ConfigError);
  EXPECT_THROW(from_text("augment = yes\n"), ConfigError);
  EXPECT_THROW(from_text("mode = both\n"), ConfigError);
  EXPECT_THROW(from_text("just a line\n"), ConfigError);
  try {
    from_text("seed = 1\nbogus = 2\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos);
  }
  RunConfig c = from_text("threshold = 1.5\n");
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, SnapshotReproducesConfig) {
  RunConfig c = from_text("epochs = 9\nalpha = 0.003\nstructure_only = true\ndelimiter = \" ; \"\nseed = 42\n");
  const std::string snap = config_snapshot(c);
  RunConfig back = from_text(snap);
  EXPECT_EQ(config_snapshot(back), snap);
  for (const auto& key : config_keys()) EXPECT_EQ(get_config_value(back, key), get_config_value(c, key)) << key;
  EXPECT_EQ(back.train.optim.alpha, 0.003);
  EXPECT_EQ(back.integrate.delimiter, " ; ");
  EXPECT_EQ(back.synth_config().seed, 42u);
}

TEST(GradCheckHelper, RandomTreesHaveRequestedSize) {
  Rng rng(3);
  for (std::size_t n = 1; n <= 12; ++n) {
    DomTree t = random_labeled_tree(n, rng, {"a", kOtherLabel});
    EXPECT_EQ(t.size(), n);
    std::size_t labeled = 0;
    visit_preorder(t.root, [&](const DomNode& node, int) { labeled += node.gold_label.has_value(); });
    EXPECT_EQ(labeled, n);
  }
}

TEST(GradCheckHelper, SmallModelPasses) {
  ModelGradCheckOptions o;
  o.model.encoder.d_w = 6;
  o.model.encoder.d_enc = 4;
  o.model.d_h = 4;
  o.model.d_cls = 5;
  o.trees = 2;
  o.max_nodes = 6;
  auto r = run_model_gradcheck(11, o);
  EXPECT_LT(r.report.max_relative_error, 1e-4);
  EXPECT_EQ(r.report.per_group.size(), 5u);
  EXPECT_GT(r.nodes, 1u);
}

}  // namespace
}  // namespace htmllstm
