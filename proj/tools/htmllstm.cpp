// htmllstm: command-line driver for corpus generation, training, evaluation,
// ablation, extraction and integration.
//
// Exit status: 0 success, 1 runtime error, 2 usage error, 3 gradcheck above
// tolerance.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "htmllstm/htmllstm.hpp"

namespace fs = std::filesystem;
using namespace htmllstm;

namespace {

constexpr int kRuntimeError = 1;
constexpr int kUsageError = 2;
constexpr int kGradcheckFailed = 3;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Flags shared by every subcommand; each one maps onto a config key.
struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::optional<double> threshold;
  std::string mode;
  std::string variant;
  std::string downward_cell;
  std::string seed_mode;
  std::vector<std::string> sets;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "key = value config file")->check(CLI::ExistingFile);
    app->add_option("--seed", seed, "master seed");
    app->add_option("--out", out, "output directory")->capture_default_str();
    app->add_option("--threshold", threshold, "multi-extraction score threshold");
    app->add_option("--mode", mode, "extraction mode: single|multi");
    app->add_option("--variant", variant, "model variant: upward|full|full+aug");
    app->add_option("--downward-cell", downward_cell, "downward cell form: perchild|summed");
    app->add_option("--seed-mode", seed_mode, "downward root state: upward-root|zero");
    app->add_option("--set", sets, "override one config key (key=value); repeatable");
  }

  // File first, then --set, then the dedicated flags.
  RunConfig resolve() const {
    RunConfig c;
    try {
      if (!config.empty()) apply_config_file(c, config);
      for (const auto& kv : sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        set_config_value(c, kv.substr(0, eq), kv.substr(eq + 1));
      }
      if (seed) c.train.seed = *seed;
      if (threshold) c.integrate.threshold = *threshold;
      if (!mode.empty()) c.integrate.mode = parse_extract_mode(mode);
      if (variant == "full+aug") {
        c.train.model.variant = Variant::Full;
        c.train.augment = true;
      } else if (!variant.empty()) {
        c.train.model.variant = parse_variant(variant);
      }
      if (!downward_cell.empty()) c.train.model.downward_cell = parse_downward_cell(downward_cell);
      if (!seed_mode.empty()) c.train.model.seed_mode = parse_seed_mode(seed_mode);
      c.validate();
    } catch (const ConfigError& e) {
      throw UsageError(e.what());
    } catch (const IoFailure& e) {
      throw UsageError(e.what());
    }
    return c;
  }
};

fs::path prepare_out(const std::string& out, const RunConfig& cfg) {
  fs::path dir(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoFailure("cannot create " + dir.string() + ": " + ec.message());
  write_config_snapshot(cfg, (dir / "config.txt").string());
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot write " + path.string());
  out << text;
  if (!out) throw IoFailure("write failed: " + path.string());
}

Corpus read_corpus(const std::string& path, const RunConfig& cfg) {
  Corpus corpus = load_corpus(read_corpus_jsonl(path), cfg.tagger);
  if (!cfg.synonyms.empty()) {
    const SynonymDictionary dict = SynonymDictionary::load(cfg.synonyms);
    for (auto& t : corpus) t.tree = normalize_attribute_names(t.tree, dict, cfg.tagger);
  }
  return corpus;
}

TrainTestSplit split_corpus(const Corpus& corpus, const RunConfig& cfg) {
  const FoldSplit folds = split_folds(corpus, cfg.train.folds, cfg.train.group_by_source, cfg.train.seed);
  return train_test_split(corpus, folds, cfg.train.test_fold);
}

Corpus select_split(const Corpus& corpus, const RunConfig& cfg, const std::string& which) {
  if (which == "all") return corpus;
  TrainTestSplit split = split_corpus(corpus, cfg);
  if (which == "train") return split.train;
  if (which == "test") return split.test;
  throw UsageError("--split must be train, test or all");
}

std::vector<std::string> ids_of(const Corpus& c) {
  std::vector<std::string> ids;
  for (const auto& t : c) ids.push_back(t.id);
  return ids;
}

int cmd_synth(const CommonFlags& flags, std::optional<std::size_t> n, bool structure_only) {
  RunConfig cfg = flags.resolve();
  if (n) cfg.synth_n = *n;
  if (structure_only) cfg.structure_only = true;
  if (cfg.synth_n < 1) throw UsageError("--n must be >= 1");
  const fs::path dir = prepare_out(flags.out, cfg);
  SynthCorpus sc = generate_corpus(cfg.synth_config(), default_families());
  write_corpus_jsonl((dir / "corpus.jsonl").string(), sc.records);
  write_text(dir / "manifest.json", sc.manifest.dump(2) + "\n");
  synth_synonyms(cfg.schema).save((dir / "synonyms.tsv").string());
  std::cerr << "wrote " << sc.records.size() << " tables to " << (dir / "corpus.jsonl").string() << "\n";
  return 0;
}

int cmd_parse(const CommonFlags& flags, const std::string& corpus_path) {
  RunConfig cfg = flags.resolve();
  const fs::path dir = prepare_out(flags.out, cfg);
  Corpus corpus = read_corpus(corpus_path, cfg);
  std::ofstream out(dir / "trees.txt");
  if (!out) throw IoFailure("cannot write " + (dir / "trees.txt").string());
  for (const auto& t : corpus) {
    DomTree clipped = clip_postorder(t.tree, cfg.train.clip_limit);
    out << "# " << t.id << " source=" << t.source << " nodes=" << t.tree.size() << " kept=" << clipped.size() << "\n"
        << dump_tree(clipped) << "\n";
  }
  if (!out) throw IoFailure("write failed: " + (dir / "trees.txt").string());
  std::cerr << "dumped " << corpus.size() << " trees to " << (dir / "trees.txt").string() << "\n";
  return 0;
}

int cmd_train(const CommonFlags& flags, const std::string& corpus_path, bool all) {
  RunConfig cfg = flags.resolve();
  const fs::path dir = prepare_out(flags.out, cfg);
  Corpus corpus = read_corpus(corpus_path, cfg);
  Corpus train_set = corpus;
  nlohmann::json split_json = nlohmann::json::object();
  if (!all) {
    TrainTestSplit split = split_corpus(corpus, cfg);
    train_set = split.train;
    split_json = {{"train", ids_of(split.train)}, {"test", ids_of(split.test)}};
    write_text(dir / "split.json", split_json.dump(2) + "\n");
  }
  if (cfg.train.dump_dir.empty()) cfg.train.dump_dir = dir.string();
  std::ofstream log(dir / "train_log.jsonl");
  if (!log) throw IoFailure("cannot write " + (dir / "train_log.jsonl").string());
  TrainResult r = train(train_set, cfg.train, [&](const EpochLog& e) {
    log << epoch_log_to_json(e).dump() << "\n" << std::flush;
    std::cerr << "epoch " << e.epoch << " lr " << e.lr << " loss " << e.mean_loss << "\n";
  });
  save_checkpoint((dir / "checkpoint.json").string(), r.model,
                  {{"config", config_snapshot(cfg)}, {"train_tables", train_set.size()}});
  const Evaluation ev = evaluate(r.model, train_set, cfg.train.clip_limit);
  std::cout << "train macro F1 " << ev.metrics.macro_f1() << "\n";
  return 0;
}

int cmd_evaluate(const CommonFlags& flags, const std::string& checkpoint, const std::string& corpus_path,
                 const std::string& which) {
  RunConfig cfg = flags.resolve();
  const fs::path dir = prepare_out(flags.out, cfg);
  HtmlLstm model = load_checkpoint(checkpoint);
  Corpus corpus = select_split(read_corpus(corpus_path, cfg), cfg, which);
  const Evaluation ev = evaluate(model, corpus, cfg.train.clip_limit);
  write_metrics_csv((dir / "metrics.csv").string(), ev.metrics);
  std::cout << metrics_csv(ev.metrics);
  return 0;
}

int cmd_ablate(const CommonFlags& flags, const std::string& corpus_path) {
  RunConfig cfg = flags.resolve();
  const fs::path dir = prepare_out(flags.out, cfg);
  Corpus corpus = read_corpus(corpus_path, cfg);
  AblationReport rep = run_ablation(corpus, cfg.train, cfg.ablation_seeds,
                                    [](const std::string& v, std::uint64_t s, double f1) {
                                      std::cerr << v << " seed " << s << " macro F1 " << f1 << "\n";
                                    });
  write_text(dir / "ablation.json", ablation_to_json(rep).dump(2) + "\n");
  write_text(dir / "ablation.txt", ablation_text(rep));
  std::cout << ablation_text(rep);
  return 0;
}

int cmd_extract(const CommonFlags& flags, const std::string& checkpoint, const std::string& corpus_path) {
  RunConfig cfg = flags.resolve();
  const fs::path dir = prepare_out(flags.out, cfg);
  HtmlLstm model = load_checkpoint(checkpoint);
  Corpus corpus = read_corpus(corpus_path, cfg);
  std::ofstream out(dir / "extractions.jsonl");
  if (!out) throw IoFailure("cannot write " + (dir / "extractions.jsonl").string());
  for (const auto& t : corpus) {
    TreePredictions tp = predict_tree(model, t, cfg.train.clip_limit);
    out << extractions_to_json(extract_table(t.id, candidates_from(tp.tree, tp.predictions), model.classes(),
                                             cfg.schema))
               .dump()
        << "\n";
  }
  if (!out) throw IoFailure("write failed: " + (dir / "extractions.jsonl").string());
  std::cerr << "extracted " << corpus.size() << " tables\n";
  return 0;
}

int cmd_integrate(const CommonFlags& flags, const std::string& extractions_path) {
  RunConfig cfg = flags.resolve();
  const fs::path dir = prepare_out(flags.out, cfg);
  std::ifstream in(extractions_path);
  if (!in) throw IoFailure("cannot open " + extractions_path);
  std::vector<TableExtractions> tables;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      tables.push_back(extractions_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw CorpusFormatError("bad extraction record: " + std::string(e.what()));
    }
  }
  const IntegratedTable table = integrate(tables, cfg.schema, cfg.integrate);
  const fs::path path = dir / ("table." + cfg.format);
  write_table(table, cfg.format, path.string());
  std::cerr << "wrote " << table.rows.size() << " rows to " << path.string() << "\n";
  return 0;
}

int cmd_gradcheck(const CommonFlags& flags) {
  RunConfig cfg = flags.resolve();
  ModelGradCheckOptions opt;
  opt.model = cfg.train.model;
  opt.trees = cfg.gradcheck_trees;
  opt.max_nodes = cfg.gradcheck_max_nodes;
  opt.eps = cfg.gradcheck_eps;
  opt.samples_per_tensor = cfg.gradcheck_samples;
  const ModelGradCheck r = run_model_gradcheck(cfg.train.seed, opt);
  for (const auto& [group, err] : r.report.per_group) std::cout << group << " " << err << "\n";
  std::cout << "max rel err " << r.report.max_relative_error << " over " << r.report.coordinates
            << " coordinates\n";
  if (!(r.report.max_relative_error < cfg.gradcheck_tolerance)) {
    std::cerr << "gradcheck failed: " << r.report.max_relative_error << " >= " << cfg.gradcheck_tolerance << "\n";
    return kGradcheckFailed;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HTML table information extraction with bidirectional tree LSTMs"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string corpus_path, checkpoint, extractions, split = "test";
  std::optional<std::size_t> n;
  bool structure_only = false, all = false;

  auto* synth = app.add_subcommand("synth", "generate a synthetic labeled corpus");
  flags.attach(synth);
  synth->add_option("--n", n, "number of tables");
  synth->add_flag("--structure-only", structure_only, "same value generator for every class");

  auto* parse = app.add_subcommand("parse", "dump the (clipped) tree of every corpus table");
  flags.attach(parse);
  parse->add_option("--corpus", corpus_path, "corpus JSON-Lines")->required()->check(CLI::ExistingFile);

  auto* train_cmd = app.add_subcommand("train", "train on the training folds and write a checkpoint");
  flags.attach(train_cmd);
  train_cmd->add_option("--corpus", corpus_path, "corpus JSON-Lines")->required()->check(CLI::ExistingFile);
  train_cmd->add_flag("--all", all, "train on every table instead of the training folds");

  auto* eval = app.add_subcommand("evaluate", "per-class metrics of a checkpoint");
  flags.attach(eval);
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--corpus", corpus_path, "corpus JSON-Lines")->required()->check(CLI::ExistingFile);
  eval->add_option("--split", split, "test|train|all")->capture_default_str();

  auto* ablate = app.add_subcommand("ablate", "upward-only vs full vs full+aug over several seeds");
  flags.attach(ablate);
  ablate->add_option("--corpus", corpus_path, "corpus JSON-Lines")->required()->check(CLI::ExistingFile);

  auto* extract = app.add_subcommand("extract", "score attribute candidates of every table");
  flags.attach(extract);
  extract->add_option("--checkpoint", checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  extract->add_option("--corpus", corpus_path, "corpus JSON-Lines")->required()->check(CLI::ExistingFile);

  auto* integ = app.add_subcommand("integrate", "merge extractions into one table");
  flags.attach(integ);
  integ->add_option("--extractions", extractions, "extractions JSON-Lines")->required()->check(CLI::ExistingFile);

  auto* gradcheck = app.add_subcommand("gradcheck", "compare tape gradients with finite differences");
  flags.attach(gradcheck);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kUsageError;
  }

  try {
    if (synth->parsed()) return cmd_synth(flags, n, structure_only);
    if (parse->parsed()) return cmd_parse(flags, corpus_path);
    if (train_cmd->parsed()) return cmd_train(flags, corpus_path, all);
    if (eval->parsed()) return cmd_evaluate(flags, checkpoint, corpus_path, split);
    if (ablate->parsed()) return cmd_ablate(flags, corpus_path);
    if (extract->parsed()) return cmd_extract(flags, checkpoint, corpus_path);
    if (integ->parsed()) return cmd_integrate(flags, extractions);
    if (gradcheck->parsed()) return cmd_gradcheck(flags);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kUsageError;
}
