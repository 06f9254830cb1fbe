#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "groundrank/checkpoint.hpp"
#include "groundrank/corpus.hpp"
#include "groundrank/eval.hpp"
#include "groundrank/experiment.hpp"
#include "groundrank/model.hpp"
#include "groundrank/pseudopairs.hpp"
#include "groundrank/synthetic.hpp"
#include "groundrank/trainer.hpp"

namespace groundrank::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

// Seed salts for the independent random streams of one run.
inline constexpr std::uint64_t kInitSalt = 0x494e4954u;    // parameter init
inline constexpr std::uint64_t kSampleSalt = 0x53414d50u;  // batch sampling

struct CommonOptions {
  std::string config_path;
  std::string out_override;
  std::int64_t seed_override{-1};
};

inline ExperimentConfig load_config(const CommonOptions& opts) {
  if (opts.config_path.empty()) throw ConfigError("--config is required");
  ExperimentConfig cfg = load_experiment_config(opts.config_path);
  if (!opts.out_override.empty()) cfg.out_dir = opts.out_override;
  if (opts.seed_override >= 0)
    cfg.seeds = {static_cast<std::uint64_t>(opts.seed_override)};
  return cfg;
}

inline void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream os(path);
  if (!os) throw DataError(DataError::Kind::parse, "cannot open " + path.string());
  os << content;
}

inline void write_json_file(const fs::path& path, const nlohmann::ordered_json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

// Wall-clock metadata lives only here, never in the result artifacts, so
// repeated runs stay byte-identical.
inline void write_run_meta(const fs::path& out_dir, const std::string& command,
                           double seconds) {
  nlohmann::ordered_json meta;
  meta["command"] = command;
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  meta["finished_unix_ms"] =
      std::chrono::duration_cast<std::chrono::milliseconds>(now).count();
  meta["duration_seconds"] = seconds;
  write_json_file(out_dir / "run_meta.json", meta);
}

// ---- corpus loading -----------------------------------------------------------

struct LoadedCorpora {
  std::map<std::string, CaptionedCorpus> by_name;

  const CaptionedCorpus& get(const std::string& name) const {
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw ConfigError("config references unknown corpus " + name);
    return it->second;
  }
};

inline Split split_for_role(CorpusRole role) {
  switch (role) {
    case CorpusRole::train: return Split::train;
    case CorpusRole::val: return Split::val;
    case CorpusRole::test: return Split::test;
    case CorpusRole::aux: return Split::unspecified;
  }
  return Split::unspecified;
}

inline LoadedCorpora load_corpora(const ExperimentConfig& cfg) {
  LoadedCorpora loaded;
  for (const auto& cc : cfg.corpora) {
    if (!fs::exists(cc.features_path))
      throw ConfigError("corpus " + cc.name + ": missing features file " +
                        cc.features_path);
    if (!fs::exists(cc.captions_path))
      throw ConfigError("corpus " + cc.name + ": missing captions file " +
                        cc.captions_path);
    loaded.by_name.emplace(
        cc.name, load_corpus(cc.features_path, cc.captions_path, cc.name,
                             split_for_role(cc.role)));
  }
  return loaded;
}

inline std::vector<std::string> corpus_languages(const CorpusConfig& cc,
                                                 const CaptionedCorpus& corpus) {
  return cc.languages.empty() ? corpus.languages() : cc.languages;
}

// Attach generator concept labels from a synth manifest to loaded corpora.
inline void attach_manifest_concepts(const std::string& manifest_path,
                                     LoadedCorpora& loaded) {
  std::ifstream is(manifest_path);
  if (!is) throw ConfigError("cannot open manifest " + manifest_path);
  nlohmann::json manifest;
  is >> manifest;
  for (auto& kv : loaded.by_name) {
    if (!manifest.contains(kv.first)) continue;
    const auto& block = manifest.at(kv.first);
    for (auto it = block.at("image_concepts").begin();
         it != block.at("image_concepts").end(); ++it)
      kv.second.image_concepts[it.key()] = it.value().get<int>();
    for (auto it = block.at("caption_concepts").begin();
         it != block.at("caption_concepts").end(); ++it)
      kv.second.caption_concepts[it.key()] = it.value().get<int>();
  }
}

// ---- training helpers ----------------------------------------------------------

struct PreparedTraining {
  Vocabulary vocab;
  ModelDims dims;
  std::vector<TrainingCorpusSpec> train_specs;
  const CaptionedCorpus* val_corpus{nullptr};
  std::vector<std::string> val_languages;
  const CaptionedCorpus* test_corpus{nullptr};
  std::vector<std::string> test_languages;
};

inline PreparedTraining prepare_training(const ExperimentConfig& cfg,
                                         const LoadedCorpora& loaded) {
  PreparedTraining prep;
  const auto train_cfgs = cfg.by_role(CorpusRole::train);
  if (train_cfgs.empty())
    throw ConfigError("config: no corpus with role \"train\"");
  std::vector<const CaptionedCorpus*> vocab_corpora;
  std::size_t feature_dim = 0;
  for (const auto* cc : train_cfgs) {
    const CaptionedCorpus& corpus = loaded.get(cc->name);
    vocab_corpora.push_back(&corpus);
    if (feature_dim == 0) feature_dim = corpus.features.cols;
    else if (feature_dim != corpus.features.cols)
      throw ConfigError("config: training corpora disagree on feature dim");
    TrainingCorpusSpec spec;
    spec.corpus = &corpus;
    spec.languages = corpus_languages(*cc, corpus);
    spec.c2c = cc->c2c;
    spec.c2c_languages = cc->c2c_languages;
    spec.synthetic_in_image_caption = cc->synthetic_in_image_caption;
    spec.synthetic_in_c2c = cc->synthetic_in_c2c;
    prep.train_specs.push_back(spec);
  }
  prep.vocab = build_vocabulary(vocab_corpora, cfg.min_count);
  prep.dims.vocab = prep.vocab.size();
  prep.dims.embed = cfg.model.embed_dim;
  prep.dims.hidden = cfg.model.hidden_dim;
  prep.dims.feature = feature_dim;

  const auto val_cfgs = cfg.by_role(CorpusRole::val);
  if (!val_cfgs.empty()) {
    prep.val_corpus = &loaded.get(val_cfgs.front()->name);
    prep.val_languages = corpus_languages(*val_cfgs.front(), *prep.val_corpus);
  }
  const auto test_cfgs = cfg.by_role(CorpusRole::test);
  if (!test_cfgs.empty()) {
    prep.test_corpus = &loaded.get(test_cfgs.front()->name);
    prep.test_languages =
        corpus_languages(*test_cfgs.front(), *prep.test_corpus);
  }
  return prep;
}

struct SeedRunResult {
  ModelParams<float> model;
  Vocabulary vocab;
  TrainLog log;
  RetrievalReport test_report;
  bool has_test{false};
};

inline SeedRunResult run_one_training(const ExperimentConfig& cfg,
                                      const PreparedTraining& prep,
                                      std::uint64_t seed) {
  if (!prep.val_corpus)
    throw ConfigError("config: training requires a corpus with role \"val\"");
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  RandomStream init_rng(RandomStream::mix(seed, kInitSalt));
  ModelParams<float> model = init_model<float>(prep.dims, init_rng);
  TrainingSetup setup = build_training_setup(prep.train_specs, tc.c2c_enabled);
  RandomStream sample_rng(RandomStream::mix(seed, kSampleSalt));
  BatchSampler sampler(setup.datasets, prep.vocab, sample_rng);
  const Vocabulary& vocab = prep.vocab;
  const CaptionedCorpus* val = prep.val_corpus;
  const auto& val_langs = prep.val_languages;
  Evaluator<float> evaluator = [&vocab, val,
                                &val_langs](const ModelParams<float>& m) {
    return sum_of_recall_score(m, vocab, *val, val_langs);
  };
  auto trained = train(std::move(model), sampler, tc, evaluator);
  SeedRunResult result;
  result.model = std::move(trained.best_params);
  result.vocab = prep.vocab;
  result.log = std::move(trained.log);
  if (prep.test_corpus) {
    result.has_test = true;
    result.test_report = compute_retrieval_report(
        result.model, result.vocab, *prep.test_corpus, prep.test_languages);
  }
  return result;
}

inline void write_train_artifacts(const fs::path& dir, const SeedRunResult& run) {
  fs::create_directories(dir);
  save_checkpoint(( dir / "best.ckpt").string(), run.model, run.vocab);
  std::ofstream log_os(dir / "trainlog.jsonl");
  run.log.write_jsonl(log_os);
  if (run.has_test) {
    write_json_file(dir / "report_test.json", report_to_json(run.test_report));
    write_text_file(dir / "report_test.txt", report_to_text(run.test_report));
  }
}

// ---- subcommands ----------------------------------------------------------------

inline int cmd_synth(const CommonOptions& opts) {
  const auto started = std::chrono::steady_clock::now();
  ExperimentConfig cfg = load_config(opts);
  if (!cfg.has_synth)
    throw ConfigError("synth: config has no \"synth\" block");
  if (opts.seed_override >= 0)
    cfg.synth.seed = static_cast<std::uint64_t>(opts.seed_override);
  SyntheticBundle bundle = generate_synthetic(cfg.synth);
  const fs::path out(cfg.out_dir);
  fs::create_directories(out);
  auto emit = [&](const CaptionedCorpus& corpus, const std::string& stem) {
    save_corpus(corpus, (out / (stem + ".imgf")).string(),
                (out / (stem + ".jsonl")).string());
  };
  emit(bundle.aligned_train, "aligned_train");
  emit(bundle.aligned_val, "aligned_val");
  emit(bundle.aligned_test, "aligned_test");
  emit(bundle.disjoint_train, "disjoint_train");
  write_json_file(out / "manifest.json", bundle.manifest);
  const double secs = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - started)
                          .count();
  write_run_meta(out, "synth", secs);
  std::cerr << "[synth] wrote 4 corpora + manifest to " << out << "\n";
  return kExitOk;
}

inline int cmd_train(const CommonOptions& opts) {
  const auto started = std::chrono::steady_clock::now();
  ExperimentConfig cfg = load_config(opts);
  LoadedCorpora loaded = load_corpora(cfg);
  PreparedTraining prep = prepare_training(cfg, loaded);
  const fs::path out(cfg.out_dir);
  fs::create_directories(out);

  std::vector<RetrievalReport> seed_reports;
  bool any_diverged = false;
  for (std::uint64_t seed : cfg.seeds) {
    std::cerr << "[train] seed " << seed << "\n";
    SeedRunResult run = run_one_training(cfg, prep, seed);
    any_diverged = any_diverged || run.log.diverged;
    const fs::path seed_dir = out / ("seed_" + std::to_string(seed));
    write_train_artifacts(seed_dir, run);
    if (run.has_test) seed_reports.push_back(run.test_report);

    if (cfg.pseudo_cycle.present) {
      const auto& pc = cfg.pseudo_cycle;
      const CaptionedCorpus& source = loaded.get(pc.source_corpus);
      const CaptionedCorpus& target = loaded.get(pc.target_corpus);
      // every training corpus except the target keeps its role in the cycle
      std::vector<TrainingCorpusSpec> others;
      for (const auto& spec : prep.train_specs)
        if (spec.corpus != &target) others.push_back(spec);
      PseudoCycleConfig cycle_cfg;
      cycle_cfg.source_language = pc.source_language;
      cycle_cfg.target_language = pc.target_language;
      cycle_cfg.filter = pc.filter;
      cycle_cfg.mode = pc.mode;
      cycle_cfg.pairs_in_image_caption = pc.pairs_in_image_caption;
      cycle_cfg.pairs_in_c2c = pc.pairs_in_c2c;
      TrainConfig tc = cfg.train;
      tc.seed = seed;
      if (!prep.test_corpus)
        throw ConfigError("pseudopair cycle requires a test corpus");
      auto cycle = run_pseudopair_cycle(
          run.model, run.vocab, source, target, others, *prep.val_corpus,
          prep.val_languages, *prep.test_corpus, prep.test_languages,
          cycle_cfg, tc);
      any_diverged = any_diverged || cycle.log.diverged;
      write_pseudopairs_jsonl((seed_dir / "cycle_pairs.jsonl").string(),
                              cycle.pairs);
      write_json_file(seed_dir / "cycle_diagnostics.json",
                      diagnostics_to_json(cycle.diagnostics));
      write_json_file(seed_dir / "cycle_report_before.json",
                      report_to_json(cycle.report_before));
      write_json_file(seed_dir / "cycle_report_after.json",
                      report_to_json(cycle.report_after));
      save_checkpoint((seed_dir / "cycle_best.ckpt").string(),
                      cycle.final_params, cycle.final_vocab);
      std::ofstream cycle_log(seed_dir / "cycle_trainlog.jsonl");
      cycle.log.write_jsonl(cycle_log);
    }
  }
  if (seed_reports.size() > 1) {
    RetrievalReport mean = mean_report(seed_reports);
    write_json_file(out / "report_test_mean.json", report_to_json(mean));
    write_text_file(out / "report_test_mean.txt", report_to_text(mean));
  }
  const double secs = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - started)
                          .count();
  write_run_meta(out, "train", secs);
  if (any_diverged) {
    std::cerr << "[train] training diverged; kept last good checkpoint\n";
    return kExitNumeric;
  }
  return kExitOk;
}

inline int cmd_eval(const CommonOptions& opts, const std::string& checkpoint) {
  const auto started = std::chrono::steady_clock::now();
  ExperimentConfig cfg = load_config(opts);
  if (checkpoint.empty()) throw ConfigError("eval: --checkpoint is required");
  if (!fs::exists(checkpoint))
    throw ConfigError("eval: missing checkpoint " + checkpoint);
  auto ckpt = load_checkpoint<float>(checkpoint);
  LoadedCorpora loaded = load_corpora(cfg);
  const auto test_cfgs = cfg.by_role(CorpusRole::test);
  if (test_cfgs.empty())
    throw ConfigError("eval: config has no corpus with role \"test\"");
  const CaptionedCorpus& test = loaded.get(test_cfgs.front()->name);
  const auto langs = corpus_languages(*test_cfgs.front(), test);
  RetrievalReport report =
      compute_retrieval_report(ckpt.model, ckpt.vocab, test, langs);
  const fs::path out(cfg.out_dir);
  fs::create_directories(out);
  write_json_file(out / "report_eval.json", report_to_json(report));
  write_text_file(out / "report_eval.txt", report_to_text(report));
  write_text_file(out / "report_eval.csv", report_to_csv(report));
  std::cout << report_to_text(report);
  const double secs = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - started)
                          .count();
  write_run_meta(out, "eval", secs);
  return kExitOk;
}

inline int cmd_pseudopairs(const CommonOptions& opts,
                           const std::string& checkpoint) {
  const auto started = std::chrono::steady_clock::now();
  ExperimentConfig cfg = load_config(opts);
  if (!cfg.pseudopairs.present)
    throw ConfigError("pseudopairs: config has no \"pseudopairs\" block");
  if (checkpoint.empty())
    throw ConfigError("pseudopairs: --checkpoint is required");
  if (!fs::exists(checkpoint))
    throw ConfigError("pseudopairs: missing checkpoint " + checkpoint);
  auto ckpt = load_checkpoint<float>(checkpoint);
  LoadedCorpora loaded = load_corpora(cfg);
  const auto& pp = cfg.pseudopairs;
  if (!pp.manifest.empty()) attach_manifest_concepts(pp.manifest, loaded);
  const CaptionedCorpus& source = loaded.get(pp.source_corpus);
  const CaptionedCorpus& target = loaded.get(pp.target_corpus);
  auto pairs =
      generate_pseudopairs(ckpt.model, ckpt.vocab, source, pp.source_language,
                           target, pp.target_language);
  auto kept = apply_filter(pairs, pp.filter);
  std::vector<PseudoPair> reference;
  const std::vector<PseudoPair>* reference_ptr = nullptr;
  if (!pp.reference_pairs.empty()) {
    reference = read_pseudopairs_jsonl(pp.reference_pairs);
    reference_ptr = &reference;
  }
  auto diag = pseudopair_diagnostics(
      kept, source.captions_of_language(pp.source_language).size(),
      reference_ptr);
  nlohmann::ordered_json diag_json = diagnostics_to_json(diag);
  diag_json["filter"] = filter_policy_name(pp.filter);
  diag_json["unfiltered_pair_count"] = pairs.size();
  if (!source.caption_concepts.empty() && !target.caption_concepts.empty())
    diag_json["concept_agreement"] = pseudopair_concept_agreement(
        kept, source.caption_concepts, target.caption_concepts);
  const fs::path out(cfg.out_dir);
  fs::create_directories(out);
  write_pseudopairs_jsonl((out / "pairs.jsonl").string(), kept);
  write_json_file(out / "diagnostics.json", diag_json);
  const double secs = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - started)
                          .count();
  write_run_meta(out, "pseudopairs", secs);
  std::cerr << "[pseudopairs] " << kept.size() << " pairs ("
            << pairs.size() << " before filtering)\n";
  return kExitOk;
}

inline int cmd_ingest_translations(const CommonOptions& opts) {
  const auto started = std::chrono::steady_clock::now();
  ExperimentConfig cfg = load_config(opts);
  if (!cfg.translations.present)
    throw ConfigError("ingest-translations: config has no \"translations\" block");
  LoadedCorpora loaded = load_corpora(cfg);
  const auto& tr = cfg.translations;
  const CaptionedCorpus& corpus = loaded.get(tr.corpus);
  CaptionedCorpus augmented = ingest_translations(corpus, tr.file, tr.language);
  const fs::path out_path(tr.output_captions);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  write_captions_jsonl(tr.output_captions, augmented.captions);
  const fs::path out(cfg.out_dir);
  fs::create_directories(out);
  const double secs = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - started)
                          .count();
  write_run_meta(out, "ingest-translations", secs);
  std::cerr << "[ingest-translations] " << augmented.captions.size() -
                                               corpus.captions.size()
            << " records added\n";
  return kExitOk;
}

inline int cmd_compare_losses(const CommonOptions& opts) {
  const auto started = std::chrono::steady_clock::now();
  ExperimentConfig cfg = load_config(opts);
  LoadedCorpora loaded = load_corpora(cfg);
  PreparedTraining prep = prepare_training(cfg, loaded);
  if (!prep.test_corpus)
    throw ConfigError("compare-losses: config needs a test corpus");
  const fs::path out(cfg.out_dir);
  fs::create_directories(out);
  std::ostringstream csv;
  csv << "variant,seed,sum_of_recall\n";
  for (LossVariant variant :
       {LossVariant::max_violation, LossVariant::sum_violation}) {
    const char* vname =
        variant == LossVariant::max_violation ? "max-violation" : "sum-violation";
    double acc = 0;
    for (std::uint64_t seed : cfg.seeds) {
      ExperimentConfig run_cfg = cfg;
      run_cfg.train.loss.variant = variant;
      std::cerr << "[compare-losses] " << vname << " seed " << seed << "\n";
      SeedRunResult run = run_one_training(run_cfg, prep, seed);
      const double sum = run.test_report.sum_of_sums();
      acc += sum;
      csv << vname << ',' << seed << ',' << sum << "\n";
    }
    csv << vname << ",mean," << acc / double(cfg.seeds.size()) << "\n";
  }
  write_text_file(out / "compare_losses.csv", csv.str());
  std::cout << csv.str();
  const double secs = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - started)
                          .count();
  write_run_meta(out, "compare-losses", secs);
  return kExitOk;
}

inline int cmd_report(const std::vector<std::string>& inputs,
                      const std::string& out_path) {
  if (inputs.empty()) throw ConfigError("report: no input reports given");
  std::vector<RetrievalReport> reports;
  std::ostringstream rendered;
  for (const auto& path : inputs) {
    std::ifstream is(path);
    if (!is) throw ConfigError("report: cannot open " + path);
    nlohmann::json j;
    is >> j;
    reports.push_back(report_from_json(j));
    rendered << path << "\n" << report_to_text(reports.back()) << "\n";
  }
  if (reports.size() > 1) {
    rendered << "mean over " << reports.size() << " reports\n"
             << report_to_text(mean_report(reports)) << "\n";
  }
  std::cout << rendered.str();
  if (!out_path.empty()) write_text_file(out_path, rendered.str());
  return kExitOk;
}

// ---- entry point -----------------------------------------------------------------

inline int run(std::vector<std::string> args) {
  CLI::App app{"bilingual grounded sentence-ranking experiments"};
  app.require_subcommand(1);

  CommonOptions synth_opts, train_opts, eval_opts, pseudo_opts, ingest_opts,
      compare_opts;
  std::string eval_checkpoint, pseudo_checkpoint, report_out;
  std::vector<std::string> report_inputs;

  auto add_common = [](CLI::App* cmd, CommonOptions& opts) {
    cmd->add_option("--config", opts.config_path, "experiment config (JSON)");
    cmd->add_option("--out", opts.out_override, "output directory override");
    cmd->add_option("--seed", opts.seed_override,
                    "seed override (single-seed run)");
  };

  auto* synth = app.add_subcommand("synth", "generate synthetic corpora");
  add_common(synth, synth_opts);
  auto* train = app.add_subcommand("train", "train a model");
  add_common(train, train_opts);
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval, eval_opts);
  eval->add_option("--checkpoint", eval_checkpoint, "model checkpoint");
  auto* pseudo = app.add_subcommand("pseudopairs", "generate pseudopairs");
  add_common(pseudo, pseudo_opts);
  pseudo->add_option("--checkpoint", pseudo_checkpoint, "model checkpoint");
  auto* ingest = app.add_subcommand("ingest-translations",
                                    "add translated captions to a corpus");
  add_common(ingest, ingest_opts);
  auto* compare = app.add_subcommand(
      "compare-losses", "train max- vs sum-violation across seeds");
  add_common(compare, compare_opts);
  auto* report = app.add_subcommand("report", "render report JSON as text");
  report->add_option("inputs", report_inputs, "report JSON files");
  report->add_option("--out", report_out, "write rendered text here");

  std::vector<const char*> argv;
  argv.push_back("groundrank");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()),
              const_cast<char**>(argv.data()));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_opts);
    if (train->parsed()) return cmd_train(train_opts);
    if (eval->parsed()) return cmd_eval(eval_opts, eval_checkpoint);
    if (pseudo->parsed()) return cmd_pseudopairs(pseudo_opts, pseudo_checkpoint);
    if (ingest->parsed()) return cmd_ingest_translations(ingest_opts);
    if (compare->parsed()) return cmd_compare_losses(compare_opts);
    if (report->parsed()) return cmd_report(report_inputs, report_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitConfig;
}

}  // namespace groundrank::cli
