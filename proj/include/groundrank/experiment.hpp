#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "groundrank/corpus.hpp"
#include "groundrank/loss.hpp"
#include "groundrank/pseudopairs.hpp"
#include "groundrank/synthetic.hpp"
#include "groundrank/trainer.hpp"

namespace groundrank {

// Bad experiment configuration; maps to CLI exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

// Unknown fields are rejected so typos in experiment grids fail loudly.
inline void check_keys(const nlohmann::json& j,
                       const std::set<std::string>& allowed,
                       const std::string& context) {
  if (!j.is_object())
    throw ConfigError("config: " + context + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError("config: unknown field \"" + it.key() + "\" in " +
                        context);
}

template <typename T>
T get_or(const nlohmann::json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: bad value for " + key + ": " + e.what());
  }
}

template <typename T>
T get_required(const nlohmann::json& j, const std::string& key,
               const std::string& context) {
  if (!j.contains(key))
    throw ConfigError("config: missing field \"" + key + "\" in " + context);
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: bad value for " + key + ": " + e.what());
  }
}

}  // namespace detail

enum class CorpusRole { train, val, test, aux };

struct CorpusConfig {
  std::string name;
  std::string features_path;
  std::string captions_path;
  CorpusRole role{CorpusRole::train};
  std::vector<std::string> languages;  // empty -> all languages found
  bool c2c{false};
  std::vector<std::string> c2c_languages;
  bool synthetic_in_image_caption{true};
  bool synthetic_in_c2c{true};
};

struct ModelConfig {
  std::size_t embed_dim{300};
  std::size_t hidden_dim{1024};
};

struct PseudopairsConfig {
  bool present{false};
  std::string source_corpus;
  std::string source_language;
  std::string target_corpus;
  std::string target_language;
  FilterPolicy filter{FilterPolicy::none};
  std::string reference_pairs;  // optional pair file for overlap diagnostics
  std::string manifest;         // optional synthetic manifest for concept checks
};

struct PseudoCycleFileConfig {
  bool present{false};
  std::string source_corpus;
  std::string source_language;
  std::string target_corpus;
  std::string target_language;
  FilterPolicy filter{FilterPolicy::none};
  PseudoMode mode{PseudoMode::fine_tune};
  bool pairs_in_image_caption{true};
  bool pairs_in_c2c{true};
};

struct TranslationsConfig {
  bool present{false};
  std::string corpus;
  std::string file;
  std::string language;
  std::string output_captions;
};

struct ExperimentConfig {
  std::string name{"experiment"};
  std::string out_dir{"out"};
  std::vector<std::uint64_t> seeds{1};
  ModelConfig model;
  TrainConfig train;
  std::size_t min_count{1};
  bool has_synth{false};
  SyntheticSpec synth;
  std::vector<CorpusConfig> corpora;
  PseudopairsConfig pseudopairs;
  PseudoCycleFileConfig pseudo_cycle;
  TranslationsConfig translations;

  const CorpusConfig* find_corpus(const std::string& name) const {
    for (const auto& c : corpora)
      if (c.name == name) return &c;
    return nullptr;
  }

  std::vector<const CorpusConfig*> by_role(CorpusRole role) const {
    std::vector<const CorpusConfig*> out;
    for (const auto& c : corpora)
      if (c.role == role) out.push_back(&c);
    return out;
  }
};

inline CorpusRole corpus_role_from_name(const std::string& s) {
  if (s == "train") return CorpusRole::train;
  if (s == "val") return CorpusRole::val;
  if (s == "test") return CorpusRole::test;
  if (s == "aux") return CorpusRole::aux;
  throw ConfigError("config: unknown corpus role " + s);
}

inline LossVariant loss_variant_from_name(const std::string& s) {
  if (s == "max-violation") return LossVariant::max_violation;
  if (s == "sum-violation") return LossVariant::sum_violation;
  throw ConfigError("config: unknown loss variant " + s);
}

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
  detail::check_keys(j, {"name", "out_dir", "seeds", "model", "train", "synth",
                         "corpora", "min_count", "pseudopairs",
                         "pseudopair_cycle", "translations"},
                     "top level");
  ExperimentConfig cfg;
  cfg.name = detail::get_or<std::string>(j, "name", cfg.name);
  cfg.out_dir = detail::get_or<std::string>(j, "out_dir", cfg.out_dir);
  if (j.contains("seeds")) {
    cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (cfg.seeds.empty()) throw ConfigError("config: seeds must be nonempty");
  }
  cfg.min_count = detail::get_or<std::size_t>(j, "min_count", 1);

  if (j.contains("model")) {
    const auto& m = j.at("model");
    detail::check_keys(m, {"embed_dim", "hidden_dim"}, "model");
    cfg.model.embed_dim =
        detail::get_or<std::size_t>(m, "embed_dim", cfg.model.embed_dim);
    cfg.model.hidden_dim =
        detail::get_or<std::size_t>(m, "hidden_dim", cfg.model.hidden_dim);
  }

  if (j.contains("train")) {
    const auto& t = j.at("train");
    detail::check_keys(t,
                       {"batch_size", "learning_rate", "grad_clip_norm",
                        "eval_interval_updates", "patience_inspections",
                        "max_updates", "loss_variant", "loss_margin",
                        "loss_aggregation", "c2c"},
                       "train");
    cfg.train.batch_size =
        detail::get_or<std::size_t>(t, "batch_size", cfg.train.batch_size);
    cfg.train.learning_rate =
        detail::get_or<double>(t, "learning_rate", cfg.train.learning_rate);
    cfg.train.grad_clip_norm =
        detail::get_or<double>(t, "grad_clip_norm", cfg.train.grad_clip_norm);
    cfg.train.eval_interval_updates = detail::get_or<std::size_t>(
        t, "eval_interval_updates", cfg.train.eval_interval_updates);
    cfg.train.patience_inspections = detail::get_or<std::size_t>(
        t, "patience_inspections", cfg.train.patience_inspections);
    cfg.train.max_updates =
        detail::get_or<std::size_t>(t, "max_updates", cfg.train.max_updates);
    if (t.contains("loss_variant"))
      cfg.train.loss.variant =
          loss_variant_from_name(t.at("loss_variant").get<std::string>());
    cfg.train.loss.margin =
        detail::get_or<double>(t, "loss_margin", cfg.train.loss.margin);
    if (t.contains("loss_aggregation")) {
      const auto agg = t.at("loss_aggregation").get<std::string>();
      if (agg == "sum") cfg.train.loss.aggregation = BatchAggregation::sum;
      else if (agg == "mean") cfg.train.loss.aggregation = BatchAggregation::mean;
      else throw ConfigError("config: unknown loss_aggregation " + agg);
    }
    cfg.train.c2c_enabled = detail::get_or<bool>(t, "c2c", cfg.train.c2c_enabled);
  }

  if (j.contains("synth")) {
    cfg.has_synth = true;
    const auto& s = j.at("synth");
    detail::check_keys(s,
                       {"concepts", "images", "captions_per_image_per_language",
                        "noise_sigma", "seed", "feature_dim", "distractor_pool",
                        "distractors_per_caption", "lang1", "lang2",
                        "val_images", "test_images", "disjoint_images"},
                       "synth");
    cfg.synth.concepts = detail::get_or<std::size_t>(s, "concepts", cfg.synth.concepts);
    cfg.synth.images = detail::get_or<std::size_t>(s, "images", cfg.synth.images);
    cfg.synth.captions_per_image_per_language = detail::get_or<std::size_t>(
        s, "captions_per_image_per_language",
        cfg.synth.captions_per_image_per_language);
    cfg.synth.noise_sigma =
        detail::get_or<double>(s, "noise_sigma", cfg.synth.noise_sigma);
    cfg.synth.seed = detail::get_or<std::uint64_t>(s, "seed", cfg.synth.seed);
    cfg.synth.feature_dim =
        detail::get_or<std::size_t>(s, "feature_dim", cfg.synth.feature_dim);
    cfg.synth.distractor_pool =
        detail::get_or<std::size_t>(s, "distractor_pool", cfg.synth.distractor_pool);
    cfg.synth.distractors_per_caption = detail::get_or<std::size_t>(
        s, "distractors_per_caption", cfg.synth.distractors_per_caption);
    cfg.synth.lang1 = detail::get_or<std::string>(s, "lang1", cfg.synth.lang1);
    cfg.synth.lang2 = detail::get_or<std::string>(s, "lang2", cfg.synth.lang2);
    cfg.synth.val_images =
        detail::get_or<std::size_t>(s, "val_images", cfg.synth.val_images);
    cfg.synth.test_images =
        detail::get_or<std::size_t>(s, "test_images", cfg.synth.test_images);
    cfg.synth.disjoint_images = detail::get_or<std::size_t>(
        s, "disjoint_images", cfg.synth.disjoint_images);
  }

  if (j.contains("corpora")) {
    if (!j.at("corpora").is_array())
      throw ConfigError("config: corpora must be an array");
    for (const auto& c : j.at("corpora")) {
      detail::check_keys(c,
                         {"name", "features", "captions", "role", "languages",
                          "c2c", "c2c_languages", "synthetic_in_image_caption",
                          "synthetic_in_c2c"},
                         "corpora entry");
      CorpusConfig cc;
      cc.name = detail::get_required<std::string>(c, "name", "corpora entry");
      cc.features_path =
          detail::get_required<std::string>(c, "features", "corpora entry");
      cc.captions_path =
          detail::get_required<std::string>(c, "captions", "corpora entry");
      cc.role = corpus_role_from_name(
          detail::get_or<std::string>(c, "role", "train"));
      cc.languages = detail::get_or<std::vector<std::string>>(c, "languages", {});
      cc.c2c = detail::get_or<bool>(c, "c2c", false);
      cc.c2c_languages =
          detail::get_or<std::vector<std::string>>(c, "c2c_languages", {});
      cc.synthetic_in_image_caption =
          detail::get_or<bool>(c, "synthetic_in_image_caption", true);
      cc.synthetic_in_c2c = detail::get_or<bool>(c, "synthetic_in_c2c", true);
      if (cfg.find_corpus(cc.name))
        throw ConfigError("config: duplicate corpus name " + cc.name);
      cfg.corpora.push_back(std::move(cc));
    }
  }

  if (j.contains("pseudopairs")) {
    const auto& p = j.at("pseudopairs");
    detail::check_keys(p,
                       {"source_corpus", "source_language", "target_corpus",
                        "target_language", "filter", "reference_pairs",
                        "manifest"},
                       "pseudopairs");
    cfg.pseudopairs.present = true;
    cfg.pseudopairs.source_corpus =
        detail::get_required<std::string>(p, "source_corpus", "pseudopairs");
    cfg.pseudopairs.source_language =
        detail::get_required<std::string>(p, "source_language", "pseudopairs");
    cfg.pseudopairs.target_corpus =
        detail::get_required<std::string>(p, "target_corpus", "pseudopairs");
    cfg.pseudopairs.target_language =
        detail::get_required<std::string>(p, "target_language", "pseudopairs");
    if (p.contains("filter"))
      cfg.pseudopairs.filter =
          filter_policy_from_name(p.at("filter").get<std::string>());
    cfg.pseudopairs.reference_pairs =
        detail::get_or<std::string>(p, "reference_pairs", "");
    cfg.pseudopairs.manifest = detail::get_or<std::string>(p, "manifest", "");
  }

  if (j.contains("pseudopair_cycle")) {
    const auto& p = j.at("pseudopair_cycle");
    detail::check_keys(p,
                       {"source_corpus", "source_language", "target_corpus",
                        "target_language", "filter", "mode",
                        "pairs_in_image_caption", "pairs_in_c2c"},
                       "pseudopair_cycle");
    cfg.pseudo_cycle.present = true;
    cfg.pseudo_cycle.source_corpus = detail::get_required<std::string>(
        p, "source_corpus", "pseudopair_cycle");
    cfg.pseudo_cycle.source_language = detail::get_required<std::string>(
        p, "source_language", "pseudopair_cycle");
    cfg.pseudo_cycle.target_corpus = detail::get_required<std::string>(
        p, "target_corpus", "pseudopair_cycle");
    cfg.pseudo_cycle.target_language = detail::get_required<std::string>(
        p, "target_language", "pseudopair_cycle");
    if (p.contains("filter"))
      cfg.pseudo_cycle.filter =
          filter_policy_from_name(p.at("filter").get<std::string>());
    if (p.contains("mode")) {
      const auto mode = p.at("mode").get<std::string>();
      if (mode == "restart") cfg.pseudo_cycle.mode = PseudoMode::restart;
      else if (mode == "fine-tune") cfg.pseudo_cycle.mode = PseudoMode::fine_tune;
      else throw ConfigError("config: unknown pseudopair mode " + mode);
    }
    cfg.pseudo_cycle.pairs_in_image_caption =
        detail::get_or<bool>(p, "pairs_in_image_caption", true);
    cfg.pseudo_cycle.pairs_in_c2c = detail::get_or<bool>(p, "pairs_in_c2c", true);
  }

  if (j.contains("translations")) {
    const auto& t = j.at("translations");
    detail::check_keys(t, {"corpus", "file", "language", "output_captions"},
                       "translations");
    cfg.translations.present = true;
    cfg.translations.corpus =
        detail::get_required<std::string>(t, "corpus", "translations");
    cfg.translations.file =
        detail::get_required<std::string>(t, "file", "translations");
    cfg.translations.language =
        detail::get_required<std::string>(t, "language", "translations");
    cfg.translations.output_captions = detail::get_required<std::string>(
        t, "output_captions", "translations");
  }

  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: parse error in " + path + ": " + e.what());
  }
  return parse_experiment_config(j);
}

}  // namespace groundrank
