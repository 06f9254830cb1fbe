#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "groundrank/corpus.hpp"
#include "groundrank/eval.hpp"
#include "groundrank/loss.hpp"
#include "groundrank/model.hpp"
#include "groundrank/optimizer.hpp"
#include "groundrank/pseudopairs.hpp"
#include "groundrank/rng.hpp"
#include "groundrank/sampler.hpp"

namespace groundrank {

struct TrainConfig {
  std::size_t batch_size{128};
  double learning_rate{2e-4};
  double grad_clip_norm{2.0};
  std::size_t eval_interval_updates{500};
  std::size_t patience_inspections{10};
  std::uint64_t seed{1};
  LossConfig loss;
  bool c2c_enabled{true};
  std::size_t max_updates{50000};
  // Fine-tuning runs an inspection before the first update so the warm start
  // participates in best-checkpoint tracking.
  bool inspect_at_start{false};

  void validate() const {
    if (batch_size < 2)
      throw std::invalid_argument("train config: batch_size must be >= 2");
    if (learning_rate <= 0 || grad_clip_norm <= 0 ||
        eval_interval_updates == 0 || max_updates == 0)
      throw std::invalid_argument("train config: all values must be positive");
    if (patience_inspections < 1)
      throw std::invalid_argument("train config: patience must be >= 1");
    loss.validate();
  }
};

struct InspectionRecord {
  std::size_t update{0};
  double score{0};
  double best_so_far{0};
  bool improved{false};
};

struct StepInfo {
  std::size_t update{0};
  double loss{0};
  double grad_norm{0};
  double post_clip_norm{0};
  double clip_factor{1};
  TaskKind task{TaskKind::image_caption};
  std::string dataset;
};

struct TrainLog {
  std::vector<InspectionRecord> inspections;
  double best_score{-std::numeric_limits<double>::infinity()};
  std::size_t best_update{0};
  std::size_t total_updates{0};
  bool diverged{false};
  std::size_t image_caption_batches{0};
  std::size_t c2c_batches{0};

  void write_jsonl(std::ostream& os) const {
    for (const auto& insp : inspections) {
      nlohmann::ordered_json j;
      j["update"] = insp.update;
      j["score"] = insp.score;
      j["best_so_far"] = insp.best_so_far;
      j["improved"] = insp.improved;
      os << j.dump() << '\n';
    }
    nlohmann::ordered_json tail;
    tail["total_updates"] = total_updates;
    tail["best_update"] = best_update;
    tail["best_score"] = best_score;
    tail["diverged"] = diverged;
    tail["image_caption_batches"] = image_caption_batches;
    tail["c2c_batches"] = c2c_batches;
    os << tail.dump() << '\n';
  }
};

template <typename T>
struct TrainResult {
  ModelParams<T> best_params;
  TrainLog log;
};

template <typename T>
using Evaluator = std::function<double(const ModelParams<T>&)>;
using StepObserver = std::function<void(const StepInfo&)>;

// One gradient step over one sampled batch. Returns the loss value; gradients
// land in `grads` in named-tensor order.
template <typename T>
double training_step(ModelParams<T>& model, const Batch& batch,
                     const LossConfig& loss_cfg,
                     std::vector<Tensor<T>>& grads) {
  Tape<T> tape;
  ParamRefs<T> refs = register_params(tape, model);
  typename Tape<T>::Ref side_a;
  if (batch.task == TaskKind::image_caption) {
    side_a = encode_images_on_tape(tape, refs,
                                   batch.features.template cast<T>());
  } else {
    side_a = encode_sentences_on_tape(tape, refs, batch.tokens_a);
  }
  auto side_b = encode_sentences_on_tape(tape, refs, batch.tokens_b);
  auto loss =
      ranking_loss_on_tape(tape, similarity_on_tape(tape, side_a, side_b),
                           loss_cfg);
  const double loss_value = double(tape.value(loss).data[0]);
  if (!std::isfinite(loss_value)) return loss_value;  // caller aborts
  tape.backward(loss);
  grads.clear();
  for (auto ref : param_ref_list(refs)) grads.push_back(tape.grad_or_zero(ref));
  return loss_value;
}

// The optimization loop: Adam with global-norm clipping, interleaved task
// sampling via the given sampler, and validation-driven early stopping (stop
// after `patience_inspections` consecutive non-improving inspections, one
// inspection every `eval_interval_updates` updates). Returns the parameters
// from the best inspection. A pure function of (config, data, seed).
template <typename T>
TrainResult<T> train(ModelParams<T> model, BatchSampler& sampler,
                     const TrainConfig& cfg, const Evaluator<T>& evaluator,
                     const StepObserver& observer = {}) {
  cfg.validate();
  TrainResult<T> result;
  TrainLog& log = result.log;
  result.best_params = model;

  std::vector<Tensor<T>*> params;
  for (auto& kv : model.named_tensors()) params.push_back(kv.second);
  AdamState<T> opt = AdamState<T>::zeros_like(params);

  std::size_t consecutive_failures = 0;
  auto inspect = [&](std::size_t update) {
    const double score = evaluator(model);
    const bool improved = score > log.best_score;
    if (improved) {
      log.best_score = score;
      log.best_update = update;
      result.best_params = model;
      consecutive_failures = 0;
    } else {
      ++consecutive_failures;
    }
    log.inspections.push_back({update, score, log.best_score, improved});
    return consecutive_failures >= cfg.patience_inspections;
  };

  if (cfg.inspect_at_start && inspect(0)) return result;

  std::vector<Tensor<T>> grads;
  std::size_t update = 0;
  while (update < cfg.max_updates) {
    Batch batch = sampler.sample(cfg.batch_size);
    ++update;
    double loss_value;
    try {
      loss_value = training_step(model, batch, cfg.loss, grads);
      if (!std::isfinite(loss_value))
        throw NumericError("loss is not finite at update " +
                           std::to_string(update));
      const double norm = global_grad_norm(grads);
      const double factor = clip_gradients(grads, cfg.grad_clip_norm);
      adam_step(params, grads, opt, cfg.learning_rate);
      if (observer)
        observer({update, loss_value, norm, norm * factor, factor, batch.task,
                  batch.dataset});
    } catch (const NumericError&) {
      // Divergence: keep the best checkpoint seen so far and stop.
      log.diverged = true;
      break;
    }
    if (update % cfg.eval_interval_updates == 0 && inspect(update)) break;
  }
  log.total_updates = update;
  log.image_caption_batches = sampler.image_caption_batches();
  log.c2c_batches = sampler.c2c_batches();
  if (log.inspections.empty()) {
    // No inspection ever ran (tiny max_updates); fall back to final weights.
    result.best_params = model;
  }
  return result;
}

// ---- dataset wiring ----------------------------------------------------------

// How one corpus participates in training: which caption languages feed the
// image-caption task, whether its cross-lingual pairs feed the c2c task, and
// whether synthesized captions (provenance != original) join each task.
struct TrainingCorpusSpec {
  const CaptionedCorpus* corpus{nullptr};
  std::vector<std::string> languages;
  bool c2c{false};
  std::vector<std::string> c2c_languages;  // defaults to `languages`
  bool synthetic_in_image_caption{true};
  bool synthetic_in_c2c{true};
};

// Owns the derived pair sets; the datasets point into them.
struct TrainingSetup {
  std::vector<std::unique_ptr<C2CPairSet>> pair_sets;
  std::vector<TrainingDataset> datasets;
};

inline TrainingSetup build_training_setup(
    const std::vector<TrainingCorpusSpec>& specs, bool c2c_enabled) {
  TrainingSetup setup;
  for (const auto& spec : specs) {
    if (!spec.corpus) throw std::invalid_argument("training spec: null corpus");
    const C2CPairSet* pair_set = nullptr;
    if (c2c_enabled && spec.c2c) {
      std::vector<std::string> langs =
          spec.c2c_languages.empty() ? spec.languages : spec.c2c_languages;
      if (langs.size() != 2)
        throw std::invalid_argument(
            "training spec: c2c needs exactly two languages for corpus " +
            spec.corpus->name);
      auto pairs = std::make_unique<C2CPairSet>(
          build_c2c_pairs(*spec.corpus, langs[0], langs[1]));
      if (!spec.synthetic_in_c2c) {
        auto keep = [&](const std::string& caption_id) {
          const CaptionRecord& rec =
              spec.corpus->captions[spec.corpus->caption_index.at(caption_id)];
          return rec.provenance == Provenance::original;
        };
        std::vector<C2CPair> filtered;
        for (const auto& p : pairs->pairs)
          if (keep(p.caption_l1) && keep(p.caption_l2)) filtered.push_back(p);
        pairs->pairs = std::move(filtered);
      }
      if (!pairs->empty()) {
        setup.pair_sets.push_back(std::move(pairs));
        pair_set = setup.pair_sets.back().get();
      }
    }
    for (const auto& lang : spec.languages) {
      TrainingDataset ds = TrainingDataset::make(*spec.corpus, lang, pair_set);
      if (!spec.synthetic_in_image_caption) {
        std::vector<std::size_t> kept;
        for (std::size_t row : ds.caption_rows)
          if (spec.corpus->captions[row].provenance == Provenance::original)
            kept.push_back(row);
        ds.caption_rows = std::move(kept);
      }
      if (!ds.caption_rows.empty()) setup.datasets.push_back(std::move(ds));
    }
  }
  if (setup.datasets.empty())
    throw std::invalid_argument("training setup: no usable datasets");
  return setup;
}

// ---- pseudopair cycle ----------------------------------------------------------

enum class PseudoMode { restart, fine_tune };

inline const char* pseudo_mode_name(PseudoMode m) {
  return m == PseudoMode::restart ? "restart" : "fine-tune";
}

struct PseudoCycleConfig {
  std::string source_language;       // captions transferred FROM this language
  std::string target_language;       // each caption in this language gets a match
  FilterPolicy filter{FilterPolicy::none};
  PseudoMode mode{PseudoMode::fine_tune};
  bool pairs_in_image_caption{true};
  bool pairs_in_c2c{true};
};

template <typename T>
struct PseudoCycleResult {
  std::vector<PseudoPair> pairs;            // after filtering
  PseudoPairDiagnostics diagnostics;
  CaptionedCorpus augmented_target;
  ModelParams<T> final_params;
  Vocabulary final_vocab;
  TrainLog log;
  RetrievalReport report_before;
  RetrievalReport report_after;
};

// The restart-vs-fine-tune orchestration: generate pseudopairs with the base
// model, filter, splice them into the target corpus, then either re-train
// from scratch (fresh vocabulary over the augmented data, fresh init from the
// run seed) or fine-tune the base model (original vocabulary, fresh optimizer
// moments).
template <typename T>
PseudoCycleResult<T> run_pseudopair_cycle(
    const ModelParams<T>& base_model, const Vocabulary& base_vocab,
    const CaptionedCorpus& source_corpus, const CaptionedCorpus& target_corpus,
    std::vector<TrainingCorpusSpec> other_corpora,
    const CaptionedCorpus& val_corpus,
    const std::vector<std::string>& val_languages,
    const CaptionedCorpus& test_corpus,
    const std::vector<std::string>& test_languages,
    const PseudoCycleConfig& pseudo_cfg, const TrainConfig& base_train_cfg) {
  PseudoCycleResult<T> result;
  auto pairs = generate_pseudopairs(base_model, base_vocab, source_corpus,
                                    pseudo_cfg.source_language, target_corpus,
                                    pseudo_cfg.target_language);
  result.pairs = apply_filter(pairs, pseudo_cfg.filter);
  if (result.pairs.empty())
    throw std::invalid_argument(
        "pseudopair cycle: no pairs survived filtering");
  result.diagnostics = pseudopair_diagnostics(
      result.pairs,
      source_corpus.captions_of_language(pseudo_cfg.source_language).size());
  result.augmented_target = augment_with_pseudopairs(
      target_corpus, source_corpus, pseudo_cfg.source_language, result.pairs);

  result.report_before = compute_retrieval_report(base_model, base_vocab,
                                                  test_corpus, test_languages);

  // The augmented target corpus now carries both languages; pseudopairs join
  // the image-caption and c2c tasks per the cycle flags.
  TrainingCorpusSpec augmented_spec;
  augmented_spec.corpus = &result.augmented_target;
  augmented_spec.languages = {pseudo_cfg.target_language};
  if (pseudo_cfg.pairs_in_image_caption)
    augmented_spec.languages.push_back(pseudo_cfg.source_language);
  augmented_spec.c2c = pseudo_cfg.pairs_in_c2c;
  augmented_spec.c2c_languages = {pseudo_cfg.source_language,
                                  pseudo_cfg.target_language};
  std::vector<TrainingCorpusSpec> specs = std::move(other_corpora);
  specs.push_back(augmented_spec);

  TrainConfig cfg = base_train_cfg;
  ModelParams<T> start;
  if (pseudo_cfg.mode == PseudoMode::restart) {
    std::vector<const CaptionedCorpus*> vocab_corpora;
    for (const auto& s : specs) vocab_corpora.push_back(s.corpus);
    result.final_vocab = build_vocabulary(vocab_corpora, 1);
    ModelDims dims = base_model.dims;
    dims.vocab = result.final_vocab.size();
    RandomStream init_rng(RandomStream::mix(cfg.seed, 0x1217u));
    start = init_model<T>(dims, init_rng);
    cfg.inspect_at_start = false;
  } else {
    // Fine-tune keeps the vocabulary (unseen tokens map to <unk>) and the
    // parameters; optimizer moments restart at zero inside train().
    result.final_vocab = base_vocab;
    start = base_model;
    cfg.inspect_at_start = true;
  }

  TrainingSetup setup = build_training_setup(specs, cfg.c2c_enabled);
  RandomStream sample_rng(RandomStream::mix(cfg.seed, 0x5a3fu));
  BatchSampler sampler(setup.datasets, result.final_vocab, sample_rng);
  const Vocabulary& vocab = result.final_vocab;
  Evaluator<T> evaluator = [&](const ModelParams<T>& m) {
    return sum_of_recall_score(m, vocab, val_corpus, val_languages);
  };
  auto trained = train(std::move(start), sampler, cfg, evaluator);
  result.final_params = std::move(trained.best_params);
  result.log = std::move(trained.log);
  result.report_after = compute_retrieval_report(result.final_params, vocab,
                                                 test_corpus, test_languages);
  return result;
}

}  // namespace groundrank
