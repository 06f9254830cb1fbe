#pragma once

#include <cstdint>
#include <iostream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "groundrank/corpus.hpp"
#include "groundrank/model.hpp"
#include "groundrank/rng.hpp"
#include "groundrank/vocabulary.hpp"

namespace groundrank {

enum class TaskKind { image_caption, caption_caption };

// One sampleable training source: a corpus restricted to one caption
// language, optionally carrying the corpus' cross-lingual pair set. When the
// pair set is present the task coin is flipped per batch (p = 0.5).
struct TrainingDataset {
  std::string name;
  const CaptionedCorpus* corpus{nullptr};
  std::string language;
  std::vector<std::size_t> caption_rows;
  const C2CPairSet* c2c{nullptr};

  static TrainingDataset make(const CaptionedCorpus& corpus,
                              const std::string& language,
                              const C2CPairSet* c2c = nullptr) {
    TrainingDataset d;
    d.name = corpus.name + "/" + language;
    d.corpus = &corpus;
    d.language = language;
    d.caption_rows = corpus.captions_of_language(language);
    d.c2c = c2c;
    return d;
  }
};

// Gold pairs sit on the diagonal: row i of each side belongs to row i of the
// other.
struct Batch {
  TaskKind task{TaskKind::image_caption};
  std::string dataset;
  Tensor<float> features;            // image-caption task only
  TokenBatch tokens_a;               // caption-caption task: language-1 side
  TokenBatch tokens_b;               // caption side (both tasks)
  std::vector<std::string> image_ids;
  std::vector<std::string> caption_ids_a;
  std::vector<std::string> caption_ids_b;
};

class BatchSampler {
 public:
  BatchSampler(std::vector<TrainingDataset> datasets, const Vocabulary& vocab,
               RandomStream& rng)
      : datasets_(std::move(datasets)), vocab_(&vocab), rng_(&rng) {
    if (datasets_.empty())
      throw std::invalid_argument("sampler: no training datasets");
    for (const auto& d : datasets_)
      if (d.caption_rows.empty())
        throw std::invalid_argument("sampler: dataset " + d.name +
                                    " has no captions of language " +
                                    d.language);
  }

  Batch sample(std::size_t batch_size) {
    if (batch_size < 2)
      throw std::invalid_argument("sampler: batch_size must be >= 2");
    const std::size_t pick =
        static_cast<std::size_t>(rng_->integer(datasets_.size()));
    const TrainingDataset& ds = datasets_[pick];
    const bool do_c2c = ds.c2c != nullptr && !ds.c2c->empty() &&
                        rng_->integer(2) == 1;
    if (do_c2c) {
      ++c2c_batches_;
      return sample_c2c(ds, batch_size);
    }
    ++image_caption_batches_;
    return sample_image_caption(ds, batch_size);
  }

  std::size_t image_caption_batches() const { return image_caption_batches_; }
  std::size_t c2c_batches() const { return c2c_batches_; }

 private:
  std::vector<std::size_t> draw_indices(std::size_t pool, std::size_t count,
                                        const std::string& pool_name) {
    std::vector<std::size_t> out;
    out.reserve(count);
    if (count > pool) {
      if (warned_.insert(pool_name).second)
        std::cerr << "[sampler] batch size " << count << " exceeds " << pool_name
                  << " size " << pool << "; sampling with replacement\n";
      for (std::size_t i = 0; i < count; ++i)
        out.push_back(static_cast<std::size_t>(rng_->integer(pool)));
      return out;
    }
    // Partial Fisher-Yates: first `count` entries of a shuffled index range.
    std::vector<std::size_t> scratch(pool);
    for (std::size_t i = 0; i < pool; ++i) scratch[i] = i;
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t j =
          i + static_cast<std::size_t>(rng_->integer(pool - i));
      std::swap(scratch[i], scratch[j]);
      out.push_back(scratch[i]);
    }
    return out;
  }

  Batch sample_image_caption(const TrainingDataset& ds,
                             std::size_t batch_size) {
    Batch batch;
    batch.task = TaskKind::image_caption;
    batch.dataset = ds.name;
    const auto rows =
        draw_indices(ds.caption_rows.size(), batch_size, ds.name + " captions");
    const CaptionedCorpus& corpus = *ds.corpus;
    batch.features = Tensor<float>(batch_size, corpus.features.cols);
    std::vector<std::vector<std::uint32_t>> sequences;
    sequences.reserve(batch_size);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const CaptionRecord& cap = corpus.captions[ds.caption_rows[rows[i]]];
      const std::size_t frow = corpus.feature_row(cap.image_id);
      for (std::size_t c = 0; c < corpus.features.cols; ++c)
        batch.features.at(i, c) = corpus.features.at(frow, c);
      sequences.push_back(vocab_->encode(cap.tokens));
      batch.image_ids.push_back(cap.image_id);
      batch.caption_ids_b.push_back(cap.caption_id);
    }
    batch.tokens_b = TokenBatch::from_sequences(sequences);
    return batch;
  }

  Batch sample_c2c(const TrainingDataset& ds, std::size_t batch_size) {
    Batch batch;
    batch.task = TaskKind::caption_caption;
    batch.dataset = ds.name;
    const auto rows = draw_indices(ds.c2c->size(), batch_size,
                                   ds.name + " c2c pairs");
    const CaptionedCorpus& corpus = *ds.corpus;
    std::vector<std::vector<std::uint32_t>> seq_a, seq_b;
    seq_a.reserve(batch_size);
    seq_b.reserve(batch_size);
    for (std::size_t row : rows) {
      const C2CPair& pair = ds.c2c->pairs[row];
      const CaptionRecord& a =
          corpus.captions[corpus.caption_index.at(pair.caption_l1)];
      const CaptionRecord& b =
          corpus.captions[corpus.caption_index.at(pair.caption_l2)];
      seq_a.push_back(vocab_->encode(a.tokens));
      seq_b.push_back(vocab_->encode(b.tokens));
      batch.image_ids.push_back(pair.image_id);
      batch.caption_ids_a.push_back(pair.caption_l1);
      batch.caption_ids_b.push_back(pair.caption_l2);
    }
    batch.tokens_a = TokenBatch::from_sequences(seq_a);
    batch.tokens_b = TokenBatch::from_sequences(seq_b);
    return batch;
  }

  std::vector<TrainingDataset> datasets_;
  const Vocabulary* vocab_;
  RandomStream* rng_;
  std::set<std::string> warned_;
  std::size_t image_caption_batches_{0};
  std::size_t c2c_batches_{0};
};

}  // namespace groundrank
