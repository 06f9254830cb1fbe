#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "groundrank/corpus.hpp"
#include "groundrank/loss.hpp"
#include "groundrank/model.hpp"
#include "groundrank/vocabulary.hpp"

namespace groundrank {

// Rank of `candidate` within one similarity row under the stable tie policy:
// 1 + strictly-better candidates + equals at a lower index.
template <typename T>
std::size_t rank_of_candidate(const Tensor<T>& scores, std::size_t row,
                              std::size_t candidate) {
  std::size_t rank = 1;
  const T target = scores.at(row, candidate);
  for (std::size_t k = 0; k < scores.cols; ++k) {
    if (scores.at(row, k) > target) ++rank;
    else if (scores.at(row, k) == target && k < candidate) ++rank;
  }
  return rank;
}

// Best (minimum) rank over an image's gold captions; standard convention for
// five-caption datasets.
template <typename T>
std::vector<std::size_t> rank_image_to_text(
    const SimilarityMatrix<T>& s,
    const std::vector<std::vector<std::size_t>>& gold_captions_per_image) {
  if (gold_captions_per_image.size() != s.scores.rows)
    throw std::invalid_argument("rank_image_to_text: gold size mismatch");
  std::vector<std::size_t> ranks;
  ranks.reserve(s.scores.rows);
  for (std::size_t i = 0; i < s.scores.rows; ++i) {
    const auto& gold = gold_captions_per_image[i];
    if (gold.empty())
      throw std::invalid_argument(
          "rank_image_to_text: image without gold caption at row " +
          std::to_string(i));
    std::size_t best = s.scores.cols + 1;
    for (std::size_t cap : gold)
      best = std::min(best, rank_of_candidate(s.scores, i, cap));
    ranks.push_back(best);
  }
  return ranks;
}

// Unique gold image per caption.
template <typename T>
std::vector<std::size_t> rank_text_to_image(
    const SimilarityMatrix<T>& s, const std::vector<std::size_t>& gold_image) {
  if (gold_image.size() != s.scores.rows)
    throw std::invalid_argument("rank_text_to_image: gold size mismatch");
  std::vector<std::size_t> ranks;
  ranks.reserve(s.scores.rows);
  for (std::size_t i = 0; i < s.scores.rows; ++i)
    ranks.push_back(rank_of_candidate(s.scores, i, gold_image[i]));
  return ranks;
}

inline double recall_at_k(const std::vector<std::size_t>& ranks,
                          std::size_t k) {
  if (k < 1) throw std::invalid_argument("recall_at_k: K must be >= 1");
  if (ranks.empty()) throw std::invalid_argument("recall_at_k: empty ranks");
  std::size_t hits = 0;
  for (std::size_t r : ranks)
    if (r <= k) ++hits;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(ranks.size());
}

// Median of an even count is the lower middle value.
inline double median_rank(std::vector<std::size_t> ranks) {
  if (ranks.empty()) throw std::invalid_argument("median_rank: empty ranks");
  std::sort(ranks.begin(), ranks.end());
  return static_cast<double>(ranks[(ranks.size() - 1) / 2]);
}

inline double mean_rank(const std::vector<std::size_t>& ranks) {
  if (ranks.empty()) throw std::invalid_argument("mean_rank: empty ranks");
  double acc = 0;
  for (std::size_t r : ranks) acc += static_cast<double>(r);
  return acc / static_cast<double>(ranks.size());
}

struct DirectionReport {
  double r1{0}, r5{0}, r10{0};
  double median{0}, mean{0};

  static DirectionReport from_ranks(const std::vector<std::size_t>& ranks) {
    DirectionReport d;
    d.r1 = recall_at_k(ranks, 1);
    d.r5 = recall_at_k(ranks, 5);
    d.r10 = recall_at_k(ranks, 10);
    d.median = median_rank(ranks);
    d.mean = mean_rank(ranks);
    return d;
  }
};

struct LanguageReport {
  DirectionReport image_to_text;
  DirectionReport text_to_image;

  // R@1 + R@5 + R@10 over both directions.
  double sum() const {
    return image_to_text.r1 + image_to_text.r5 + image_to_text.r10 +
           text_to_image.r1 + text_to_image.r5 + text_to_image.r10;
  }
};

struct RetrievalReport {
  std::map<std::string, LanguageReport> languages;

  double sum_of_sums() const {
    double acc = 0;
    for (const auto& kv : languages) acc += kv.second.sum();
    return acc;
  }
};

// ---- full-report computation ------------------------------------------------

// Per language: rank every corpus image against that language's captions and
// vice versa. Deterministic single-threaded order.
template <typename T>
RetrievalReport compute_retrieval_report(
    const ModelParams<T>& model, const Vocabulary& vocab,
    const CaptionedCorpus& corpus, const std::vector<std::string>& languages) {
  RetrievalReport report;
  EmbeddingBatch<T> images = encode_images(model, corpus.features.template cast<T>());
  for (const auto& lang : languages) {
    const auto caption_rows = corpus.captions_of_language(lang);
    if (caption_rows.empty())
      throw std::invalid_argument("evaluation: corpus " + corpus.name +
                                  " has no captions in language " + lang);
    std::vector<std::vector<std::uint32_t>> sequences;
    sequences.reserve(caption_rows.size());
    std::vector<std::size_t> gold_image(caption_rows.size());
    std::vector<std::vector<std::size_t>> gold_captions(corpus.image_ids.size());
    for (std::size_t i = 0; i < caption_rows.size(); ++i) {
      const CaptionRecord& cap = corpus.captions[caption_rows[i]];
      sequences.push_back(vocab.encode(cap.tokens));
      const std::size_t img_row = corpus.feature_row(cap.image_id);
      gold_image[i] = img_row;
      gold_captions[img_row].push_back(i);
    }
    EmbeddingBatch<T> captions = encode_sentences(
        model, TokenBatch::from_sequences(sequences), lang);

    auto i2t = similarity_matrix(images.vectors, captions.vectors);
    auto t2i = similarity_matrix(captions.vectors, images.vectors);
    LanguageReport lr;
    lr.image_to_text =
        DirectionReport::from_ranks(rank_image_to_text(i2t, gold_captions));
    lr.text_to_image =
        DirectionReport::from_ranks(rank_text_to_image(t2i, gold_image));
    report.languages[lang] = lr;
  }
  return report;
}

// Validation score used for early stopping: sum of the six recall values per
// language, across all given languages.
template <typename T>
double sum_of_recall_score(const ModelParams<T>& model, const Vocabulary& vocab,
                           const CaptionedCorpus& corpus,
                           const std::vector<std::string>& languages) {
  return compute_retrieval_report(model, vocab, corpus, languages)
      .sum_of_sums();
}

// ---- translation retrieval ---------------------------------------------------

struct TranslationRetrievalResult {
  double r1_l1_to_l2{0};
  double r1_l2_to_l1{0};
};

// Encode both sides of aligned translation pairs with the sentence encoder
// and measure R@1 of the gold translation under cosine ranking.
template <typename T>
TranslationRetrievalResult translation_retrieval(
    const ModelParams<T>& model, const Vocabulary& vocab,
    const std::vector<std::vector<std::string>>& side_l1,
    const std::vector<std::vector<std::string>>& side_l2) {
  if (side_l1.size() != side_l2.size())
    throw std::invalid_argument("translation_retrieval: sides differ in length");
  if (side_l1.empty())
    throw std::invalid_argument("translation_retrieval: no pairs");
  auto encode_side = [&](const std::vector<std::vector<std::string>>& side) {
    std::vector<std::vector<std::uint32_t>> sequences;
    sequences.reserve(side.size());
    for (const auto& tokens : side) sequences.push_back(vocab.encode(tokens));
    return encode_sentences(model, TokenBatch::from_sequences(sequences));
  };
  EmbeddingBatch<T> a = encode_side(side_l1);
  EmbeddingBatch<T> b = encode_side(side_l2);
  auto forward = similarity_matrix(a.vectors, b.vectors);
  auto backward = similarity_matrix(b.vectors, a.vectors);
  std::vector<std::size_t> gold(side_l1.size());
  for (std::size_t i = 0; i < gold.size(); ++i) gold[i] = i;
  TranslationRetrievalResult out;
  out.r1_l1_to_l2 = recall_at_k(rank_text_to_image(forward, gold), 1);
  out.r1_l2_to_l1 = recall_at_k(rank_text_to_image(backward, gold), 1);
  return out;
}

// ---- report emission ----------------------------------------------------------

inline nlohmann::ordered_json direction_to_json(const DirectionReport& d) {
  return {{"r1", d.r1},
          {"r5", d.r5},
          {"r10", d.r10},
          {"median_rank", d.median},
          {"mean_rank", d.mean}};
}

inline DirectionReport direction_from_json(const nlohmann::json& j) {
  DirectionReport d;
  d.r1 = j.at("r1").get<double>();
  d.r5 = j.at("r5").get<double>();
  d.r10 = j.at("r10").get<double>();
  d.median = j.at("median_rank").get<double>();
  d.mean = j.at("mean_rank").get<double>();
  return d;
}

inline nlohmann::ordered_json report_to_json(const RetrievalReport& r) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json langs = nlohmann::ordered_json::object();
  for (const auto& kv : r.languages) {
    nlohmann::ordered_json lj;
    lj["image_to_text"] = direction_to_json(kv.second.image_to_text);
    lj["text_to_image"] = direction_to_json(kv.second.text_to_image);
    lj["sum"] = kv.second.sum();
    langs[kv.first] = lj;
  }
  j["languages"] = langs;
  j["sum_of_sums"] = r.sum_of_sums();
  return j;
}

inline RetrievalReport report_from_json(const nlohmann::json& j) {
  RetrievalReport r;
  for (auto it = j.at("languages").begin(); it != j.at("languages").end();
       ++it) {
    LanguageReport lr;
    lr.image_to_text = direction_from_json(it.value().at("image_to_text"));
    lr.text_to_image = direction_from_json(it.value().at("text_to_image"));
    r.languages[it.key()] = lr;
  }
  return r;
}

// Element-wise mean over per-seed reports; fractional median ranks come from
// exactly this averaging.
inline RetrievalReport mean_report(const std::vector<RetrievalReport>& reports) {
  if (reports.empty())
    throw std::invalid_argument("mean_report: no reports");
  RetrievalReport out;
  const double n = static_cast<double>(reports.size());
  for (const auto& kv : reports.front().languages) {
    LanguageReport acc;
    for (const auto& r : reports) {
      const LanguageReport& lr = r.languages.at(kv.first);
      acc.image_to_text.r1 += lr.image_to_text.r1 / n;
      acc.image_to_text.r5 += lr.image_to_text.r5 / n;
      acc.image_to_text.r10 += lr.image_to_text.r10 / n;
      acc.image_to_text.median += lr.image_to_text.median / n;
      acc.image_to_text.mean += lr.image_to_text.mean / n;
      acc.text_to_image.r1 += lr.text_to_image.r1 / n;
      acc.text_to_image.r5 += lr.text_to_image.r5 / n;
      acc.text_to_image.r10 += lr.text_to_image.r10 / n;
      acc.text_to_image.median += lr.text_to_image.median / n;
      acc.text_to_image.mean += lr.text_to_image.mean / n;
    }
    out.languages[kv.first] = acc;
  }
  return out;
}

// Aligned plain-text table, recalls to one decimal place.
inline std::string report_to_text(const RetrievalReport& r) {
  std::ostringstream os;
  os << std::fixed;
  os << std::setw(10) << std::left << "language" << std::setw(6) << "dir"
     << std::right << std::setw(7) << "R@1" << std::setw(7) << "R@5"
     << std::setw(7) << "R@10" << std::setw(7) << "Medr" << std::setw(8)
     << "Meanr" << "\n";
  auto line = [&](const std::string& lang, const std::string& dir,
                  const DirectionReport& d) {
    os << std::setw(10) << std::left << lang << std::setw(6) << dir
       << std::right << std::setprecision(1) << std::setw(7) << d.r1
       << std::setw(7) << d.r5 << std::setw(7) << d.r10 << std::setw(7)
       << d.median << std::setw(8) << d.mean << "\n";
  };
  for (const auto& kv : r.languages) {
    line(kv.first, "I->T", kv.second.image_to_text);
    line(kv.first, "T->I", kv.second.text_to_image);
    os << std::setw(10) << std::left << kv.first << std::setw(6) << "Sum"
       << std::right << std::setprecision(1) << std::setw(7) << kv.second.sum()
       << "\n";
  }
  os << std::setw(10) << std::left << "all" << std::setw(6) << "Sum"
     << std::right << std::setprecision(1) << std::setw(7) << r.sum_of_sums()
     << "\n";
  return os.str();
}

inline std::string report_to_csv(const RetrievalReport& r) {
  std::ostringstream os;
  os << "language,direction,r1,r5,r10,median_rank,mean_rank\n";
  for (const auto& kv : r.languages) {
    const auto emit = [&](const std::string& dir, const DirectionReport& d) {
      os << kv.first << ',' << dir << ',' << d.r1 << ',' << d.r5 << ','
         << d.r10 << ',' << d.median << ',' << d.mean << "\n";
    };
    emit("i2t", kv.second.image_to_text);
    emit("t2i", kv.second.text_to_image);
  }
  return os.str();
}

}  // namespace groundrank
