#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "groundrank/corpus.hpp"
#include "groundrank/loss.hpp"
#include "groundrank/model.hpp"
#include "groundrank/vocabulary.hpp"

namespace groundrank {

// A transferred annotation: the target image (and its caption in the target
// language) gains the most model-similar caption from the source corpus.
struct PseudoPair {
  std::string target_caption_id;
  std::string source_caption_id;
  std::string target_image_id;
  double similarity{0};
};

enum class FilterPolicy { none, keep_top_25, remove_bottom_25 };

inline const char* filter_policy_name(FilterPolicy p) {
  switch (p) {
    case FilterPolicy::none: return "none";
    case FilterPolicy::keep_top_25: return "keep-top-25";
    case FilterPolicy::remove_bottom_25: return "remove-bottom-25";
  }
  return "none";
}

inline FilterPolicy filter_policy_from_name(const std::string& s) {
  if (s == "none") return FilterPolicy::none;
  if (s == "keep-top-25") return FilterPolicy::keep_top_25;
  if (s == "remove-bottom-25") return FilterPolicy::remove_bottom_25;
  throw std::invalid_argument("unknown filter policy: " + s);
}

// Exhaustive cosine argmax of each target caption over ALL source captions.
// Ties resolve to the lexicographically lowest source caption_id. One pair
// per target caption, in target order.
template <typename T>
std::vector<PseudoPair> generate_pseudopairs_from_embeddings(
    const Tensor<T>& source_vectors,
    const std::vector<std::string>& source_caption_ids,
    const Tensor<T>& target_vectors,
    const std::vector<std::string>& target_caption_ids,
    const std::vector<std::string>& target_image_ids) {
  if (source_vectors.rows == 0)
    throw std::invalid_argument("pseudopairs: empty source corpus");
  if (source_vectors.rows != source_caption_ids.size() ||
      target_vectors.rows != target_caption_ids.size() ||
      target_vectors.rows != target_image_ids.size())
    throw std::invalid_argument("pseudopairs: id/vector count mismatch");
  if (source_vectors.cols != target_vectors.cols)
    throw ShapeError("pseudopairs", source_vectors.shape(),
                     target_vectors.shape());

  std::vector<PseudoPair> pairs;
  pairs.reserve(target_vectors.rows);
  for (std::size_t t = 0; t < target_vectors.rows; ++t) {
    std::size_t best = 0;
    double best_sim = -2.0;
    for (std::size_t s = 0; s < source_vectors.rows; ++s) {
      double sim = 0;
      for (std::size_t c = 0; c < source_vectors.cols; ++c)
        sim += double(target_vectors.at(t, c)) * double(source_vectors.at(s, c));
      if (sim > best_sim ||
          (sim == best_sim &&
           source_caption_ids[s] < source_caption_ids[best])) {
        best_sim = sim;
        best = s;
      }
    }
    pairs.push_back({target_caption_ids[t], source_caption_ids[best],
                     target_image_ids[t], best_sim});
  }
  return pairs;
}

// Model-backed generation: encode both corpora with the sentence encoder and
// run the dense argmax. Deterministic given the model snapshot.
template <typename T>
std::vector<PseudoPair> generate_pseudopairs(
    const ModelParams<T>& model, const Vocabulary& vocab,
    const CaptionedCorpus& source_corpus, const std::string& source_language,
    const CaptionedCorpus& target_corpus, const std::string& target_language) {
  const auto source_rows = source_corpus.captions_of_language(source_language);
  const auto target_rows = target_corpus.captions_of_language(target_language);
  if (source_rows.empty())
    throw std::invalid_argument("pseudopairs: source corpus has no captions in " +
                                source_language);
  if (target_rows.empty())
    throw std::invalid_argument("pseudopairs: target corpus has no captions in " +
                                target_language);
  if (source_language == target_language)
    throw std::invalid_argument("pseudopairs: languages must differ");

  auto encode = [&](const CaptionedCorpus& corpus,
                    const std::vector<std::size_t>& rows,
                    std::vector<std::string>* caption_ids,
                    std::vector<std::string>* image_ids) {
    std::vector<std::vector<std::uint32_t>> sequences;
    sequences.reserve(rows.size());
    for (std::size_t r : rows) {
      const CaptionRecord& cap = corpus.captions[r];
      sequences.push_back(vocab.encode(cap.tokens));
      if (caption_ids) caption_ids->push_back(cap.caption_id);
      if (image_ids) image_ids->push_back(cap.image_id);
    }
    return encode_sentences(model, TokenBatch::from_sequences(sequences));
  };

  std::vector<std::string> source_ids;
  auto source_emb = encode(source_corpus, source_rows, &source_ids, nullptr);
  std::vector<std::string> target_ids, target_imgs;
  auto target_emb = encode(target_corpus, target_rows, &target_ids, &target_imgs);
  return generate_pseudopairs_from_embeddings(
      source_emb.vectors, source_ids, target_emb.vectors, target_ids,
      target_imgs);
}

// "Keep top 25%" keeps every pair whose similarity reaches the
// ceil(0.25*N)-th largest value; "remove bottom 25%" keeps everything from
// the ceil(0.75*N)-th largest up. Nearest-rank thresholds taken from the top
// keep exactly that many pairs when similarities are distinct and keep
// everything when they are all equal.
inline std::vector<PseudoPair> apply_filter(const std::vector<PseudoPair>& pairs,
                                            FilterPolicy policy) {
  if (policy == FilterPolicy::none || pairs.empty()) return pairs;
  const double keep_fraction =
      policy == FilterPolicy::keep_top_25 ? 0.25 : 0.75;
  std::vector<double> sims;
  sims.reserve(pairs.size());
  for (const auto& p : pairs) sims.push_back(p.similarity);
  std::sort(sims.begin(), sims.end(), std::greater<double>());
  const std::size_t rank = static_cast<std::size_t>(
      std::ceil(keep_fraction * static_cast<double>(pairs.size())));
  const double threshold = sims[std::max<std::size_t>(rank, 1) - 1];
  std::vector<PseudoPair> kept;
  for (const auto& p : pairs)
    if (p.similarity >= threshold) kept.push_back(p);
  return kept;
}

// Coverage, hub statistics and overlap measures from the Discussion section.
struct PseudoPairDiagnostics {
  std::size_t pair_count{0};
  std::size_t source_corpus_captions{0};
  std::size_t distinct_sources_used{0};
  double coverage{0};  // distinct sources used / source corpus captions
  // (source caption id, times used), usage descending then id ascending.
  std::vector<std::pair<std::string, std::size_t>> usage_histogram;
  double top150_mass{0};  // fraction of pairs using a top-150 source caption
  bool has_reference{false};
  double jaccard_vs_reference{0};       // distinct source-caption-id sets
  double image_agreement_vs_reference{0};  // shared target images, same source
};

inline PseudoPairDiagnostics pseudopair_diagnostics(
    const std::vector<PseudoPair>& pairs, std::size_t source_corpus_captions,
    const std::vector<PseudoPair>* reference = nullptr) {
  PseudoPairDiagnostics d;
  d.pair_count = pairs.size();
  d.source_corpus_captions = source_corpus_captions;
  std::map<std::string, std::size_t> usage;
  for (const auto& p : pairs) ++usage[p.source_caption_id];
  d.distinct_sources_used = usage.size();
  d.coverage = source_corpus_captions == 0
                   ? 0.0
                   : double(usage.size()) / double(source_corpus_captions);
  d.usage_histogram.assign(usage.begin(), usage.end());
  std::stable_sort(d.usage_histogram.begin(), d.usage_histogram.end(),
                   [](const auto& a, const auto& b) {
                     if (a.second != b.second) return a.second > b.second;
                     return a.first < b.first;
                   });
  std::size_t top_mass = 0;
  for (std::size_t i = 0; i < d.usage_histogram.size() && i < 150; ++i)
    top_mass += d.usage_histogram[i].second;
  d.top150_mass = pairs.empty() ? 0.0 : double(top_mass) / double(pairs.size());

  if (reference) {
    d.has_reference = true;
    std::set<std::string> ours, theirs;
    for (const auto& p : pairs) ours.insert(p.source_caption_id);
    for (const auto& p : *reference) theirs.insert(p.source_caption_id);
    std::size_t inter = 0;
    for (const auto& id : ours) inter += theirs.count(id);
    const std::size_t uni = ours.size() + theirs.size() - inter;
    d.jaccard_vs_reference = uni == 0 ? 0.0 : double(inter) / double(uni);

    // Per shared target image: do the two pair sets transfer any common
    // source caption?
    std::unordered_map<std::string, std::set<std::string>> by_image_a, by_image_b;
    for (const auto& p : pairs) by_image_a[p.target_image_id].insert(p.source_caption_id);
    for (const auto& p : *reference)
      by_image_b[p.target_image_id].insert(p.source_caption_id);
    std::size_t shared = 0, agree = 0;
    for (const auto& kv : by_image_a) {
      auto other = by_image_b.find(kv.first);
      if (other == by_image_b.end()) continue;
      ++shared;
      bool any = false;
      for (const auto& id : kv.second)
        if (other->second.count(id)) { any = true; break; }
      if (any) ++agree;
    }
    d.image_agreement_vs_reference =
        shared == 0 ? 0.0 : double(agree) / double(shared);
  }
  return d;
}

// Fraction of pairs whose source caption shares the target caption's
// ground-truth concept (synthetic corpora only).
inline double pseudopair_concept_agreement(
    const std::vector<PseudoPair>& pairs,
    const std::unordered_map<std::string, int>& source_concepts,
    const std::unordered_map<std::string, int>& target_concepts) {
  if (pairs.empty()) return 0.0;
  std::size_t match = 0;
  for (const auto& p : pairs) {
    auto s = source_concepts.find(p.source_caption_id);
    auto t = target_concepts.find(p.target_caption_id);
    if (s == source_concepts.end() || t == target_concepts.end())
      throw std::invalid_argument("concept agreement: caption without label: " +
                                  p.source_caption_id + " / " +
                                  p.target_caption_id);
    if (s->second == t->second) ++match;
  }
  return double(match) / double(pairs.size());
}

// ---- pair file (JSONL) -------------------------------------------------------

inline void write_pseudopairs_jsonl(const std::string& path,
                                    const std::vector<PseudoPair>& pairs) {
  std::ofstream os(path);
  if (!os) throw DataError(DataError::Kind::parse, "cannot open " + path);
  for (const auto& p : pairs) {
    nlohmann::ordered_json j;
    j["target_caption_id"] = p.target_caption_id;
    j["source_caption_id"] = p.source_caption_id;
    j["target_image_id"] = p.target_image_id;
    j["similarity"] = p.similarity;
    os << j.dump() << '\n';
  }
}

inline std::vector<PseudoPair> read_pseudopairs_jsonl(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError(DataError::Kind::parse, "cannot open " + path);
  std::vector<PseudoPair> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(DataError::Kind::parse,
                      path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    PseudoPair p;
    p.target_caption_id = j.at("target_caption_id").get<std::string>();
    p.source_caption_id = j.at("source_caption_id").get<std::string>();
    p.target_image_id = j.at("target_image_id").get<std::string>();
    p.similarity = j.at("similarity").get<double>();
    out.push_back(std::move(p));
  }
  return out;
}

inline nlohmann::ordered_json diagnostics_to_json(
    const PseudoPairDiagnostics& d) {
  nlohmann::ordered_json j;
  j["pair_count"] = d.pair_count;
  j["source_corpus_captions"] = d.source_corpus_captions;
  j["distinct_sources_used"] = d.distinct_sources_used;
  j["coverage"] = d.coverage;
  j["top150_mass"] = d.top150_mass;
  nlohmann::ordered_json hist = nlohmann::ordered_json::array();
  for (const auto& kv : d.usage_histogram)
    hist.push_back({{"source_caption_id", kv.first}, {"uses", kv.second}});
  j["usage_histogram"] = hist;
  if (d.has_reference) {
    j["jaccard_vs_reference"] = d.jaccard_vs_reference;
    j["image_agreement_vs_reference"] = d.image_agreement_vs_reference;
  }
  return j;
}

// The augmented corpus: the target corpus plus one record per pseudopair,
// carrying the source caption's tokens in the source language. Record ids are
// "<source_caption_id>.pp.<target_caption_id>" so repeated transfers of one
// source caption stay unique.
inline CaptionedCorpus augment_with_pseudopairs(
    const CaptionedCorpus& target_corpus, const CaptionedCorpus& source_corpus,
    const std::string& source_language, const std::vector<PseudoPair>& pairs) {
  CaptionedCorpus out = target_corpus;
  for (const auto& p : pairs) {
    auto found = source_corpus.caption_index.find(p.source_caption_id);
    if (found == source_corpus.caption_index.end())
      throw DataError(DataError::Kind::unknown_reference,
                      "pseudopair references unknown source caption " +
                          p.source_caption_id);
    const CaptionRecord& src = source_corpus.captions[found->second];
    CaptionRecord rec;
    rec.caption_id = p.source_caption_id + ".pp." + p.target_caption_id;
    rec.image_id = p.target_image_id;
    rec.language = source_language;
    rec.tokens = src.tokens;
    rec.provenance = Provenance::pseudopair;
    if (source_corpus.caption_concepts.count(p.source_caption_id))
      out.caption_concepts[rec.caption_id] =
          source_corpus.caption_concepts.at(p.source_caption_id);
    out.captions.push_back(std::move(rec));
  }
  out.rebuild_indexes();
  out.validate();
  return out;
}

}  // namespace groundrank
