#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "groundrank/tensor.hpp"
#include "groundrank/vocabulary.hpp"

namespace groundrank {

enum class Provenance { original, translated, pseudopair };
enum class Split { train, val, test, unspecified };

inline const char* provenance_name(Provenance p) {
  switch (p) {
    case Provenance::original: return "original";
    case Provenance::translated: return "translated";
    case Provenance::pseudopair: return "pseudopair";
  }
  return "original";
}

inline Provenance provenance_from_name(const std::string& s) {
  if (s == "original") return Provenance::original;
  if (s == "translated") return Provenance::translated;
  if (s == "pseudopair") return Provenance::pseudopair;
  throw std::invalid_argument("unknown provenance: " + s);
}

// Loader and format failures, with a machine-checkable kind.
struct DataError : std::runtime_error {
  enum class Kind {
    magic,
    dimension,
    dangling_image,
    duplicate,
    unknown_reference,
    parse,
  };
  DataError(Kind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct CaptionRecord {
  std::string caption_id;
  std::string image_id;
  std::string language;
  std::vector<std::string> tokens;
  Provenance provenance{Provenance::original};

  bool operator==(const CaptionRecord& o) const {
    return caption_id == o.caption_id && image_id == o.image_id &&
           language == o.language && tokens == o.tokens &&
           provenance == o.provenance;
  }
};

// One captioned image collection: feature matrix plus caption records that
// reference it. Immutable after load; every caption's image_id must resolve.
struct CaptionedCorpus {
  std::string name;
  Split split{Split::unspecified};
  std::vector<std::string> image_ids;
  std::unordered_map<std::string, std::size_t> image_row;
  Tensor<float> features;  // image count x dim
  std::vector<CaptionRecord> captions;
  std::unordered_map<std::string, std::size_t> caption_index;

  // Ground-truth concept labels, populated only by the synthetic generator.
  std::unordered_map<std::string, int> image_concepts;
  std::unordered_map<std::string, int> caption_concepts;

  void rebuild_indexes() {
    image_row.clear();
    for (std::size_t i = 0; i < image_ids.size(); ++i)
      image_row[image_ids[i]] = i;
    caption_index.clear();
    for (std::size_t i = 0; i < captions.size(); ++i) {
      auto inserted = caption_index.emplace(captions[i].caption_id, i);
      if (!inserted.second)
        throw DataError(DataError::Kind::duplicate,
                        "duplicate caption_id: " + captions[i].caption_id);
    }
  }

  void validate() const {
    if (features.rows != image_ids.size())
      throw DataError(DataError::Kind::dimension,
                      "corpus " + name + ": feature rows (" +
                          std::to_string(features.rows) +
                          ") != image count (" +
                          std::to_string(image_ids.size()) + ")");
    for (const auto& cap : captions) {
      if (!image_row.count(cap.image_id))
        throw DataError(DataError::Kind::dangling_image,
                        "caption " + cap.caption_id +
                            " references unknown image_id " + cap.image_id);
      if (cap.tokens.empty())
        throw DataError(DataError::Kind::parse,
                        "caption " + cap.caption_id + " has no tokens");
    }
  }

  std::size_t feature_row(const std::string& image_id) const {
    auto it = image_row.find(image_id);
    if (it == image_row.end())
      throw DataError(DataError::Kind::dangling_image,
                      "unknown image_id " + image_id);
    return it->second;
  }

  std::vector<std::string> languages() const {
    std::set<std::string> seen;
    for (const auto& c : captions) seen.insert(c.language);
    return {seen.begin(), seen.end()};
  }

  std::vector<std::size_t> captions_of_language(
      const std::string& language) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < captions.size(); ++i)
      if (captions[i].language == language) out.push_back(i);
    return out;
  }
};

// ---- binary feature file ---------------------------------------------------
// magic "IMGF", u32 version=1, u32 count, u32 dim, count*dim f32 LE row-major,
// then count null-terminated image_id strings.

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& is, const std::string& what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw DataError(DataError::Kind::dimension,
                    "truncated file while reading " + what);
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
         (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
}

inline void write_f32(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32(os, bits);
}

inline float read_f32(std::istream& is, const std::string& what) {
  std::uint32_t bits = read_u32(is, what);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace detail

inline void write_feature_file(const std::string& path,
                               const std::vector<std::string>& image_ids,
                               const Tensor<float>& features) {
  if (features.rows != image_ids.size())
    throw DataError(DataError::Kind::dimension,
                    "feature writer: row count != image id count");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError(DataError::Kind::parse, "cannot open " + path);
  os.write("IMGF", 4);
  detail::write_u32(os, 1);
  detail::write_u32(os, static_cast<std::uint32_t>(features.rows));
  detail::write_u32(os, static_cast<std::uint32_t>(features.cols));
  for (float v : features.data) detail::write_f32(os, v);
  for (const auto& id : image_ids) os.write(id.c_str(), static_cast<std::streamsize>(id.size()) + 1);
}

inline void read_feature_file(const std::string& path,
                              std::vector<std::string>& image_ids,
                              Tensor<float>& features) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError(DataError::Kind::parse, "cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "IMGF", 4) != 0)
    throw DataError(DataError::Kind::magic,
                    "feature file " + path + ": bad magic");
  const std::uint32_t version = detail::read_u32(is, "version");
  if (version != 1)
    throw DataError(DataError::Kind::magic,
                    "feature file " + path + ": unsupported version " +
                        std::to_string(version));
  const std::uint32_t count = detail::read_u32(is, "count");
  const std::uint32_t dim = detail::read_u32(is, "dim");
  features = Tensor<float>(count, dim);
  for (std::size_t i = 0; i < features.size(); ++i)
    features.data[i] = detail::read_f32(is, "feature data");
  image_ids.clear();
  image_ids.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string id;
    if (!std::getline(is, id, '\0'))
      throw DataError(DataError::Kind::dimension,
                      "feature file " + path + ": truncated image ids");
    image_ids.push_back(std::move(id));
  }
}

// ---- captions JSONL --------------------------------------------------------
// {"caption_id","image_id","language","text"}; optional "provenance" for
// records that were synthesized. Tokenization happens here, on load.

inline std::vector<CaptionRecord> read_captions_jsonl(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError(DataError::Kind::parse, "cannot open " + path);
  std::vector<CaptionRecord> out;
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
    for (const char* key : {"caption_id", "image_id", "language", "text"})
      if (!j.contains(key))
        throw DataError(DataError::Kind::parse,
                        path + ":" + std::to_string(lineno) +
                            ": missing field " + key);
    CaptionRecord rec;
    rec.caption_id = j.at("caption_id").get<std::string>();
    rec.image_id = j.at("image_id").get<std::string>();
    rec.language = j.at("language").get<std::string>();
    rec.tokens = tokenize(j.at("text").get<std::string>());
    if (j.contains("provenance"))
      rec.provenance = provenance_from_name(j.at("provenance").get<std::string>());
    if (rec.tokens.empty())
      throw DataError(DataError::Kind::parse,
                      path + ":" + std::to_string(lineno) + ": caption " +
                          rec.caption_id + " tokenizes to nothing");
    out.push_back(std::move(rec));
  }
  return out;
}

inline std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string text;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) text += ' ';
    text += tokens[i];
  }
  return text;
}

inline void write_captions_jsonl(const std::string& path,
                                 const std::vector<CaptionRecord>& records) {
  std::ofstream os(path);
  if (!os) throw DataError(DataError::Kind::parse, "cannot open " + path);
  for (const auto& rec : records) {
    nlohmann::ordered_json j;
    j["caption_id"] = rec.caption_id;
    j["image_id"] = rec.image_id;
    j["language"] = rec.language;
    j["text"] = join_tokens(rec.tokens);
    if (rec.provenance != Provenance::original)
      j["provenance"] = provenance_name(rec.provenance);
    os << j.dump() << '\n';
  }
}

inline CaptionedCorpus load_corpus(const std::string& features_path,
                                   const std::string& captions_path,
                                   const std::string& name = "",
                                   Split split = Split::unspecified) {
  CaptionedCorpus corpus;
  corpus.name = name.empty() ? features_path : name;
  corpus.split = split;
  read_feature_file(features_path, corpus.image_ids, corpus.features);
  corpus.captions = read_captions_jsonl(captions_path);
  corpus.rebuild_indexes();
  corpus.validate();
  return corpus;
}

inline void save_corpus(const CaptionedCorpus& corpus,
                        const std::string& features_path,
                        const std::string& captions_path) {
  write_feature_file(features_path, corpus.image_ids, corpus.features);
  write_captions_jsonl(captions_path, corpus.captions);
}

// ---- translations ----------------------------------------------------------
// JSONL: {"source_caption_id","language","text"}. Each line mirrors the image
// linkage of an existing caption; the new record carries
// provenance=translated.

inline CaptionedCorpus ingest_translations(const CaptionedCorpus& corpus,
                                           const std::string& path,
                                           const std::string& language_tag) {
  std::ifstream is(path);
  if (!is) throw DataError(DataError::Kind::parse, "cannot open " + path);
  CaptionedCorpus out = corpus;
  std::unordered_set<std::string> seen;
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
    for (const char* key : {"source_caption_id", "language", "text"})
      if (!j.contains(key))
        throw DataError(DataError::Kind::parse,
                        path + ":" + std::to_string(lineno) +
                            ": missing field " + key);
    const std::string source_id = j.at("source_caption_id").get<std::string>();
    const std::string lang = j.at("language").get<std::string>();
    if (lang != language_tag)
      throw DataError(DataError::Kind::parse,
                      path + ":" + std::to_string(lineno) + ": language " +
                          lang + " does not match requested tag " +
                          language_tag);
    if (!seen.insert(source_id).second)
      throw DataError(DataError::Kind::duplicate,
                      "duplicate translation for caption " + source_id);
    auto found = corpus.caption_index.find(source_id);
    if (found == corpus.caption_index.end())
      throw DataError(DataError::Kind::unknown_reference,
                      "translation references unknown caption_id " + source_id);
    const CaptionRecord& src = corpus.captions[found->second];
    CaptionRecord rec;
    rec.caption_id = source_id + ".t." + language_tag;
    rec.image_id = src.image_id;
    rec.language = language_tag;
    rec.tokens = tokenize(j.at("text").get<std::string>());
    rec.provenance = Provenance::translated;
    if (rec.tokens.empty())
      throw DataError(DataError::Kind::parse,
                      path + ":" + std::to_string(lineno) +
                          ": translation tokenizes to nothing");
    out.captions.push_back(std::move(rec));
  }
  out.rebuild_indexes();
  out.validate();
  return out;
}

// ---- caption-caption pairs -------------------------------------------------

struct C2CPair {
  std::string caption_l1;
  std::string caption_l2;
  std::string image_id;
};

struct C2CPairSet {
  std::string lang1;
  std::string lang2;
  std::vector<C2CPair> pairs;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
};

// Full cross product of same-image captions in two different languages; a
// corpus without one of the languages yields an empty set.
inline C2CPairSet build_c2c_pairs(const CaptionedCorpus& corpus,
                                  const std::string& lang1,
                                  const std::string& lang2) {
  C2CPairSet set;
  set.lang1 = lang1;
  set.lang2 = lang2;
  std::unordered_map<std::string, std::vector<const CaptionRecord*>> by_image_l1;
  std::unordered_map<std::string, std::vector<const CaptionRecord*>> by_image_l2;
  for (const auto& cap : corpus.captions) {
    if (cap.language == lang1) by_image_l1[cap.image_id].push_back(&cap);
    else if (cap.language == lang2) by_image_l2[cap.image_id].push_back(&cap);
  }
  // Iterate images in corpus order for a deterministic pair list.
  for (const auto& image_id : corpus.image_ids) {
    auto l1 = by_image_l1.find(image_id);
    auto l2 = by_image_l2.find(image_id);
    if (l1 == by_image_l1.end() || l2 == by_image_l2.end()) continue;
    for (const auto* a : l1->second)
      for (const auto* b : l2->second)
        set.pairs.push_back({a->caption_id, b->caption_id, image_id});
  }
  return set;
}

// Vocabulary over one or more corpora, pooled before counting.
inline Vocabulary build_vocabulary(
    const std::vector<const CaptionedCorpus*>& corpora, std::size_t min_count) {
  if (corpora.empty())
    throw std::invalid_argument("build_vocabulary: no corpora");
  std::vector<std::vector<std::string>> streams;
  for (const auto* corpus : corpora)
    for (const auto& cap : corpus->captions) streams.push_back(cap.tokens);
  if (streams.empty()) streams.push_back({});
  return Vocabulary::build(streams, min_count);
}

}  // namespace groundrank
