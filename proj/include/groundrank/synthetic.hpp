#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "groundrank/corpus.hpp"
#include "groundrank/rng.hpp"
#include "groundrank/tensor.hpp"

namespace groundrank {

// Desk-scale stand-in for a real captioned-image corpus pair. Each image is
// assigned a latent concept; its feature vector is the concept embedding plus
// Gaussian noise, and its captions are a language-specific concept word plus
// sampled distractor tokens. Ground-truth concept labels stay on the corpora
// for oracle checks.
struct SyntheticSpec {
  std::size_t concepts{50};
  std::size_t images{500};                     // per generated split
  std::size_t captions_per_image_per_language{2};
  double noise_sigma{0.1};
  std::uint64_t seed{1};
  std::size_t feature_dim{64};
  std::size_t distractor_pool{30};
  std::size_t distractors_per_caption{2};
  std::string lang1{"en"};
  std::string lang2{"de"};
  std::size_t val_images{0};       // 0 -> same as images
  std::size_t test_images{0};      // 0 -> same as images
  std::size_t disjoint_images{0};  // 0 -> same as images

  void validate() const {
    if (concepts == 0 || images == 0 || captions_per_image_per_language == 0)
      throw std::invalid_argument(
          "synthetic spec: concepts, images and captions must be positive");
    if (concepts > images)
      throw std::invalid_argument(
          "synthetic spec: concepts must not exceed images");
    if (feature_dim == 0)
      throw std::invalid_argument("synthetic spec: feature_dim must be positive");
    if (noise_sigma < 0)
      throw std::invalid_argument("synthetic spec: negative noise");
    if (lang1 == lang2)
      throw std::invalid_argument("synthetic spec: languages must differ");
  }
};

struct SyntheticBundle {
  CaptionedCorpus aligned_train, aligned_val, aligned_test;
  CaptionedCorpus disjoint_train;
  nlohmann::ordered_json manifest;
};

namespace detail {

// Unit-norm concept latents; a function of the base seed only, so every split
// lives in the same concept space.
inline std::vector<std::vector<float>> concept_latents(const SyntheticSpec& spec) {
  RandomStream rng(RandomStream::mix(spec.seed, 0xC0CEBA5Eu));
  std::vector<std::vector<float>> latents(spec.concepts);
  for (auto& latent : latents) {
    latent.resize(spec.feature_dim);
    double sq = 0.0;
    for (auto& v : latent) {
      v = static_cast<float>(rng.normal());
      sq += double(v) * double(v);
    }
    const float norm = static_cast<float>(std::sqrt(sq));
    if (norm > 0)
      for (auto& v : latent) v /= norm;
  }
  return latents;
}

inline CaptionedCorpus synthetic_split(
    const SyntheticSpec& spec, const std::vector<std::vector<float>>& latents,
    const std::string& id_prefix, std::size_t image_count,
    const std::vector<std::string>& languages, Split split,
    std::uint64_t stream_salt) {
  RandomStream rng(RandomStream::mix(spec.seed, stream_salt));
  CaptionedCorpus corpus;
  corpus.name = id_prefix;
  corpus.split = split;
  corpus.features = Tensor<float>(image_count, spec.feature_dim);
  for (std::size_t i = 0; i < image_count; ++i) {
    const int concept_id = static_cast<int>(i % spec.concepts);
    const std::string image_id = id_prefix + "_img" + std::to_string(i);
    corpus.image_ids.push_back(image_id);
    corpus.image_concepts[image_id] = concept_id;
    for (std::size_t d = 0; d < spec.feature_dim; ++d)
      corpus.features.at(i, d) =
          latents[concept_id][d] +
          static_cast<float>(spec.noise_sigma * rng.normal());
    for (const auto& lang : languages) {
      for (std::size_t c = 0; c < spec.captions_per_image_per_language; ++c) {
        CaptionRecord rec;
        rec.caption_id = image_id + "." + lang + std::to_string(c);
        rec.image_id = image_id;
        rec.language = lang;
        rec.tokens.push_back(lang + "cls" + std::to_string(concept_id));
        for (std::size_t k = 0; k < spec.distractors_per_caption; ++k)
          rec.tokens.push_back(
              lang + "w" + std::to_string(rng.integer(spec.distractor_pool)));
        corpus.caption_concepts[rec.caption_id] = concept_id;
        corpus.captions.push_back(std::move(rec));
      }
    }
  }
  corpus.rebuild_indexes();
  corpus.validate();
  return corpus;
}

}  // namespace detail

// Aligned corpus (both languages on the same images, with val/test splits in
// the same concept space) plus a disjoint corpus holding fresh images
// captioned only in the second language. Image id sets never overlap.
inline SyntheticBundle generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const auto latents = detail::concept_latents(spec);
  const std::size_t val_n = spec.val_images ? spec.val_images : spec.images;
  const std::size_t test_n = spec.test_images ? spec.test_images : spec.images;
  const std::size_t disjoint_n =
      spec.disjoint_images ? spec.disjoint_images : spec.images;
  const std::vector<std::string> both{spec.lang1, spec.lang2};
  const std::vector<std::string> second{spec.lang2};

  SyntheticBundle bundle;
  bundle.aligned_train = detail::synthetic_split(spec, latents, "altr",
                                                 spec.images, both,
                                                 Split::train, 1);
  bundle.aligned_val =
      detail::synthetic_split(spec, latents, "alva", val_n, both, Split::val, 2);
  bundle.aligned_test = detail::synthetic_split(spec, latents, "alte", test_n,
                                                both, Split::test, 3);
  bundle.disjoint_train = detail::synthetic_split(
      spec, latents, "djtr", disjoint_n, second, Split::train, 4);

  nlohmann::ordered_json manifest;
  manifest["generator"] = {{"concepts", spec.concepts},
                           {"images", spec.images},
                           {"captions_per_image_per_language",
                            spec.captions_per_image_per_language},
                           {"noise_sigma", spec.noise_sigma},
                           {"seed", spec.seed},
                           {"feature_dim", spec.feature_dim},
                           {"distractor_pool", spec.distractor_pool},
                           {"distractors_per_caption",
                            spec.distractors_per_caption},
                           {"lang1", spec.lang1},
                           {"lang2", spec.lang2},
                           {"val_images", val_n},
                           {"test_images", test_n},
                           {"disjoint_images", disjoint_n}};
  auto concept_block = [](const CaptionedCorpus& c) {
    nlohmann::ordered_json j;
    nlohmann::ordered_json images = nlohmann::ordered_json::object();
    for (const auto& id : c.image_ids) images[id] = c.image_concepts.at(id);
    nlohmann::ordered_json captions = nlohmann::ordered_json::object();
    for (const auto& cap : c.captions)
      captions[cap.caption_id] = c.caption_concepts.at(cap.caption_id);
    j["image_concepts"] = images;
    j["caption_concepts"] = captions;
    return j;
  };
  manifest["aligned_train"] = concept_block(bundle.aligned_train);
  manifest["aligned_val"] = concept_block(bundle.aligned_val);
  manifest["aligned_test"] = concept_block(bundle.aligned_test);
  manifest["disjoint_train"] = concept_block(bundle.disjoint_train);
  bundle.manifest = std::move(manifest);
  return bundle;
}

}  // namespace groundrank
