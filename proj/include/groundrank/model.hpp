#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "groundrank/rng.hpp"
#include "groundrank/tape.hpp"
#include "groundrank/tensor.hpp"
#include "groundrank/vocabulary.hpp"

namespace groundrank {

struct ModelDims {
  std::size_t vocab{2};
  std::size_t embed{300};
  std::size_t hidden{1024};
  std::size_t feature{2048};
};

// Everything Adam updates: shared word embeddings, single-layer GRU, and the
// trainable affine image projection. GRU convention (pinned and oracle
// tested):
//   z  = sigmoid(x Wz + h Uz + bz)
//   r  = sigmoid(x Wr + h Ur + br)
//   hc = tanh(x Wh + (r . h) Uh + bh)
//   h' = (1 - z) . h + z . hc
template <typename T>
struct ModelParams {
  ModelDims dims;

  Tensor<T> embeddings;                    // vocab x embed
  Tensor<T> gru_wz, gru_wr, gru_wh;        // embed x hidden
  Tensor<T> gru_uz, gru_ur, gru_uh;        // hidden x hidden
  Tensor<T> gru_bz, gru_br, gru_bh;        // 1 x hidden
  Tensor<T> img_w;                         // feature x hidden
  Tensor<T> img_b;                         // 1 x hidden

  std::vector<std::pair<std::string, Tensor<T>*>> named_tensors() {
    return {{"embeddings", &embeddings}, {"gru.wz", &gru_wz},
            {"gru.wr", &gru_wr},         {"gru.wh", &gru_wh},
            {"gru.uz", &gru_uz},         {"gru.ur", &gru_ur},
            {"gru.uh", &gru_uh},         {"gru.bz", &gru_bz},
            {"gru.br", &gru_br},         {"gru.bh", &gru_bh},
            {"img.w", &img_w},           {"img.b", &img_b}};
  }

  std::vector<std::pair<std::string, const Tensor<T>*>> named_tensors() const {
    auto mutable_view = const_cast<ModelParams*>(this)->named_tensors();
    std::vector<std::pair<std::string, const Tensor<T>*>> out;
    out.reserve(mutable_view.size());
    for (auto& kv : mutable_view) out.emplace_back(kv.first, kv.second);
    return out;
  }

  bool all_finite() const {
    for (auto& kv : named_tensors())
      if (!kv.second->all_finite()) return false;
    return true;
  }
};

// Embeddings and GRU weights uniform in [-0.1, 0.1]; image projection
// Xavier-uniform; biases zero. All draws come from the given stream in a
// fixed order, so initialization is a pure function of (dims, seed).
template <typename T>
ModelParams<T> init_model(const ModelDims& dims, RandomStream& rng) {
  ModelParams<T> m;
  m.dims = dims;
  auto uniform_tensor = [&rng](std::size_t r, std::size_t c, double lo,
                               double hi) {
    Tensor<T> t(r, c);
    for (auto& v : t.data) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
  };
  m.embeddings = uniform_tensor(dims.vocab, dims.embed, -0.1, 0.1);
  m.gru_wz = uniform_tensor(dims.embed, dims.hidden, -0.1, 0.1);
  m.gru_wr = uniform_tensor(dims.embed, dims.hidden, -0.1, 0.1);
  m.gru_wh = uniform_tensor(dims.embed, dims.hidden, -0.1, 0.1);
  m.gru_uz = uniform_tensor(dims.hidden, dims.hidden, -0.1, 0.1);
  m.gru_ur = uniform_tensor(dims.hidden, dims.hidden, -0.1, 0.1);
  m.gru_uh = uniform_tensor(dims.hidden, dims.hidden, -0.1, 0.1);
  m.gru_bz = Tensor<T>(1, dims.hidden, T(0));
  m.gru_br = Tensor<T>(1, dims.hidden, T(0));
  m.gru_bh = Tensor<T>(1, dims.hidden, T(0));
  const double limit = std::sqrt(6.0 / double(dims.feature + dims.hidden));
  m.img_w = uniform_tensor(dims.feature, dims.hidden, -limit, limit);
  m.img_b = Tensor<T>(1, dims.hidden, T(0));
  return m;
}

// Padded token batch: ids are row-major n x max_len with <pad> after each
// sequence's length. Padded positions never reach the final GRU state.
struct TokenBatch {
  std::size_t rows{0};
  std::size_t max_len{0};
  std::vector<std::uint32_t> ids;      // rows x max_len
  std::vector<std::size_t> lengths;    // per row, >= 1

  static TokenBatch from_sequences(
      const std::vector<std::vector<std::uint32_t>>& sequences) {
    TokenBatch b;
    b.rows = sequences.size();
    for (const auto& s : sequences) {
      if (s.empty())
        throw std::invalid_argument("token batch: zero-length sequence");
      b.max_len = std::max(b.max_len, s.size());
      b.lengths.push_back(s.size());
    }
    b.ids.assign(b.rows * b.max_len, Vocabulary::kPad);
    for (std::size_t r = 0; r < b.rows; ++r)
      for (std::size_t t = 0; t < sequences[r].size(); ++t)
        b.ids[r * b.max_len + t] = sequences[r][t];
    return b;
  }
};

enum class Modality { image, sentence };

template <typename T>
struct EmbeddingBatch {
  Tensor<T> vectors;  // n x hidden, rows unit-norm except the zero-state case
  Modality modality{Modality::sentence};
  std::string language;
  bool has_zero_rows{false};
};

// Tape-resident handles to one registered copy of the parameters.
template <typename T>
struct ParamRefs {
  using Ref = typename Tape<T>::Ref;
  Ref embeddings, wz, wr, wh, uz, ur, uh, bz, br, bh, img_w, img_b;
};

template <typename T>
ParamRefs<T> register_params(Tape<T>& tape, const ModelParams<T>& m) {
  ParamRefs<T> r;
  r.embeddings = tape.parameter(m.embeddings);
  r.wz = tape.parameter(m.gru_wz);
  r.wr = tape.parameter(m.gru_wr);
  r.wh = tape.parameter(m.gru_wh);
  r.uz = tape.parameter(m.gru_uz);
  r.ur = tape.parameter(m.gru_ur);
  r.uh = tape.parameter(m.gru_uh);
  r.bz = tape.parameter(m.gru_bz);
  r.br = tape.parameter(m.gru_br);
  r.bh = tape.parameter(m.gru_bh);
  r.img_w = tape.parameter(m.img_w);
  r.img_b = tape.parameter(m.img_b);
  return r;
}

template <typename T>
std::vector<typename Tape<T>::Ref> param_ref_list(const ParamRefs<T>& r) {
  return {r.embeddings, r.wz, r.wr, r.wh, r.uz, r.ur,
          r.uh,         r.bz, r.br, r.bh, r.img_w, r.img_b};
}

struct SentenceEncodeInfo {
  bool has_zero_rows{false};
};

// Final GRU hidden state per sequence, L2-normalized. Returns the tape ref of
// the n x hidden embedding matrix.
template <typename T>
typename Tape<T>::Ref encode_sentences_on_tape(Tape<T>& tape,
                                               const ParamRefs<T>& p,
                                               const TokenBatch& batch,
                                               SentenceEncodeInfo* info =
                                                   nullptr) {
  using Ref = typename Tape<T>::Ref;
  if (batch.rows == 0)
    throw std::invalid_argument("encode_sentences: empty batch");
  for (std::size_t len : batch.lengths)
    if (len == 0)
      throw std::invalid_argument("encode_sentences: zero-length sequence");

  const std::size_t n = batch.rows;
  const std::size_t hidden = tape.value(p.uz).rows;
  Ref h = tape.constant_fill(n, hidden, T(0));

  for (std::size_t t = 0; t < batch.max_len; ++t) {
    std::vector<std::uint32_t> ids(n);
    for (std::size_t r = 0; r < n; ++r) ids[r] = batch.ids[r * batch.max_len + t];
    Ref x = tape.embedding_lookup(p.embeddings, std::move(ids));

    Ref z = tape.sigmoid(
        tape.add(tape.add(tape.matmul(x, p.wz), tape.matmul(h, p.uz)), p.bz));
    Ref r = tape.sigmoid(
        tape.add(tape.add(tape.matmul(x, p.wr), tape.matmul(h, p.ur)), p.br));
    Ref hc = tape.tanh(tape.add(
        tape.add(tape.matmul(x, p.wh), tape.matmul(tape.mul(r, h), p.uh)),
        p.bh));
    // h' = h + z . (hc - h)  ==  (1 - z) . h + z . hc
    Ref hnew = tape.add(h, tape.mul(z, tape.sub(hc, h)));

    // Rows whose sequence ended keep their previous state.
    Tensor<T> mask(n, hidden, T(0));
    bool any_active = false;
    for (std::size_t r2 = 0; r2 < n; ++r2) {
      if (t < batch.lengths[r2]) {
        any_active = true;
        for (std::size_t c = 0; c < hidden; ++c) mask.at(r2, c) = T(1);
      }
    }
    if (!any_active) break;
    Ref m = tape.constant(mask);
    h = tape.add(h, tape.mul(m, tape.sub(hnew, h)));
  }

  if (info) {
    info->has_zero_rows = false;
    const Tensor<T>& hv = tape.value(h);
    for (std::size_t r = 0; r < hv.rows && !info->has_zero_rows; ++r) {
      T sq = T(0);
      for (std::size_t c = 0; c < hv.cols; ++c) sq += hv.at(r, c) * hv.at(r, c);
      if (std::sqrt(sq) < std::numeric_limits<T>::min())
        info->has_zero_rows = true;
    }
  }
  return tape.l2_normalize_rows(h);
}

// Row i = l2-normalize(features_i * W_I + b). Features stay frozen; only the
// projection trains.
template <typename T>
typename Tape<T>::Ref encode_images_on_tape(Tape<T>& tape,
                                            const ParamRefs<T>& p,
                                            const Tensor<T>& features) {
  const Tensor<T>& w = tape.value(p.img_w);
  if (features.cols != w.rows)
    throw ShapeError("encode_images", features.shape(), w.shape());
  auto f = tape.constant(features);
  return tape.l2_normalize_rows(tape.add(tape.matmul(f, p.img_w), p.img_b));
}

// Convenience non-recording forward passes for evaluation and pseudopairing.
template <typename T>
EmbeddingBatch<T> encode_sentences(const ModelParams<T>& m,
                                   const TokenBatch& batch,
                                   const std::string& language = "") {
  Tape<T> tape(/*recording=*/false);
  auto refs = register_params(tape, m);
  SentenceEncodeInfo info;
  auto out = encode_sentences_on_tape(tape, refs, batch, &info);
  EmbeddingBatch<T> e;
  e.vectors = tape.value(out);
  e.modality = Modality::sentence;
  e.language = language;
  e.has_zero_rows = info.has_zero_rows;
  return e;
}

template <typename T>
EmbeddingBatch<T> encode_images(const ModelParams<T>& m,
                                const Tensor<T>& features) {
  Tape<T> tape(/*recording=*/false);
  auto refs = register_params(tape, m);
  auto out = encode_images_on_tape(tape, refs, features);
  EmbeddingBatch<T> e;
  e.vectors = tape.value(out);
  e.modality = Modality::image;
  return e;
}

}  // namespace groundrank
