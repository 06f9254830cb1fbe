#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

#include "groundrank/checkpoint.hpp"
#include "groundrank/model.hpp"
#include "groundrank/rng.hpp"
#include "groundrank/vocabulary.hpp"

using namespace groundrank;

namespace {

// Literal transcription of the pinned GRU step:
//   z = sigmoid(x Wz + h Uz + bz), r = sigmoid(x Wr + h Ur + br),
//   hc = tanh(x Wh + (r.h) Uh + bh), h' = (1-z).h + z.hc
template <typename T>
std::vector<T> gru_step_oracle(const ModelParams<T>& m,
                               const std::vector<T>& x,
                               const std::vector<T>& h) {
  const std::size_t hidden = m.dims.hidden;
  auto affine = [&](const Tensor<T>& w, const Tensor<T>& u, const Tensor<T>& b,
                    const std::vector<T>& rh) {
    std::vector<T> out(hidden, T(0));
    for (std::size_t j = 0; j < hidden; ++j) {
      T acc = b.data[j];
      for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * w.at(i, j);
      for (std::size_t i = 0; i < hidden; ++i) acc += rh[i] * u.at(i, j);
      out[j] = acc;
    }
    return out;
  };
  auto z_pre = affine(m.gru_wz, m.gru_uz, m.gru_bz, h);
  auto r_pre = affine(m.gru_wr, m.gru_ur, m.gru_br, h);
  std::vector<T> z(hidden), r(hidden);
  for (std::size_t j = 0; j < hidden; ++j) {
    z[j] = T(1) / (T(1) + std::exp(-z_pre[j]));
    r[j] = T(1) / (T(1) + std::exp(-r_pre[j]));
  }
  std::vector<T> rh(hidden);
  for (std::size_t j = 0; j < hidden; ++j) rh[j] = r[j] * h[j];
  auto hc_pre = affine(m.gru_wh, m.gru_uh, m.gru_bh, rh);
  std::vector<T> out(hidden);
  for (std::size_t j = 0; j < hidden; ++j) {
    const T hc = std::tanh(hc_pre[j]);
    out[j] = (T(1) - z[j]) * h[j] + z[j] * hc;
  }
  return out;
}

template <typename T>
std::vector<T> l2_normalized(std::vector<T> v) {
  T sq = T(0);
  for (T x : v) sq += x * x;
  const T norm = std::sqrt(sq);
  if (norm > 0)
    for (T& x : v) x /= norm;
  return v;
}

ModelParams<double> small_model(std::uint64_t seed, std::size_t vocab = 12,
                                std::size_t embed = 5, std::size_t hidden = 7,
                                std::size_t feature = 6) {
  RandomStream rng(seed);
  return init_model<double>({vocab, embed, hidden, feature}, rng);
}

}  // namespace

TEST_CASE("vocabulary construction") {
  SECTION("all tokens kept at min_count 1, distinct indices") {
    std::vector<std::vector<std::string>> streams = {
        {"hund", "hund", "hund"}, {"dog", "dog", "dog"}};
    auto v = Vocabulary::build(streams, 1);
    CHECK(v.contains("hund"));
    CHECK(v.contains("dog"));
    CHECK(v.lookup("hund") != v.lookup("dog"));
  }

  SECTION("identical word-forms from different languages share one index") {
    // "ein" in both a German and a synthetic English caption stream
    std::vector<std::vector<std::string>> streams = {{"ein", "hund"},
                                                     {"ein", "dog"}};
    auto v = Vocabulary::build(streams, 1);
    CHECK(v.size() == 2 + 3);  // specials + {ein, hund, dog}
    // pooled count of "ein" is 2 > 1; frequency-descending puts it first
    CHECK(v.lookup("ein") == 2);
  }

  SECTION("tokens below min_count map to <unk>") {
    std::vector<std::vector<std::string>> streams = {{"rare"}};
    auto v = Vocabulary::build(streams, 2);
    CHECK(v.lookup("rare") == Vocabulary::kUnk);
  }

  SECTION("index order is frequency desc then lexicographic") {
    std::vector<std::vector<std::string>> streams = {
        {"bb", "bb", "aa", "cc", "aa"}};
    auto v = Vocabulary::build(streams, 1);
    // aa:2, bb:2, cc:1 -> aa before bb (lexicographic), cc last
    CHECK(v.lookup("aa") == 2);
    CHECK(v.lookup("bb") == 3);
    CHECK(v.lookup("cc") == 4);
  }

  SECTION("empty corpora rejected") {
    std::vector<std::vector<std::string>> streams;
    CHECK_THROWS(Vocabulary::build(streams, 1));
  }
}

TEST_CASE("tokenization") {
  CHECK(tokenize("Ein Hund! ") == std::vector<std::string>{"ein", "hund"});
  CHECK(tokenize("\"quoted,\" words.") ==
        std::vector<std::string>{"quoted", "words"});
  CHECK(tokenize("  ") == std::vector<std::string>{});
  // interior punctuation survives
  CHECK(tokenize("it's") == std::vector<std::string>{"it's"});
}

TEST_CASE("sentence encoder") {
  SECTION("single timestep matches the oracle formula literally") {
    auto m = small_model(31);
    TokenBatch batch = TokenBatch::from_sequences({{4}});
    auto enc = encode_sentences(m, batch);
    std::vector<double> x(m.embeddings.data.begin() + 4 * m.dims.embed,
                          m.embeddings.data.begin() + 5 * m.dims.embed);
    auto h = gru_step_oracle(m, x, std::vector<double>(m.dims.hidden, 0.0));
    auto expect = l2_normalized(h);
    for (std::size_t j = 0; j < m.dims.hidden; ++j)
      CHECK(enc.vectors.at(0, j) == Catch::Approx(expect[j]).margin(1e-12));
  }

  SECTION("sequence equals repeated single-step oracle") {
    auto m = small_model(32);
    TokenBatch batch = TokenBatch::from_sequences({{5, 7, 2}});
    auto enc = encode_sentences(m, batch);
    std::vector<double> h(m.dims.hidden, 0.0);
    for (std::uint32_t id : {5u, 7u, 2u}) {
      std::vector<double> x(m.embeddings.data.begin() + id * m.dims.embed,
                            m.embeddings.data.begin() + (id + 1) * m.dims.embed);
      h = gru_step_oracle(m, x, h);
    }
    auto expect = l2_normalized(h);
    for (std::size_t j = 0; j < m.dims.hidden; ++j)
      CHECK(enc.vectors.at(0, j) == Catch::Approx(expect[j]).margin(1e-10));
  }

  SECTION("padding never reaches the final state") {
    auto m = small_model(33);
    auto a = encode_sentences(m,
                              TokenBatch::from_sequences({{5, 7, 2}, {1, 1, 1}}));
    // same first sequence, batched next to a longer one so it gets padded
    auto b = encode_sentences(
        m, TokenBatch::from_sequences({{5, 7, 2}, {1, 1, 1, 1, 1}}));
    for (std::size_t j = 0; j < m.dims.hidden; ++j)
      CHECK(a.vectors.at(0, j) ==
            Catch::Approx(b.vectors.at(0, j)).margin(1e-12));
  }

  SECTION("all-zero GRU weights produce the flagged zero embedding") {
    auto m = small_model(34);
    for (auto& kv : m.named_tensors())
      if (kv.first != "embeddings" && kv.first.rfind("img", 0) != 0)
        for (auto& v : kv.second->data) v = 0.0;
    auto enc = encode_sentences(m, TokenBatch::from_sequences({{3, 4}}));
    CHECK(enc.has_zero_rows);
    for (std::size_t j = 0; j < m.dims.hidden; ++j)
      CHECK(enc.vectors.at(0, j) == 0.0);
  }

  SECTION("saturated update gate copies the candidate") {
    auto m = small_model(35);
    for (auto& v : m.gru_bz.data) v = 60.0;  // sigmoid saturates to exactly 1
    auto enc = encode_sentences(m, TokenBatch::from_sequences({{6}}));
    // with z == 1 and h0 == 0 the state is tanh(x Wh + bh), normalized
    std::vector<double> x(m.embeddings.data.begin() + 6 * m.dims.embed,
                          m.embeddings.data.begin() + 7 * m.dims.embed);
    std::vector<double> cand(m.dims.hidden);
    for (std::size_t j = 0; j < m.dims.hidden; ++j) {
      double acc = m.gru_bh.data[j];
      for (std::size_t i = 0; i < m.dims.embed; ++i)
        acc += x[i] * m.gru_wh.at(i, j);
      cand[j] = std::tanh(acc);
    }
    auto expect = l2_normalized(cand);
    for (std::size_t j = 0; j < m.dims.hidden; ++j)
      CHECK(enc.vectors.at(0, j) == Catch::Approx(expect[j]).margin(1e-12));
  }

  SECTION("zero-length sequence rejected") {
    CHECK_THROWS(TokenBatch::from_sequences({{}}));
  }

  SECTION("unit norms and permutation equivariance") {
    auto m = small_model(36);
    RandomStream rng(99);
    std::vector<std::vector<std::uint32_t>> seqs;
    for (int i = 0; i < 6; ++i) {
      std::vector<std::uint32_t> s;
      for (int t = 0; t < 1 + int(rng.integer(4)); ++t)
        s.push_back(std::uint32_t(2 + rng.integer(9)));
      seqs.push_back(s);
    }
    auto enc = encode_sentences(m, TokenBatch::from_sequences(seqs));
    for (std::size_t r = 0; r < enc.vectors.rows; ++r) {
      double sq = 0;
      for (std::size_t c = 0; c < enc.vectors.cols; ++c)
        sq += enc.vectors.at(r, c) * enc.vectors.at(r, c);
      CHECK(std::sqrt(sq) == Catch::Approx(1.0).margin(1e-5));
    }
    // reversed batch gives reversed rows
    std::vector<std::vector<std::uint32_t>> rev(seqs.rbegin(), seqs.rend());
    auto enc_rev = encode_sentences(m, TokenBatch::from_sequences(rev));
    for (std::size_t r = 0; r < enc.vectors.rows; ++r)
      for (std::size_t c = 0; c < enc.vectors.cols; ++c)
        CHECK(enc.vectors.at(r, c) ==
              Catch::Approx(enc_rev.vectors.at(enc.vectors.rows - 1 - r, c))
                  .margin(1e-12));
  }

  SECTION("language tags never reach the encoder") {
    auto m = small_model(37);
    auto en = encode_sentences(m, TokenBatch::from_sequences({{3, 5}}), "en");
    auto de = encode_sentences(m, TokenBatch::from_sequences({{3, 5}}), "de");
    CHECK(en.vectors.data == de.vectors.data);
    CHECK(en.language == "en");
    CHECK(de.language == "de");
  }
}

TEST_CASE("image encoder") {
  SECTION("identity-like projection of a basis vector") {
    auto m = small_model(41);
    for (auto& v : m.img_w.data) v = 0.0;
    for (std::size_t i = 0; i < std::min(m.dims.feature, m.dims.hidden); ++i)
      m.img_w.at(i, i) = 1.0;
    for (auto& v : m.img_b.data) v = 0.0;
    Tensor<double> feat(1, m.dims.feature, 0.0);
    feat.at(0, 2) = 1.0;
    auto enc = encode_images(m, feat);
    for (std::size_t j = 0; j < m.dims.hidden; ++j)
      CHECK(enc.vectors.at(0, j) == (j == 2 ? 1.0 : 0.0));
  }

  SECTION("equal features give equal rows") {
    auto m = small_model(42);
    Tensor<double> feat(3, m.dims.feature);
    RandomStream rng(5);
    for (std::size_t c = 0; c < m.dims.feature; ++c) {
      const double v = rng.uniform(-1, 1);
      for (std::size_t r = 0; r < 3; ++r) feat.at(r, c) = v;
    }
    auto enc = encode_images(m, feat);
    for (std::size_t c = 0; c < m.dims.hidden; ++c) {
      CHECK(enc.vectors.at(0, c) == enc.vectors.at(1, c));
      CHECK(enc.vectors.at(1, c) == enc.vectors.at(2, c));
    }
  }

  SECTION("random case matches a naive affine + normalize oracle") {
    auto m = small_model(43);
    RandomStream rng(6);
    Tensor<double> feat(4, m.dims.feature);
    for (auto& v : feat.data) v = rng.uniform(-1, 1);
    auto enc = encode_images(m, feat);
    for (std::size_t r = 0; r < 4; ++r) {
      std::vector<double> row(m.dims.hidden);
      for (std::size_t j = 0; j < m.dims.hidden; ++j) {
        double acc = m.img_b.data[j];
        for (std::size_t i = 0; i < m.dims.feature; ++i)
          acc += feat.at(r, i) * m.img_w.at(i, j);
        row[j] = acc;
      }
      auto expect = l2_normalized(row);
      for (std::size_t j = 0; j < m.dims.hidden; ++j)
        CHECK(enc.vectors.at(r, j) == Catch::Approx(expect[j]).margin(1e-10));
    }
  }

  SECTION("feature width mismatch rejected") {
    auto m = small_model(44);
    Tensor<double> feat(1, m.dims.feature + 1, 0.0);
    CHECK_THROWS_AS(encode_images(m, feat), ShapeError);
  }
}

TEST_CASE("checkpoint round-trip is bit-exact") {
  Vocabulary vocab;
  vocab.add("ein");
  vocab.add("hund");
  vocab.add("läuft");
  ModelDims dims{vocab.size(), 4, 6, 5};
  RandomStream rng(78);
  ModelParams<float> m = init_model<float>(dims, rng);

  const std::string path = "test_checkpoint.ckpt";
  save_checkpoint(path, m, vocab);
  auto loaded = load_checkpoint<float>(path);

  CHECK(loaded.vocab.size() == vocab.size());
  for (std::uint32_t i = 0; i < vocab.size(); ++i)
    CHECK(loaded.vocab.token(i) == vocab.token(i));
  auto named_a = m.named_tensors();
  auto named_b = loaded.model.named_tensors();
  REQUIRE(named_a.size() == named_b.size());
  for (std::size_t i = 0; i < named_a.size(); ++i) {
    CHECK(named_a[i].first == named_b[i].first);
    CHECK(named_a[i].second->data == named_b[i].second->data);
  }
  CHECK(loaded.model.dims.embed == 4);
  CHECK(loaded.model.dims.hidden == 6);
  CHECK(loaded.model.dims.feature == 5);

  SECTION("bad magic is a distinct error") {
    std::ofstream os("bad_magic.ckpt", std::ios::binary);
    os << "NOTMAGIC" << std::string(64, '\0');
    os.close();
    try {
      load_checkpoint<float>("bad_magic.ckpt");
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(e.kind() == DataError::Kind::magic);
    }
    std::remove("bad_magic.ckpt");
  }
  std::remove(path.c_str());
}
