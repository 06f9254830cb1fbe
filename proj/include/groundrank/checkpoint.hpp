#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "groundrank/corpus.hpp"
#include "groundrank/model.hpp"
#include "groundrank/tensor.hpp"
#include "groundrank/vocabulary.hpp"

namespace groundrank {

// Checkpoint layout (all integers little-endian):
//   magic "GRNDRANK" (8 bytes)
//   u32 format version = 1
//   u32 vocabulary size, then per token: u32 length + bytes (index order)
//   u32 tensor count, then per tensor:
//     u32 name length + bytes, u32 rank, u32 extents[rank],
//     f32 data (row-major)
// Round-trips bit-exactly for float models.

inline constexpr char kCheckpointMagic[8] = {'G', 'R', 'N', 'D',
                                             'R', 'A', 'N', 'K'};

template <typename T>
void save_checkpoint(const std::string& path, const ModelParams<T>& model,
                     const Vocabulary& vocab) {
  std::ofstream os(path, std::ios::binary);
  if (!os)
    throw DataError(DataError::Kind::parse, "cannot open " + path);
  os.write(kCheckpointMagic, 8);
  detail::write_u32(os, 1);
  detail::write_u32(os, static_cast<std::uint32_t>(vocab.size()));
  for (const auto& token : vocab.tokens()) {
    detail::write_u32(os, static_cast<std::uint32_t>(token.size()));
    os.write(token.data(), static_cast<std::streamsize>(token.size()));
  }
  const auto named = model.named_tensors();
  detail::write_u32(os, static_cast<std::uint32_t>(named.size()));
  for (const auto& kv : named) {
    detail::write_u32(os, static_cast<std::uint32_t>(kv.first.size()));
    os.write(kv.first.data(), static_cast<std::streamsize>(kv.first.size()));
    detail::write_u32(os, 2);
    detail::write_u32(os, static_cast<std::uint32_t>(kv.second->rows));
    detail::write_u32(os, static_cast<std::uint32_t>(kv.second->cols));
    for (const T& v : kv.second->data)
      detail::write_f32(os, static_cast<float>(v));
  }
  if (!os)
    throw DataError(DataError::Kind::parse, "write failed for " + path);
}

template <typename T>
struct Checkpoint {
  ModelParams<T> model;
  Vocabulary vocab;
};

template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw DataError(DataError::Kind::parse, "cannot open " + path);
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw DataError(DataError::Kind::magic,
                    "checkpoint " + path + ": bad magic");
  const std::uint32_t version = detail::read_u32(is, "checkpoint version");
  if (version != 1)
    throw DataError(DataError::Kind::magic,
                    "checkpoint " + path + ": unsupported version " +
                        std::to_string(version));

  Checkpoint<T> ckpt;
  const std::uint32_t vocab_size = detail::read_u32(is, "vocab size");
  for (std::uint32_t i = 0; i < vocab_size; ++i) {
    const std::uint32_t len = detail::read_u32(is, "token length");
    std::string token(len, '\0');
    if (!is.read(token.data(), len))
      throw DataError(DataError::Kind::dimension,
                      "checkpoint " + path + ": truncated vocabulary");
    if (i < 2) {
      // index 0 and 1 are always <pad> and <unk>
      const char* expected = i == 0 ? "<pad>" : "<unk>";
      if (token != expected)
        throw DataError(DataError::Kind::parse,
                        "checkpoint " + path + ": token " + std::to_string(i) +
                            " is " + token + ", expected " + expected);
    } else {
      ckpt.vocab.add(token);
    }
  }

  const std::uint32_t tensor_count = detail::read_u32(is, "tensor count");
  std::vector<std::pair<std::string, Tensor<T>>> tensors;
  for (std::uint32_t t = 0; t < tensor_count; ++t) {
    const std::uint32_t name_len = detail::read_u32(is, "tensor name length");
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len))
      throw DataError(DataError::Kind::dimension,
                      "checkpoint " + path + ": truncated tensor name");
    const std::uint32_t rank = detail::read_u32(is, "tensor rank");
    if (rank != 2)
      throw DataError(DataError::Kind::dimension,
                      "checkpoint " + path + ": unsupported rank " +
                          std::to_string(rank));
    const std::uint32_t rows = detail::read_u32(is, "tensor rows");
    const std::uint32_t cols = detail::read_u32(is, "tensor cols");
    Tensor<T> tensor(rows, cols);
    for (std::size_t i = 0; i < tensor.size(); ++i)
      tensor.data[i] = static_cast<T>(detail::read_f32(is, "tensor data"));
    tensors.emplace_back(std::move(name), std::move(tensor));
  }

  auto take = [&](const std::string& name) -> Tensor<T> {
    for (auto& kv : tensors)
      if (kv.first == name) return std::move(kv.second);
    throw DataError(DataError::Kind::unknown_reference,
                    "checkpoint " + path + ": missing tensor " + name);
  };
  ModelParams<T>& m = ckpt.model;
  m.embeddings = take("embeddings");
  m.gru_wz = take("gru.wz");
  m.gru_wr = take("gru.wr");
  m.gru_wh = take("gru.wh");
  m.gru_uz = take("gru.uz");
  m.gru_ur = take("gru.ur");
  m.gru_uh = take("gru.uh");
  m.gru_bz = take("gru.bz");
  m.gru_br = take("gru.br");
  m.gru_bh = take("gru.bh");
  m.img_w = take("img.w");
  m.img_b = take("img.b");
  m.dims.vocab = m.embeddings.rows;
  m.dims.embed = m.embeddings.cols;
  m.dims.hidden = m.gru_uz.rows;
  m.dims.feature = m.img_w.rows;
  if (ckpt.vocab.size() != m.dims.vocab)
    throw DataError(DataError::Kind::dimension,
                    "checkpoint " + path + ": vocabulary size " +
                        std::to_string(ckpt.vocab.size()) +
                        " != embedding rows " + std::to_string(m.dims.vocab));
  return ckpt;
}

}  // namespace groundrank
