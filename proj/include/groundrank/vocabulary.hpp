#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace groundrank {

// Lowercase, split on whitespace, strip leading/trailing ASCII punctuation.
// Bytes outside ASCII pass through untouched.
inline std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&]() {
    std::size_t begin = 0;
    std::size_t end = current.size();
    while (begin < end &&
           std::ispunct(static_cast<unsigned char>(current[begin])))
      ++begin;
    while (end > begin &&
           std::ispunct(static_cast<unsigned char>(current[end - 1])))
      --end;
    if (end > begin) tokens.push_back(current.substr(begin, end - begin));
    current.clear();
  };
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      flush();
    } else {
      current.push_back(static_cast<char>(
          std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  flush();
  return tokens;
}

// Shared across languages: identical word-forms map to the same index, no
// matter which corpus or language tag they came from.
class Vocabulary {
 public:
  static constexpr std::uint32_t kPad = 0;
  static constexpr std::uint32_t kUnk = 1;

  Vocabulary() : index_to_token_{"<pad>", "<unk>"} {
    token_to_index_["<pad>"] = kPad;
    token_to_index_["<unk>"] = kUnk;
  }

  // Pool token counts over all corpora-like token streams, keep tokens with
  // frequency >= min_count, index by frequency descending then lexicographic.
  template <typename TokenStreams>
  static Vocabulary build(const TokenStreams& streams, std::size_t min_count) {
    std::unordered_map<std::string, std::size_t> counts;
    bool saw_any_stream = false;
    for (const auto& stream : streams) {
      saw_any_stream = true;
      for (const auto& tok : stream) ++counts[tok];
    }
    if (!saw_any_stream)
      throw std::invalid_argument("vocabulary: no corpora given");
    std::vector<std::pair<std::string, std::size_t>> kept;
    kept.reserve(counts.size());
    for (auto& kv : counts)
      if (kv.second >= min_count) kept.emplace_back(kv.first, kv.second);
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    Vocabulary v;
    for (auto& kv : kept) v.add(kv.first);
    return v;
  }

  std::uint32_t add(const std::string& token) {
    auto it = token_to_index_.find(token);
    if (it != token_to_index_.end()) return it->second;
    const auto idx = static_cast<std::uint32_t>(index_to_token_.size());
    token_to_index_.emplace(token, idx);
    index_to_token_.push_back(token);
    return idx;
  }

  std::uint32_t lookup(const std::string& token) const {
    auto it = token_to_index_.find(token);
    return it == token_to_index_.end() ? kUnk : it->second;
  }

  bool contains(const std::string& token) const {
    return token_to_index_.count(token) != 0;
  }

  const std::string& token(std::uint32_t index) const {
    return index_to_token_.at(index);
  }

  std::size_t size() const { return index_to_token_.size(); }

  const std::vector<std::string>& tokens() const { return index_to_token_; }

  std::vector<std::uint32_t> encode(
      const std::vector<std::string>& tokens) const {
    std::vector<std::uint32_t> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(lookup(t));
    return ids;
  }

 private:
  std::unordered_map<std::string, std::uint32_t> token_to_index_;
  std::vector<std::string> index_to_token_;
};

}  // namespace groundrank
