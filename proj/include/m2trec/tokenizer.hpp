#pragma once

#include <json.hpp>

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace m2trec {

// Lowercases ASCII letters and splits on whitespace.
std::vector<std::string> normalize_words(std::string_view text);

// Splits a UTF-8 string into code points (invalid bytes become single symbols).
std::vector<std::string> utf8_symbols(std::string_view word);

// Byte-pair-encoding subword model. Token ids are laid out as
// [MISSING, UNK, alphabet..., merge outputs...] and are contiguous from 0.
class BpeModel {
 public:
  static constexpr int kMissingId = 0;
  static constexpr int kUnkId = 1;
  static constexpr std::string_view kMissingToken = "<missing>";
  static constexpr std::string_view kUnkToken = "<unk>";

  using Merge = std::pair<std::string, std::string>;

  BpeModel() = default;
  BpeModel(std::vector<std::string> alphabet, std::vector<Merge> merges);

  const std::vector<std::string>& alphabet() const { return alphabet_; }
  const std::vector<Merge>& merges() const { return merges_; }
  int size() const { return static_cast<int>(id_to_token_.size()); }
  int id(std::string_view token) const;  // -1 if absent
  const std::string& token(int id) const { return id_to_token_.at(static_cast<std::size_t>(id)); }

  // Empty (or all-whitespace) text encodes to {kMissingId}.
  std::vector<int> encode(std::string_view text) const;
  std::vector<std::vector<int>> encode_words(std::string_view text) const;

  // Concatenates tokens; word boundaries are not recoverable from a flat list.
  std::string decode(std::span<const int> ids) const;
  // Joins words with single spaces.
  std::string decode_words(std::span<const std::vector<int>> words) const;

  nlohmann::json to_json() const;
  static BpeModel from_json(const nlohmann::json& j);

 private:
  std::vector<int> encode_word(const std::string& word) const;

  std::vector<std::string> alphabet_;
  std::vector<Merge> merges_;
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
  // "left\x1fright" -> merge rank; the first occurrence of a pair wins.
  std::unordered_map<std::string, std::size_t> merge_rank_;
};

// Greedy highest-frequency pair merging; equal counts break lexicographically
// on (left, right). Stops at vocab_size tokens or when no pair occurs twice.
BpeModel train_bpe(std::span<const std::string> corpus, int vocab_size);

}  // namespace m2trec
