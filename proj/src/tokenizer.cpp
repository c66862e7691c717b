#include "m2trec/tokenizer.hpp"

#include "m2trec/errors.hpp"

#include <algorithm>
#include <cctype>
#include <limits>
#include <map>
#include <set>

namespace m2trec {

std::vector<std::string> normalize_words(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  for (const char ch : text) {
    const auto uc = static_cast<unsigned char>(ch);
    if (uc < 0x80 && std::isspace(uc)) {
      if (!current.empty()) words.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(uc < 0x80 ? static_cast<char>(std::tolower(uc)) : ch);
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

std::vector<std::string> utf8_symbols(std::string_view word) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < word.size()) {
    const auto lead = static_cast<unsigned char>(word[i]);
    std::size_t len = 1;
    if ((lead & 0xE0) == 0xC0) {
      len = 2;
    } else if ((lead & 0xF0) == 0xE0) {
      len = 3;
    } else if ((lead & 0xF8) == 0xF0) {
      len = 4;
    }
    if (i + len > word.size()) len = 1;
    for (std::size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(word[i + k]) & 0xC0) != 0x80) {
        len = 1;
        break;
      }
    }
    out.emplace_back(word.substr(i, len));
    i += len;
  }
  return out;
}

BpeModel::BpeModel(std::vector<std::string> alphabet, std::vector<Merge> merges)
    : alphabet_(std::move(alphabet)), merges_(std::move(merges)) {
  auto intern = [this](const std::string& tok) {
    if (token_to_id_.contains(tok)) return;
    token_to_id_.emplace(tok, static_cast<int>(id_to_token_.size()));
    id_to_token_.push_back(tok);
  };
  intern(std::string(kMissingToken));
  intern(std::string(kUnkToken));
  for (const auto& a : alphabet_) intern(a);
  for (const auto& [l, r] : merges_) intern(l + r);
  for (std::size_t r = 0; r < merges_.size(); ++r) {
    merge_rank_.emplace(merges_[r].first + '\x1f' + merges_[r].second, r);
  }
}

int BpeModel::id(std::string_view token) const {
  const auto it = token_to_id_.find(std::string(token));
  return it == token_to_id_.end() ? -1 : it->second;
}

std::vector<int> BpeModel::encode_word(const std::string& word) const {
  // Unknown characters are held as empty symbols, which no merge matches.
  std::vector<std::string> symbols = utf8_symbols(word);
  for (auto& s : symbols) {
    if (!std::binary_search(alphabet_.begin(), alphabet_.end(), s)) s.clear();
  }

  // Applying merges strictly in model order: after merge r, only merges with
  // a later rank are eligible.
  std::size_t applied = 0;  // one past the last applied rank
  while (symbols.size() > 1) {
    std::size_t best = std::numeric_limits<std::size_t>::max();
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
      if (symbols[i].empty() || symbols[i + 1].empty()) continue;
      const auto it = merge_rank_.find(symbols[i] + '\x1f' + symbols[i + 1]);
      if (it != merge_rank_.end() && it->second >= applied && it->second < best) best = it->second;
    }
    if (best == std::numeric_limits<std::size_t>::max()) break;
    const auto& [left, right] = merges_[best];
    std::vector<std::string> next;
    next.reserve(symbols.size());
    for (std::size_t i = 0; i < symbols.size(); ++i) {
      if (i + 1 < symbols.size() && symbols[i] == left && symbols[i + 1] == right) {
        next.push_back(left + right);
        ++i;
      } else {
        next.push_back(std::move(symbols[i]));
      }
    }
    symbols = std::move(next);
    applied = best + 1;
  }

  std::vector<int> ids;
  ids.reserve(symbols.size());
  for (const auto& s : symbols) ids.push_back(s.empty() ? kUnkId : id(s));
  return ids;
}

std::vector<std::vector<int>> BpeModel::encode_words(std::string_view text) const {
  std::vector<std::vector<int>> out;
  for (const auto& w : normalize_words(text)) out.push_back(encode_word(w));
  return out;
}

std::vector<int> BpeModel::encode(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& w : encode_words(text)) ids.insert(ids.end(), w.begin(), w.end());
  if (ids.empty()) ids.push_back(kMissingId);
  return ids;
}

std::string BpeModel::decode(std::span<const int> ids) const {
  std::string out;
  for (const int id : ids) {
    if (id == kMissingId) continue;
    out += token(id);
  }
  return out;
}

std::string BpeModel::decode_words(std::span<const std::vector<int>> words) const {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out.push_back(' ');
    out += decode(w);
  }
  return out;
}

nlohmann::json BpeModel::to_json() const {
  nlohmann::json merges = nlohmann::json::array();
  for (const auto& [l, r] : merges_) merges.push_back({l, r});
  return {
      {"alphabet", alphabet_},
      {"merges", merges},
      {"specials",
       {{"missing", kMissingToken}, {"missing_id", kMissingId}, {"unk", kUnkToken}, {"unk_id", kUnkId}}},
  };
}

BpeModel BpeModel::from_json(const nlohmann::json& j) {
  try {
    auto alphabet = j.at("alphabet").get<std::vector<std::string>>();
    if (!std::is_sorted(alphabet.begin(), alphabet.end())) {
      throw ValidationError("tokenizer alphabet must be sorted");
    }
    std::vector<Merge> merges;
    for (const auto& m : j.at("merges")) {
      merges.emplace_back(m.at(0).get<std::string>(), m.at(1).get<std::string>());
    }
    const auto& specials = j.at("specials");
    if (specials.at("missing_id").get<int>() != kMissingId || specials.at("unk_id").get<int>() != kUnkId) {
      throw ValidationError("tokenizer special ids do not match this build");
    }
    return BpeModel(std::move(alphabet), std::move(merges));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed tokenizer: ") + e.what());
  }
}

BpeModel train_bpe(std::span<const std::string> corpus, int vocab_size) {
  if (corpus.empty()) throw ValidationError("cannot train a tokenizer on an empty corpus");

  std::map<std::string, long> word_counts;
  for (const auto& text : corpus) {
    for (auto& w : normalize_words(text)) ++word_counts[std::move(w)];
  }
  std::vector<std::pair<std::vector<std::string>, long>> words;
  std::set<std::string> alphabet_set;
  for (const auto& [w, c] : word_counts) {
    auto symbols = utf8_symbols(w);
    alphabet_set.insert(symbols.begin(), symbols.end());
    words.emplace_back(std::move(symbols), c);
  }
  std::vector<std::string> alphabet(alphabet_set.begin(), alphabet_set.end());
  const int base = static_cast<int>(alphabet.size()) + 2;
  if (vocab_size <= base) {
    throw ValidationError("vocab_size " + std::to_string(vocab_size) +
                          " must exceed alphabet plus specials (" + std::to_string(base) + ")");
  }

  std::vector<BpeModel::Merge> merges;
  std::set<std::string> vocab(alphabet.begin(), alphabet.end());
  int size = base;
  while (size < vocab_size) {
    std::map<std::pair<std::string, std::string>, long> pairs;
    for (const auto& [symbols, c] : words) {
      for (std::size_t i = 0; i + 1 < symbols.size(); ++i) pairs[{symbols[i], symbols[i + 1]}] += c;
    }
    const std::pair<std::string, std::string>* best = nullptr;
    long best_count = 1;
    for (const auto& [p, c] : pairs) {
      if (c > best_count) {
        best = &p;
        best_count = c;
      }
    }
    if (best == nullptr) break;
    const std::string merged = best->first + best->second;
    for (auto& [symbols, _] : words) {
      std::vector<std::string> next;
      next.reserve(symbols.size());
      for (std::size_t i = 0; i < symbols.size(); ++i) {
        if (i + 1 < symbols.size() && symbols[i] == best->first && symbols[i + 1] == best->second) {
          next.push_back(merged);
          ++i;
        } else {
          next.push_back(std::move(symbols[i]));
        }
      }
      symbols = std::move(next);
    }
    merges.emplace_back(best->first, best->second);
    if (vocab.insert(merged).second) ++size;
  }
  return BpeModel(std::move(alphabet), std::move(merges));
}

}  // namespace m2trec
