#include "oracles.hpp"

#include "m2trec/errors.hpp"
#include "m2trec/tokenizer.hpp"

#include <doctest.h>

#include <random>
#include <set>

using namespace m2trec;

namespace {

// Alphabet size plus the two special tokens.
int base_size(const BpeModel& m) { return static_cast<int>(m.alphabet().size()) + 2; }

std::string random_text(std::mt19937_64& rng, const std::string& letters, int max_words) {
  std::string text;
  const int words = 1 + static_cast<int>(rng() % static_cast<unsigned>(max_words));
  for (int w = 0; w < words; ++w) {
    if (w > 0) text += rng() % 3 == 0 ? "  " : " ";
    const int len = 1 + static_cast<int>(rng() % 7);
    for (int i = 0; i < len; ++i) {
      char c = letters[rng() % letters.size()];
      if (rng() % 4 == 0) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      text.push_back(c);
    }
  }
  return text;
}

std::string normalized(const std::string& text) {
  std::string out;
  for (const auto& w : normalize_words(text)) {
    if (!out.empty()) out.push_back(' ');
    out += w;
  }
  return out;
}

}  // namespace

TEST_CASE("first merge is the most frequent pair") {
  const std::vector<std::string> corpus{"abab", "abab"};
  const auto counts = oracle::pair_counts(corpus);
  std::pair<std::string, std::string> best;
  int best_count = 0;
  for (const auto& [pair, n] : counts) {
    if (n > best_count) {
      best = pair;
      best_count = n;
    }
  }
  REQUIRE(best == std::pair<std::string, std::string>{"a", "b"});

  const auto model = train_bpe(corpus, 2 + 2 + 1);
  REQUIRE(model.merges().size() == 1);
  CHECK(model.merges()[0] == best);
  CHECK(model.size() == 5);
}

TEST_CASE("first merge agrees with brute-force counting on random corpora") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<std::string> corpus;
    for (int i = 0; i < 6; ++i) corpus.push_back(random_text(rng, "abcd", 3));
    std::vector<std::string> words;
    for (const auto& t : corpus) {
      for (const auto& w : normalize_words(t)) words.push_back(w);
    }
    const auto counts = oracle::pair_counts(words);
    std::pair<std::string, std::string> best;
    int best_count = 1;
    for (const auto& [pair, n] : counts) {
      if (n > best_count) {
        best = pair;
        best_count = n;
      }
    }
    std::set<char> letters;
    for (const auto& w : words) letters.insert(w.begin(), w.end());
    const auto model = train_bpe(corpus, static_cast<int>(letters.size()) + 3);
    if (best_count < 2) {
      CHECK(model.merges().empty());
    } else {
      REQUIRE(model.merges().size() == 1);
      CHECK(model.merges()[0] == best);
    }
  }
}

TEST_CASE("a corpus without repeated pairs learns no merges") {
  const std::vector<std::string> corpus{"x"};
  const auto model = train_bpe(corpus, 1000);
  CHECK(model.merges().empty());
  CHECK(model.size() == 3);
}

TEST_CASE("training is deterministic") {
  std::mt19937_64 rng(4);
  std::vector<std::string> corpus;
  for (int i = 0; i < 50; ++i) corpus.push_back(random_text(rng, "abcdefgh", 4));
  const auto a = train_bpe(corpus, 40);
  const auto b = train_bpe(corpus, 40);
  CHECK(a.merges() == b.merges());
  CHECK(a.alphabet() == b.alphabet());
}

TEST_CASE("train_bpe rejects bad inputs") {
  const std::vector<std::string> empty;
  CHECK_THROWS_AS(train_bpe(empty, 100), ValidationError);
  const std::vector<std::string> corpus{"abab"};
  CHECK_THROWS_AS(train_bpe(corpus, 4), ValidationError);
}

TEST_CASE("encode applies merges within each word") {
  const std::vector<std::string> corpus{"abab", "abab"};
  const auto model = train_bpe(corpus, 5);
  const int ab = model.id("ab");
  REQUIRE(ab >= 0);
  CHECK(model.encode("abab") == std::vector<int>{ab, ab});
  CHECK(model.encode("ABAB") == std::vector<int>{ab, ab});
  CHECK(model.encode("ab ba") == std::vector<int>{ab, model.id("b"), model.id("a")});
}

TEST_CASE("empty text encodes to the missing token") {
  const std::vector<std::string> corpus{"abab"};
  const auto model = train_bpe(corpus, 5);
  CHECK(model.encode("") == std::vector<int>{BpeModel::kMissingId});
  CHECK(model.encode("   \t") == std::vector<int>{BpeModel::kMissingId});
}

TEST_CASE("characters outside the alphabet map to the unknown token") {
  const std::vector<std::string> corpus{"abab"};
  const auto model = train_bpe(corpus, 5);
  CHECK(model.encode("aqb") == std::vector<int>{model.id("a"), BpeModel::kUnkId, model.id("b")});
}

TEST_CASE("specials occupy the first ids") {
  const std::vector<std::string> corpus{"hello world"};
  const auto model = train_bpe(corpus, 20);
  CHECK(model.token(BpeModel::kMissingId) == BpeModel::kMissingToken);
  CHECK(model.token(BpeModel::kUnkId) == BpeModel::kUnkToken);
  for (const auto& [l, r] : model.merges()) CHECK(model.id(l + r) >= 0);
}

TEST_CASE("decode reproduces normalized covered text") {
  std::mt19937_64 rng(8);
  std::vector<std::string> corpus;
  for (int i = 0; i < 80; ++i) corpus.push_back(random_text(rng, "abcdefghij", 5));
  const auto model = train_bpe(corpus, 60);
  for (int i = 0; i < 200; ++i) {
    const auto text = random_text(rng, "abcdefghij", 5);
    const auto words = model.encode_words(text);
    CHECK(model.decode_words(words) == normalized(text));
    std::string joined;
    for (const auto& w : normalize_words(text)) joined += w;
    CHECK(model.decode(model.encode(text)) == joined);
  }
}

TEST_CASE("encoding is total, bounded and never longer than the text") {
  std::mt19937_64 rng(12);
  std::vector<std::string> corpus;
  for (int i = 0; i < 60; ++i) corpus.push_back(random_text(rng, "abcdef", 4));
  for (const int requested : {9, 15, 30, 80}) {
    const auto model = train_bpe(corpus, requested);
    CHECK(model.size() <= requested);
    for (int i = 0; i < 100; ++i) {
      const auto text = random_text(rng, "abcdefxyz", 4);
      const auto ids = model.encode(text);
      std::size_t chars = 0;
      for (const auto& w : normalize_words(text)) chars += w.size();
      CHECK(ids.size() <= chars);
      for (const int id : ids) {
        CHECK(id >= 0);
        CHECK(id < model.size());
      }
      CHECK(model.encode(text) == ids);
    }
  }
}

TEST_CASE("vocabulary grows to the requested size when pairs allow") {
  std::mt19937_64 rng(2);
  std::vector<std::string> corpus;
  for (int i = 0; i < 200; ++i) corpus.push_back(random_text(rng, "abcdefgh", 6));
  const auto model = train_bpe(corpus, 50);
  CHECK(model.size() == 50);
  CHECK(base_size(model) == 10);
}

TEST_CASE("multi-byte characters are single symbols") {
  CHECK(utf8_symbols("caf\xC3\xA9") == std::vector<std::string>{"c", "a", "f", "\xC3\xA9"});
  const std::vector<std::string> corpus{"caf\xC3\xA9 caf\xC3\xA9"};
  const auto model = train_bpe(corpus, 7);
  CHECK(model.alphabet().size() == 4);
}

TEST_CASE("the JSON form round-trips") {
  std::mt19937_64 rng(31);
  std::vector<std::string> corpus;
  for (int i = 0; i < 40; ++i) corpus.push_back(random_text(rng, "abcdefg", 4));
  const auto model = train_bpe(corpus, 35);
  const auto j = model.to_json();
  CHECK(j.contains("alphabet"));
  CHECK(j.contains("merges"));
  CHECK(j.contains("specials"));
  const auto back = BpeModel::from_json(nlohmann::json::parse(j.dump()));
  CHECK(back.merges() == model.merges());
  CHECK(back.size() == model.size());
  for (int i = 0; i < 50; ++i) {
    const auto text = random_text(rng, "abcdefgq", 4);
    CHECK(back.encode(text) == model.encode(text));
  }
}

TEST_CASE("from_json rejects malformed input") {
  CHECK_THROWS_AS(BpeModel::from_json(nlohmann::json::object()), ValidationError);
  auto j = train_bpe(std::vector<std::string>{"abab"}, 5).to_json();
  j["specials"]["unk_id"] = 7;
  CHECK_THROWS_AS(BpeModel::from_json(j), ValidationError);
}
