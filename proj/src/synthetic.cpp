#include "m2trec/synthetic.hpp"

#include "m2trec/errors.hpp"
#include "m2trec/transformer.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <string>

namespace m2trec {

namespace {

std::size_t pick(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

std::size_t pick_weighted(std::mt19937_64& rng, std::span<const double> weights) {
  double total = 0.0;
  for (const double w : weights) total += w;
  double u = uniform01(rng) * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (u < weights[i]) return i;
    u -= weights[i];
  }
  return weights.size() - 1;
}

// Random lowercase words whose letter multisets are pairwise distinct, so
// that pooled character embeddings cannot collide.
std::vector<std::string> distinct_words(std::size_t n, std::size_t length, std::mt19937_64& rng) {
  std::vector<std::string> out;
  std::set<std::string> bags;
  while (out.size() < n) {
    std::string w;
    for (std::size_t i = 0; i < length; ++i) w += static_cast<char>('a' + pick(rng, 26));
    std::string bag = w;
    std::sort(bag.begin(), bag.end());
    if (bags.insert(bag).second) out.push_back(w);
  }
  return out;
}

std::size_t draw_length(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return lo + pick(rng, hi - lo + 1);
}

}  // namespace

SyntheticCorpus successor_corpus(const SuccessorOptions& o) {
  if (o.items < 2 || o.groups < 2 || o.min_length < 2 || o.max_length < o.min_length) {
    throw ValidationError("invalid successor corpus options");
  }
  std::mt19937_64 rng(o.seed);
  SyntheticCorpus c;
  c.schema = {{"title", AttributeKind::textual}, {"group", AttributeKind::categorical}};
  c.catalog = ItemCatalog(c.schema);
  const auto words = distinct_words(static_cast<std::size_t>(o.items), 6, rng);
  for (int i = 0; i < o.items; ++i) {
    c.catalog.add("i" + std::to_string(i), {words[static_cast<std::size_t>(i)], "g" + std::to_string(i % o.groups)});
  }
  for (std::size_t s = 0; s < o.sessions; ++s) {
    Session session;
    session.session_id = "s" + std::to_string(s);
    session.timestamp = static_cast<std::int64_t>(s);
    auto item = static_cast<int>(pick(rng, static_cast<std::size_t>(o.items)));
    const auto n = draw_length(rng, o.min_length, o.max_length);
    for (std::size_t k = 0; k < n; ++k) {
      session.items.push_back("i" + std::to_string(item));
      item = (item + 1) % o.items;
    }
    c.sessions.push_back(std::move(session));
  }
  return c;
}

SyntheticCorpus category_corpus(const CategoryOptions& o) {
  if (o.l1_categories < 1 || o.leaves_per_l1 < 3 || o.head_items_per_leaf < 1 || o.tail_items_per_leaf < 1 ||
      o.new_items_per_leaf < 0 || o.min_length < 2 || o.max_length < o.min_length) {
    throw ValidationError("invalid category corpus options");
  }
  std::mt19937_64 rng(o.seed);
  SyntheticCorpus c;
  c.schema = {{"title", AttributeKind::textual},
              {"brand", AttributeKind::categorical},
              {"L1", AttributeKind::categorical},
              {"leaf", AttributeKind::categorical},
              {"price", AttributeKind::numerical}};
  c.catalog = ItemCatalog(c.schema);

  const int n_leaves = o.l1_categories * o.leaves_per_l1;
  const auto l1_words = distinct_words(static_cast<std::size_t>(o.l1_categories), 5, rng);
  const auto leaf_words = distinct_words(static_cast<std::size_t>(n_leaves), 5, rng);
  const int per_leaf = o.head_items_per_leaf + o.tail_items_per_leaf + o.new_items_per_leaf;
  const auto item_words = distinct_words(static_cast<std::size_t>(n_leaves * per_leaf), 6, rng);

  struct Leaf {
    std::vector<std::string> head, tail, fresh;
    std::vector<double> head_weights;
    int successors[2] = {0, 0};
  };
  std::vector<Leaf> leaves(static_cast<std::size_t>(n_leaves));
  std::size_t word = 0;
  for (int l = 0; l < n_leaves; ++l) {
    auto& leaf = leaves[static_cast<std::size_t>(l)];
    const int l1 = l / o.leaves_per_l1;
    const int base = l1 * o.leaves_per_l1;
    const int local = l - base;
    const int s1 = (local + 1 + static_cast<int>(pick(rng, static_cast<std::size_t>(o.leaves_per_l1 - 1)))) %
                   o.leaves_per_l1;
    int s2 = s1;
    while (s2 == s1 || s2 == local) s2 = static_cast<int>(pick(rng, static_cast<std::size_t>(o.leaves_per_l1)));
    leaf.successors[0] = base + s1;
    leaf.successors[1] = base + s2;
    for (int k = 0; k < per_leaf; ++k) {
      const std::string id = "p" + std::to_string(l) + "_" + std::to_string(k);
      const bool head = k < o.head_items_per_leaf;
      const bool tail = !head && k < o.head_items_per_leaf + o.tail_items_per_leaf;
      const std::string brand = head ? "brand" + std::to_string(pick(rng, 12)) : "indie" + std::to_string(pick(rng, 12));
      const double price = std::round((5.0 + 95.0 * uniform01(rng)) * 100.0) / 100.0;
      const std::string title = l1_words[static_cast<std::size_t>(l1)] + " " + leaf_words[static_cast<std::size_t>(l)] +
                                " " + item_words[word++];
      c.catalog.add(id, {title, brand, "c" + std::to_string(l1), "c" + std::to_string(l1) + "." + std::to_string(local),
                         std::to_string(price)});
      if (head) {
        leaf.head.push_back(id);
        leaf.head_weights.push_back(1.0 / std::pow(static_cast<double>(k) + 1.0, 0.8));
      } else if (tail) {
        leaf.tail.push_back(id);
      } else {
        leaf.fresh.push_back(id);
      }
    }
  }

  const auto test_start = static_cast<std::size_t>(std::floor((1.0 - o.test_fraction) * static_cast<double>(o.sessions)));
  const double transition[3] = {o.stay_probability, (1.0 - o.stay_probability) * 0.6,
                                (1.0 - o.stay_probability) * 0.4};
  for (std::size_t s = 0; s < o.sessions; ++s) {
    Session session;
    session.session_id = "s" + std::to_string(s);
    session.timestamp = static_cast<std::int64_t>(s);
    const bool niche = uniform01(rng) < o.niche_fraction;
    const bool may_use_new = s >= test_start;
    auto leaf = static_cast<int>(pick(rng, static_cast<std::size_t>(n_leaves)));
    const auto n = draw_length(rng, o.min_length, o.max_length);
    for (std::size_t k = 0; k < n; ++k) {
      const auto& L = leaves[static_cast<std::size_t>(leaf)];
      std::string item;
      if (may_use_new && !L.fresh.empty() && uniform01(rng) < o.new_item_probability) {
        item = L.fresh[pick(rng, L.fresh.size())];
      } else if (niche) {
        item = L.tail[pick(rng, L.tail.size())];
      } else {
        item = L.head[pick_weighted(rng, L.head_weights)];
      }
      session.items.push_back(item);
      const auto step = pick_weighted(rng, transition);
      if (step > 0) leaf = L.successors[step - 1];
    }
    c.sessions.push_back(std::move(session));
  }
  return c;
}

void write_catalog(const std::filesystem::path& path, const ItemCatalog& catalog) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << "item_id";
  for (const auto& a : catalog.schema()) out << '\t' << a.name;
  out << '\n';
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    out << catalog.ids()[i];
    for (const auto& v : catalog.record(i)) out << '\t' << (v == kMissing ? std::string() : v);
    out << '\n';
  }
}

void write_sessions(const std::filesystem::path& path, std::span<const Session> sessions) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& s : sessions) {
    out << nlohmann::json{{"session_id", s.session_id}, {"ts", s.timestamp}, {"items", s.items}}.dump() << '\n';
  }
}

}  // namespace m2trec
