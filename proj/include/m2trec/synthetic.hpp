#pragma once

#include "m2trec/data.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace m2trec {

struct SyntheticCorpus {
  std::vector<AttributeDef> schema;
  ItemCatalog catalog;
  std::vector<Session> sessions;  // timestamps increase with the index
};

// Item i is always followed by item (i + 1) mod V. Every item has a distinct
// one-word title and a group attribute i mod groups.
struct SuccessorOptions {
  int items = 50;
  int groups = 5;
  std::size_t sessions = 5000;
  std::size_t min_length = 2;
  std::size_t max_length = 8;
  std::uint64_t seed = 1;
};

SyntheticCorpus successor_corpus(const SuccessorOptions& options);

// Items grouped into leaf categories under L1 categories. Sessions walk a
// leaf-level Markov chain inside one L1; the item within a leaf follows a
// skewed popularity. Tail items carry niche brands and mostly occur in niche
// sessions made of tail items only. Items marked new appear only in the final
// test_fraction of sessions.
struct CategoryOptions {
  int l1_categories = 6;
  int leaves_per_l1 = 10;
  int head_items_per_leaf = 10;
  int tail_items_per_leaf = 6;
  int new_items_per_leaf = 1;
  std::size_t sessions = 4000;
  std::size_t min_length = 3;
  std::size_t max_length = 8;
  double niche_fraction = 0.05;
  double new_item_probability = 0.02;  // per position, test sessions only
  double stay_probability = 0.4;
  double test_fraction = 0.25;
  std::uint64_t seed = 1;
};

SyntheticCorpus category_corpus(const CategoryOptions& options);

// Writes the catalog as TSV and the sessions as JSON lines, in the formats
// the loaders read.
void write_catalog(const std::filesystem::path& path, const ItemCatalog& catalog);
void write_sessions(const std::filesystem::path& path, std::span<const Session> sessions);

}  // namespace m2trec
