#pragma once

#include "m2trec/data.hpp"
#include "m2trec/features.hpp"
#include "m2trec/model.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <unistd.h>

namespace fixture {

// Directory removed when the object goes out of scope.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("m2trec_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

inline std::vector<m2trec::AttributeDef> store_schema() {
  using m2trec::AttributeKind;
  return {{"title", AttributeKind::textual},
          {"brand", AttributeKind::categorical},
          {"cat", AttributeKind::categorical},
          {"price", AttributeKind::numerical}};
}

// Small hardware-store catalog used across tests.
inline m2trec::ItemCatalog store_catalog() {
  m2trec::ItemCatalog c(store_schema());
  c.add("a", {"red hammer", "acme", "tools", "3.5"});
  c.add("b", {"blue paint can", "brix", "paint", "12"});
  c.add("c", {"green hammer heavy", "acme", "tools", "7"});
  c.add("d", {"paint roller", "rolo", "paint", "2"});
  c.add("e", {"wood saw", "acme", "tools", "9"});
  c.add("f", {"white paint", "brix", "paint", "15"});
  return c;
}

inline m2trec::FeatureSchema store_feature_schema(m2trec::Pooling pooling = m2trec::Pooling::mean) {
  using m2trec::AttributeKind;
  m2trec::FeatureSchema s;
  s.attributes = {{"title", AttributeKind::textual, 40, 6, pooling, false},
                  {"brand", AttributeKind::categorical, 0, 4, m2trec::Pooling::mean, false},
                  {"cat", AttributeKind::categorical, 0, 3, m2trec::Pooling::mean, false},
                  {"price", AttributeKind::numerical, 0, 0, m2trec::Pooling::mean, true}};
  return s;
}

inline m2trec::FeatureSpace store_space(const m2trec::ItemCatalog& catalog,
                                        m2trec::Pooling pooling = m2trec::Pooling::mean) {
  std::vector<std::size_t> rows(catalog.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return m2trec::FeatureSpace::fit(catalog, store_feature_schema(pooling), rows);
}

inline m2trec::TransformerConfig tiny_transformer(double dropout = 0.0) {
  m2trec::TransformerConfig t;
  t.num_layers = 1;
  t.num_heads = 2;
  t.model_dim = 8;
  t.ffn_hidden = 12;
  t.max_seq_len = 10;
  t.dropout = dropout;
  return t;
}

// Store catalog encoded with a fitted feature space, plus labelled prefixes
// for the item and "cat" tasks.
class StoreData {
 public:
  explicit StoreData(m2trec::Pooling pooling = m2trec::Pooling::mean)
      : catalog(store_catalog()),
        space(store_space(catalog, pooling)),
        items(catalog.ids()),
        cats(std::vector<std::string>{"paint", "tools"}) {
    for (std::size_t i = 0; i < catalog.size(); ++i) encoded.push_back(space.encode(catalog.record(i)));
    const std::vector<std::vector<int>> sessions{{0, 2, 4}, {1, 3}, {3, 5, 1, 0}, {4}, {2, 2, 5}, {0, 1, 2, 3, 4}};
    const std::vector<int> next{1, 5, 2, 0, 3, 5};
    for (std::size_t s = 0; s < sessions.size(); ++s) {
      m2trec::Example ex;
      for (const int i : sessions[s]) ex.prefix.push_back(&encoded[static_cast<std::size_t>(i)]);
      const auto& id = catalog.ids()[static_cast<std::size_t>(next[s])];
      ex.targets = {items.index(id), cats.index(*catalog.value(id, "cat"))};
      ex.future = {items.index(id)};
      ex.tag = "store " + std::to_string(s);
      examples.push_back(std::move(ex));
    }
  }
  StoreData(const StoreData&) = delete;
  StoreData& operator=(const StoreData&) = delete;

  std::vector<const m2trec::Example*> batch() const {
    std::vector<const m2trec::Example*> out;
    for (const auto& e : examples) out.push_back(&e);
    return out;
  }

  std::vector<m2trec::TaskHeadSpec> tasks() const {
    return {{"item", items.size(), 1.0}, {"cat", cats.size(), 1.0}};
  }

  m2trec::ModelSpec spec(double dropout = 0.0) const {
    m2trec::ModelSpec s;
    s.variant = "M2TRec";
    s.features = space.specs();
    s.transformer = tiny_transformer(dropout);
    s.tasks = tasks();
    return s;
  }

  m2trec::ItemCatalog catalog;
  m2trec::FeatureSpace space;
  m2trec::LabelMap items;
  m2trec::LabelMap cats;
  std::vector<m2trec::EncodedItem> encoded;
  std::vector<m2trec::Example> examples;
};

template <class M>
void randomize(M& m, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<typename M::Scalar>(u(rng));
}

}  // namespace fixture
