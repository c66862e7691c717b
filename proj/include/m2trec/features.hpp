#pragma once

#include "m2trec/data.hpp"
#include "m2trec/tensor.hpp"
#include "m2trec/tokenizer.hpp"

#include <json.hpp>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace m2trec {

enum class Pooling { mean, max };

std::string_view to_string(Pooling p);
Pooling parse_pooling(std::string_view s);

// Per-attribute encoding options. Zero means "derive it".
struct AttributeSpec {
  std::string name;
  AttributeKind kind = AttributeKind::textual;
  int vocab_size = 0;     // BPE target size for textual attributes (0: 512)
  int embedding_dim = 0;  // 0: default_dim(actual vocabulary size)
  Pooling pooling = Pooling::mean;
  bool standardize = false;  // numerical attributes only
};

struct FeatureSchema {
  std::vector<AttributeSpec> attributes;

  std::vector<AttributeDef> attribute_defs() const;
  const AttributeSpec* find(std::string_view name) const;

  nlohmann::json to_json() const;
  static FeatureSchema from_json(const nlohmann::json& j);
};

inline constexpr int kDefaultTextVocab = 512;

// clamp(round(alpha * vocab_size^(1/4)), dmin, dmax)
int default_dim(int vocab_size, double alpha = 6.0, int dmin = 8, int dmax = 128);

// What the model needs to know about one input feature.
struct FeatureSpec {
  std::string name;
  AttributeKind kind = AttributeKind::textual;
  int vocab_size = 0;  // embedding rows; unused for numerical features
  int dim = 1;
  Pooling pooling = Pooling::mean;
  bool item_indexed = false;

  int width() const { return kind == AttributeKind::numerical ? 1 : dim; }
};

nlohmann::json to_json(const FeatureSpec& f);
FeatureSpec feature_spec_from_json(const nlohmann::json& j);

int compound_width(std::span<const FeatureSpec> features);

struct FeatureValue {
  std::vector<int> ids;  // token or value ids; one id for categorical
  double number = 0.0;   // numerical features
};

// Model-ready encoding of one item: one slot per input feature.
struct EncodedItem {
  std::vector<FeatureValue> slots;

  bool operator==(const EncodedItem& o) const;
};

template <class T>
RowVector<T> embed_categorical(const Matrix<T>& table, int value_id);

template <class T>
RowVector<T> embed_text(const Matrix<T>& table, std::span<const int> token_ids, Pooling pooling);

struct Standardizer {
  double mean = 0.0;
  double stddev = 1.0;

  static Standardizer fit(std::span<const double> values);
  double apply(double v) const { return (v - mean) / stddev; }
};

// One-element feature vector for a numerical attribute.
double embed_numerical(double value, const Standardizer* standardizer = nullptr);

// Concatenates per-feature vectors in feature order. tables[i] is unused
// (may be null) for numerical features.
template <class T>
RowVector<T> compound_vector(const EncodedItem& item, std::span<const FeatureSpec> features,
                             std::span<const Matrix<T>* const> tables);

// Vocabularies and tokenizers fitted for a set of catalog attributes. Encodes
// attribute records only; it never sees item ids.
class FeatureSpace {
 public:
  struct Slot {
    AttributeSpec spec;
    std::size_t column = 0;             // index into the catalog record
    std::optional<BpeModel> tokenizer;  // textual
    std::vector<std::string> values;    // categorical, sorted, specials excluded
    std::optional<Standardizer> standardizer;
    int vocab_size = 0;
    int dim = 1;
  };

  static constexpr int kMissingValueId = 0;
  static constexpr int kUnknownValueId = 1;

  FeatureSpace() = default;

  // Fits tokenizers, categorical vocabularies and numeric statistics on the
  // records at fit_rows.
  static FeatureSpace fit(const ItemCatalog& catalog, const FeatureSchema& schema,
                          std::span<const std::size_t> fit_rows);

  // Keeps the named attributes, in the order given.
  FeatureSpace select(std::span<const std::string> names) const;

  EncodedItem encode(const AttributeRecord& record) const;
  std::vector<FeatureSpec> specs() const;
  const std::vector<Slot>& slots() const { return slots_; }

  nlohmann::json to_json() const;
  static FeatureSpace from_json(const nlohmann::json& j);

 private:
  std::vector<Slot> slots_;
};

// Learned item-ID input used only by the ID-based ablation variants. Row
// `size()` of the table is shared by items outside the catalog.
class IdVocabulary {
 public:
  IdVocabulary() = default;
  explicit IdVocabulary(std::vector<std::string> ids);

  int rows() const { return static_cast<int>(ids_.size()) + 1; }
  int row(std::string_view item_id) const;
  const std::vector<std::string>& ids() const { return ids_; }
  EncodedItem encode(std::string_view item_id) const;
  FeatureSpec spec(int dim) const;

 private:
  std::vector<std::string> ids_;
  std::unordered_map<std::string, int> rows_;
};

}  // namespace m2trec
