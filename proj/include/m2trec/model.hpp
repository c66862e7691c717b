#pragma once

#include "m2trec/data.hpp"
#include "m2trec/features.hpp"
#include "m2trec/heads.hpp"
#include "m2trec/tensor.hpp"
#include "m2trec/transformer.hpp"

#include <json.hpp>

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace m2trec {

struct ModelSpec {
  std::string variant = "M2TRec";
  std::vector<FeatureSpec> features;
  TransformerConfig transformer;
  std::vector<TaskHeadSpec> tasks;  // the item task first

  nlohmann::json to_json() const;
  static ModelSpec from_json(const nlohmann::json& j);
};

inline constexpr int kNoTarget = -1;

// One model-ready training or test example.
struct Example {
  std::vector<const EncodedItem*> prefix;
  std::vector<int> targets;  // per task; kNoTarget when the label is unknown
  // Item-task labels of every item after the prefix (target first). Unseen
  // items get distinct negative labels so they count as misses for Recall.
  std::vector<int> future;
  bool sparse = false;
  std::string tag;  // session id and position, for diagnostics
};

template <class T>
struct BatchOutput {
  std::vector<Matrix<T>> probs;     // per task, [batch x d_k]
  double loss = 0.0;                // mean over the batch of the weighted task sum
  std::vector<double> task_loss;    // per task, batch mean (unweighted)
  std::vector<double> example_loss; // per example, weighted task sum
  std::size_t truncated = 0;        // prefixes cut to max_seq_len
};

template <class T>
class Model {
 public:
  struct Cache {
    bool valid = false;
    std::vector<const EncodedItem*> rows;
    std::vector<Segment> segments;
    typename SessionTransformer<T>::Cache transformer;
    Matrix<T> sessions;
    std::vector<Matrix<T>> probs;
    std::vector<std::vector<int>> targets;  // [task][example]
  };

  Model(ModelSpec spec, std::uint64_t seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelSpec& spec() const { return spec_; }
  ParameterRegistry<T>& parameters() { return registry_; }
  const ParameterRegistry<T>& parameters() const { return registry_; }
  const SessionTransformer<T>& transformer() const { return *transformer_; }
  SessionTransformer<T>& transformer() { return *transformer_; }
  std::size_t task_count() const { return spec_.tasks.size(); }
  int input_dim() const { return compound_width(spec_.features); }

  Parameter<T>* table(std::size_t feature) const { return tables_.at(feature); }
  const HeadParams<T>& head(std::size_t task) const { return heads_.at(task); }
  void set_task_weight(std::size_t task, double weight) { spec_.tasks.at(task).weight = weight; }

  RowVector<T> compound_vector(const EncodedItem& item) const;
  RowVector<T> encode_session(std::span<const EncodedItem* const> prefix) const;
  // Per-task probability vectors for one prefix.
  std::vector<RowVector<T>> predict(std::span<const EncodedItem* const> prefix) const;

  // Losses are computed for examples that carry targets. Train mode applies
  // dropout and needs rng when dropout > 0.
  BatchOutput<T> forward(std::span<const Example* const> batch, Mode mode, std::mt19937_64* rng,
                         Cache* cache = nullptr) const;

  // Accumulates d(loss_scale * loss)/d(theta) into the parameter gradients.
  void backward(const Cache& cache, double loss_scale = 1.0);

 private:
  Matrix<T> pack_inputs(std::span<const Example* const> batch, std::vector<const EncodedItem*>& rows,
                        std::vector<Segment>& segments, std::size_t& truncated) const;
  void scatter_input_grads(const std::vector<const EncodedItem*>& rows, const Matrix<T>& d_inputs);

  ModelSpec spec_;
  ParameterRegistry<T> registry_;
  std::vector<Parameter<T>*> tables_;  // null for numerical features
  std::unique_ptr<SessionTransformer<T>> transformer_;
  std::vector<HeadParams<T>> heads_;
};

extern template class Model<float>;
extern template class Model<double>;

// Maps catalog items to model inputs for one variant. The metadata path only
// ever sees attribute records.
class InputEncoder {
 public:
  explicit InputEncoder(FeatureSpace metadata) : source_(std::move(metadata)) {}
  explicit InputEncoder(IdVocabulary ids) : source_(std::move(ids)) {}

  bool uses_item_ids() const { return std::holds_alternative<IdVocabulary>(source_); }
  const FeatureSpace* metadata() const { return std::get_if<FeatureSpace>(&source_); }
  // Unknown items encode as all-MISSING metadata (or the shared unknown ID row).
  EncodedItem encode(const ItemCatalog& catalog, std::string_view item_id) const;

  nlohmann::json to_json() const;
  static InputEncoder from_json(const nlohmann::json& j);

 private:
  std::variant<FeatureSpace, IdVocabulary> source_;
};

struct VariantAssembly {
  ModelSpec spec;
  InputEncoder inputs;
};

// Chooses inputs and heads for a variant. `tasks` holds every configured task
// with the item task first; single-task variants keep only that one.
VariantAssembly build_variant(const VariantConfig& config, const FeatureSpace& metadata,
                              const IdVocabulary& ids, std::span<const TaskHeadSpec> tasks,
                              const TransformerConfig& transformer,
                              std::string_view title_attribute = "title");

// Count of scalars in tensors flagged as item-indexed.
template <class T>
std::size_t item_indexed_scalars(const ParameterRegistry<T>& registry);

}  // namespace m2trec
