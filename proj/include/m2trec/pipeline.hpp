#pragma once

#include "m2trec/checkpoint.hpp"
#include "m2trec/config.hpp"
#include "m2trec/data.hpp"
#include "m2trec/evaluation.hpp"
#include "m2trec/features.hpp"
#include "m2trec/heads.hpp"
#include "m2trec/model.hpp"
#include "m2trec/training.hpp"

#include <json.hpp>

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace m2trec {

// Everything derived from the raw inputs of one run, deterministically.
struct PreparedData {
  ItemCatalog catalog;
  std::size_t sessions_kept = 0;
  std::size_t sessions_dropped = 0;
  std::vector<Session> train_sessions, valid_sessions, test_sessions;
  std::vector<TrainingExample> train, valid, test;
  ExampleStats stats;
  ItemFrequencyIndex frequency;  // training examples only
  FeatureSpace features;         // fitted on training items only
  IdVocabulary ids;              // every catalog item
  std::vector<LabelMap> labels;  // one per configured task
};

PreparedData prepare_data(const RunConfig& config);

// Counts printed by the prepare command.
nlohmann::json prepare_summary(const RunConfig& config, const PreparedData& data);

// Writes tokenizers, vocabulary stats, example files, the frequency index and
// the summary under <output_dir>/prepared. Returns the summary.
nlohmann::json write_prepared(const RunConfig& config, const PreparedData& data);

// Model-ready examples for one input encoder and task list. Owns the encoded
// items the examples point to; moving keeps those pointers valid.
class ExampleSet {
 public:
  ExampleSet(const InputEncoder& inputs, const ItemCatalog& catalog, std::span<const TrainingExample> source,
             std::span<const std::string> tasks, std::span<const LabelMap> labels,
             const ItemFrequencyIndex& frequency, SparseMode mode);
  ExampleSet(ExampleSet&&) noexcept = default;
  ExampleSet& operator=(ExampleSet&&) noexcept = default;

  const std::vector<Example>& examples() const { return examples_; }
  const EncodedItem& item(std::string_view id) const;

 private:
  std::unordered_map<std::string, EncodedItem> encoded_;
  std::vector<Example> examples_;
};

struct TrainedModel {
  std::unique_ptr<Model<float>> model;
  InputEncoder inputs;
  std::vector<std::string> tasks;
  std::vector<LabelMap> labels;  // per model task
  nlohmann::json metadata;
  FitResult fit;  // empty when loaded from disk
};

std::filesystem::path checkpoint_path(const RunConfig& config, Variant variant);
std::filesystem::path train_log_path(const RunConfig& config, Variant variant);

// Builds and fits one variant. The log sink receives one JSON object per event.
TrainedModel train_variant(const RunConfig& config, const PreparedData& data, Variant variant,
                           const LogSink& log = {});

void save_trained(const TrainedModel& trained, const std::filesystem::path& path);
TrainedModel load_trained(const std::filesystem::path& path);

// Test-split report of a trained model.
EvalReport evaluate_trained(const TrainedModel& trained, const RunConfig& config, const PreparedData& data);

}  // namespace m2trec
