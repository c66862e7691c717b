#pragma once

#include "m2trec/data.hpp"
#include "m2trec/heads.hpp"
#include "m2trec/model.hpp"

#include <json.hpp>

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace m2trec {

// Labels in descending score order, cut at k.
struct RankedList {
  std::vector<int> labels;
  int k = 20;
};

// Top-k labels of a probability vector, skipping the OTHER bucket.
template <class T>
RankedList rank_labels(const RowVector<T>& probs, int k);

// 1-based rank of target within the first k labels, 0 when absent.
int rank_in(const RankedList& ranked, int target);
bool hit_at_k(const RankedList& ranked, int target);
double mrr_at_k(const RankedList& ranked, int target);
// Fraction of the distinct labels in targets found in the top k. Throws
// std::invalid_argument for an empty target set.
double recall_at_k(const RankedList& ranked, std::span<const int> targets);

struct SliceMetrics {
  std::size_t count = 0;
  double hit = 0.0;
  double mrr = 0.0;
  std::optional<double> recall;      // item task only
  std::size_t recall_count = 0;
  std::size_t recall_skipped = 0;    // examples whose future items were all unseen
};

struct TaskReport {
  std::string task;
  std::optional<SliceMetrics> all;     // absent when the slice is empty
  std::optional<SliceMetrics> sparse;
};

struct EvalReport {
  int k = 20;
  std::vector<TaskReport> tasks;

  const TaskReport* find(std::string_view task) const;
  nlohmann::json to_json() const;
  std::string to_table() const;
};

// Produces the ranked list of one task for one example.
using Ranker = std::function<RankedList(std::size_t example, std::size_t task)>;

// Averages HIT/MRR (and Recall for task 0) over All and Sparse examples.
// Examples whose target for a task is kNoTarget are left out of that task.
EvalReport evaluate_ranked(std::span<const Example> examples, std::span<const std::string> tasks, int k,
                           const Ranker& rank);

EvalReport evaluate(const Model<float>& model, std::span<const Example> examples,
                    std::span<const std::string> tasks, int k = 20, std::size_t batch_size = 256);

// Item-task HIT@k over examples; used for validation during training.
double item_hit_rate(const Model<float>& model, std::span<const Example> examples, int k,
                     std::size_t batch_size = 256);

// Categories of the prefix items, most frequent first, ties by most recent.
// Unknown items and missing values are skipped.
std::vector<std::string> baseline_frequent_category(std::span<const std::string> prefix,
                                                    const ItemCatalog& catalog, std::string_view task,
                                                    std::size_t n);

// Categories of ranked items in rank order, first occurrence kept.
std::vector<std::string> categories_of_ranked_items(std::span<const std::string> ranked_items,
                                                    const ItemCatalog& catalog, std::string_view task,
                                                    std::size_t n);

// Scores the next item with a single-task metadata model, takes the top n
// items and maps them to their categories.
std::vector<std::string> baseline_top_predicted_category(std::span<const EncodedItem* const> prefix,
                                                         const Model<float>& item_model,
                                                         const LabelMap& item_labels,
                                                         const ItemCatalog& catalog, std::string_view task,
                                                         std::size_t n);

// Label indices of category names, OTHER for unknown names.
RankedList to_ranked(std::span<const std::string> categories, const LabelMap& labels, int k);

}  // namespace m2trec
