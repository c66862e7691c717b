#pragma once

#include "m2trec/tensor.hpp"

#include <json.hpp>

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace m2trec {

// Label space of one task. Index 0 is the OTHER bucket that absorbs labels
// never observed in training; it is never recommended and never a hit.
class LabelMap {
 public:
  static constexpr int kOther = 0;
  static constexpr std::string_view kOtherLabel = "<other>";

  LabelMap() : LabelMap(std::vector<std::string>{}) {}
  // Observed labels; duplicates are dropped and order is normalized.
  explicit LabelMap(std::vector<std::string> observed);

  int size() const { return static_cast<int>(labels_.size()); }
  int index(std::string_view label) const;  // kOther when unseen
  bool contains(std::string_view label) const { return index(label) != kOther; }
  const std::string& label(int index) const { return labels_.at(static_cast<std::size_t>(index)); }
  const std::vector<std::string>& labels() const { return labels_; }

  nlohmann::json to_json() const;
  static LabelMap from_json(const nlohmann::json& j);

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, int> index_;
};

struct TaskHeadSpec {
  std::string name;
  int output_size = 2;
  double weight = 1.0;
};

template <class T>
struct HeadParams {
  Parameter<T>* weight = nullptr;  // [d_S x d_k]
  Parameter<T>* bias = nullptr;    // [1 x d_k]
};

// Max-subtracted softmax.
template <class T>
RowVector<T> softmax(const RowVector<T>& logits);

template <class T>
RowVector<T> head_forward(const RowVector<T>& session, const HeadParams<T>& head);

inline constexpr double kLogFloor = 1e-12;

// -log(p[target] + 1e-12).
template <class T>
double task_loss(const RowVector<T>& probs, int target_index);

// Sum of weight_k * loss_k; both maps must have the same keys.
double total_loss(const std::map<std::string, double>& per_task,
                  const std::map<std::string, double>& weights);

using ScoredLabel = std::pair<int, double>;

// Top-k labels by probability, descending; ties go to the lower index.
// `exclude` (e.g. the OTHER bucket) is never returned.
template <class T>
std::vector<ScoredLabel> score_items(const RowVector<T>& probs, int k,
                                     std::optional<int> exclude = std::nullopt);

enum class Variant { TRec_id, MuTRec_id, TRec_title, MeTRec, M2TRec };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view s);
inline constexpr Variant kAllVariants[] = {Variant::TRec_id, Variant::MuTRec_id, Variant::TRec_title,
                                           Variant::MeTRec, Variant::M2TRec};

struct VariantConfig {
  bool use_metadata = true;
  bool use_item_id_embedding = false;
  bool multi_task = true;
  bool title_only = false;  // metadata restricted to the title attribute
  int id_embedding_dim = 32;

  // Throws ValidationError unless the flags name exactly one variant.
  Variant variant() const;
};

VariantConfig variant_config(Variant v, int id_embedding_dim = 32);

}  // namespace m2trec
