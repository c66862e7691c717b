#include "m2trec/heads.hpp"

#include "m2trec/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace m2trec {

LabelMap::LabelMap(std::vector<std::string> observed) {
  std::set<std::string> unique(observed.begin(), observed.end());
  unique.erase(std::string(kOtherLabel));
  labels_.emplace_back(kOtherLabel);
  labels_.insert(labels_.end(), unique.begin(), unique.end());
  for (std::size_t i = 0; i < labels_.size(); ++i) index_.emplace(labels_[i], static_cast<int>(i));
}

int LabelMap::index(std::string_view label) const {
  const auto it = index_.find(std::string(label));
  return it == index_.end() ? kOther : it->second;
}

nlohmann::json LabelMap::to_json() const {
  return std::vector<std::string>(labels_.begin() + 1, labels_.end());
}

LabelMap LabelMap::from_json(const nlohmann::json& j) { return LabelMap(j.get<std::vector<std::string>>()); }

template <class T>
RowVector<T> softmax(const RowVector<T>& logits) {
  const T m = logits.maxCoeff();
  RowVector<T> e = (logits.array() - m).exp().matrix();
  return e / e.sum();
}

template <class T>
RowVector<T> head_forward(const RowVector<T>& session, const HeadParams<T>& head) {
  if (session.size() != head.weight->value.rows()) {
    throw std::invalid_argument("session encoding width " + std::to_string(session.size()) +
                                " does not match head input " +
                                std::to_string(head.weight->value.rows()));
  }
  return softmax<T>(session * head.weight->value + head.bias->value.row(0));
}

template <class T>
double task_loss(const RowVector<T>& probs, int target_index) {
  if (target_index < 0 || target_index >= probs.size()) {
    throw std::out_of_range("target index " + std::to_string(target_index) + " outside " +
                            std::to_string(probs.size()) + " outputs");
  }
  return -std::log(static_cast<double>(probs(target_index)) + kLogFloor);
}

double total_loss(const std::map<std::string, double>& per_task,
                  const std::map<std::string, double>& weights) {
  if (per_task.size() != weights.size()) throw std::invalid_argument("task/weight key sets differ");
  double total = 0.0;
  for (const auto& [task, loss] : per_task) {
    const auto it = weights.find(task);
    if (it == weights.end()) throw std::invalid_argument("no weight for task '" + task + "'");
    total += it->second * loss;
  }
  return total;
}

template <class T>
std::vector<ScoredLabel> score_items(const RowVector<T>& probs, int k, std::optional<int> exclude) {
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(probs.size()));
  for (int i = 0; i < probs.size(); ++i) {
    if (!exclude || *exclude != i) order.push_back(i);
  }
  const auto take = static_cast<std::size_t>(std::clamp(k, 0, static_cast<int>(order.size())));
  const auto better = [&](int a, int b) {
    return probs(a) > probs(b) || (probs(a) == probs(b) && a < b);
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(), better);
  std::vector<ScoredLabel> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.emplace_back(order[i], static_cast<double>(probs(order[i])));
  return out;
}

template RowVector<float> softmax(const RowVector<float>&);
template RowVector<double> softmax(const RowVector<double>&);
template RowVector<float> head_forward(const RowVector<float>&, const HeadParams<float>&);
template RowVector<double> head_forward(const RowVector<double>&, const HeadParams<double>&);
template double task_loss(const RowVector<float>&, int);
template double task_loss(const RowVector<double>&, int);
template std::vector<ScoredLabel> score_items(const RowVector<float>&, int, std::optional<int>);
template std::vector<ScoredLabel> score_items(const RowVector<double>&, int, std::optional<int>);

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::TRec_id: return "TRec_id";
    case Variant::MuTRec_id: return "MuTRec_id";
    case Variant::TRec_title: return "TRec_title";
    case Variant::MeTRec: return "MeTRec";
    case Variant::M2TRec: return "M2TRec";
  }
  return "M2TRec";
}

Variant parse_variant(std::string_view s) {
  for (const auto v : kAllVariants) {
    if (to_string(v) == s) return v;
  }
  throw ValidationError("unknown variant '" + std::string(s) + "'");
}

Variant VariantConfig::variant() const {
  if (use_item_id_embedding && use_metadata) {
    throw ValidationError("a variant cannot use both item-ID embeddings and metadata");
  }
  if (!use_item_id_embedding && !use_metadata) throw ValidationError("a variant needs some input feature");
  if (use_item_id_embedding) {
    if (title_only) throw ValidationError("title_only applies to metadata variants only");
    if (id_embedding_dim < 1) throw ValidationError("id_embedding_dim must be positive");
    return multi_task ? Variant::MuTRec_id : Variant::TRec_id;
  }
  if (title_only) {
    if (multi_task) throw ValidationError("the title-only variant is single-task");
    return Variant::TRec_title;
  }
  return multi_task ? Variant::M2TRec : Variant::MeTRec;
}

VariantConfig variant_config(Variant v, int id_embedding_dim) {
  VariantConfig c;
  c.id_embedding_dim = id_embedding_dim;
  switch (v) {
    case Variant::TRec_id: c = {false, true, false, false, id_embedding_dim}; break;
    case Variant::MuTRec_id: c = {false, true, true, false, id_embedding_dim}; break;
    case Variant::TRec_title: c = {true, false, false, true, id_embedding_dim}; break;
    case Variant::MeTRec: c = {true, false, false, false, id_embedding_dim}; break;
    case Variant::M2TRec: c = {true, false, true, false, id_embedding_dim}; break;
  }
  return c;
}

}  // namespace m2trec
