#include "m2trec/evaluation.hpp"

#include <algorithm>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace m2trec {

template <class T>
RankedList rank_labels(const RowVector<T>& probs, int k) {
  RankedList out;
  out.k = k;
  for (const auto& [label, p] : score_items(probs, k, LabelMap::kOther)) out.labels.push_back(label);
  return out;
}

template RankedList rank_labels(const RowVector<float>&, int);
template RankedList rank_labels(const RowVector<double>&, int);

int rank_in(const RankedList& ranked, int target) {
  if (ranked.k < 1) throw std::invalid_argument("k must be >= 1");
  if (target < 0 || target == LabelMap::kOther) return 0;
  const auto limit = std::min(ranked.labels.size(), static_cast<std::size_t>(ranked.k));
  for (std::size_t i = 0; i < limit; ++i) {
    if (ranked.labels[i] == target) return static_cast<int>(i) + 1;
  }
  return 0;
}

bool hit_at_k(const RankedList& ranked, int target) { return rank_in(ranked, target) > 0; }

double mrr_at_k(const RankedList& ranked, int target) {
  const int r = rank_in(ranked, target);
  return r > 0 ? 1.0 / r : 0.0;
}

double recall_at_k(const RankedList& ranked, std::span<const int> targets) {
  if (targets.empty()) throw std::invalid_argument("recall needs a non-empty target set");
  const std::set<int> unique(targets.begin(), targets.end());
  std::size_t found = 0;
  for (const int t : unique) found += hit_at_k(ranked, t) ? 1 : 0;
  return static_cast<double>(found) / static_cast<double>(unique.size());
}

const TaskReport* EvalReport::find(std::string_view task) const {
  for (const auto& t : tasks) {
    if (t.task == task) return &t;
  }
  return nullptr;
}

namespace {

struct Accumulator {
  std::size_t count = 0;
  double hit = 0.0;
  double mrr = 0.0;
  std::size_t recall_count = 0;
  double recall = 0.0;
  std::size_t recall_skipped = 0;

  std::optional<SliceMetrics> finish(bool with_recall) const {
    if (count == 0) return std::nullopt;
    SliceMetrics m;
    m.count = count;
    m.hit = hit / static_cast<double>(count);
    m.mrr = mrr / static_cast<double>(count);
    if (with_recall) {
      m.recall_count = recall_count;
      m.recall_skipped = recall_skipped;
      if (recall_count > 0) m.recall = recall / static_cast<double>(recall_count);
    }
    return m;
  }
};

nlohmann::json slice_json(const std::optional<SliceMetrics>& s) {
  if (!s) return nullptr;
  nlohmann::json j = {{"count", s->count}, {"hit", s->hit}, {"mrr", s->mrr}};
  if (s->recall) {
    j["recall"] = *s->recall;
    j["recall_count"] = s->recall_count;
    j["recall_skipped"] = s->recall_skipped;
  }
  return j;
}

std::string cell(const std::optional<SliceMetrics>& s, double SliceMetrics::*field) {
  if (!s) return "-";
  std::ostringstream out;
  out << std::fixed << std::setprecision(4) << (*s).*field;
  return out.str();
}

}  // namespace

EvalReport evaluate_ranked(std::span<const Example> examples, std::span<const std::string> tasks, int k,
                           const Ranker& rank) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  EvalReport report;
  report.k = k;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    Accumulator all, sparse;
    const bool with_recall = t == 0;
    for (std::size_t e = 0; e < examples.size(); ++e) {
      const Example& ex = examples[e];
      if (t >= ex.targets.size()) throw std::invalid_argument("example has fewer targets than tasks");
      const int target = ex.targets[t];
      if (target == kNoTarget) continue;
      const RankedList ranked = rank(e, t);
      const double hit = hit_at_k(ranked, target) ? 1.0 : 0.0;
      const double rr = mrr_at_k(ranked, target);
      std::optional<double> recall;
      if (with_recall && std::any_of(ex.future.begin(), ex.future.end(), [](int l) { return l >= 0; })) {
        recall = recall_at_k(ranked, ex.future);
      }
      for (Accumulator* acc : {&all, ex.sparse ? &sparse : nullptr}) {
        if (acc == nullptr) continue;
        ++acc->count;
        acc->hit += hit;
        acc->mrr += rr;
        if (!with_recall) continue;
        if (recall) {
          ++acc->recall_count;
          acc->recall += *recall;
        } else {
          ++acc->recall_skipped;
        }
      }
    }
    report.tasks.push_back({tasks[t], all.finish(with_recall), sparse.finish(with_recall)});
  }
  return report;
}

namespace {

// Per-example probability rows of every task, computed in inference batches.
std::vector<std::vector<RowVector<float>>> batch_probs(const Model<float>& model,
                                                       std::span<const Example> examples,
                                                       std::size_t batch_size, std::size_t tasks) {
  std::vector<std::vector<RowVector<float>>> out(examples.size());
  std::vector<const Example*> batch;
  for (std::size_t start = 0; start < examples.size(); start += batch_size) {
    const std::size_t end = std::min(examples.size(), start + batch_size);
    batch.clear();
    for (std::size_t i = start; i < end; ++i) batch.push_back(&examples[i]);
    const auto result = model.forward(batch, Mode::infer, nullptr);
    for (std::size_t i = start; i < end; ++i) {
      for (std::size_t t = 0; t < tasks; ++t) {
        out[i].push_back(result.probs[t].row(static_cast<Index>(i - start)));
      }
    }
  }
  return out;
}

}  // namespace

EvalReport evaluate(const Model<float>& model, std::span<const Example> examples,
                    std::span<const std::string> tasks, int k, std::size_t batch_size) {
  if (tasks.size() != model.task_count()) throw std::invalid_argument("task names do not match the model");
  const auto probs = batch_probs(model, examples, std::max<std::size_t>(batch_size, 1), tasks.size());
  return evaluate_ranked(examples, tasks, k,
                         [&](std::size_t e, std::size_t t) { return rank_labels(probs[e][t], k); });
}

double item_hit_rate(const Model<float>& model, std::span<const Example> examples, int k,
                     std::size_t batch_size) {
  if (examples.empty()) throw std::invalid_argument("no examples to score");
  std::size_t hits = 0;
  std::vector<const Example*> batch;
  for (std::size_t start = 0; start < examples.size(); start += batch_size) {
    const std::size_t end = std::min(examples.size(), start + batch_size);
    batch.clear();
    for (std::size_t i = start; i < end; ++i) batch.push_back(&examples[i]);
    const auto result = model.forward(batch, Mode::infer, nullptr);
    for (std::size_t i = start; i < end; ++i) {
      const auto row = static_cast<Index>(i - start);
      hits += hit_at_k(rank_labels<float>(result.probs[0].row(row), k), examples[i].targets.at(0)) ? 1 : 0;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(examples.size());
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j = {{"k", k}, {"tasks", nlohmann::json::array()}};
  for (const auto& t : tasks) {
    j["tasks"].push_back({{"task", t.task}, {"all", slice_json(t.all)}, {"sparse", slice_json(t.sparse)}});
  }
  return j;
}

std::string EvalReport::to_table() const {
  const std::string ks = "@" + std::to_string(k);
  std::ostringstream out;
  out << std::left << std::setw(12) << "task" << std::setw(12) << "metric" << std::right << std::setw(10)
      << "All" << std::setw(10) << "Sparse" << '\n';
  const auto line = [&](const std::string& task, const std::string& metric, const std::string& a,
                        const std::string& s) {
    out << std::left << std::setw(12) << task << std::setw(12) << metric << std::right << std::setw(10) << a
        << std::setw(10) << s << '\n';
  };
  for (const auto& t : tasks) {
    line(t.task, "HIT" + ks, cell(t.all, &SliceMetrics::hit), cell(t.sparse, &SliceMetrics::hit));
    const auto recall = [](const std::optional<SliceMetrics>& s) -> std::string {
      if (!s || !s->recall) return "-";
      std::ostringstream v;
      v << std::fixed << std::setprecision(4) << *s->recall;
      return v.str();
    };
    if (t.all && t.all->recall) line("", "Recall" + ks, recall(t.all), recall(t.sparse));
    line("", "MRR" + ks, cell(t.all, &SliceMetrics::mrr), cell(t.sparse, &SliceMetrics::mrr));
    line("", "count", t.all ? std::to_string(t.all->count) : "0",
         t.sparse ? std::to_string(t.sparse->count) : "0");
  }
  return out.str();
}

std::vector<std::string> baseline_frequent_category(std::span<const std::string> prefix,
                                                    const ItemCatalog& catalog, std::string_view task,
                                                    std::size_t n) {
  struct Tally {
    std::size_t count = 0;
    std::size_t last = 0;
  };
  std::map<std::string, Tally> tally;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    const auto value = catalog.value(prefix[i], task);
    if (!value || *value == kMissing) continue;
    auto& t = tally[*value];
    ++t.count;
    t.last = i;
  }
  std::vector<std::pair<std::string, Tally>> order(tally.begin(), tally.end());
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    return a.second.count != b.second.count ? a.second.count > b.second.count : a.second.last > b.second.last;
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < order.size() && i < n; ++i) out.push_back(order[i].first);
  return out;
}

std::vector<std::string> categories_of_ranked_items(std::span<const std::string> ranked_items,
                                                    const ItemCatalog& catalog, std::string_view task,
                                                    std::size_t n) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < ranked_items.size() && i < n; ++i) {
    const auto value = catalog.value(ranked_items[i], task);
    if (!value || *value == kMissing) continue;
    if (seen.insert(*value).second) out.push_back(*value);
  }
  return out;
}

std::vector<std::string> baseline_top_predicted_category(std::span<const EncodedItem* const> prefix,
                                                         const Model<float>& item_model,
                                                         const LabelMap& item_labels,
                                                         const ItemCatalog& catalog, std::string_view task,
                                                         std::size_t n) {
  const auto probs = item_model.predict(prefix);
  std::vector<std::string> items;
  for (const auto& [label, p] : score_items(probs.at(0), static_cast<int>(n), LabelMap::kOther)) {
    items.push_back(item_labels.label(label));
  }
  return categories_of_ranked_items(items, catalog, task, n);
}

RankedList to_ranked(std::span<const std::string> categories, const LabelMap& labels, int k) {
  RankedList out;
  out.k = k;
  for (const auto& c : categories) {
    const int index = labels.index(c);
    if (index != LabelMap::kOther) out.labels.push_back(index);
  }
  return out;
}

}  // namespace m2trec
