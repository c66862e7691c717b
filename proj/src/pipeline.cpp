#include "m2trec/pipeline.hpp"

#include "m2trec/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

namespace m2trec {

namespace {

std::int64_t choose_boundary(const RunConfig& config, std::span<const Session> sessions) {
  if (config.split.boundary) return *config.split.boundary;
  std::vector<std::int64_t> ts;
  for (const auto& s : sessions) ts.push_back(s.timestamp);
  std::sort(ts.begin(), ts.end());
  const auto n = ts.size();
  auto idx = static_cast<std::size_t>(std::floor((1.0 - config.split.test_fraction) * static_cast<double>(n)));
  idx = std::clamp<std::size_t>(idx, 1, n - 1);
  return ts[idx];
}

std::vector<TrainingExample> expand(std::span<const Session> sessions, const ItemCatalog& catalog,
                                    std::span<const std::string> tasks, ExampleStats& stats) {
  std::vector<TrainingExample> out;
  for (const auto& s : sessions) {
    auto ex = generate_examples(s, catalog, tasks, &stats);
    std::move(ex.begin(), ex.end(), std::back_inserter(out));
  }
  return out;
}

nlohmann::json example_json(const TrainingExample& ex) {
  return {{"prefix", ex.prefix}, {"targets", ex.targets}, {"future", ex.future}};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

void write_jsonl(const std::filesystem::path& path, std::span<const TrainingExample> examples) {
  std::string text;
  for (const auto& ex : examples) text += example_json(ex).dump() + "\n";
  write_text(path, text);
}

}  // namespace

PreparedData prepare_data(const RunConfig& config) {
  PreparedData data;
  const auto defs = config.schema.attribute_defs();
  data.catalog = load_catalog(config.catalog_path, defs);
  auto load = load_sessions(config.sessions_path, config.min_session_length);
  data.sessions_kept = load.sessions.size();
  data.sessions_dropped = load.dropped;
  if (load.sessions.size() < 3) throw ValidationError("need at least 3 usable sessions");

  auto split = temporal_split(load.sessions, choose_boundary(config, load.sessions));
  if (split.train.size() < 2) throw ValidationError("the split leaves fewer than 2 training sessions");
  if (split.test.empty()) throw ValidationError("the split leaves no test sessions");

  std::vector<std::size_t> order(split.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(config.seed ^ 0x243F6A8885A308D3ull);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  auto n_valid = static_cast<std::size_t>(std::ceil(config.split.valid_fraction * static_cast<double>(order.size())));
  n_valid = std::clamp<std::size_t>(n_valid, 1, order.size() - 1);
  std::vector<bool> is_valid(order.size(), false);
  for (std::size_t i = 0; i < n_valid; ++i) is_valid[order[i]] = true;
  for (std::size_t i = 0; i < split.train.size(); ++i) {
    (is_valid[i] ? data.valid_sessions : data.train_sessions).push_back(std::move(split.train[i]));
  }
  data.test_sessions = std::move(split.test);

  const auto tasks = config.task_names();
  data.train = expand(data.train_sessions, data.catalog, tasks, data.stats);
  data.valid = expand(data.valid_sessions, data.catalog, tasks, data.stats);
  data.test = expand(data.test_sessions, data.catalog, tasks, data.stats);
  data.frequency = build_frequency_index(data.train, config.tail_threshold);

  std::set<std::string> train_items;
  for (const auto& s : data.train_sessions) train_items.insert(s.items.begin(), s.items.end());
  std::vector<std::size_t> fit_rows;
  for (const auto& id : train_items) {
    if (const auto row = data.catalog.index_of(id)) fit_rows.push_back(*row);
  }
  std::sort(fit_rows.begin(), fit_rows.end());
  if (fit_rows.empty()) throw ValidationError("no training item appears in the catalog");
  data.features = FeatureSpace::fit(data.catalog, config.schema, fit_rows);
  data.ids = IdVocabulary(data.catalog.ids());

  for (const auto& task : tasks) {
    std::vector<std::string> observed;
    if (task == kItemTask) {
      observed.assign(train_items.begin(), train_items.end());
    } else {
      const auto col = *data.catalog.attribute_index(task);
      for (const auto row : fit_rows) {
        const auto& v = data.catalog.record(row)[col];
        if (v != kMissing) observed.push_back(v);
      }
    }
    data.labels.emplace_back(std::move(observed));
  }
  return data;
}

nlohmann::json prepare_summary(const RunConfig& config, const PreparedData& data) {
  std::size_t tail_items = 0;
  std::set<std::string> train_items;
  for (const auto& s : data.train_sessions) train_items.insert(s.items.begin(), s.items.end());
  for (const auto& id : train_items) tail_items += data.frequency.is_tail(id) ? 1 : 0;
  std::size_t sparse_test = 0;
  for (const auto& ex : data.test) sparse_test += is_sparse_session(ex, data.frequency, config.sparse_mode) ? 1 : 0;
  const auto fraction = [](std::size_t a, std::size_t b) { return b == 0 ? 0.0 : double(a) / double(b); };
  return {{"config_hash", config.hash},
          {"sessions_kept", data.sessions_kept},
          {"sessions_dropped", data.sessions_dropped},
          {"sessions", {{"train", data.train_sessions.size()},
                        {"valid", data.valid_sessions.size()},
                        {"test", data.test_sessions.size()}}},
          {"examples", {{"train", data.train.size()}, {"valid", data.valid.size()}, {"test", data.test.size()},
                        {"total", data.stats.examples}}},
          {"unknown_targets", data.stats.unknown_targets},
          {"catalog_items", data.catalog.size()},
          {"train_items", train_items.size()},
          {"tail_items", tail_items},
          {"tail_item_fraction", fraction(tail_items, train_items.size())},
          {"sparse_test_fraction", fraction(sparse_test, data.test.size())}};
}

nlohmann::json write_prepared(const RunConfig& config, const PreparedData& data) {
  const auto dir = config.output_dir / "prepared";
  std::filesystem::create_directories(dir);
  write_text(dir / "features.json", data.features.to_json().dump(2) + "\n");

  nlohmann::json stats = nlohmann::json::array();
  for (const auto& spec : data.features.specs()) {
    stats.push_back({{"attribute", spec.name}, {"kind", to_string(spec.kind)},
                     {"vocab_size", spec.vocab_size}, {"dim", spec.width()}});
  }
  write_text(dir / "vocab_stats.json", stats.dump(2) + "\n");

  nlohmann::json labels = nlohmann::json::object();
  const auto tasks = config.task_names();
  for (std::size_t t = 0; t < tasks.size(); ++t) labels[tasks[t]] = data.labels[t].to_json();
  write_text(dir / "labels.json", labels.dump(2) + "\n");

  const nlohmann::json freq = {{"tail_threshold", data.frequency.tail_threshold()},
                               {"total", data.frequency.total()},
                               {"counts", data.frequency.counts()}};
  write_text(dir / "frequency.json", freq.dump(2) + "\n");
  write_jsonl(dir / "train.jsonl", data.train);
  write_jsonl(dir / "valid.jsonl", data.valid);
  write_jsonl(dir / "test.jsonl", data.test);
  auto summary = prepare_summary(config, data);
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  return summary;
}

ExampleSet::ExampleSet(const InputEncoder& inputs, const ItemCatalog& catalog,
                       std::span<const TrainingExample> source, std::span<const std::string> tasks,
                       std::span<const LabelMap> labels, const ItemFrequencyIndex& frequency, SparseMode mode) {
  if (tasks.size() != labels.size() || tasks.empty() || tasks.front() != kItemTask) {
    throw std::invalid_argument("tasks must start with the item task and match the label maps");
  }
  const auto encoded = [&](const std::string& id) -> const EncodedItem* {
    auto it = encoded_.find(id);
    if (it == encoded_.end()) it = encoded_.emplace(id, inputs.encode(catalog, id)).first;
    return &it->second;
  };
  examples_.reserve(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) {
    const auto& src = source[i];
    Example ex;
    for (const auto& id : src.prefix) ex.prefix.push_back(encoded(id));
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      const auto it = src.targets.find(tasks[t]);
      if (it == src.targets.end() || (t > 0 && it->second == kMissing)) {
        ex.targets.push_back(kNoTarget);
      } else {
        ex.targets.push_back(labels[t].index(it->second));
      }
    }
    for (std::size_t f = 0; f < src.future.size(); ++f) {
      const int label = labels[0].index(src.future[f]);
      ex.future.push_back(label == LabelMap::kOther ? -static_cast<int>(f) - 1 : label);
    }
    ex.sparse = is_sparse_session(src, frequency, mode);
    ex.tag = "example " + std::to_string(i);
    examples_.push_back(std::move(ex));
  }
}

const EncodedItem& ExampleSet::item(std::string_view id) const {
  const auto it = encoded_.find(std::string(id));
  if (it == encoded_.end()) throw std::out_of_range("item '" + std::string(id) + "' not in this set");
  return it->second;
}

std::filesystem::path checkpoint_path(const RunConfig& config, Variant variant) {
  return config.output_dir / "checkpoints" / (std::string(to_string(variant)) + ".ckpt");
}

std::filesystem::path train_log_path(const RunConfig& config, Variant variant) {
  return config.output_dir / "logs" / (std::string(to_string(variant)) + ".train.jsonl");
}

TrainedModel train_variant(const RunConfig& config, const PreparedData& data, Variant variant,
                           const LogSink& log) {
  std::vector<int> sizes;
  for (const auto& l : data.labels) sizes.push_back(l.size());
  const auto heads = config.task_heads(sizes);
  auto assembly = build_variant(variant_config(variant, config.id_embedding_dim), data.features, data.ids, heads,
                                config.transformer, config.title_attribute);

  TrainedModel trained{nullptr, std::move(assembly.inputs), {}, {}, {}, {}};
  for (std::size_t t = 0; t < assembly.spec.tasks.size(); ++t) {
    trained.tasks.push_back(assembly.spec.tasks[t].name);
    trained.labels.push_back(data.labels[t]);
  }
  trained.model = std::make_unique<Model<float>>(std::move(assembly.spec), config.seed);

  const ExampleSet train(trained.inputs, data.catalog, data.train, trained.tasks, trained.labels, data.frequency,
                         config.sparse_mode);
  const ExampleSet valid(trained.inputs, data.catalog, data.valid, trained.tasks, trained.labels, data.frequency,
                         config.sparse_mode);
  TrainConfig tc = config.training;
  tc.seed = config.seed ^ 0x9E3779B97F4A7C15ull;
  if (log) {
    log({{"event", "start"},
         {"variant", to_string(variant)},
         {"parameters", trained.model->parameters().scalar_count()},
         {"train_examples", train.examples().size()},
         {"valid_examples", valid.examples().size()}});
  }
  trained.fit = fit(*trained.model, train.examples(), valid.examples(), tc, log);

  nlohmann::json history = nlohmann::json::array();
  for (const auto& r : trained.fit.history) {
    history.push_back({{"epoch", r.epoch}, {"step", r.step}, {"train_loss", r.train_loss}, {"valid_hit", r.valid_hit}});
  }
  nlohmann::json labels = nlohmann::json::array();
  for (const auto& l : trained.labels) labels.push_back(l.to_json());
  trained.metadata = {{"variant", to_string(variant)},
                      {"config", config.raw},
                      {"config_hash", config.hash},
                      {"catalog_path", std::filesystem::absolute(config.catalog_path).string()},
                      {"inputs", trained.inputs.to_json()},
                      {"tasks", trained.tasks},
                      {"labels", labels},
                      {"history", history},
                      {"best_epoch", trained.fit.best_epoch},
                      {"best_valid_hit", trained.fit.best_valid_hit},
                      {"early_stopped", trained.fit.early_stopped}};
  return trained;
}

void save_trained(const TrainedModel& trained, const std::filesystem::path& path) {
  save_checkpoint(*trained.model, path, trained.metadata, trained.fit.steps);
}

TrainedModel load_trained(const std::filesystem::path& path) {
  auto ckpt = load_checkpoint(path);
  try {
    TrainedModel trained{std::move(ckpt.model), InputEncoder::from_json(ckpt.metadata.at("inputs")), {}, {},
                         ckpt.metadata, {}};
    for (const auto& t : trained.model->spec().tasks) trained.tasks.push_back(t.name);
    for (const auto& l : ckpt.metadata.at("labels")) trained.labels.push_back(LabelMap::from_json(l));
    if (trained.labels.size() != trained.tasks.size()) throw CorruptCheckpointError("label maps do not match tasks");
    for (std::size_t t = 0; t < trained.tasks.size(); ++t) {
      if (trained.labels[t].size() != trained.model->spec().tasks[t].output_size) {
        throw CheckpointShapeError("label map of task '" + trained.tasks[t] + "' does not match its head");
      }
    }
    trained.fit.steps = ckpt.step;
    return trained;
  } catch (const nlohmann::json::exception& e) {
    throw CorruptCheckpointError("checkpoint " + path.string() + " has malformed metadata: " + e.what());
  }
}

EvalReport evaluate_trained(const TrainedModel& trained, const RunConfig& config, const PreparedData& data) {
  const ExampleSet test(trained.inputs, data.catalog, data.test, trained.tasks, trained.labels, data.frequency,
                        config.sparse_mode);
  return evaluate(*trained.model, test.examples(), trained.tasks, config.eval_k);
}

}  // namespace m2trec
