#include "m2trec/model.hpp"

#include "m2trec/errors.hpp"

#include <cmath>
#include <stdexcept>

namespace m2trec {

nlohmann::json ModelSpec::to_json() const {
  nlohmann::json features_json = nlohmann::json::array();
  for (const auto& f : features) features_json.push_back(m2trec::to_json(f));
  nlohmann::json tasks_json = nlohmann::json::array();
  for (const auto& t : tasks) {
    tasks_json.push_back({{"name", t.name}, {"output_size", t.output_size}, {"weight", t.weight}});
  }
  return {{"variant", variant},
          {"features", features_json},
          {"transformer", transformer.to_json()},
          {"tasks", tasks_json}};
}

ModelSpec ModelSpec::from_json(const nlohmann::json& j) {
  ModelSpec spec;
  try {
    spec.variant = j.at("variant").get<std::string>();
    for (const auto& f : j.at("features")) spec.features.push_back(feature_spec_from_json(f));
    spec.transformer = TransformerConfig::from_json(j.at("transformer"));
    for (const auto& t : j.at("tasks")) {
      spec.tasks.push_back({t.at("name").get<std::string>(), t.at("output_size").get<int>(),
                            t.at("weight").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed model spec: ") + e.what());
  }
  return spec;
}

template <class T>
Model<T>::Model(ModelSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  if (spec_.features.empty()) throw ValidationError("model has no input features");
  if (spec_.tasks.empty()) throw ValidationError("model has no tasks");
  std::mt19937_64 rng(seed);
  for (const auto& f : spec_.features) {
    if (f.kind == AttributeKind::numerical) {
      tables_.push_back(nullptr);
      continue;
    }
    if (f.vocab_size < 1 || f.dim < 1) {
      throw ValidationError("feature '" + f.name + "' needs a positive vocabulary and width");
    }
    auto& table = registry_.add("features." + f.name + ".embedding", f.vocab_size, f.dim, f.item_indexed);
    init_uniform(table.value, 1.0 / std::sqrt(static_cast<double>(f.dim)), rng);
    tables_.push_back(&table);
  }
  transformer_ = std::make_unique<SessionTransformer<T>>(spec_.transformer, input_dim(), registry_, rng);
  const Index d = spec_.transformer.model_dim;
  for (const auto& task : spec_.tasks) {
    if (task.output_size < 2) throw ValidationError("task '" + task.name + "' needs >= 2 outputs");
    HeadParams<T> head;
    head.weight = &registry_.add("heads." + task.name + ".weight", d, task.output_size);
    head.bias = &registry_.add("heads." + task.name + ".bias", 1, task.output_size);
    init_uniform(head.weight->value, std::sqrt(6.0 / static_cast<double>(d + task.output_size)), rng);
    heads_.push_back(head);
  }
}

template <class T>
RowVector<T> Model<T>::compound_vector(const EncodedItem& item) const {
  std::vector<const Matrix<T>*> tables;
  tables.reserve(tables_.size());
  for (const auto* p : tables_) tables.push_back(p != nullptr ? &p->value : nullptr);
  return m2trec::compound_vector<T>(item, spec_.features, tables);
}

template <class T>
Matrix<T> Model<T>::pack_inputs(std::span<const Example* const> batch,
                                std::vector<const EncodedItem*>& rows, std::vector<Segment>& segments,
                                std::size_t& truncated) const {
  const auto max_len = static_cast<std::size_t>(spec_.transformer.max_seq_len);
  rows.clear();
  segments.clear();
  truncated = 0;
  for (const Example* ex : batch) {
    if (ex->prefix.empty()) throw std::invalid_argument("example with an empty prefix");
    std::size_t start = 0;
    if (ex->prefix.size() > max_len) {
      start = ex->prefix.size() - max_len;
      ++truncated;
    }
    segments.push_back({static_cast<Index>(rows.size()), static_cast<Index>(ex->prefix.size() - start)});
    rows.insert(rows.end(), ex->prefix.begin() + static_cast<std::ptrdiff_t>(start), ex->prefix.end());
  }
  Matrix<T> inputs(static_cast<Index>(rows.size()), input_dim());
  for (std::size_t r = 0; r < rows.size(); ++r) inputs.row(static_cast<Index>(r)) = compound_vector(*rows[r]);
  return inputs;
}

template <class T>
BatchOutput<T> Model<T>::forward(std::span<const Example* const> batch, Mode mode, std::mt19937_64* rng,
                                 Cache* cache) const {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  BatchOutput<T> out;
  std::vector<const EncodedItem*> rows;
  std::vector<Segment> segments;
  const Matrix<T> inputs = pack_inputs(batch, rows, segments, out.truncated);
  if (cache != nullptr) cache->valid = false;
  Matrix<T> sessions =
      transformer_->forward(inputs, segments, mode, rng, cache != nullptr ? &cache->transformer : nullptr);

  const auto n_tasks = spec_.tasks.size();
  const auto n = static_cast<Index>(batch.size());
  out.task_loss.assign(n_tasks, 0.0);
  out.example_loss.assign(batch.size(), 0.0);
  std::vector<std::vector<int>> targets(n_tasks, std::vector<int>(batch.size(), kNoTarget));
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& t = batch[b]->targets;
    if (t.empty()) continue;
    if (t.size() != n_tasks) throw std::invalid_argument("example target count does not match tasks");
    for (std::size_t k = 0; k < n_tasks; ++k) targets[k][b] = t[k];
  }

  for (std::size_t k = 0; k < n_tasks; ++k) {
    Matrix<T> logits = sessions * heads_[k].weight->value;
    logits.rowwise() += heads_[k].bias->value.row(0);
    for (Index b = 0; b < n; ++b) logits.row(b) = softmax<T>(logits.row(b));
    const double w = spec_.tasks[k].weight;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const int t = targets[k][b];
      if (t == kNoTarget) continue;
      const double l = task_loss<T>(logits.row(static_cast<Index>(b)), t);
      out.task_loss[k] += l / static_cast<double>(n);
      out.example_loss[b] += w * l;
    }
    out.probs.push_back(std::move(logits));
  }
  for (const double l : out.example_loss) out.loss += l / static_cast<double>(n);

  if (cache != nullptr) {
    cache->rows = std::move(rows);
    cache->segments = std::move(segments);
    cache->sessions = std::move(sessions);
    cache->probs = out.probs;
    cache->targets = std::move(targets);
    cache->valid = true;
  }
  return out;
}

template <class T>
void Model<T>::backward(const Cache& cache, double loss_scale) {
  if (!cache.valid) throw std::logic_error("backward called before forward");
  const Index n = cache.sessions.rows();
  Matrix<T> d_sessions = Matrix<T>::Zero(n, cache.sessions.cols());
  for (std::size_t k = 0; k < spec_.tasks.size(); ++k) {
    const double w = spec_.tasks[k].weight * loss_scale;
    if (w == 0.0) continue;
    const Matrix<T>& probs = cache.probs[k];
    Matrix<T> d_logits = Matrix<T>::Zero(n, probs.cols());
    for (Index b = 0; b < n; ++b) {
      const int t = cache.targets[k][static_cast<std::size_t>(b)];
      if (t == kNoTarget) continue;
      // d/dz of -log(p_t + floor) = p_t / (p_t + floor) * (p - onehot(t))
      const double pt = static_cast<double>(probs(b, t));
      const T factor = static_cast<T>(w / static_cast<double>(n) * pt / (pt + kLogFloor));
      d_logits.row(b) = probs.row(b) * factor;
      d_logits(b, t) -= factor;
    }
    heads_[k].weight->grad.noalias() += cache.sessions.transpose() * d_logits;
    heads_[k].bias->grad.row(0) += d_logits.colwise().sum();
    d_sessions.noalias() += d_logits * heads_[k].weight->value.transpose();
  }
  const Matrix<T> d_inputs = transformer_->backward(d_sessions, cache.segments, cache.transformer);
  scatter_input_grads(cache.rows, d_inputs);
}

template <class T>
void Model<T>::scatter_input_grads(const std::vector<const EncodedItem*>& rows, const Matrix<T>& d_inputs) {
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto row = static_cast<Index>(r);
    Index offset = 0;
    for (std::size_t f = 0; f < spec_.features.size(); ++f) {
      const auto& spec = spec_.features[f];
      if (spec.kind == AttributeKind::numerical) {
        offset += 1;
        continue;
      }
      const auto& ids = rows[r]->slots[f].ids;
      Matrix<T>& grad = tables_[f]->grad;
      const auto g = d_inputs.row(row).segment(offset, spec.dim);
      if (spec.kind == AttributeKind::categorical || ids.size() == 1) {
        grad.row(ids[0]) += g;
      } else if (spec.pooling == Pooling::mean) {
        const T share = T(1) / static_cast<T>(ids.size());
        for (const int id : ids) grad.row(id) += g * share;
      } else {
        const Matrix<T>& table = tables_[f]->value;
        for (Index j = 0; j < spec.dim; ++j) {
          int best = ids[0];
          for (const int id : ids) {
            if (table(id, j) > table(best, j)) best = id;
          }
          grad(best, j) += g(j);
        }
      }
      offset += spec.dim;
    }
  }
}

template <class T>
RowVector<T> Model<T>::encode_session(std::span<const EncodedItem* const> prefix) const {
  Example ex;
  ex.prefix.assign(prefix.begin(), prefix.end());
  const Example* p = &ex;
  std::vector<const EncodedItem*> rows;
  std::vector<Segment> segments;
  std::size_t truncated = 0;
  const Matrix<T> inputs = pack_inputs(std::span<const Example* const>(&p, 1), rows, segments, truncated);
  return transformer_->forward(inputs, segments, Mode::infer, nullptr).row(0);
}

template <class T>
std::vector<RowVector<T>> Model<T>::predict(std::span<const EncodedItem* const> prefix) const {
  const RowVector<T> session = encode_session(prefix);
  std::vector<RowVector<T>> out;
  for (const auto& head : heads_) out.push_back(head_forward<T>(session, head));
  return out;
}

template class Model<float>;
template class Model<double>;

EncodedItem InputEncoder::encode(const ItemCatalog& catalog, std::string_view item_id) const {
  if (const auto* ids = std::get_if<IdVocabulary>(&source_)) return ids->encode(item_id);
  const auto& space = std::get<FeatureSpace>(source_);
  const AttributeRecord* record = catalog.find(item_id);
  return record != nullptr ? space.encode(*record) : space.encode(catalog.missing_record());
}

nlohmann::json InputEncoder::to_json() const {
  if (const auto* ids = std::get_if<IdVocabulary>(&source_)) return {{"kind", "ids"}, {"ids", ids->ids()}};
  return {{"kind", "metadata"}, {"features", std::get<FeatureSpace>(source_).to_json()}};
}

InputEncoder InputEncoder::from_json(const nlohmann::json& j) {
  try {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "ids") return InputEncoder(IdVocabulary(j.at("ids").get<std::vector<std::string>>()));
    if (kind == "metadata") return InputEncoder(FeatureSpace::from_json(j.at("features")));
    throw ValidationError("unknown input encoder kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed input encoder: ") + e.what());
  }
}

VariantAssembly build_variant(const VariantConfig& config, const FeatureSpace& metadata,
                              const IdVocabulary& ids, std::span<const TaskHeadSpec> tasks,
                              const TransformerConfig& transformer, std::string_view title_attribute) {
  const Variant variant = config.variant();
  if (tasks.empty() || tasks.front().name != kItemTask) {
    throw ValidationError("the task list must start with the item task");
  }
  ModelSpec spec;
  spec.variant = std::string(to_string(variant));
  spec.transformer = transformer;
  if (config.multi_task) {
    spec.tasks.assign(tasks.begin(), tasks.end());
  } else {
    spec.tasks.push_back(tasks.front());
  }

  if (config.use_item_id_embedding) {
    spec.features.push_back(ids.spec(config.id_embedding_dim));
    return {std::move(spec), InputEncoder(ids)};
  }
  FeatureSpace inputs = metadata;
  if (config.title_only) {
    const std::string title(title_attribute);
    inputs = metadata.select(std::span<const std::string>(&title, 1));
  }
  spec.features = inputs.specs();
  return {std::move(spec), InputEncoder(std::move(inputs))};
}

template <class T>
std::size_t item_indexed_scalars(const ParameterRegistry<T>& registry) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < registry.count(); ++i) {
    if (registry.at(i).item_indexed) n += static_cast<std::size_t>(registry.at(i).size());
  }
  return n;
}

template std::size_t item_indexed_scalars(const ParameterRegistry<float>&);
template std::size_t item_indexed_scalars(const ParameterRegistry<double>&);

}  // namespace m2trec
