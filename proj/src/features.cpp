#include "m2trec/features.hpp"

#include "m2trec/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>
#include <stdexcept>

namespace m2trec {

std::string_view to_string(Pooling p) { return p == Pooling::max ? "max" : "mean"; }

Pooling parse_pooling(std::string_view s) {
  if (s == "mean") return Pooling::mean;
  if (s == "max") return Pooling::max;
  throw ValidationError("unknown pooling mode '" + std::string(s) + "'");
}

std::vector<AttributeDef> FeatureSchema::attribute_defs() const {
  std::vector<AttributeDef> out;
  for (const auto& a : attributes) out.push_back({a.name, a.kind});
  return out;
}

const AttributeSpec* FeatureSchema::find(std::string_view name) const {
  for (const auto& a : attributes) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

nlohmann::json FeatureSchema::to_json() const {
  nlohmann::json attrs = nlohmann::json::array();
  for (const auto& a : attributes) {
    attrs.push_back({{"name", a.name},
                     {"kind", to_string(a.kind)},
                     {"vocab_size", a.vocab_size},
                     {"embedding_dim", a.embedding_dim},
                     {"pooling", to_string(a.pooling)},
                     {"standardize", a.standardize}});
  }
  return {{"attributes", attrs}};
}

FeatureSchema FeatureSchema::from_json(const nlohmann::json& j) {
  FeatureSchema schema;
  std::set<std::string> seen;
  for (const auto& a : j.at("attributes")) {
    AttributeSpec spec;
    spec.name = a.at("name").get<std::string>();
    if (spec.name.empty() || spec.name == "item_id") {
      throw ValidationError("invalid attribute name '" + spec.name + "'");
    }
    if (!seen.insert(spec.name).second) {
      throw ValidationError("attribute '" + spec.name + "' listed twice");
    }
    spec.kind = parse_attribute_kind(a.at("kind").get<std::string>());
    spec.vocab_size = a.value("vocab_size", 0);
    spec.embedding_dim = a.value("embedding_dim", 0);
    spec.pooling = parse_pooling(a.value("pooling", std::string("mean")));
    spec.standardize = a.value("standardize", false);
    if (spec.embedding_dim < 0 || spec.vocab_size < 0) {
      throw ValidationError("attribute '" + spec.name + "': sizes must be non-negative");
    }
    schema.attributes.push_back(std::move(spec));
  }
  if (schema.attributes.empty()) throw ValidationError("schema lists no attributes");
  return schema;
}

int default_dim(int vocab_size, double alpha, int dmin, int dmax) {
  if (vocab_size < 1) throw std::invalid_argument("vocab_size must be >= 1");
  const double raw = std::round(alpha * std::pow(static_cast<double>(vocab_size), 0.25));
  return std::clamp(static_cast<int>(raw), dmin, dmax);
}

nlohmann::json to_json(const FeatureSpec& f) {
  return {{"name", f.name},           {"kind", to_string(f.kind)}, {"vocab_size", f.vocab_size},
          {"dim", f.dim},             {"pooling", to_string(f.pooling)},
          {"item_indexed", f.item_indexed}};
}

FeatureSpec feature_spec_from_json(const nlohmann::json& j) {
  FeatureSpec f;
  f.name = j.at("name").get<std::string>();
  f.kind = parse_attribute_kind(j.at("kind").get<std::string>());
  f.vocab_size = j.at("vocab_size").get<int>();
  f.dim = j.at("dim").get<int>();
  f.pooling = parse_pooling(j.at("pooling").get<std::string>());
  f.item_indexed = j.at("item_indexed").get<bool>();
  return f;
}

int compound_width(std::span<const FeatureSpec> features) {
  int w = 0;
  for (const auto& f : features) w += f.width();
  return w;
}

bool EncodedItem::operator==(const EncodedItem& o) const {
  if (slots.size() != o.slots.size()) return false;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i].ids != o.slots[i].ids || slots[i].number != o.slots[i].number) return false;
  }
  return true;
}

template <class T>
RowVector<T> embed_categorical(const Matrix<T>& table, int value_id) {
  if (value_id < 0 || value_id >= table.rows()) {
    throw std::out_of_range("value id " + std::to_string(value_id) + " outside table of " +
                            std::to_string(table.rows()) + " rows");
  }
  return table.row(value_id);
}

template <class T>
RowVector<T> embed_text(const Matrix<T>& table, std::span<const int> token_ids, Pooling pooling) {
  if (token_ids.empty()) throw std::invalid_argument("embed_text needs at least one token");
  RowVector<T> out = embed_categorical(table, token_ids[0]);
  for (std::size_t i = 1; i < token_ids.size(); ++i) {
    const RowVector<T> row = embed_categorical(table, token_ids[i]);
    if (pooling == Pooling::max) {
      out = out.cwiseMax(row);
    } else {
      out += row;
    }
  }
  if (pooling == Pooling::mean) out /= static_cast<T>(token_ids.size());
  return out;
}

Standardizer Standardizer::fit(std::span<const double> values) {
  Standardizer s;
  if (values.empty()) return s;
  double sum = 0.0;
  for (const double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (const double v : values) sq += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(sq / static_cast<double>(values.size()));
  if (!(s.stddev > 0.0)) s.stddev = 1.0;
  return s;
}

double embed_numerical(double value, const Standardizer* standardizer) {
  if (!std::isfinite(value)) throw std::invalid_argument("numerical attribute value is not finite");
  return standardizer != nullptr ? standardizer->apply(value) : value;
}

template <class T>
RowVector<T> compound_vector(const EncodedItem& item, std::span<const FeatureSpec> features,
                             std::span<const Matrix<T>* const> tables) {
  if (item.slots.size() != features.size() || tables.size() != features.size()) {
    throw std::invalid_argument("compound_vector: item/feature/table counts differ");
  }
  RowVector<T> out(compound_width(features));
  Index offset = 0;
  for (std::size_t f = 0; f < features.size(); ++f) {
    const auto& spec = features[f];
    if (spec.kind == AttributeKind::numerical) {
      out(offset) = static_cast<T>(item.slots[f].number);
      offset += 1;
      continue;
    }
    const Matrix<T>* table = tables[f];
    if (table == nullptr || table->cols() != spec.dim || table->rows() != spec.vocab_size) {
      throw std::invalid_argument("embedding table for '" + spec.name + "' does not match its spec");
    }
    out.segment(offset, spec.dim) = spec.kind == AttributeKind::categorical
                                        ? embed_categorical(*table, item.slots[f].ids.at(0))
                                        : embed_text(*table, item.slots[f].ids, spec.pooling);
    offset += spec.dim;
  }
  return out;
}

template RowVector<float> embed_categorical(const Matrix<float>&, int);
template RowVector<double> embed_categorical(const Matrix<double>&, int);
template RowVector<float> embed_text(const Matrix<float>&, std::span<const int>, Pooling);
template RowVector<double> embed_text(const Matrix<double>&, std::span<const int>, Pooling);
template RowVector<float> compound_vector(const EncodedItem&, std::span<const FeatureSpec>,
                                          std::span<const Matrix<float>* const>);
template RowVector<double> compound_vector(const EncodedItem&, std::span<const FeatureSpec>,
                                           std::span<const Matrix<double>* const>);

namespace {

double parse_number(const std::string& s, const std::string& attribute) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ValidationError("attribute '" + attribute + "': '" + s + "' is not a number");
  }
  return v;
}

}  // namespace

FeatureSpace FeatureSpace::fit(const ItemCatalog& catalog, const FeatureSchema& schema,
                               std::span<const std::size_t> fit_rows) {
  FeatureSpace space;
  for (const auto& attr : schema.attributes) {
    const auto column = catalog.attribute_index(attr.name);
    if (!column) throw ValidationError("catalog lacks attribute '" + attr.name + "'");
    Slot slot;
    slot.spec = attr;
    slot.column = *column;
    switch (attr.kind) {
      case AttributeKind::textual: {
        std::vector<std::string> corpus;
        for (const auto row : fit_rows) {
          const auto& v = catalog.record(row)[*column];
          if (v != kMissing) corpus.push_back(v);
        }
        if (corpus.empty()) corpus.emplace_back();
        const int target = attr.vocab_size > 0 ? attr.vocab_size : kDefaultTextVocab;
        slot.tokenizer = train_bpe(corpus, target);
        slot.vocab_size = slot.tokenizer->size();
        break;
      }
      case AttributeKind::categorical: {
        std::set<std::string> values;
        for (const auto row : fit_rows) {
          const auto& v = catalog.record(row)[*column];
          if (v != kMissing) values.insert(v);
        }
        slot.values.assign(values.begin(), values.end());
        slot.vocab_size = static_cast<int>(slot.values.size()) + 2;
        break;
      }
      case AttributeKind::numerical: {
        std::vector<double> values;
        for (const auto row : fit_rows) {
          const auto& v = catalog.record(row)[*column];
          if (v != kMissing) values.push_back(parse_number(v, attr.name));
        }
        if (attr.standardize) slot.standardizer = Standardizer::fit(values);
        slot.vocab_size = 0;
        break;
      }
    }
    slot.dim = attr.kind == AttributeKind::numerical ? 1
               : attr.embedding_dim > 0            ? attr.embedding_dim
                                                   : default_dim(slot.vocab_size);
    space.slots_.push_back(std::move(slot));
  }
  return space;
}

FeatureSpace FeatureSpace::select(std::span<const std::string> names) const {
  FeatureSpace out;
  for (const auto& name : names) {
    const auto it = std::find_if(slots_.begin(), slots_.end(),
                                 [&](const Slot& s) { return s.spec.name == name; });
    if (it == slots_.end()) throw ValidationError("no fitted attribute named '" + name + "'");
    out.slots_.push_back(*it);
  }
  return out;
}

EncodedItem FeatureSpace::encode(const AttributeRecord& record) const {
  EncodedItem item;
  item.slots.reserve(slots_.size());
  for (const auto& slot : slots_) {
    const std::string& raw = record.at(slot.column);
    FeatureValue fv;
    switch (slot.spec.kind) {
      case AttributeKind::textual:
        fv.ids = raw == kMissing ? std::vector<int>{BpeModel::kMissingId} : slot.tokenizer->encode(raw);
        break;
      case AttributeKind::categorical:
        if (raw == kMissing) {
          fv.ids = {kMissingValueId};
        } else {
          const auto it = std::lower_bound(slot.values.begin(), slot.values.end(), raw);
          fv.ids = {it != slot.values.end() && *it == raw
                        ? static_cast<int>(it - slot.values.begin()) + 2
                        : kUnknownValueId};
        }
        break;
      case AttributeKind::numerical:
        if (raw == kMissing) {
          // 0 is the training mean when standardized, a plain zero otherwise.
          fv.number = 0.0;
        } else {
          const auto* st = slot.standardizer ? &*slot.standardizer : nullptr;
          fv.number = embed_numerical(parse_number(raw, slot.spec.name), st);
        }
        break;
    }
    item.slots.push_back(std::move(fv));
  }
  return item;
}

std::vector<FeatureSpec> FeatureSpace::specs() const {
  std::vector<FeatureSpec> out;
  for (const auto& slot : slots_) {
    out.push_back({slot.spec.name, slot.spec.kind, slot.vocab_size, slot.dim, slot.spec.pooling, false});
  }
  return out;
}

nlohmann::json FeatureSpace::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& slot : slots_) {
    nlohmann::json j = {{"spec",
                         {{"name", slot.spec.name},
                          {"kind", to_string(slot.spec.kind)},
                          {"vocab_size", slot.spec.vocab_size},
                          {"embedding_dim", slot.spec.embedding_dim},
                          {"pooling", to_string(slot.spec.pooling)},
                          {"standardize", slot.spec.standardize}}},
                        {"column", slot.column},
                        {"vocab_size", slot.vocab_size},
                        {"dim", slot.dim}};
    if (slot.tokenizer) j["tokenizer"] = slot.tokenizer->to_json();
    if (slot.spec.kind == AttributeKind::categorical) j["values"] = slot.values;
    if (slot.standardizer) {
      j["standardizer"] = {{"mean", slot.standardizer->mean}, {"stddev", slot.standardizer->stddev}};
    }
    arr.push_back(std::move(j));
  }
  return {{"attributes", arr}};
}

FeatureSpace FeatureSpace::from_json(const nlohmann::json& j) {
  FeatureSpace space;
  try {
    for (const auto& a : j.at("attributes")) {
      Slot slot;
      const auto& s = a.at("spec");
      slot.spec.name = s.at("name").get<std::string>();
      slot.spec.kind = parse_attribute_kind(s.at("kind").get<std::string>());
      slot.spec.vocab_size = s.at("vocab_size").get<int>();
      slot.spec.embedding_dim = s.at("embedding_dim").get<int>();
      slot.spec.pooling = parse_pooling(s.at("pooling").get<std::string>());
      slot.spec.standardize = s.at("standardize").get<bool>();
      slot.column = a.at("column").get<std::size_t>();
      slot.vocab_size = a.at("vocab_size").get<int>();
      slot.dim = a.at("dim").get<int>();
      if (a.contains("tokenizer")) slot.tokenizer = BpeModel::from_json(a.at("tokenizer"));
      if (a.contains("values")) slot.values = a.at("values").get<std::vector<std::string>>();
      if (a.contains("standardizer")) {
        slot.standardizer = Standardizer{a["standardizer"].at("mean").get<double>(),
                                         a["standardizer"].at("stddev").get<double>()};
      }
      space.slots_.push_back(std::move(slot));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed feature space: ") + e.what());
  }
  return space;
}

IdVocabulary::IdVocabulary(std::vector<std::string> ids) : ids_(std::move(ids)) {
  for (std::size_t i = 0; i < ids_.size(); ++i) rows_.emplace(ids_[i], static_cast<int>(i));
}

int IdVocabulary::row(std::string_view item_id) const {
  const auto it = rows_.find(std::string(item_id));
  return it == rows_.end() ? static_cast<int>(ids_.size()) : it->second;
}

EncodedItem IdVocabulary::encode(std::string_view item_id) const {
  EncodedItem item;
  item.slots.push_back(FeatureValue{{row(item_id)}, 0.0});
  return item;
}

FeatureSpec IdVocabulary::spec(int dim) const {
  return {"item_id", AttributeKind::categorical, rows(), dim, Pooling::mean, true};
}

}  // namespace m2trec
