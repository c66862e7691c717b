#include "m2trec/config.hpp"

#include "m2trec/errors.hpp"
#include "m2trec/json_schema.hpp"

#include <cstdio>
#include <fstream>
#include <set>

namespace m2trec {

const nlohmann::json& run_config_schema() {
  static const nlohmann::json schema = nlohmann::json::parse(run_config_schema_text());
  return schema;
}

std::string config_hash(const nlohmann::json& j) {
  std::uint64_t h = 14695981039346656037ull;
  for (const unsigned char c : j.dump()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<std::string> RunConfig::task_names() const {
  std::vector<std::string> out;
  for (const auto& t : tasks) out.push_back(t.name);
  return out;
}

std::vector<TaskHeadSpec> RunConfig::task_heads(std::span<const int> output_sizes) const {
  if (output_sizes.size() != tasks.size()) throw std::invalid_argument("one output size per task required");
  std::vector<TaskHeadSpec> out;
  for (std::size_t i = 0; i < tasks.size(); ++i) out.push_back({tasks[i].name, output_sizes[i], tasks[i].weight});
  return out;
}

RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir, bool require_inputs) {
  const auto violations = validate_json(j, run_config_schema());
  if (!violations.empty()) {
    std::string msg = "run config does not match its schema:";
    for (const auto& v : violations) msg += "\n  " + v;
    throw ValidationError(msg);
  }
  const auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return (path.is_relative() && !base_dir.empty() ? base_dir / path : path).lexically_normal();
  };

  RunConfig c;
  c.raw = j;
  c.hash = config_hash(j);
  c.catalog_path = resolve(j["paths"]["catalog"].get<std::string>());
  c.sessions_path = resolve(j["paths"]["sessions"].get<std::string>());
  c.output_dir = resolve(j["paths"]["output_dir"].get<std::string>());
  c.variant = parse_variant(j["variant"].get<std::string>());
  c.schema = FeatureSchema::from_json(j["schema"]);
  c.title_attribute = j.value("title_attribute", c.title_attribute);
  for (const auto& t : j["tasks"]) c.tasks.push_back({t["name"].get<std::string>(), t.value("weight", 1.0)});
  if (j.contains("transformer")) c.transformer = TransformerConfig::from_json(j["transformer"]);
  c.transformer.validate();
  if (j.contains("optimizer")) c.training.adam = AdamConfig::from_json(j["optimizer"]);
  if (j.contains("training")) {
    const auto& t = j["training"];
    c.training.batch_size = t.value("batch_size", c.training.batch_size);
    c.training.max_epochs = t.value("max_epochs", c.training.max_epochs);
    c.training.patience = t.value("patience", c.training.patience);
  }
  if (j.contains("split")) {
    const auto& s = j["split"];
    if (s.contains("boundary")) c.split.boundary = s["boundary"].get<std::int64_t>();
    c.split.test_fraction = s.value("test_fraction", c.split.test_fraction);
    c.split.valid_fraction = s.value("valid_fraction", c.split.valid_fraction);
    if (s.contains("boundary") && s.contains("test_fraction")) {
      throw ValidationError("split: give either boundary or test_fraction, not both");
    }
  }
  c.min_session_length = j.value("min_session_length", c.min_session_length);
  c.seed = j["seed"].get<std::uint64_t>();
  c.eval_k = j.value("eval_k", c.eval_k);
  c.tail_threshold = j.value("tail_threshold", c.tail_threshold);
  c.sparse_mode = j.value("sparse_mode", std::string("target")) == "any_item" ? SparseMode::any_item
                                                                               : SparseMode::target;
  c.id_embedding_dim = j.value("id_embedding_dim", c.id_embedding_dim);
  c.training.seed = c.seed;
  c.training.eval_k = c.eval_k;
  c.training.validate();

  if (c.tasks.front().name != kItemTask) throw ValidationError("the first task must be \"item\"");
  std::set<std::string> names;
  for (const auto& t : c.tasks) {
    if (!names.insert(t.name).second) throw ValidationError("task \"" + t.name + "\" listed twice");
    if (t.name != kItemTask && c.schema.find(t.name) == nullptr) {
      throw ValidationError("task \"" + t.name + "\" names no schema attribute");
    }
    if (t.name != kItemTask && c.schema.find(t.name)->kind == AttributeKind::numerical) {
      throw ValidationError("task \"" + t.name + "\" cannot name a numerical attribute");
    }
  }
  if (c.variant == Variant::TRec_title && c.schema.find(c.title_attribute) == nullptr) {
    throw ValidationError("TRec_title needs the title attribute \"" + c.title_attribute + "\" in the schema");
  }
  if (require_inputs) {
    for (const auto& p : {c.catalog_path, c.sessions_path}) {
      if (!std::filesystem::is_regular_file(p)) throw ValidationError("input file not found: " + p.string());
    }
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed,
                          bool require_inputs) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  if (seed && j.is_object()) j["seed"] = *seed;
  return parse_run_config(j, path.parent_path(), require_inputs);
}

}  // namespace m2trec
