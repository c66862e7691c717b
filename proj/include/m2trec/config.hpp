#pragma once

#include "m2trec/data.hpp"
#include "m2trec/features.hpp"
#include "m2trec/heads.hpp"
#include "m2trec/training.hpp"
#include "m2trec/transformer.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace m2trec {

// Text of schemas/run_config.schema.json, compiled in.
std::string_view run_config_schema_text();
const nlohmann::json& run_config_schema();

struct TaskConfig {
  std::string name;
  double weight = 1.0;
};

struct SplitConfig {
  std::optional<std::int64_t> boundary;  // sessions with ts < boundary train
  double test_fraction = 0.2;            // used when no boundary is given
  double valid_fraction = 0.1;           // of the pre-boundary sessions
};

struct RunConfig {
  std::filesystem::path catalog_path;
  std::filesystem::path sessions_path;
  std::filesystem::path output_dir;
  Variant variant = Variant::M2TRec;
  FeatureSchema schema;
  std::string title_attribute = "title";
  std::vector<TaskConfig> tasks;  // the item task first
  TransformerConfig transformer;
  TrainConfig training;
  SplitConfig split;
  std::size_t min_session_length = 2;
  std::uint64_t seed = 1;
  int eval_k = 20;
  std::size_t tail_threshold = 10;
  SparseMode sparse_mode = SparseMode::target;
  int id_embedding_dim = 32;

  nlohmann::json raw;  // validated source document, after overrides
  std::string hash;    // config_hash(raw)

  std::vector<std::string> task_names() const;
  std::vector<TaskHeadSpec> task_heads(std::span<const int> output_sizes) const;
};

// FNV-1a 64 over the compact dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& j);

// Schema check, then semantic checks. Relative paths resolve against
// base_dir. Throws ValidationError listing every violation.
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {},
                           bool require_inputs = true);

// Reads and parses a config file; seed overrides the file's seed.
RunConfig load_run_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed = std::nullopt,
                          bool require_inputs = true);

}  // namespace m2trec
