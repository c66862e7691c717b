#pragma once

#include "m2trec/model.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

namespace m2trec {

inline constexpr int kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'M', '2', 'T', 'R', 'C', 'K', 'P', 'T'};

// File layout: 8-byte magic, u64 little-endian header length, JSON header,
// then every tensor as row-major little-endian float32 in header order.
struct Checkpoint {
  std::unique_ptr<Model<float>> model;
  nlohmann::json metadata;  // run config, input encoder, label maps, history
  std::uint64_t step = 0;
};

void save_checkpoint(const Model<float>& model, const std::filesystem::path& path,
                     const nlohmann::json& metadata = nlohmann::json::object(), std::uint64_t step = 0);

// Throws CorruptCheckpointError, CheckpointVersionError or
// CheckpointShapeError. When expected is given, the stored model spec must
// match it.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<ModelSpec>& expected = std::nullopt);

// Raw tensor payload bytes as written by save_checkpoint.
std::string tensor_payload(const ParameterRegistry<float>& registry);

}  // namespace m2trec
