#include "m2trec/checkpoint.hpp"

#include "m2trec/errors.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace m2trec {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (const unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

std::string tensor_payload(const ParameterRegistry<float>& registry) {
  std::string out;
  out.reserve(registry.scalar_count() * sizeof(float));
  for (std::size_t i = 0; i < registry.count(); ++i) {
    const auto& v = registry.at(i).value;
    out.append(reinterpret_cast<const char*>(v.data()), static_cast<std::size_t>(v.size()) * sizeof(float));
  }
  return out;
}

void save_checkpoint(const Model<float>& model, const std::filesystem::path& path,
                     const nlohmann::json& metadata, std::uint64_t step) {
  const auto& registry = model.parameters();
  nlohmann::json tensors = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (std::size_t i = 0; i < registry.count(); ++i) {
    const auto& p = registry.at(i);
    const auto bytes = static_cast<std::uint64_t>(p.size()) * sizeof(float);
    tensors.push_back({{"name", p.name},
                       {"shape", {p.value.rows(), p.value.cols()}},
                       {"offset", offset},
                       {"item_indexed", p.item_indexed}});
    offset += bytes;
  }
  const std::string payload = tensor_payload(registry);
  const nlohmann::json header = {{"format_version", kCheckpointVersion},
                                 {"model", model.spec().to_json()},
                                 {"metadata", metadata},
                                 {"step", step},
                                 {"tensors", tensors},
                                 {"payload_bytes", payload.size()},
                                 {"payload_fnv1a", fnv1a(payload)}};
  const std::string text = header.dump();
  const std::uint64_t length = text.size();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  out.write(reinterpret_cast<const char*>(&length), sizeof(length));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const std::optional<ModelSpec>& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto corrupt = [&](const std::string& why) {
    return CorruptCheckpointError("corrupt checkpoint " + path.string() + ": " + why);
  };
  constexpr std::size_t prelude = sizeof(kCheckpointMagic) + sizeof(std::uint64_t);
  if (bytes.size() < prelude) throw corrupt("file too short");
  if (std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) throw corrupt("bad magic");
  std::uint64_t length = 0;
  std::memcpy(&length, bytes.data() + sizeof(kCheckpointMagic), sizeof(length));
  if (length > bytes.size() - prelude) throw corrupt("header runs past end of file");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(prelude),
                                   bytes.begin() + static_cast<std::ptrdiff_t>(prelude + length));
  } catch (const nlohmann::json::exception& e) {
    throw corrupt(std::string("unreadable header: ") + e.what());
  }
  if (!header.is_object() || !header.contains("format_version") || !header["format_version"].is_number_integer()) {
    throw corrupt("header has no format_version");
  }
  const int version = header["format_version"].get<int>();
  if (version != kCheckpointVersion) {
    throw CheckpointVersionError("checkpoint " + path.string() + " has format version " +
                                 std::to_string(version) + ", expected " + std::to_string(kCheckpointVersion));
  }

  const std::string payload = bytes.substr(static_cast<std::size_t>(prelude + length));
  Checkpoint ckpt;
  try {
    if (payload.size() != header.at("payload_bytes").get<std::uint64_t>()) throw corrupt("payload truncated");
    if (fnv1a(payload) != header.at("payload_fnv1a").get<std::uint64_t>()) throw corrupt("payload checksum mismatch");
    ModelSpec spec = ModelSpec::from_json(header.at("model"));
    if (expected && expected->to_json() != spec.to_json()) {
      throw CheckpointShapeError("checkpoint " + path.string() + " was saved for a different model configuration");
    }
    ckpt.model = std::make_unique<Model<float>>(std::move(spec), 0);
    ckpt.metadata = header.at("metadata");
    ckpt.step = header.at("step").get<std::uint64_t>();
    auto& registry = ckpt.model->parameters();
    const auto& tensors = header.at("tensors");
    if (tensors.size() != registry.count()) {
      throw CheckpointShapeError("checkpoint holds " + std::to_string(tensors.size()) + " tensors, model has " +
                                 std::to_string(registry.count()));
    }
    for (std::size_t i = 0; i < registry.count(); ++i) {
      auto& p = registry.at(i);
      const auto& t = tensors[i];
      const auto name = t.at("name").get<std::string>();
      const auto rows = t.at("shape").at(0).get<Index>();
      const auto cols = t.at("shape").at(1).get<Index>();
      if (name != p.name || rows != p.value.rows() || cols != p.value.cols()) {
        throw CheckpointShapeError("tensor '" + name + "' [" + std::to_string(rows) + "x" + std::to_string(cols) +
                                   "] does not match model tensor '" + p.name + "' [" +
                                   std::to_string(p.value.rows()) + "x" + std::to_string(p.value.cols()) + "]");
      }
      const auto offset = t.at("offset").get<std::uint64_t>();
      const auto n = static_cast<std::size_t>(p.size()) * sizeof(float);
      if (offset > payload.size() || n > payload.size() - offset) throw corrupt("tensor '" + name + "' out of bounds");
      std::memcpy(p.value.data(), payload.data() + offset, n);
    }
  } catch (const nlohmann::json::exception& e) {
    throw corrupt(std::string("malformed header: ") + e.what());
  } catch (const ValidationError& e) {
    throw corrupt(std::string("invalid model spec: ") + e.what());
  }
  return ckpt;
}

}  // namespace m2trec
