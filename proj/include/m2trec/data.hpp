#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace m2trec {

enum class AttributeKind { textual, categorical, numerical };

std::string_view to_string(AttributeKind kind);
AttributeKind parse_attribute_kind(std::string_view s);

// Stand-in value for an empty catalog cell.
inline constexpr std::string_view kMissing = "<missing>";

// Name of the next-item task. Every other task name is a catalog attribute.
inline constexpr std::string_view kItemTask = "item";

struct AttributeDef {
  std::string name;
  AttributeKind kind = AttributeKind::textual;
};

// Attribute values of one item, in catalog schema order. Carries no item id.
using AttributeRecord = std::vector<std::string>;

class ItemCatalog {
 public:
  ItemCatalog() = default;
  explicit ItemCatalog(std::vector<AttributeDef> schema);

  // Throws DuplicateItemError if the id is already present.
  void add(std::string item_id, AttributeRecord record);

  const std::vector<AttributeDef>& schema() const { return schema_; }
  std::optional<std::size_t> attribute_index(std::string_view name) const;

  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }
  const AttributeRecord& record(std::size_t index) const { return records_.at(index); }
  std::optional<std::size_t> index_of(std::string_view item_id) const;
  const AttributeRecord* find(std::string_view item_id) const;
  bool contains(std::string_view item_id) const { return index_of(item_id).has_value(); }

  // Value of one attribute for one item; nullopt for unknown items.
  std::optional<std::string> value(std::string_view item_id, std::string_view attribute) const;

  // Record with every attribute set to the MISSING sentinel.
  AttributeRecord missing_record() const;

 private:
  std::vector<AttributeDef> schema_;
  std::vector<std::string> ids_;
  std::vector<AttributeRecord> records_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Tab-separated catalog: header row, first column item_id, remaining columns
// named attributes. Columns not in the schema are ignored.
ItemCatalog load_catalog(const std::filesystem::path& path, std::span<const AttributeDef> schema);

struct Session {
  std::string session_id;
  std::vector<std::string> items;
  std::int64_t timestamp = 0;
};

struct SessionLoad {
  std::vector<Session> sessions;
  std::size_t dropped = 0;
};

// JSON-lines: {"session_id": str, "ts": int, "items": [str, ...]} per line.
SessionLoad load_sessions(const std::filesystem::path& path, std::size_t min_length = 2);

struct Split {
  std::vector<Session> train;
  std::vector<Session> test;
};

// train = timestamp < boundary, test = the rest.
Split temporal_split(std::span<const Session> sessions, std::int64_t boundary);

struct TrainingExample {
  std::vector<std::string> prefix;
  // task name -> label: item id for the item task, attribute value otherwise.
  std::map<std::string, std::string> targets;
  // Items after the prefix, target first.
  std::vector<std::string> future;
};

struct ExampleStats {
  std::size_t examples = 0;
  std::size_t unknown_targets = 0;
};

// Expands a session of n items into its n-1 (prefix, next item) examples.
std::vector<TrainingExample> generate_examples(const Session& session, const ItemCatalog& catalog,
                                               std::span<const std::string> tasks,
                                               ExampleStats* stats = nullptr);

class ItemFrequencyIndex {
 public:
  ItemFrequencyIndex() = default;
  explicit ItemFrequencyIndex(std::size_t tail_threshold) : tail_threshold_(tail_threshold) {}

  void add(std::string_view item_id, std::size_t n = 1);
  std::size_t count(std::string_view item_id) const;
  bool is_tail(std::string_view item_id) const { return count(item_id) < tail_threshold_; }
  std::size_t tail_threshold() const { return tail_threshold_; }
  const std::map<std::string, std::size_t, std::less<>>& counts() const { return counts_; }
  std::size_t total() const;

 private:
  std::map<std::string, std::size_t, std::less<>> counts_;
  std::size_t tail_threshold_ = 10;
};

// Counts every item occurrence (prefix items and targets) in the examples.
ItemFrequencyIndex build_frequency_index(std::span<const TrainingExample> examples,
                                         std::size_t threshold = 10);

enum class SparseMode { target, any_item };

// Default: the example is sparse iff its target item is a tail item.
bool is_sparse_session(const TrainingExample& example, const ItemFrequencyIndex& index,
                       SparseMode mode = SparseMode::target);

}  // namespace m2trec
