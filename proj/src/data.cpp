#include "m2trec/data.hpp"

#include "m2trec/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>

namespace m2trec {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  return in;
}

}  // namespace

std::string_view to_string(AttributeKind kind) {
  switch (kind) {
    case AttributeKind::textual: return "textual";
    case AttributeKind::categorical: return "categorical";
    case AttributeKind::numerical: return "numerical";
  }
  return "textual";
}

AttributeKind parse_attribute_kind(std::string_view s) {
  if (s == "textual") return AttributeKind::textual;
  if (s == "categorical") return AttributeKind::categorical;
  if (s == "numerical") return AttributeKind::numerical;
  throw ValidationError("unknown attribute kind '" + std::string(s) + "'");
}

ItemCatalog::ItemCatalog(std::vector<AttributeDef> schema) : schema_(std::move(schema)) {}

void ItemCatalog::add(std::string item_id, AttributeRecord record) {
  if (record.size() != schema_.size()) {
    throw std::invalid_argument("record for '" + item_id + "' has " +
                                std::to_string(record.size()) + " values, schema has " +
                                std::to_string(schema_.size()));
  }
  if (index_.contains(item_id)) throw DuplicateItemError(item_id);
  index_.emplace(item_id, ids_.size());
  ids_.push_back(std::move(item_id));
  records_.push_back(std::move(record));
}

std::optional<std::size_t> ItemCatalog::attribute_index(std::string_view name) const {
  for (std::size_t i = 0; i < schema_.size(); ++i) {
    if (schema_[i].name == name) return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> ItemCatalog::index_of(std::string_view item_id) const {
  const auto it = index_.find(std::string(item_id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const AttributeRecord* ItemCatalog::find(std::string_view item_id) const {
  const auto idx = index_of(item_id);
  return idx ? &records_[*idx] : nullptr;
}

std::optional<std::string> ItemCatalog::value(std::string_view item_id,
                                              std::string_view attribute) const {
  const auto* rec = find(item_id);
  const auto col = attribute_index(attribute);
  if (rec == nullptr || !col) return std::nullopt;
  return (*rec)[*col];
}

AttributeRecord ItemCatalog::missing_record() const {
  return AttributeRecord(schema_.size(), std::string(kMissing));
}

ItemCatalog load_catalog(const std::filesystem::path& path, std::span<const AttributeDef> schema) {
  auto in = open_or_throw(path);
  const std::string file = path.string();
  std::string line;
  if (!std::getline(in, line)) throw ParseError(file, 1, "missing header row");
  strip_cr(line);
  const auto header = split_tabs(line);
  if (header.empty() || header[0] != "item_id") {
    throw ParseError(file, 1, "first header column must be 'item_id'");
  }
  std::vector<std::size_t> columns;
  for (const auto& attr : schema) {
    const auto it = std::find(header.begin() + 1, header.end(), attr.name);
    if (it == header.end()) {
      throw ParseError(file, 1, "header lacks schema attribute '" + attr.name + "'");
    }
    columns.push_back(static_cast<std::size_t>(it - header.begin()));
  }

  ItemCatalog catalog({schema.begin(), schema.end()});
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    auto cells = split_tabs(line);
    if (cells.size() != header.size()) {
      throw ParseError(file, line_no,
                       "expected " + std::to_string(header.size()) + " columns, found " +
                           std::to_string(cells.size()));
    }
    if (cells[0].empty()) throw ParseError(file, line_no, "empty item_id");
    AttributeRecord record;
    record.reserve(columns.size());
    for (const auto c : columns) {
      record.push_back(cells[c].empty() ? std::string(kMissing) : std::move(cells[c]));
    }
    try {
      catalog.add(std::move(cells[0]), std::move(record));
    } catch (const DuplicateItemError& e) {
      throw ParseError(file, line_no, e.what());
    }
  }
  return catalog;
}

SessionLoad load_sessions(const std::filesystem::path& path, std::size_t min_length) {
  auto in = open_or_throw(path);
  const std::string file = path.string();
  SessionLoad out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    Session s;
    try {
      const auto j = nlohmann::json::parse(line);
      s.session_id = j.at("session_id").get<std::string>();
      s.timestamp = j.at("ts").get<std::int64_t>();
      s.items = j.at("items").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(file, line_no, e.what());
    }
    if (s.items.size() < min_length) {
      ++out.dropped;
      continue;
    }
    out.sessions.push_back(std::move(s));
  }
  return out;
}

Split temporal_split(std::span<const Session> sessions, std::int64_t boundary) {
  Split split;
  for (const auto& s : sessions) {
    (s.timestamp < boundary ? split.train : split.test).push_back(s);
  }
  return split;
}

std::vector<TrainingExample> generate_examples(const Session& session, const ItemCatalog& catalog,
                                               std::span<const std::string> tasks,
                                               ExampleStats* stats) {
  if (session.items.size() < 2) {
    throw std::invalid_argument("session '" + session.session_id + "' has fewer than 2 items");
  }
  std::vector<TrainingExample> out;
  out.reserve(session.items.size() - 1);
  for (std::size_t j = 1; j < session.items.size(); ++j) {
    TrainingExample ex;
    ex.prefix.assign(session.items.begin(), session.items.begin() + static_cast<std::ptrdiff_t>(j));
    ex.future.assign(session.items.begin() + static_cast<std::ptrdiff_t>(j), session.items.end());
    const std::string& target = session.items[j];
    const AttributeRecord* record = catalog.find(target);
    if (record == nullptr && stats != nullptr) ++stats->unknown_targets;
    for (const auto& task : tasks) {
      if (task == kItemTask) {
        ex.targets.emplace(task, target);
      } else if (record != nullptr) {
        const auto col = catalog.attribute_index(task);
        if (!col) throw ValidationError("task '" + task + "' names no catalog attribute");
        ex.targets.emplace(task, (*record)[*col]);
      }
    }
    out.push_back(std::move(ex));
  }
  if (stats != nullptr) stats->examples += out.size();
  return out;
}

void ItemFrequencyIndex::add(std::string_view item_id, std::size_t n) {
  auto it = counts_.find(item_id);
  if (it == counts_.end()) {
    counts_.emplace(std::string(item_id), n);
  } else {
    it->second += n;
  }
}

std::size_t ItemFrequencyIndex::count(std::string_view item_id) const {
  const auto it = counts_.find(item_id);
  return it == counts_.end() ? 0 : it->second;
}

std::size_t ItemFrequencyIndex::total() const {
  std::size_t n = 0;
  for (const auto& [_, c] : counts_) n += c;
  return n;
}

ItemFrequencyIndex build_frequency_index(std::span<const TrainingExample> examples,
                                         std::size_t threshold) {
  if (threshold < 1) throw std::invalid_argument("tail threshold must be >= 1");
  ItemFrequencyIndex index(threshold);
  for (const auto& ex : examples) {
    for (const auto& item : ex.prefix) index.add(item);
    const auto it = ex.targets.find(std::string(kItemTask));
    if (it != ex.targets.end()) index.add(it->second);
  }
  return index;
}

bool is_sparse_session(const TrainingExample& example, const ItemFrequencyIndex& index,
                       SparseMode mode) {
  const auto it = example.targets.find(std::string(kItemTask));
  const bool target_tail = it != example.targets.end() && index.is_tail(it->second);
  if (mode == SparseMode::target) return target_tail;
  if (target_tail) return true;
  return std::any_of(example.prefix.begin(), example.prefix.end(),
                     [&](const std::string& id) { return index.is_tail(id); });
}

}  // namespace m2trec
