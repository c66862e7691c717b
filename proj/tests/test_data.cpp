#include "fixtures.hpp"

#include "m2trec/data.hpp"
#include "m2trec/errors.hpp"

#include <doctest.h>

#include <random>
#include <set>

using namespace m2trec;

namespace {

std::vector<AttributeDef> title_category() {
  return {{"title", AttributeKind::textual}, {"category", AttributeKind::categorical}};
}

Session make_session(std::string id, std::vector<std::string> items, std::int64_t ts = 0) {
  return {std::move(id), std::move(items), ts};
}

}  // namespace

TEST_CASE("load_catalog parses rows in schema order") {
  fixture::TempDir dir;
  fixture::write(dir / "c.tsv", "item_id\tcategory\ttitle\nx\ttools\tRed Hammer\ny\tpaint\tBlue Can\nz\ttools\tSaw\n");
  const auto schema = title_category();
  const auto catalog = load_catalog(dir / "c.tsv", schema);
  CHECK(catalog.size() == 3);
  REQUIRE(catalog.schema().size() == 2);
  CHECK(catalog.schema()[0].name == "title");
  CHECK(catalog.schema()[1].name == "category");
  CHECK(catalog.value("x", "title") == "Red Hammer");
  CHECK(catalog.value("y", "category") == "paint");
  CHECK(catalog.ids() == std::vector<std::string>{"x", "y", "z"});
}

TEST_CASE("load_catalog replaces empty cells with the missing sentinel") {
  fixture::TempDir dir;
  fixture::write(dir / "c.tsv", "item_id\ttitle\tcategory\nx\tHammer\t\n");
  const auto schema = title_category();
  const auto catalog = load_catalog(dir / "c.tsv", schema);
  CHECK(catalog.value("x", "category") == std::string(kMissing));
  CHECK(catalog.value("x", "title") == "Hammer");
}

TEST_CASE("load_catalog rejects a repeated item id and names it") {
  fixture::TempDir dir;
  fixture::write(dir / "c.tsv", "item_id\ttitle\tcategory\nx\tA\tt\nq\tB\tt\nx\tC\tt\n");
  const auto schema = title_category();
  try {
    load_catalog(dir / "c.tsv", schema);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("'x'") != std::string::npos);
  }
}

TEST_CASE("load_catalog reports the line of a malformed row") {
  fixture::TempDir dir;
  fixture::write(dir / "c.tsv", "item_id\ttitle\tcategory\nx\tA\tt\ny\tB\n");
  const auto schema = title_category();
  try {
    load_catalog(dir / "c.tsv", schema);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("load_catalog requires every schema attribute in the header") {
  fixture::TempDir dir;
  fixture::write(dir / "c.tsv", "item_id\ttitle\nx\tA\n");
  const auto schema = title_category();
  CHECK_THROWS(load_catalog(dir / "c.tsv", schema));
}

TEST_CASE("load_sessions drops sessions shorter than two items") {
  fixture::TempDir dir;
  fixture::write(dir / "s.jsonl",
                 "{\"session_id\":\"s1\",\"ts\":1,\"items\":[\"a\"]}\n"
                 "{\"session_id\":\"s2\",\"ts\":2,\"items\":[\"a\",\"b\"]}\n"
                 "{\"session_id\":\"s3\",\"ts\":3,\"items\":[\"a\",\"b\",\"c\",\"d\",\"e\"]}\n");
  const auto load = load_sessions(dir / "s.jsonl");
  CHECK(load.sessions.size() == 2);
  CHECK(load.dropped == 1);
  CHECK(load.sessions[1].items == std::vector<std::string>{"a", "b", "c", "d", "e"});
  CHECK(load.sessions[1].timestamp == 3);
}

TEST_CASE("load_sessions on an empty file returns nothing") {
  fixture::TempDir dir;
  fixture::write(dir / "s.jsonl", "");
  const auto load = load_sessions(dir / "s.jsonl");
  CHECK(load.sessions.empty());
  CHECK(load.dropped == 0);
}

TEST_CASE("load_sessions reports the line of an unparseable record") {
  fixture::TempDir dir;
  fixture::write(dir / "s.jsonl", "{\"session_id\":\"s1\",\"ts\":1,\"items\":[\"a\",\"b\"]}\n{not json\n");
  try {
    load_sessions(dir / "s.jsonl");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("temporal_split partitions at the boundary") {
  const std::vector<Session> s{make_session("a", {"x", "y"}, 10), make_session("b", {"x", "y"}, 20),
                               make_session("c", {"x", "y"}, 30)};
  const auto split = temporal_split(s, 25);
  CHECK(split.train.size() == 2);
  CHECK(split.test.size() == 1);
  CHECK(temporal_split(s, 5).train.empty());
  CHECK(temporal_split(s, 100).test.empty());
}

TEST_CASE("temporal_split is a partition for random timestamps") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Session> s;
    const auto n = rng() % 40;
    for (std::size_t i = 0; i < n; ++i) {
      s.push_back(make_session("s" + std::to_string(i), {"x", "y"}, static_cast<std::int64_t>(rng() % 100)));
    }
    const auto boundary = static_cast<std::int64_t>(rng() % 110);
    const auto split = temporal_split(s, boundary);
    CHECK(split.train.size() + split.test.size() == s.size());
    std::set<std::string> ids;
    for (const auto& t : split.train) {
      CHECK(t.timestamp < boundary);
      ids.insert(t.session_id);
    }
    for (const auto& t : split.test) {
      CHECK(t.timestamp >= boundary);
      CHECK(ids.count(t.session_id) == 0);
    }
  }
}

TEST_CASE("generate_examples yields the n-1 prefixes of a session") {
  const auto catalog = fixture::store_catalog();
  const std::vector<std::string> tasks{"item"};
  const auto ex = generate_examples(make_session("s", {"a", "b", "c"}), catalog, tasks);
  REQUIRE(ex.size() == 2);
  CHECK(ex[0].prefix == std::vector<std::string>{"a"});
  CHECK(ex[0].targets.at("item") == "b");
  CHECK(ex[1].prefix == std::vector<std::string>{"a", "b"});
  CHECK(ex[1].targets.at("item") == "c");
  CHECK(ex[1].future == std::vector<std::string>{"c"});
  CHECK(ex[0].future == std::vector<std::string>{"b", "c"});
}

TEST_CASE("generate_examples looks category targets up in the catalog") {
  ItemCatalog catalog({{"L1", AttributeKind::categorical}});
  catalog.add("a", {"garden"});
  catalog.add("b", {"tools"});
  const std::vector<std::string> tasks{"item", "L1"};
  const auto ex = generate_examples(make_session("s", {"a", "b"}), catalog, tasks);
  REQUIRE(ex.size() == 1);
  CHECK(ex[0].targets == std::map<std::string, std::string>{{"item", "b"}, {"L1", "tools"}});
}

TEST_CASE("generate_examples gives a missing category the missing label") {
  ItemCatalog catalog({{"L1", AttributeKind::categorical}});
  catalog.add("a", {"garden"});
  catalog.add("b", {std::string(kMissing)});
  const std::vector<std::string> tasks{"item", "L1"};
  const auto ex = generate_examples(make_session("s", {"a", "b"}), catalog, tasks);
  CHECK(ex[0].targets.at("L1") == std::string(kMissing));
}

TEST_CASE("generate_examples keeps only the item task for unknown targets") {
  const auto catalog = fixture::store_catalog();
  const std::vector<std::string> tasks{"item", "cat"};
  ExampleStats stats;
  const auto ex = generate_examples(make_session("s", {"a", "zz", "b"}), catalog, tasks, &stats);
  REQUIRE(ex.size() == 2);
  CHECK(ex[0].targets == std::map<std::string, std::string>{{"item", "zz"}});
  CHECK(ex[1].targets.at("cat") == "paint");
  CHECK(stats.unknown_targets == 1);
  CHECK(stats.examples == 2);
}

TEST_CASE("generate_examples on a two-item session yields one example") {
  const auto catalog = fixture::store_catalog();
  const std::vector<std::string> tasks{"item"};
  CHECK(generate_examples(make_session("s", {"a", "b"}), catalog, tasks).size() == 1);
  CHECK_THROWS(generate_examples(make_session("s", {"a"}), catalog, tasks));
}

TEST_CASE("generate_examples reconstructs random sessions") {
  const auto catalog = fixture::store_catalog();
  const std::vector<std::string> tasks{"item", "cat"};
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    Session s = make_session("s", {});
    const auto n = 2 + rng() % 9;
    for (std::size_t i = 0; i < n; ++i) s.items.push_back(catalog.ids()[rng() % catalog.size()]);
    const auto ex = generate_examples(s, catalog, tasks);
    REQUIRE(ex.size() == n - 1);
    for (std::size_t j = 0; j < ex.size(); ++j) {
      auto rebuilt = ex[j].prefix;
      rebuilt.push_back(ex[j].targets.at("item"));
      CHECK(rebuilt == std::vector<std::string>(s.items.begin(), s.items.begin() + static_cast<long>(j + 2)));
      CHECK(ex[j].targets.at("cat") == catalog.value(ex[j].targets.at("item"), "cat"));
    }
  }
}

TEST_CASE("tail threshold is strict") {
  ItemFrequencyIndex index(10);
  index.add("nine", 9);
  index.add("ten", 10);
  CHECK(index.is_tail("nine"));
  CHECK_FALSE(index.is_tail("ten"));
  CHECK(index.count("never") == 0);
  CHECK(index.is_tail("never"));
}

TEST_CASE("build_frequency_index counts prefix items and targets") {
  const auto catalog = fixture::store_catalog();
  const std::vector<std::string> tasks{"item"};
  const auto ex = generate_examples(make_session("s", {"a", "b", "c"}), catalog, tasks);
  const auto index = build_frequency_index(ex, 10);
  CHECK(index.count("a") == 2);
  CHECK(index.count("b") == 2);
  CHECK(index.count("c") == 1);
  CHECK(index.total() == 5);
}

TEST_CASE("build_frequency_index matches a brute-force recount") {
  const auto catalog = fixture::store_catalog();
  const std::vector<std::string> tasks{"item"};
  std::mt19937_64 rng(9);
  std::vector<TrainingExample> all;
  for (int s = 0; s < 200; ++s) {
    Session session = make_session("s", {});
    const auto n = 2 + rng() % 6;
    for (std::size_t i = 0; i < n; ++i) session.items.push_back(catalog.ids()[rng() % catalog.size()]);
    auto ex = generate_examples(session, catalog, tasks);
    all.insert(all.end(), ex.begin(), ex.end());
  }
  const auto index = build_frequency_index(all, 10);
  std::size_t total = 0;
  for (const auto& id : catalog.ids()) {
    std::size_t n = 0;
    for (const auto& e : all) {
      for (const auto& p : e.prefix) n += p == id ? 1 : 0;
      n += e.targets.at("item") == id ? 1 : 0;
    }
    CHECK(index.count(id) == n);
    total += n;
  }
  CHECK(index.total() == total);
}

TEST_CASE("is_sparse_session follows the target count") {
  ItemFrequencyIndex index(10);
  index.add("rare", 3);
  index.add("popular", 500);
  TrainingExample ex;
  ex.prefix = {"popular"};
  ex.targets = {{"item", "rare"}};
  CHECK(is_sparse_session(ex, index));
  ex.targets = {{"item", "popular"}};
  CHECK_FALSE(is_sparse_session(ex, index));
  ex.targets = {{"item", "unseen"}};
  CHECK(is_sparse_session(ex, index));
}

TEST_CASE("any-item mode also flags tail prefix items") {
  ItemFrequencyIndex index(10);
  index.add("rare", 3);
  index.add("popular", 500);
  TrainingExample ex;
  ex.prefix = {"rare", "popular"};
  ex.targets = {{"item", "popular"}};
  CHECK_FALSE(is_sparse_session(ex, index, SparseMode::target));
  CHECK(is_sparse_session(ex, index, SparseMode::any_item));
}

TEST_CASE("raising the threshold never shrinks the sparse set") {
  std::mt19937_64 rng(3);
  std::vector<TrainingExample> examples;
  for (int i = 0; i < 300; ++i) {
    TrainingExample ex;
    ex.prefix = {"i" + std::to_string(rng() % 40)};
    ex.targets = {{"item", "i" + std::to_string(rng() % 40)}};
    examples.push_back(ex);
  }
  std::size_t previous = 0;
  for (std::size_t threshold = 1; threshold <= 30; ++threshold) {
    const auto index = build_frequency_index(examples, threshold);
    std::size_t sparse = 0;
    for (const auto& ex : examples) sparse += is_sparse_session(ex, index) ? 1 : 0;
    CHECK(sparse >= previous);
    previous = sparse;
  }
}
