#include "fixtures.hpp"
#include "oracles.hpp"

#include "m2trec/errors.hpp"
#include "m2trec/features.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace m2trec;

namespace {

// Embedding tables for every non-numerical feature, filled deterministically.
std::vector<Matrix<double>> random_tables(std::span<const FeatureSpec> specs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Matrix<double>> tables;
  for (const auto& f : specs) {
    Matrix<double> t(f.kind == AttributeKind::numerical ? 0 : f.vocab_size, f.dim);
    fixture::randomize(t, rng);
    tables.push_back(std::move(t));
  }
  return tables;
}

std::vector<const Matrix<double>*> pointers(const std::vector<Matrix<double>>& tables,
                                            std::span<const FeatureSpec> specs) {
  std::vector<const Matrix<double>*> out;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    out.push_back(specs[i].kind == AttributeKind::numerical ? nullptr : &tables[i]);
  }
  return out;
}

}  // namespace

TEST_CASE("categorical lookup in an identity table") {
  const Matrix<double> table = Matrix<double>::Identity(3, 3);
  const RowVector<double> v = embed_categorical(table, 1);
  CHECK(v(0) == 0.0);
  CHECK(v(1) == 1.0);
  CHECK(v(2) == 0.0);
}

TEST_CASE("categorical lookup rejects ids outside the table") {
  const Matrix<double> table = Matrix<double>::Identity(3, 3);
  CHECK_THROWS_AS(embed_categorical(table, 3), std::out_of_range);
  CHECK_THROWS_AS(embed_categorical(table, -1), std::out_of_range);
}

TEST_CASE("categorical lookup equals a one-hot product") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix<double> table(9, 5);
    fixture::randomize(table, rng);
    const int id = static_cast<int>(rng() % 9);
    Matrix<double> onehot = Matrix<double>::Zero(1, 9);
    onehot(0, id) = 1.0;
    const auto expected = oracle::matmul(oracle::to_grid(onehot), oracle::to_grid(table));
    const RowVector<double> v = embed_categorical(table, id);
    for (int j = 0; j < 5; ++j) CHECK(v(j) == doctest::Approx(static_cast<double>(expected[0][j])).epsilon(1e-12));
  }
}

TEST_CASE("text pooling by mean and max") {
  Matrix<double> table(3, 2);
  table << 0, 0, 1, 0, 3, 2;
  const std::vector<int> ids{1, 2};
  const RowVector<double> mean = embed_text(table, ids, Pooling::mean);
  CHECK(mean(0) == 2.0);
  CHECK(mean(1) == 1.0);
  const RowVector<double> max = embed_text(table, ids, Pooling::max);
  CHECK(max(0) == 3.0);
  CHECK(max(1) == 2.0);
}

TEST_CASE("a single token pools to its own row") {
  std::mt19937_64 rng(3);
  Matrix<double> table(6, 4);
  fixture::randomize(table, rng);
  const std::vector<int> ids{4};
  for (const auto mode : {Pooling::mean, Pooling::max}) {
    const RowVector<double> v = embed_text(table, ids, mode);
    CHECK(v == table.row(4));
  }
}

TEST_CASE("mean pooling is unchanged by repeating one token") {
  std::mt19937_64 rng(5);
  Matrix<double> table(6, 4);
  fixture::randomize(table, rng);
  for (int reps = 1; reps <= 8; ++reps) {
    const std::vector<int> ids(static_cast<std::size_t>(reps), 2);
    const RowVector<double> v = embed_text(table, ids, Pooling::mean);
    for (int j = 0; j < 4; ++j) CHECK(v(j) == doctest::Approx(table(2, j)).epsilon(1e-15));
  }
}

TEST_CASE("text pooling needs at least one token") {
  const Matrix<double> table = Matrix<double>::Identity(3, 3);
  const std::vector<int> none;
  CHECK_THROWS_AS(embed_text(table, none, Pooling::mean), std::invalid_argument);
}

TEST_CASE("numerical values pass through or standardize") {
  CHECK(embed_numerical(3.5) == 3.5);
  const std::vector<double> train{1.0, 3.0, 1.0, 3.0};
  double mean = 0.0;
  for (const double v : train) mean += v / static_cast<double>(train.size());
  double var = 0.0;
  for (const double v : train) var += (v - mean) * (v - mean) / static_cast<double>(train.size());
  REQUIRE(mean == 2.0);
  REQUIRE(std::sqrt(var) == 1.0);
  const auto s = Standardizer::fit(train);
  CHECK(s.mean == mean);
  CHECK(s.stddev == std::sqrt(var));
  CHECK(embed_numerical(3.5, &s) == 1.5);
}

TEST_CASE("numerical values must be finite") {
  CHECK_THROWS_AS(embed_numerical(std::numeric_limits<double>::quiet_NaN()), std::invalid_argument);
  CHECK_THROWS_AS(embed_numerical(std::numeric_limits<double>::infinity()), std::invalid_argument);
}

TEST_CASE("compound vector concatenates in feature order") {
  const std::vector<FeatureSpec> specs{{"a", AttributeKind::categorical, 4, 2, Pooling::mean, false},
                                       {"b", AttributeKind::textual, 5, 3, Pooling::mean, false}};
  const auto tables = random_tables(specs, 1);
  const auto ptrs = pointers(tables, specs);
  EncodedItem item;
  item.slots = {{{3}, 0.0}, {{1, 4}, 0.0}};
  const RowVector<double> v = compound_vector<double>(item, specs, ptrs);
  REQUIRE(v.size() == 5);
  CHECK(v.segment(0, 2) == tables[0].row(3));
  const RowVector<double> text = (tables[1].row(1) + tables[1].row(4)) / 2.0;
  CHECK(v.segment(2, 3).isApprox(text));
}

TEST_CASE("compound vector rejects mismatched tables") {
  const std::vector<FeatureSpec> specs{{"a", AttributeKind::categorical, 4, 2, Pooling::mean, false}};
  Matrix<double> wrong(4, 3);
  wrong.setZero();
  const std::vector<const Matrix<double>*> ptrs{&wrong};
  EncodedItem item;
  item.slots = {{{1}, 0.0}};
  CHECK_THROWS_AS(compound_vector<double>(item, specs, ptrs), std::invalid_argument);
  EncodedItem short_item;
  CHECK_THROWS_AS(compound_vector<double>(short_item, specs, ptrs), std::invalid_argument);
}

TEST_CASE("default_dim follows the fourth-root rule") {
  CHECK(default_dim(16) == 12);
  CHECK(default_dim(1) == 8);
  CHECK(default_dim(100000000) == 128);
  int previous = 0;
  for (int v = 1; v < 2000000; v = v * 3 / 2 + 1) {
    const int d = default_dim(v);
    CHECK(d >= previous);
    CHECK(d >= 8);
    CHECK(d <= 128);
    CHECK(d == std::clamp(static_cast<int>(std::lround(6.0 * std::pow(v, 0.25))), 8, 128));
    previous = d;
  }
  CHECK_THROWS(default_dim(0));
}

TEST_CASE("a fitted feature space encodes the whole catalog at width d_I") {
  const auto catalog = fixture::store_catalog();
  for (const auto pooling : {Pooling::mean, Pooling::max}) {
    const auto space = fixture::store_space(catalog, pooling);
    const auto specs = space.specs();
    REQUIRE(specs.size() == 4);
    CHECK(specs[0].dim == 6);
    CHECK(specs[1].dim == 4);
    CHECK(specs[2].dim == 3);
    CHECK(specs[3].width() == 1);
    CHECK(compound_width(specs) == 14);
    CHECK(specs[1].vocab_size == 3 + 2);
    CHECK(specs[2].vocab_size == 2 + 2);
    for (const auto& f : specs) CHECK_FALSE(f.item_indexed);
    const auto tables = random_tables(specs, 2);
    const auto ptrs = pointers(tables, specs);
    for (std::size_t i = 0; i < catalog.size(); ++i) {
      const auto item = space.encode(catalog.record(i));
      const RowVector<double> v = compound_vector<double>(item, specs, ptrs);
      CHECK(v.size() == 14);
      CHECK(v.allFinite());
    }
  }
}

TEST_CASE("numerical slots carry the standardized value") {
  const auto catalog = fixture::store_catalog();
  const auto space = fixture::store_space(catalog);
  std::vector<double> prices;
  for (std::size_t i = 0; i < catalog.size(); ++i) prices.push_back(std::stod(catalog.record(i)[3]));
  double mean = 0.0;
  for (const double p : prices) mean += p / 6.0;
  double var = 0.0;
  for (const double p : prices) var += (p - mean) * (p - mean) / 6.0;
  const auto item = space.encode(catalog.record(0));
  CHECK(item.slots[3].number == doctest::Approx((3.5 - mean) / std::sqrt(var)).epsilon(1e-12));
}

TEST_CASE("identical metadata yields identical vectors") {
  auto catalog = fixture::store_catalog();
  catalog.add("twin_of_a", {"red hammer", "acme", "tools", "3.5"});
  const auto space = fixture::store_space(catalog);
  const auto specs = space.specs();
  const auto tables = random_tables(specs, 3);
  const auto ptrs = pointers(tables, specs);
  const RowVector<double> a = compound_vector<double>(space.encode(*catalog.find("a")), specs, ptrs);
  const RowVector<double> twin = compound_vector<double>(space.encode(*catalog.find("twin_of_a")), specs, ptrs);
  CHECK(a == twin);
}

TEST_CASE("an unseen item matching a trained item shares its vector") {
  auto catalog = fixture::store_catalog();
  catalog.add("new", {"green hammer heavy", "acme", "tools", "7"});
  std::vector<std::size_t> fit_rows{0, 1, 2, 3, 4, 5};
  const auto space = FeatureSpace::fit(catalog, fixture::store_feature_schema(), fit_rows);
  const auto specs = space.specs();
  const auto tables = random_tables(specs, 4);
  const auto ptrs = pointers(tables, specs);
  const RowVector<double> trained = compound_vector<double>(space.encode(*catalog.find("c")), specs, ptrs);
  const RowVector<double> unseen = compound_vector<double>(space.encode(*catalog.find("new")), specs, ptrs);
  CHECK(trained == unseen);
}

TEST_CASE("missing and unseen values use the special ids") {
  auto catalog = fixture::store_catalog();
  catalog.add("odd", {std::string(kMissing), "nobrand", std::string(kMissing), std::string(kMissing)});
  std::vector<std::size_t> fit_rows{0, 1, 2, 3, 4, 5};
  const auto space = FeatureSpace::fit(catalog, fixture::store_feature_schema(), fit_rows);
  const auto item = space.encode(*catalog.find("odd"));
  CHECK(item.slots[0].ids == std::vector<int>{BpeModel::kMissingId});
  CHECK(item.slots[1].ids == std::vector<int>{FeatureSpace::kUnknownValueId});
  CHECK(item.slots[2].ids == std::vector<int>{FeatureSpace::kMissingValueId});
}

TEST_CASE("select keeps the named attributes in order") {
  const auto catalog = fixture::store_catalog();
  const auto space = fixture::store_space(catalog);
  const std::vector<std::string> names{"cat", "title"};
  const auto sub = space.select(names);
  const auto specs = sub.specs();
  REQUIRE(specs.size() == 2);
  CHECK(specs[0].name == "cat");
  CHECK(specs[1].name == "title");
  const std::vector<std::string> bad{"colour"};
  CHECK_THROWS_AS(space.select(bad), ValidationError);
}

TEST_CASE("the feature space survives a JSON round trip") {
  const auto catalog = fixture::store_catalog();
  const auto space = fixture::store_space(catalog);
  const auto back = FeatureSpace::from_json(nlohmann::json::parse(space.to_json().dump()));
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    CHECK(back.encode(catalog.record(i)) == space.encode(catalog.record(i)));
  }
  CHECK(back.specs().size() == space.specs().size());
}

TEST_CASE("item-ID vocabulary reserves a shared unknown row") {
  const IdVocabulary ids({"a", "b", "c"});
  CHECK(ids.rows() == 4);
  CHECK(ids.row("b") == 1);
  CHECK(ids.row("zz") == 3);
  CHECK(ids.row("yy") == 3);
  const auto spec = ids.spec(5);
  CHECK(spec.item_indexed);
  CHECK(spec.vocab_size == 4);
  CHECK(spec.dim == 5);
}
