#include <random>

#include "doctest.h"
#include "kge/dataset.hpp"
#include "test_support.hpp"

using namespace kge;

namespace {

Schema tiny_schema() {
  return {{"f1", AttributeKind::Numeric, AttributeRole::Embedding}, {"g", AttributeKind::Categorical, AttributeRole::Descriptive}};
}

}  // namespace

TEST_CASE("load_dataset reads a one-row file") {
  const auto ds = load_dataset("f1,g\n1.5,x\n", tiny_schema());
  CHECK(ds.n() == 1);
  CHECK(ds.d() == 1);
  CHECK(ds.numeric(0)[0] == 1.5);
  CHECK(ds.categorical(1)[0] == "x");
}

TEST_CASE("load_dataset handles quoting and CRLF") {
  const auto ds = load_dataset("f1,g\r\n1,\"a, \"\"quoted\"\" value\"\r\n2,plain\r\n", tiny_schema());
  REQUIRE(ds.n() == 2);
  CHECK(ds.categorical(1)[0] == "a, \"quoted\" value");
  CHECK(ds.categorical(1)[1] == "plain");
}

TEST_CASE("load_dataset reports the failing row and column") {
  try {
    load_dataset("f1,g\n1,a\n2,b\n3,c\nabc,d\n", tiny_schema());
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.row() == 3);
    CHECK(e.column() == "f1");
  }
  CHECK_THROWS_AS(load_dataset("f1,g\n1,a\ninf,b\n", tiny_schema()), ParseError);
  CHECK_THROWS_AS(load_dataset("f1,g\n1,\n", tiny_schema()), ParseError);
  CHECK_THROWS_AS(load_dataset("f1,g\n1\n", tiny_schema()), ParseError);
}

TEST_CASE("load_dataset schema errors") {
  auto expect = [](auto&& fn, Errc code) {
    try {
      fn();
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == code);
    }
  };
  expect([] { load_dataset("f1,h\n1,a\n", tiny_schema()); }, Errc::SchemaMismatch);
  expect([] { load_dataset("f1\n1\n", tiny_schema()); }, Errc::SchemaMismatch);
  expect([] { load_dataset("f1,g\n", tiny_schema()); }, Errc::EmptyDataset);
  expect([] { load_dataset("f1,g\n1,a\n", {{"f1", AttributeKind::Numeric, AttributeRole::Embedding},
                                             {"g", AttributeKind::Categorical, AttributeRole::Embedding}}); },
         Errc::SchemaMismatch);
  expect([] { load_dataset("f1,g\n1,2\n", {{"f1", AttributeKind::Numeric, AttributeRole::Embedding},
                                             {"g", AttributeKind::Numeric, AttributeRole::Embedding}}); },
         Errc::SchemaMismatch);
  expect([] { parse_schema(R"([{"name":"a","kind":"text","role":"embedding"}])"); }, Errc::SchemaMismatch);
}

TEST_CASE("customer-shaped file with 2214 rows") {
  Schema schema;
  std::string csv;
  for (int j = 0; j < 10; ++j) {
    schema.push_back({"x" + std::to_string(j), AttributeKind::Numeric, AttributeRole::Embedding});
    csv += "x" + std::to_string(j) + ",";
  }
  for (const char* name : {"income", "kids", "education", "marital"}) {
    const bool numeric = std::string(name) == "income" || std::string(name) == "kids";
    schema.push_back({name, numeric ? AttributeKind::Numeric : AttributeKind::Categorical, AttributeRole::Descriptive});
  }
  csv += "income,kids,education,marital\n";
  std::mt19937 rng(3);
  for (int r = 0; r < 2214; ++r) {
    for (int j = 0; j < 10; ++j) csv += std::to_string(rng() % 1000) + ",";
    csv += std::to_string(20000 + rng() % 80000) + "," + std::to_string(rng() % 3) + ",\"Grad\",Single\n";
  }
  const auto ds = load_dataset(csv, schema);
  CHECK(ds.n() == 2214);
  CHECK(ds.d() == 10);
  CHECK(ds.descriptive_columns().size() == 4);
  // Same bytes, same dataset.
  const auto again = load_dataset(csv, schema);
  CHECK(again.embedding_features() == ds.embedding_features());
}

TEST_CASE("normalize_features scales each column to [0, 1]") {
  Schema schema{{"a", AttributeKind::Numeric, AttributeRole::Embedding},
                {"b", AttributeKind::Numeric, AttributeRole::Embedding},
                {"g", AttributeKind::Categorical, AttributeRole::Descriptive}};
  const auto ds = load_dataset("a,b,g\n2,5,x\n4,5,y\n6,5,z\n", schema);
  const auto fm = normalize_features(ds);
  CHECK(fm.values(0, 0) == 0.0);
  CHECK(fm.values(1, 0) == 0.5);
  CHECK(fm.values(2, 0) == 1.0);
  CHECK(fm.values.col(1).isZero());
  const auto back = fm.denormalize();
  CHECK(back(2, 0) == doctest::Approx(6.0));
  CHECK(back(1, 1) == 5.0);
}

TEST_CASE("normalize_features property: random matrices") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto ds = testing::random_dataset(20, 5, 3, seed);
    const auto fm = normalize_features(ds);
    const auto raw = ds.embedding_features();
    for (Eigen::Index j = 0; j < raw.cols(); ++j) {
      // Oracle: direct scan of the normalized column.
      double lo = 1e300, hi = -1e300;
      for (Eigen::Index i = 0; i < raw.rows(); ++i) {
        lo = std::min(lo, fm.values(i, j));
        hi = std::max(hi, fm.values(i, j));
      }
      CHECK(lo == 0.0);
      CHECK(hi == 1.0);
    }
    CHECK((fm.denormalize() - raw).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("attribute_summary") {
  const auto covid = testing::load_fixture("covid_mini");
  CHECK(covid.n() == 8);
  const auto cont = std::get<CategoricalSummary>(attribute_summary(covid, "continent"));
  CHECK(cont.counts.size() == 6);
  std::size_t total = 0;
  for (std::size_t i = 0; i < cont.counts.size(); ++i) {
    total += cont.counts[i].second;
    if (i > 0) CHECK(cont.counts[i - 1].first < cont.counts[i].first);
  }
  CHECK(total == covid.n());

  Schema schema{{"a", AttributeKind::Numeric, AttributeRole::Embedding}, {"g", AttributeKind::Categorical, AttributeRole::Descriptive}};
  const auto s = std::get<NumericSummary>(attribute_summary(load_dataset("a,g\n1,x\n1,x\n2,y\n", schema), "a"));
  CHECK(s.min == 1.0);
  CHECK(s.max == 2.0);
  CHECK(s.count == 3);

  const auto big = testing::random_dataset(1000, 1, 2, 11);
  const auto bs = std::get<NumericSummary>(attribute_summary(big, "e0"));
  double lo = 1e300, hi = -1e300;
  for (double v : big.numeric(0)) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(bs.min == lo);
  CHECK(bs.max == hi);
  CHECK(bs.count == 1000);

  CHECK_THROWS_AS(attribute_summary(covid, "nope"), Error);
}
