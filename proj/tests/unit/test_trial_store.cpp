#include <doctest.h>

#include <algorithm>
#include <sstream>

#include "spot/trial_store.hpp"

using namespace spot;

namespace {

std::string row(const std::string& id, const std::string& split, const std::string& label,
                const std::string& phase = "I", int year = 2010) {
  return R"({"id":")" + id + R"(","phase":")" + phase + R"(","start_year":)" +
         std::to_string(year) +
         R"(,"diseases":["C10.1"],"treatments":["aspirin"],"criteria":["age over 18"],"label":)" +
         label + R"(,"split":")" + split + "\"}\n";
}

TrialSet parse(const std::string& text) {
  std::istringstream in(text);
  return parse_trials(in);
}

// Written out by hand so the hashing check does not reuse library code.
std::uint64_t oracle_hash(const std::string& key, std::uint64_t seed) {
  std::uint64_t x = seed + 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  std::uint64_t h = x ^ (x >> 31);
  for (unsigned char c : key) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

TEST_CASE("manifest counts per phase and split") {
  std::string text;
  int n = 0;
  for (auto [split, count] : {std::pair{"train", 1044}, {"valid", 116}, {"test", 627}}) {
    for (int i = 0; i < count; ++i) text += row("NCT" + std::to_string(n++), split, "1");
  }
  text += row("NCT-II", "train", "0", "II");
  const auto set = parse(text);
  CHECK(set.manifest.count(Phase::I, Split::Train) == 1044);
  CHECK(set.manifest.count(Phase::I, Split::Valid) == 116);
  CHECK(set.manifest.count(Phase::I, Split::Test) == 627);
  CHECK(set.manifest.count(Phase::II, Split::Train) == 1);
  CHECK(set.manifest.total() == static_cast<int>(set.records.size()));
}

TEST_CASE("empty trial file") {
  const auto set = parse("");
  CHECK(set.records.empty());
  CHECK(set.manifest.total() == 0);
}

TEST_CASE("duplicate id is rejected with its name and line") {
  try {
    parse(row("NCT001", "train", "1") + row("NCT001", "test", "null"));
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("NCT001") != std::string::npos);
    CHECK(e.line() == 2);
  }
}

TEST_CASE("record validation") {
  CHECK_THROWS_AS(parse(row("A", "train", "null")), DataError);
  CHECK_THROWS_AS(parse(row("A", "valid", "null")), DataError);
  CHECK_NOTHROW(parse(row("A", "test", "null")));
  CHECK_THROWS_AS(parse(row("A", "train", "2")), DataError);
  CHECK_THROWS_AS(parse(row("A", "train", "1", "IV")), DataError);
  CHECK_THROWS_AS(parse(row("A", "train", "1", "I", 1899)), DataError);
  CHECK_THROWS_AS(parse(row("A", "train", "1", "I", 2101)), DataError);
  CHECK_THROWS_AS(parse("{not json}\n"), DataError);
  CHECK_THROWS_AS(
      parse(R"({"id":"A","phase":"I","start_year":2000,"diseases":[],"treatments":[],"criteria":[],"label":1,"split":"train"})"
            "\n"),
      DataError);
  CHECK_THROWS_AS(parse(R"({"phase":"I"})" "\n"), DataError);
}

TEST_CASE("blank lines are skipped and errors keep file line numbers") {
  try {
    parse("\n" + row("A", "train", "1") + "\n" + row("B", "train", "null"));
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(e.line() == 4);
  }
}

TEST_CASE("write then parse reproduces records") {
  const auto set = parse(row("A", "train", "1") + row("B", "test", "null", "III", 1999) +
                         row("C", "valid", "0", "II"));
  std::ostringstream out;
  write_trials(set.records, out);
  CHECK(parse(out.str()).records == set.records);
}

TEST_CASE("precomputed embeddings") {
  std::istringstream in(
      "# spot-embeddings v1 p=2 q=1\n"
      "A\t1\t2\t3\t4\t5\t6\t7\n"
      "B\t0.5\t0.5\t9\t9\t1\t1\t-1\n");
  const auto table = parse_embeddings(in);
  CHECK(table.p == 2);
  CHECK(table.q == 1);
  REQUIRE(table.rows.size() == 2);
  CHECK(table.rows[0].h_c[1] == 6.0);
  CHECK(table.rows[0].z[0] == 7.0);

  SUBCASE("empty component is zeroed and flagged") {
    auto set = parse(row("B", "train", "1"));
    set.records[0].treatments.clear();
    const auto f = attach_precomputed(set.records, table);
    CHECK(f[0].h_t.isZero());
    CHECK(f[0].present == std::array<bool, 3>{true, false, true});
    CHECK(f[0].h_d[0] == 0.5);
  }
  SUBCASE("missing id") {
    const auto set = parse(row("Z", "train", "1"));
    CHECK_THROWS_AS(attach_precomputed(set.records, table), DataError);
  }
  SUBCASE("round trip") {
    std::ostringstream out;
    write_embeddings(table, out);
    std::istringstream back(out.str());
    const auto again = parse_embeddings(back);
    CHECK(again.rows[1].z == table.rows[1].z);
    CHECK(again.rows[1].h_t == table.rows[1].h_t);
  }
}

TEST_CASE("embedding row of the wrong length names the id") {
  std::string text = "# spot-embeddings v1 p=8 q=2\n";
  text += "GOOD";
  for (int i = 0; i < 26; ++i) text += "\t0";
  text += "\nSHORT";
  for (int i = 0; i < 25; ++i) text += "\t0";
  text += "\n";
  std::istringstream in(text);
  try {
    parse_embeddings(in);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("SHORT") != std::string::npos);
  }
  std::istringstream no_header("A\t1\n");
  CHECK_THROWS_AS(parse_embeddings(no_header), DataError);
}

TEST_CASE("hashed featurizer") {
  TrialRecord r;
  r.id = "X";
  r.diseases = {"C34.1"};

  SUBCASE("single disease lands in the independently hashed bucket") {
    const auto f = featurize_hashed(r, 4, 3, 17);
    const std::uint64_t h = oracle_hash("d:C34.1", 17);
    const int bucket = static_cast<int>(h % 4);
    const double sign = (h >> 63) ? -1.0 : 1.0;
    CHECK(f.h_d.norm() == doctest::Approx(1.0).epsilon(1e-12));
    for (int i = 0; i < 4; ++i) CHECK(f.h_d[i] == (i == bucket ? sign : 0.0));
    CHECK(f.present == std::array<bool, 3>{true, false, false});
    CHECK(f.h_t.isZero());
    CHECK(f.h_c.isZero());
  }
  SUBCASE("deterministic") {
    r.criteria = {"Age over 18; no prior therapy"};
    const auto a = featurize_hashed(r, 16, 8, 3);
    const auto b = featurize_hashed(r, 16, 8, 3);
    CHECK(a.h_c == b.h_c);
    CHECK(a.z == b.z);
    CHECK(featurize_hashed(r, 16, 8, 4).z != a.z);
  }
  SUBCASE("all components empty") {
    TrialRecord e;
    const auto f = featurize_hashed(e, 8, 4, 0);
    CHECK(f.h_d.isZero());
    CHECK(f.z.isZero());
    CHECK(f.present == std::array<bool, 3>{false, false, false});
  }
  SUBCASE("bag semantics and unit norm") {
    r.diseases = {"A1", "B2", "C3", "A1"};
    r.treatments = {"x", "y"};
    r.criteria = {"alpha beta", "gamma"};
    TrialRecord s = r;
    std::reverse(s.diseases.begin(), s.diseases.end());
    std::swap(s.treatments[0], s.treatments[1]);
    s.criteria = {"gamma", "beta alpha"};
    const auto a = featurize_hashed(r, 8, 4, 9);
    const auto b = featurize_hashed(s, 8, 4, 9);
    CHECK((a.h_d - b.h_d).norm() < 1e-15);
    CHECK((a.h_t - b.h_t).norm() < 1e-15);
    CHECK((a.h_c - b.h_c).norm() < 1e-15);
    CHECK((a.z - b.z).norm() < 1e-15);
    for (const Vector* v : {&a.h_d, &a.h_t, &a.h_c, &a.z}) {
      if (!v->isZero()) CHECK(std::abs(v->norm() - 1.0) < 1e-9);
    }
  }
  CHECK_THROWS_AS(featurize_hashed(r, 0, 4, 0), ConfigError);
}

TEST_CASE("criteria tokens are lowercase alphanumeric words") {
  TrialRecord r;
  r.criteria = {"Age >= 18, ECOG 0-1"};
  CHECK(component_tokens(r, kCriteria) ==
        std::vector<std::string>{"age", "18", "ecog", "0", "1"});
}

TEST_CASE("feature spec parsing") {
  auto a = FeatureSpec::parse("hashed:42");
  CHECK(a.source == FeatureSource::Hashed);
  CHECK(a.seed == 42);
  auto b = FeatureSpec::parse("precomputed:/tmp/e.tsv");
  CHECK(b.source == FeatureSource::Precomputed);
  CHECK(b.path == "/tmp/e.tsv");
  CHECK_THROWS_AS(FeatureSpec::parse("bogus"), ConfigError);
  CHECK_THROWS_AS(FeatureSpec::parse("hashed:x"), ConfigError);
  CHECK_THROWS_AS(FeatureSpec::parse("other:1"), ConfigError);
}
