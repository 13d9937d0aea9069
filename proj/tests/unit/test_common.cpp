#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "spot/common.hpp"
#include "spot/kv_config.hpp"
#include "spot/random.hpp"

using namespace spot;

TEST_CASE("format_double round-trips exactly") {
  for (double x : {0.0, -0.0, 1.0, 0.1, 1.0 / 3.0, 6.02214076e23, -2.5e-310,
                   std::numeric_limits<double>::max()}) {
    CHECK(parse_double(format_double(x)) == x);
  }
  CHECK(format_double(0.5) == "0.5");
}

TEST_CASE("strict numeric parsing") {
  CHECK(parse_int("42") == 42);
  CHECK(parse_int("-7") == -7);
  CHECK_THROWS_AS(parse_int("4x"), DataError);
  CHECK_THROWS_AS(parse_int(""), DataError);
  CHECK_THROWS_AS(parse_double("1.5 "), DataError);
  CHECK_THROWS_AS(parse_double("nan"), DataError);
  CHECK_THROWS_AS(parse_double("inf"), DataError);
  CHECK(parse_uint64("18446744073709551615") == 18446744073709551615ULL);
  CHECK_THROWS_AS(parse_uint64("-1"), DataError);
}

TEST_CASE("FNV-1a matches published test vectors") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("derived seeds separate names and indices") {
  CHECK(derive_seed(1, "init") == derive_seed(1, "init"));
  CHECK(derive_seed(1, "init") != derive_seed(1, "sampling"));
  CHECK(derive_seed(1, "init") != derive_seed(2, "init"));
  CHECK(derive_seed(1, "kmeans", 3) != derive_seed(1, "kmeans", 4));
}

TEST_CASE("DataError carries the line number") {
  DataError e("bad field", 7);
  CHECK(e.line() == 7);
  CHECK(std::string(e.what()) == "line 7: bad field");
}

TEST_CASE("Rng draws are reproducible and in range") {
  Rng a(5), b(5);
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double u = a.uniform();
    CHECK(u == b.uniform());
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const long long k = a.integer(3, 5);
    b.integer(3, 5);
    CHECK(k >= 3);
    CHECK(k <= 5);
    const double z = a.normal();
    CHECK(z == b.normal());
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.05);
  CHECK(std::abs(sq / n - 1.0) < 0.05);
}

TEST_CASE("key-value config parsing") {
  std::istringstream in(
      "# comment\n"
      "alpha = 0.5\n"
      "name=run one  \n"
      "\n"
      "ks = 1, 3,5\n"
      "flag = true\n"
      "alpha = 0.25\n");
  auto kv = KeyValueConfig::parse(in);
  CHECK(kv.get_double("alpha", 0) == 0.25);
  CHECK(kv.get_string("name", "") == "run one");
  CHECK(kv.get_ints("ks") == std::vector<int>{1, 3, 5});
  CHECK(kv.get_bool("flag", false));
  CHECK(kv.get_int("missing", 9) == 9);
  CHECK(kv.get_ints("missing").empty());
  kv.set("alpha", "2");
  CHECK(kv.get_double("alpha", 0) == 2.0);

  std::ostringstream out;
  kv.write(out);
  std::istringstream back(out.str());
  CHECK(KeyValueConfig::parse(back).entries() == kv.entries());
}

TEST_CASE("key-value config errors") {
  std::istringstream no_eq("just words\n");
  CHECK_THROWS_AS(KeyValueConfig::parse(no_eq), ConfigError);
  std::istringstream bad("k = abc\n");
  auto kv = KeyValueConfig::parse(bad);
  CHECK_THROWS_AS(kv.get_int("k", 0), ConfigError);
  CHECK_THROWS_AS(KeyValueConfig::load("/nonexistent/config.cfg"), ConfigError);
}
