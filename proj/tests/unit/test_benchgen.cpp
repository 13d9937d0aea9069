#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "../support/fixtures.hpp"
#include "spot/benchgen.hpp"
#include "spot/pipeline.hpp"

using namespace spot;
using namespace spot::testing;

namespace {

SynthConfig flat_config(int per_topic, std::uint64_t seed) {
  SynthConfig c;
  c.topics = 2;
  c.largest_topic = per_topic;
  c.min_topic_size = 1;
  c.base_rates = {0.3, 0.6};
  c.drift_slopes = {0.0, 0.0};
  c.feature_effect = 0.0;
  c.seed = seed;
  return c;
}

RunConfig small_run(const std::string& name, Variant variant) {
  const auto dir = scratch_dir(name);
  RunConfig rc = bench_run_config(dir / "data", "blobs_gen.cfg", 3);
  rc.k = 3;
  rc.episodes = 20;
  rc.variant = variant;
  rc.output_dir = (dir / "run").string();
  return rc;
}

}  // namespace

TEST_CASE("generator is deterministic") {
  KeyValueConfig kv = KeyValueConfig::load((source_dir() / "configs" / "bench_gen.cfg").string());
  const auto cfg = SynthConfig::from_kv(kv);
  const auto a = scratch_dir("gen-a"), b = scratch_dir("gen-b");
  write_dataset(generate(cfg), a.string());
  write_dataset(generate(cfg), b.string());
  for (const char* f : {"trials.jsonl", "embeddings.tsv", "truth.tsv"}) {
    CHECK(slurp(a / f) == slurp(b / f));
  }
  auto other = cfg;
  other.seed = cfg.seed + 1;
  CHECK(generate(other).records != generate(cfg).records);
}

TEST_CASE("topic sizes follow the power law with a floor") {
  SynthConfig c;
  c.topics = 4;
  c.largest_topic = 400;
  c.skew = 2.0;
  c.min_topic_size = 30;
  CHECK(c.topic_sizes() == std::vector<int>{400, 100, 44, 30});
  const auto data = generate(c);
  std::map<int, int> counts;
  for (int t : data.true_topic) ++counts[t];
  CHECK(counts == std::map<int, int>{{1, 400}, {2, 100}, {3, 44}, {4, 30}});
  CHECK(data.records.size() == data.embeddings.rows.size());
}

TEST_CASE("splits are chronological within each topic") {
  SynthConfig c;
  c.topics = 3;
  c.largest_topic = 150;
  c.seed = 4;
  const auto data = generate(c);
  for (int k = 1; k <= 3; ++k) {
    std::map<Split, int> n;
    std::map<Split, std::pair<int, int>> years;  // min, max
    for (std::size_t i = 0; i < data.records.size(); ++i) {
      if (data.true_topic[i] != k) continue;
      const auto& r = data.records[i];
      auto [it, fresh] = years.try_emplace(r.split, r.start_year, r.start_year);
      it->second.first = std::min(it->second.first, r.start_year);
      it->second.second = std::max(it->second.second, r.start_year);
      ++n[r.split];
    }
    CHECK(n[Split::Train] == 105);
    CHECK(n[Split::Valid] == 15);
    CHECK(n[Split::Test] == 30);
    CHECK(years[Split::Train].second <= years[Split::Valid].first);
    CHECK(years[Split::Valid].second <= years[Split::Test].first);
  }
}

TEST_CASE("success rates without drift") {
  const auto data = generate(flat_config(2500, 8));
  for (int k = 1; k <= 2; ++k) {
    const double p = k == 1 ? 0.3 : 0.6;
    int n[2] = {0, 0}, s[2] = {0, 0};
    for (std::size_t i = 0; i < data.records.size(); ++i) {
      if (data.true_topic[i] != k) continue;
      const int half = data.records[i].start_year <= 2008 ? 0 : 1;
      ++n[half];
      s[half] += *data.records[i].label;
      CHECK(data.probability[i] == doctest::Approx(p).epsilon(1e-12));
    }
    const int total = n[0] + n[1];
    const double rate = static_cast<double>(s[0] + s[1]) / total;
    CHECK(std::abs(rate - p) < 3.0 * std::sqrt(p * (1 - p) / total));
    const double r0 = static_cast<double>(s[0]) / n[0], r1 = static_cast<double>(s[1]) / n[1];
    CHECK(std::abs(r0 - r1) < 3.0 * std::sqrt(p * (1 - p) * (1.0 / n[0] + 1.0 / n[1])));
  }
}

TEST_CASE("generator config validation") {
  KeyValueConfig kv;
  kv.set("topics", "2");
  kv.set("progression_noise", "-1");
  CHECK_THROWS_AS(SynthConfig::from_kv(kv).validate(), ConfigError);
  SynthConfig c;
  c.topics = 2;
  c.base_rates = {0.5};
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("variant names and switches") {
  for (auto v : {Variant::Full, Variant::NoTopic, Variant::NoSequence, Variant::NoMeta}) {
    CHECK(parse_variant(to_string(v)) == v);
  }
  CHECK_THROWS_AS(parse_variant("bogus"), ConfigError);
  CHECK(ablation_variants(Variant::NoTopic).single_topic);
  CHECK(ablation_variants(Variant::NoSequence).zero_history);
  CHECK_FALSE(ablation_variants(Variant::NoMeta).task_specific);
  const auto full = ablation_variants(Variant::Full);
  CHECK((!full.single_topic && !full.zero_history && full.task_specific && full.inner_loop));
}

TEST_CASE("ablation without topics builds one sequence") {
  const auto rc = small_run("variant-no-topic", Variant::NoTopic);
  run_pipeline(rc, Stage::Sequences);
  std::ifstream in(std::filesystem::path(rc.output_dir) / "sequences.txt");
  CHECK(read_sequences(in).size() == 1);
}

TEST_CASE("ablation without meta-learning stores no task parameters") {
  const auto rc = small_run("variant-no-meta", Variant::NoMeta);
  run_pipeline(rc, Stage::Adapt);
  for (const char* f : {"checkpoint.txt", "adapted.txt"}) {
    std::ifstream in(std::filesystem::path(rc.output_dir) / f);
    CHECK(read_checkpoint(in).theta2_task.empty());
  }
}

TEST_CASE("ablation without sequence ignores earlier steps") {
  const auto rc = small_run("variant-no-sequence", Variant::NoSequence);
  run_pipeline(rc, Stage::Adapt);
  auto run = LoadedRun::load(rc, "adapted.txt");
  CentroidModel centroids;
  {
    std::ifstream in(std::filesystem::path(rc.output_dir) / "centroids.tsv");
    centroids = read_centroids(in);
  }
  // Reverse the years of all steps but the last in every context sequence.
  auto shuffled = run->context;
  for (auto& seq : shuffled) {
    if (seq.steps.size() < 3) continue;
    std::vector<TimeStep> early(seq.steps.begin(), seq.steps.end() - 1);
    for (std::size_t i = 0; i < early.size(); ++i) {
      seq.steps[i].trial_ids = early[early.size() - 1 - i].trial_ids;
    }
  }
  int compared = 0;
  for (std::size_t i = 0; i < run->records.size() && compared < 40; ++i) {
    const auto& r = run->records[i];
    if (r.split != Split::Test) continue;
    TrialRecord late = r;
    late.start_year = 2100;  // after every context step
    const double a = predict_trial(late, run->features[i], run->state, centroids, run->context,
                                   run->table);
    const double b = predict_trial(late, run->features[i], run->state, centroids, shuffled,
                                   run->table);
    CHECK(a == b);
    ++compared;
  }
  CHECK(compared == 40);
}
