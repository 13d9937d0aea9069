#include "fixtures.hpp"

#include <fstream>
#include <sstream>

#include "spot/random.hpp"

namespace spot::testing {

namespace fs = std::filesystem;

fs::path source_dir() { return SPOT_SOURCE_DIR; }

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "spot-tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

TrialFeatures random_features(Rng& rng, int p, int q, bool all_present) {
  TrialFeatures f;
  auto draw = [&](int n) {
    Vector v(n);
    for (int i = 0; i < n; ++i) v[i] = rng.normal();
    return v;
  };
  f.h_d = draw(p);
  f.h_t = draw(p);
  f.h_c = draw(p);
  f.z = draw(q);
  f.present = {true, true, true};
  if (!all_present && rng.bernoulli(0.3)) {
    f.h_t.setZero();
    f.present[kTreatment] = false;
  }
  return f;
}

std::unique_ptr<ToyWorld> ToyWorld::make(const std::vector<std::vector<int>>& sizes,
                                         int p, int heads, std::uint64_t seed) {
  auto world = std::make_unique<ToyWorld>();
  world->model.p = p;
  world->model.heads = heads;
  world->model.reference_year = 2010;
  Rng rng(seed);
  int n = 0;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    Task task;
    task.topic = static_cast<int>(k) + 1;
    task.view.topic = task.topic;
    int year = 2005 + static_cast<int>(k);
    for (int m : sizes[k]) {
      StepView step;
      step.year = year;
      year += 1 + static_cast<int>(rng.integer(0, 2));
      for (int i = 0; i < m; ++i, ++n) {
        world->store.push_back(random_features(rng, p, 3));
        step.ids.push_back("T" + std::to_string(n));
        step.features.push_back(&world->store.back());
        if (n % 3 == 2) {
          step.labels.emplace_back(std::nullopt);
        } else {
          step.labels.emplace_back(static_cast<int>(rng.integer(0, 1)));
        }
      }
      task.view.steps.push_back(std::move(step));
    }
    world->tasks.push_back(std::move(task));
  }
  return world;
}

RunConfig bench_run_config(const fs::path& data_dir, const std::string& gen_cfg,
                           std::uint64_t seed, const std::string& run_cfg) {
  KeyValueConfig gen = KeyValueConfig::load((source_dir() / "configs" / gen_cfg).string());
  gen.set("seed", std::to_string(seed));
  write_dataset(generate(SynthConfig::from_kv(gen)), data_dir.string());
  KeyValueConfig kv = KeyValueConfig::load((source_dir() / "configs" / run_cfg).string());
  kv.set("trials", (data_dir / "trials.jsonl").string());
  kv.set("features", "precomputed:" + (data_dir / "embeddings.tsv").string());
  kv.set("seed", std::to_string(seed));
  return RunConfig::from_kv(kv);
}

std::unique_ptr<LoadedRun> LoadedRun::load(const RunConfig& config,
                                           const std::string& checkpoint) {
  auto run = std::make_unique<LoadedRun>();
  const fs::path dir = config.output_dir;
  for (auto& r : load_trials(config.trials).records) {
    if (!config.phase || r.phase == *config.phase) run->records.push_back(std::move(r));
  }
  run->features = featurize_all(run->records, FeatureSpec::parse(config.features), config.p,
                                config.q);
  run->table = TrialTable::build(run->records, run->features);
  {
    std::ifstream in(dir / "assignments.tsv");
    run->assignment = read_assignment(in);
  }
  {
    std::ifstream in(dir / "sequences.txt");
    run->context = read_sequences(in);
  }
  {
    std::ifstream in(dir / checkpoint);
    run->state = read_checkpoint(in);
  }
  const auto idx = index_by_id(run->records);
  TopicAssignment train;
  for (std::size_t i = 0; i < run->assignment.size(); ++i) {
    if (run->records[idx.at(run->assignment.ids[i])].split != Split::Train) continue;
    train.ids.push_back(run->assignment.ids[i]);
    train.topics.push_back(run->assignment.topics[i]);
    train.distances.push_back(run->assignment.distances[i]);
  }
  for (const auto& seq : build_sequences(train, run->records)) {
    Task t{seq.topic, make_view(seq, run->table, true)};
    if (t.view.labeled_count() > 0) run->tasks.push_back(std::move(t));
  }
  return run;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace spot::testing
