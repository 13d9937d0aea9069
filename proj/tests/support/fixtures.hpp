#pragma once

#include <deque>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "spot/benchgen.hpp"
#include "spot/meta_trainer.hpp"
#include "spot/pipeline.hpp"
#include "spot/random.hpp"

namespace spot::testing {

std::filesystem::path source_dir();
std::filesystem::path scratch_dir(const std::string& name);  // fresh, empty

TrialFeatures random_features(Rng& rng, int p, int q, bool all_present = false);

/// Small hand-made sequences over random features. Owns the features the
/// views point to, so it must outlive them and is not copyable.
struct ToyWorld {
  ModelConfig model;
  std::deque<TrialFeatures> store;
  std::vector<Task> tasks;

  ToyWorld() = default;
  ToyWorld(const ToyWorld&) = delete;
  ToyWorld& operator=(const ToyWorld&) = delete;

  /// `sizes[k][t]` is the trial count of step t in topic k. Every third
  /// trial is unlabeled.
  static std::unique_ptr<ToyWorld> make(const std::vector<std::vector<int>>& sizes,
                                        int p, int heads, std::uint64_t seed);
};

/// Writes a benchgen corpus and returns a run config pointing at it.
RunConfig bench_run_config(const std::filesystem::path& data_dir,
                           const std::string& gen_cfg, std::uint64_t seed,
                           const std::string& run_cfg = "bench_run.cfg");

/// A persisted run loaded back through the public file formats, with tasks
/// rebuilt the same way the pipeline builds them.
struct LoadedRun {
  std::vector<TrialRecord> records;
  std::vector<TrialFeatures> features;
  TrialTable table;
  TopicAssignment assignment;
  std::vector<TopicSequence> context;
  MetaState state;
  std::vector<Task> tasks;

  LoadedRun() = default;
  LoadedRun(const LoadedRun&) = delete;
  LoadedRun& operator=(const LoadedRun&) = delete;

  static std::unique_ptr<LoadedRun> load(const RunConfig& config,
                                         const std::string& checkpoint = "checkpoint.txt");
};

std::string slurp(const std::filesystem::path& path);

}  // namespace spot::testing
