#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spot/benchgen.hpp"
#include "spot/evaluation.hpp"
#include "spot/kv_config.hpp"
#include "spot/meta_trainer.hpp"

namespace spot {

inline constexpr int kConfigSchemaVersion = 1;

/// Everything a run needs. Loaded from a key-value file; command-line flags
/// override file values.
struct RunConfig {
  std::string trials;
  std::string features = "hashed:0";
  std::optional<Phase> phase;  // nullopt: every phase
  int k = 3;
  std::vector<int> k_candidates;  // non-empty: choose K by silhouette
  int p = 16;  // hashed provider only; precomputed takes dims from the file
  int q = 8;
  int heads = 2;
  YearMode year_mode = YearMode::Centered;
  HeadInput head_input = HeadInput::Concat;
  MetaConfig meta;
  int episodes = 200;
  int adapt_budget = 5;
  std::vector<int> adapt_topics;  // empty: adapt every topic
  int kmeans_max_iters = 100;
  double kmeans_tol = 1e-9;
  int bins = 10;
  double threshold = 0.5;
  bool strict_prefix = false;
  Variant variant = Variant::Full;
  std::optional<std::uint64_t> seed;
  std::string output_dir;  // empty: keep everything in memory

  static RunConfig from_kv(const KeyValueConfig& kv);
  KeyValueConfig to_kv() const;
  /// Checks values and that referenced input files exist.
  void validate() const;
  std::uint64_t root_seed() const;
};

/// Stage that failed, with the underlying error.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what, int exit_code)
      : std::runtime_error("stage '" + stage + "' failed: " + what),
        stage_(std::move(stage)),
        exit_code_(exit_code) {}
  const std::string& stage() const { return stage_; }
  int exit_code() const { return exit_code_; }

 private:
  std::string stage_;
  int exit_code_;
};

// Process exit codes per failure class.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitIo = 4;

struct Prediction {
  std::string id;
  Split split = Split::Test;
  int topic = 0;
  double probability = 0.0;
  std::optional<int> label;
};

struct RunResult {
  std::string dir;
  int topics = 0;
  std::size_t tasks = 0;
  MetricReport test_metrics;
  std::optional<KSelectionReport> k_selection;
  TrainReport train;
  std::vector<Prediction> predictions;
  std::vector<std::string> resumed_stages;
};

enum class Stage { Ingest, Cluster, Sequences, Train, Adapt, Predict, Evaluate };

std::string_view to_string(Stage stage);
Stage parse_stage(std::string_view text);

/// Runs stages in order up to and including `until`. With an output
/// directory, each stage persists its artifacts and is reused on a rerun
/// when its inputs are unchanged.
RunResult run_pipeline(const RunConfig& config, Stage until = Stage::Evaluate);

/// Scores arbitrary records against a trained run (stages up to adapt are
/// run or resumed first). Records must be featurizable with the run's
/// feature source.
std::vector<Prediction> predict_records(const RunConfig& config,
                                        const std::vector<TrialRecord>& records);

struct SweepRow {
  int K = 0;
  double pr_auc = 0.0;
  double f1 = 0.0;
  double roc_auc = 0.0;
};

/// One run per K with seeds derived from the config seed.
std::vector<SweepRow> sweep_k(const RunConfig& config, const std::vector<int>& ks);

struct AblationRow {
  Variant variant = Variant::Full;
  MetricReport metrics;
};

std::vector<AblationRow> run_ablation(const RunConfig& config,
                                      const std::vector<Variant>& variants);

void write_predictions(const std::vector<Prediction>& predictions,
                       std::ostream& out);
std::vector<Prediction> read_predictions(std::istream& in);

}  // namespace spot
