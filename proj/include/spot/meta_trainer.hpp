#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "spot/neural_core.hpp"
#include "spot/sequence_builder.hpp"
#include "spot/topic_discovery.hpp"

namespace spot {

/// Features and labels by trial id. Pointers refer into caller-owned storage.
struct TrialTable {
  std::unordered_map<std::string, const TrialFeatures*> features;
  std::unordered_map<std::string, std::optional<int>> labels;

  static TrialTable build(const std::vector<TrialRecord>& records,
                          const std::vector<TrialFeatures>& features);
};

/// Materializes a sequence for the model. With `with_labels` false every
/// trial is prediction-only.
SequenceView make_view(const TopicSequence& seq, const TrialTable& table,
                       bool with_labels = true);

/// One meta-learning task: a topic's training-window sequence.
struct Task {
  int topic = 0;
  SequenceView view;
};

struct MetaConfig {
  double alpha = 1e-2;   // inner (local) learning rate
  double beta = 1e-3;    // outer (global) learning rate
  int inner_steps = 1;
  int task_batch = 4;
  double tol = 1e-5;     // max-norm parameter change for convergence
  // false: one shared theta2, no per-task copies (meta-learning ablation).
  bool task_specific = true;

  void validate() const;
};

struct MetaState {
  ModelConfig model;
  MetaConfig meta;
  std::uint64_t seed = 0;
  Theta1 theta1;
  Theta2 theta2_global;
  std::map<int, Theta2> theta2_task;
  long iteration = 0;

  static MetaState init(const ModelConfig& model, const MetaConfig& meta,
                        std::uint64_t seed);
};

struct LocalUpdateResult {
  double loss_before = 0.0;
  double loss_after = 0.0;
};

/// Resets theta2_task[k] from the global theta2, then runs inner_steps SGD
/// steps on the task loss with theta1 frozen.
LocalUpdateResult local_update(const Task& task, MetaState& state);

/// First-order global step from the already-adapted task parameters:
/// theta <- theta - beta * mean_k grad L_k(theta1, theta2^k).
/// Returns the mean task loss at the adapted parameters.
double global_update(const std::vector<const Task*>& batch, MetaState& state);

struct TrainReport {
  std::vector<double> loss_trace;       // mean task loss per episode
  std::vector<double> delta_trace;      // max |param change| per episode
  std::map<int, double> task_final_loss;
  double wall_seconds = 0.0;
  int episodes_run = 0;
  bool converged = false;
  std::string config_echo;
};

/// Episodes sample task_batch tasks without replacement, reshuffling each
/// epoch from a seeded stream.
TrainReport meta_train(const std::vector<Task>& tasks, MetaState& state,
                       int episodes);

struct AdaptResult {
  Theta2 theta2;
  bool unadapted = false;  // no labeled trials: plain clone of the global
  double loss_before = 0.0;
  double loss_after = 0.0;
  double final_lr = 0.0;
};

/// Clones the global theta2 and takes up to `budget` steps on the task's
/// labeled trials. A step that raises the loss is rejected and the rate
/// halved, so loss_after <= loss_before.
AdaptResult adapt_task(const Task& task, const MetaState& state, int budget);

struct PredictOptions {
  // Drop other trials sharing the query's year from its step.
  bool strict = false;
};

/// Probability for a single trial: topic assignment, insertion into the
/// topic's context sequence, forward over the prefix ending at the query's
/// step with the topic's theta2 (global if none).
double predict_trial(const TrialRecord& record, const TrialFeatures& features,
                     const MetaState& state, const CentroidModel& centroids,
                     const std::vector<TopicSequence>& context,
                     const TrialTable& table, const PredictOptions& options = {});

/// Theta2 used for topic k.
const Theta2& theta2_for(const MetaState& state, int topic);

void write_checkpoint(const MetaState& state, std::ostream& out);
MetaState read_checkpoint(std::istream& in);

}  // namespace spot
