#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "spot/kv_config.hpp"
#include "spot/trial_store.hpp"

namespace spot {

/// Synthetic corpus: K latent topics with power-law sizes, topic-specific
/// base rates and linear logit drift over years, plus a per-topic latent
/// state that follows a random walk over years and shows up in the
/// criteria embedding of that year's trials.
struct SynthConfig {
  int topics = 3;
  int largest_topic = 300;
  double skew = 0.0;          // size_k = largest_topic * k^-skew (k from 1)
  int min_topic_size = 20;
  int year_start = 1996;
  int year_end = 2020;
  std::vector<double> base_rates;    // per topic; default spread over [0.25, 0.75]
  std::vector<double> drift_slopes;  // per topic logit change per year; default 0
  int p = 16;
  int q = 8;
  double separation = 6.0;    // distance scale between topic centres in z
  double z_noise = 1.0;
  double feature_noise = 0.5;
  double progression_step = 0.0;    // sd of the yearly latent-state step
  double progression_effect = 0.0;  // logit per unit of latent state
  double progression_noise = 0.0;   // per-trial sd along the latent direction
  double feature_effect = 0.5;      // logit per unit of trial-level signal
  double missing_rate = 0.05;       // chance a treatment list is empty
  Phase phase = Phase::I;
  std::uint64_t seed = 0;

  static SynthConfig from_kv(const KeyValueConfig& kv);
  void validate() const;
  std::vector<int> topic_sizes() const;
  double base_rate(int topic) const;    // 0-based topic
  double drift_slope(int topic) const;  // 0-based topic
};

struct SynthDataset {
  std::vector<TrialRecord> records;
  EmbeddingTable embeddings;
  std::vector<int> true_topic;       // 1-based, by record index
  std::vector<double> probability;   // generator success probability
};

SynthDataset generate(const SynthConfig& config);

/// Writes trials.jsonl, embeddings.tsv and truth.tsv into `dir`.
void write_dataset(const SynthDataset& data, const std::string& dir);

enum class Variant { Full, NoTopic, NoSequence, NoMeta };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view text);

/// Pipeline switches for one ablation variant.
struct AblationSettings {
  bool single_topic = false;   // K forced to 1
  bool zero_history = false;   // temporal state replaced by zeros
  bool task_specific = true;   // per-task theta2 copies and adaptation
  bool inner_loop = true;
};

AblationSettings ablation_variants(Variant v);

}  // namespace spot
