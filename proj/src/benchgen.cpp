#include "spot/benchgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "spot/random.hpp"

namespace spot {

namespace {

Vector gaussian(Rng& rng, Eigen::Index n, double sd = 1.0) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.normal(0.0, sd);
  return v;
}

Vector unit_gaussian(Rng& rng, Eigen::Index n) {
  Vector v = gaussian(rng, n);
  return v / v.norm();
}

double logit(double p) { return std::log(p / (1.0 - p)); }

double logistic(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

std::string synth_id(int n) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "SYN%06d", n);
  return buf;
}

}  // namespace

SynthConfig SynthConfig::from_kv(const KeyValueConfig& kv) {
  SynthConfig c;
  c.topics = static_cast<int>(kv.get_int("topics", c.topics));
  c.largest_topic = static_cast<int>(kv.get_int("largest_topic", c.largest_topic));
  c.skew = kv.get_double("skew", c.skew);
  c.min_topic_size = static_cast<int>(kv.get_int("min_topic_size", c.min_topic_size));
  c.year_start = static_cast<int>(kv.get_int("year_start", c.year_start));
  c.year_end = static_cast<int>(kv.get_int("year_end", c.year_end));
  c.base_rates = kv.get_doubles("base_rates");
  c.drift_slopes = kv.get_doubles("drift_slopes");
  c.p = static_cast<int>(kv.get_int("p", c.p));
  c.q = static_cast<int>(kv.get_int("q", c.q));
  c.separation = kv.get_double("separation", c.separation);
  c.z_noise = kv.get_double("z_noise", c.z_noise);
  c.feature_noise = kv.get_double("feature_noise", c.feature_noise);
  c.progression_step = kv.get_double("progression_step", c.progression_step);
  c.progression_effect = kv.get_double("progression_effect", c.progression_effect);
  c.progression_noise = kv.get_double("progression_noise", c.progression_noise);
  c.feature_effect = kv.get_double("feature_effect", c.feature_effect);
  c.missing_rate = kv.get_double("missing_rate", c.missing_rate);
  c.phase = parse_phase(kv.get_string("phase", "I"));
  c.seed = kv.has("seed") ? parse_uint64(kv.get_string("seed", "0")) : 0;
  c.validate();
  return c;
}

void SynthConfig::validate() const {
  if (topics < 1) throw ConfigError("synth: topics must be >= 1");
  if (largest_topic < 1 || min_topic_size < 1) {
    throw ConfigError("synth: topic sizes must be >= 1");
  }
  if (year_end < year_start) throw ConfigError("synth: year_end < year_start");
  if (year_start < 1900 || year_end > 2100) throw ConfigError("synth: years outside [1900, 2100]");
  if (p <= 0 || q <= 0) throw ConfigError("synth: dims must be > 0");
  if (!base_rates.empty() && static_cast<int>(base_rates.size()) != topics) {
    throw ConfigError("synth: base_rates needs one value per topic");
  }
  for (double r : base_rates) {
    if (!(r > 0.0 && r < 1.0)) throw ConfigError("synth: base rates must lie in (0, 1)");
  }
  if (!drift_slopes.empty() && static_cast<int>(drift_slopes.size()) != topics) {
    throw ConfigError("synth: drift_slopes needs one value per topic");
  }
  if (separation < 0 || z_noise < 0 || feature_noise < 0 || progression_step < 0 ||
      progression_noise < 0) {
    throw ConfigError("synth: scales must be >= 0");
  }
  if (!(missing_rate >= 0.0 && missing_rate < 1.0)) {
    throw ConfigError("synth: missing_rate must lie in [0, 1)");
  }
}

std::vector<int> SynthConfig::topic_sizes() const {
  std::vector<int> sizes;
  for (int k = 1; k <= topics; ++k) {
    const double s = largest_topic * std::pow(static_cast<double>(k), -skew);
    sizes.push_back(std::max(min_topic_size, static_cast<int>(std::lround(s))));
  }
  return sizes;
}

double SynthConfig::base_rate(int topic) const {
  if (!base_rates.empty()) return base_rates[topic];
  if (topics == 1) return 0.5;
  return 0.25 + 0.5 * topic / (topics - 1);
}

double SynthConfig::drift_slope(int topic) const {
  return drift_slopes.empty() ? 0.0 : drift_slopes[topic];
}

SynthDataset generate(const SynthConfig& config) {
  config.validate();
  Rng rng(derive_seed(config.seed, "generation"));
  const int K = config.topics;
  const int p = config.p;
  const int q = config.q;
  const int n_years = config.year_end - config.year_start + 1;
  const double mid = 0.5 * (config.year_start + config.year_end);

  std::vector<Vector> z_centre, a_d, a_t, a_c;
  for (int k = 0; k < K; ++k) {
    z_centre.push_back(unit_gaussian(rng, q) * config.separation);
    a_d.push_back(unit_gaussian(rng, p));
    a_t.push_back(unit_gaussian(rng, p));
    a_c.push_back(unit_gaussian(rng, p));
  }
  const Vector progression_dir = unit_gaussian(rng, p);
  const Vector signal_dir = unit_gaussian(rng, p);

  // Latent yearly state per topic, centred over the year range.
  std::vector<std::vector<double>> latent(K, std::vector<double>(n_years, 0.0));
  for (int k = 0; k < K; ++k) {
    for (int y = 1; y < n_years; ++y) {
      latent[k][y] = latent[k][y - 1] + rng.normal(0.0, config.progression_step);
    }
    const double mean = std::accumulate(latent[k].begin(), latent[k].end(), 0.0) / n_years;
    for (double& v : latent[k]) v -= mean;
  }

  struct Draft {
    int topic;
    TrialRecord record;
    EmbeddingRow row;
    double probability;
  };
  std::vector<Draft> drafts;
  const auto sizes = config.topic_sizes();
  const double sd = config.feature_noise;
  for (int k = 0; k < K; ++k) {
    for (int i = 0; i < sizes[k]; ++i) {
      Draft d;
      d.topic = k + 1;
      TrialRecord& r = d.record;
      r.phase = config.phase;
      r.start_year = static_cast<int>(rng.integer(config.year_start, config.year_end));
      const int y = r.start_year - config.year_start;
      const int n_codes = static_cast<int>(rng.integer(1, 3));
      for (int c = 0; c < n_codes; ++c) {
        r.diseases.push_back("C" + std::to_string(10 + k) + "." +
                             std::to_string(rng.integer(0, 5)));
      }
      const bool has_treatment = !rng.bernoulli(config.missing_rate);
      if (has_treatment) {
        r.treatments.push_back("drug_" + std::to_string(k) + "_" +
                               std::to_string(rng.integer(0, 7)));
      }
      r.criteria.push_back("inclusion: condition group " + std::to_string(k) +
                           ", age " + std::to_string(rng.integer(18, 40)) + " to " +
                           std::to_string(rng.integer(50, 80)));

      EmbeddingRow& row = d.row;
      row.h_d = a_d[k] + gaussian(rng, p, sd);
      const Vector treatment_noise = gaussian(rng, p, sd);
      row.h_t = has_treatment ? Vector(a_t[k] + treatment_noise) : Vector::Zero(p);
      const double seen = latent[k][y] + rng.normal(0.0, config.progression_noise);
      row.h_c = a_c[k] + seen * progression_dir + gaussian(rng, p, sd);
      row.z = z_centre[k] + gaussian(rng, q, config.z_noise);

      const double signal =
          (has_treatment && sd > 0) ? signal_dir.dot(treatment_noise) / sd : 0.0;
      const double lg = logit(config.base_rate(k)) +
                        config.drift_slope(k) * (r.start_year - mid) +
                        config.progression_effect * latent[k][y] +
                        config.feature_effect * signal;
      d.probability = logistic(lg);
      r.label = rng.bernoulli(d.probability) ? 1 : 0;
      drafts.push_back(std::move(d));
    }
  }

  // Ids carry no topic information.
  std::vector<int> perm(drafts.size());
  std::iota(perm.begin(), perm.end(), 1);
  for (std::size_t i = perm.size(); i-- > 1;) {
    std::swap(perm[i], perm[static_cast<std::size_t>(rng.next() % (i + 1))]);
  }
  for (std::size_t i = 0; i < drafts.size(); ++i) {
    drafts[i].record.id = synth_id(perm[i]);
    drafts[i].row.id = drafts[i].record.id;
  }

  // Chronological split per topic: earliest 70% train, next 10% valid.
  for (int k = 1; k <= K; ++k) {
    std::vector<Draft*> members;
    for (auto& d : drafts) {
      if (d.topic == k) members.push_back(&d);
    }
    std::sort(members.begin(), members.end(), [](const Draft* a, const Draft* b) {
      if (a->record.start_year != b->record.start_year) {
        return a->record.start_year < b->record.start_year;
      }
      return a->record.id < b->record.id;
    });
    const std::size_t n = members.size();
    const std::size_t n_train = (7 * n) / 10;
    const std::size_t n_valid_end = (8 * n) / 10;
    for (std::size_t i = 0; i < n; ++i) {
      // Test labels stay in the file for scoring; training never reads them.
      members[i]->record.split =
          i < n_train ? Split::Train : (i < n_valid_end ? Split::Valid : Split::Test);
    }
  }

  std::sort(drafts.begin(), drafts.end(), [](const Draft& a, const Draft& b) {
    return a.record.id < b.record.id;
  });
  SynthDataset out;
  out.embeddings.p = p;
  out.embeddings.q = q;
  for (auto& d : drafts) {
    out.records.push_back(std::move(d.record));
    out.embeddings.rows.push_back(std::move(d.row));
    out.true_topic.push_back(d.topic);
    out.probability.push_back(d.probability);
  }
  return out;
}

void write_dataset(const SynthDataset& data, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  save_trials(data.records, (fs::path(dir) / "trials.jsonl").string());
  {
    std::ofstream out(fs::path(dir) / "embeddings.tsv");
    if (!out) throw DataError("cannot write embeddings in " + dir);
    write_embeddings(data.embeddings, out);
  }
  std::ofstream out(fs::path(dir) / "truth.tsv");
  if (!out) throw DataError("cannot write truth file in " + dir);
  out << "id\ttopic\tprobability\n";
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    out << data.records[i].id << '\t' << data.true_topic[i] << '\t'
        << format_double(data.probability[i]) << '\n';
  }
}

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::NoTopic: return "no-topic";
    case Variant::NoSequence: return "no-sequence";
    case Variant::NoMeta: return "no-meta";
  }
  return "?";
}

Variant parse_variant(std::string_view text) {
  if (text == "full") return Variant::Full;
  if (text == "no-topic") return Variant::NoTopic;
  if (text == "no-sequence") return Variant::NoSequence;
  if (text == "no-meta") return Variant::NoMeta;
  throw ConfigError("unknown ablation variant '" + std::string(text) +
                    "' (expected full, no-topic, no-sequence, no-meta)");
}

AblationSettings ablation_variants(Variant v) {
  AblationSettings s;
  switch (v) {
    case Variant::Full:
      break;
    case Variant::NoTopic:
      // A single task leaves nothing to meta-learn across.
      s.single_topic = true;
      s.task_specific = false;
      s.inner_loop = false;
      break;
    case Variant::NoSequence:
      s.zero_history = true;
      break;
    case Variant::NoMeta:
      s.task_specific = false;
      s.inner_loop = false;
      break;
  }
  return s;
}

}  // namespace spot
