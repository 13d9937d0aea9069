#include "spot/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace spot {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string_view year_mode_name(YearMode m) {
  return m == YearMode::Centered ? "centered" : "raw";
}
std::string_view head_input_name(HeadInput h) {
  return h == HeadInput::Concat ? "concat" : "adjusted";
}

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const DataError*>(&e)) return kExitData;
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return kExitIo;
  return kExitInternal;
}

std::string string_checksum(const std::string& text) {
  return checksum_hex(fnv1a64(text));
}

template <typename Writer>
void write_file(const fs::path& path, Writer&& writer) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  writer(out);
  if (!out) throw DataError("write failed for " + path.string());
}

template <typename Reader>
auto read_file(const fs::path& path, Reader&& reader) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  return reader(in);
}

// Config keys each stage reads. A stage key covers its own keys and, via the
// chain, those of every earlier stage, so a change reruns the first stage
// that depends on it and everything after.
const std::map<std::string, std::vector<std::string>>& stage_config_keys() {
  static const std::map<std::string, std::vector<std::string>> keys = {
      {"ingest", {"schema_version", "trials", "features", "phase", "p", "q", "seed"}},
      {"cluster", {"k", "k_candidates", "kmeans_max_iters", "kmeans_tol", "variant"}},
      {"sequences", {}},
      {"train", {"heads", "year_mode", "head_input", "alpha", "beta", "inner_steps",
                 "task_batch", "tol", "episodes"}},
      {"adapt", {"adapt_budget", "adapt_topics"}},
      {"predict", {"prefix_mode"}},
      {"evaluate", {"bins", "threshold"}},
  };
  return keys;
}

class Pipeline {
 public:
  explicit Pipeline(const RunConfig& config)
      : cfg_(config), ablation_(ablation_variants(config.variant)) {
    cfg_.validate();
    persist_ = !cfg_.output_dir.empty();
    if (persist_) {
      dir_ = cfg_.output_dir;
      fs::create_directories(dir_);
      fs::create_directories(dir_ / "reports");
      const fs::path manifest = dir_ / "manifest.json";
      if (fs::exists(manifest)) {
        try {
          std::ifstream in(manifest);
          previous_ = json::parse(in);
        } catch (const json::exception&) {
          previous_ = json::object();
        }
      }
    }
    manifest_["schema_version"] = kConfigSchemaVersion;
    manifest_["config"] = json::object();
    const KeyValueConfig full = cfg_.to_kv();
    std::set<std::string> covered = {"output_dir"};
    for (const auto& [name, keys] : stage_config_keys()) {
      std::string echo;
      for (const auto& k : keys) {
        echo += k + "=" + full.get_string(k, "") + "\n";
        covered.insert(k);
      }
      stage_echo_[name] = echo;
    }
    for (const auto& [k, v] : full.entries()) {
      if (!covered.count(k)) throw std::logic_error("config key '" + k + "' belongs to no stage");
      manifest_["config"][k] = v;
    }
    manifest_["stages"] = json::object();
  }

  RunResult run(Stage until) {
    result_.dir = cfg_.output_dir;
    const std::vector<std::pair<Stage, void (Pipeline::*)()>> order = {
        {Stage::Ingest, &Pipeline::ingest},       {Stage::Cluster, &Pipeline::cluster},
        {Stage::Sequences, &Pipeline::sequences}, {Stage::Train, &Pipeline::train},
        {Stage::Adapt, &Pipeline::adapt},         {Stage::Predict, &Pipeline::predict},
        {Stage::Evaluate, &Pipeline::evaluate}};
    for (const auto& [stage, fn] : order) {
      (this->*fn)();
      if (stage == until) break;
    }
    return std::move(result_);
  }

  std::vector<Prediction> score(const std::vector<TrialRecord>& records) {
    run(Stage::Adapt);
    const FeatureSpec spec = FeatureSpec::parse(cfg_.features);
    const auto features = featurize_all(records, spec, cfg_.p, cfg_.q);
    PredictOptions opts;
    opts.strict = cfg_.strict_prefix;
    std::vector<Prediction> out;
    for (std::size_t i = 0; i < records.size(); ++i) {
      Prediction p;
      p.id = records[i].id;
      p.split = records[i].split;
      p.topic = assign_topic(centroids_, features[i].z);
      p.probability =
          predict_trial(records[i], features[i], state_, centroids_, context_, table_, opts);
      p.label = records[i].label;
      out.push_back(std::move(p));
    }
    return out;
  }

 private:
  // Runs or resumes one stage. A stage is reused when the previous manifest
  // holds the same key and every output file still has its recorded checksum.
  void stage(const std::string& name, const std::vector<std::string>& outputs,
             const std::function<void()>& compute,
             const std::function<void()>& save,
             const std::function<void()>& load) {
    const std::string key = string_checksum(chain_ + "|" + name + "|" + stage_echo_.at(name));
    const auto t0 = std::chrono::steady_clock::now();
    try {
      bool resumed = false;
      if (persist_ && load && can_resume(name, key, outputs)) {
        load();
        resumed = true;
        result_.resumed_stages.push_back(name);
      } else {
        compute();
        if (persist_ && save) save();
      }
      json rec;
      rec["key"] = key;
      rec["resumed"] = resumed;
      rec["seconds"] = std::chrono::duration<double>(
                           std::chrono::steady_clock::now() - t0).count();
      rec["outputs"] = json::object();
      // Ingest folds its config keys and the input checksums into chain_.
      std::string chained = key + "|" + chain_;
      for (const auto& out : outputs) {
        const std::string sum = persist_ ? file_checksum((dir_ / out).string()) : "";
        rec["outputs"][out] = sum;
        chained += "|" + sum;
      }
      manifest_["stages"][name] = rec;
      chain_ = string_checksum(chained);
      save_manifest();
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      save_manifest();
      throw StageError(name, e.what(), exit_code_for(e));
    }
  }

  bool can_resume(const std::string& name, const std::string& key,
                  const std::vector<std::string>& outputs) const {
    if (!previous_.is_object() || !previous_.contains("stages")) return false;
    const auto& stages = previous_["stages"];
    if (!stages.contains(name)) return false;
    const auto& rec = stages[name];
    if (!rec.contains("key") || rec["key"] != key) return false;
    for (const auto& out : outputs) {
      const fs::path path = dir_ / out;
      if (!fs::exists(path)) return false;
      if (!rec["outputs"].contains(out) || rec["outputs"][out] != file_checksum(path.string())) {
        return false;
      }
    }
    return true;
  }

  void save_manifest() {
    if (!persist_) return;
    write_file(dir_ / "manifest.json", [&](std::ostream& out) {
      out << manifest_.dump(2) << '\n';
    });
  }

  // -- stages ---------------------------------------------------------------

  void ingest() {
    stage("ingest", {}, [&] {
      TrialSet set = load_trials(cfg_.trials);
      json inputs;
      inputs["trials"] = set.manifest.checksum;
      const FeatureSpec spec = FeatureSpec::parse(cfg_.features);
      if (spec.source == FeatureSource::Precomputed) {
        inputs["embeddings"] = file_checksum(spec.path);
      }
      for (auto& r : set.records) {
        if (!cfg_.phase || r.phase == *cfg_.phase) records_.push_back(std::move(r));
      }
      if (records_.empty()) throw DataError("no trials left after phase filter");
      features_ = featurize_all(records_, spec, cfg_.p, cfg_.q);
      table_ = TrialTable::build(records_, features_);
      DatasetManifest dm = compute_manifest(records_);
      dm.p = static_cast<int>(features_.front().p());
      dm.q = static_cast<int>(features_.front().q());
      dm.source = spec.source;
      dm.checksum = set.manifest.checksum;
      json counts = json::object();
      for (Phase ph : {Phase::I, Phase::II, Phase::III}) {
        json row = json::object();
        for (Split sp : {Split::Train, Split::Valid, Split::Test}) {
          row[std::string(to_string(sp))] = dm.count(ph, sp);
        }
        counts[std::string(to_string(ph))] = row;
      }
      manifest_["dataset"] = {{"counts", counts},
                              {"p", dm.p},
                              {"q", dm.q},
                              {"source", std::string(to_string(dm.source))},
                              {"checksum", dm.checksum}};
      manifest_["inputs"] = inputs;
      chain_ = string_checksum(stage_echo_.at("ingest") + inputs.dump());
    }, nullptr, nullptr);
  }

  void cluster() {
    std::vector<std::string> outputs = {"centroids.tsv", "assignments.tsv"};
    const bool selecting = !cfg_.k_candidates.empty() && !ablation_.single_topic;
    if (selecting) outputs.push_back("k_selection.tsv");
    stage("cluster", outputs, [&] {
      std::vector<LabeledEmbedding> train;
      for (std::size_t i = 0; i < records_.size(); ++i) {
        if (records_[i].split == Split::Train) train.push_back({records_[i].id, features_[i].z});
      }
      if (train.empty()) throw DataError("no train-split trials to cluster");
      int K = ablation_.single_topic ? 1 : cfg_.k;
      const std::uint64_t seed = derive_seed(cfg_.root_seed(), "clustering");
      if (selecting) {
        k_report_ = select_k(train, cfg_.k_candidates, seed, cfg_.kmeans_max_iters,
                             cfg_.kmeans_tol);
        K = k_report_->recommended().value_or(cfg_.k_candidates.front());
      }
      KMeansOptions opts;
      opts.K = K;
      opts.seed = seed;
      opts.max_iters = cfg_.kmeans_max_iters;
      opts.tol = cfg_.kmeans_tol;
      auto fit = kmeans_fit(train, opts);
      centroids_ = fit.model;
      assign_records();
    }, [&] {
      write_file(dir_ / "centroids.tsv", [&](std::ostream& o) { write_centroids(centroids_, o); });
      write_file(dir_ / "assignments.tsv", [&](std::ostream& o) { write_assignment(assignment_, o); });
      if (selecting) {
        write_file(dir_ / "k_selection.tsv", [&](std::ostream& o) { write_k_report(*k_report_, o); });
      }
    }, [&] {
      centroids_ = read_file(dir_ / "centroids.tsv", [](std::istream& i) { return read_centroids(i); });
      assignment_ = read_file(dir_ / "assignments.tsv", [](std::istream& i) { return read_assignment(i); });
      if (assignment_.size() != records_.size()) throw DataError("assignment file out of date");
    });
    result_.topics = centroids_.K;
    result_.k_selection = k_report_;
  }

  // Train trials keep their fitted labels; everything else is assigned to
  // the nearest centroid. Both agree because the fit ends on a nearest
  // assignment.
  void assign_records() {
    assignment_ = TopicAssignment{};
    for (std::size_t i = 0; i < records_.size(); ++i) {
      const Vector& z = features_[i].z;
      const int k = assign_topic(centroids_, z);
      assignment_.ids.push_back(records_[i].id);
      assignment_.topics.push_back(k);
      assignment_.distances.push_back((centroids_.centroids.row(k - 1).transpose() - z).squaredNorm());
    }
  }

  TopicAssignment assignment_for(std::initializer_list<Split> splits) const {
    TopicAssignment a;
    for (std::size_t i = 0; i < records_.size(); ++i) {
      if (std::find(splits.begin(), splits.end(), records_[i].split) == splits.end()) continue;
      a.ids.push_back(assignment_.ids[i]);
      a.topics.push_back(assignment_.topics[i]);
      a.distances.push_back(assignment_.distances[i]);
    }
    return a;
  }

  void sequences() {
    stage("sequences", {"sequences.txt"}, [&] {
      context_ = build_sequences(assignment_for({Split::Train, Split::Valid}), records_);
    }, [&] {
      write_file(dir_ / "sequences.txt", [&](std::ostream& o) { write_sequences(context_, o); });
    }, [&] {
      context_ = read_file(dir_ / "sequences.txt", [](std::istream& i) { return read_sequences(i); });
    });
    // Training windows: train-split trials only, labels attached.
    const auto train_seqs = build_sequences(assignment_for({Split::Train}), records_);
    tasks_.clear();
    for (const auto& seq : train_seqs) {
      Task t{seq.topic, make_view(seq, table_, true)};
      if (t.view.labeled_count() > 0) tasks_.push_back(std::move(t));
    }
    result_.tasks = tasks_.size();
  }

  int reference_year() const {
    std::vector<int> years;
    for (const auto& r : records_) {
      if (r.split == Split::Train) years.push_back(r.start_year);
    }
    std::sort(years.begin(), years.end());
    return years[(years.size() - 1) / 2];
  }

  void train() {
    stage("train", {"checkpoint.txt", "train_log.tsv"}, [&] {
      if (tasks_.empty()) throw DataError("no labeled training tasks");
      ModelConfig model;
      model.p = static_cast<int>(features_.front().p());
      model.heads = cfg_.heads;
      model.reference_year = reference_year();
      model.year_mode = cfg_.year_mode;
      model.head_input = cfg_.head_input;
      model.zero_history = ablation_.zero_history;
      MetaConfig meta = cfg_.meta;
      meta.task_specific = ablation_.task_specific;
      if (!ablation_.inner_loop) meta.inner_steps = 0;
      state_ = MetaState::init(model, meta, derive_seed(cfg_.root_seed(), "init"));
      train_report_ = meta_train(tasks_, state_, cfg_.episodes);
    }, [&] {
      write_file(dir_ / "checkpoint.txt", [&](std::ostream& o) { write_checkpoint(state_, o); });
      write_file(dir_ / "train_log.tsv", [&](std::ostream& o) {
        o << "# " << train_report_.config_echo << '\n';
        o << "episode\tmean_task_loss\tmax_param_delta\n";
        for (std::size_t i = 0; i < train_report_.loss_trace.size(); ++i) {
          o << i + 1 << '\t' << format_double(train_report_.loss_trace[i]) << '\t'
            << format_double(train_report_.delta_trace[i]) << '\n';
        }
      });
    }, [&] {
      state_ = read_file(dir_ / "checkpoint.txt", [](std::istream& i) { return read_checkpoint(i); });
    });
    if (!result_.resumed_stages.empty() && result_.resumed_stages.back() == "train" &&
        previous_.contains("train")) {
      manifest_["train"] = previous_["train"];
    } else {
      manifest_["train"] = {{"episodes_run", train_report_.episodes_run},
                            {"converged", train_report_.converged},
                            {"wall_seconds", train_report_.wall_seconds}};
    }
    result_.train = train_report_;
  }

  void adapt() {
    stage("adapt", {"adapted.txt"}, [&] {
      if (!state_.meta.task_specific) return;
      for (const auto& task : tasks_) {
        if (!cfg_.adapt_topics.empty() &&
            std::find(cfg_.adapt_topics.begin(), cfg_.adapt_topics.end(), task.topic) ==
                cfg_.adapt_topics.end()) {
          continue;
        }
        auto r = adapt_task(task, state_, cfg_.adapt_budget);
        state_.theta2_task[task.topic] = std::move(r.theta2);
      }
    }, [&] {
      write_file(dir_ / "adapted.txt", [&](std::ostream& o) { write_checkpoint(state_, o); });
    }, [&] {
      state_ = read_file(dir_ / "adapted.txt", [](std::istream& i) { return read_checkpoint(i); });
    });
  }

  void predict() {
    stage("predict", {"predictions.tsv"}, [&] {
      predictions_.clear();
      PredictOptions opts;
      opts.strict = cfg_.strict_prefix;
      for (std::size_t i = 0; i < records_.size(); ++i) {
        const auto& r = records_[i];
        if (r.split != Split::Test) continue;
        Prediction p;
        p.id = r.id;
        p.split = r.split;
        p.topic = assignment_.topics[i];
        p.probability = predict_trial(r, features_[i], state_, centroids_, context_, table_, opts);
        predictions_.push_back(p);
      }
    }, [&] {
      write_file(dir_ / "predictions.tsv", [&](std::ostream& o) { write_predictions(predictions_, o); });
    }, [&] {
      predictions_ = read_file(dir_ / "predictions.tsv", [](std::istream& i) { return read_predictions(i); });
    });
    const auto idx = index_by_id(records_);
    for (auto& p : predictions_) p.label = records_[idx.at(p.id)].label;
    result_.predictions = predictions_;
  }

  void evaluate() {
    const std::vector<std::string> outputs = {
        "reports/metrics.tsv", "reports/calibration.tsv", "reports/topics.tsv",
        "reports/progression.tsv", "reports/proportion.tsv"};
    stage("evaluate", outputs, [&] {
      std::vector<double> scores;
      std::vector<int> labels, topics;
      std::map<std::string, double> pred_by_id;
      std::map<std::string, int> label_by_id;
      for (const auto& p : predictions_) {
        if (!p.label) continue;
        scores.push_back(p.probability);
        labels.push_back(*p.label);
        topics.push_back(p.topic);
        pred_by_id[p.id] = p.probability;
        label_by_id[p.id] = *p.label;
      }
      if (scores.empty()) throw DataError("no labeled test predictions to evaluate");
      metrics_ = evaluate_metrics(scores, labels, cfg_.threshold);
      calibration_ = calibration(scores, labels, cfg_.bins);
      topic_report_ = topic_distribution(topics, scores, labels);
      const auto test_seqs = build_sequences(assignment_for({Split::Test}), records_);
      progression_ = progression(test_seqs, pred_by_id, label_by_id);
      proportion_ = relative_proportion(scores, labels, cfg_.bins);
    }, [&] {
      write_file(dir_ / "reports/metrics.tsv", [&](std::ostream& o) { write_metric_report(metrics_, o); });
      write_file(dir_ / "reports/calibration.tsv", [&](std::ostream& o) { write_calibration_report(calibration_, o); });
      write_file(dir_ / "reports/topics.tsv", [&](std::ostream& o) { write_topic_report(topic_report_, o); });
      write_file(dir_ / "reports/progression.tsv", [&](std::ostream& o) { write_progression_report(progression_, o); });
      write_file(dir_ / "reports/proportion.tsv", [&](std::ostream& o) { write_proportion_report(proportion_, o); });
    }, nullptr);
    result_.test_metrics = metrics_;
  }

  RunConfig cfg_;
  AblationSettings ablation_;
  bool persist_ = false;
  fs::path dir_;
  json previous_ = json::object();
  json manifest_ = json::object();
  std::map<std::string, std::string> stage_echo_;
  std::string chain_;

  std::vector<TrialRecord> records_;
  std::vector<TrialFeatures> features_;
  TrialTable table_;
  CentroidModel centroids_;
  TopicAssignment assignment_;
  std::optional<KSelectionReport> k_report_;
  std::vector<TopicSequence> context_;
  std::vector<Task> tasks_;
  MetaState state_;
  TrainReport train_report_;
  std::vector<Prediction> predictions_;
  MetricReport metrics_;
  CalibrationReport calibration_;
  TopicDistributionReport topic_report_;
  ProgressionReport progression_;
  std::vector<ProportionBin> proportion_;
  RunResult result_;
};

}  // namespace

RunConfig RunConfig::from_kv(const KeyValueConfig& kv) {
  const long long version = kv.get_int("schema_version", kConfigSchemaVersion);
  if (version != kConfigSchemaVersion) {
    throw ConfigError("unsupported config schema_version " + std::to_string(version));
  }
  RunConfig c;
  c.trials = kv.get_string("trials", c.trials);
  c.features = kv.get_string("features", c.features);
  const std::string phase = kv.get_string("phase", "all");
  if (phase != "all") {
    try {
      c.phase = parse_phase(phase);
    } catch (const DataError& e) {
      throw ConfigError(e.what());
    }
  }
  c.k = static_cast<int>(kv.get_int("k", c.k));
  c.k_candidates = kv.get_ints("k_candidates");
  c.p = static_cast<int>(kv.get_int("p", c.p));
  c.q = static_cast<int>(kv.get_int("q", c.q));
  c.heads = static_cast<int>(kv.get_int("heads", c.heads));
  const std::string ym = kv.get_string("year_mode", "centered");
  if (ym != "centered" && ym != "raw") throw ConfigError("year_mode must be centered or raw");
  c.year_mode = ym == "raw" ? YearMode::Raw : YearMode::Centered;
  const std::string hi = kv.get_string("head_input", "concat");
  if (hi != "concat" && hi != "adjusted") throw ConfigError("head_input must be concat or adjusted");
  c.head_input = hi == "adjusted" ? HeadInput::AdjustedOnly : HeadInput::Concat;
  c.meta.alpha = kv.get_double("alpha", c.meta.alpha);
  c.meta.beta = kv.get_double("beta", c.meta.beta);
  c.meta.inner_steps = static_cast<int>(kv.get_int("inner_steps", c.meta.inner_steps));
  c.meta.task_batch = static_cast<int>(kv.get_int("task_batch", c.meta.task_batch));
  c.meta.tol = kv.get_double("tol", c.meta.tol);
  c.episodes = static_cast<int>(kv.get_int("episodes", c.episodes));
  c.adapt_budget = static_cast<int>(kv.get_int("adapt_budget", c.adapt_budget));
  c.adapt_topics = kv.get_ints("adapt_topics");
  c.kmeans_max_iters = static_cast<int>(kv.get_int("kmeans_max_iters", c.kmeans_max_iters));
  c.kmeans_tol = kv.get_double("kmeans_tol", c.kmeans_tol);
  c.bins = static_cast<int>(kv.get_int("bins", c.bins));
  c.threshold = kv.get_double("threshold", c.threshold);
  const std::string pm = kv.get_string("prefix_mode", "inclusive");
  if (pm != "inclusive" && pm != "strict") throw ConfigError("prefix_mode must be inclusive or strict");
  c.strict_prefix = pm == "strict";
  c.variant = parse_variant(kv.get_string("variant", "full"));
  if (kv.has("seed")) {
    try {
      c.seed = parse_uint64(kv.get_string("seed", ""));
    } catch (const DataError&) {
      throw ConfigError("config: seed must be a non-negative integer");
    }
  }
  c.output_dir = kv.get_string("output_dir", "");
  return c;
}

KeyValueConfig RunConfig::to_kv() const {
  KeyValueConfig kv;
  kv.set("schema_version", std::to_string(kConfigSchemaVersion));
  kv.set("trials", trials);
  kv.set("features", features);
  kv.set("phase", phase ? std::string(to_string(*phase)) : "all");
  kv.set("k", std::to_string(k));
  kv.set("k_candidates", join_ints(k_candidates));
  kv.set("p", std::to_string(p));
  kv.set("q", std::to_string(q));
  kv.set("heads", std::to_string(heads));
  kv.set("year_mode", std::string(year_mode_name(year_mode)));
  kv.set("head_input", std::string(head_input_name(head_input)));
  kv.set("alpha", format_double(meta.alpha));
  kv.set("beta", format_double(meta.beta));
  kv.set("inner_steps", std::to_string(meta.inner_steps));
  kv.set("task_batch", std::to_string(meta.task_batch));
  kv.set("tol", format_double(meta.tol));
  kv.set("episodes", std::to_string(episodes));
  kv.set("adapt_budget", std::to_string(adapt_budget));
  kv.set("adapt_topics", join_ints(adapt_topics));
  kv.set("kmeans_max_iters", std::to_string(kmeans_max_iters));
  kv.set("kmeans_tol", format_double(kmeans_tol));
  kv.set("bins", std::to_string(bins));
  kv.set("threshold", format_double(threshold));
  kv.set("prefix_mode", strict_prefix ? "strict" : "inclusive");
  kv.set("variant", std::string(to_string(variant)));
  if (seed) kv.set("seed", std::to_string(*seed));
  kv.set("output_dir", output_dir);
  return kv;
}

void RunConfig::validate() const {
  if (!seed) throw ConfigError("config: seed is mandatory");
  if (trials.empty()) throw ConfigError("config: trials path is required");
  if (!fs::exists(trials)) throw ConfigError("config: trial file not found: " + trials);
  const FeatureSpec spec = FeatureSpec::parse(features);
  if (spec.source == FeatureSource::Precomputed && !fs::exists(spec.path)) {
    throw ConfigError("config: embedding file not found: " + spec.path);
  }
  if (k < 1) throw ConfigError("config: k must be >= 1");
  for (int c : k_candidates) {
    if (c < 1) throw ConfigError("config: k candidates must be >= 1");
  }
  if (p <= 0 || q <= 0) throw ConfigError("config: p and q must be > 0");
  if (heads <= 0) throw ConfigError("config: heads must be > 0");
  meta.validate();
  if (episodes < 0) throw ConfigError("config: episodes must be >= 0");
  if (adapt_budget < 0) throw ConfigError("config: adapt_budget must be >= 0");
  if (kmeans_max_iters < 1) throw ConfigError("config: kmeans_max_iters must be >= 1");
  if (bins < 2) throw ConfigError("config: bins must be >= 2");
}

std::uint64_t RunConfig::root_seed() const {
  if (!seed) throw ConfigError("config: seed is mandatory");
  return *seed;
}

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::Ingest: return "ingest";
    case Stage::Cluster: return "cluster";
    case Stage::Sequences: return "sequences";
    case Stage::Train: return "train";
    case Stage::Adapt: return "adapt";
    case Stage::Predict: return "predict";
    case Stage::Evaluate: return "evaluate";
  }
  return "?";
}

Stage parse_stage(std::string_view text) {
  for (Stage s : {Stage::Ingest, Stage::Cluster, Stage::Sequences, Stage::Train,
                  Stage::Adapt, Stage::Predict, Stage::Evaluate}) {
    if (to_string(s) == text) return s;
  }
  throw ConfigError("unknown stage '" + std::string(text) + "'");
}

RunResult run_pipeline(const RunConfig& config, Stage until) {
  Pipeline pipeline(config);
  return pipeline.run(until);
}

std::vector<Prediction> predict_records(const RunConfig& config,
                                        const std::vector<TrialRecord>& records) {
  Pipeline pipeline(config);
  return pipeline.score(records);
}

std::vector<SweepRow> sweep_k(const RunConfig& config, const std::vector<int>& ks) {
  if (ks.empty()) throw ConfigError("sweep_k: empty K list");
  std::vector<SweepRow> rows;
  for (int K : ks) {
    RunConfig c = config;
    c.k = K;
    c.k_candidates.clear();
    c.seed = derive_seed(config.root_seed(), "sweep", static_cast<std::uint64_t>(K));
    if (!config.output_dir.empty()) {
      c.output_dir = (fs::path(config.output_dir) / ("k" + std::to_string(K))).string();
    }
    auto r = run_pipeline(c);
    rows.push_back({K, r.test_metrics.pr_auc, r.test_metrics.f1, r.test_metrics.roc_auc});
  }
  return rows;
}

std::vector<AblationRow> run_ablation(const RunConfig& config,
                                      const std::vector<Variant>& variants) {
  std::vector<AblationRow> rows;
  for (Variant v : variants) {
    RunConfig c = config;
    c.variant = v;
    if (!config.output_dir.empty()) {
      c.output_dir = (fs::path(config.output_dir) / std::string(to_string(v))).string();
    }
    rows.push_back({v, run_pipeline(c).test_metrics});
  }
  return rows;
}

void write_predictions(const std::vector<Prediction>& predictions,
                       std::ostream& out) {
  out << "id\tsplit\ttopic\tprobability\n";
  for (const auto& p : predictions) {
    out << p.id << '\t' << to_string(p.split) << '\t' << p.topic << '\t'
        << format_double(p.probability) << '\n';
  }
}

std::vector<Prediction> read_predictions(std::istream& in) {
  std::vector<Prediction> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.rfind("id\t", 0) == 0) continue;
    std::istringstream row(line);
    std::vector<std::string> fields;
    std::string f;
    while (std::getline(row, f, '\t')) fields.push_back(f);
    Prediction p;
    if (fields.size() == 4) {
      p.id = fields[0];
      p.split = parse_split(fields[1]);
      p.topic = static_cast<int>(parse_int(fields[2]));
      p.probability = parse_double(fields[3]);
    } else if (fields.size() == 2) {
      p.id = fields[0];
      p.probability = parse_double(fields[1]);
    } else {
      throw DataError("prediction row needs id, split, topic, probability", line_no);
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace spot
