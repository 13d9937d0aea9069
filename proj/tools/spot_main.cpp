#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "spot/benchgen.hpp"
#include "spot/evaluation.hpp"
#include "spot/pipeline.hpp"

namespace fs = std::filesystem;
using namespace spot;

namespace {

constexpr const char* kOutputRootEnv = "SPOT_OUTPUT_ROOT";

struct Overrides {
  std::string config_path;
  std::map<std::string, std::string> values;
};

void add_override(CLI::App* app, Overrides& ov, const std::string& flag,
                  const std::string& key, const std::string& help) {
  app->add_option_function<std::string>(
      flag, [&ov, key](const std::string& v) { ov.values[key] = v; }, help);
}

void add_run_options(CLI::App* app, Overrides& ov) {
  app->add_option("--config", ov.config_path, "key = value config file");
  add_override(app, ov, "--trials", "trials", "trial file (JSON lines)");
  add_override(app, ov, "--features", "features", "precomputed:<path> or hashed:<seed>");
  add_override(app, ov, "--phase", "phase", "I, II, III or all");
  add_override(app, ov, "--seed", "seed", "root seed");
  add_override(app, ov, "--run-dir", "output_dir", "run directory");
  add_override(app, ov, "--variant", "variant", "full, no-topic, no-sequence, no-meta");
}

RunConfig resolve(const Overrides& ov) {
  KeyValueConfig kv;
  if (!ov.config_path.empty()) kv = KeyValueConfig::load(ov.config_path);
  for (const auto& [k, v] : ov.values) kv.set(k, v);
  RunConfig cfg = RunConfig::from_kv(kv);
  if (cfg.output_dir.empty()) {
    const char* root = std::getenv(kOutputRootEnv);
    const fs::path base = root && *root ? fs::path(root) : fs::path("spot-runs");
    cfg.output_dir = (base / ("seed-" + std::to_string(cfg.root_seed()))).string();
  }
  return cfg;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(static_cast<int>(parse_int(item)));
  }
  if (out.empty()) throw ConfigError("expected a comma-separated integer list");
  return out;
}

void print_metrics(const MetricReport& m) {
  std::cout << "pr_auc\t" << format_double(m.pr_auc) << "\nroc_auc\t" << format_double(m.roc_auc)
            << "\nf1\t" << format_double(m.f1) << "\npositives\t" << m.positives << "\nnegatives\t" << m.negatives << '\n';
}

template <typename Fn>
void write_to(const fs::path& path, Fn&& fn) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  fn(out);
}

void evaluate_standalone(const std::string& predictions_path, const std::string& labels_path,
                         const std::string& sequences_path, int bins, double threshold,
                         const fs::path& out_dir) {
  std::ifstream in(predictions_path);
  if (!in) throw DataError("cannot read " + predictions_path);
  const auto predictions = read_predictions(in);
  const auto set = load_trials(labels_path);
  const auto idx = index_by_id(set.records);
  std::vector<double> scores;
  std::vector<int> labels, topics;
  std::map<std::string, double> pred_by_id;
  std::map<std::string, int> label_by_id;
  for (const auto& p : predictions) {
    auto it = idx.find(p.id);
    if (it == idx.end()) throw DataError("no trial record for prediction id \"" + p.id + "\"");
    const auto& label = set.records[it->second].label;
    if (!label) continue;
    scores.push_back(p.probability);
    labels.push_back(*label);
    topics.push_back(p.topic);
    pred_by_id[p.id] = p.probability;
    label_by_id[p.id] = *label;
  }
  if (scores.empty()) throw DataError("no labeled predictions to evaluate");
  fs::create_directories(out_dir);
  const auto metrics = evaluate_metrics(scores, labels, threshold);
  write_to(out_dir / "metrics.tsv", [&](std::ostream& o) { write_metric_report(metrics, o); });
  write_to(out_dir / "calibration.tsv",
           [&](std::ostream& o) { write_calibration_report(calibration(scores, labels, bins), o); });
  write_to(out_dir / "topics.tsv", [&](std::ostream& o) {
    write_topic_report(topic_distribution(topics, scores, labels), o);
  });
  write_to(out_dir / "proportion.tsv", [&](std::ostream& o) {
    write_proportion_report(relative_proportion(scores, labels, bins), o);
  });
  if (!sequences_path.empty()) {
    std::ifstream sin(sequences_path);
    if (!sin) throw DataError("cannot read " + sequences_path);
    const auto seqs = read_sequences(sin);
    write_to(out_dir / "progression.tsv", [&](std::ostream& o) {
      write_progression_report(progression(seqs, pred_by_id, label_by_id), o);
    });
  }
  print_metrics(metrics);
}

int exit_code(const std::exception& e) {
  if (auto* s = dynamic_cast<const StageError*>(&e)) return s->exit_code();
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const DataError*>(&e)) return kExitData;
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return kExitIo;
  return kExitInternal;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trial outcome prediction with topic sequences and meta-learning"};
  app.require_subcommand(1);
  Overrides ov;

  auto* ingest = app.add_subcommand("ingest", "validate and featurize a trial file");
  add_run_options(ingest, ov);

  auto* gen = app.add_subcommand("gen", "generate a synthetic benchmark corpus");
  std::string gen_config, gen_out;
  std::optional<std::uint64_t> gen_seed;
  gen->add_option("--config", gen_config, "generator config file");
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--seed", gen_seed, "override generator seed");

  auto* cluster = app.add_subcommand("cluster", "fit topics on train embeddings");
  add_run_options(cluster, ov);
  std::string k_text;
  cluster->add_option("--k", k_text, "K or a comma list of candidates");
  add_override(cluster, ov, "--max-iters", "kmeans_max_iters", "Lloyd iteration cap");
  add_override(cluster, ov, "--tol", "kmeans_tol", "SSD improvement tolerance");

  auto* sequences = app.add_subcommand("sequences", "build topic sequences");
  add_run_options(sequences, ov);
  std::string seq_assignments, seq_output;
  sequences->add_option("--assignments", seq_assignments, "assignment file; skips the pipeline");
  sequences->add_option("--output", seq_output, "sequence dump path (default stdout)");

  auto* train = app.add_subcommand("train", "meta-train the model");
  add_run_options(train, ov);
  add_override(train, ov, "--alpha", "alpha", "inner learning rate");
  add_override(train, ov, "--beta", "beta", "outer learning rate");
  add_override(train, ov, "--inner-steps", "inner_steps", "inner SGD steps");
  add_override(train, ov, "--task-batch", "task_batch", "tasks per episode");
  add_override(train, ov, "--episodes", "episodes", "episode budget");
  std::string checkpoint_out;
  train->add_option("--checkpoint", checkpoint_out, "copy the checkpoint here");

  auto* adapt = app.add_subcommand("adapt", "adapt per-topic parameters");
  add_run_options(adapt, ov);
  std::vector<int> adapt_topics;
  adapt->add_option("--topic", adapt_topics, "topic to adapt (repeatable; default all)");
  add_override(adapt, ov, "--budget", "adapt_budget", "adaptation steps");

  auto* predict = app.add_subcommand("predict", "score trials");
  add_run_options(predict, ov);
  std::string predict_input, predict_out;
  predict->add_option("--input", predict_input, "trial file to score (default: test split)");
  predict->add_option("--out", predict_out, "probability file (default stdout)");
  add_override(predict, ov, "--prefix-mode", "prefix_mode", "inclusive or strict");

  auto* evaluate = app.add_subcommand("evaluate", "write evaluation reports");
  add_run_options(evaluate, ov);
  std::string eval_predictions, eval_labels, eval_sequences, eval_out = "reports";
  int eval_bins = 10;
  double eval_threshold = 0.5;
  evaluate->add_option("--predictions", eval_predictions, "prediction file; skips the pipeline");
  evaluate->add_option("--labels", eval_labels, "trial file with labels");
  evaluate->add_option("--sequences", eval_sequences, "sequence dump for the progression report");
  evaluate->add_option("--out", eval_out, "report directory");
  evaluate->add_option("--threshold", eval_threshold, "F1 threshold");
  evaluate->add_option_function<int>(
      "--bins", [&](int b) { eval_bins = b; ov.values["bins"] = std::to_string(b); },
      "calibration bins");

  auto* sweep = app.add_subcommand("sweep-k", "one run per K");
  add_run_options(sweep, ov);
  std::string sweep_ks = "1,3,5,10,30";
  sweep->add_option("--ks", sweep_ks, "comma list of K");

  auto* ablate = app.add_subcommand("ablate", "compare ablation variants");
  add_run_options(ablate, ov);
  std::string ablate_variants = "full,no-topic,no-sequence,no-meta";
  ablate->add_option("--variants", ablate_variants, "comma list of variants");

  auto* run = app.add_subcommand("run", "run every stage");
  add_run_options(run, ov);
  add_override(run, ov, "--k", "k", "number of topics");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (gen->parsed()) {
      KeyValueConfig kv;
      if (!gen_config.empty()) kv = KeyValueConfig::load(gen_config);
      if (gen_seed) kv.set("seed", std::to_string(*gen_seed));
      const auto data = generate(SynthConfig::from_kv(kv));
      write_dataset(data, gen_out);
      std::cout << "trials\t" << data.records.size() << "\nout\t" << gen_out << '\n';
      return kExitOk;
    }
    if (sequences->parsed() && !seq_assignments.empty()) {
      if (!ov.values.count("trials") && ov.config_path.empty()) {
        throw ConfigError("sequences --assignments also needs --trials");
      }
      const RunConfig cfg = resolve(ov);
      const auto set = load_trials(cfg.trials);
      std::ifstream in(seq_assignments);
      if (!in) throw DataError("cannot read " + seq_assignments);
      const auto seqs = build_sequences(read_assignment(in), set.records);
      if (seq_output.empty()) {
        write_sequences(seqs, std::cout);
      } else {
        write_to(seq_output, [&](std::ostream& o) { write_sequences(seqs, o); });
      }
      return kExitOk;
    }
    if (evaluate->parsed() && !eval_predictions.empty()) {
      if (eval_labels.empty()) throw ConfigError("evaluate --predictions needs --labels");
      evaluate_standalone(eval_predictions, eval_labels, eval_sequences, eval_bins,
                          eval_threshold, eval_out);
      return kExitOk;
    }

    RunConfig cfg = resolve(ov);
    if (cluster->parsed() && !k_text.empty()) {
      if (k_text.find(',') != std::string::npos) {
        cfg.k_candidates = parse_int_list(k_text);
      } else {
        cfg.k = static_cast<int>(parse_int(k_text));
        cfg.k_candidates.clear();
      }
    }
    if (adapt->parsed() && !adapt_topics.empty()) cfg.adapt_topics = adapt_topics;

    if (ingest->parsed()) {
      run_pipeline(cfg, Stage::Ingest);
      std::ifstream in(fs::path(cfg.output_dir) / "manifest.json");
      std::cout << in.rdbuf();
    } else if (cluster->parsed()) {
      const auto r = run_pipeline(cfg, Stage::Cluster);
      std::cout << "topics\t" << r.topics << "\nrun_dir\t" << r.dir << '\n';
    } else if (sequences->parsed()) {
      const auto r = run_pipeline(cfg, Stage::Sequences);
      std::cout << "tasks\t" << r.tasks << "\nrun_dir\t" << r.dir << '\n';
    } else if (train->parsed()) {
      const auto r = run_pipeline(cfg, Stage::Train);
      if (!checkpoint_out.empty()) {
        fs::copy_file(fs::path(r.dir) / "checkpoint.txt", checkpoint_out,
                      fs::copy_options::overwrite_existing);
      }
      std::cout << "episodes\t" << r.train.episodes_run << "\nconverged\t"
                << (r.train.converged ? "yes" : "no") << "\nrun_dir\t" << r.dir << '\n';
    } else if (adapt->parsed()) {
      const auto r = run_pipeline(cfg, Stage::Adapt);
      std::cout << "run_dir\t" << r.dir << '\n';
    } else if (predict->parsed()) {
      std::vector<Prediction> preds;
      if (!predict_input.empty()) {
        preds = predict_records(cfg, load_trials(predict_input).records);
      } else {
        preds = run_pipeline(cfg, Stage::Predict).predictions;
      }
      if (predict_out.empty()) {
        write_predictions(preds, std::cout);
      } else {
        write_to(predict_out, [&](std::ostream& o) { write_predictions(preds, o); });
      }
    } else if (evaluate->parsed() || run->parsed()) {
      const auto r = run_pipeline(cfg, Stage::Evaluate);
      print_metrics(r.test_metrics);
      std::cout << "run_dir\t" << r.dir << '\n';
    } else if (sweep->parsed()) {
      const auto rows = sweep_k(cfg, parse_int_list(sweep_ks));
      std::ostringstream table;
      table << "K\tpr_auc\tf1\troc_auc\n";
      for (const auto& row : rows) {
        table << row.K << '\t' << format_double(row.pr_auc) << '\t' << format_double(row.f1)
              << '\t' << format_double(row.roc_auc) << '\n';
      }
      write_to(fs::path(cfg.output_dir) / "sweep_k.tsv", [&](std::ostream& o) { o << table.str(); });
      std::cout << table.str();
    } else if (ablate->parsed()) {
      std::vector<Variant> variants;
      std::stringstream ss(ablate_variants);
      std::string item;
      while (std::getline(ss, item, ',')) variants.push_back(parse_variant(item));
      const auto rows = run_ablation(cfg, variants);
      std::ostringstream table;
      table << "variant\tpr_auc\tf1\troc_auc\n";
      for (const auto& row : rows) {
        table << to_string(row.variant) << '\t' << format_double(row.metrics.pr_auc) << '\t'
              << format_double(row.metrics.f1) << '\t' << format_double(row.metrics.roc_auc)
              << '\n';
      }
      write_to(fs::path(cfg.output_dir) / "ablation.tsv", [&](std::ostream& o) { o << table.str(); });
      std::cout << table.str();
    }
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "spot: " << e.what() << '\n';
    return exit_code(e);
  }
}
