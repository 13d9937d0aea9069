#include "spot/meta_trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace spot {

namespace {

double task_loss(const Task& task, const Theta1& th1, const Theta2& th2,
                 const ModelConfig& cfg) {
  return forward_sequence(task.view, th1, th2, cfg).loss();
}

// One plain SGD step on theta2 with theta1 frozen; returns the loss before
// the step.
double inner_step(const Task& task, const Theta1& th1, Theta2& th2,
                  const ModelConfig& cfg, double lr) {
  zero_grads(th2);
  auto pass = forward_sequence(task.view, th1, th2, cfg);
  backward(pass, cfg, th2, nullptr);
  sgd_step(th2, lr);
  return pass.loss();
}

void require_labels(const Task& task) {
  if (task.view.labeled_count() == 0) {
    throw DataError("task " + std::to_string(task.topic) + " has no labeled trials");
  }
}

// Shared body of local_update: adapts a copy of the global theta2.
Theta2 run_inner_loop(const Task& task, const MetaState& state,
                      double* loss_before) {
  Theta2 th = state.theta2_global;
  for (int s = 0; s < state.meta.inner_steps; ++s) {
    double l = inner_step(task, state.theta1, th, state.model, state.meta.alpha);
    if (s == 0 && loss_before) *loss_before = l;
  }
  if (state.meta.inner_steps == 0 && loss_before) {
    *loss_before = task_loss(task, state.theta1, th, state.model);
  }
  return th;
}

template <typename Theta>
void add_grads(Theta& acc, const Theta& src) {
  auto a = acc.params();
  auto s = src.params();
  for (std::size_t i = 0; i < a.size(); ++i) a[i]->grad += s[i]->grad;
}

template <typename Theta>
double apply_mean_step(Theta& theta, const Theta& grad_sum, double beta,
                       double count) {
  auto t = theta.params();
  auto g = grad_sum.params();
  double delta = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const Matrix step = (beta / count) * g[i]->grad;
    t[i]->value -= step;
    if (step.size()) delta = std::max(delta, step.cwiseAbs().maxCoeff());
  }
  return delta;
}

struct GlobalStep {
  double mean_loss = 0.0;
  double delta = 0.0;
  std::vector<double> task_losses;
};

// Gradient at (theta1, theta2^k) for every task, averaged and applied to
// the globals.
GlobalStep global_step(const std::vector<const Task*>& batch,
                       const std::vector<Theta2*>& adapted, MetaState& state) {
  zero_grads(state.theta1);
  Theta2 sum = state.theta2_global;
  zero_grads(sum);
  GlobalStep out;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Theta2& th2 = *adapted[i];
    zero_grads(th2);
    auto pass = forward_sequence(batch[i]->view, state.theta1, th2, state.model);
    backward(pass, state.model, th2, &state.theta1);
    add_grads(sum, th2);
    const double l = pass.loss();
    out.task_losses.push_back(l);
    out.mean_loss += l;
  }
  const double n = static_cast<double>(batch.size());
  out.mean_loss /= n;
  out.delta = std::max(apply_mean_step(state.theta1, state.theta1, state.meta.beta, n),
                       apply_mean_step(state.theta2_global, sum, state.meta.beta, n));
  zero_grads(state.theta1);
  return out;
}

}  // namespace

TrialTable TrialTable::build(const std::vector<TrialRecord>& records,
                             const std::vector<TrialFeatures>& features) {
  if (records.size() != features.size()) {
    throw DataError("records and features differ in length");
  }
  TrialTable t;
  for (std::size_t i = 0; i < records.size(); ++i) {
    t.features.emplace(records[i].id, &features[i]);
    t.labels.emplace(records[i].id, records[i].label);
  }
  return t;
}

SequenceView make_view(const TopicSequence& seq, const TrialTable& table,
                       bool with_labels) {
  SequenceView v;
  v.topic = seq.topic;
  for (const auto& step : seq.steps) {
    StepView sv;
    sv.year = step.year;
    for (const auto& id : step.trial_ids) {
      auto f = table.features.find(id);
      if (f == table.features.end()) throw DataError("no features for trial " + id);
      sv.ids.push_back(id);
      sv.features.push_back(f->second);
      std::optional<int> label;
      if (with_labels) {
        auto l = table.labels.find(id);
        if (l != table.labels.end()) label = l->second;
      }
      sv.labels.push_back(label);
    }
    v.steps.push_back(std::move(sv));
  }
  return v;
}

void MetaConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be finite and >= 0");
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be finite and >= 0");
  if (inner_steps < 0) throw ConfigError("inner_steps must be >= 0");
  if (task_batch < 1) throw ConfigError("task_batch must be >= 1");
  if (!(tol >= 0.0)) throw ConfigError("tol must be >= 0");
}

MetaState MetaState::init(const ModelConfig& model, const MetaConfig& meta,
                          std::uint64_t seed) {
  model.validate();
  meta.validate();
  MetaState s;
  s.model = model;
  s.meta = meta;
  s.seed = seed;
  s.theta1 = Theta1::init(model, derive_seed(seed, "init.theta1"));
  s.theta2_global = Theta2::init(model, derive_seed(seed, "init.theta2"));
  return s;
}

LocalUpdateResult local_update(const Task& task, MetaState& state) {
  require_labels(task);
  LocalUpdateResult r;
  Theta2 th = run_inner_loop(task, state, &r.loss_before);
  r.loss_after = task_loss(task, state.theta1, th, state.model);
  state.theta2_task[task.topic] = std::move(th);
  return r;
}

double global_update(const std::vector<const Task*>& batch, MetaState& state) {
  if (batch.empty()) throw ConfigError("global_update: empty task batch");
  std::vector<Theta2*> adapted;
  for (const Task* t : batch) {
    auto it = state.theta2_task.find(t->topic);
    if (it == state.theta2_task.end()) {
      throw std::logic_error("global_update: task " + std::to_string(t->topic) +
                             " has not been locally updated");
    }
    adapted.push_back(&it->second);
  }
  auto step = global_step(batch, adapted, state);
  ++state.iteration;
  return step.mean_loss;
}

TrainReport meta_train(const std::vector<Task>& tasks, MetaState& state,
                       int episodes) {
  if (tasks.empty()) throw ConfigError("meta_train: no tasks");
  state.model.validate();
  state.meta.validate();
  for (const auto& t : tasks) require_labels(t);
  const auto t0 = std::chrono::steady_clock::now();

  TrainReport report;
  {
    std::ostringstream echo;
    echo << "alpha=" << format_double(state.meta.alpha)
         << " beta=" << format_double(state.meta.beta)
         << " inner_steps=" << state.meta.inner_steps
         << " task_batch=" << state.meta.task_batch
         << " tol=" << format_double(state.meta.tol)
         << " task_specific=" << state.meta.task_specific
         << " episodes=" << episodes << " seed=" << state.seed;
    report.config_echo = echo.str();
  }

  std::mt19937_64 rng(derive_seed(state.seed, "sampling"));
  const std::size_t n = tasks.size();
  const std::size_t b = std::min<std::size_t>(n, state.meta.task_batch);
  std::vector<std::size_t> order(n);
  std::size_t cursor = n;  // forces a shuffle on the first episode

  for (int ep = 0; ep < episodes; ++ep) {
    if (cursor + b > n) {
      std::iota(order.begin(), order.end(), 0);
      for (std::size_t i = n; i-- > 1;) {
        std::swap(order[i], order[static_cast<std::size_t>(rng() % (i + 1))]);
      }
      cursor = 0;
    }
    std::vector<const Task*> batch;
    std::vector<Theta2> local(b);
    std::vector<Theta2*> adapted;
    for (std::size_t i = 0; i < b; ++i) {
      const Task* t = &tasks[order[cursor + i]];
      batch.push_back(t);
      local[i] = run_inner_loop(*t, state, nullptr);
    }
    cursor += b;
    for (auto& th : local) adapted.push_back(&th);
    auto step = global_step(batch, adapted, state);
    if (state.meta.task_specific) {
      for (std::size_t i = 0; i < b; ++i) {
        state.theta2_task[batch[i]->topic] = std::move(local[i]);
      }
    }
    for (std::size_t i = 0; i < b; ++i) {
      report.task_final_loss[batch[i]->topic] = step.task_losses[i];
    }
    ++state.iteration;
    report.loss_trace.push_back(step.mean_loss);
    report.delta_trace.push_back(step.delta);
    ++report.episodes_run;
    if (step.delta < state.meta.tol) {
      report.converged = true;
      break;
    }
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

AdaptResult adapt_task(const Task& task, const MetaState& state, int budget) {
  AdaptResult r;
  r.theta2 = state.theta2_global;
  r.final_lr = state.meta.alpha;
  if (task.view.labeled_count() == 0) {
    r.unadapted = true;
    return r;
  }
  r.loss_before = task_loss(task, state.theta1, r.theta2, state.model);
  r.loss_after = r.loss_before;
  double lr = state.meta.alpha;
  for (int s = 0; s < budget; ++s) {
    Theta2 candidate = r.theta2;
    zero_grads(candidate);
    auto pass = forward_sequence(task.view, state.theta1, candidate, state.model);
    backward(pass, state.model, candidate, nullptr);
    sgd_step(candidate, lr);
    const double l = task_loss(task, state.theta1, candidate, state.model);
    if (l <= r.loss_after) {
      r.theta2 = std::move(candidate);
      r.loss_after = l;
    } else {
      lr *= 0.5;
    }
  }
  zero_grads(r.theta2);
  r.final_lr = lr;
  return r;
}

const Theta2& theta2_for(const MetaState& state, int topic) {
  auto it = state.theta2_task.find(topic);
  return it == state.theta2_task.end() ? state.theta2_global : it->second;
}

double predict_trial(const TrialRecord& record, const TrialFeatures& features,
                     const MetaState& state, const CentroidModel& centroids,
                     const std::vector<TopicSequence>& context,
                     const TrialTable& table, const PredictOptions& options) {
  const int topic = assign_topic(centroids, features.z);
  TopicSequence seq{topic, {}};
  for (const auto& s : context) {
    if (s.topic == topic) {
      seq = s;
      break;
    }
  }
  auto inserted = insert_query(seq, record);
  TopicSequence window = prefix(inserted.sequence, inserted.step);
  if (options.strict) window.steps.back().trial_ids = {record.id};
  SequenceView view;
  view.topic = topic;
  for (const auto& step : window.steps) {
    StepView sv;
    sv.year = step.year;
    for (const auto& id : step.trial_ids) {
      const TrialFeatures* f = nullptr;
      if (id == record.id) {
        f = &features;
      } else {
        auto it = table.features.find(id);
        if (it == table.features.end()) throw DataError("no features for trial " + id);
        f = it->second;
      }
      sv.ids.push_back(id);
      sv.features.push_back(f);
      sv.labels.push_back(std::nullopt);
    }
    view.steps.push_back(std::move(sv));
  }
  auto pass = forward_sequence(view, state.theta1, theta2_for(state, topic), state.model);
  const StepView& last = view.steps.back();
  const auto pos = std::find(last.ids.begin(), last.ids.end(), record.id) - last.ids.begin();
  return pass.steps.back().y_hat[pos];
}

// ---------------------------------------------------------------------------
// Checkpoint

namespace {

constexpr const char* kCheckpointMagic = "# spot-checkpoint v1";

std::string_view year_mode_name(YearMode m) {
  return m == YearMode::Centered ? "centered" : "raw";
}
std::string_view head_input_name(HeadInput h) {
  return h == HeadInput::Concat ? "concat" : "adjusted";
}

}  // namespace

void write_checkpoint(const MetaState& state, std::ostream& out) {
  const auto& m = state.model;
  const auto& mc = state.meta;
  out << kCheckpointMagic << '\n';
  out << "config p=" << m.p << " heads=" << m.heads
      << " reference_year=" << m.reference_year
      << " year_mode=" << year_mode_name(m.year_mode)
      << " head_input=" << head_input_name(m.head_input)
      << " zero_history=" << (m.zero_history ? 1 : 0)
      << " gate_bias_init=" << format_double(m.gate_bias_init)
      << " seed=" << state.seed << " alpha=" << format_double(mc.alpha)
      << " beta=" << format_double(mc.beta) << " inner_steps=" << mc.inner_steps
      << " task_batch=" << mc.task_batch << " tol=" << format_double(mc.tol)
      << " task_specific=" << (mc.task_specific ? 1 : 0)
      << " iteration=" << state.iteration
      << " tasks=" << state.theta2_task.size() << '\n';
  out << "section theta1\n";
  write_tensors(state.theta1.params(), out);
  out << "section theta2\n";
  write_tensors(state.theta2_global.params(), out);
  for (const auto& [k, th] : state.theta2_task) {
    out << "section task " << k << '\n';
    write_tensors(th.params(), out);
  }
  out << "end\n";
}

MetaState read_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointMagic) {
    throw DataError("not a spot checkpoint (bad header)", 1);
  }
  if (!std::getline(in, line) || line.rfind("config ", 0) != 0) {
    throw DataError("checkpoint missing config line", 2);
  }
  ModelConfig m;
  MetaConfig mc;
  std::uint64_t seed = 0;
  long iteration = 0;
  std::size_t tasks = 0;
  std::istringstream cfg(line.substr(7));
  std::string field;
  while (cfg >> field) {
    auto eq = field.find('=');
    if (eq == std::string::npos) throw DataError("bad config field " + field, 2);
    const std::string key = field.substr(0, eq);
    const std::string val = field.substr(eq + 1);
    if (key == "p") m.p = static_cast<int>(parse_int(val));
    else if (key == "heads") m.heads = static_cast<int>(parse_int(val));
    else if (key == "reference_year") m.reference_year = static_cast<int>(parse_int(val));
    else if (key == "year_mode") m.year_mode = val == "raw" ? YearMode::Raw : YearMode::Centered;
    else if (key == "head_input") m.head_input = val == "adjusted" ? HeadInput::AdjustedOnly : HeadInput::Concat;
    else if (key == "zero_history") m.zero_history = parse_int(val) != 0;
    else if (key == "gate_bias_init") m.gate_bias_init = parse_double(val);
    else if (key == "seed") seed = parse_uint64(val);
    else if (key == "alpha") mc.alpha = parse_double(val);
    else if (key == "beta") mc.beta = parse_double(val);
    else if (key == "inner_steps") mc.inner_steps = static_cast<int>(parse_int(val));
    else if (key == "task_batch") mc.task_batch = static_cast<int>(parse_int(val));
    else if (key == "tol") mc.tol = parse_double(val);
    else if (key == "task_specific") mc.task_specific = parse_int(val) != 0;
    else if (key == "iteration") iteration = parse_int(val);
    else if (key == "tasks") tasks = static_cast<std::size_t>(parse_int(val));
  }
  MetaState s = MetaState::init(m, mc, seed);
  s.iteration = iteration;
  auto expect = [&](const std::string& want) {
    if (!std::getline(in, line) || line != want) {
      throw DataError("checkpoint: expected '" + want + "'");
    }
  };
  expect("section theta1");
  read_tensors(in, s.theta1.params());
  expect("section theta2");
  read_tensors(in, s.theta2_global.params());
  for (std::size_t i = 0; i < tasks; ++i) {
    if (!std::getline(in, line) || line.rfind("section task ", 0) != 0) {
      throw DataError("checkpoint: expected task section");
    }
    const int k = static_cast<int>(parse_int(std::string_view(line).substr(13)));
    Theta2 th = s.theta2_global;
    read_tensors(in, th.params());
    s.theta2_task.emplace(k, std::move(th));
  }
  expect("end");
  return s;
}

}  // namespace spot
