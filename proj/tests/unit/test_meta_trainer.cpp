#include <doctest.h>

#include <cmath>
#include <sstream>

#include "../support/fixtures.hpp"
#include "../support/oracles.hpp"
#include "spot/meta_trainer.hpp"

using namespace spot;
using namespace spot::testing;

namespace {

MetaState make_state(const ModelConfig& model, double alpha, double beta, int inner = 1,
                     int batch = 4, std::uint64_t seed = 11) {
  MetaConfig meta;
  meta.alpha = alpha;
  meta.beta = beta;
  meta.inner_steps = inner;
  meta.task_batch = batch;
  meta.tol = 0.0;
  return MetaState::init(model, meta, seed);
}

double loss_of(const Task& task, const MetaState& s, const Theta2& t2) {
  return forward_sequence(task.view, s.theta1, t2, s.model).loss();
}

template <typename Theta>
double max_diff(const Theta& a, const Theta& b) { return max_abs_diff(a, b); }

}  // namespace

TEST_CASE("local update") {
  auto world = ToyWorld::make({{2, 3}, {3, 1, 2}}, 4, 2, 1);

  SUBCASE("zero rate leaves the task copy at the global values") {
    auto s = make_state(world->model, 0.0, 0.1);
    const auto r = local_update(world->tasks[0], s);
    CHECK(bit_equal(s.theta2_task.at(1), s.theta2_global));
    CHECK(r.loss_after == r.loss_before);
  }
  SUBCASE("one step equals theta2 minus alpha times the task gradient") {
    auto s = make_state(world->model, 0.05, 0.1);
    const Theta1 before = s.theta1;
    Theta2 g = s.theta2_global;
    zero_grads(g);
    backward(forward_sequence(world->tasks[0].view, s.theta1, g, s.model), s.model, g, nullptr);
    local_update(world->tasks[0], s);
    const auto expect = g.params();
    const auto got = static_cast<const Theta2&>(s.theta2_task.at(1)).params();
    for (std::size_t i = 0; i < got.size(); ++i) {
      const Matrix want = expect[i]->value - 0.05 * expect[i]->grad;
      CHECK((got[i]->value - want).cwiseAbs().maxCoeff() == 0.0);
    }
    CHECK(bit_equal(s.theta1, before));
  }
  SUBCASE("small step lowers the loss when only the head matters") {
    auto s = make_state(world->model, 1e-3, 0.1);
    s.theta2_global.w_v.value.setZero();
    s.theta2_global.w_o.value.setZero();
    const auto r = local_update(world->tasks[1], s);
    CHECK(r.loss_after < r.loss_before);
  }
  SUBCASE("tasks are isolated") {
    auto a = make_state(world->model, 0.05, 0.1);
    auto b = make_state(world->model, 0.05, 0.1);
    local_update(world->tasks[0], a);
    local_update(world->tasks[1], a);
    local_update(world->tasks[1], b);
    local_update(world->tasks[0], b);
    CHECK(bit_equal(a.theta2_task.at(1), b.theta2_task.at(1)));
    CHECK(bit_equal(a.theta2_task.at(2), b.theta2_task.at(2)));
  }
  SUBCASE("unlabeled task") {
    auto s = make_state(world->model, 0.05, 0.1);
    Task t = world->tasks[0];
    for (auto& step : t.view.steps) {
      for (auto& l : step.labels) l.reset();
    }
    CHECK_THROWS_AS(local_update(t, s), DataError);
  }
}

TEST_CASE("global update") {
  auto world = ToyWorld::make({{2, 2}, {1, 3}}, 4, 2, 2);
  const Task* t0 = &world->tasks[0];
  const Task* t1 = &world->tasks[1];

  SUBCASE("zero outer rate keeps the globals") {
    auto s = make_state(world->model, 0.05, 0.0);
    const auto before = s;
    local_update(*t0, s);
    local_update(*t1, s);
    global_update({t0, t1}, s);
    CHECK(bit_equal(s.theta1, before.theta1));
    CHECK(bit_equal(s.theta2_global, before.theta2_global));
  }
  SUBCASE("two-task mean of gradients at the adapted parameters") {
    const double beta = 0.3;
    auto s = make_state(world->model, 0.05, beta);
    local_update(*t0, s);
    local_update(*t1, s);
    // Hand reduction: per-task gradients, averaged, applied to the globals.
    Theta1 g1a = s.theta1, g1b = s.theta1;
    Theta2 g2a = s.theta2_task.at(1), g2b = s.theta2_task.at(2);
    for (auto* g : {&g1a, &g1b}) zero_grads(*g);
    for (auto* g : {&g2a, &g2b}) zero_grads(*g);
    backward(forward_sequence(t0->view, g1a, g2a, s.model), s.model, g2a, &g1a);
    backward(forward_sequence(t1->view, g1b, g2b, s.model), s.model, g2b, &g1b);
    Theta1 want1 = s.theta1;
    Theta2 want2 = s.theta2_global;
    {
      auto w = want1.params();
      auto a = static_cast<const Theta1&>(g1a).params();
      auto b = static_cast<const Theta1&>(g1b).params();
      for (std::size_t i = 0; i < w.size(); ++i) {
        w[i]->value -= beta * (a[i]->grad + b[i]->grad) / 2.0;
      }
    }
    {
      auto w = want2.params();
      auto a = static_cast<const Theta2&>(g2a).params();
      auto b = static_cast<const Theta2&>(g2b).params();
      for (std::size_t i = 0; i < w.size(); ++i) {
        w[i]->value -= beta * (a[i]->grad + b[i]->grad) / 2.0;
      }
    }
    const double want_mean = (loss_of(*t0, s, s.theta2_task.at(1)) +
                              loss_of(*t1, s, s.theta2_task.at(2))) / 2.0;
    const double mean = global_update({t0, t1}, s);
    CHECK(max_diff(s.theta1, want1) < 1e-10);
    CHECK(max_diff(s.theta2_global, want2) < 1e-10);
    CHECK(mean == doctest::Approx(want_mean).epsilon(1e-14));
  }
  SUBCASE("no inner steps and one task is a plain SGD step") {
    auto s = make_state(world->model, 0.05, 0.2, 0);
    Theta1 o1 = s.theta1;
    Theta2 o2 = s.theta2_global;
    pooled_sgd_step({world->tasks[0]}, s.model, o1, o2, 0.2);
    local_update(*t0, s);
    global_update({t0}, s);
    CHECK(max_diff(s.theta1, o1) < 1e-15);
    CHECK(max_diff(s.theta2_global, o2) < 1e-15);
  }
  SUBCASE("preconditions") {
    auto s = make_state(world->model, 0.05, 0.2);
    CHECK_THROWS_AS(global_update({}, s), ConfigError);
    CHECK_THROWS_AS(global_update({t0}, s), std::logic_error);
  }
}

TEST_CASE("meta training") {
  SUBCASE("zero episodes") {
    auto world = ToyWorld::make({{2, 2}}, 4, 2, 3);
    auto s = make_state(world->model, 0.05, 0.2);
    const auto before = s;
    const auto r = meta_train(world->tasks, s, 0);
    CHECK(r.loss_trace.empty());
    CHECK(r.episodes_run == 0);
    CHECK(bit_equal(s.theta1, before.theta1));
    CHECK(bit_equal(s.theta2_global, before.theta2_global));
  }
  SUBCASE("no inner steps over all tasks follows pooled SGD") {
    auto world = ToyWorld::make({{2, 1}, {3}, {1, 2, 1}}, 4, 2, 4);
    auto s = make_state(world->model, 0.05, 0.2, 0, 3);
    Theta1 o1 = s.theta1;
    Theta2 o2 = s.theta2_global;
    for (int ep = 0; ep < 6; ++ep) {
      meta_train(world->tasks, s, 1);
      pooled_sgd_step(world->tasks, s.model, o1, o2, 0.2);
      CHECK(max_diff(s.theta1, o1) < 1e-12);
      CHECK(max_diff(s.theta2_global, o2) < 1e-12);
    }
  }
  SUBCASE("separable toy is fit") {
    auto world = ToyWorld::make({{4, 4, 4, 4}}, 4, 2, 5);
    for (auto& step : world->tasks[0].view.steps) {
      for (std::size_t i = 0; i < step.size(); ++i) {
        step.labels[i] = step.features[i]->h_d[0] > 0.0 ? 1 : 0;
      }
    }
    auto s = make_state(world->model, 0.05, 0.5);
    const auto r = meta_train(world->tasks, s, 400);
    CHECK(r.loss_trace.back() < 0.1);
    for (double l : r.loss_trace) CHECK((std::isfinite(l) && l >= 0.0));
  }
  SUBCASE("same seed gives bit-identical checkpoints") {
    auto world = ToyWorld::make({{2, 3}, {1, 2}, {3, 1}}, 4, 2, 6);
    std::string text[2];
    for (auto& t : text) {
      auto s = make_state(world->model, 0.05, 0.2, 1, 2);
      meta_train(world->tasks, s, 15);
      std::ostringstream out;
      write_checkpoint(s, out);
      t = out.str();
    }
    CHECK(text[0] == text[1]);
  }
  SUBCASE("no tasks") {
    auto world = ToyWorld::make({{1}}, 4, 2, 7);
    auto s = make_state(world->model, 0.05, 0.2);
    CHECK_THROWS_AS(meta_train({}, s, 3), ConfigError);
  }
  SUBCASE("shared parameters only") {
    auto world = ToyWorld::make({{2, 3}, {1, 2}}, 4, 2, 8);
    auto s = make_state(world->model, 0.05, 0.2);
    s.meta.task_specific = false;
    meta_train(world->tasks, s, 4);
    CHECK(s.theta2_task.empty());
  }
}

TEST_CASE("task adaptation") {
  auto world = ToyWorld::make({{2, 3, 2}, {3, 2}}, 4, 2, 9);
  auto s = make_state(world->model, 0.2, 0.2);
  meta_train(world->tasks, s, 5);
  const Theta1 before = s.theta1;

  const auto zero = adapt_task(world->tasks[0], s, 0);
  CHECK(bit_equal(zero.theta2, s.theta2_global));
  const auto five = adapt_task(world->tasks[0], s, 5);
  CHECK(five.loss_after <= zero.loss_after);
  CHECK(five.loss_after == doctest::Approx(loss_of(world->tasks[0], s, five.theta2)));
  CHECK(bit_equal(s.theta1, before));

  auto other = adapt_task(world->tasks[1], s, 5);
  const Theta2 copy = other.theta2;
  auto mutated = adapt_task(world->tasks[0], s, 5);
  mutated.theta2.head_b.value.setConstant(7.0);
  CHECK(bit_equal(other.theta2, copy));

  Task empty = world->tasks[0];
  for (auto& step : empty.view.steps) {
    for (auto& l : step.labels) l.reset();
  }
  const auto un = adapt_task(empty, s, 5);
  CHECK(un.unadapted);
  CHECK(bit_equal(un.theta2, s.theta2_global));
}

TEST_CASE("single-trial prediction") {
  const int p = 4, q = 3;
  Rng rng(12);
  ModelConfig model;
  model.p = p;
  model.heads = 2;
  model.reference_year = 2010;
  auto s = make_state(model, 0.05, 0.2);
  s.theta2_task[2] = Theta2::init(model, 77);

  CentroidModel centroids;
  centroids.K = 2;
  centroids.centroids = Matrix::Zero(2, q);
  centroids.centroids(0, 0) = -5.0;
  centroids.centroids(1, 0) = 5.0;

  std::vector<TrialRecord> records(2);
  records[0].id = "A";
  records[0].start_year = 2010;
  records[0].label = 1;
  records[1].id = "C";
  records[1].start_year = 2012;
  std::vector<TrialFeatures> feats{random_features(rng, p, q), random_features(rng, p, q)};
  const TrialTable table = TrialTable::build(records, feats);
  const std::vector<TopicSequence> context{{2, {{2010, {"A"}}, {2012, {"C"}}}}};

  TrialRecord query;
  query.id = "Q";
  query.start_year = 2011;
  TrialFeatures qf = random_features(rng, p, q);
  qf.z = Vector::Zero(q);
  qf.z[0] = 4.0;

  SUBCASE("manual composition") {
    const Theta2& th = s.theta2_task.at(2);
    auto fuse = [&](const TrialFeatures& f, int year) {
      return highway_fuse(f, year_embed(year, 2010, s.theta1.year_scale.value.col(0)), s.theta1);
    };
    const Vector Ha = fuse(feats[0], 2010);
    const Vector Hq = fuse(qf, 2011);
    const auto states = rnn_propagate({Ha, Hq}, th);
    const auto att = interaction_attend(states[1], Hq, th, 2);
    const double want = predict_head(att.H_tilde, Hq, th)[0];
    CHECK(std::abs(predict_trial(query, qf, s, centroids, context, table) - want) < 1e-14);
  }
  SUBCASE("query predating the sequence sees only its own step") {
    query.start_year = 2001;
    SequenceView v;
    v.steps.push_back({2001, {"Q"}, {&qf}, {std::nullopt}});
    const double want = forward_sequence(v, s.theta1, s.theta2_task.at(2), s.model).predictions()[0];
    CHECK(predict_trial(query, qf, s, centroids, context, table) == want);
  }
  SUBCASE("copy of a context trial gets that trial's probability") {
    TrialRecord twin = records[0];
    twin.id = "B";
    TrialFeatures tf = feats[0];
    tf.z = qf.z;
    SequenceView v;
    v.steps.push_back({2010, {"A", "B"}, {&feats[0], &tf}, {std::nullopt, std::nullopt}});
    const auto y = forward_sequence(v, s.theta1, s.theta2_task.at(2), s.model).predictions();
    CHECK(predict_trial(twin, tf, s, centroids, context, table) ==
          doctest::Approx(y[0]).epsilon(1e-15));
  }
  SUBCASE("strict prefix drops same-year trials") {
    query.start_year = 2012;
    PredictOptions strict;
    strict.strict = true;
    SequenceView v;
    v.steps.push_back({2010, {"A"}, {&feats[0]}, {std::nullopt}});
    v.steps.push_back({2012, {"Q"}, {&qf}, {std::nullopt}});
    const auto y = forward_sequence(v, s.theta1, s.theta2_task.at(2), s.model).predictions();
    CHECK(predict_trial(query, qf, s, centroids, context, table, strict) == y[1]);
    CHECK(predict_trial(query, qf, s, centroids, context, table) != y[1]);
  }
  SUBCASE("topic without a task copy uses the global parameters") {
    qf.z[0] = -4.0;
    SequenceView v;
    v.steps.push_back({2011, {"Q"}, {&qf}, {std::nullopt}});
    const auto y = forward_sequence(v, s.theta1, s.theta2_global, s.model).predictions();
    CHECK(predict_trial(query, qf, s, centroids, context, table) == y[0]);
  }
}

TEST_CASE("checkpoint round-trip") {
  auto world = ToyWorld::make({{2, 3}, {1, 2}}, 4, 2, 13);
  auto s = make_state(world->model, 0.05, 0.2);
  s.model.head_input = HeadInput::Concat;
  meta_train(world->tasks, s, 3);
  std::stringstream io;
  write_checkpoint(s, io);
  const MetaState back = read_checkpoint(io);
  CHECK(back.model == s.model);
  CHECK(back.seed == s.seed);
  CHECK(back.iteration == s.iteration);
  CHECK(back.meta.alpha == s.meta.alpha);
  CHECK(bit_equal(back.theta1, s.theta1));
  CHECK(bit_equal(back.theta2_global, s.theta2_global));
  REQUIRE(back.theta2_task.size() == s.theta2_task.size());
  for (const auto& [k, th] : s.theta2_task) CHECK(bit_equal(back.theta2_task.at(k), th));

  std::istringstream bad("not a checkpoint\n");
  CHECK_THROWS_AS(read_checkpoint(bad), DataError);
}

TEST_CASE("meta config validation") {
  MetaConfig m;
  m.alpha = -1;
  CHECK_THROWS_AS(m.validate(), ConfigError);
  m = {};
  m.task_batch = 0;
  CHECK_THROWS_AS(m.validate(), ConfigError);
  m = {};
  m.beta = std::nan("");
  CHECK_THROWS_AS(m.validate(), ConfigError);
}
