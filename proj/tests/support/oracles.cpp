#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

namespace spot::testing {

double brute_roc_auc(std::span<const double> scores, std::span<const int> labels) {
  double wins = 0.0;
  long pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

double brute_average_precision(std::span<const double> scores, std::span<const int> labels) {
  std::set<double, std::greater<>> thresholds(scores.begin(), scores.end());
  int total_pos = 0;
  for (int y : labels) total_pos += y;
  double ap = 0.0;
  double prev_recall = 0.0;
  for (double t : thresholds) {
    int tp = 0, fp = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= t) (labels[i] == 1 ? tp : fp)++;
    }
    const double recall = static_cast<double>(tp) / total_pos;
    const double precision = static_cast<double>(tp) / (tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

MetricInstance random_metric_instance(Rng& rng, int max_n) {
  MetricInstance m;
  const int n = static_cast<int>(rng.integer(2, max_n));
  const bool grid = rng.bernoulli(0.5);
  for (int i = 0; i < n; ++i) {
    m.labels.push_back(rng.bernoulli(0.4) ? 1 : 0);
    const double s = rng.uniform();
    m.scores.push_back(grid ? std::floor(s * 8.0) / 8.0 : s);
  }
  m.labels[0] = 1;
  m.labels[1] = 0;
  return m;
}

namespace {

double task_loss(const SequenceView& view, const ModelConfig& model, const Theta1& t1,
                 const Theta2& t2) {
  return forward_sequence(view, t1, t2, model).loss();
}

template <typename Theta>
void check_tensors(Theta& theta, const std::function<double()>& loss, double step,
                   const std::vector<const ParamTensor*>& analytic,
                   std::vector<GradCheckRow>& rows) {
  auto params = theta.params();
  for (std::size_t t = 0; t < params.size(); ++t) {
    Matrix& value = params[t]->value;
    Matrix numeric(value.rows(), value.cols());
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      const double saved = value.data()[i];
      value.data()[i] = saved + step;
      const double up = loss();
      value.data()[i] = saved - step;
      const double down = loss();
      value.data()[i] = saved;
      numeric.data()[i] = (up - down) / (2.0 * step);
    }
    const Matrix& a = analytic[t]->grad;
    const double denom = std::max(a.norm(), numeric.norm());
    GradCheckRow row;
    row.name = params[t]->name;
    row.grad_norm = a.norm();
    row.rel_error = denom > 0.0 ? (a - numeric).norm() / denom : 0.0;
    rows.push_back(row);
  }
}

}  // namespace

std::vector<GradCheckRow> gradient_check(const SequenceView& view, const ModelConfig& model,
                                         Theta1 theta1, Theta2 theta2, double step) {
  Theta1 g1 = theta1;
  Theta2 g2 = theta2;
  zero_grads(g1);
  zero_grads(g2);
  backward(forward_sequence(view, g1, g2, model), model, g2, &g1);

  std::vector<GradCheckRow> rows;
  auto loss = [&] { return task_loss(view, model, theta1, theta2); };
  check_tensors(theta1, loss, step, static_cast<const Theta1&>(g1).params(), rows);
  check_tensors(theta2, loss, step, static_cast<const Theta2&>(g2).params(), rows);
  return rows;
}

std::string param_group(const std::string& tensor_name) {
  const auto a = tensor_name.find('.');
  const auto b = tensor_name.find('.', a + 1);
  return tensor_name.substr(a + 1, b - a - 1);
}

void pooled_sgd_step(const std::vector<Task>& tasks, const ModelConfig& model,
                     Theta1& theta1, Theta2& theta2, double lr) {
  zero_grads(theta1);
  zero_grads(theta2);
  for (const auto& task : tasks) {
    backward(forward_sequence(task.view, theta1, theta2, model), model, theta2, &theta1);
  }
  const double n = static_cast<double>(tasks.size());
  for (auto* t : theta1.params()) t->value -= lr * (t->grad / n);
  for (auto* t : theta2.params()) t->value -= lr * (t->grad / n);
}

}  // namespace spot::testing
