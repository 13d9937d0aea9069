#include "spot/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "spot/common.hpp"

namespace spot {

namespace {

void check_lengths(std::span<const double> scores, std::span<const int> labels,
                   const char* who) {
  if (scores.size() != labels.size()) {
    throw DataError(std::string(who) + ": scores and labels differ in length");
  }
}

int bin_of(double score, int bins) {
  int b = static_cast<int>(std::floor(score * bins));
  return std::clamp(b, 0, bins - 1);
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  check_lengths(scores, labels, "roc_auc");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  long positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    // ranks i+1 .. j share their average
    const double avg = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) {
        rank_sum += avg;
        ++positives;
      }
    }
    i = j;
  }
  const long negatives = static_cast<long>(n) - positives;
  if (positives == 0 || negatives == 0) {
    throw DataError("roc_auc: both classes must be present");
  }
  const double p = static_cast<double>(positives);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(negatives));
}

double pr_auc(std::span<const double> scores, std::span<const int> labels) {
  check_lengths(scores, labels, "pr_auc");
  const std::size_t n = scores.size();
  const long total_pos = std::count_if(labels.begin(), labels.end(),
                                       [](int y) { return y != 0; });
  if (total_pos == 0) throw DataError("pr_auc: no positive labels");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double ap = 0.0;
  long tp = 0, fp = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    long group_tp = 0;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      if (labels[order[j]]) ++group_tp; else ++fp;
      ++j;
    }
    tp += group_tp;
    if (group_tp > 0) {
      ap += static_cast<double>(group_tp) * static_cast<double>(tp) /
            static_cast<double>(tp + fp);
    }
    i = j;
  }
  return ap / static_cast<double>(total_pos);
}

double f1_score(std::span<const double> scores, std::span<const int> labels,
                double threshold) {
  check_lengths(scores, labels, "f1_score");
  long tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    if (pred && labels[i]) ++tp;
    else if (pred) ++fp;
    else if (labels[i]) ++fn;
  }
  if (tp == 0) return 0.0;
  const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return 2.0 * precision * recall / (precision + recall);
}

MetricReport evaluate_metrics(std::span<const double> scores,
                              std::span<const int> labels, double threshold) {
  MetricReport r;
  r.roc_auc = roc_auc(scores, labels);
  r.pr_auc = pr_auc(scores, labels);
  r.f1 = f1_score(scores, labels, threshold);
  r.threshold = threshold;
  r.positives = static_cast<int>(std::count_if(labels.begin(), labels.end(),
                                               [](int y) { return y != 0; }));
  r.negatives = static_cast<int>(labels.size()) - r.positives;
  return r;
}

CalibrationReport calibration(std::span<const double> scores,
                              std::span<const int> labels, int bins) {
  check_lengths(scores, labels, "calibration");
  if (bins < 2) throw ConfigError("calibration: need at least 2 bins");
  if (scores.empty()) throw DataError("calibration: empty input");
  CalibrationReport r;
  r.bins.resize(bins);
  std::vector<double> pred_sum(bins, 0.0), label_sum(bins, 0.0);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const int b = bin_of(scores[i], bins);
    ++r.bins[b].count;
    pred_sum[b] += scores[i];
    label_sum[b] += labels[i] ? 1.0 : 0.0;
  }
  r.total = static_cast<int>(scores.size());
  for (int b = 0; b < bins; ++b) {
    auto& bin = r.bins[b];
    bin.lower = static_cast<double>(b) / bins;
    bin.upper = static_cast<double>(b + 1) / bins;
    if (bin.count == 0) continue;
    bin.mean_predicted = pred_sum[b] / bin.count;
    bin.empirical_rate = label_sum[b] / bin.count;
    r.ece += (static_cast<double>(bin.count) / r.total) *
             std::abs(bin.mean_predicted - bin.empirical_rate);
  }
  return r;
}

Interval wilson_interval(int successes, int n, double z) {
  if (n <= 0) return {0.0, 1.0};
  const double nn = static_cast<double>(n);
  const double phat = successes / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double centre = (phat + z2 / (2.0 * nn)) / denom;
  const double half =
      z * std::sqrt(phat * (1.0 - phat) / nn + z2 / (4.0 * nn * nn)) / denom;
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

TopicDistributionReport topic_distribution(std::span<const int> topics,
                                           std::span<const double> scores,
                                           std::span<const int> labels) {
  check_lengths(scores, labels, "topic_distribution");
  if (topics.size() != scores.size()) {
    throw DataError("topic_distribution: topics and scores differ in length");
  }
  struct Acc {
    int n = 0, successes = 0;
    double sum = 0.0, sum_sq = 0.0;
  };
  std::map<int, Acc> acc;
  for (std::size_t i = 0; i < topics.size(); ++i) {
    auto& a = acc[topics[i]];
    ++a.n;
    a.successes += labels[i] ? 1 : 0;
    a.sum += scores[i];
    a.sum_sq += scores[i] * scores[i];
  }
  TopicDistributionReport r;
  for (const auto& [topic, a] : acc) {
    TopicSummary s;
    s.topic = topic;
    s.count = a.n;
    s.mean_predicted = a.sum / a.n;
    const double var = std::max(0.0, a.sum_sq / a.n - s.mean_predicted * s.mean_predicted);
    s.std_predicted = std::sqrt(var);
    s.success_rate = static_cast<double>(a.successes) / a.n;
    s.interval = wilson_interval(a.successes, a.n);
    r.topics.push_back(s);
  }
  return r;
}

ProgressionReport progression(const std::vector<TopicSequence>& sequences,
                              const std::map<std::string, double>& predictions,
                              const std::map<std::string, int>& labels) {
  ProgressionReport r;
  for (const auto& seq : sequences) {
    auto& points = r.topics[seq.topic];
    for (const auto& step : seq.steps) {
      ProgressionPoint pt;
      pt.year = step.year;
      double label_sum = 0.0, pred_sum = 0.0;
      for (const auto& id : step.trial_ids) {
        auto l = labels.find(id);
        if (l == labels.end()) continue;
        auto p = predictions.find(id);
        if (p == predictions.end()) {
          throw DataError("progression: missing prediction for labeled trial " + id);
        }
        ++pt.count;
        label_sum += l->second;
        pred_sum += p->second;
      }
      if (pt.count == 0) continue;
      pt.mean_label = label_sum / pt.count;
      pt.mean_predicted = pred_sum / pt.count;
      points.push_back(pt);
    }
  }
  return r;
}

std::vector<ProportionBin> relative_proportion(std::span<const double> scores,
                                               std::span<const int> labels,
                                               int bins) {
  check_lengths(scores, labels, "relative_proportion");
  if (bins < 2) throw ConfigError("relative_proportion: need at least 2 bins");
  std::vector<ProportionBin> out(bins);
  std::vector<double> succ(bins, 0.0), fail(bins, 0.0);
  double total_succ = 0.0, total_fail = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const int b = bin_of(scores[i], bins);
    if (labels[i]) {
      succ[b] += 1.0;
      total_succ += 1.0;
    } else {
      fail[b] += 1.0;
      total_fail += 1.0;
    }
  }
  for (int b = 0; b < bins; ++b) {
    out[b].lower = static_cast<double>(b) / bins;
    out[b].upper = static_cast<double>(b + 1) / bins;
    out[b].success_share = total_succ > 0 ? succ[b] / total_succ : 0.0;
    out[b].failure_share = total_fail > 0 ? fail[b] / total_fail : 0.0;
  }
  return out;
}

void write_metric_report(const MetricReport& r, std::ostream& out) {
  out << "pr_auc\tf1\troc_auc\tthreshold\tpositives\tnegatives\n"
      << format_double(r.pr_auc) << '\t' << format_double(r.f1) << '\t'
      << format_double(r.roc_auc) << '\t' << format_double(r.threshold) << '\t'
      << r.positives << '\t' << r.negatives << '\n';
}

void write_calibration_report(const CalibrationReport& r, std::ostream& out) {
  out << "# ece=" << format_double(r.ece) << " n=" << r.total << '\n';
  out << "lower\tupper\tcount\tmean_predicted\tempirical_rate\n";
  for (const auto& b : r.bins) {
    out << format_double(b.lower) << '\t' << format_double(b.upper) << '\t'
        << b.count << '\t' << format_double(b.mean_predicted) << '\t'
        << format_double(b.empirical_rate) << '\n';
  }
}

void write_topic_report(const TopicDistributionReport& r, std::ostream& out) {
  out << "topic\tcount\tmean_predicted\tstd_predicted\tsuccess_rate\tci_lower\tci_upper\n";
  for (const auto& t : r.topics) {
    out << t.topic << '\t' << t.count << '\t' << format_double(t.mean_predicted)
        << '\t' << format_double(t.std_predicted) << '\t'
        << format_double(t.success_rate) << '\t' << format_double(t.interval.lower)
        << '\t' << format_double(t.interval.upper) << '\n';
  }
}

void write_progression_report(const ProgressionReport& r, std::ostream& out) {
  out << "topic\tstep\tyear\tcount\tmean_label\tmean_predicted\n";
  for (const auto& [topic, points] : r.topics) {
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto& p = points[i];
      out << topic << '\t' << i + 1 << '\t' << p.year << '\t' << p.count << '\t'
          << format_double(p.mean_label) << '\t' << format_double(p.mean_predicted)
          << '\n';
    }
  }
}

void write_proportion_report(const std::vector<ProportionBin>& r,
                             std::ostream& out) {
  out << "lower\tupper\tsuccess_share\tfailure_share\n";
  for (const auto& b : r) {
    out << format_double(b.lower) << '\t' << format_double(b.upper) << '\t'
        << format_double(b.success_share) << '\t' << format_double(b.failure_share)
        << '\n';
  }
}

}  // namespace spot
