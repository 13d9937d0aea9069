#pragma once

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "spot/sequence_builder.hpp"

namespace spot {

/// P(score+ > score-) + 0.5 P(tie), via average ranks. Needs both classes.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

/// Average precision: sum over threshold groups (equal scores form one
/// group) of recall increment times precision. Needs at least one positive.
double pr_auc(std::span<const double> scores, std::span<const int> labels);

/// F1 with prediction = score >= threshold; 0 when precision + recall = 0.
double f1_score(std::span<const double> scores, std::span<const int> labels,
                double threshold = 0.5);

struct MetricReport {
  double roc_auc = 0.0;
  double pr_auc = 0.0;
  double f1 = 0.0;
  double threshold = 0.5;
  int positives = 0;
  int negatives = 0;
};

MetricReport evaluate_metrics(std::span<const double> scores,
                              std::span<const int> labels,
                              double threshold = 0.5);

struct CalibrationBin {
  double lower = 0.0;
  double upper = 0.0;
  int count = 0;
  double mean_predicted = 0.0;
  double empirical_rate = 0.0;
};

struct CalibrationReport {
  std::vector<CalibrationBin> bins;
  double ece = 0.0;
  int total = 0;
};

/// Equal-width bins on [0, 1]; bin b is [b/B, (b+1)/B) except the last,
/// which also holds 1.
CalibrationReport calibration(std::span<const double> scores,
                              std::span<const int> labels, int bins = 10);

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

/// Wilson score interval; z = 1.96 gives 95%.
Interval wilson_interval(int successes, int n, double z = 1.959963984540054);

struct TopicSummary {
  int topic = 0;
  int count = 0;
  double mean_predicted = 0.0;
  double std_predicted = 0.0;
  double success_rate = 0.0;
  Interval interval;
};

struct TopicDistributionReport {
  std::vector<TopicSummary> topics;  // ascending topic, empty topics omitted
};

TopicDistributionReport topic_distribution(std::span<const int> topics,
                                           std::span<const double> scores,
                                           std::span<const int> labels);

struct ProgressionPoint {
  int year = 0;
  int count = 0;
  double mean_label = 0.0;
  double mean_predicted = 0.0;
};

struct ProgressionReport {
  std::map<int, std::vector<ProgressionPoint>> topics;
};

/// Per (topic, step) means over the labeled trials of each step.
ProgressionReport progression(const std::vector<TopicSequence>& sequences,
                              const std::map<std::string, double>& predictions,
                              const std::map<std::string, int>& labels);

struct ProportionBin {
  double lower = 0.0;
  double upper = 0.0;
  double success_share = 0.0;  // fraction of all successes in this bin
  double failure_share = 0.0;  // fraction of all failures in this bin
};

std::vector<ProportionBin> relative_proportion(std::span<const double> scores,
                                               std::span<const int> labels,
                                               int bins = 10);

// Report writers: tab-separated with a header row.
void write_metric_report(const MetricReport& r, std::ostream& out);
void write_calibration_report(const CalibrationReport& r, std::ostream& out);
void write_topic_report(const TopicDistributionReport& r, std::ostream& out);
void write_progression_report(const ProgressionReport& r, std::ostream& out);
void write_proportion_report(const std::vector<ProportionBin>& r,
                             std::ostream& out);

}  // namespace spot
