#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "spot/common.hpp"

namespace spot {

// Topic labels are 1-based (k in 1..K) in every public structure and file.
// Centroid storage is 0-based: topic k lives in row k-1.

struct LabeledEmbedding {
  std::string id;
  Vector z;
};

struct CentroidModel {
  int K = 0;
  Matrix centroids;  // K x q
  std::uint64_t seed = 0;
  int iterations_run = 0;
  double final_ssd = 0.0;
  // SSD after initialization followed by one entry per Lloyd iteration.
  std::vector<double> ssd_trace;

  Eigen::Index q() const { return centroids.cols(); }
};

struct TopicAssignment {
  std::vector<std::string> ids;
  std::vector<int> topics;
  std::vector<double> distances;  // squared Euclidean to assigned centroid

  std::size_t size() const { return ids.size(); }
};

struct KMeansResult {
  CentroidModel model;
  TopicAssignment assignment;
};

struct KMeansOptions {
  int K = 3;
  std::uint64_t seed = 0;
  int max_iters = 100;
  double tol = 1e-9;
};

KMeansResult kmeans_fit(const std::vector<LabeledEmbedding>& embeddings,
                        const KMeansOptions& options);

/// Nearest centroid, 1-based; ties go to the lowest index.
int assign_topic(const CentroidModel& model, const Vector& z);

TopicAssignment assign_all(const CentroidModel& model,
                           const std::vector<LabeledEmbedding>& embeddings);

/// Sum over points of squared distance to the nearest centroid.
double sum_squared_distance(const CentroidModel& model,
                            const std::vector<LabeledEmbedding>& embeddings);

/// Mean silhouette coefficient with Euclidean distances. `assignment` and
/// `embeddings` are matched by position.
double silhouette(const TopicAssignment& assignment,
                  const std::vector<LabeledEmbedding>& embeddings);
double silhouette(const std::vector<int>& topics,
                  const std::vector<LabeledEmbedding>& embeddings);

struct KSelectionRow {
  int K = 0;
  double ssd = 0.0;
  std::optional<double> silhouette;
  bool recommended = false;
};

struct KSelectionReport {
  std::vector<KSelectionRow> rows;  // sorted by K
  std::optional<int> recommended() const;
};

KSelectionReport select_k(const std::vector<LabeledEmbedding>& embeddings,
                          std::vector<int> candidates, std::uint64_t seed,
                          int max_iters = 100, double tol = 1e-9);

void write_k_report(const KSelectionReport& report, std::ostream& out);

/// `id<TAB>topic<TAB>distance` per line.
void write_assignment(const TopicAssignment& assignment, std::ostream& out);
TopicAssignment read_assignment(std::istream& in);

/// Centroids with a small header so test trials can be assigned later.
void write_centroids(const CentroidModel& model, std::ostream& out);
CentroidModel read_centroids(std::istream& in);

}  // namespace spot
