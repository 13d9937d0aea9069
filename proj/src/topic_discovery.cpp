#include "spot/topic_discovery.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

namespace spot {

namespace {

// Portable draws: std distributions differ between standard libraries.
double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::size_t distinct_count(const std::vector<LabeledEmbedding>& embeddings) {
  std::set<std::vector<double>> seen;
  for (const auto& e : embeddings) {
    seen.emplace(e.z.data(), e.z.data() + e.z.size());
  }
  return seen.size();
}

struct Nearest {
  int index;  // 0-based
  double dist2;
};

Nearest nearest(const Matrix& centroids, const Vector& z) {
  Nearest best{0, std::numeric_limits<double>::infinity()};
  for (Eigen::Index k = 0; k < centroids.rows(); ++k) {
    double d = (centroids.row(k).transpose() - z).squaredNorm();
    if (d < best.dist2) best = {static_cast<int>(k), d};
  }
  return best;
}

Matrix kmeanspp_init(const std::vector<LabeledEmbedding>& pts, int K,
                     std::mt19937_64& rng) {
  const std::size_t n = pts.size();
  const Eigen::Index q = pts.front().z.size();
  Matrix centroids(K, q);
  std::size_t first = static_cast<std::size_t>(rng() % n);
  centroids.row(0) = pts[first].z.transpose();
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) {
    d2[i] = (pts[i].z - pts[first].z).squaredNorm();
  }
  for (int k = 1; k < K; ++k) {
    double total = 0.0;
    for (double d : d2) total += d;
    double target = unit_uniform(rng) * total;
    std::size_t pick = n;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (d2[i] <= 0.0) continue;
      acc += d2[i];
      pick = i;
      if (acc > target) break;
    }
    // pick == n only if every point coincides with a chosen centre, which
    // the distinct-count precondition rules out.
    centroids.row(k) = pts[pick].z.transpose();
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (pts[i].z - pts[pick].z).squaredNorm());
    }
  }
  return centroids;
}

// Nearest-centroid assignment; any cluster left empty takes over the point
// farthest from its own centroid (among clusters with at least two members)
// and the assignment is recomputed.
void assign_and_repair(const std::vector<LabeledEmbedding>& pts,
                       Matrix& centroids, std::vector<int>& labels,
                       std::vector<double>& dist2) {
  const int K = static_cast<int>(centroids.rows());
  const std::size_t n = pts.size();
  for (std::size_t round = 0; round <= n; ++round) {
    std::vector<int> sizes(K, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto best = nearest(centroids, pts[i].z);
      labels[i] = best.index;
      dist2[i] = best.dist2;
      ++sizes[best.index];
    }
    bool repaired = false;
    for (int k = 0; k < K; ++k) {
      if (sizes[k] != 0) continue;
      std::size_t far = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (sizes[labels[i]] < 2) continue;
        if (far == n || dist2[i] > dist2[far]) far = i;
      }
      if (far == n) break;
      --sizes[labels[far]];
      labels[far] = k;
      dist2[far] = 0.0;
      ++sizes[k];
      centroids.row(k) = pts[far].z.transpose();
      repaired = true;
    }
    if (!repaired) return;
  }
}

double total(const std::vector<double>& values) {
  double s = 0.0;
  for (double v : values) s += v;
  return s;
}

}  // namespace

KMeansResult kmeans_fit(const std::vector<LabeledEmbedding>& embeddings,
                        const KMeansOptions& options) {
  if (options.K < 1) throw ConfigError("kmeans_fit: K must be >= 1");
  if (options.max_iters < 1) throw ConfigError("kmeans_fit: max_iters must be >= 1");
  if (!(options.tol >= 0.0)) throw ConfigError("kmeans_fit: tol must be >= 0");
  if (embeddings.empty()) throw DataError("kmeans_fit: no embeddings");
  const Eigen::Index q = embeddings.front().z.size();
  for (const auto& e : embeddings) {
    if (e.z.size() != q) throw DataError("kmeans_fit: dimension mismatch at " + e.id);
    if (!e.z.allFinite()) throw DataError("kmeans_fit: non-finite embedding for " + e.id);
  }
  const std::size_t distinct = distinct_count(embeddings);
  if (static_cast<std::size_t>(options.K) > distinct) {
    throw DataError("kmeans_fit: K=" + std::to_string(options.K) +
                    " exceeds the " + std::to_string(distinct) +
                    " distinct embedding vectors");
  }

  std::mt19937_64 rng(options.seed);
  KMeansResult result;
  CentroidModel& model = result.model;
  model.K = options.K;
  model.seed = options.seed;
  model.centroids = kmeanspp_init(embeddings, options.K, rng);

  const std::size_t n = embeddings.size();
  std::vector<int> labels(n, 0);
  std::vector<double> dist2(n, 0.0);
  assign_and_repair(embeddings, model.centroids, labels, dist2);
  double ssd = total(dist2);
  model.ssd_trace.push_back(ssd);

  for (int it = 0; it < options.max_iters; ++it) {
    Matrix sums = Matrix::Zero(options.K, q);
    std::vector<int> sizes(options.K, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums.row(labels[i]) += embeddings[i].z.transpose();
      ++sizes[labels[i]];
    }
    for (int k = 0; k < options.K; ++k) {
      if (sizes[k] > 0) model.centroids.row(k) = sums.row(k) / sizes[k];
    }
    assign_and_repair(embeddings, model.centroids, labels, dist2);
    double next = total(dist2);
    model.ssd_trace.push_back(next);
    ++model.iterations_run;
    const double improvement = ssd - next;
    ssd = next;
    if (improvement < options.tol || improvement <= 0.0) break;
  }
  model.final_ssd = ssd;

  TopicAssignment& a = result.assignment;
  a.ids.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    a.ids.push_back(embeddings[i].id);
    a.topics.push_back(labels[i] + 1);
    a.distances.push_back(dist2[i]);
  }
  return result;
}

int assign_topic(const CentroidModel& model, const Vector& z) {
  if (z.size() != model.q()) {
    throw DataError("assign_topic: embedding has dimension " +
                    std::to_string(z.size()) + ", model expects " +
                    std::to_string(model.q()));
  }
  return nearest(model.centroids, z).index + 1;
}

TopicAssignment assign_all(const CentroidModel& model,
                           const std::vector<LabeledEmbedding>& embeddings) {
  TopicAssignment a;
  for (const auto& e : embeddings) {
    if (e.z.size() != model.q()) throw DataError("assign_all: dimension mismatch at " + e.id);
    auto best = nearest(model.centroids, e.z);
    a.ids.push_back(e.id);
    a.topics.push_back(best.index + 1);
    a.distances.push_back(best.dist2);
  }
  return a;
}

double sum_squared_distance(const CentroidModel& model,
                            const std::vector<LabeledEmbedding>& embeddings) {
  double s = 0.0;
  for (const auto& e : embeddings) s += nearest(model.centroids, e.z).dist2;
  return s;
}

double silhouette(const std::vector<int>& topics,
                  const std::vector<LabeledEmbedding>& embeddings) {
  if (topics.size() != embeddings.size()) {
    throw DataError("silhouette: assignment and embeddings differ in length");
  }
  std::map<int, int> cluster_index;
  for (int t : topics) cluster_index.emplace(t, 0);
  if (cluster_index.size() < 2) throw ConfigError("silhouette: needs K >= 2");
  int next = 0;
  for (auto& [topic, idx] : cluster_index) idx = next++;
  const int K = next;
  const std::size_t n = topics.size();
  std::vector<int> label(n);
  std::vector<int> sizes(K, 0);
  for (std::size_t i = 0; i < n; ++i) {
    label[i] = cluster_index[topics[i]];
    ++sizes[label[i]];
  }
  double sum = 0.0;
  std::vector<double> dist_sum(K);
  for (std::size_t i = 0; i < n; ++i) {
    if (sizes[label[i]] == 1) continue;  // singleton contributes 0
    std::fill(dist_sum.begin(), dist_sum.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      dist_sum[label[j]] += (embeddings[i].z - embeddings[j].z).norm();
    }
    const double a = dist_sum[label[i]] / (sizes[label[i]] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int k = 0; k < K; ++k) {
      if (k == label[i]) continue;
      b = std::min(b, dist_sum[k] / sizes[k]);
    }
    const double denom = std::max(a, b);
    if (denom > 0.0) sum += (b - a) / denom;
  }
  return sum / static_cast<double>(n);
}

double silhouette(const TopicAssignment& assignment,
                  const std::vector<LabeledEmbedding>& embeddings) {
  return silhouette(assignment.topics, embeddings);
}

std::optional<int> KSelectionReport::recommended() const {
  for (const auto& row : rows) {
    if (row.recommended) return row.K;
  }
  return std::nullopt;
}

KSelectionReport select_k(const std::vector<LabeledEmbedding>& embeddings,
                          std::vector<int> candidates, std::uint64_t seed,
                          int max_iters, double tol) {
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()),
                   candidates.end());
  KSelectionReport report;
  for (int K : candidates) {
    KMeansOptions opts;
    opts.K = K;
    opts.seed = derive_seed(seed, "kmeans", static_cast<std::uint64_t>(K));
    opts.max_iters = max_iters;
    opts.tol = tol;
    auto fit = kmeans_fit(embeddings, opts);
    KSelectionRow row;
    row.K = K;
    row.ssd = fit.model.final_ssd;
    if (K >= 2) {
      std::set<int> used(fit.assignment.topics.begin(), fit.assignment.topics.end());
      if (used.size() >= 2) row.silhouette = silhouette(fit.assignment, embeddings);
    }
    report.rows.push_back(row);
  }
  KSelectionRow* best = nullptr;
  for (auto& row : report.rows) {
    if (!row.silhouette) continue;
    if (!best || *row.silhouette > *best->silhouette) best = &row;
  }
  if (best) best->recommended = true;
  return report;
}

void write_k_report(const KSelectionReport& report, std::ostream& out) {
  out << "K\tssd\tsilhouette\trecommended\n";
  for (const auto& row : report.rows) {
    out << row.K << '\t' << format_double(row.ssd) << '\t'
        << (row.silhouette ? format_double(*row.silhouette) : "NA") << '\t'
        << (row.recommended ? "yes" : "no") << '\n';
  }
}

void write_assignment(const TopicAssignment& assignment, std::ostream& out) {
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    out << assignment.ids[i] << '\t' << assignment.topics[i] << '\t'
        << format_double(assignment.distances[i]) << '\n';
  }
}

TopicAssignment read_assignment(std::istream& in) {
  TopicAssignment a;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string id, topic, dist;
    if (!std::getline(row, id, '\t') || !std::getline(row, topic, '\t') ||
        !std::getline(row, dist, '\t')) {
      throw DataError("assignment row needs id, topic, distance", line_no);
    }
    a.ids.push_back(id);
    a.topics.push_back(static_cast<int>(parse_int(topic)));
    a.distances.push_back(parse_double(dist));
  }
  return a;
}

void write_centroids(const CentroidModel& model, std::ostream& out) {
  out << "# spot-centroids v1 K=" << model.K << " q=" << model.q()
      << " seed=" << model.seed << " iterations=" << model.iterations_run
      << " ssd=" << format_double(model.final_ssd) << '\n';
  for (Eigen::Index k = 0; k < model.centroids.rows(); ++k) {
    for (Eigen::Index j = 0; j < model.centroids.cols(); ++j) {
      if (j) out << '\t';
      out << format_double(model.centroids(k, j));
    }
    out << '\n';
  }
}

CentroidModel read_centroids(std::istream& in) {
  CentroidModel m;
  std::string line;
  if (!std::getline(in, line) || line.rfind("# spot-centroids v1", 0) != 0) {
    throw DataError("missing centroid header", 1);
  }
  std::istringstream header(line.substr(19));
  std::string field;
  long long q = 0;
  while (header >> field) {
    auto eq = field.find('=');
    if (eq == std::string::npos) continue;
    auto key = field.substr(0, eq);
    auto val = field.substr(eq + 1);
    if (key == "K") m.K = static_cast<int>(parse_int(val));
    else if (key == "q") q = parse_int(val);
    else if (key == "seed") m.seed = parse_uint64(val);
    else if (key == "iterations") m.iterations_run = static_cast<int>(parse_int(val));
    else if (key == "ssd") m.final_ssd = parse_double(val);
  }
  if (m.K <= 0 || q <= 0) throw DataError("centroid header needs K and q", 1);
  m.centroids.resize(m.K, q);
  for (int k = 0; k < m.K; ++k) {
    if (!std::getline(in, line)) throw DataError("truncated centroid file", k + 2);
    std::istringstream row(line);
    for (long long j = 0; j < q; ++j) {
      std::string tok;
      if (!(row >> tok)) throw DataError("short centroid row", k + 2);
      m.centroids(k, j) = parse_double(tok);
    }
  }
  return m;
}

}  // namespace spot
