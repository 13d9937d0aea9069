#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "spot/common.hpp"

namespace spot {

enum class Phase { I, II, III };
enum class Split { Train, Valid, Test };

std::string_view to_string(Phase phase);
std::string_view to_string(Split split);
Phase parse_phase(std::string_view text);
Split parse_split(std::string_view text);

struct TrialRecord {
  std::string id;
  Phase phase = Phase::I;
  int start_year = 2000;
  std::vector<std::string> diseases;
  std::vector<std::string> treatments;
  std::vector<std::string> criteria;
  std::optional<int> label;
  Split split = Split::Train;

  bool operator==(const TrialRecord&) const = default;
};

/// Component order used everywhere: disease, treatment, criteria.
enum Component : int { kDisease = 0, kTreatment = 1, kCriteria = 2 };

struct TrialFeatures {
  Vector h_d;
  Vector h_t;
  Vector h_c;
  std::array<bool, 3> present{false, false, false};
  Vector z;

  const Vector& component(int c) const {
    return c == kDisease ? h_d : (c == kTreatment ? h_t : h_c);
  }
  Eigen::Index p() const { return h_d.size(); }
  Eigen::Index q() const { return z.size(); }
};

enum class FeatureSource { None, Precomputed, Hashed };
std::string_view to_string(FeatureSource source);

struct DatasetManifest {
  // counts[phase][split]
  std::array<std::array<int, 3>, 3> counts{};
  int p = 0;
  int q = 0;
  FeatureSource source = FeatureSource::None;
  std::string checksum;

  int count(Phase phase, Split split) const {
    return counts[static_cast<int>(phase)][static_cast<int>(split)];
  }
  int total() const;
};

struct TrialSet {
  std::vector<TrialRecord> records;
  DatasetManifest manifest;
};

/// Validates a record in isolation. Throws DataError.
void validate_record(const TrialRecord& record);

/// One JSON object per line. Blank lines are skipped.
TrialSet parse_trials(std::istream& in);
TrialSet load_trials(const std::string& path);
void write_trials(const std::vector<TrialRecord>& records, std::ostream& out);
void save_trials(const std::vector<TrialRecord>& records,
                 const std::string& path);

DatasetManifest compute_manifest(const std::vector<TrialRecord>& records);

// ---------------------------------------------------------------------------
// Feature providers

struct EmbeddingRow {
  std::string id;
  Vector h_d, h_t, h_c, z;
};

struct EmbeddingTable {
  int p = 0;
  int q = 0;
  std::vector<EmbeddingRow> rows;
};

/// Header `# spot-embeddings v1 p=<p> q=<q>`, then tab-separated rows
/// `id h_d[p] h_t[p] h_c[p] z[q]`.
EmbeddingTable parse_embeddings(std::istream& in);
EmbeddingTable load_embeddings(const std::string& path);
void write_embeddings(const EmbeddingTable& table, std::ostream& out);

/// Features in record order. A component that is empty in the record is
/// forced to the zero vector with its present flag cleared.
std::vector<TrialFeatures> attach_precomputed(
    const std::vector<TrialRecord>& records, const EmbeddingTable& table);
std::vector<TrialFeatures> attach_precomputed(
    const std::vector<TrialRecord>& records, const std::string& path);

/// Tokens a component contributes to the hashing trick. Disease and
/// treatment entries are one token each; criteria text is split into
/// lowercase alphanumeric words.
std::vector<std::string> component_tokens(const TrialRecord& record,
                                          Component component);

/// Hashing-trick bucket and sign for one tagged token.
struct HashedSlot {
  std::size_t bucket;
  double sign;
};
HashedSlot hash_slot(std::string_view key, std::size_t dim, std::uint64_t seed);

TrialFeatures featurize_hashed(const TrialRecord& record, int p, int q,
                               std::uint64_t seed);

/// Parsed `--features` argument: `precomputed:<path>` or `hashed:<seed>`.
struct FeatureSpec {
  FeatureSource source = FeatureSource::Hashed;
  std::string path;
  std::uint64_t seed = 0;

  static FeatureSpec parse(std::string_view text);
  std::string to_string() const;
};

/// Featurizes every record with the given provider. `p`/`q` are only used
/// by the hashed provider; the precomputed provider takes dims from the file.
std::vector<TrialFeatures> featurize_all(const std::vector<TrialRecord>& records,
                                         const FeatureSpec& spec, int p, int q);

std::unordered_map<std::string, std::size_t> index_by_id(
    const std::vector<TrialRecord>& records);

}  // namespace spot
