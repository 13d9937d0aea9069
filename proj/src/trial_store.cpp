#include "spot/trial_store.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

namespace spot {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr std::string_view kEmbeddingMagic = "# spot-embeddings v1";

std::vector<std::string> string_list(const nlohmann::json& obj,
                                     const char* key) {
  std::vector<std::string> out;
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return out;
  if (!it->is_array()) {
    throw DataError(std::string("field '") + key + "' must be a list");
  }
  for (const auto& item : *it) {
    if (!item.is_string()) {
      throw DataError(std::string("field '") + key + "' must hold strings");
    }
    out.push_back(item.get<std::string>());
  }
  return out;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && (line[pos] == '\t' || line[pos] == ' ')) ++pos;
    if (pos >= line.size()) break;
    std::size_t end = pos;
    while (end < line.size() && line[end] != '\t' && line[end] != ' ') ++end;
    fields.push_back(line.substr(pos, end - pos));
    pos = end;
  }
  return fields;
}

void normalize(Vector& v) {
  double n = v.norm();
  if (n > 0.0) v /= n;
}

}  // namespace

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::I: return "I";
    case Phase::II: return "II";
    case Phase::III: return "III";
  }
  return "?";
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Valid: return "valid";
    case Split::Test: return "test";
  }
  return "?";
}

std::string_view to_string(FeatureSource source) {
  switch (source) {
    case FeatureSource::None: return "none";
    case FeatureSource::Precomputed: return "precomputed";
    case FeatureSource::Hashed: return "hashed";
  }
  return "?";
}

Phase parse_phase(std::string_view text) {
  if (text == "I") return Phase::I;
  if (text == "II") return Phase::II;
  if (text == "III") return Phase::III;
  throw DataError("unknown phase '" + std::string(text) + "'");
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::Train;
  if (text == "valid") return Split::Valid;
  if (text == "test") return Split::Test;
  throw DataError("unknown split '" + std::string(text) + "'");
}

int DatasetManifest::total() const {
  int n = 0;
  for (const auto& row : counts) {
    for (int c : row) n += c;
  }
  return n;
}

void validate_record(const TrialRecord& record) {
  if (record.id.empty()) throw DataError("empty trial id");
  if (record.start_year < 1900 || record.start_year > 2100) {
    throw DataError("trial " + record.id + ": start_year " +
                    std::to_string(record.start_year) +
                    " outside [1900, 2100]");
  }
  if (record.label && *record.label != 0 && *record.label != 1) {
    throw DataError("trial " + record.id + ": label must be 0 or 1");
  }
  if (!record.label && record.split != Split::Test) {
    throw DataError("trial " + record.id + ": label missing on " +
                    std::string(to_string(record.split)) + " record");
  }
  if (record.diseases.empty() && record.treatments.empty() &&
      record.criteria.empty()) {
    throw DataError("trial " + record.id + ": all components empty");
  }
}

DatasetManifest compute_manifest(const std::vector<TrialRecord>& records) {
  DatasetManifest m;
  for (const auto& r : records) {
    ++m.counts[static_cast<int>(r.phase)][static_cast<int>(r.split)];
  }
  return m;
}

TrialSet parse_trials(std::istream& in) {
  TrialSet set;
  std::unordered_set<std::string> seen;
  std::string line;
  std::string all_bytes;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    all_bytes += line;
    all_bytes += '\n';
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    TrialRecord r;
    try {
      auto obj = nlohmann::json::parse(line);
      if (!obj.is_object()) throw DataError("expected a JSON object");
      if (!obj.contains("id") || !obj["id"].is_string()) {
        throw DataError("missing string field 'id'");
      }
      r.id = obj["id"].get<std::string>();
      if (!obj.contains("phase") || !obj["phase"].is_string()) {
        throw DataError("missing string field 'phase'");
      }
      r.phase = parse_phase(obj["phase"].get<std::string>());
      if (!obj.contains("start_year") || !obj["start_year"].is_number_integer()) {
        throw DataError("missing integer field 'start_year'");
      }
      r.start_year = obj["start_year"].get<int>();
      r.diseases = string_list(obj, "diseases");
      r.treatments = string_list(obj, "treatments");
      r.criteria = string_list(obj, "criteria");
      if (obj.contains("label") && !obj["label"].is_null()) {
        if (!obj["label"].is_number_integer()) {
          throw DataError("field 'label' must be 0, 1 or null");
        }
        r.label = obj["label"].get<int>();
      }
      if (!obj.contains("split") || !obj["split"].is_string()) {
        throw DataError("missing string field 'split'");
      }
      r.split = parse_split(obj["split"].get<std::string>());
      validate_record(r);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("parse failure: ") + e.what(), line_no);
    } catch (const DataError& e) {
      if (e.line()) throw;
      throw DataError(e.what(), line_no);
    }
    if (!seen.insert(r.id).second) {
      throw DataError("duplicate trial id \"" + r.id + "\"", line_no);
    }
    set.records.push_back(std::move(r));
  }
  set.manifest = compute_manifest(set.records);
  set.manifest.checksum = checksum_hex(fnv1a64(all_bytes));
  return set;
}

TrialSet load_trials(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open trial file " + path);
  return parse_trials(in);
}

void write_trials(const std::vector<TrialRecord>& records, std::ostream& out) {
  for (const auto& r : records) {
    ordered_json obj;
    obj["id"] = r.id;
    obj["phase"] = to_string(r.phase);
    obj["start_year"] = r.start_year;
    obj["diseases"] = r.diseases;
    obj["treatments"] = r.treatments;
    obj["criteria"] = r.criteria;
    obj["label"] = r.label ? ordered_json(*r.label) : ordered_json(nullptr);
    obj["split"] = to_string(r.split);
    out << obj.dump() << '\n';
  }
}

void save_trials(const std::vector<TrialRecord>& records,
                 const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  write_trials(records, out);
}

EmbeddingTable parse_embeddings(std::istream& in) {
  EmbeddingTable table;
  std::string line;
  int line_no = 1;
  if (!std::getline(in, line) || line.rfind(kEmbeddingMagic, 0) != 0) {
    throw DataError("missing embedding header '" + std::string(kEmbeddingMagic) +
                        " p=<p> q=<q>'",
                    line_no);
  }
  for (auto field : split_fields(std::string_view(line).substr(kEmbeddingMagic.size()))) {
    if (field.rfind("p=", 0) == 0) {
      table.p = static_cast<int>(parse_int(field.substr(2)));
    } else if (field.rfind("q=", 0) == 0) {
      table.q = static_cast<int>(parse_int(field.substr(2)));
    }
  }
  if (table.p <= 0 || table.q <= 0) {
    throw DataError("embedding header must declare positive p and q", line_no);
  }
  const std::size_t expected = 3 * static_cast<std::size_t>(table.p) + table.q;
  std::unordered_set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto fields = split_fields(line);
    if (fields.empty()) continue;
    EmbeddingRow row;
    row.id = std::string(fields[0]);
    if (fields.size() - 1 != expected) {
      throw DataError("inconsistent dimension for id " + row.id + ": expected " +
                          std::to_string(expected) + " values, got " +
                          std::to_string(fields.size() - 1),
                      line_no);
    }
    if (!seen.insert(row.id).second) {
      throw DataError("duplicate embedding id " + row.id, line_no);
    }
    std::vector<double> values(expected);
    try {
      for (std::size_t i = 0; i < expected; ++i) {
        values[i] = parse_double(fields[i + 1]);
      }
    } catch (const DataError& e) {
      throw DataError(std::string(e.what()) + " (id " + row.id + ")", line_no);
    }
    auto take = [&](std::size_t offset, int n) {
      return Eigen::Map<const Vector>(values.data() + offset, n).eval();
    };
    row.h_d = take(0, table.p);
    row.h_t = take(table.p, table.p);
    row.h_c = take(2 * table.p, table.p);
    row.z = take(3 * table.p, table.q);
    table.rows.push_back(std::move(row));
  }
  return table;
}

EmbeddingTable load_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embedding file " + path);
  return parse_embeddings(in);
}

void write_embeddings(const EmbeddingTable& table, std::ostream& out) {
  out << kEmbeddingMagic << " p=" << table.p << " q=" << table.q << '\n';
  for (const auto& row : table.rows) {
    out << row.id;
    for (const Vector* v : {&row.h_d, &row.h_t, &row.h_c, &row.z}) {
      for (Eigen::Index i = 0; i < v->size(); ++i) {
        out << '\t' << format_double((*v)[i]);
      }
    }
    out << '\n';
  }
}

std::vector<TrialFeatures> attach_precomputed(
    const std::vector<TrialRecord>& records, const EmbeddingTable& table) {
  std::unordered_map<std::string, const EmbeddingRow*> by_id;
  for (const auto& row : table.rows) by_id.emplace(row.id, &row);
  std::vector<TrialFeatures> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    auto it = by_id.find(r.id);
    if (it == by_id.end()) {
      throw DataError("trial " + r.id + " missing from embedding file");
    }
    const EmbeddingRow& row = *it->second;
    if (row.h_d.size() != table.p || row.h_t.size() != table.p ||
        row.h_c.size() != table.p || row.z.size() != table.q) {
      throw DataError("inconsistent dimension for id " + r.id);
    }
    TrialFeatures f;
    f.present = {!r.diseases.empty(), !r.treatments.empty(),
                 !r.criteria.empty()};
    f.h_d = f.present[kDisease] ? row.h_d : Vector::Zero(table.p);
    f.h_t = f.present[kTreatment] ? row.h_t : Vector::Zero(table.p);
    f.h_c = f.present[kCriteria] ? row.h_c : Vector::Zero(table.p);
    f.z = row.z;
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<TrialFeatures> attach_precomputed(
    const std::vector<TrialRecord>& records, const std::string& path) {
  return attach_precomputed(records, load_embeddings(path));
}

std::vector<std::string> component_tokens(const TrialRecord& record,
                                          Component component) {
  switch (component) {
    case kDisease: return record.diseases;
    case kTreatment: return record.treatments;
    case kCriteria: {
      std::vector<std::string> words;
      for (const auto& text : record.criteria) {
        std::string word;
        for (unsigned char c : text) {
          if (std::isalnum(c)) {
            word.push_back(static_cast<char>(std::tolower(c)));
          } else if (!word.empty()) {
            words.push_back(std::move(word));
            word.clear();
          }
        }
        if (!word.empty()) words.push_back(std::move(word));
      }
      return words;
    }
  }
  return {};
}

HashedSlot hash_slot(std::string_view key, std::size_t dim, std::uint64_t seed) {
  const std::uint64_t h = fnv1a64(key, splitmix64(seed));
  return {static_cast<std::size_t>(h % dim), (h >> 63) ? -1.0 : 1.0};
}

TrialFeatures featurize_hashed(const TrialRecord& record, int p, int q,
                               std::uint64_t seed) {
  if (p <= 0 || q <= 0) throw ConfigError("featurize_hashed: p and q must be > 0");
  static constexpr const char* kTags[3] = {"d:", "t:", "c:"};
  TrialFeatures f;
  f.z = Vector::Zero(q);
  Vector* comps[3] = {&f.h_d, &f.h_t, &f.h_c};
  for (int c = 0; c < 3; ++c) {
    Vector& v = *comps[c];
    v = Vector::Zero(p);
    auto tokens = component_tokens(record, static_cast<Component>(c));
    f.present[c] = !tokens.empty();
    for (const auto& tok : tokens) {
      const std::string key = kTags[c] + tok;
      auto slot = hash_slot(key, p, seed);
      v[slot.bucket] += slot.sign;
      auto zslot = hash_slot("z|" + key, q, seed);
      f.z[zslot.bucket] += zslot.sign;
    }
    normalize(v);
  }
  normalize(f.z);
  return f;
}

FeatureSpec FeatureSpec::parse(std::string_view text) {
  FeatureSpec spec;
  auto colon = text.find(':');
  if (colon == std::string_view::npos) {
    throw ConfigError("--features expects precomputed:<path> or hashed:<seed>");
  }
  auto kind = text.substr(0, colon);
  auto arg = text.substr(colon + 1);
  if (kind == "precomputed") {
    if (arg.empty()) throw ConfigError("precomputed features need a path");
    spec.source = FeatureSource::Precomputed;
    spec.path = std::string(arg);
  } else if (kind == "hashed") {
    spec.source = FeatureSource::Hashed;
    try {
      spec.seed = static_cast<std::uint64_t>(parse_int(arg));
    } catch (const DataError&) {
      throw ConfigError("hashed features need an integer seed");
    }
  } else {
    throw ConfigError("unknown feature source '" + std::string(kind) + "'");
  }
  return spec;
}

std::string FeatureSpec::to_string() const {
  if (source == FeatureSource::Precomputed) return "precomputed:" + path;
  return "hashed:" + std::to_string(seed);
}

std::vector<TrialFeatures> featurize_all(const std::vector<TrialRecord>& records,
                                         const FeatureSpec& spec, int p, int q) {
  if (spec.source == FeatureSource::Precomputed) {
    return attach_precomputed(records, spec.path);
  }
  std::vector<TrialFeatures> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(featurize_hashed(r, p, q, spec.seed));
  return out;
}

std::unordered_map<std::string, std::size_t> index_by_id(
    const std::vector<TrialRecord>& records) {
  std::unordered_map<std::string, std::size_t> idx;
  idx.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) idx.emplace(records[i].id, i);
  return idx;
}

}  // namespace spot
