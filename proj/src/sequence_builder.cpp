#include "spot/sequence_builder.hpp"

#include <algorithm>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace spot {

std::size_t TopicSequence::trial_count() const {
  std::size_t n = 0;
  for (const auto& s : steps) n += s.trial_ids.size();
  return n;
}

bool TopicSequence::contains(const std::string& id) const {
  for (const auto& s : steps) {
    if (std::find(s.trial_ids.begin(), s.trial_ids.end(), id) != s.trial_ids.end()) {
      return true;
    }
  }
  return false;
}

std::vector<TopicSequence> build_sequences(
    const TopicAssignment& assignment, const std::vector<TrialRecord>& records) {
  const auto idx = index_by_id(records);
  std::map<int, std::map<int, std::vector<std::string>>> grouped;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    auto it = idx.find(assignment.ids[i]);
    if (it == idx.end()) {
      throw DataError("assigned trial " + assignment.ids[i] + " has no record");
    }
    grouped[assignment.topics[i]][records[it->second].start_year].push_back(
        assignment.ids[i]);
  }
  std::vector<TopicSequence> out;
  for (auto& [topic, years] : grouped) {
    TopicSequence seq;
    seq.topic = topic;
    for (auto& [year, ids] : years) {
      std::sort(ids.begin(), ids.end());
      if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
        throw DataError("trial assigned twice in topic " + std::to_string(topic));
      }
      seq.steps.push_back({year, std::move(ids)});
    }
    out.push_back(std::move(seq));
  }
  return out;
}

TopicSequence prefix(const TopicSequence& seq, std::size_t t) {
  if (t < 1 || t > seq.steps.size()) {
    throw std::out_of_range("prefix: t=" + std::to_string(t) +
                            " outside [1, " + std::to_string(seq.steps.size()) +
                            "]");
  }
  TopicSequence out;
  out.topic = seq.topic;
  out.steps.assign(seq.steps.begin(), seq.steps.begin() + static_cast<long>(t));
  return out;
}

InsertedQuery insert_query(const TopicSequence& seq, const TrialRecord& record) {
  if (seq.contains(record.id)) {
    throw DataError("query " + record.id + " already present in topic " +
                    std::to_string(seq.topic));
  }
  InsertedQuery q{seq, 0};
  auto& steps = q.sequence.steps;
  auto pos = std::lower_bound(
      steps.begin(), steps.end(), record.start_year,
      [](const TimeStep& s, int year) { return s.year < year; });
  if (pos != steps.end() && pos->year == record.start_year) {
    auto& ids = pos->trial_ids;
    ids.insert(std::lower_bound(ids.begin(), ids.end(), record.id), record.id);
  } else {
    pos = steps.insert(pos, TimeStep{record.start_year, {record.id}});
  }
  q.step = static_cast<std::size_t>(pos - steps.begin()) + 1;
  return q;
}

void write_sequences(const std::vector<TopicSequence>& sequences,
                     std::ostream& out) {
  for (const auto& seq : sequences) {
    out << "topic " << seq.topic << '\n';
    for (const auto& step : seq.steps) {
      out << step.year << '\t';
      for (std::size_t i = 0; i < step.trial_ids.size(); ++i) {
        if (i) out << ',';
        out << step.trial_ids[i];
      }
      out << '\n';
    }
  }
}

std::vector<TopicSequence> read_sequences(std::istream& in) {
  std::vector<TopicSequence> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line.rfind("topic ", 0) == 0) {
      out.push_back({static_cast<int>(parse_int(line.substr(6))), {}});
      continue;
    }
    if (out.empty()) throw DataError("step before any topic header", line_no);
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError("step row needs year<TAB>ids", line_no);
    TimeStep step;
    step.year = static_cast<int>(parse_int(std::string_view(line).substr(0, tab)));
    std::istringstream ids(line.substr(tab + 1));
    std::string id;
    while (std::getline(ids, id, ',')) {
      if (!id.empty()) step.trial_ids.push_back(id);
    }
    if (step.trial_ids.empty()) throw DataError("empty time step", line_no);
    auto& steps = out.back().steps;
    if (!steps.empty() && steps.back().year >= step.year) {
      throw DataError("step years must strictly increase", line_no);
    }
    steps.push_back(std::move(step));
  }
  return out;
}

}  // namespace spot
