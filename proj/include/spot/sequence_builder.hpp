#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "spot/topic_discovery.hpp"
#include "spot/trial_store.hpp"

namespace spot {

/// All trials of one topic that share a start year.
struct TimeStep {
  int year = 0;
  std::vector<std::string> trial_ids;

  bool operator==(const TimeStep&) const = default;
};

/// One task: a topic's trials grouped by year, years strictly increasing.
struct TopicSequence {
  int topic = 0;
  std::vector<TimeStep> steps;

  std::size_t length() const { return steps.size(); }
  std::size_t trial_count() const;
  bool contains(const std::string& id) const;

  bool operator==(const TopicSequence&) const = default;
};

/// One sequence per non-empty topic, ordered by topic. Ids within a step are
/// sorted lexicographically.
std::vector<TopicSequence> build_sequences(
    const TopicAssignment& assignment, const std::vector<TrialRecord>& records);

/// Steps 1..t inclusive (1-based t).
TopicSequence prefix(const TopicSequence& seq, std::size_t t);

struct InsertedQuery {
  TopicSequence sequence;
  std::size_t step = 0;  // 1-based index of the query's step
};

/// Places `record` in the step matching its start year, creating the step if
/// needed. Existing steps keep their membership apart from the added id.
InsertedQuery insert_query(const TopicSequence& seq, const TrialRecord& record);

/// Text dump: `topic <k>` followed by one `<year>\t<id>,<id>,...` line per step.
void write_sequences(const std::vector<TopicSequence>& sequences,
                     std::ostream& out);
std::vector<TopicSequence> read_sequences(std::istream& in);

}  // namespace spot
