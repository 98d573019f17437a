#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace xshot {

// Reserved label meaning "no label in the space applies". It is an ordinary
// label-name string so it can flow through the triplet machinery, but it is
// never expanded into a scorable triplet.
inline constexpr const char* kNoneLabel = "None";

// Exit-code mapping: validation 1, backend 2, dependency 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ValidationError : Error {
  using Error::Error;
};
struct BackendError : Error {
  using Error::Error;
};
struct DependencyError : Error {
  using Error::Error;
};

enum class FrequencyGroup { freq, few, zero };

std::string to_string(FrequencyGroup g);
FrequencyGroup group_from_string(const std::string& s);

enum class Polarity { yes, no, unknown };

std::string to_string(Polarity p);

// Ordered label set with per-label frequency-group assignment. The vector
// order is canonical: it is preserved across serialization and used for
// tie-breaking everywhere.
struct LabelSpace {
  std::vector<std::string> labels;
  std::map<std::string, FrequencyGroup> groups;
  bool includes_none = false;

  bool contains(const std::string& name) const { return groups.count(name) > 0; }
  FrequencyGroup group_of(const std::string& name) const;

  // Canonical order minus "None": the labels that get triplets and scores.
  std::vector<std::string> scorable_labels() const;

  void validate() const;  // throws ValidationError on any invariant breach

  bool operator==(const LabelSpace&) const = default;
};

struct RawInstance {
  std::string id;
  std::string text;
  std::map<std::string, std::string> anchors;  // role -> span
  std::optional<std::string> gold_label;
  bool weak = false;  // machine-generated instance marker

  bool operator==(const RawInstance&) const = default;
};

struct TripletExample {
  std::string triplet_id;  // instance_id + "::" + label
  std::string instance_id;
  std::string instruction;
  std::string input;
  std::string label;
  Polarity polarity = Polarity::unknown;
  FrequencyGroup group = FrequencyGroup::freq;

  bool operator==(const TripletExample&) const = default;
};

inline std::string make_triplet_id(const std::string& instance_id, const std::string& label) {
  return instance_id + "::" + label;
}

struct TaskDemo {
  std::string input;
  std::string output;

  bool operator==(const TaskDemo&) const = default;
};

struct TaskInstance {
  std::string id;
  std::string input;
  std::vector<std::string> outputs;  // gold answers, never empty

  bool operator==(const TaskInstance&) const = default;
};

// One instruction-tuning source task: definition, demos, instances.
struct TaskRecord {
  std::string task_id;
  std::string definition;
  std::vector<TaskDemo> positive_demos;
  std::vector<TaskInstance> instances;

  bool operator==(const TaskRecord&) const = default;
};

struct ScoreRecord {
  std::string triplet_id;
  double p_yes = 0.0;

  bool operator==(const ScoreRecord&) const = default;
};

struct Prediction {
  std::string instance_id;
  std::string assigned;  // label name or "None"
  double max_score = 0.0;

  bool operator==(const Prediction&) const = default;
};

struct ConfusionSlice {
  std::string gold;
  std::string predicted;
  std::int64_t count = 0;

  bool operator==(const ConfusionSlice&) const = default;
};

struct EvaluationReport {
  double accuracy_all = 0.0;
  double accuracy_freq = 0.0;
  double accuracy_few = 0.0;
  double accuracy_zero = 0.0;
  double accuracy_macro = 0.0;  // mean over non-empty groups
  std::int64_t count_all = 0;
  std::int64_t count_freq = 0;
  std::int64_t count_few = 0;
  std::int64_t count_zero = 0;
  std::optional<double> threshold_used;
  std::optional<std::string> template_id;
  std::vector<ConfusionSlice> confusion_slices;  // all (gold, predicted) pairs, count-descending

  bool operator==(const EvaluationReport&) const = default;
};

struct Violation {
  std::string instance_id;
  std::string reason;

  bool operator==(const Violation&) const = default;
};

// Empty result iff every instance satisfies the dataset invariants.
std::vector<Violation> validate_dataset(const std::vector<RawInstance>& instances,
                                        const LabelSpace& space);

}  // namespace xshot
