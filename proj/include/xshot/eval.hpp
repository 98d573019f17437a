#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "xshot/types.hpp"

namespace xshot {

struct ThresholdGrid {
  double lo = 0.5;
  double hi = 1.0;
  double step = 0.01;

  void validate() const;
  std::vector<double> points() const;  // lo, lo+step, ... while <= hi
  static ThresholdGrid parse(const std::string& s);  // "lo:hi:step"
};

// Per-instance score vector aligned with space.scorable_labels().
struct InstanceScores {
  std::string instance_id;
  std::vector<double> p;
};

// Groups triplet scores by instance; errors on missing or duplicate
// (instance, label) scores. Instance order follows first appearance.
std::vector<InstanceScores> group_scores(const std::vector<TripletExample>& triplets,
                                         const std::vector<ScoreRecord>& scores,
                                         const LabelSpace& space);

// Same grouping from score records alone: (instance, label) is recovered from
// triplet_id = instance_id + "::" + label against the known instance ids.
// Output follows instance_ids order.
std::vector<InstanceScores> group_scores_by_id(const std::vector<ScoreRecord>& scores,
                                               const LabelSpace& space,
                                               const std::vector<std::string>& instance_ids);

// Argmax over p in canonical label order (ties -> earliest label). With
// includes_none and a threshold, assigns "None" iff max p < threshold.
std::vector<Prediction> assign_labels(const std::vector<InstanceScores>& scores,
                                      const LabelSpace& space, std::optional<double> threshold);

struct TuneResult {
  double threshold = 0.0;
  double dev_accuracy = 0.0;
  std::optional<std::string> warning;  // set when dev has no gold-"None"
};

// Exhaustive grid search maximizing dev accuracy; ties return the smallest t.
TuneResult tune_threshold(const std::vector<InstanceScores>& dev_scores,
                          const std::map<std::string, std::string>& dev_gold,
                          const LabelSpace& space, const ThresholdGrid& grid);

// Micro accuracy over all instances plus per-frequency-group accuracy; gold
// "None" counts in the zero group.
EvaluationReport evaluate(const std::vector<Prediction>& predictions,
                          const std::map<std::string, std::string>& gold, const LabelSpace& space);

// Most frequent off-diagonal confusions with the predicted label's group, so
// frequent-label bias is visible at a glance.
std::string confusion_report(const EvaluationReport& report, const LabelSpace& space, int top_k);

// Plain-text accuracy table: all / freq / few / zero.
std::string format_report_table(const EvaluationReport& report);

}  // namespace xshot
