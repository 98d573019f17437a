#include "xshot/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <unordered_map>

namespace xshot {

void ThresholdGrid::validate() const {
  if (!(lo < hi)) throw ValidationError("threshold grid needs lo < hi");
  if (!(step > 0)) throw ValidationError("threshold grid needs step > 0");
  if ((hi - lo) / step > 1e6) throw ValidationError("threshold grid too fine");
}

std::vector<double> ThresholdGrid::points() const {
  validate();
  std::vector<double> pts;
  for (int i = 0;; ++i) {
    const double t = lo + i * step;
    if (t > hi + step * 1e-9) break;
    pts.push_back(t);
  }
  return pts;
}

ThresholdGrid ThresholdGrid::parse(const std::string& s) {
  ThresholdGrid g;
  if (std::sscanf(s.c_str(), "%lf:%lf:%lf", &g.lo, &g.hi, &g.step) != 3)
    throw ValidationError("bad threshold grid \"" + s + "\", expected lo:hi:step");
  g.validate();
  return g;
}

namespace {

std::unordered_map<std::string, std::size_t> label_index(const std::vector<std::string>& labels) {
  std::unordered_map<std::string, std::size_t> idx;
  for (std::size_t i = 0; i < labels.size(); ++i) idx[labels[i]] = i;
  return idx;
}

std::vector<InstanceScores> assemble(
    const std::vector<std::pair<std::string, std::pair<std::size_t, double>>>& entries,
    const std::vector<std::string>& order, std::size_t n_labels,
    const std::vector<std::string>& labels) {
  std::unordered_map<std::string, std::size_t> pos;
  std::vector<InstanceScores> out;
  std::vector<std::vector<bool>> seen;
  for (const auto& id : order) {
    pos[id] = out.size();
    out.push_back({id, std::vector<double>(n_labels, 0.0)});
    seen.emplace_back(n_labels, false);
  }
  for (const auto& [id, entry] : entries) {
    const auto [label_idx, p] = entry;
    const std::size_t i = pos.at(id);
    if (seen[i][label_idx])
      throw ValidationError("duplicate score for instance \"" + id + "\" label \"" +
                            labels[label_idx] + "\"");
    seen[i][label_idx] = true;
    out[i].p[label_idx] = p;
  }
  for (std::size_t i = 0; i < out.size(); ++i)
    for (std::size_t l = 0; l < n_labels; ++l)
      if (!seen[i][l])
        throw ValidationError("missing score for instance \"" + out[i].instance_id +
                              "\" label \"" + labels[l] + "\"");
  return out;
}

}  // namespace

std::vector<InstanceScores> group_scores(const std::vector<TripletExample>& triplets,
                                         const std::vector<ScoreRecord>& scores,
                                         const LabelSpace& space) {
  std::unordered_map<std::string, double> by_id;
  for (const auto& s : scores)
    if (!by_id.emplace(s.triplet_id, s.p_yes).second)
      throw ValidationError("duplicate score record for \"" + s.triplet_id + "\"");

  const auto labels = space.scorable_labels();
  const auto idx = label_index(labels);

  std::vector<std::string> order;
  std::set<std::string> seen_ids;
  std::vector<std::pair<std::string, std::pair<std::size_t, double>>> entries;
  for (const auto& t : triplets) {
    auto li = idx.find(t.label);
    if (li == idx.end())
      throw ValidationError("triplet \"" + t.triplet_id + "\" label not in label space");
    auto score = by_id.find(t.triplet_id);
    if (score == by_id.end())
      throw ValidationError("no score for triplet \"" + t.triplet_id + "\"");
    if (seen_ids.insert(t.instance_id).second) order.push_back(t.instance_id);
    entries.push_back({t.instance_id, {li->second, score->second}});
  }
  return assemble(entries, order, labels.size(), labels);
}

std::vector<InstanceScores> group_scores_by_id(const std::vector<ScoreRecord>& scores,
                                               const LabelSpace& space,
                                               const std::vector<std::string>& instance_ids) {
  const auto labels = space.scorable_labels();
  const auto idx = label_index(labels);
  std::set<std::string> known(instance_ids.begin(), instance_ids.end());

  // Longest label first, in case one label is a "::"-suffix of another.
  std::vector<std::string> by_len = labels;
  std::sort(by_len.begin(), by_len.end(),
            [](const std::string& a, const std::string& b) { return a.size() > b.size(); });

  std::vector<std::pair<std::string, std::pair<std::size_t, double>>> entries;
  for (const auto& s : scores) {
    bool matched = false;
    for (const auto& label : by_len) {
      const std::string suffix = "::" + label;
      if (s.triplet_id.size() <= suffix.size()) continue;
      if (s.triplet_id.compare(s.triplet_id.size() - suffix.size(), suffix.size(), suffix) != 0)
        continue;
      const std::string inst = s.triplet_id.substr(0, s.triplet_id.size() - suffix.size());
      if (known.count(inst) == 0) continue;
      entries.push_back({inst, {idx.at(label), s.p_yes}});
      matched = true;
      break;
    }
    if (!matched)
      throw ValidationError("score \"" + s.triplet_id +
                            "\" does not match any known (instance, label) pair");
  }
  return assemble(entries, instance_ids, labels.size(), labels);
}

std::vector<Prediction> assign_labels(const std::vector<InstanceScores>& scores,
                                      const LabelSpace& space, std::optional<double> threshold) {
  const auto labels = space.scorable_labels();
  std::vector<Prediction> out;
  out.reserve(scores.size());
  for (const auto& inst : scores) {
    if (inst.p.size() != labels.size())
      throw ValidationError("instance \"" + inst.instance_id + "\" has " +
                            std::to_string(inst.p.size()) + " scores for " +
                            std::to_string(labels.size()) + " labels");
    std::size_t best = 0;
    for (std::size_t i = 1; i < inst.p.size(); ++i)
      if (inst.p[i] > inst.p[best]) best = i;  // strict: ties keep the earliest label
    const double max_p = inst.p.empty() ? 0.0 : inst.p[best];
    std::string assigned = labels.empty() ? std::string(kNoneLabel) : labels[best];
    if (space.includes_none && threshold && max_p < *threshold) assigned = kNoneLabel;
    out.push_back({inst.instance_id, assigned, max_p});
  }
  return out;
}

namespace {

double accuracy_of(const std::vector<Prediction>& preds,
                   const std::map<std::string, std::string>& gold) {
  if (preds.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& p : preds) {
    auto it = gold.find(p.instance_id);
    if (it == gold.end())
      throw ValidationError("no gold label for instance \"" + p.instance_id + "\"");
    if (p.assigned == it->second) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

}  // namespace

TuneResult tune_threshold(const std::vector<InstanceScores>& dev_scores,
                          const std::map<std::string, std::string>& dev_gold,
                          const LabelSpace& space, const ThresholdGrid& grid) {
  if (!space.includes_none)
    throw ValidationError("threshold tuning requires a label space with \"None\"");

  bool has_gold_none = false;
  for (const auto& inst : dev_scores) {
    auto it = dev_gold.find(inst.instance_id);
    if (it == dev_gold.end())
      throw ValidationError("no gold label for dev instance \"" + inst.instance_id + "\"");
    if (it->second == kNoneLabel) has_gold_none = true;
  }

  if (!has_gold_none) {
    TuneResult r;
    r.threshold = grid.lo;
    r.dev_accuracy = accuracy_of(assign_labels(dev_scores, space, std::nullopt), dev_gold);
    r.warning = "dev set has no gold-\"None\" instance; threshold defaulted to grid lo";
    return r;
  }

  TuneResult best;
  bool first = true;
  for (double t : grid.points()) {
    const double acc = accuracy_of(assign_labels(dev_scores, space, t), dev_gold);
    if (first || acc > best.dev_accuracy) {  // strict: ties keep the smallest t
      best.threshold = t;
      best.dev_accuracy = acc;
      first = false;
    }
  }
  return best;
}

EvaluationReport evaluate(const std::vector<Prediction>& predictions,
                          const std::map<std::string, std::string>& gold,
                          const LabelSpace& space) {
  std::set<std::string> predicted_ids;
  std::string dup;
  for (const auto& p : predictions)
    if (!predicted_ids.insert(p.instance_id).second) dup += " " + p.instance_id;
  if (!dup.empty()) throw ValidationError("duplicate predictions for:" + dup);

  std::string extra, missing;
  for (const auto& p : predictions)
    if (gold.count(p.instance_id) == 0) extra += " " + p.instance_id;
  for (const auto& [id, _] : gold)
    if (predicted_ids.count(id) == 0) missing += " " + id;
  if (!extra.empty() || !missing.empty())
    throw ValidationError("prediction coverage mismatch; extra:" + extra + "; missing:" + missing);

  EvaluationReport r;
  std::int64_t correct_all = 0, correct_freq = 0, correct_few = 0, correct_zero = 0;
  std::map<std::pair<std::string, std::string>, std::int64_t> confusion;
  for (const auto& p : predictions) {
    const std::string& g = gold.at(p.instance_id);
    const bool correct = p.assigned == g;
    const FrequencyGroup group = g == kNoneLabel ? FrequencyGroup::zero : space.group_of(g);
    ++r.count_all;
    correct_all += correct;
    switch (group) {
      case FrequencyGroup::freq:
        ++r.count_freq;
        correct_freq += correct;
        break;
      case FrequencyGroup::few:
        ++r.count_few;
        correct_few += correct;
        break;
      case FrequencyGroup::zero:
        ++r.count_zero;
        correct_zero += correct;
        break;
    }
    ++confusion[{g, p.assigned}];
  }

  auto ratio = [](std::int64_t c, std::int64_t n) {
    return n > 0 ? static_cast<double>(c) / static_cast<double>(n) : 0.0;
  };
  r.accuracy_all = ratio(correct_all, r.count_all);
  r.accuracy_freq = ratio(correct_freq, r.count_freq);
  r.accuracy_few = ratio(correct_few, r.count_few);
  r.accuracy_zero = ratio(correct_zero, r.count_zero);
  int groups = 0;
  double macro = 0.0;
  for (auto [acc, count] : {std::pair{r.accuracy_freq, r.count_freq},
                            {r.accuracy_few, r.count_few},
                            {r.accuracy_zero, r.count_zero}}) {
    if (count > 0) {
      macro += acc;
      ++groups;
    }
  }
  r.accuracy_macro = groups > 0 ? macro / groups : 0.0;

  for (const auto& [pair, count] : confusion)
    r.confusion_slices.push_back({pair.first, pair.second, count});
  std::sort(r.confusion_slices.begin(), r.confusion_slices.end(),
            [](const ConfusionSlice& a, const ConfusionSlice& b) {
              if (a.count != b.count) return a.count > b.count;
              if (a.gold != b.gold) return a.gold < b.gold;
              return a.predicted < b.predicted;
            });
  return r;
}

std::string confusion_report(const EvaluationReport& report, const LabelSpace& space, int top_k) {
  std::ostringstream out;
  int emitted = 0;
  for (const auto& s : report.confusion_slices) {
    if (emitted >= top_k) break;
    if (s.gold == s.predicted) continue;
    std::string group = "?";
    if (s.predicted == kNoneLabel)
      group = "zero";
    else if (space.contains(s.predicted))
      group = to_string(space.group_of(s.predicted));
    out << s.gold << " -> " << s.predicted << "  count=" << s.count
        << "  predicted-group=" << group << "\n";
    ++emitted;
  }
  return out.str();
}

std::string format_report_table(const EvaluationReport& report) {
  char buf[256];
  std::ostringstream out;
  out << "          all     freq    few     zero\n";
  std::snprintf(buf, sizeof(buf), "acc %%   %7.2f %7.2f %7.2f %7.2f\n", report.accuracy_all * 100,
                report.accuracy_freq * 100, report.accuracy_few * 100, report.accuracy_zero * 100);
  out << buf;
  std::snprintf(buf, sizeof(buf), "count   %7lld %7lld %7lld %7lld\n",
                static_cast<long long>(report.count_all), static_cast<long long>(report.count_freq),
                static_cast<long long>(report.count_few), static_cast<long long>(report.count_zero));
  out << buf;
  if (report.threshold_used) {
    std::snprintf(buf, sizeof(buf), "threshold %.2f\n", *report.threshold_used);
    out << buf;
  }
  return out.str();
}

}  // namespace xshot
