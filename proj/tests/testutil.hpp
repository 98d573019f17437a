#pragma once

#include <unistd.h>

#include <filesystem>
#include <string>
#include <vector>

#include "xshot/rng.hpp"
#include "xshot/types.hpp"

namespace xshot::testutil {

// Unique scratch directory, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("xshot_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::vector<std::string> make_label_names(int n, const std::string& prefix = "label") {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

// Evenly assigns labels to freq/few/zero in order; optionally appends "None".
inline LabelSpace make_space(const std::vector<std::string>& labels, int n_freq, int n_few,
                             bool includes_none = false) {
  LabelSpace space;
  space.includes_none = includes_none;
  for (int i = 0; i < static_cast<int>(labels.size()); ++i) {
    space.labels.push_back(labels[i]);
    space.groups[labels[i]] = i < n_freq                ? FrequencyGroup::freq
                              : i < n_freq + n_few      ? FrequencyGroup::few
                                                        : FrequencyGroup::zero;
  }
  if (includes_none) {
    space.labels.push_back(kNoneLabel);
    space.groups[kNoneLabel] = FrequencyGroup::zero;
  }
  space.validate();
  return space;
}

// per_label instances for each label, with entity1/entity2/trigger/argument anchors.
inline std::vector<RawInstance> make_corpus(const std::vector<std::string>& labels, int per_label,
                                            const std::string& id_prefix = "inst") {
  std::vector<RawInstance> out;
  for (const auto& label : labels) {
    for (int i = 0; i < per_label; ++i) {
      RawInstance inst;
      inst.id = id_prefix + "_" + label + "_" + std::to_string(i);
      inst.text = "Context sentence " + std::to_string(i) + " about " + label + ".";
      inst.anchors = {{"entity1", "alpha" + std::to_string(i)},
                      {"entity2", "beta" + std::to_string(i)},
                      {"trigger", "doing"},
                      {"argument", "gamma" + std::to_string(i)}};
      inst.gold_label = label;
      out.push_back(std::move(inst));
    }
  }
  return out;
}

inline TaskRecord make_task(const std::string& id, int n_instances, int n_answers,
                            const std::string& definition = "Answer the question.") {
  TaskRecord t;
  t.task_id = id;
  t.definition = definition;
  t.positive_demos = {{"demo input one", "demo output one"}, {"demo input two", "demo output two"}};
  for (int i = 0; i < n_instances; ++i) {
    TaskInstance inst;
    inst.id = id + "_i" + std::to_string(i);
    inst.input = "input " + std::to_string(i) + " for " + id;
    inst.outputs = {"answer" + std::to_string(n_answers > 0 ? i % n_answers : 0)};
    t.instances.push_back(std::move(inst));
  }
  return t;
}

// A text of exactly n whitespace-delimited words.
inline std::string words(int n, const std::string& stem = "w") {
  std::string out;
  for (int i = 0; i < n; ++i) {
    if (!out.empty()) out += ' ';
    out += stem + std::to_string(i);
  }
  return out;
}

}  // namespace xshot::testutil
