#include "xshot/split.hpp"

#include <algorithm>
#include <sstream>

#include "xshot/jsonl.hpp"
#include "xshot/rng.hpp"

namespace xshot {

namespace {
constexpr const char* kModuleTag = "benchmark-builder";
}

int SplitSpec::train_quota(FrequencyGroup g) const {
  switch (g) {
    case FrequencyGroup::freq: return q_freq;
    case FrequencyGroup::few: return q_few;
    case FrequencyGroup::zero: return q_zero;
  }
  throw Error("unreachable frequency group");
}

void SplitSpec::validate() const {
  if (q_zero != 0) throw ValidationError("zero-shot train quota must be 0");
  if (dev_per_label <= 0 || test_per_label <= 0)
    throw ValidationError("dev_per_label and test_per_label must be positive");
  if (n_freq < 0 || n_few < 0 || n_zero < 0 || q_freq < 0 || q_few < 0 ||
      min_instances_per_label < 0)
    throw ValidationError("split spec counts must be non-negative");
}

SplitSpec preset_split_spec(const std::string& name) {
  if (name == "fewrel") return {26, 26, 26, 500, 5, 0, 200, 200, 0, false};
  if (name == "maven") return {23, 23, 23, 300, 5, 0, 100, 100, 400, true};
  if (name == "rams") return {10, 10, 10, 300, 5, 0, 50, 50, 101, false};
  throw ValidationError("unknown split preset \"" + name + "\"");
}

bool is_split_preset(const std::string& name) {
  return name == "fewrel" || name == "maven" || name == "rams";
}

namespace {

json spec_to_json(const SplitSpec& s) {
  return {{"group_label_counts", {s.n_freq, s.n_few, s.n_zero}},
          {"train_quota_per_label", {s.q_freq, s.q_few, s.q_zero}},
          {"dev_per_label", s.dev_per_label},
          {"test_per_label", s.test_per_label},
          {"min_instances_per_label", s.min_instances_per_label},
          {"includes_none", s.includes_none}};
}

SplitSpec spec_from_json(const json& j) {
  SplitSpec s;
  auto counts = j.at("group_label_counts").get<std::vector<int>>();
  auto quotas = j.at("train_quota_per_label").get<std::vector<int>>();
  if (counts.size() != 3 || quotas.size() != 3)
    throw ValidationError("split spec: group counts and quotas must have 3 entries");
  s.n_freq = counts[0];
  s.n_few = counts[1];
  s.n_zero = counts[2];
  s.q_freq = quotas[0];
  s.q_few = quotas[1];
  s.q_zero = quotas[2];
  s.dev_per_label = j.at("dev_per_label").get<int>();
  s.test_per_label = j.at("test_per_label").get<int>();
  s.min_instances_per_label = j.value("min_instances_per_label", 0);
  s.includes_none = j.value("includes_none", false);
  s.validate();
  return s;
}

}  // namespace

SplitSpec read_split_spec(const std::filesystem::path& path) {
  try {
    return spec_from_json(json::parse(read_file(path)));
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

LabelSpace partition_labels(const std::map<std::string, std::int64_t>& label_frequencies,
                            const SplitSpec& spec, std::uint64_t seed) {
  spec.validate();

  std::vector<std::string> eligible;
  for (const auto& [name, count] : label_frequencies) {
    if (name == kNoneLabel) continue;  // structural, never partitioned
    if (count >= spec.min_instances_per_label) eligible.push_back(name);
  }

  const int needed = spec.total_groups();
  if (static_cast<int>(eligible.size()) < needed) {
    std::ostringstream msg;
    msg << "not enough eligible labels: need " << needed << ", have " << eligible.size()
        << " with >= " << spec.min_instances_per_label << " instances";
    throw ValidationError(msg.str());
  }

  Rng rng(derive_seed(derive_seed(seed, kModuleTag), "partition"));
  rng.shuffle(eligible);

  LabelSpace space;
  space.includes_none = spec.includes_none;
  for (int i = 0; i < needed; ++i) {
    const std::string& name = eligible[i];
    FrequencyGroup g = i < spec.n_freq                ? FrequencyGroup::freq
                       : i < spec.n_freq + spec.n_few ? FrequencyGroup::few
                                                      : FrequencyGroup::zero;
    space.labels.push_back(name);
    space.groups[name] = g;
  }
  if (spec.includes_none) {
    space.labels.push_back(kNoneLabel);
    space.groups[kNoneLabel] = FrequencyGroup::zero;
  }
  space.validate();
  return space;
}

XShotBenchmark sample_split(const std::vector<RawInstance>& instances, const LabelSpace& space,
                            const SplitSpec& spec, std::uint64_t seed) {
  spec.validate();

  std::map<std::string, std::vector<const RawInstance*>> by_label;
  for (const auto& inst : instances) {
    if (!inst.gold_label) continue;
    if (space.contains(*inst.gold_label)) by_label[*inst.gold_label].push_back(&inst);
  }

  // Collect every shortage before failing.
  std::vector<std::string> shortages;
  for (const auto& label : space.labels) {
    const std::size_t available = by_label.count(label) ? by_label.at(label).size() : 0;
    if (label == kNoneLabel && available == 0) continue;  // raw data without None instances
    const std::size_t required = static_cast<std::size_t>(spec.test_per_label) +
                                 static_cast<std::size_t>(spec.dev_per_label) +
                                 static_cast<std::size_t>(spec.train_quota(space.group_of(label)));
    if (available < required) {
      std::ostringstream msg;
      msg << label << ": required " << required << ", available " << available;
      shortages.push_back(msg.str());
    }
  }
  if (!shortages.empty()) {
    std::string msg = "per-label instance shortage:";
    for (const auto& s : shortages) msg += "\n  " + s;
    throw ValidationError(msg);
  }

  const std::uint64_t module_seed = derive_seed(seed, kModuleTag);

  XShotBenchmark bench;
  bench.space = space;
  bench.seed = seed;
  bench.spec = spec;
  for (const auto& label : space.labels) {
    if (by_label.count(label) == 0) continue;
    auto pool = by_label.at(label);
    Rng rng(derive_seed(module_seed, "label:" + label));
    rng.shuffle(pool);

    // test first, then dev, then train: train quota changes never touch eval sets
    const int n_test = spec.test_per_label;
    const int n_dev = spec.dev_per_label;
    const int n_train = spec.train_quota(space.group_of(label));
    for (int i = 0; i < n_test; ++i) bench.test.push_back(*pool[i]);
    for (int i = 0; i < n_dev; ++i) bench.dev.push_back(*pool[n_test + i]);
    for (int i = 0; i < n_train; ++i) bench.train.push_back(*pool[n_test + n_dev + i]);
  }
  return bench;
}

XShotBenchmark build_benchmark(const std::filesystem::path& dataset_path, const SplitSpec& spec,
                               std::uint64_t seed, const std::filesystem::path& out_dir,
                               const std::optional<LabelSpace>& assignment) {
  auto instances = read_instances(dataset_path);

  // Structural validation: the label space does not exist yet.
  std::map<std::string, int> id_count;
  for (const auto& inst : instances) {
    if (inst.id.empty()) throw ValidationError(dataset_path.string() + ": empty instance id");
    if (++id_count[inst.id] == 2)
      throw ValidationError(dataset_path.string() + ": duplicate instance id \"" + inst.id + "\"");
  }

  std::map<std::string, std::int64_t> freqs;
  for (const auto& inst : instances)
    if (inst.gold_label && *inst.gold_label != kNoneLabel) ++freqs[*inst.gold_label];

  LabelSpace space;
  if (assignment) {
    space = *assignment;
    space.validate();
    if (space.includes_none != spec.includes_none)
      throw ValidationError("assignment file and split spec disagree on includes_none");
  } else {
    space = partition_labels(freqs, spec, seed);
  }
  XShotBenchmark bench = sample_split(instances, space, spec, seed);

  for (const auto& [name, count] : freqs) {
    if (!assignment && count < spec.min_instances_per_label)
      bench.dropped_below_min.push_back(name);
    else if (!space.contains(name))
      bench.dropped_unassigned.push_back(name);
  }

  std::filesystem::create_directories(out_dir);
  write_label_space(out_dir / "label_space.json", space);
  write_instances(out_dir / "train.jsonl", bench.train);
  write_instances(out_dir / "dev.jsonl", bench.dev);
  write_instances(out_dir / "test.jsonl", bench.test);

  std::map<std::string, std::map<std::string, int>> tallies;
  auto tally = [&](const std::vector<RawInstance>& split, const char* key) {
    for (const auto& inst : split)
      if (inst.gold_label) ++tallies[*inst.gold_label][key];
  };
  tally(bench.train, "train");
  tally(bench.dev, "dev");
  tally(bench.test, "test");
  json per_label = json::object();
  for (const auto& [label, counts] : tallies) per_label[label] = counts;

  json manifest = {{"seed", seed},
                   {"spec", spec_to_json(spec)},
                   {"counts",
                    {{"train", bench.train.size()},
                     {"dev", bench.dev.size()},
                     {"test", bench.test.size()},
                     {"per_label", per_label}}},
                   {"dropped_labels",
                    {{"below_min", bench.dropped_below_min},
                     {"unassigned", bench.dropped_unassigned}}}};
  write_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
  return bench;
}

BenchmarkDir load_benchmark(const std::filesystem::path& dir) {
  BenchmarkDir b;
  b.space = read_label_space(dir / "label_space.json");
  b.train = read_instances(dir / "train.jsonl");
  b.dev = read_instances(dir / "dev.jsonl");
  b.test = read_instances(dir / "test.jsonl");
  return b;
}

}  // namespace xshot
