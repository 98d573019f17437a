#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "xshot/types.hpp"

namespace xshot {

// Label partition and per-label instance quotas for recompiling a raw dataset
// into an X-Shot benchmark.
struct SplitSpec {
  int n_freq = 0;
  int n_few = 0;
  int n_zero = 0;
  int q_freq = 0;  // train quota per freq label
  int q_few = 0;
  int q_zero = 0;  // always 0: zero-shot labels contribute no training instances
  int dev_per_label = 0;
  int test_per_label = 0;
  int min_instances_per_label = 0;  // labels below this are dropped before partition
  bool includes_none = false;

  int total_groups() const { return n_freq + n_few + n_zero; }
  int train_quota(FrequencyGroup g) const;

  void validate() const;
};

// fewrel | maven | rams, matching the published label partitions and quotas.
SplitSpec preset_split_spec(const std::string& name);
bool is_split_preset(const std::string& name);

SplitSpec read_split_spec(const std::filesystem::path& path);

struct XShotBenchmark {
  LabelSpace space;
  std::vector<RawInstance> train;
  std::vector<RawInstance> dev;
  std::vector<RawInstance> test;
  std::uint64_t seed = 0;
  SplitSpec spec;
  std::vector<std::string> dropped_below_min;  // failed the min-instances filter
  std::vector<std::string> dropped_unassigned;  // eligible but beyond the group quotas
};

// Seeded shuffle of eligible labels, assigned in order: first n_freq to freq,
// next n_few to few, next n_zero to zero. Appends "None" to the zero group
// when the split spec declares includes_none. Canonical label order =
// assignment order. Throws ValidationError when too few labels are eligible.
LabelSpace partition_labels(const std::map<std::string, std::int64_t>& label_frequencies,
                            const SplitSpec& spec, std::uint64_t seed);

// Per label, a seeded shuffle sliced disjointly into test, then dev, then
// train (so shrinking train quotas never perturbs the evaluation sets).
// Throws with every per-label shortage listed.
XShotBenchmark sample_split(const std::vector<RawInstance>& instances, const LabelSpace& space,
                            const SplitSpec& spec, std::uint64_t seed);

// Reads a raw instance file, partitions, samples, and persists
// label_space.json, {train,dev,test}.jsonl and manifest.json under out_dir.
// Byte-identical for a fixed seed. An explicit assignment overrides the
// seeded partition: the given space is used as-is (its order stays canonical).
XShotBenchmark build_benchmark(const std::filesystem::path& dataset_path, const SplitSpec& spec,
                               std::uint64_t seed, const std::filesystem::path& out_dir,
                               const std::optional<LabelSpace>& assignment = std::nullopt);

// Benchmark directory readers used by the downstream stages.
struct BenchmarkDir {
  LabelSpace space;
  std::vector<RawInstance> train;
  std::vector<RawInstance> dev;
  std::vector<RawInstance> test;
};
BenchmarkDir load_benchmark(const std::filesystem::path& dir);

}  // namespace xshot
