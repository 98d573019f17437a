#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xshot/types.hpp"

namespace xshot {

// One binary example derived from an instruction-tuning task instance.
struct IndirectPair {
  std::string pair_id;  // task_id + "::" + instance_id + "::" + polarity
  std::string task_id;
  std::string prefix;  // definition + demos, word-limited
  std::string input;
  std::string candidate;
  Polarity polarity = Polarity::yes;

  bool operator==(const IndirectPair&) const = default;
};

struct AblationPoint {
  int num_tasks = 0;
  int instances_per_task = 0;
  std::int64_t total() const { return std::int64_t(num_tasks) * instances_per_task; }

  bool operator==(const AblationPoint&) const = default;
};

enum class ScheduleMode { vary_tasks, vary_instances };

ScheduleMode schedule_mode_from_string(const std::string& s);

// Seeded sample without replacement of min(cap, |instances|) instances.
std::vector<TaskInstance> sample_task_instances(const TaskRecord& task, int cap,
                                                std::uint64_t seed);

struct PrefixResult {
  std::string text;
  bool truncated = false;  // definition alone exceeded the word limit
};

// Definition plus up to two positive demos, each appended only while the
// whitespace-delimited word count stays within max_words.
PrefixResult build_prefix(const TaskRecord& task, int max_words);

// Uniform draw from the gold outputs of *other* instances in the same task,
// minus this instance's own golds. nullopt = skip (empty pool).
std::optional<std::string> sample_negative_answer(const TaskRecord& task,
                                                  const TaskInstance& instance,
                                                  std::uint64_t seed);

struct IndirectDataset {
  std::vector<IndirectPair> pairs;
  std::vector<std::string> warnings;
};

// One yes pair and one no pair per sampled instance; instances whose negative
// pool is empty are skipped, so yes and no counts always match.
IndirectDataset build_indirect_dataset(const std::vector<TaskRecord>& tasks, int cap,
                                       int max_words, std::uint64_t seed);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

struct SimilarTaskFilter {
  std::vector<TaskRecord> kept;
  std::vector<std::string> removed_ids;  // ranked by descending similarity
};

// Removes the k tasks whose definition embeddings are closest to the target
// instruction embedding. Ties break by ascending task_id.
SimilarTaskFilter filter_similar_tasks(const std::vector<TaskRecord>& tasks,
                                       const std::vector<std::vector<double>>& task_embeddings,
                                       std::span<const double> target_instruction_embedding,
                                       int k = 10);

struct AblationSchedule {
  std::vector<AblationPoint> points;
  std::optional<std::string> warning;  // set when the task pool forced scaling
};

AblationSchedule build_ablation_schedule(ScheduleMode mode, int total_tasks_available);

std::vector<IndirectPair> read_indirect_pairs(const std::filesystem::path& path);
void write_indirect_pairs(const std::filesystem::path& path, const std::vector<IndirectPair>& v);

// Word-count helper shared with the prompting module.
int count_words(const std::string& text);

}  // namespace xshot
