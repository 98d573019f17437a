#include "xshot/indirect.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "xshot/jsonl.hpp"
#include "xshot/rng.hpp"

namespace xshot {

namespace {
constexpr const char* kModuleTag = "indirect-supervision";
}

ScheduleMode schedule_mode_from_string(const std::string& s) {
  if (s == "vary-tasks") return ScheduleMode::vary_tasks;
  if (s == "vary-instances") return ScheduleMode::vary_instances;
  throw ValidationError("unknown schedule mode \"" + s + "\"");
}

int count_words(const std::string& text) {
  int n = 0;
  bool in_word = false;
  for (char c : text) {
    const bool ws = c == ' ' || c == '\t' || c == '\n' || c == '\r';
    if (!ws && !in_word) ++n;
    in_word = !ws;
  }
  return n;
}

std::vector<TaskInstance> sample_task_instances(const TaskRecord& task, int cap,
                                                std::uint64_t seed) {
  if (cap < 1) throw ValidationError("instance cap must be >= 1");
  std::vector<std::size_t> idx(task.instances.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  rng.shuffle(idx);
  const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(cap), idx.size());
  std::vector<TaskInstance> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(task.instances[idx[i]]);
  return out;
}

namespace {

// Cut after the n-th whitespace-delimited word, preserving interior spacing.
std::string truncate_words(const std::string& text, int n) {
  int seen = 0;
  bool in_word = false;
  std::size_t cut = text.size();
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    const bool ws = c == ' ' || c == '\t' || c == '\n' || c == '\r';
    if (!ws && !in_word) {
      if (seen == n) {
        cut = i;
        break;
      }
      ++seen;
    }
    in_word = !ws;
  }
  std::string out = text.substr(0, cut);
  while (!out.empty() && (out.back() == ' ' || out.back() == '\t' || out.back() == '\n' ||
                          out.back() == '\r'))
    out.pop_back();
  return out;
}

std::string render_demo(const TaskDemo& demo) {
  return "Input: " + demo.input + "\nOutput: " + demo.output;
}

}  // namespace

PrefixResult build_prefix(const TaskRecord& task, int max_words) {
  if (max_words < 1) throw ValidationError("max_words must be >= 1");
  PrefixResult result;
  int words = count_words(task.definition);
  if (words > max_words) {
    result.text = truncate_words(task.definition, max_words);
    result.truncated = true;
    return result;
  }
  result.text = task.definition;
  const std::size_t demo_count = std::min<std::size_t>(2, task.positive_demos.size());
  for (std::size_t i = 0; i < demo_count; ++i) {
    const std::string rendered = render_demo(task.positive_demos[i]);
    const int demo_words = count_words(rendered);
    if (words + demo_words > max_words) continue;
    result.text += "\n" + rendered;
    words += demo_words;
  }
  return result;
}

std::optional<std::string> sample_negative_answer(const TaskRecord& task,
                                                  const TaskInstance& instance,
                                                  std::uint64_t seed) {
  std::set<std::string> pool;
  for (const auto& other : task.instances) {
    if (other.id == instance.id) continue;
    pool.insert(other.outputs.begin(), other.outputs.end());
  }
  for (const auto& gold : instance.outputs) pool.erase(gold);
  if (pool.empty()) return std::nullopt;

  std::vector<std::string> answers(pool.begin(), pool.end());
  Rng rng(seed);
  return answers[static_cast<std::size_t>(rng.below(answers.size()))];
}

IndirectDataset build_indirect_dataset(const std::vector<TaskRecord>& tasks, int cap,
                                       int max_words, std::uint64_t seed) {
  const std::uint64_t module_seed = derive_seed(seed, kModuleTag);
  IndirectDataset out;
  for (const auto& task : tasks) {
    const std::uint64_t task_seed = derive_seed(module_seed, task.task_id);
    PrefixResult prefix = build_prefix(task, max_words);
    if (prefix.truncated)
      out.warnings.push_back("task " + task.task_id + ": definition truncated to " +
                             std::to_string(max_words) + " words");
    for (const auto& inst : sample_task_instances(task, cap, task_seed)) {
      auto negative = sample_negative_answer(task, inst, derive_seed(task_seed, "neg:" + inst.id));
      if (!negative) continue;  // no usable negative; skip silently
      IndirectPair yes;
      yes.pair_id = task.task_id + "::" + inst.id + "::yes";
      yes.task_id = task.task_id;
      yes.prefix = prefix.text;
      yes.input = inst.input;
      yes.candidate = inst.outputs.front();
      yes.polarity = Polarity::yes;
      IndirectPair no = yes;
      no.pair_id = task.task_id + "::" + inst.id + "::no";
      no.candidate = *negative;
      no.polarity = Polarity::no;
      out.pairs.push_back(std::move(yes));
      out.pairs.push_back(std::move(no));
    }
  }
  return out;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || a.size() != b.size())
    throw ValidationError("cosine similarity needs equal nonzero dimensions (" +
                          std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw ValidationError("cosine similarity of a zero vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

SimilarTaskFilter filter_similar_tasks(const std::vector<TaskRecord>& tasks,
                                       const std::vector<std::vector<double>>& task_embeddings,
                                       std::span<const double> target_instruction_embedding,
                                       int k) {
  if (task_embeddings.size() != tasks.size())
    throw ValidationError("need one embedding per task");
  if (k < 0) throw ValidationError("k must be non-negative");
  if (k >= static_cast<int>(tasks.size()) && !(k == 0 && tasks.empty()))
    throw ValidationError("k = " + std::to_string(k) + " would remove every task (" +
                          std::to_string(tasks.size()) + " available)");

  std::vector<std::size_t> order(tasks.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> sims(tasks.size());
  for (std::size_t i = 0; i < tasks.size(); ++i)
    sims[i] = cosine_similarity(task_embeddings[i], target_instruction_embedding);
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    if (sims[x] != sims[y]) return sims[x] > sims[y];
    return tasks[x].task_id < tasks[y].task_id;
  });

  SimilarTaskFilter result;
  std::set<std::size_t> removed;
  for (int i = 0; i < k; ++i) {
    removed.insert(order[i]);
    result.removed_ids.push_back(tasks[order[i]].task_id);
  }
  for (std::size_t i = 0; i < tasks.size(); ++i)
    if (removed.count(i) == 0) result.kept.push_back(tasks[i]);
  return result;
}

AblationSchedule build_ablation_schedule(ScheduleMode mode, int total_tasks_available) {
  if (total_tasks_available < 1) throw ValidationError("no tasks available");
  AblationSchedule schedule;
  if (mode == ScheduleMode::vary_tasks) {
    const bool scaled = total_tasks_available < 700;
    if (scaled)
      schedule.warning = "only " + std::to_string(total_tasks_available) +
                         " tasks available; vary-tasks schedule scaled proportionally";
    for (int i = 1; i <= 7; ++i) {
      int n = scaled ? std::max(1, static_cast<int>(std::lround(total_tasks_available * i / 7.0)))
                     : 100 * i;
      schedule.points.push_back({n, 100});
    }
  } else {
    for (int i = 1; i <= 7; ++i) {
      int per_task = static_cast<int>(std::lround(10000.0 * i / total_tasks_available));
      schedule.points.push_back({total_tasks_available, std::max(1, per_task)});
    }
  }
  return schedule;
}

namespace {

json pair_to_json(const IndirectPair& p) {
  return {{"pair_id", p.pair_id}, {"task_id", p.task_id},     {"prefix", p.prefix},
          {"input", p.input},     {"candidate", p.candidate}, {"polarity", to_string(p.polarity)}};
}

IndirectPair pair_from_json(const json& j) {
  IndirectPair p;
  p.pair_id = j.at("pair_id").get<std::string>();
  p.task_id = j.at("task_id").get<std::string>();
  p.prefix = j.at("prefix").get<std::string>();
  p.input = j.at("input").get<std::string>();
  p.candidate = j.at("candidate").get<std::string>();
  const std::string pol = j.at("polarity").get<std::string>();
  if (pol == "yes")
    p.polarity = Polarity::yes;
  else if (pol == "no")
    p.polarity = Polarity::no;
  else
    throw ValidationError("indirect pair: bad polarity \"" + pol + "\"");
  return p;
}

}  // namespace

std::vector<IndirectPair> read_indirect_pairs(const std::filesystem::path& path) {
  std::vector<IndirectPair> out;
  for (const auto& row : read_jsonl(path)) {
    try {
      out.push_back(pair_from_json(row));
    } catch (const json::exception& e) {
      throw ValidationError(path.string() + ": " + e.what());
    }
  }
  return out;
}

void write_indirect_pairs(const std::filesystem::path& path, const std::vector<IndirectPair>& v) {
  std::vector<json> rows;
  rows.reserve(v.size());
  for (const auto& p : v) rows.push_back(pair_to_json(p));
  write_jsonl(path, rows);
}

}  // namespace xshot
