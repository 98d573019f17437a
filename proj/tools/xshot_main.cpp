// xshot: build X-Shot benchmarks, convert them to binary triplets, construct
// indirect/weak supervision data, score against a backend, tune the "None"
// threshold, and report grouped accuracy.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "xshot/eval.hpp"
#include "xshot/indirect.hpp"
#include "xshot/jsonl.hpp"
#include "xshot/pipeline.hpp"
#include "xshot/prompting.hpp"
#include "xshot/scoring.hpp"
#include "xshot/split.hpp"
#include "xshot/templates.hpp"
#include "xshot/triplets.hpp"

namespace {

using namespace xshot;

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto comma = s.find(',', start);
    const std::string part =
        comma == std::string::npos ? s.substr(start) : s.substr(start, comma - start);
    if (!part.empty()) out.push_back(part);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

int run_app(int argc, char** argv) {
  CLI::App app{"X-Shot benchmark construction and evaluation harness"};
  app.require_subcommand(1);

  // ---- split ----
  auto* split_cmd = app.add_subcommand("split", "Recompile a raw dataset into an X-Shot benchmark");
  std::string split_dataset, split_preset, split_spec_path, split_assignment, split_out;
  std::uint64_t split_seed = 0;
  split_cmd->add_option("--dataset", split_dataset, "raw instance JSONL")->required();
  split_cmd->add_option("--preset", split_preset, "fewrel|maven|rams");
  split_cmd->add_option("--spec", split_spec_path, "SplitSpec JSON file");
  split_cmd->add_option("--assignment", split_assignment,
                        "label-space JSON fixing the label-group assignment");
  split_cmd->add_option("--seed", split_seed, "run seed")->required();
  split_cmd->add_option("--out", split_out, "output benchmark directory")->required();
  split_cmd->callback([&] {
    SplitSpec spec;
    if (!split_preset.empty())
      spec = preset_split_spec(split_preset);
    else if (!split_spec_path.empty())
      spec = read_split_spec(split_spec_path);
    else
      throw ValidationError("split needs --preset or --spec");
    std::optional<LabelSpace> assignment;
    if (!split_assignment.empty()) assignment = read_label_space(split_assignment);
    auto bench = build_benchmark(split_dataset, spec, split_seed, split_out, assignment);
    std::printf("wrote %s: %zu train / %zu dev / %zu test instances, %zu labels\n",
                split_out.c_str(), bench.train.size(), bench.dev.size(), bench.test.size(),
                bench.space.labels.size());
  });

  // ---- triplets ----
  auto* trip_cmd = app.add_subcommand("triplets", "Convert benchmark instances to binary triplets");
  std::string trip_bench, trip_template, trip_mode = "eval", trip_split, trip_negatives = "all",
              trip_weak, trip_out;
  std::uint64_t trip_seed = 0;
  trip_cmd->add_option("--benchmark", trip_bench, "benchmark directory")->required();
  trip_cmd->add_option("--template", trip_template, "template preset id or JSON file")->required();
  trip_cmd->add_option("--mode", trip_mode, "eval|train")->check(CLI::IsMember({"eval", "train"}));
  trip_cmd->add_option("--split", trip_split, "train|dev|test (default: by mode)");
  trip_cmd->add_option("--negatives", trip_negatives, "all|<k> (train mode)");
  trip_cmd->add_option("--weak", trip_weak, "weak instance JSONL appended in train mode");
  trip_cmd->add_option("--seed", trip_seed, "run seed");
  trip_cmd->add_option("--out", trip_out, "output triplet JSONL")->required();
  trip_cmd->callback([&] {
    BenchmarkDir bench = load_benchmark(trip_bench);
    const RenderTemplate tmpl = resolve_template(trip_template);
    const std::string part = trip_split.empty() ? (trip_mode == "train" ? "train" : "test")
                                                : trip_split;
    std::vector<RawInstance>* instances = part == "train" ? &bench.train
                                          : part == "dev" ? &bench.dev
                                          : part == "test" ? &bench.test
                                                           : nullptr;
    if (!instances) throw ValidationError("bad --split \"" + part + "\"");
    std::vector<TripletExample> triplets;
    if (trip_mode == "train") {
      std::vector<RawInstance> train = *instances;
      if (!trip_weak.empty())
        for (auto& w : read_instances(trip_weak)) train.push_back(std::move(w));
      NegativesMode mode = trip_negatives == "all" ? NegativesMode::all()
                                                   : NegativesMode::sampled(std::stoi(trip_negatives));
      triplets = build_target_training_set(train, bench.space, tmpl, mode, trip_seed);
    } else {
      triplets = build_eval_triplets(*instances, bench.space, tmpl);
    }
    write_triplets(trip_out, triplets);
    std::printf("wrote %zu triplets to %s\n", triplets.size(), trip_out.c_str());
  });

  // ---- indirect ----
  auto* ind_cmd = app.add_subcommand("indirect", "Build the indirect-supervision pair dataset");
  std::string ind_tasks, ind_target, ind_embed = "hash-mock", ind_out;
  int ind_cap = 100, ind_max_words = 512, ind_filter_k = 0;
  std::uint64_t ind_seed = 0;
  ind_cmd->add_option("--tasks", ind_tasks, "task collection JSONL")->required();
  ind_cmd->add_option("--cap", ind_cap, "instances sampled per task");
  ind_cmd->add_option("--max-words", ind_max_words, "prefix word limit");
  ind_cmd->add_option("--seed", ind_seed, "run seed")->required();
  ind_cmd->add_option("--filter-similar", ind_filter_k, "remove the k most similar tasks");
  ind_cmd->add_option("--target-instruction", ind_target, "target instruction text file");
  ind_cmd->add_option("--embed-backend", ind_embed, "embedding backend (filter)");
  ind_cmd->add_option("--out", ind_out, "output pair JSONL")->required();
  ind_cmd->callback([&] {
    auto tasks = read_tasks(ind_tasks);
    if (ind_filter_k > 0) {
      if (ind_target.empty())
        throw ValidationError("--filter-similar needs --target-instruction");
      std::vector<std::string> texts;
      for (const auto& t : tasks) texts.push_back(t.definition);
      texts.push_back(read_file(ind_target));
      auto vectors = embed_texts(texts, BackendConfig::parse(ind_embed));
      const auto target_vec = vectors.back();
      vectors.pop_back();
      auto filtered = filter_similar_tasks(tasks, vectors, target_vec, ind_filter_k);
      for (const auto& id : filtered.removed_ids) std::printf("removed similar task: %s\n", id.c_str());
      tasks = std::move(filtered.kept);
    }
    auto ds = build_indirect_dataset(tasks, ind_cap, ind_max_words, ind_seed);
    write_indirect_pairs(ind_out, ds.pairs);
    for (const auto& w : ds.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    std::printf("wrote %zu pairs to %s\n", ds.pairs.size(), ind_out.c_str());
  });

  // ---- ablate schedule ----
  auto* ablate_cmd = app.add_subcommand("ablate", "Ablation helpers");
  auto* sched_cmd = ablate_cmd->add_subcommand("schedule", "Print a tasks-vs-instances schedule");
  std::string sched_mode = "vary-tasks";
  int sched_total = 757;
  sched_cmd->add_option("--mode", sched_mode, "vary-tasks|vary-instances")
      ->check(CLI::IsMember({"vary-tasks", "vary-instances"}));
  sched_cmd->add_option("--total-tasks", sched_total, "tasks available (default 757)");
  sched_cmd->callback([&] {
    auto schedule = build_ablation_schedule(schedule_mode_from_string(sched_mode), sched_total);
    if (schedule.warning) std::fprintf(stderr, "warning: %s\n", schedule.warning->c_str());
    for (const auto& p : schedule.points)
      std::printf("%d tasks x %d instances = %lld\n", p.num_tasks, p.instances_per_task,
                  static_cast<long long>(p.total()));
  });

  // ---- weakgen ----
  auto* weak_cmd = app.add_subcommand("weakgen", "Generate weak instances for zero-shot labels");
  std::string weak_bench, weak_schema, weak_backend = "echo-mock", weak_out;
  int weak_per_label = 5;
  std::uint64_t weak_seed = 0;
  weak_cmd->add_option("--benchmark", weak_bench, "benchmark directory")->required();
  weak_cmd->add_option("--schema", weak_schema, "schema preset (fewrel|maven|rams) or JSON file")
      ->required();
  weak_cmd->add_option("--per-label", weak_per_label, "instances per zero-shot label");
  weak_cmd->add_option("--backend", weak_backend, "completion backend (URL or kind)");
  weak_cmd->add_option("--seed", weak_seed, "run seed")->required();
  weak_cmd->add_option("--out", weak_out, "output instance JSONL")->required();
  weak_cmd->callback([&] {
    BenchmarkDir bench = load_benchmark(weak_bench);
    WeakGenSpec schema = (weak_schema == "fewrel" || weak_schema == "maven" || weak_schema == "rams")
                             ? preset_weak_schema(weak_schema)
                             : read_weak_schema(weak_schema);
    schema.instances_per_label = weak_per_label;
    std::vector<RawInstance> demo_pool;
    for (const auto& inst : bench.train)
      if (inst.gold_label && bench.space.contains(*inst.gold_label) &&
          bench.space.group_of(*inst.gold_label) != FrequencyGroup::zero)
        demo_pool.push_back(inst);
    std::vector<std::string> zero_labels;
    for (const auto& label : bench.space.labels)
      if (bench.space.group_of(label) == FrequencyGroup::zero) zero_labels.push_back(label);
    auto backend = make_completion_backend(BackendConfig::parse(weak_backend));
    auto result = generate_weak_instances(zero_labels, demo_pool, schema, *backend, weak_seed);
    std::map<std::string, int> ordinal;
    std::vector<RawInstance> weak;
    for (const auto& w : result.instances)
      weak.push_back(weak_to_instance(w, schema, ordinal[w.label]++));
    write_instances(weak_out, weak);
    for (const auto& s : result.shortfalls)
      std::fprintf(stderr, "warning: shortfall for \"%s\": %d of %d\n", s.label.c_str(),
                   s.produced, s.requested);
    std::printf("wrote %zu weak instances to %s\n", weak.size(), weak_out.c_str());
  });

  // ---- score ----
  auto* score_cmd = app.add_subcommand("score", "Score triplets against a backend");
  std::string score_triplets_path, score_backend_arg, score_cache, score_out;
  score_cmd->add_option("--triplets", score_triplets_path, "triplet JSONL")->required();
  score_cmd->add_option("--backend", score_backend_arg, "backend config (file, URL, or kind[:arg])")
      ->required();
  score_cmd->add_option("--cache-dir", score_cache, "score cache directory");
  score_cmd->add_option("--out", score_out, "output score JSONL")->required();
  score_cmd->callback([&] {
    BackendConfig cfg = BackendConfig::parse(score_backend_arg);
    if (!score_cache.empty()) cfg.cache_dir = score_cache;
    auto scores = score_triplets(read_triplets(score_triplets_path), cfg);
    write_scores(score_out, scores);
    std::printf("wrote %zu scores to %s\n", scores.size(), score_out.c_str());
  });

  // ---- tune ----
  auto* tune_cmd = app.add_subcommand("tune", "Tune the \"None\" threshold on dev scores");
  std::string tune_scores, tune_bench, tune_grid = "0.5:1.0:0.01", tune_out;
  tune_cmd->add_option("--scores", tune_scores, "dev score JSONL")->required();
  tune_cmd->add_option("--benchmark", tune_bench, "benchmark directory")->required();
  tune_cmd->add_option("--grid", tune_grid, "lo:hi:step");
  tune_cmd->add_option("--out", tune_out, "write threshold JSON here");
  tune_cmd->callback([&] {
    BenchmarkDir bench = load_benchmark(tune_bench);
    std::vector<std::string> ids;
    std::map<std::string, std::string> gold;
    for (const auto& inst : bench.dev) {
      ids.push_back(inst.id);
      if (inst.gold_label) gold[inst.id] = *inst.gold_label;
    }
    auto grouped = group_scores_by_id(read_scores(tune_scores), bench.space, ids);
    TuneResult result = tune_threshold(grouped, gold, bench.space, ThresholdGrid::parse(tune_grid));
    if (result.warning) std::fprintf(stderr, "warning: %s\n", result.warning->c_str());
    std::printf("threshold %.4f  dev accuracy %.4f\n", result.threshold, result.dev_accuracy);
    if (!tune_out.empty())
      write_file(tune_out,
                 json{{"threshold", result.threshold}, {"dev_accuracy", result.dev_accuracy}}
                         .dump(2) +
                     "\n");
  });

  // ---- eval ----
  auto* eval_cmd = app.add_subcommand("eval", "Compute the grouped accuracy report");
  std::string eval_scores, eval_bench, eval_threshold, eval_report, eval_template;
  int eval_confusions = 0;
  eval_cmd->add_option("--scores", eval_scores, "test score JSONL")->required();
  eval_cmd->add_option("--benchmark", eval_bench, "benchmark directory")->required();
  eval_cmd->add_option("--threshold", eval_threshold, "numeric threshold or threshold JSON file");
  eval_cmd->add_option("--report", eval_report, "write report JSON here");
  eval_cmd->add_option("--template-id", eval_template, "template id recorded in the report");
  eval_cmd->add_option("--confusions", eval_confusions, "print the top-k confusion slices");
  eval_cmd->callback([&] {
    BenchmarkDir bench = load_benchmark(eval_bench);
    std::vector<std::string> ids;
    std::map<std::string, std::string> gold;
    for (const auto& inst : bench.test) {
      ids.push_back(inst.id);
      if (inst.gold_label) gold[inst.id] = *inst.gold_label;
    }
    std::optional<double> threshold;
    if (!eval_threshold.empty()) {
      if (std::filesystem::exists(eval_threshold)) {
        json t = json::parse(read_file(eval_threshold));
        if (t.contains("threshold") && t["threshold"].is_number())
          threshold = t["threshold"].get<double>();
      } else {
        threshold = std::stod(eval_threshold);
      }
    }
    auto grouped = group_scores_by_id(read_scores(eval_scores), bench.space, ids);
    EvaluationReport report = evaluate(assign_labels(grouped, bench.space, threshold), gold,
                                       bench.space);
    report.threshold_used = threshold;
    if (!eval_template.empty()) report.template_id = eval_template;
    std::fputs(format_report_table(report).c_str(), stdout);
    if (eval_confusions > 0)
      std::fputs(confusion_report(report, bench.space, eval_confusions).c_str(), stdout);
    if (!eval_report.empty()) write_report(eval_report, report);
  });

  // ---- run ----
  auto* run_cmd = app.add_subcommand("run", "Run a configured pipeline");
  std::string run_config, run_stages;
  run_cmd->add_option("--config", run_config, "run config (TOML subset or JSON)")->required();
  run_cmd->add_option("--stages", run_stages, "comma-separated stage list (default: all)");
  run_cmd->callback([&] {
    RunConfig cfg = RunConfig::load(run_config);
    std::vector<std::string> stages =
        run_stages.empty() ? all_stage_names() : split_csv(run_stages);
    RunManifest manifest = run_pipeline(cfg, stages);
    for (const auto& stage : manifest.stages) {
      std::string suffix;
      if (!stage.warnings.empty())
        suffix = " [" + std::to_string(stage.warnings.size()) + " warning(s)]";
      std::printf("%-9s %s (%lld ms)%s\n", stage.name.c_str(),
                  stage.cache_hit ? "cached" : "ran",
                  static_cast<long long>(stage.duration_ms), suffix.c_str());
    }
    for (const auto& stage : manifest.stages)
      for (const auto& w : stage.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  });

  CLI11_PARSE(app, argc, argv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_app(argc, argv);
  } catch (const xshot::DependencyError& e) {
    std::fprintf(stderr, "dependency error: %s\n", e.what());
    return 3;
  } catch (const xshot::BackendError& e) {
    std::fprintf(stderr, "backend error: %s\n", e.what());
    return 2;
  } catch (const xshot::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
