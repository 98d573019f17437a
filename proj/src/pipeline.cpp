#include "xshot/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <functional>
#include <set>

#include "xshot/indirect.hpp"
#include "xshot/jsonl.hpp"
#include "xshot/prompting.hpp"
#include "xshot/rng.hpp"
#include "xshot/scoring.hpp"
#include "xshot/split.hpp"
#include "xshot/templates.hpp"
#include "xshot/triplets.hpp"

namespace xshot {

namespace fs = std::filesystem;

namespace {

std::string hex_digest(const std::string& payload) {
  const std::uint64_t a = fnv1a64(payload);
  const std::uint64_t b = fnv1a64(payload, 0x84222325cbf29ce4ull);
  char buf[33];
  std::snprintf(buf, sizeof(buf), "%016llx%016llx", static_cast<unsigned long long>(a),
                static_cast<unsigned long long>(b));
  return buf;
}

std::string file_digest(const fs::path& path) { return hex_digest(read_file(path)); }

// --------------------------------------------------------------------------
// Minimal TOML subset: [sections], key = value with strings, integers,
// floats and booleans. Enough for run configs without a TOML dependency.

std::string toml_trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

json parse_toml_value(const std::string& raw, const std::string& where) {
  if (raw.empty()) throw ValidationError(where + ": empty value");
  if (raw.front() == '"') {
    if (raw.size() < 2 || raw.back() != '"')
      throw ValidationError(where + ": unterminated string");
    std::string out;
    for (std::size_t i = 1; i + 1 < raw.size(); ++i) {
      if (raw[i] == '\\' && i + 2 < raw.size()) {
        ++i;
        out += raw[i] == 'n' ? '\n' : raw[i];
      } else {
        out += raw[i];
      }
    }
    return out;
  }
  if (raw == "true") return true;
  if (raw == "false") return false;
  try {
    if (raw.find('.') != std::string::npos || raw.find('e') != std::string::npos)
      return std::stod(raw);
    if (raw.front() == '-') return std::stoll(raw);
    return std::stoull(raw);
  } catch (const std::exception&) {
    throw ValidationError(where + ": cannot parse value \"" + raw + "\"");
  }
}

json parse_toml_subset(const std::string& text, const std::string& origin) {
  json root = json::object();
  json* section = &root;
  std::size_t start = 0;
  int lineno = 0;
  while (start <= text.size()) {
    auto nl = text.find('\n', start);
    std::string line =
        nl == std::string::npos ? text.substr(start) : text.substr(start, nl - start);
    ++lineno;
    const std::string where = origin + ":" + std::to_string(lineno);

    // strip comments outside quotes
    bool in_quote = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) in_quote = !in_quote;
      if (line[i] == '#' && !in_quote) {
        line = line.substr(0, i);
        break;
      }
    }
    line = toml_trim(line);
    if (!line.empty()) {
      if (line.front() == '[') {
        if (line.back() != ']') throw ValidationError(where + ": bad section header");
        const std::string name = toml_trim(line.substr(1, line.size() - 2));
        if (name.empty()) throw ValidationError(where + ": empty section name");
        section = &root[name];
        if (!section->is_object()) *section = json::object();
      } else {
        auto eq = line.find('=');
        if (eq == std::string::npos) throw ValidationError(where + ": expected key = value");
        const std::string key = toml_trim(line.substr(0, eq));
        if (key.empty()) throw ValidationError(where + ": empty key");
        (*section)[key] = parse_toml_value(toml_trim(line.substr(eq + 1)), where);
      }
    }
    if (nl == std::string::npos) break;
    start = nl + 1;
  }
  return root;
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  c.seed = j.value("seed", std::uint64_t{0});
  c.out_dir = j.value("out_dir", "");
  if (j.contains("split")) {
    const auto& s = j["split"];
    c.dataset = s.value("dataset", "");
    c.preset = s.value("preset", "");
    c.split_spec_path = s.value("spec", "");
  }
  if (j.contains("triplets")) {
    const auto& s = j["triplets"];
    c.template_ref = s.value("template", c.template_ref);
    c.negatives = s.value("negatives", c.negatives);
  }
  if (j.contains("backends")) {
    const auto& s = j["backends"];
    c.score_backend = s.value("score", c.score_backend);
    c.completion_backend = s.value("complete", c.completion_backend);
    c.embed_backend = s.value("embed", c.embed_backend);
  }
  if (j.contains("tune")) c.grid = j["tune"].value("grid", c.grid);
  if (j.contains("indirect")) {
    const auto& s = j["indirect"];
    c.tasks_path = s.value("tasks", "");
    c.indirect_cap = static_cast<int>(s.value("cap", std::int64_t{c.indirect_cap}));
    c.indirect_max_words = static_cast<int>(s.value("max_words", std::int64_t{c.indirect_max_words}));
    c.filter_similar_k = static_cast<int>(s.value("filter_similar", std::int64_t{0}));
    c.target_instruction_path = s.value("target_instruction", "");
  }
  if (j.contains("weakgen")) {
    const auto& s = j["weakgen"];
    c.weak_schema = s.value("schema", "");
    c.weak_per_label = static_cast<int>(s.value("per_label", std::int64_t{c.weak_per_label}));
  }
  if (c.out_dir.empty()) throw ValidationError("run config: out_dir is required");
  return c;
}

}  // namespace

RunConfig RunConfig::load(const fs::path& path) {
  const std::string text = read_file(path);
  std::size_t first = text.find_first_not_of(" \t\r\n");
  json j;
  if (first != std::string::npos && text[first] == '{') {
    try {
      j = json::parse(text);
    } catch (const json::exception& e) {
      throw ValidationError(path.string() + ": " + e.what());
    }
  } else {
    j = parse_toml_subset(text, path.string());
  }
  return config_from_json(j);
}

std::string RunConfig::canonical_json() const {
  json j = {{"seed", seed},
            {"out_dir", out_dir},
            {"split", {{"dataset", dataset}, {"preset", preset}, {"spec", split_spec_path}}},
            {"triplets", {{"template", template_ref}, {"negatives", negatives}}},
            {"backends",
             {{"score", score_backend},
              {"complete", completion_backend},
              {"embed", embed_backend}}},
            {"tune", {{"grid", grid}}},
            {"indirect",
             {{"tasks", tasks_path},
              {"cap", indirect_cap},
              {"max_words", indirect_max_words},
              {"filter_similar", filter_similar_k},
              {"target_instruction", target_instruction_path}}},
            {"weakgen", {{"schema", weak_schema}, {"per_label", weak_per_label}}}};
  return j.dump();
}

std::string RunConfig::config_hash() const { return hex_digest(canonical_json()); }

const std::vector<std::string>& all_stage_names() {
  static const std::vector<std::string> names = {"split",    "weakgen", "triplets", "indirect",
                                                 "score",    "tune",    "eval"};
  return names;
}

namespace {

struct StageDef {
  std::string name;
  std::function<std::vector<std::string>()> inputs;   // paths; config-relative or out-relative
  std::function<std::vector<std::string>()> outputs;  // paths under out_dir
  std::function<void(std::vector<std::string>& warnings)> run;
};

struct PipelineCtx {
  const RunConfig& cfg;
  fs::path out;

  fs::path bench() const { return out / "benchmark"; }
  std::string rel(const fs::path& p) const {
    auto r = fs::relative(p, out);
    return r.empty() || r.native().rfind("..", 0) == 0 ? p.string() : r.string();
  }

  SplitSpec split_spec() const {
    if (!cfg.preset.empty()) return preset_split_spec(cfg.preset);
    if (!cfg.split_spec_path.empty()) return read_split_spec(cfg.split_spec_path);
    throw ValidationError("split stage needs a preset or a spec file");
  }

  WeakGenSpec weak_schema() const {
    WeakGenSpec schema;
    if (cfg.weak_schema.empty()) {
      if (cfg.preset.empty())
        throw ValidationError("weakgen stage needs a schema (or a dataset preset)");
      schema = preset_weak_schema(cfg.preset);
    } else if (cfg.weak_schema == "fewrel" || cfg.weak_schema == "maven" ||
               cfg.weak_schema == "rams") {
      schema = preset_weak_schema(cfg.weak_schema);
    } else {
      schema = read_weak_schema(cfg.weak_schema);
    }
    schema.instances_per_label = cfg.weak_per_label;
    return schema;
  }

  NegativesMode negatives_mode() const {
    if (cfg.negatives == "all") return NegativesMode::all();
    try {
      return NegativesMode::sampled(std::stoi(cfg.negatives));
    } catch (const std::exception&) {
      throw ValidationError("bad negatives mode \"" + cfg.negatives + "\" (use \"all\" or an integer)");
    }
  }
};

std::vector<StageDef> make_stages(PipelineCtx& ctx) {
  const RunConfig& cfg = ctx.cfg;
  const fs::path out = ctx.out;
  const fs::path bench = ctx.bench();

  auto bench_files = [bench](std::initializer_list<const char*> names) {
    std::vector<std::string> v;
    for (const char* n : names) v.push_back((bench / n).string());
    return v;
  };

  std::vector<StageDef> stages;

  stages.push_back(
      {"split",
       [&cfg] { return std::vector<std::string>{cfg.dataset}; },
       [bench_files] {
         return bench_files(
             {"label_space.json", "train.jsonl", "dev.jsonl", "test.jsonl", "manifest.json"});
       },
       [&ctx, &cfg, bench](std::vector<std::string>&) {
         if (cfg.dataset.empty()) throw ValidationError("split stage needs a dataset");
         build_benchmark(cfg.dataset, ctx.split_spec(), cfg.seed, bench);
       }});

  stages.push_back(
      {"weakgen",
       [bench_files] { return bench_files({"label_space.json", "train.jsonl"}); },
       [out] { return std::vector<std::string>{(out / "weak.jsonl").string()}; },
       [&ctx, &cfg, bench, out](std::vector<std::string>& warnings) {
         const LabelSpace space = read_label_space(bench / "label_space.json");
         const auto train = read_instances(bench / "train.jsonl");
         std::vector<RawInstance> demo_pool;
         for (const auto& inst : train)
           if (inst.gold_label && space.contains(*inst.gold_label) &&
               space.group_of(*inst.gold_label) != FrequencyGroup::zero)
             demo_pool.push_back(inst);
         std::vector<std::string> zero_labels;
         for (const auto& label : space.labels)
           if (space.group_of(label) == FrequencyGroup::zero) zero_labels.push_back(label);

         const WeakGenSpec schema = ctx.weak_schema();
         auto backend = make_completion_backend(BackendConfig::parse(cfg.completion_backend));
         WeakGenResult result =
             generate_weak_instances(zero_labels, demo_pool, schema, *backend, cfg.seed);

         std::map<std::string, int> ordinal;
         std::vector<RawInstance> weak;
         for (const auto& w : result.instances)
           weak.push_back(weak_to_instance(w, schema, ordinal[w.label]++));
         write_instances(out / "weak.jsonl", weak);
         for (const auto& s : result.shortfalls)
           warnings.push_back("weakgen shortfall for label \"" + s.label + "\": produced " +
                              std::to_string(s.produced) + " of " + std::to_string(s.requested));
       }});

  stages.push_back(
      {"triplets",
       [bench_files, out] {
         auto v = bench_files({"label_space.json", "train.jsonl", "dev.jsonl", "test.jsonl"});
         if (fs::exists(out / "weak.jsonl")) v.push_back((out / "weak.jsonl").string());
         return v;
       },
       [out] {
         return std::vector<std::string>{(out / "triplets_train.jsonl").string(),
                                         (out / "triplets_dev.jsonl").string(),
                                         (out / "triplets_test.jsonl").string()};
       },
       [&ctx, &cfg, bench, out](std::vector<std::string>&) {
         BenchmarkDir b = load_benchmark(bench);
         const RenderTemplate tmpl = resolve_template(cfg.template_ref);
         std::vector<RawInstance> train = b.train;
         if (fs::exists(out / "weak.jsonl")) {
           // weak "None" instances exist for completeness but cannot be
           // trained on: "None" never gets a triplet
           for (auto& w : read_instances(out / "weak.jsonl"))
             if (w.gold_label && *w.gold_label != kNoneLabel) train.push_back(std::move(w));
         }
         write_triplets(out / "triplets_train.jsonl",
                        build_target_training_set(train, b.space, tmpl, ctx.negatives_mode(),
                                                  cfg.seed));
         write_triplets(out / "triplets_dev.jsonl", build_eval_triplets(b.dev, b.space, tmpl));
         write_triplets(out / "triplets_test.jsonl", build_eval_triplets(b.test, b.space, tmpl));
       }});

  stages.push_back(
      {"indirect",
       [&cfg] {
         std::vector<std::string> v{cfg.tasks_path};
         if (cfg.filter_similar_k > 0 && !cfg.target_instruction_path.empty())
           v.push_back(cfg.target_instruction_path);
         return v;
       },
       [out, &cfg] {
         std::vector<std::string> v{(out / "indirect_pairs.jsonl").string()};
         if (cfg.filter_similar_k > 0) v.push_back((out / "removed_tasks.json").string());
         return v;
       },
       [&cfg, out](std::vector<std::string>& warnings) {
         if (cfg.tasks_path.empty()) throw ValidationError("indirect stage needs a task file");
         auto tasks = read_tasks(cfg.tasks_path);
         if (cfg.filter_similar_k > 0) {
           const std::string target = !cfg.target_instruction_path.empty()
                                          ? read_file(cfg.target_instruction_path)
                                          : resolve_template(cfg.template_ref).instruction;
           std::vector<std::string> texts;
           for (const auto& t : tasks) texts.push_back(t.definition);
           texts.push_back(target);
           auto vectors = embed_texts(texts, BackendConfig::parse(cfg.embed_backend));
           const auto target_vec = vectors.back();
           vectors.pop_back();
           auto filtered = filter_similar_tasks(tasks, vectors, target_vec, cfg.filter_similar_k);
           write_file(out / "removed_tasks.json",
                      json{{"removed", filtered.removed_ids}}.dump(2) + "\n");
           tasks = std::move(filtered.kept);
         }
         auto ds = build_indirect_dataset(tasks, cfg.indirect_cap, cfg.indirect_max_words, cfg.seed);
         write_indirect_pairs(out / "indirect_pairs.jsonl", ds.pairs);
         for (auto& w : ds.warnings) warnings.push_back(std::move(w));
       }});

  stages.push_back(
      {"score",
       [out] {
         return std::vector<std::string>{(out / "triplets_dev.jsonl").string(),
                                         (out / "triplets_test.jsonl").string()};
       },
       [out] {
         return std::vector<std::string>{(out / "scores_dev.jsonl").string(),
                                         (out / "scores_test.jsonl").string()};
       },
       [&cfg, out](std::vector<std::string>&) {
         BackendConfig backend = BackendConfig::parse(cfg.score_backend);
         if (backend.cache_dir.empty()) backend.cache_dir = (out / "cache").string();
         write_scores(out / "scores_dev.jsonl",
                      score_triplets(read_triplets(out / "triplets_dev.jsonl"), backend));
         write_scores(out / "scores_test.jsonl",
                      score_triplets(read_triplets(out / "triplets_test.jsonl"), backend));
       }});

  stages.push_back(
      {"tune",
       [out, bench] {
         return std::vector<std::string>{(out / "scores_dev.jsonl").string(),
                                         (bench / "dev.jsonl").string(),
                                         (bench / "label_space.json").string()};
       },
       [out] { return std::vector<std::string>{(out / "threshold.json").string()}; },
       [&cfg, out, bench](std::vector<std::string>& warnings) {
         const LabelSpace space = read_label_space(bench / "label_space.json");
         if (!space.includes_none) {
           warnings.push_back("tune: label space has no \"None\"; threshold not applicable");
           write_file(out / "threshold.json", json{{"threshold", nullptr}}.dump(2) + "\n");
           return;
         }
         const auto dev = read_instances(bench / "dev.jsonl");
         std::vector<std::string> ids;
         std::map<std::string, std::string> gold;
         for (const auto& inst : dev) {
           ids.push_back(inst.id);
           if (inst.gold_label) gold[inst.id] = *inst.gold_label;
         }
         auto grouped = group_scores_by_id(read_scores(out / "scores_dev.jsonl"), space, ids);
         TuneResult result = tune_threshold(grouped, gold, space, ThresholdGrid::parse(cfg.grid));
         if (result.warning) warnings.push_back("tune: " + *result.warning);
         write_file(out / "threshold.json",
                    json{{"threshold", result.threshold}, {"dev_accuracy", result.dev_accuracy}}
                            .dump(2) +
                        "\n");
       }});

  stages.push_back(
      {"eval",
       [out, bench] {
         std::vector<std::string> v{(out / "scores_test.jsonl").string(),
                                    (bench / "test.jsonl").string(),
                                    (bench / "label_space.json").string()};
         if (fs::exists(out / "threshold.json")) v.push_back((out / "threshold.json").string());
         return v;
       },
       [out] { return std::vector<std::string>{(out / "report.json").string()}; },
       [&cfg, out, bench](std::vector<std::string>&) {
         const LabelSpace space = read_label_space(bench / "label_space.json");
         const auto test = read_instances(bench / "test.jsonl");
         std::vector<std::string> ids;
         std::map<std::string, std::string> gold;
         for (const auto& inst : test) {
           ids.push_back(inst.id);
           if (inst.gold_label) gold[inst.id] = *inst.gold_label;
         }
         std::optional<double> threshold;
         if (space.includes_none && fs::exists(out / "threshold.json")) {
           json t = json::parse(read_file(out / "threshold.json"));
           if (t.contains("threshold") && t["threshold"].is_number())
             threshold = t["threshold"].get<double>();
         }
         auto grouped = group_scores_by_id(read_scores(out / "scores_test.jsonl"), space, ids);
         EvaluationReport report = evaluate(assign_labels(grouped, space, threshold), gold, space);
         report.threshold_used = threshold;
         report.template_id = resolve_template(cfg.template_ref).template_id;
         write_report(out / "report.json", report);
       }});

  return stages;
}

json manifest_to_json(const RunManifest& m) {
  json stages = json::array();
  for (const auto& s : m.stages)
    stages.push_back({{"name", s.name},
                      {"cache_hit", s.cache_hit},
                      {"duration_ms", s.duration_ms},
                      {"inputs", s.inputs},
                      {"outputs", s.outputs},
                      {"warnings", s.warnings}});
  return {{"config_hash", m.config_hash}, {"stages", stages}};
}

}  // namespace

RunManifest run_pipeline(const RunConfig& config, const std::vector<std::string>& requested) {
  if (config.out_dir.empty()) throw ValidationError("run config: out_dir is required");
  PipelineCtx ctx{config, fs::path(config.out_dir)};
  fs::create_directories(ctx.out);
  auto stages = make_stages(ctx);

  // requested stage set, canonical order
  std::set<std::string> wanted;
  for (const auto& name : requested) {
    if (std::none_of(stages.begin(), stages.end(),
                     [&](const StageDef& s) { return s.name == name; }))
      throw ValidationError("unknown stage \"" + name + "\"");
    wanted.insert(name);
  }
  if (wanted.empty()) throw ValidationError("no stages requested");

  // Dependency check before any work: every input must already exist or be
  // produced by an earlier requested stage.
  std::set<std::string> produced;
  for (const auto& stage : stages) {
    if (wanted.count(stage.name) == 0) continue;
    for (const auto& input : stage.inputs()) {
      if (input.empty())
        throw ValidationError("stage \"" + stage.name + "\" is missing a configured input path");
      if (produced.count(input) == 0 && !fs::exists(input))
        throw DependencyError("stage \"" + stage.name + "\" requires " + input +
                              " which no requested stage produces");
    }
    for (const auto& output : stage.outputs()) produced.insert(output);
  }

  // previous manifest, for cache hits
  json previous;
  const fs::path manifest_path = ctx.out / "run.json";
  if (fs::exists(manifest_path)) {
    try {
      previous = json::parse(read_file(manifest_path));
    } catch (const std::exception&) {
      previous = json();  // unreadable manifest: just re-run everything
    }
  }
  const std::string config_hash = config.config_hash();
  const bool prev_valid = previous.is_object() && previous.value("config_hash", "") == config_hash;

  RunManifest manifest;
  manifest.config_hash = config_hash;

  for (const auto& stage : stages) {
    if (wanted.count(stage.name) == 0) continue;
    StageManifest entry;
    entry.name = stage.name;
    for (const auto& input : stage.inputs()) entry.inputs[ctx.rel(input)] = file_digest(input);

    // cache hit: same config, same inputs, outputs still present and unchanged
    bool hit = false;
    if (prev_valid) {
      for (const auto& prev_stage : previous["stages"]) {
        if (prev_stage.value("name", "") != stage.name) continue;
        const json prev_inputs = prev_stage.value("inputs", json::object());
        const json prev_outputs = prev_stage.value("outputs", json::object());
        if (prev_inputs != json(entry.inputs)) break;
        hit = true;
        for (const auto& [rel, digest] : prev_outputs.items()) {
          const fs::path p = ctx.out / rel;
          if (!fs::exists(p) || file_digest(p) != digest.get<std::string>()) {
            hit = false;
            break;
          }
        }
        if (hit) {
          entry.cache_hit = true;
          for (const auto& [rel, digest] : prev_outputs.items())
            entry.outputs[rel] = digest.get<std::string>();
          for (const auto& w : prev_stage.value("warnings", std::vector<std::string>{}))
            entry.warnings.push_back(w);
        }
        break;
      }
    }

    if (!hit) {
      const auto start = std::chrono::steady_clock::now();
      stage.run(entry.warnings);
      entry.duration_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                              std::chrono::steady_clock::now() - start)
                              .count();
      for (const auto& output : stage.outputs())
        entry.outputs[ctx.rel(output)] = file_digest(output);
    }
    manifest.stages.push_back(std::move(entry));
  }

  write_file(manifest_path, manifest_to_json(manifest).dump(2) + "\n");
  return manifest;
}

}  // namespace xshot
