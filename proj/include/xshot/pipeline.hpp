#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "xshot/eval.hpp"
#include "xshot/types.hpp"

namespace xshot {

// Everything a reproducible run needs. Loadable from a TOML-subset or JSON
// config file; the canonical JSON form is hashed into the run manifest.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string out_dir;

  // split
  std::string dataset;
  std::string preset;           // fewrel | maven | rams, or
  std::string split_spec_path;  // explicit SplitSpec JSON

  // triplets
  std::string template_ref = "fewrel-a";  // preset id or template file
  std::string negatives = "all";          // "all" or an integer

  // backends
  std::string score_backend = "hash-mock";
  std::string completion_backend = "echo-mock";
  std::string embed_backend = "hash-mock";

  // tune
  std::string grid = "0.5:1.0:0.01";

  // indirect
  std::string tasks_path;
  int indirect_cap = 100;
  int indirect_max_words = 512;
  int filter_similar_k = 0;  // 0 disables the similar-task filter
  std::string target_instruction_path;

  // weakgen
  std::string weak_schema;  // preset name or schema file; empty = per preset
  int weak_per_label = 5;

  static RunConfig load(const std::filesystem::path& path);
  std::string canonical_json() const;
  std::string config_hash() const;
};

struct StageManifest {
  std::string name;
  bool cache_hit = false;
  std::int64_t duration_ms = 0;
  std::map<std::string, std::string> inputs;   // path (relative when possible) -> digest
  std::map<std::string, std::string> outputs;
  std::vector<std::string> warnings;
};

struct RunManifest {
  std::string config_hash;
  std::vector<StageManifest> stages;
};

const std::vector<std::string>& all_stage_names();  // canonical execution order

// Executes the requested stages in dependency order, skipping any stage whose
// inputs, config, and recorded outputs are unchanged since the previous run.
// Writes run.json under config.out_dir. Throws DependencyError before any
// work if a requested stage's inputs can neither be found nor produced.
RunManifest run_pipeline(const RunConfig& config, const std::vector<std::string>& stages);

}  // namespace xshot
