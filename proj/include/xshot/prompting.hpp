#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "xshot/scoring.hpp"
#include "xshot/templates.hpp"
#include "xshot/types.hpp"

namespace xshot {

// Prompt schema for weak-supervision generation. The first field is the label
// field; the rest are completed by the model.
struct WeakGenSpec {
  std::vector<std::string> field_schema;
  std::map<std::string, std::string> anchor_roles;  // field -> instance anchor role
  int demos_per_prompt = 2;
  int instances_per_label = 5;
  int max_retries = 3;

  void validate() const;
  const std::string& label_field() const { return field_schema.front(); }
};

// fewrel | maven | rams generation schemas.
WeakGenSpec preset_weak_schema(const std::string& name);
WeakGenSpec read_weak_schema(const std::filesystem::path& path);

struct WeakInstance {
  std::string label;
  std::map<std::string, std::string> fields;  // non-label schema fields
  std::string prompt_hash;
  std::string completion_id;
};

// Demo blocks in field-schema order, blank-line separated, ending with a block
// holding only the label field set to zero_label.
std::string build_weak_prompt(const std::string& zero_label,
                              const std::vector<RawInstance>& demo_pool, const WeakGenSpec& spec,
                              std::uint64_t seed);

struct WeakParse {
  std::optional<WeakInstance> instance;
  std::vector<std::string> missing_fields;
};

// Order-independent scan for "field: value" lines (case-insensitive field
// match, first occurrence wins).
WeakParse parse_weak_completion(const std::string& completion, const WeakGenSpec& spec,
                                const std::string& zero_label);

struct WeakShortfall {
  std::string label;
  int requested = 0;
  int produced = 0;
};

struct WeakGenResult {
  std::vector<WeakInstance> instances;
  std::vector<WeakShortfall> shortfalls;
};

// Per zero label, loops build -> complete -> parse until instances_per_label
// successes or the retry budget (instances_per_label * (1 + max_retries)
// calls) is exhausted. Partial results are kept.
WeakGenResult generate_weak_instances(const std::vector<std::string>& zero_labels,
                                      const std::vector<RawInstance>& demo_pool,
                                      const WeakGenSpec& spec, CompletionBackend& backend,
                                      std::uint64_t seed);

// Standard-instance form with the weak marker set, ready for triplet building.
RawInstance weak_to_instance(const WeakInstance& weak, const WeakGenSpec& spec, int ordinal);

// In-context baseline prompt: two gold demos labelled Yes, one seeded
// wrong-label demo labelled No, then the test instance with the candidate
// label and a trailing "Label:".
std::string build_icl_prompt(const RawInstance& test_instance, const std::string& candidate_label,
                             const std::vector<RawInstance>& demo_pool, const LabelSpace& space,
                             const RenderTemplate& tmpl, std::uint64_t seed);

}  // namespace xshot
