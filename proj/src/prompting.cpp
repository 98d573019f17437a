#include "xshot/prompting.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>

#include "xshot/jsonl.hpp"
#include "xshot/rng.hpp"

namespace xshot {

namespace {

constexpr const char* kModuleTag = "prompting";

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string strip_spaces(const std::string& s) {
  std::string out;
  for (char c : s)
    if (c != ' ') out += c;
  return out;
}

std::string last_token(const std::string& s) {
  auto pos = s.find_last_of(" \t");
  return pos == std::string::npos ? s : s.substr(pos + 1);
}

std::string hex128_of(const std::string& payload) {
  const std::uint64_t a = fnv1a64(payload);
  const std::uint64_t b = fnv1a64(payload, 0x84222325cbf29ce4ull);
  char buf[33];
  std::snprintf(buf, sizeof(buf), "%016llx%016llx", static_cast<unsigned long long>(a),
                static_cast<unsigned long long>(b));
  return buf;
}

}  // namespace

void WeakGenSpec::validate() const {
  if (field_schema.empty()) throw ValidationError("weak-gen schema needs at least the label field");
  if (instances_per_label < 1) throw ValidationError("instances_per_label must be >= 1");
  if (max_retries < 0) throw ValidationError("max_retries must be >= 0");
  if (demos_per_prompt < 0) throw ValidationError("demos_per_prompt must be >= 0");
}

WeakGenSpec preset_weak_schema(const std::string& name) {
  WeakGenSpec spec;
  if (name == "fewrel") {
    spec.field_schema = {"relation", "entity 1", "entity 2", "sentence"};
    spec.anchor_roles = {{"entity 1", "entity1"}, {"entity 2", "entity2"}};
  } else if (name == "maven") {
    spec.field_schema = {"event type", "event trigger", "sentence"};
    spec.anchor_roles = {{"event trigger", "trigger"}};
  } else if (name == "rams") {
    spec.field_schema = {"role", "trigger", "argument", "sentence"};
    spec.anchor_roles = {{"trigger", "trigger"}, {"argument", "argument"}};
  } else {
    throw ValidationError("unknown weak-gen schema preset \"" + name + "\"");
  }
  return spec;
}

WeakGenSpec read_weak_schema(const std::filesystem::path& path) {
  try {
    json j = json::parse(read_file(path));
    WeakGenSpec spec;
    spec.field_schema = j.at("field_schema").get<std::vector<std::string>>();
    if (j.contains("anchor_roles"))
      for (const auto& [field, role] : j.at("anchor_roles").items())
        spec.anchor_roles[field] = role.get<std::string>();
    spec.demos_per_prompt = j.value("demos_per_prompt", spec.demos_per_prompt);
    spec.instances_per_label = j.value("instances_per_label", spec.instances_per_label);
    spec.max_retries = j.value("max_retries", spec.max_retries);
    spec.validate();
    return spec;
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

namespace {

bool is_sentence_field(const std::string& field) { return lower(field) == "sentence"; }

// Field -> anchor role: explicit mapping first, then exact name, then the
// name without spaces, then its last token ("event trigger" -> "trigger").
std::string resolve_role(const WeakGenSpec& spec, const std::string& field,
                         const RawInstance* inst) {
  auto mapped = spec.anchor_roles.find(field);
  if (mapped != spec.anchor_roles.end()) return mapped->second;
  if (inst) {
    for (const auto& candidate : {field, strip_spaces(field), last_token(field)})
      if (inst->anchors.count(candidate)) return candidate;
  }
  return strip_spaces(field);
}

std::string demo_field_value(const RawInstance& demo, const WeakGenSpec& spec,
                             const std::string& field, bool is_label) {
  if (is_label) {
    if (!demo.gold_label)
      throw ValidationError("demo instance \"" + demo.id + "\" has no gold label");
    return *demo.gold_label;
  }
  if (is_sentence_field(field)) return demo.text;
  const std::string role = resolve_role(spec, field, &demo);
  auto it = demo.anchors.find(role);
  if (it == demo.anchors.end())
    throw ValidationError("demo instance \"" + demo.id + "\" missing anchor \"" + role +
                          "\" for field \"" + field + "\"");
  return it->second;
}

}  // namespace

std::string build_weak_prompt(const std::string& zero_label,
                              const std::vector<RawInstance>& demo_pool, const WeakGenSpec& spec,
                              std::uint64_t seed) {
  spec.validate();
  if (demo_pool.empty()) throw ValidationError("empty demo pool");

  Rng rng(seed);
  const std::size_t k =
      std::min<std::size_t>(static_cast<std::size_t>(spec.demos_per_prompt), demo_pool.size());
  std::string prompt;
  for (auto idx : rng.sample_indices(demo_pool.size(), k)) {
    const RawInstance& demo = demo_pool[idx];
    std::string block;
    for (std::size_t f = 0; f < spec.field_schema.size(); ++f) {
      if (!block.empty()) block += '\n';
      block += spec.field_schema[f] + ": " + demo_field_value(demo, spec, spec.field_schema[f], f == 0);
    }
    prompt += block + "\n\n";
  }
  prompt += spec.label_field() + ": " + zero_label;
  return prompt;
}

WeakParse parse_weak_completion(const std::string& completion, const WeakGenSpec& spec,
                                const std::string& zero_label) {
  spec.validate();

  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= completion.size()) {
    auto nl = completion.find('\n', start);
    const std::string line =
        nl == std::string::npos ? completion.substr(start) : completion.substr(start, nl - start);
    lines.push_back(line);
    if (nl == std::string::npos) break;
    start = nl + 1;
  }

  WeakInstance inst;
  inst.label = zero_label;
  WeakParse result;
  for (std::size_t f = 1; f < spec.field_schema.size(); ++f) {
    const std::string& field = spec.field_schema[f];
    const std::string needle = lower(field) + ":";
    std::string value;
    for (const auto& raw : lines) {
      const std::string line = trim(raw);
      if (lower(line).rfind(needle, 0) == 0) {
        value = trim(line.substr(needle.size()));
        break;  // first occurrence wins
      }
    }
    if (value.empty())
      result.missing_fields.push_back(field);
    else
      inst.fields[field] = value;
  }
  if (result.missing_fields.empty()) result.instance = std::move(inst);
  return result;
}

WeakGenResult generate_weak_instances(const std::vector<std::string>& zero_labels,
                                      const std::vector<RawInstance>& demo_pool,
                                      const WeakGenSpec& spec, CompletionBackend& backend,
                                      std::uint64_t seed) {
  spec.validate();
  const std::uint64_t module_seed = derive_seed(seed, kModuleTag);
  const CompletionParams params;

  WeakGenResult result;
  for (const auto& label : zero_labels) {
    const std::uint64_t label_seed = derive_seed(module_seed, label);
    const int budget = spec.instances_per_label * (1 + spec.max_retries);
    int successes = 0;
    for (int attempt = 0; attempt < budget && successes < spec.instances_per_label; ++attempt) {
      const std::string prompt =
          build_weak_prompt(label, demo_pool, spec, derive_seed(label_seed, "attempt:" + std::to_string(attempt)));
      std::string completion;
      try {
        completion = backend.complete(prompt, params);
      } catch (const BackendError& e) {
        throw BackendError("weak generation for label \"" + label + "\" attempt " +
                           std::to_string(attempt) + ": " + e.what());
      }
      WeakParse parsed = parse_weak_completion(completion, spec, label);
      if (!parsed.instance) continue;
      parsed.instance->prompt_hash = hex128_of(prompt);
      parsed.instance->completion_id = hex128_of(completion);
      result.instances.push_back(std::move(*parsed.instance));
      ++successes;
    }
    if (successes < spec.instances_per_label)
      result.shortfalls.push_back({label, spec.instances_per_label, successes});
  }
  return result;
}

RawInstance weak_to_instance(const WeakInstance& weak, const WeakGenSpec& spec, int ordinal) {
  RawInstance inst;
  inst.id = "weak::" + weak.label + "::" + std::to_string(ordinal);
  inst.gold_label = weak.label;
  inst.weak = true;
  for (const auto& [field, value] : weak.fields) {
    if (is_sentence_field(field))
      inst.text = value;
    else
      inst.anchors[resolve_role(spec, field, nullptr)] = value;
  }
  return inst;
}

std::string build_icl_prompt(const RawInstance& test_instance, const std::string& candidate_label,
                             const std::vector<RawInstance>& demo_pool, const LabelSpace& space,
                             const RenderTemplate& tmpl, std::uint64_t seed) {
  if (demo_pool.size() < 2)
    throw ValidationError("in-context prompt needs at least 2 demo instances");

  Rng rng(seed);
  auto picks = rng.sample_indices(demo_pool.size(), 3);
  if (picks.size() < 3) picks.push_back(picks.front());  // 2-instance pool: reuse for the negative

  auto gold_of = [](const RawInstance& d) -> const std::string& {
    if (!d.gold_label) throw ValidationError("demo instance \"" + d.id + "\" has no gold label");
    return *d.gold_label;
  };

  std::string prompt;
  for (int i = 0; i < 2; ++i) {
    const RawInstance& demo = demo_pool[picks[static_cast<std::size_t>(i)]];
    prompt += render_input(demo, tmpl, gold_of(demo)) + "\nLabel: Yes\n\n";
  }

  const RawInstance& neg = demo_pool[picks[2]];
  std::vector<std::string> wrong_pool;
  for (const auto& label : space.scorable_labels())
    if (label != gold_of(neg)) wrong_pool.push_back(label);
  if (wrong_pool.empty())
    throw ValidationError("label space too small to pick a wrong label for the negative demo");
  const std::string& wrong = wrong_pool[static_cast<std::size_t>(rng.below(wrong_pool.size()))];
  prompt += render_input(neg, tmpl, wrong) + "\nLabel: No\n\n";

  prompt += render_input(test_instance, tmpl, candidate_label) + "\nLabel:";
  return prompt;
}

}  // namespace xshot
