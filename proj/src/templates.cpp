#include "xshot/templates.hpp"

#include <algorithm>

#include "xshot/jsonl.hpp"

namespace xshot {

namespace {

std::string rtrim(std::string s) {
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '\n'))
    s.pop_back();
  return s;
}

const std::vector<FieldSpec>& fewrel_layout() {
  static const std::vector<FieldSpec> layout = {
      {"Sentence", "text"}, {"Entity 1", "entity1"}, {"Entity 2", "entity2"}};
  return layout;
}

const std::vector<FieldSpec>& maven_layout() {
  static const std::vector<FieldSpec> layout = {{"Sentence", "text"}, {"Trigger", "trigger"}};
  return layout;
}

const std::vector<FieldSpec>& rams_layout() {
  static const std::vector<FieldSpec> layout = {
      {"Sentence", "text"}, {"Trigger", "trigger"}, {"Argument", "argument"}};
  return layout;
}

struct PresetDef {
  const char* id;
  const char* instruction;
  const std::vector<FieldSpec>& (*layout)();
  const char* label_field;
};

const PresetDef kPresets[] = {
    {"fewrel-a",
     "Given a sentence about two entities, return a relation between the two entities that can "
     "be inferred from the sentence.",
     fewrel_layout, "Relation"},
    {"fewrel-b",
     "Your task is to identify a relationship between two entities mentioned in a given "
     "sentence.",
     fewrel_layout, "Relation"},
    {"fewrel-c",
     "Identify the relationship between two entities in a given sentence that can be inferred "
     "from the sentence.",
     fewrel_layout, "Relation"},
    {"maven-a",
     "Given the sentence and the identified trigger word, determine the most appropriate event "
     "category for this trigger.",
     maven_layout, "Event type"},
    {"maven-b", "Identify the event type in the sentence associated with the trigger word.",
     maven_layout, "Event type"},
    {"maven-c",
     "Classify the event represented by the trigger word in the context of the following "
     "sentence.",
     maven_layout, "Event type"},
    {"rams-a",
     "Your task is to identify the role of a specified argument within a given sentence, in "
     "relation to an identified event trigger.",
     rams_layout, "Role"},
    {"rams-b", "Identify the role of the argument given the event trigger within the sentence.",
     rams_layout, "Role"},
    {"rams-c", "Identify the role of the argument given the event trigger within the sentence.",
     rams_layout, "Role"},
};

}  // namespace

std::string render_fields(const RawInstance& inst, const RenderTemplate& tmpl) {
  std::string out;
  for (const auto& spec : tmpl.input_layout) {
    if (!out.empty()) out += '\n';
    std::string value;
    if (spec.source == "text") {
      value = inst.text;
    } else {
      auto it = inst.anchors.find(spec.source);
      if (it == inst.anchors.end())
        throw ValidationError("instance \"" + inst.id + "\": missing anchor \"" + spec.source +
                              "\" required by template \"" + tmpl.template_id + "\"");
      value = it->second;
    }
    out += rtrim(spec.field + ": " + value);
  }
  return out;
}

std::string render_input(const RawInstance& inst, const RenderTemplate& tmpl,
                         const std::string& label) {
  std::string fields = render_fields(inst, tmpl);
  std::string line = rtrim(tmpl.label_field_name + ": " + label);
  return fields.empty() ? line : fields + "\n" + line;
}

RenderTemplate preset_template(const std::string& id) {
  for (const auto& p : kPresets) {
    if (id == p.id) return {p.id, p.instruction, p.layout(), p.label_field};
  }
  throw ValidationError("unknown template preset \"" + id + "\"");
}

bool is_template_preset(const std::string& id) {
  return std::any_of(std::begin(kPresets), std::end(kPresets),
                     [&](const PresetDef& p) { return id == p.id; });
}

std::vector<std::string> template_preset_ids() {
  std::vector<std::string> ids;
  for (const auto& p : kPresets) ids.push_back(p.id);
  return ids;
}

RenderTemplate resolve_template(const std::string& id_or_path) {
  if (is_template_preset(id_or_path)) return preset_template(id_or_path);
  if (std::filesystem::exists(id_or_path)) return read_template(id_or_path);
  throw ValidationError("template \"" + id_or_path + "\" is neither a preset nor a file");
}

RenderTemplate read_template(const std::filesystem::path& path) {
  try {
    json j = json::parse(read_file(path));
    RenderTemplate t;
    t.template_id = j.at("template_id").get<std::string>();
    t.instruction = j.at("instruction").get<std::string>();
    for (const auto& row : j.at("input_layout"))
      t.input_layout.push_back(
          {row.at("field").get<std::string>(), row.at("source").get<std::string>()});
    t.label_field_name = j.at("label_field_name").get<std::string>();
    if (t.input_layout.empty()) throw ValidationError(path.string() + ": empty input_layout");
    return t;
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_template(const std::filesystem::path& path, const RenderTemplate& tmpl) {
  json layout = json::array();
  for (const auto& f : tmpl.input_layout) layout.push_back({{"field", f.field}, {"source", f.source}});
  json j = {{"template_id", tmpl.template_id},
            {"instruction", tmpl.instruction},
            {"input_layout", layout},
            {"label_field_name", tmpl.label_field_name}};
  write_file(path, j.dump(2) + "\n");
}

}  // namespace xshot
