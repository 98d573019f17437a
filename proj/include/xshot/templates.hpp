#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "xshot/types.hpp"

namespace xshot {

struct FieldSpec {
  std::string field;   // rendered field label, e.g. "Entity 1"
  std::string source;  // "text" or an anchor role name

  bool operator==(const FieldSpec&) const = default;
};

// How a classification instance is laid out as "Field: value" lines, plus the
// instruction shown to the scorer and the name of the trailing label field.
struct RenderTemplate {
  std::string template_id;
  std::string instruction;
  std::vector<FieldSpec> input_layout;
  std::string label_field_name;

  bool operator==(const RenderTemplate&) const = default;
};

// Layout lines only, newline-separated, no trailing whitespace. Throws a
// missing-anchor ValidationError naming the role.
std::string render_fields(const RawInstance& inst, const RenderTemplate& tmpl);

// Layout lines plus the final "LabelFieldName: <label>" line.
std::string render_input(const RawInstance& inst, const RenderTemplate& tmpl,
                         const std::string& label);

// Named presets: {fewrel,maven,rams}-{a,b,c}, the three per-dataset
// instruction variants over each dataset's field layout.
RenderTemplate preset_template(const std::string& id);
bool is_template_preset(const std::string& id);
std::vector<std::string> template_preset_ids();

// Preset id, or a JSON template file path.
RenderTemplate resolve_template(const std::string& id_or_path);

RenderTemplate read_template(const std::filesystem::path& path);
void write_template(const std::filesystem::path& path, const RenderTemplate& tmpl);

}  // namespace xshot
