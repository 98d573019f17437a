#include "xshot/types.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "xshot/jsonl.hpp"

namespace xshot {

std::string to_string(FrequencyGroup g) {
  switch (g) {
    case FrequencyGroup::freq: return "freq";
    case FrequencyGroup::few: return "few";
    case FrequencyGroup::zero: return "zero";
  }
  throw Error("unreachable frequency group");
}

FrequencyGroup group_from_string(const std::string& s) {
  if (s == "freq") return FrequencyGroup::freq;
  if (s == "few") return FrequencyGroup::few;
  if (s == "zero") return FrequencyGroup::zero;
  throw ValidationError("unknown frequency group \"" + s + "\"");
}

std::string to_string(Polarity p) {
  switch (p) {
    case Polarity::yes: return "yes";
    case Polarity::no: return "no";
    case Polarity::unknown: return "unknown";
  }
  throw Error("unreachable polarity");
}

FrequencyGroup LabelSpace::group_of(const std::string& name) const {
  auto it = groups.find(name);
  if (it == groups.end()) throw ValidationError("label \"" + name + "\" not in label space");
  return it->second;
}

std::vector<std::string> LabelSpace::scorable_labels() const {
  std::vector<std::string> out;
  out.reserve(labels.size());
  for (const auto& l : labels)
    if (l != kNoneLabel) out.push_back(l);
  return out;
}

void LabelSpace::validate() const {
  std::set<std::string> seen;
  for (const auto& l : labels) {
    if (l.empty()) throw ValidationError("label space contains an empty label name");
    if (!seen.insert(l).second) throw ValidationError("duplicate label \"" + l + "\"");
    if (groups.count(l) == 0) throw ValidationError("label \"" + l + "\" has no group assignment");
  }
  for (const auto& [name, _] : groups)
    if (seen.count(name) == 0)
      throw ValidationError("group assignment for unknown label \"" + name + "\"");
  const bool has_none = seen.count(kNoneLabel) > 0;
  if (includes_none) {
    if (!has_none) throw ValidationError("includes_none is set but \"None\" is absent");
    if (groups.at(kNoneLabel) != FrequencyGroup::zero)
      throw ValidationError("\"None\" must belong to the zero-shot group");
  } else if (has_none) {
    throw ValidationError("\"None\" present but includes_none is not set");
  }
}

std::vector<Violation> validate_dataset(const std::vector<RawInstance>& instances,
                                        const LabelSpace& space) {
  std::vector<Violation> out;
  std::map<std::string, int> id_count;
  for (const auto& inst : instances) ++id_count[inst.id];

  std::set<std::string> reported_dup;
  for (const auto& inst : instances) {
    if (inst.id.empty()) {
      out.push_back({inst.id, "empty instance id"});
      continue;
    }
    if (id_count[inst.id] > 1 && reported_dup.insert(inst.id).second)
      out.push_back({inst.id, "duplicate id"});
    if (inst.gold_label && *inst.gold_label != kNoneLabel && !space.contains(*inst.gold_label))
      out.push_back({inst.id, "gold label \"" + *inst.gold_label + "\" not in label space"});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Wire formats

namespace {

const json& require(const json& j, const char* field, const char* what) {
  auto it = j.find(field);
  if (it == j.end() || it->is_null())
    throw ValidationError(std::string(what) + ": missing field \"" + field + "\"");
  return *it;
}

}  // namespace

json to_json(const LabelSpace& space) {
  json labels = json::array();
  for (const auto& name : space.labels)
    labels.push_back({{"name", name}, {"group", to_string(space.groups.at(name))}});
  return {{"labels", labels}, {"includes_none", space.includes_none}};
}

LabelSpace label_space_from_json(const json& j) {
  LabelSpace space;
  for (const auto& row : require(j, "labels", "label space")) {
    std::string name = require(row, "name", "label").get<std::string>();
    space.labels.push_back(name);
    space.groups[name] = group_from_string(require(row, "group", "label").get<std::string>());
  }
  space.includes_none = require(j, "includes_none", "label space").get<bool>();
  space.validate();
  return space;
}

json to_json(const RawInstance& inst) {
  json anchors = json::object();
  for (const auto& [role, span] : inst.anchors) anchors[role] = span;
  json j = {{"id", inst.id},
            {"text", inst.text},
            {"anchors", anchors},
            {"label", inst.gold_label ? json(*inst.gold_label) : json(nullptr)}};
  if (inst.weak) j["weak"] = true;
  return j;
}

RawInstance instance_from_json(const json& j) {
  RawInstance inst;
  inst.id = require(j, "id", "instance").get<std::string>();
  inst.text = require(j, "text", "instance").get<std::string>();
  for (const auto& [role, span] : require(j, "anchors", "instance").items())
    inst.anchors[role] = span.get<std::string>();
  auto label = j.find("label");
  if (label == j.end()) throw ValidationError("instance: missing field \"label\"");
  if (!label->is_null()) inst.gold_label = label->get<std::string>();
  inst.weak = j.value("weak", false);
  return inst;
}

json to_json(const TripletExample& t) {
  return {{"triplet_id", t.triplet_id},
          {"instance_id", t.instance_id},
          {"instruction", t.instruction},
          {"input", t.input},
          {"label", t.label},
          {"polarity", t.polarity == Polarity::unknown ? json(nullptr) : json(to_string(t.polarity))},
          {"group", to_string(t.group)}};
}

TripletExample triplet_from_json(const json& j) {
  TripletExample t;
  t.triplet_id = require(j, "triplet_id", "triplet").get<std::string>();
  t.instance_id = require(j, "instance_id", "triplet").get<std::string>();
  t.instruction = require(j, "instruction", "triplet").get<std::string>();
  t.input = require(j, "input", "triplet").get<std::string>();
  t.label = require(j, "label", "triplet").get<std::string>();
  auto pol = j.find("polarity");
  if (pol == j.end()) throw ValidationError("triplet: missing field \"polarity\"");
  if (pol->is_null())
    t.polarity = Polarity::unknown;
  else if (*pol == "yes")
    t.polarity = Polarity::yes;
  else if (*pol == "no")
    t.polarity = Polarity::no;
  else
    throw ValidationError("triplet: bad polarity");
  t.group = group_from_string(require(j, "group", "triplet").get<std::string>());
  return t;
}

json to_json(const ScoreRecord& s) {
  return {{"triplet_id", s.triplet_id}, {"p_yes", s.p_yes}};
}

ScoreRecord score_from_json(const json& j) {
  ScoreRecord s;
  s.triplet_id = require(j, "triplet_id", "score").get<std::string>();
  s.p_yes = require(j, "p_yes", "score").get<double>();
  if (!(s.p_yes >= 0.0 && s.p_yes <= 1.0))
    throw ValidationError("score for \"" + s.triplet_id + "\": p_yes outside [0,1]");
  return s;
}

json to_json(const TaskRecord& t) {
  json demos = json::array();
  for (const auto& d : t.positive_demos) demos.push_back({{"input", d.input}, {"output", d.output}});
  json instances = json::array();
  for (const auto& i : t.instances)
    instances.push_back({{"id", i.id}, {"input", i.input}, {"outputs", i.outputs}});
  return {{"task_id", t.task_id},
          {"definition", t.definition},
          {"positive_demos", demos},
          {"instances", instances}};
}

TaskRecord task_from_json(const json& j) {
  TaskRecord t;
  t.task_id = require(j, "task_id", "task").get<std::string>();
  t.definition = require(j, "definition", "task").get<std::string>();
  for (const auto& d : require(j, "positive_demos", "task")) {
    t.positive_demos.push_back({require(d, "input", "demo").get<std::string>(),
                                require(d, "output", "demo").get<std::string>()});
  }
  for (const auto& i : require(j, "instances", "task")) {
    TaskInstance inst;
    inst.id = require(i, "id", "task instance").get<std::string>();
    inst.input = require(i, "input", "task instance").get<std::string>();
    inst.outputs = require(i, "outputs", "task instance").get<std::vector<std::string>>();
    if (inst.outputs.empty())
      throw ValidationError("task \"" + t.task_id + "\" instance \"" + inst.id +
                            "\": empty gold outputs");
    t.instances.push_back(std::move(inst));
  }
  return t;
}

json to_json(const EvaluationReport& r) {
  json slices = json::array();
  for (const auto& s : r.confusion_slices)
    slices.push_back({{"gold", s.gold}, {"predicted", s.predicted}, {"count", s.count}});
  json j = {{"accuracy_all", r.accuracy_all},
            {"accuracy_freq", r.accuracy_freq},
            {"accuracy_few", r.accuracy_few},
            {"accuracy_zero", r.accuracy_zero},
            {"accuracy_macro", r.accuracy_macro},
            {"counts",
             {{"all", r.count_all}, {"freq", r.count_freq}, {"few", r.count_few}, {"zero", r.count_zero}}},
            {"threshold_used", r.threshold_used ? json(*r.threshold_used) : json(nullptr)},
            {"confusion_slices", slices}};
  if (r.template_id) j["template_id"] = *r.template_id;
  return j;
}

EvaluationReport report_from_json(const json& j) {
  EvaluationReport r;
  r.accuracy_all = require(j, "accuracy_all", "report").get<double>();
  r.accuracy_freq = require(j, "accuracy_freq", "report").get<double>();
  r.accuracy_few = require(j, "accuracy_few", "report").get<double>();
  r.accuracy_zero = require(j, "accuracy_zero", "report").get<double>();
  r.accuracy_macro = require(j, "accuracy_macro", "report").get<double>();
  const json& counts = require(j, "counts", "report");
  r.count_all = require(counts, "all", "report counts").get<std::int64_t>();
  r.count_freq = require(counts, "freq", "report counts").get<std::int64_t>();
  r.count_few = require(counts, "few", "report counts").get<std::int64_t>();
  r.count_zero = require(counts, "zero", "report counts").get<std::int64_t>();
  auto t = j.find("threshold_used");
  if (t == j.end()) throw ValidationError("report: missing field \"threshold_used\"");
  if (!t->is_null()) r.threshold_used = t->get<double>();
  if (j.contains("template_id") && !j["template_id"].is_null())
    r.template_id = j["template_id"].get<std::string>();
  for (const auto& s : require(j, "confusion_slices", "report")) {
    r.confusion_slices.push_back({require(s, "gold", "slice").get<std::string>(),
                                  require(s, "predicted", "slice").get<std::string>(),
                                  require(s, "count", "slice").get<std::int64_t>()});
  }
  return r;
}

// ---------------------------------------------------------------------------
// File helpers

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << content;
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read " + path.string());
  std::vector<json> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      rows.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& rows) {
  std::string buf;
  for (const auto& row : rows) {
    buf += row.dump();
    buf += '\n';
  }
  write_file(path, buf);
}

namespace {

template <typename T, typename Fn>
std::vector<T> read_typed(const std::filesystem::path& path, Fn parse) {
  std::vector<T> out;
  for (const auto& row : read_jsonl(path)) {
    try {
      out.push_back(parse(row));
    } catch (const json::exception& e) {
      throw ValidationError(path.string() + ": " + e.what());
    }
  }
  return out;
}

template <typename T>
void write_typed(const std::filesystem::path& path, const std::vector<T>& v) {
  std::vector<json> rows;
  rows.reserve(v.size());
  for (const auto& x : v) rows.push_back(to_json(x));
  write_jsonl(path, rows);
}

}  // namespace

std::vector<RawInstance> read_instances(const std::filesystem::path& path) {
  return read_typed<RawInstance>(path, instance_from_json);
}
void write_instances(const std::filesystem::path& path, const std::vector<RawInstance>& v) {
  write_typed(path, v);
}

std::vector<TripletExample> read_triplets(const std::filesystem::path& path) {
  return read_typed<TripletExample>(path, triplet_from_json);
}
void write_triplets(const std::filesystem::path& path, const std::vector<TripletExample>& v) {
  write_typed(path, v);
}

std::vector<ScoreRecord> read_scores(const std::filesystem::path& path) {
  return read_typed<ScoreRecord>(path, score_from_json);
}
void write_scores(const std::filesystem::path& path, const std::vector<ScoreRecord>& v) {
  write_typed(path, v);
}

std::vector<TaskRecord> read_tasks(const std::filesystem::path& path) {
  return read_typed<TaskRecord>(path, task_from_json);
}
void write_tasks(const std::filesystem::path& path, const std::vector<TaskRecord>& v) {
  write_typed(path, v);
}

LabelSpace read_label_space(const std::filesystem::path& path) {
  try {
    return label_space_from_json(json::parse(read_file(path)));
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_label_space(const std::filesystem::path& path, const LabelSpace& space) {
  write_file(path, to_json(space).dump(2) + "\n");
}

EvaluationReport read_report(const std::filesystem::path& path) {
  try {
    return report_from_json(json::parse(read_file(path)));
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_report(const std::filesystem::path& path, const EvaluationReport& r) {
  write_file(path, to_json(r).dump(2) + "\n");
}

}  // namespace xshot
