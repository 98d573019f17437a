#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "xshot/types.hpp"

namespace xshot {

using json = nlohmann::json;

// Wire formats. Field names are part of the external contract; parsers reject
// records with missing required fields or out-of-range values.

json to_json(const LabelSpace& space);
LabelSpace label_space_from_json(const json& j);

json to_json(const RawInstance& inst);
RawInstance instance_from_json(const json& j);

json to_json(const TripletExample& t);
TripletExample triplet_from_json(const json& j);

json to_json(const ScoreRecord& s);
ScoreRecord score_from_json(const json& j);

json to_json(const TaskRecord& t);
TaskRecord task_from_json(const json& j);

json to_json(const EvaluationReport& r);
EvaluationReport report_from_json(const json& j);

// File helpers. Unreadable input is an I/O error (ValidationError at the CLI
// boundary), never a per-record violation.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

std::vector<json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<json>& rows);

std::vector<RawInstance> read_instances(const std::filesystem::path& path);
void write_instances(const std::filesystem::path& path, const std::vector<RawInstance>& v);

std::vector<TripletExample> read_triplets(const std::filesystem::path& path);
void write_triplets(const std::filesystem::path& path, const std::vector<TripletExample>& v);

std::vector<ScoreRecord> read_scores(const std::filesystem::path& path);
void write_scores(const std::filesystem::path& path, const std::vector<ScoreRecord>& v);

std::vector<TaskRecord> read_tasks(const std::filesystem::path& path);
void write_tasks(const std::filesystem::path& path, const std::vector<TaskRecord>& v);

LabelSpace read_label_space(const std::filesystem::path& path);
void write_label_space(const std::filesystem::path& path, const LabelSpace& space);

EvaluationReport read_report(const std::filesystem::path& path);
void write_report(const std::filesystem::path& path, const EvaluationReport& r);

}  // namespace xshot
