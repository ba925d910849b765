#include "codeforge/serialization.hpp"

#include <fstream>
#include <sstream>

#include "codeforge/errors.hpp"

namespace codeforge {

namespace {

std::string str(const json& j, const char* key) { return j.at(key).get<std::string>(); }

json inputs_json(const std::vector<InputSpec>& inputs) {
    json out = json::array();
    for (const InputSpec& in : inputs) out.push_back(to_json(in));
    return out;
}

}  // namespace

json to_json(const InputSpec& input) {
    json j{{"kind", to_string(input.kind)}};
    if (input.kind == InputKind::Stdin) j["value"] = input.stdin_text;
    if (input.kind == InputKind::FunctionInput) j["value"] = input.call_expression;
    return j;
}

InputSpec input_from_json(const json& j) {
    switch (input_kind_from_string(str(j, "kind"))) {
        case InputKind::NoInput:
            return InputSpec::none();
        case InputKind::Stdin:
            return InputSpec::from_stdin(str(j, "value"));
        case InputKind::FunctionInput:
            return InputSpec::from_call(str(j, "value"));
    }
    return {};
}

json to_json(const ExecutionOutcome& outcome) {
    return json{{"stdout", outcome.stdout_text},
                {"stderr", outcome.stderr_text},
                {"status", to_string(outcome.status)},
                {"exit_code", outcome.exit_code ? json(*outcome.exit_code) : json()}};
}

ExecutionOutcome outcome_from_json(const json& j) {
    ExecutionOutcome out;
    out.stdout_text = str(j, "stdout");
    out.stderr_text = str(j, "stderr");
    out.status = execution_status_from_string(str(j, "status"));
    if (const json& code = j.at("exit_code"); !code.is_null()) out.exit_code = code.get<int>();
    return out;
}

json to_json(const EnvironmentInfo& env) {
    return json{{"project_tree", env.project_tree},
                {"snippet_path", env.snippet_path},
                {"run_command", env.run_command},
                {"timestamp", env.timestamp}};
}

EnvironmentInfo environment_from_json(const json& j) {
    return {str(j, "project_tree"), str(j, "snippet_path"), str(j, "run_command"), str(j, "timestamp")};
}

json to_json(const Edit& edit) {
    return json{{"kind", to_string(edit.kind)},
                {"target", edit.target},
                {"offset", edit.offset},
                {"before", edit.before},
                {"after", edit.after}};
}

Edit edit_from_json(const json& j) {
    return {edit_kind_from_string(str(j, "kind")), str(j, "target"), j.at("offset").get<std::size_t>(),
            str(j, "before"), str(j, "after")};
}

json to_json(const GroundTruth& gt) {
    return json{{"gt_stdout", gt.gt_stdout}, {"gt_stderr", gt.gt_stderr}, {"error_class", to_string(gt.error_class)}};
}

GroundTruth ground_truth_from_json(const json& j) {
    return {str(j, "gt_stdout"), str(j, "gt_stderr"), error_class_from_string(str(j, "error_class"))};
}

json to_json(const PreparedSample& prepared) {
    const AugmentedSample& s = prepared.sample;
    json edits = json::array();
    for (const Edit& e : s.edit_log) edits.push_back(to_json(e));
    return json{{"id", s.snippet.id},
                {"parent_id", s.parent_id},
                {"origin", s.snippet.origin},
                {"source", s.snippet.source_text},
                {"inputs", inputs_json(s.inputs)},
                {"edit_log", std::move(edits)},
                {"outcome", to_json(prepared.outcome)},
                {"env", to_json(prepared.env)},
                {"error_class", to_string(prepared.error_class)}};
}

PreparedSample prepared_sample_from_json(const json& j) {
    PreparedSample p;
    p.sample.snippet = CodeSnippet::make(str(j, "id"), str(j, "source"), j.value("origin", std::string()));
    p.sample.parent_id = str(j, "parent_id");
    for (const json& in : j.at("inputs")) p.sample.inputs.push_back(input_from_json(in));
    for (const json& e : j.at("edit_log")) p.sample.edit_log.push_back(edit_from_json(e));
    p.outcome = outcome_from_json(j.at("outcome"));
    p.env = environment_from_json(j.at("env"));
    p.error_class = error_class_from_string(str(j, "error_class"));
    return p;
}

json public_task_json(const TaskInstance& task) {
    return json{{"task_id", task.task_id},
                {"direction", to_string(task.direction)},
                {"prompt_text", task.prompt_text},
                {"shown_code", task.shown_code},
                {"input", to_json(task.input)},
                {"inputs_shown", task.inputs_shown},
                {"env", to_json(task.env)},
                {"template_version", task.template_version},
                {"template_hash", task.template_hash}};
}

json to_json(const TaskInstance& task) {
    json j = public_task_json(task);
    json masks = json::array();
    for (const MaskEntry& m : task.mask_map) {
        masks.push_back({{"mask_id", m.mask_id}, {"original_line", m.original_line}, {"line_index", m.line_index}});
    }
    // Everything under "hidden" is for the scorer only and never shown to a model.
    j["hidden"] = {{"ground_truth", to_json(task.ground_truth)}, {"mask_map", std::move(masks)}};
    return j;
}

TaskInstance task_from_json(const json& j) {
    TaskInstance t;
    t.task_id = str(j, "task_id");
    t.direction = direction_from_string(str(j, "direction"));
    t.prompt_text = str(j, "prompt_text");
    t.shown_code = str(j, "shown_code");
    t.input = input_from_json(j.at("input"));
    t.inputs_shown = str(j, "inputs_shown");
    t.env = environment_from_json(j.at("env"));
    t.template_version = str(j, "template_version");
    t.template_hash = str(j, "template_hash");
    const json& hidden = j.at("hidden");
    t.ground_truth = ground_truth_from_json(hidden.at("ground_truth"));
    for (const json& m : hidden.at("mask_map")) {
        t.mask_map.push_back(
            {m.at("mask_id").get<std::size_t>(), str(m, "original_line"), m.at("line_index").get<std::size_t>()});
    }
    return t;
}

json to_json(const RewardBreakdown& reward) {
    return json{{"r_format", reward.r_format}, {"r_o", reward.r_o}, {"r_e", reward.r_e}, {"r", reward.r}};
}

std::string dump_line(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace); }

std::vector<json> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::vector<json> rows;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json row = json::parse(line, nullptr, false);
        if (row.is_discarded()) throw Error(path.string() + ":" + std::to_string(number) + ": malformed JSON");
        rows.push_back(std::move(row));
    }
    if (in.bad()) throw IoError("error reading " + path.string());
    return rows;
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        if (!out) throw IoError("error writing " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& rows) {
    std::string text;
    for (const json& row : rows) {
        text += dump_line(row);
        text += '\n';
    }
    write_text_file(path, text);
}

namespace {

template <class T, class Fn>
std::vector<T> read_rows(const std::filesystem::path& path, Fn&& convert) {
    const std::vector<json> rows = read_jsonl(path);
    std::vector<T> out;
    out.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        try {
            out.push_back(convert(rows[i]));
        } catch (const json::exception& e) {
            throw Error(path.string() + ": record " + std::to_string(i + 1) + ": " + e.what());
        } catch (const Error& e) {
            throw Error(path.string() + ": record " + std::to_string(i + 1) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace

std::vector<PreparedSample> read_samples(const std::filesystem::path& path) {
    return read_rows<PreparedSample>(path, prepared_sample_from_json);
}

std::vector<TaskInstance> read_tasks(const std::filesystem::path& path) {
    return read_rows<TaskInstance>(path, task_from_json);
}

}  // namespace codeforge
