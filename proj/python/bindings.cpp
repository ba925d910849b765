// Python extension module codeforge._core. Structured values cross the
// boundary as JSON text; the codeforge package converts them to dicts.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>
#include <mutex>

#include "codeforge/orchestrator.hpp"

namespace py = pybind11;
using namespace codeforge;

namespace {

// One sandbox pool per process, created on first use with limits from the
// environment.
SandboxPool& shared_pool() {
    static std::once_flag once;
    static std::unique_ptr<SandboxPool> pool;
    std::call_once(once, [] {
        SandboxOptions options;
        options.limits = ResourceLimits::from_environment();
        options.interpreter = InterpreterProfile::from_environment();
        options.clock = make_clock("2025-01-01T00:00:00Z");
        pool = std::make_unique<SandboxPool>(std::move(options));
    });
    return *pool;
}

RewardConfig reward_config(double w, double beta) {
    RewardConfig c{w, beta};
    c.validate();
    return c;
}

std::vector<CodeSnippet> to_snippets(const std::vector<std::pair<std::string, std::string>>& items) {
    std::vector<CodeSnippet> snippets;
    snippets.reserve(items.size());
    for (const auto& [id, source] : items) snippets.push_back(CodeSnippet::make(id, source));
    return snippets;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Native core of the codeforge data and reward pipeline";

    auto base = py::register_exception<Error>(m, "CodeforgeError", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<ScoringError>(m, "ScoringError", base.ptr());
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const json::exception& e) {
            PyErr_SetString(PyExc_ValueError, e.what());
        }
    });

    m.attr("template_version") = prompt_template().version;
    m.attr("template_hash") = prompt_template().hash;

    m.def("structure_distance", [](const std::string& a, const std::string& b) {
        return structure_distance(split_lines(a), split_lines(b));
    }, py::arg("a"), py::arg("b"));

    m.def("curate", [](const std::vector<std::pair<std::string, std::string>>& items, double gamma,
                       std::size_t subset_cap, std::size_t iterations, std::uint64_t seed) {
        CurationConfig config{gamma, subset_cap, iterations, seed, 0};
        config.validate();
        const std::vector<CodeSnippet> snippets = to_snippets(items);
        std::vector<std::string> ids;
        {
            py::gil_scoped_release release;
            for (const CodeSnippet& s : curate(snippets, config)) ids.push_back(s.id);
        }
        return ids;
    }, py::arg("snippets"), py::arg("gamma") = 1.0, py::arg("subset_cap") = 400, py::arg("iterations") = 5,
       py::arg("seed") = 17);

    m.def("mask_lines", [](const std::string& source, std::size_t count, std::uint64_t seed) {
        const MaskedSource masked = mask_lines(CodeSnippet::make("snippet", source), count, seed);
        json entries = json::array();
        for (const MaskEntry& e : masked.mask_map) {
            entries.push_back({{"mask_id", e.mask_id}, {"original_line", e.original_line}, {"line_index", e.line_index}});
        }
        return py::make_tuple(masked.text, dump_line(entries));
    }, py::arg("source"), py::arg("count"), py::arg("seed"));

    m.def("max_mask_count", [](const std::string& source) {
        return max_mask_count(source);
    }, py::arg("source"));

    m.def("generate_tasks", [](const std::vector<std::string>& sample_rows, const std::string& mix, std::uint64_t seed) {
        std::vector<PreparedSample> samples;
        for (const std::string& row : sample_rows) samples.push_back(prepared_sample_from_json(json::parse(row)));
        std::vector<TaskInstance> tasks;
        {
            py::gil_scoped_release release;
            tasks = generate_tasks(samples, TaskMix::parse(mix), seed);
        }
        std::vector<std::string> rows;
        for (const TaskInstance& t : tasks) rows.push_back(dump_line(to_json(t)));
        return rows;
    }, py::arg("samples"), py::arg("mix") = "forward=0.5,backward=0.5", py::arg("seed") = 17);

    m.def("public_task", [](const std::string& task_row) {
        return dump_line(public_task_json(task_from_json(json::parse(task_row))));
    }, py::arg("task"));

    m.def("score", [](const std::string& task_row, const std::string& response_text, double w, double beta) {
        const TaskInstance task = task_from_json(json::parse(task_row));
        const RewardConfig config = reward_config(w, beta);
        RewardBreakdown r;
        {
            py::gil_scoped_release release;
            r = score_response(response_text, task, config, shared_pool());
        }
        return dump_line(to_json(r));
    }, py::arg("task"), py::arg("response_text"), py::arg("w") = 0.1, py::arg("beta") = 0.5);

    m.def("score_batch", [](const std::filesystem::path& tasks_path, const std::vector<std::string>& request_rows,
                            double w, double beta) {
        const TaskStore store = TaskStore::load(tasks_path);
        std::vector<ScoreRequest> requests;
        for (const std::string& row : request_rows) requests.push_back(ScoreRequest::from_json(json::parse(row)));
        const RewardConfig config = reward_config(w, beta);
        std::vector<ScoreResult> results;
        {
            py::gil_scoped_release release;
            results = score_batch(store, requests, config, shared_pool());
        }
        std::vector<std::string> rows;
        for (const ScoreResult& r : results) rows.push_back(dump_line(r.to_json()));
        return rows;
    }, py::arg("tasks_path"), py::arg("requests"), py::arg("w") = 0.1, py::arg("beta") = 0.5);

    m.def("run_pipeline", [](const std::string& config_json, const std::filesystem::path& base_dir) {
        const PipelineConfig config = PipelineConfig::from_json(json::parse(config_json), base_dir);
        Manifest manifest;
        {
            py::gil_scoped_release release;
            manifest = run_pipeline(config);
        }
        return dump_line(manifest.to_json());
    }, py::arg("config"), py::arg("base_dir"));
}
