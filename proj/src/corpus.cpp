#include "codeforge/corpus.hpp"

#include <nlohmann/json.hpp>

#include "codeforge/errors.hpp"
#include "codeforge/python_syntax.hpp"

namespace codeforge {

using nlohmann::json;

std::size_t count_lines(std::string_view text) {
    if (text.empty()) return 0;
    std::size_t n = 0;
    for (char c : text) n += c == '\n';
    return text.back() == '\n' ? n : n + 1;
}

std::size_t count_code_points(std::string_view text) {
    std::size_t n = 0;
    for (unsigned char c : text) n += (c & 0xC0) != 0x80;
    return n;
}

CodeSnippet CodeSnippet::make(std::string id, std::string source_text, std::string origin) {
    CodeSnippet s;
    s.id = std::move(id);
    s.line_count = count_lines(source_text);
    s.char_count = count_code_points(source_text);
    s.source_text = std::move(source_text);
    s.origin = std::move(origin);
    return s;
}

std::string_view to_string(InputKind kind) {
    switch (kind) {
        case InputKind::NoInput: return "none";
        case InputKind::Stdin: return "stdin";
        case InputKind::FunctionInput: return "function";
    }
    return "none";
}

InputKind input_kind_from_string(std::string_view text) {
    if (text == "none") return InputKind::NoInput;
    if (text == "stdin") return InputKind::Stdin;
    if (text == "function") return InputKind::FunctionInput;
    throw ConfigError("unknown input kind '" + std::string(text) + "'");
}

std::string_view to_string(FilterReason reason) {
    switch (reason) {
        case FilterReason::Ok: return "ok";
        case FilterReason::ExecutionFailed: return "execution_failed";
        case FilterReason::TooShort: return "too_short";
        case FilterReason::VisualizationRelated: return "visualization_related";
        case FilterReason::Unparseable: return "unparseable";
    }
    return "ok";
}

std::set<std::string> FilterConfig::default_visualization_modules() {
    return {"matplotlib", "pylab",   "seaborn", "plotly",  "bokeh", "altair",   "pygal",   "ggplot",
            "pygame",     "tkinter", "Tkinter", "turtle",  "PyQt4", "PyQt5",    "PyQt6",   "PySide",
            "PySide2",    "PySide6", "wx",      "kivy",    "pyglet", "graphviz", "mayavi", "vpython",
            "dash",       "streamlit", "gradio", "folium", "holoviews"};
}

std::optional<RawRecord> parse_corpus_line(std::string_view line) {
    json row = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (!row.is_object()) return std::nullopt;
    const auto id = row.find("id");
    const auto source = row.find("source");
    if (id == row.end() || !id->is_string() || id->get_ref<const std::string&>().empty()) return std::nullopt;
    if (source == row.end() || !source->is_string()) return std::nullopt;
    std::string origin;
    if (const auto o = row.find("origin"); o != row.end()) {
        if (!o->is_string()) return std::nullopt;
        origin = o->get<std::string>();
    }
    RawRecord record;
    record.snippet = CodeSnippet::make(id->get<std::string>(), source->get<std::string>(), std::move(origin));
    if (const auto inputs = row.find("inputs"); inputs != row.end() && !inputs->is_null()) {
        if (!inputs->is_array()) return std::nullopt;
        for (const json& item : *inputs) {
            if (!item.is_object() || !item.contains("kind") || !item["kind"].is_string()) return std::nullopt;
            const std::string kind = item["kind"].get<std::string>();
            const json value = item.value("value", json());
            if (kind == "none") {
                record.inputs.push_back(InputSpec::none());
            } else if (kind == "stdin" && value.is_string()) {
                record.inputs.push_back(InputSpec::from_stdin(value.get<std::string>()));
            } else if (kind == "function" && value.is_string() && !value.get_ref<const std::string&>().empty()) {
                record.inputs.push_back(InputSpec::from_call(value.get<std::string>()));
            } else {
                return std::nullopt;
            }
        }
    }
    return record;
}

std::string format_corpus_line(const RawRecord& record) {
    json inputs = json::array();
    for (const InputSpec& in : record.inputs) {
        json item{{"kind", to_string(in.kind)}};
        if (in.kind == InputKind::Stdin) item["value"] = in.stdin_text;
        if (in.kind == InputKind::FunctionInput) item["value"] = in.call_expression;
        inputs.push_back(std::move(item));
    }
    json row{{"id", record.snippet.id},
             {"source", record.snippet.source_text},
             {"inputs", std::move(inputs)},
             {"origin", record.snippet.origin}};
    return row.dump(-1, ' ', false, json::error_handler_t::replace);
}

CorpusReader::CorpusReader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot read corpus " + path.string());
}

std::optional<RawRecord> CorpusReader::next() {
    std::string line;
    while (std::getline(in_, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        std::optional<RawRecord> record = parse_corpus_line(line);
        if (!record || !seen_ids_.insert(record->snippet.id).second) {
            ++skipped_;
            continue;
        }
        ++yielded_;
        return record;
    }
    if (in_.bad()) throw IoError("error reading corpus " + path_.string());
    if (yielded_ == 0) throw EmptyCorpusError("no parseable records in " + path_.string());
    return std::nullopt;
}

LoadedCorpus load_corpus(const std::filesystem::path& path) {
    CorpusReader reader(path);
    LoadedCorpus corpus;
    while (std::optional<RawRecord> record = reader.next()) corpus.records.push_back(std::move(*record));
    corpus.skipped = reader.skipped();
    return corpus;
}

bool imports_any(std::string_view source, const std::set<std::string>& modules) {
    using python::TokenKind;
    const std::vector<python::Token> tokens = python::tokenize(source);
    auto text = [&](std::size_t i) { return tokens[i].text(source); };
    auto is_name = [&](std::size_t i, std::string_view w) {
        return i < tokens.size() && tokens[i].kind == TokenKind::Name && text(i) == w;
    };
    auto denied = [&](std::size_t i) {
        return i < tokens.size() && tokens[i].kind == TokenKind::Name && modules.count(std::string(text(i))) > 0;
    };
    bool statement_start = true;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const python::Token& t = tokens[i];
        if (t.kind == TokenKind::Newline || t.kind == TokenKind::Indent || t.kind == TokenKind::Dedent ||
            (t.kind == TokenKind::Op && (text(i) == ";" || text(i) == ":"))) {
            statement_start = true;
            continue;
        }
        if (statement_start && is_name(i, "from") && denied(i + 1)) return true;
        if (statement_start && is_name(i, "import")) {
            // import a.b as c, d
            std::size_t j = i + 1;
            while (j < tokens.size() && tokens[j].kind != TokenKind::Newline && !(tokens[j].kind == TokenKind::Op && text(j) == ";")) {
                const bool item_start = j == i + 1 || (tokens[j - 1].kind == TokenKind::Op && text(j - 1) == ",");
                if (item_start && denied(j)) return true;
                ++j;
            }
        }
        statement_start = false;
    }
    return false;
}

FilterVerdict basic_filter(const RawRecord& record, const ExecutionOutcome& probe, const FilterConfig& config) {
    const CodeSnippet& s = record.snippet;
    if (s.line_count < config.min_lines || s.char_count < config.min_chars) {
        return {false, FilterReason::TooShort};
    }
    if (!probe.clean()) return {false, FilterReason::ExecutionFailed};
    try {
        if (imports_any(s.source_text, config.visualization_modules)) {
            return {false, FilterReason::VisualizationRelated};
        }
        python::SyntaxTree::parse(s.source_text);
    } catch (const ParseError&) {
        return {false, FilterReason::Unparseable};
    }
    return {true, FilterReason::Ok};
}

ExecutableUnit materialize_input(const CodeSnippet& snippet, const InputSpec& input) {
    switch (input.kind) {
        case InputKind::NoInput:
            return {snippet.source_text, ""};
        case InputKind::Stdin:
            return {snippet.source_text, input.stdin_text};
        case InputKind::FunctionInput:
            break;
    }
    try {
        python::parse_expression(input.call_expression);
    } catch (const ParseError& e) {
        throw MaterializationError("call expression '" + input.call_expression + "' is not a valid expression: " +
                                   e.what());
    }
    std::string source = snippet.source_text;
    if (!source.empty() && source.back() != '\n') source += '\n';
    source += "print(" + input.call_expression + ")\n";
    return {std::move(source), ""};
}

}  // namespace codeforge
