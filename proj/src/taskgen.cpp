#include "codeforge/taskgen.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>

#include "codeforge/errors.hpp"
#include "codeforge/parallel.hpp"
#include "codeforge/python_syntax.hpp"
#include "codeforge/random.hpp"

namespace codeforge {

namespace {

constexpr std::string_view kPlaceholderPrefix = "MASKED_LINE_";

// Physical lines split on '\n'; the pieces never contain the newline.
struct Lines {
    std::vector<std::string_view> items;
    bool trailing_newline = false;
};

Lines split_physical(std::string_view text) {
    Lines out;
    if (text.empty()) return out;
    std::size_t start = 0;
    while (start < text.size()) {
        const std::size_t nl = text.find('\n', start);
        if (nl == std::string_view::npos) {
            out.items.push_back(text.substr(start));
            return out;
        }
        out.items.push_back(text.substr(start, nl - start));
        start = nl + 1;
    }
    out.trailing_newline = true;
    return out;
}

std::string join_physical(const std::vector<std::string>& lines, bool trailing_newline) {
    std::string out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        out += lines[i];
        if (i + 1 < lines.size() || trailing_newline) out += '\n';
    }
    return out;
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\f' || c == '\r' || c == '\v'; }

std::string_view leading_whitespace(std::string_view line) {
    std::size_t i = 0;
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\f')) ++i;
    return line.substr(0, i);
}

bool is_blank(std::string_view line) {
    return std::all_of(line.begin(), line.end(), is_space);
}

// Id of a line that is exactly an (indented) placeholder.
std::optional<std::size_t> placeholder_id(std::string_view line) {
    std::string_view rest = line.substr(leading_whitespace(line).size());
    while (!rest.empty() && is_space(rest.back())) rest.remove_suffix(1);
    if (rest.substr(0, kPlaceholderPrefix.size()) != kPlaceholderPrefix) return std::nullopt;
    rest.remove_prefix(kPlaceholderPrefix.size());
    if (rest.empty() || (rest.size() > 1 && rest[0] == '0')) return std::nullopt;
    std::size_t id = 0;
    const auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), id);
    if (ec != std::errc{} || ptr != rest.data() + rest.size()) return std::nullopt;
    return id;
}

struct Eligibility {
    std::vector<std::size_t> lines;  // 0-based eligible line indices
    std::size_t non_blank = 0;
};

Eligibility eligible_lines(std::string_view source) {
    Eligibility out;
    const Lines lines = split_physical(source);
    for (std::string_view line : lines.items) {
        if (!is_blank(line)) ++out.non_blank;
    }
    std::vector<bool> single;
    try {
        single = python::single_line_statements(source, python::tokenize(source));
    } catch (const ParseError&) {
        return out;
    }
    for (std::size_t i = 0; i < lines.items.size(); ++i) {
        if (i + 1 < single.size() && single[i + 1] && !is_blank(lines.items[i])) out.lines.push_back(i);
    }
    return out;
}

std::size_t cap_for(const Eligibility& e) {
    const auto by_share = static_cast<std::size_t>(std::floor(0.3 * static_cast<double>(e.non_blank)));
    return std::min({std::size_t{3}, by_share, e.lines.size()});
}

// The two template bodies. Editing either one changes the template hash;
// bump the version with it.
constexpr std::string_view kTemplateVersion = "codeforge-prompt/1";

constexpr std::string_view kForwardTemplate = R"(You are given a Python script that lives in a small project. The script is run once in a sandbox. Predict exactly what the run writes to standard output and to standard error.

## Project layout
{{project_tree}}

## Run command
The script is stored at `{{snippet_path}}`. It is launched from the directory that contains `project/` with:
{{run_command}}

## Date and time of the run
{{timestamp}}

## Code
{{code}}

## Input
{{inputs}}

## Answer format
Reply with the two fenced blocks below. Put only the predicted text inside each block and leave a block empty when nothing is written to that stream. If the run fails, standard error holds the traceback exactly as the interpreter prints it.

```answer_stdout
<predicted standard output>
```

```answer_stderr
<predicted standard error>
```
)";

constexpr std::string_view kBackwardTemplate = R"(You are given a Python script that lives in a small project. Some of its lines were replaced by placeholder lines. Recover every hidden line so that running the completed script in a sandbox writes exactly the expected output shown below.

## Project layout
{{project_tree}}

## Run command
The script is stored at `{{snippet_path}}`. It is launched from the directory that contains `project/` with:
{{run_command}}

## Date and time of the run
{{timestamp}}

## Code with hidden lines
{{code}}

## Input
{{inputs}}

## Expected output
Standard output:
{{expected_stdout}}

Standard error:
{{expected_stderr}}

## Answer format
Reply with one fenced block per placeholder, each holding the single line that replaces it. Indentation may be omitted; the placeholder's indentation is used then.

{{answer_blocks}})";

std::string hex(const unsigned char* data, std::size_t n) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        out += kDigits[data[i] >> 4];
        out += kDigits[data[i] & 0xF];
    }
    return out;
}

std::size_t longest_backtick_run(std::string_view text) {
    std::size_t best = 0;
    std::size_t run = 0;
    for (char c : text) {
        run = c == '`' ? run + 1 : 0;
        best = std::max(best, run);
    }
    return best;
}

std::string answer_blocks(const std::vector<MaskEntry>& mask_map) {
    std::string out;
    for (const MaskEntry& m : mask_map) {
        if (!out.empty()) out += '\n';
        const std::string token = placeholder_token(m.mask_id);
        out += "```answer_" + token + "\n<line replacing " + token + ">\n```\n";
    }
    return out;
}

TaskInstance base_task(const AugmentedSample& sample, const GroundTruth& gt, const EnvironmentInfo& env) {
    TaskInstance task;
    task.input = sample.inputs.empty() ? InputSpec::none() : sample.inputs.front();
    task.inputs_shown = render_inputs(task.input);
    task.env = env;
    task.ground_truth = gt;
    task.template_version = prompt_template().version;
    task.template_hash = prompt_template().hash;
    return task;
}

}  // namespace

std::string_view to_string(Direction direction) {
    return direction == Direction::Forward ? "forward" : "backward";
}

Direction direction_from_string(std::string_view text) {
    if (text == "forward") return Direction::Forward;
    if (text == "backward") return Direction::Backward;
    throw ConfigError("unknown task direction '" + std::string(text) + "'");
}

std::string placeholder_token(std::size_t mask_id) {
    return std::string(kPlaceholderPrefix) + std::to_string(mask_id);
}

std::size_t max_mask_count(std::string_view source) {
    if (source.find(kPlaceholderPrefix) != std::string_view::npos) return 0;
    return cap_for(eligible_lines(source));
}

MaskedSource mask_lines(const CodeSnippet& snippet, std::size_t count, std::uint64_t rng_seed) {
    const std::string& source = snippet.source_text;
    if (source.find(kPlaceholderPrefix) != std::string::npos) {
        throw MaskingError("snippet " + snippet.id + " already contains a placeholder token");
    }
    const Eligibility eligible = eligible_lines(source);
    if (eligible.lines.empty()) throw MaskingError("snippet " + snippet.id + " has no maskable lines");
    const std::size_t cap = cap_for(eligible);
    if (count < 1 || count > cap) {
        throw MaskingError("mask count " + std::to_string(count) + " outside [1, " + std::to_string(cap) +
                           "] for snippet " + snippet.id);
    }
    Rng rng(rng_seed);
    const std::vector<std::size_t> picks = rng.sample_indices(eligible.lines.size(), count);

    const Lines lines = split_physical(source);
    std::vector<std::string> out(lines.items.begin(), lines.items.end());
    MaskedSource masked;
    for (std::size_t id = 0; id < picks.size(); ++id) {
        const std::size_t index = eligible.lines[picks[id]];
        masked.mask_map.push_back({id, std::string(lines.items[index]), index});
        out[index] = std::string(leading_whitespace(lines.items[index])) + placeholder_token(id);
    }
    masked.text = join_physical(out, lines.trailing_newline);
    return masked;
}

std::string fill_placeholders(std::string_view masked, const std::map<std::size_t, std::string>& fills) {
    const Lines lines = split_physical(masked);
    std::vector<std::string> out;
    out.reserve(lines.items.size());
    for (std::string_view line : lines.items) {
        const auto id = placeholder_id(line);
        if (!id) {
            out.emplace_back(line);
            continue;
        }
        const auto it = fills.find(*id);
        if (it == fills.end()) throw MaskingError("no fill for " + placeholder_token(*id));
        std::string_view fill = it->second;
        if (!fill.empty() && fill.back() == '\n') fill.remove_suffix(1);
        const bool keep_as_is = !fill.empty() && (fill[0] == ' ' || fill[0] == '\t');
        const std::string indent(leading_whitespace(line));
        std::size_t start = 0;
        for (;;) {
            const std::size_t nl = fill.find('\n', start);
            const std::string_view piece = fill.substr(start, nl == std::string_view::npos ? nl : nl - start);
            out.push_back(keep_as_is ? std::string(piece) : indent + std::string(piece));
            if (nl == std::string_view::npos) break;
            start = nl + 1;
        }
    }
    return join_physical(out, lines.trailing_newline);
}

std::string unmask(std::string_view masked, const std::vector<MaskEntry>& mask_map) {
    const Lines lines = split_physical(masked);
    std::vector<std::string> out(lines.items.begin(), lines.items.end());
    for (const MaskEntry& m : mask_map) {
        if (m.line_index >= out.size() || placeholder_id(out[m.line_index]) != m.mask_id) {
            throw MaskingError("line " + std::to_string(m.line_index) + " does not hold " +
                               placeholder_token(m.mask_id));
        }
        out[m.line_index] = m.original_line;
    }
    return join_physical(out, lines.trailing_newline);
}

std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 digest failed");
    }
    return hex(digest, length);
}

const PromptTemplate& prompt_template() {
    static const PromptTemplate tmpl = [] {
        PromptTemplate t{std::string(kTemplateVersion), std::string(kForwardTemplate),
                         std::string(kBackwardTemplate), {}};
        std::string material = t.version;
        material += '\0';
        material += t.forward;
        material += '\0';
        material += t.backward;
        t.hash = sha256_hex(material);
        return t;
    }();
    return tmpl;
}

std::string render_template(std::string_view text, const std::map<std::string, std::string>& vars) {
    std::string out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const std::size_t open = text.find("{{", pos);
        if (open == std::string_view::npos) {
            out.append(text.substr(pos));
            break;
        }
        out.append(text.substr(pos, open - pos));
        const std::size_t close = text.find("}}", open + 2);
        if (close == std::string_view::npos) throw RenderError("unterminated template variable");
        const std::string name(text.substr(open + 2, close - open - 2));
        const auto it = vars.find(name);
        if (it == vars.end()) throw RenderError("template variable not provided: " + name);
        out += it->second;
        pos = close + 2;
    }
    return out;
}

std::string fenced(std::string_view info, std::string_view body) {
    const std::string fence(std::max<std::size_t>(3, longest_backtick_run(body) + 1), '`');
    std::string out = fence + std::string(info) + "\n";
    out.append(body);
    if (!body.empty() && body.back() != '\n') out += '\n';
    out += fence;
    return out;
}

std::string render_inputs(const InputSpec& input) {
    switch (input.kind) {
        case InputKind::NoInput:
            return "The script receives no input.";
        case InputKind::Stdin:
            return "Standard input receives exactly this text:\n" + fenced("text", input.stdin_text);
        case InputKind::FunctionInput:
            return "After the code above, the run executes this statement:\n" +
                   fenced("python", "print(" + input.call_expression + ")");
    }
    return {};
}

std::string render_prompt(const TaskInstance& task) {
    std::map<std::string, std::string> vars{
        {"project_tree", fenced("text", task.env.project_tree)},
        {"snippet_path", task.env.snippet_path},
        {"run_command", fenced("sh", task.env.run_command)},
        {"timestamp", task.env.timestamp},
        {"code", fenced("python", task.shown_code)},
        {"inputs", task.inputs_shown},
    };
    for (const auto& [name, value] : vars) {
        if (value.empty()) throw RenderError("task field is empty: " + name);
    }
    if (task.direction == Direction::Forward) return render_template(prompt_template().forward, vars);
    if (task.mask_map.empty()) throw RenderError("backward task has no masked lines");
    vars["expected_stdout"] = fenced("text", task.ground_truth.gt_stdout);
    vars["expected_stderr"] = fenced("text", task.ground_truth.gt_stderr);
    vars["answer_blocks"] = answer_blocks(task.mask_map);
    return render_template(prompt_template().backward, vars);
}

TaskInstance build_forward_task(const AugmentedSample& sample, const GroundTruth& gt, const EnvironmentInfo& env) {
    TaskInstance task = base_task(sample, gt, env);
    task.task_id = sample.snippet.id + ":fwd";
    task.direction = Direction::Forward;
    task.shown_code = sample.snippet.source_text;
    task.prompt_text = render_prompt(task);
    return task;
}

TaskInstance build_backward_task(const AugmentedSample& sample, const GroundTruth& gt, const EnvironmentInfo& env,
                                 std::size_t count, std::uint64_t rng_seed) {
    MaskedSource masked = mask_lines(sample.snippet, count, rng_seed);
    TaskInstance task = base_task(sample, gt, env);
    task.task_id = sample.snippet.id + ":bwd";
    task.direction = Direction::Backward;
    task.shown_code = std::move(masked.text);
    task.mask_map = std::move(masked.mask_map);
    task.prompt_text = render_prompt(task);
    return task;
}

TaskMix TaskMix::parse(std::string_view text) {
    TaskMix mix{0.0, 0.0};
    bool seen_forward = false;
    bool seen_backward = false;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t comma = text.find(',', start);
        const std::string_view item = text.substr(start, comma == std::string_view::npos ? comma : comma - start);
        const std::size_t eq = item.find('=');
        if (eq == std::string_view::npos) throw ConfigError("mix entry needs name=weight: " + std::string(item));
        const std::string_view name = item.substr(0, eq);
        const std::string value(item.substr(eq + 1));
        double weight = 0.0;
        std::size_t used = 0;
        try {
            weight = std::stod(value, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != value.size()) throw ConfigError("bad mix weight: " + std::string(item));
        if (name == "forward" && !seen_forward) {
            mix.forward = weight;
            seen_forward = true;
        } else if (name == "backward" && !seen_backward) {
            mix.backward = weight;
            seen_backward = true;
        } else {
            throw ConfigError("unknown or repeated mix entry: " + std::string(name));
        }
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    mix.validate();
    return mix;
}

void TaskMix::validate() const {
    if (!(forward >= 0.0) || !(backward >= 0.0) || !std::isfinite(forward) || !std::isfinite(backward)) {
        throw ConfigError("mix weights must be finite and non-negative");
    }
    if (forward + backward <= 0.0) throw ConfigError("mix weights must not both be zero");
}

std::string TaskMix::format() const {
    auto num = [](double v) {
        char buf[32];
        const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
        return std::string(buf, ptr);
    };
    return "forward=" + num(forward) + ",backward=" + num(backward);
}

TaskInstance generate_task(const PreparedSample& prepared, const TaskMix& mix, std::uint64_t seed, bool* fell_back) {
    const AugmentedSample& sample = prepared.sample;
    Rng rng(derive_seed(seed, "tasks:" + sample.snippet.id));
    const bool backward = rng.bernoulli(mix.backward / (mix.forward + mix.backward));
    if (fell_back) *fell_back = false;
    if (backward) {
        const std::size_t cap = max_mask_count(sample.snippet.source_text);
        if (cap >= 1) {
            const auto count = static_cast<std::size_t>(rng.between(1, static_cast<std::int64_t>(cap)));
            return build_backward_task(sample, prepared.ground_truth(), prepared.env, count, rng.next());
        }
        if (fell_back) *fell_back = true;
    }
    return build_forward_task(sample, prepared.ground_truth(), prepared.env);
}

std::vector<TaskInstance> generate_tasks(const std::vector<PreparedSample>& samples, const TaskMix& mix,
                                         std::uint64_t seed, TaskGenStats* stats, std::size_t threads) {
    mix.validate();
    std::vector<TaskInstance> tasks(samples.size());
    std::vector<char> fell_back(samples.size(), 0);
    parallel_for(samples.size(), threads, [&](std::size_t i) {
        bool fb = false;
        tasks[i] = generate_task(samples[i], mix, seed, &fb);
        fell_back[i] = fb;
    });
    if (stats) {
        *stats = {};
        for (std::size_t i = 0; i < tasks.size(); ++i) {
            if (tasks[i].direction == Direction::Forward) ++stats->forward;
            else ++stats->backward;
            if (fell_back[i]) ++stats->backward_fallbacks;
        }
    }
    return tasks;
}

}  // namespace codeforge
