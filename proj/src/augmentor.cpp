#include "codeforge/augmentor.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <map>

#include "codeforge/errors.hpp"
#include "codeforge/python_syntax.hpp"

namespace codeforge {

namespace {

using python::Node;
using python::NodeKind;
using python::SyntaxTree;
using python::Token;
using python::TokenKind;

constexpr std::array<std::string_view, 6> kLogicalErrors = {"IndexError", "ValueError",        "NameError",
                                                            "TypeError",  "KeyError", "ZeroDivisionError"};

std::string_view flip_operator(std::string_view op) {
    if (op == "==") return "!=";
    if (op == "!=") return "==";
    if (op == "<") return ">=";
    if (op == ">") return "<=";
    if (op == "<=") return ">";
    if (op == ">=") return "<";
    if (op == "+=") return "-=";
    if (op == "-=") return "+=";
    if (op == "*=") return "/=";
    if (op == "/=") return "*=";
    if (op == "and") return "or";
    if (op == "or") return "and";
    return {};
}

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

// Uniform digit in [lo, hi] other than `current`.
char pick_digit(char current, char lo, char hi, Rng& rng) {
    const bool inside = current >= lo && current <= hi;
    const auto choices = static_cast<std::uint64_t>(hi - lo + 1 - (inside ? 1 : 0));
    char d = static_cast<char>(lo + static_cast<char>(rng.below(choices)));
    if (inside && d >= current) ++d;
    return d;
}

Edit digit_edit(std::string_view target, std::size_t offset, char before, char after) {
    return Edit{EditKind::Digit, std::string(target), offset, std::string(1, before), std::string(1, after)};
}

void mutate_number(std::string_view literal, std::size_t base_offset, double prob, Rng& rng, std::string_view target,
                   std::vector<Edit>& edits) {
    std::size_t start = 0;
    char hi = '9';
    bool decimal_int = true;
    if (literal.size() >= 2 && literal[0] == '0' && std::string_view("xXoObB").find(literal[1]) != std::string_view::npos) {
        start = 2;
        decimal_int = false;
        const char p = static_cast<char>(std::tolower(static_cast<unsigned char>(literal[1])));
        hi = p == 'b' ? '1' : p == 'o' ? '7' : '9';
    } else if (literal.find_first_of(".eEjJ") != std::string_view::npos) {
        decimal_int = false;
    }
    std::size_t digit_count = 0;
    for (char c : literal.substr(start)) digit_count += std::isdigit(static_cast<unsigned char>(c)) != 0;
    // "00" style literals only stay valid while every digit is zero.
    if (decimal_int && digit_count > 1 && literal[0] == '0') return;
    bool first = true;
    for (std::size_t i = start; i < literal.size(); ++i) {
        const char c = literal[i];
        if (!std::isdigit(static_cast<unsigned char>(c)) || c > hi) continue;
        const bool no_zero = decimal_int && first && digit_count > 1;
        first = false;
        if (!rng.bernoulli(prob)) continue;
        const char lo = no_zero ? '1' : '0';
        const char next = pick_digit(c, lo, hi, rng);
        edits.push_back(digit_edit(target, base_offset + i, c, next));
    }
}

const Node* find_paren_operand(const Node& not_node) {
    if (not_node.children.size() != 1) return nullptr;
    const Node& operand = not_node.children.front();
    if (operand.kind != NodeKind::Paren || operand.end != not_node.end || operand.children.size() != 1) return nullptr;
    if (operand.children.front().kind == NodeKind::Yield) return nullptr;
    return &operand;
}

std::vector<Edit> condition_toggle(const SyntaxTree& tree, const Node& cond) {
    const std::string& src = tree.source();
    const Node& test = cond.children.front();
    if (test.kind == NodeKind::Not) {
        if (const Node* paren = find_paren_operand(test)) {
            if (tree.node_text(test).find('\n') == std::string_view::npos) {
                const Token& not_tok = tree.tokens()[test.ops.front()];
                const Token& lparen = tree.tokens()[paren->begin];
                const Token& rparen = tree.tokens()[paren->end - 1];
                return {Edit{EditKind::Condition, "source", not_tok.offset,
                             src.substr(not_tok.offset, lparen.end() - not_tok.offset), ""},
                        Edit{EditKind::Condition, "source", rparen.offset, ")", ""}};
            }
        }
    }
    const auto [begin, end] = tree.byte_span(cond);
    const bool glued = begin > 0 && is_word_char(src[begin - 1]);
    return {Edit{EditKind::Condition, "source", begin, "", glued ? " not (" : "not ("},
            Edit{EditKind::Condition, "source", end, "", ")"}};
}

void collect_sites(const SyntaxTree& tree, const Node& node, std::vector<std::vector<Edit>>& sites) {
    auto op_edit = [&](std::size_t token_index, std::string_view replacement) {
        const Token& t = tree.tokens()[token_index];
        sites.push_back({Edit{EditKind::Operator, "source", t.offset, std::string(tree.token_text(token_index)),
                              std::string(replacement)}});
    };
    switch (node.kind) {
        case NodeKind::Compare:
        case NodeKind::AugAssign:
        case NodeKind::BoolOp:
            for (std::size_t op : node.ops) {
                const std::string_view flipped = flip_operator(tree.token_text(op));
                if (!flipped.empty()) op_edit(op, flipped);
            }
            break;
        case NodeKind::UnaryOp: {
            const std::string_view op = tree.token_text(node.ops.front());
            if (op == "-") op_edit(node.ops.front(), "+");
            if (op == "+") op_edit(node.ops.front(), "-");
            break;
        }
        case NodeKind::Condition:
            sites.push_back(condition_toggle(tree, node));
            break;
        default:
            break;
    }
    for (const Node& child : node.children) collect_sites(tree, child, sites);
}

bool edit_less(const Edit& a, const Edit& b) {
    if (a.offset != b.offset) return a.offset < b.offset;
    return a.before.size() < b.before.size();
}

ExecutionOutcome run_checked(Executor& executor, const ExecutableUnit& unit, EnvironmentInfo& env) {
    ExecutionRun run = executor.run(unit);
    if (run.outcome.status == ExecutionStatus::SpawnFailed) {
        throw InfrastructureError("sandbox could not execute snippet: " + run.outcome.stderr_text);
    }
    env = std::move(run.env);
    return std::move(run.outcome);
}

std::string input_target(std::size_t k) { return "input:" + std::to_string(k); }

}  // namespace

std::string_view to_string(ErrorClass c) {
    switch (c) {
        case ErrorClass::None: return "none";
        case ErrorClass::Syntax: return "syntax";
        case ErrorClass::Logical: return "logical";
        case ErrorClass::Unsupported: return "unsupported";
    }
    return "unsupported";
}

ErrorClass error_class_from_string(std::string_view text) {
    if (text == "none") return ErrorClass::None;
    if (text == "syntax") return ErrorClass::Syntax;
    if (text == "logical") return ErrorClass::Logical;
    if (text == "unsupported") return ErrorClass::Unsupported;
    throw ConfigError("unknown error class '" + std::string(text) + "'");
}

ErrorClass classify_error(std::string_view stderr_text, bool exit_clean) {
    const bool empty = stderr_text.find_first_not_of(" \t\r\n") == std::string_view::npos;
    if (empty) return exit_clean ? ErrorClass::None : ErrorClass::Unsupported;
    const std::string name = final_error_name(stderr_text);
    if (name == "SyntaxError") return ErrorClass::Syntax;
    if (std::find(kLogicalErrors.begin(), kLogicalErrors.end(), name) != kLogicalErrors.end()) {
        return ErrorClass::Logical;
    }
    return ErrorClass::Unsupported;
}

void AugmentationPolicy::validate() const {
    if (!digit_enabled && !logical_enabled) throw ConfigError("augmentation needs digit or logical mutation enabled");
    if (!(digit_prob >= 0.0 && digit_prob <= 1.0)) throw ConfigError("digit_prob must be in [0, 1]");
    if (!(syntax_break_prob >= 0.0 && syntax_break_prob <= 1.0)) {
        throw ConfigError("syntax_break_prob must be in [0, 1]");
    }
    if (allowed_error_classes.count(ErrorClass::Unsupported)) {
        throw ConfigError("unsupported errors cannot be allowed");
    }
}

std::string_view to_string(EditKind kind) {
    switch (kind) {
        case EditKind::Digit: return "digit";
        case EditKind::Operator: return "operator";
        case EditKind::Condition: return "condition";
        case EditKind::SyntaxBreak: return "syntax_break";
    }
    return "digit";
}

EditKind edit_kind_from_string(std::string_view text) {
    if (text == "digit") return EditKind::Digit;
    if (text == "operator") return EditKind::Operator;
    if (text == "condition") return EditKind::Condition;
    if (text == "syntax_break") return EditKind::SyntaxBreak;
    throw ConfigError("unknown edit kind '" + std::string(text) + "'");
}

std::string apply_edits(std::string_view parent, std::vector<Edit> edits) {
    std::stable_sort(edits.begin(), edits.end(), edit_less);
    std::string out;
    out.reserve(parent.size() + 16);
    std::size_t cursor = 0;
    for (const Edit& e : edits) {
        if (e.offset < cursor || e.offset + e.before.size() > parent.size()) {
            throw Error("edit at offset " + std::to_string(e.offset) + " overlaps or exceeds the parent");
        }
        if (parent.substr(e.offset, e.before.size()) != e.before) {
            throw Error("edit at offset " + std::to_string(e.offset) + " does not match the parent text");
        }
        out.append(parent.substr(cursor, e.offset - cursor));
        out += e.after;
        cursor = e.offset + e.before.size();
    }
    out.append(parent.substr(cursor));
    return out;
}

TextMutation augment_code_digits(std::string_view code, double prob, Rng& rng, std::string_view target) {
    TextMutation result;
    for (const Token& t : python::tokenize(code)) {
        if (t.kind == TokenKind::Number) mutate_number(t.text(code), t.offset, prob, rng, target, result.edits);
    }
    result.text = apply_edits(code, result.edits);
    return result;
}

TextMutation augment_text_digits(std::string_view text, double prob, Rng& rng, std::string_view target) {
    TextMutation result;
    std::size_t i = 0;
    while (i < text.size()) {
        if (!std::isdigit(static_cast<unsigned char>(text[i]))) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
        const bool isolated = (i == 0 || !is_word_char(text[i - 1])) && (j == text.size() || !is_word_char(text[j]));
        if (isolated) {
            for (std::size_t k = i; k < j; ++k) {
                if (rng.bernoulli(prob)) result.edits.push_back(digit_edit(target, k, text[k], pick_digit(text[k], '0', '9', rng)));
            }
        }
        i = j;
    }
    result.text = apply_edits(text, result.edits);
    return result;
}

TextMutation augment_digits(std::string_view code, const AugmentationPolicy& policy) {
    Rng rng(derive_seed(policy.rng_seed, "digits"));
    return augment_code_digits(code, policy.digit_prob, rng);
}

std::vector<std::vector<Edit>> logical_mutation_sites(const SyntaxTree& tree) {
    std::vector<std::vector<Edit>> sites;
    collect_sites(tree, tree.root(), sites);
    std::stable_sort(sites.begin(), sites.end(),
                     [](const auto& a, const auto& b) { return a.front().offset < b.front().offset; });
    return sites;
}

LogicalMutation augment_logical(const CodeSnippet& snippet, const AugmentationPolicy& policy, Rng& rng) {
    const SyntaxTree tree = SyntaxTree::parse(snippet.source_text);
    const auto sites = logical_mutation_sites(tree);
    LogicalMutation result;
    result.sites_available = sites.size();
    const std::size_t k = std::min(policy.max_logical_edits, sites.size());
    for (std::size_t idx : rng.sample_indices(sites.size(), k)) {
        result.edits.insert(result.edits.end(), sites[idx].begin(), sites[idx].end());
    }
    std::stable_sort(result.edits.begin(), result.edits.end(), edit_less);
    result.snippet = snippet;
    if (!result.edits.empty()) {
        result.snippet = CodeSnippet::make(snippet.id, apply_edits(snippet.source_text, result.edits), snippet.origin);
    }
    return result;
}

LogicalMutation augment_logical(const CodeSnippet& snippet, const AugmentationPolicy& policy) {
    Rng rng(derive_seed(policy.rng_seed, snippet.id));
    return augment_logical(snippet, policy, rng);
}

std::vector<Edit> syntax_break_sites(std::string_view source) {
    const std::vector<Token> tokens = python::tokenize(source);
    std::vector<Edit> sites;
    int depth = 0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const Token& t = tokens[i];
        if (t.kind != TokenKind::Op) continue;
        const std::string_view text = t.text(source);
        if (text == "(" || text == ")") {
            sites.push_back(Edit{EditKind::SyntaxBreak, "source", t.offset, std::string(text), ""});
        }
        if (text == "(" || text == "[" || text == "{") ++depth;
        if (text == ")" || text == "]" || text == "}") --depth;
        if (text == ":" && depth == 0 && i + 1 < tokens.size() && tokens[i + 1].kind == TokenKind::Newline) {
            sites.push_back(Edit{EditKind::SyntaxBreak, "source", t.offset, ":", ""});
        }
    }
    return sites;
}

RawRecord replay_edits(const RawRecord& parent, const std::vector<Edit>& edit_log) {
    std::map<std::string, std::vector<Edit>> by_target;
    for (const Edit& e : edit_log) by_target[e.target].push_back(e);
    RawRecord child = parent;
    for (auto& [target, edits] : by_target) {
        if (target == "source") {
            child.snippet = CodeSnippet::make(parent.snippet.id, apply_edits(parent.snippet.source_text, edits),
                                              parent.snippet.origin);
            continue;
        }
        std::size_t k = SIZE_MAX;
        if (target.rfind("input:", 0) == 0) k = std::stoul(target.substr(6));
        if (k >= child.inputs.size()) throw Error("edit targets unknown input '" + target + "'");
        InputSpec& in = child.inputs[k];
        std::string& text = in.kind == InputKind::Stdin ? in.stdin_text : in.call_expression;
        text = apply_edits(text, edits);
    }
    return child;
}

std::string_view to_string(RejectReason reason) {
    switch (reason) {
        case RejectReason::UnsupportedError: return "unsupported_error";
        case RejectReason::ResourceExceeded: return "resource_exceeded";
        case RejectReason::NoMutationSite: return "no_mutation_site";
    }
    return "unsupported_error";
}

ExecutableUnit PreparedSample::unit() const {
    return materialize_input(sample.snippet, sample.inputs.empty() ? InputSpec::none() : sample.inputs.front());
}

PrepareResult prepare_training_sample(const RawRecord& record, const AugmentationPolicy& policy, Executor& executor) {
    policy.validate();
    Rng rng(derive_seed(policy.rng_seed, record.snippet.id));
    const std::string& parent = record.snippet.source_text;
    std::vector<Edit> edits;
    PrepareResult result;

    if (policy.logical_enabled) {
        bool broke_syntax = false;
        if (policy.allowed_error_classes.count(ErrorClass::Syntax) && rng.bernoulli(policy.syntax_break_prob)) {
            const std::vector<Edit> candidates = syntax_break_sites(parent);
            if (!candidates.empty()) {
                edits.push_back(candidates[rng.below(candidates.size())]);
                broke_syntax = true;
            }
        }
        if (!broke_syntax) {
            LogicalMutation logical;
            try {
                logical = augment_logical(record.snippet, policy, rng);
            } catch (const ParseError&) {
                logical.sites_available = 0;
            }
            if (logical.sites_available == 0 && !policy.digit_enabled) {
                result.reason = RejectReason::NoMutationSite;
                return result;
            }
            edits.insert(edits.end(), logical.edits.begin(), logical.edits.end());
        }
    }

    std::vector<InputSpec> inputs = record.inputs;
    if (policy.digit_enabled) {
        try {
            const TextMutation digits = augment_code_digits(parent, policy.digit_prob, rng);
            edits.insert(edits.end(), digits.edits.begin(), digits.edits.end());
        } catch (const ParseError&) {
        }
        for (std::size_t k = 0; k < inputs.size(); ++k) {
            InputSpec& in = inputs[k];
            if (in.kind == InputKind::Stdin) {
                auto m = augment_text_digits(in.stdin_text, policy.digit_prob, rng, input_target(k));
                in.stdin_text = std::move(m.text);
                edits.insert(edits.end(), m.edits.begin(), m.edits.end());
            } else if (in.kind == InputKind::FunctionInput) {
                try {
                    auto m = augment_code_digits(in.call_expression, policy.digit_prob, rng, input_target(k));
                    in.call_expression = std::move(m.text);
                    edits.insert(edits.end(), m.edits.begin(), m.edits.end());
                } catch (const ParseError&) {
                }
            }
        }
    }

    std::vector<Edit> source_edits;
    for (const Edit& e : edits) {
        if (e.target == "source") source_edits.push_back(e);
    }
    std::stable_sort(edits.begin(), edits.end(), [](const Edit& a, const Edit& b) {
        if (a.target != b.target) return a.target == "source" || (b.target != "source" && a.target < b.target);
        return edit_less(a, b);
    });

    PreparedSample prepared;
    prepared.sample.parent_id = record.snippet.id;
    prepared.sample.snippet =
        CodeSnippet::make(record.snippet.id, apply_edits(parent, source_edits), record.snippet.origin);
    prepared.sample.inputs = std::move(inputs);
    prepared.sample.edit_log = std::move(edits);

    ExecutableUnit unit;
    try {
        unit = prepared.unit();
    } catch (const MaterializationError&) {
        result.reason = RejectReason::UnsupportedError;
        return result;
    }
    prepared.outcome = run_checked(executor, unit, prepared.env);
    if (prepared.outcome.resource_exceeded()) {
        result.reason = RejectReason::ResourceExceeded;
        return result;
    }
    prepared.error_class = classify_error(prepared.outcome.stderr_text, prepared.outcome.clean());
    if (prepared.error_class == ErrorClass::Unsupported || !policy.allowed_error_classes.count(prepared.error_class)) {
        result.reason = RejectReason::UnsupportedError;
        return result;
    }
    result.accepted = std::move(prepared);
    return result;
}

}  // namespace codeforge
