#include <algorithm>
#include <array>
#include <cctype>
#include <string>

#include "codeforge/python_syntax.hpp"

namespace codeforge::python {
namespace {

constexpr std::array<std::string_view, 35> kKeywords = {
    "False", "None",   "True",    "and",      "as",     "assert", "async",  "await",    "break",
    "class", "continue", "def",   "del",      "elif",   "else",   "except", "finally",  "for",
    "from",  "global", "if",      "import",   "in",     "is",     "lambda", "nonlocal", "not",
    "or",    "pass",   "raise",   "return",   "try",    "while",  "with",   "yield"};

// Longest operators first so a prefix scan finds the longest match.
constexpr std::array<std::string_view, 49> kOperators = {
    "**=", "//=", ">>=", "<<=", "...", "->", ":=", "**", "//", ">>", "<<", "<=", ">=",
    "==",  "!=",  "+=",  "-=",  "*=",  "/=", "%=", "&=", "|=", "^=", "@=", "+",  "-",
    "*",   "/",   "%",   "@",   "&",   "|",  "^",  "~",  "<",  ">",  "(",  ")",  "[",
    "]",   "{",   "}",   ",",   ":",   ";",  ".",  "=",  "!",  "`"};

bool is_name_start(unsigned char c) { return std::isalpha(c) || c == '_' || c >= 0x80; }
bool is_name_char(unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; }

bool is_string_prefix(std::string_view word) {
    std::string lower;
    for (char c : word) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    return lower == "r" || lower == "u" || lower == "b" || lower == "f" || lower == "br" || lower == "rb" ||
           lower == "fr" || lower == "rf";
}

class Tokenizer {
public:
    explicit Tokenizer(std::string_view src) : src_(src) {}

    std::vector<Token> run() {
        indents_.push_back(0);
        at_line_start_ = true;
        while (pos_ < src_.size()) {
            if (at_line_start_ && brackets_.empty()) {
                if (handle_line_start()) continue;
            }
            const unsigned char c = static_cast<unsigned char>(src_[pos_]);
            if (c == ' ' || c == '\t' || c == '\f' || c == '\r') {
                ++pos_;
                continue;
            }
            if (c == '#') {
                while (pos_ < src_.size() && src_[pos_] != '\n') ++pos_;
                continue;
            }
            if (c == '\\') {
                std::size_t next = pos_ + 1;
                if (next < src_.size() && src_[next] == '\r') ++next;
                if (next < src_.size() && src_[next] == '\n') {
                    pos_ = next + 1;
                    new_line();
                    continue;
                }
                if (next >= src_.size()) fail("unexpected EOF after line continuation", pos_);
                fail("unexpected character after line continuation character", pos_);
            }
            if (c == '\n') {
                if (brackets_.empty() && line_has_tokens_) {
                    emit(TokenKind::Newline, pos_, 1);
                    line_has_tokens_ = false;
                }
                ++pos_;
                new_line();
                at_line_start_ = brackets_.empty();
                continue;
            }
            if (is_name_start(c)) {
                lex_name_or_string();
                continue;
            }
            if (std::isdigit(c) || (c == '.' && pos_ + 1 < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
                lex_number();
                continue;
            }
            if (c == '"' || c == '\'') {
                lex_string(pos_, pos_);
                continue;
            }
            lex_operator();
        }
        if (!brackets_.empty()) {
            const Token& open = tokens_[brackets_.back()];
            throw ParseError("'" + std::string(open.text(src_)) + "' was never closed", open.line, open.column);
        }
        if (line_has_tokens_) emit(TokenKind::Newline, src_.size(), 0);
        while (indents_.size() > 1) {
            indents_.pop_back();
            emit(TokenKind::Dedent, src_.size(), 0);
        }
        emit(TokenKind::EndMarker, src_.size(), 0);
        return std::move(tokens_);
    }

private:
    // Measures indentation of the line starting at pos_. Blank and
    // comment-only lines are skipped entirely. Returns true if it consumed
    // the line (caller should loop again).
    bool handle_line_start() {
        std::size_t p = pos_;
        std::size_t col = 0;
        while (p < src_.size()) {
            const char c = src_[p];
            if (c == ' ') {
                ++col;
            } else if (c == '\t') {
                col = (col / 8 + 1) * 8;
            } else if (c == '\f') {
                col = 0;
            } else {
                break;
            }
            ++p;
        }
        std::size_t q = p;
        while (q < src_.size() && src_[q] == '\r') ++q;
        if (q >= src_.size() || src_[q] == '\n' || src_[q] == '#') {
            // blank or comment-only line: no indentation semantics
            while (q < src_.size() && src_[q] != '\n') ++q;
            if (q < src_.size()) {
                pos_ = q + 1;
                new_line();
            } else {
                pos_ = q;
            }
            return true;
        }
        at_line_start_ = false;
        pos_ = p;
        if (col > indents_.back()) {
            indents_.push_back(col);
            emit(TokenKind::Indent, pos_, 0);
        } else {
            while (col < indents_.back()) {
                indents_.pop_back();
                emit(TokenKind::Dedent, pos_, 0);
            }
            if (col != indents_.back()) fail("unindent does not match any outer indentation level", pos_);
        }
        return false;
    }

    void lex_name_or_string() {
        const std::size_t start = pos_;
        while (pos_ < src_.size() && is_name_char(static_cast<unsigned char>(src_[pos_]))) ++pos_;
        const std::string_view word = src_.substr(start, pos_ - start);
        if (pos_ < src_.size() && (src_[pos_] == '"' || src_[pos_] == '\'') && is_string_prefix(word)) {
            lex_string(start, pos_);
            return;
        }
        emit(TokenKind::Name, start, pos_ - start);
    }

    void lex_string(std::size_t start, std::size_t quote_pos) {
        const char q = src_[quote_pos];
        const bool triple = quote_pos + 2 < src_.size() && src_[quote_pos + 1] == q && src_[quote_pos + 2] == q;
        const std::size_t start_line = line_;
        const std::size_t start_col = start - line_start_;
        std::size_t p = quote_pos + (triple ? 3 : 1);
        while (true) {
            if (p >= src_.size()) {
                throw ParseError(triple ? "unterminated triple-quoted string literal" : "unterminated string literal",
                                 start_line, start_col);
            }
            const char c = src_[p];
            if (c == '\\') {
                // Even in raw strings a backslash keeps the next quote from closing.
                std::size_t next = p + 1;
                if (next < src_.size() && src_[next] == '\r') ++next;
                if (next < src_.size() && src_[next] == '\n') {
                    p = next + 1;
                    new_line_at(p);
                    continue;
                }
                p += 2;
                continue;
            }
            if (c == '\n') {
                if (!triple) throw ParseError("unterminated string literal", start_line, start_col);
                ++p;
                new_line_at(p);
                continue;
            }
            if (c == q) {
                if (!triple) {
                    ++p;
                    break;
                }
                if (p + 2 < src_.size() && src_[p + 1] == q && src_[p + 2] == q) {
                    p += 3;
                    break;
                }
            }
            ++p;
        }
        Token t{TokenKind::String, start, p - start, start_line, start_col};
        tokens_.push_back(t);
        line_has_tokens_ = true;
        pos_ = p;
    }

    void lex_number() {
        const std::size_t start = pos_;
        auto digits = [&](auto pred) {
            while (pos_ < src_.size() && (pred(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) ++pos_;
        };
        auto is_dec = [](unsigned char c) { return std::isdigit(c) != 0; };
        if (src_[pos_] == '0' && pos_ + 1 < src_.size() && std::string_view("xXoObB").find(src_[pos_ + 1]) != std::string_view::npos) {
            const char base = static_cast<char>(std::tolower(static_cast<unsigned char>(src_[pos_ + 1])));
            pos_ += 2;
            if (base == 'x') digits([](unsigned char c) { return std::isxdigit(c) != 0; });
            if (base == 'o') digits([](unsigned char c) { return c >= '0' && c <= '7'; });
            if (base == 'b') digits([](unsigned char c) { return c == '0' || c == '1'; });
            if (pos_ == start + 2) fail("invalid " + std::string(1, base) + " literal", start);
        } else {
            digits(is_dec);
            if (pos_ < src_.size() && src_[pos_] == '.') {
                ++pos_;
                digits(is_dec);
            }
            if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
                std::size_t p = pos_ + 1;
                if (p < src_.size() && (src_[p] == '+' || src_[p] == '-')) ++p;
                if (p < src_.size() && std::isdigit(static_cast<unsigned char>(src_[p]))) {
                    pos_ = p;
                    digits(is_dec);
                }
            }
            if (pos_ < src_.size() && (src_[pos_] == 'j' || src_[pos_] == 'J')) ++pos_;
        }
        emit(TokenKind::Number, start, pos_ - start);
    }

    void lex_operator() {
        const std::string_view rest = src_.substr(pos_);
        for (std::string_view op : kOperators) {
            if (rest.substr(0, op.size()) == op) {
                if (op == "!" || op == "`") fail("invalid syntax", pos_);
                if (op == "(" || op == "[" || op == "{") {
                    brackets_.push_back(tokens_.size());
                } else if (op == ")" || op == "]" || op == "}") {
                    if (brackets_.empty()) fail("unmatched '" + std::string(op) + "'", pos_);
                    const char open = src_[tokens_[brackets_.back()].offset];
                    const char want = op == ")" ? '(' : op == "]" ? '[' : '{';
                    if (open != want) {
                        fail("closing parenthesis '" + std::string(op) + "' does not match opening parenthesis '" +
                                 std::string(1, open) + "'",
                             pos_);
                    }
                    brackets_.pop_back();
                }
                emit(TokenKind::Op, pos_, op.size());
                pos_ += op.size();
                return;
            }
        }
        fail("invalid character '" + std::string(1, src_[pos_]) + "'", pos_);
    }

    void emit(TokenKind kind, std::size_t offset, std::size_t length) {
        tokens_.push_back(Token{kind, offset, length, line_, offset >= line_start_ ? offset - line_start_ : 0});
        if (kind != TokenKind::Newline && kind != TokenKind::Indent && kind != TokenKind::Dedent) {
            line_has_tokens_ = true;
        }
    }

    void new_line() { new_line_at(pos_); }
    void new_line_at(std::size_t start_of_line) {
        ++line_;
        line_start_ = start_of_line;
    }

    [[noreturn]] void fail(const std::string& message, std::size_t offset) const {
        throw ParseError(message, line_, offset >= line_start_ ? offset - line_start_ : 0);
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    std::size_t line_ = 1;
    std::size_t line_start_ = 0;
    bool at_line_start_ = true;
    bool line_has_tokens_ = false;
    std::vector<std::size_t> indents_;
    std::vector<std::size_t> brackets_;  // indices of open bracket tokens
    std::vector<Token> tokens_;
};

}  // namespace

bool is_keyword(std::string_view word) {
    return std::find(kKeywords.begin(), kKeywords.end(), word) != kKeywords.end();
}

std::vector<Token> tokenize(std::string_view source) { return Tokenizer(source).run(); }

std::vector<bool> single_line_statements(std::string_view source, const std::vector<Token>& tokens) {
    std::size_t lines = 0;
    for (char c : source) lines += c == '\n';
    if (!source.empty() && source.back() != '\n') ++lines;
    std::vector<bool> result(lines + 1, false);
    bool at_statement_start = true;
    std::size_t start_line = 0;
    for (const Token& t : tokens) {
        switch (t.kind) {
            case TokenKind::Indent:
            case TokenKind::Dedent:
            case TokenKind::EndMarker:
                break;
            case TokenKind::Newline:
                if (!at_statement_start && t.line == start_line && start_line < result.size()) {
                    result[start_line] = true;
                }
                at_statement_start = true;
                break;
            default:
                if (at_statement_start) {
                    start_line = t.line;
                    at_statement_start = false;
                }
                break;
        }
    }
    return result;
}

}  // namespace codeforge::python
