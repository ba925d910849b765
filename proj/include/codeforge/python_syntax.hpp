#pragma once

// Lossless tokenizer and concrete syntax tree for the snippet language
// (Python 3.10 grammar). Tokens carry byte offsets into the source they were
// produced from; everything between two tokens (whitespace, comments, blank
// lines, line continuations) is trivia and is reproduced untouched by any
// rendering that works on offsets.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "codeforge/errors.hpp"

namespace codeforge::python {

enum class TokenKind { Name, Number, String, Op, Newline, Indent, Dedent, EndMarker };

struct Token {
    TokenKind kind;
    std::size_t offset;  // byte offset into the source
    std::size_t length;  // 0 for Indent/Dedent/EndMarker and synthesized newlines
    std::size_t line;    // 1-based physical line of the first byte
    std::size_t column;  // 0-based byte column

    std::string_view text(std::string_view source) const { return source.substr(offset, length); }
    std::size_t end() const { return offset + length; }
};

/// Throws ParseError on malformed input (unterminated strings, unbalanced
/// brackets, inconsistent dedent, stray characters).
std::vector<Token> tokenize(std::string_view source);

bool is_keyword(std::string_view word);

enum class NodeKind {
    Module,
    Block,
    // statements
    ExprStatement,
    Assign,
    AnnAssign,
    AugAssign,
    Return,
    Raise,
    Pass,
    Break,
    Continue,
    Global,
    Nonlocal,
    Del,
    Assert,
    Import,
    ImportFrom,
    If,
    While,
    For,
    With,
    Try,
    FunctionDef,
    ClassDef,
    Decorator,
    Match,
    Case,
    Pattern,
    Condition,  // test of an if / elif / while header
    Parameters,
    // expressions
    Ternary,
    Lambda,
    NamedExpr,
    BoolOp,
    Not,
    Compare,
    BinOp,
    UnaryOp,
    Power,
    Await,
    Call,
    Subscript,
    Attribute,
    Name,
    Number,
    String,
    Constant,
    Ellipsis,
    Paren,
    Tuple,
    List,
    Dict,
    Set,
    ListComp,
    SetComp,
    DictComp,
    GenExp,
    Comprehension,
    Starred,
    Slice,
    Keyword,
    Yield,
};

std::string_view node_kind_name(NodeKind kind);

struct Node {
    NodeKind kind;
    std::size_t begin = 0;  // first token index
    std::size_t end = 0;    // one past the last token index
    /// Operator / keyword token indices that belong to this node itself:
    /// comparison operators, boolean connectives, the unary or augmented
    /// assignment operator, the `not` keyword.
    std::vector<std::size_t> ops;
    std::vector<Node> children;
};

/// A parsed module. Owns its source; token offsets index into it.
class SyntaxTree {
public:
    static SyntaxTree parse(std::string source);

    const std::string& source() const noexcept { return source_; }
    const std::vector<Token>& tokens() const noexcept { return tokens_; }
    const Node& root() const noexcept { return root_; }

    std::string_view token_text(std::size_t index) const { return tokens_[index].text(source_); }
    /// Byte span [first, last) covered by the node's tokens (no outer trivia).
    std::pair<std::size_t, std::size_t> byte_span(const Node& node) const;
    std::string_view node_text(const Node& node) const;

private:
    std::string source_;
    std::vector<Token> tokens_;
    Node root_;
};

/// Parses a single expression (as accepted inside parentheses). Throws
/// ParseError if the text is not exactly one expression.
void parse_expression(std::string_view text);

/// Returns the error for unparseable module text, or nullopt when it parses.
std::optional<ParseError> check_module(std::string_view source);

/// True iff the physical line `line` (1-based) holds exactly one complete
/// logical line: it starts a statement and that statement ends on it.
std::vector<bool> single_line_statements(std::string_view source, const std::vector<Token>& tokens);

}  // namespace codeforge::python
