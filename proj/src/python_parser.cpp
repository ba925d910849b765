#include <string>
#include <utility>

#include "codeforge/python_syntax.hpp"

namespace codeforge::python {
namespace {

bool is_augassign(std::string_view op) {
    return op == "+=" || op == "-=" || op == "*=" || op == "/=" || op == "//=" || op == "%=" || op == "**=" ||
           op == ">>=" || op == "<<=" || op == "&=" || op == "^=" || op == "|=" || op == "@=";
}

bool is_comparison_op(std::string_view op) {
    return op == "==" || op == "!=" || op == "<" || op == ">" || op == "<=" || op == ">=";
}

class Parser {
public:
    Parser(std::string_view src, const std::vector<Token>& tokens) : src_(src), toks_(tokens) {}

    Node file() {
        Node module{NodeKind::Module, 0, 0, {}, {}};
        while (!at(TokenKind::EndMarker)) {
            if (at(TokenKind::Indent)) fail("unexpected indent");
            if (at(TokenKind::Dedent)) fail("unexpected unindent");
            statement(module.children);
        }
        module.end = pos_;
        return module;
    }

    Node expression_only() {
        // Allows the contents of a parenthesized expression, possibly spanning lines.
        Node e = star_named_expressions_as_tuple();
        if (at(TokenKind::Newline)) ++pos_;
        if (!at(TokenKind::EndMarker)) fail("invalid syntax");
        return e;
    }

private:
    // ---- token helpers ------------------------------------------------------

    const Token& cur() const { return toks_[pos_]; }
    const Token& peek(std::size_t ahead = 1) const {
        const std::size_t i = pos_ + ahead;
        return toks_[i < toks_.size() ? i : toks_.size() - 1];
    }
    std::string_view text(const Token& t) const { return t.text(src_); }
    bool at(TokenKind kind) const { return cur().kind == kind; }
    bool at_op(std::string_view op) const { return cur().kind == TokenKind::Op && text(cur()) == op; }
    bool at_kw(std::string_view kw) const { return cur().kind == TokenKind::Name && text(cur()) == kw; }
    bool peek_op(std::size_t ahead, std::string_view op) const {
        const Token& t = peek(ahead);
        return t.kind == TokenKind::Op && text(t) == op;
    }
    bool peek_kw(std::size_t ahead, std::string_view kw) const {
        const Token& t = peek(ahead);
        return t.kind == TokenKind::Name && text(t) == kw;
    }

    [[noreturn]] void fail(const std::string& message) const {
        const Token& t = cur();
        throw ParseError(message, t.line, t.column);
    }

    std::size_t expect_op(std::string_view op) {
        if (!at_op(op)) fail("expected '" + std::string(op) + "'");
        return pos_++;
    }
    std::size_t expect_kw(std::string_view kw) {
        if (!at_kw(kw)) fail("expected '" + std::string(kw) + "'");
        return pos_++;
    }
    void expect_name() {
        if (!at(TokenKind::Name) || is_keyword(text(cur()))) fail("expected name");
        ++pos_;
    }
    void expect_newline() {
        if (!at(TokenKind::Newline)) fail("invalid syntax");
        ++pos_;
    }

    Node open(NodeKind kind) const { return Node{kind, pos_, pos_, {}, {}}; }
    Node close(Node n) const {
        n.end = pos_;
        return n;
    }
    Node wrap(NodeKind kind, Node first) const {
        Node n{kind, first.begin, first.end, {}, {}};
        n.children.push_back(std::move(first));
        return n;
    }

    // Tokens that can start an expression operand.
    bool starts_expression() const {
        const Token& t = cur();
        switch (t.kind) {
            case TokenKind::Name: {
                const std::string_view w = text(t);
                if (!is_keyword(w)) return true;
                return w == "None" || w == "True" || w == "False" || w == "not" || w == "lambda" || w == "await" ||
                       w == "yield";
            }
            case TokenKind::Number:
            case TokenKind::String:
                return true;
            case TokenKind::Op: {
                const std::string_view o = text(t);
                return o == "(" || o == "[" || o == "{" || o == "-" || o == "+" || o == "~" || o == "..." ||
                       o == "*";
            }
            default:
                return false;
        }
    }

    // ---- statements ---------------------------------------------------------

    void statement(std::vector<Node>& out) {
        if (cur().kind == TokenKind::Name) {
            const std::string_view w = text(cur());
            if (w == "if") return out.push_back(if_statement());
            if (w == "while") return out.push_back(while_statement());
            if (w == "for") return out.push_back(for_statement());
            if (w == "try") return out.push_back(try_statement());
            if (w == "with") return out.push_back(with_statement());
            if (w == "def") return out.push_back(function_def());
            if (w == "class") return out.push_back(class_def());
            if (w == "async") return out.push_back(async_statement());
            if (w == "match" && looks_like_match()) return out.push_back(match_statement());
        }
        if (at_op("@")) return out.push_back(decorated());
        simple_statements(out);
    }

    void simple_statements(std::vector<Node>& out) {
        out.push_back(simple_statement());
        while (at_op(";")) {
            ++pos_;
            if (at(TokenKind::Newline)) break;
            out.push_back(simple_statement());
        }
        expect_newline();
    }

    Node simple_statement() {
        if (cur().kind == TokenKind::Name) {
            const std::string_view w = text(cur());
            if (w == "pass" || w == "break" || w == "continue") {
                const NodeKind k = w == "pass" ? NodeKind::Pass : w == "break" ? NodeKind::Break : NodeKind::Continue;
                Node n = open(k);
                ++pos_;
                return close(std::move(n));
            }
            if (w == "return") {
                Node n = open(NodeKind::Return);
                ++pos_;
                if (starts_expression()) n.children.push_back(star_expressions());
                return close(std::move(n));
            }
            if (w == "raise") {
                Node n = open(NodeKind::Raise);
                ++pos_;
                if (starts_expression()) {
                    n.children.push_back(expression());
                    if (at_kw("from")) {
                        ++pos_;
                        n.children.push_back(expression());
                    }
                }
                return close(std::move(n));
            }
            if (w == "global" || w == "nonlocal") {
                Node n = open(w == "global" ? NodeKind::Global : NodeKind::Nonlocal);
                ++pos_;
                expect_name();
                while (at_op(",")) {
                    ++pos_;
                    expect_name();
                }
                return close(std::move(n));
            }
            if (w == "del") {
                Node n = open(NodeKind::Del);
                ++pos_;
                n.children.push_back(target_list());
                return close(std::move(n));
            }
            if (w == "assert") {
                Node n = open(NodeKind::Assert);
                ++pos_;
                n.children.push_back(expression());
                if (at_op(",")) {
                    ++pos_;
                    n.children.push_back(expression());
                }
                return close(std::move(n));
            }
            if (w == "import") return import_name();
            if (w == "from") return import_from();
        }
        if (!starts_expression()) fail("invalid syntax");

        const std::size_t start = pos_;
        Node first = at_kw("yield") ? yield_expression() : star_expressions();
        if (at_op(":")) {
            Node n{NodeKind::AnnAssign, start, start, {}, {}};
            n.children.push_back(std::move(first));
            ++pos_;
            n.children.push_back(expression());
            if (at_op("=")) {
                ++pos_;
                n.children.push_back(at_kw("yield") ? yield_expression() : star_expressions());
            }
            return close(std::move(n));
        }
        if (cur().kind == TokenKind::Op && is_augassign(text(cur()))) {
            Node n{NodeKind::AugAssign, start, start, {pos_}, {}};
            n.children.push_back(std::move(first));
            ++pos_;
            n.children.push_back(at_kw("yield") ? yield_expression() : star_expressions());
            return close(std::move(n));
        }
        if (at_op("=")) {
            Node n{NodeKind::Assign, start, start, {}, {}};
            n.children.push_back(std::move(first));
            while (at_op("=")) {
                ++pos_;
                n.children.push_back(at_kw("yield") ? yield_expression() : star_expressions());
            }
            return close(std::move(n));
        }
        return wrap(NodeKind::ExprStatement, std::move(first));
    }

    Node import_name() {
        Node n = open(NodeKind::Import);
        expect_kw("import");
        dotted_as_name();
        while (at_op(",")) {
            ++pos_;
            dotted_as_name();
        }
        return close(std::move(n));
    }

    void dotted_name() {
        expect_name();
        while (at_op(".")) {
            ++pos_;
            expect_name();
        }
    }

    void dotted_as_name() {
        dotted_name();
        if (at_kw("as")) {
            ++pos_;
            expect_name();
        }
    }

    Node import_from() {
        Node n = open(NodeKind::ImportFrom);
        expect_kw("from");
        bool relative = false;
        while (at_op(".") || at_op("...")) {
            relative = true;
            ++pos_;
        }
        if (!at_kw("import")) {
            dotted_name();
        } else if (!relative) {
            fail("invalid syntax");
        }
        expect_kw("import");
        if (at_op("*")) {
            ++pos_;
            return close(std::move(n));
        }
        const bool paren = at_op("(");
        if (paren) ++pos_;
        auto as_name = [&] {
            expect_name();
            if (at_kw("as")) {
                ++pos_;
                expect_name();
            }
        };
        as_name();
        while (at_op(",")) {
            ++pos_;
            if (paren && at_op(")")) break;
            as_name();
        }
        if (paren) expect_op(")");
        return close(std::move(n));
    }

    Node block() {
        Node n = open(NodeKind::Block);
        if (at(TokenKind::Newline)) {
            ++pos_;
            if (!at(TokenKind::Indent)) fail("expected an indented block");
            ++pos_;
            while (!at(TokenKind::Dedent) && !at(TokenKind::EndMarker)) {
                if (at(TokenKind::Indent)) fail("unexpected indent");
                statement(n.children);
            }
            if (at(TokenKind::Dedent)) ++pos_;
        } else {
            simple_statements(n.children);
        }
        return close(std::move(n));
    }

    Node condition() {
        Node n = open(NodeKind::Condition);
        n.children.push_back(named_expression());
        return close(std::move(n));
    }

    Node if_statement() {
        Node n = open(NodeKind::If);
        ++pos_;  // if
        n.children.push_back(condition());
        expect_op(":");
        n.children.push_back(block());
        while (at_kw("elif")) {
            ++pos_;
            n.children.push_back(condition());
            expect_op(":");
            n.children.push_back(block());
        }
        if (at_kw("else")) {
            ++pos_;
            expect_op(":");
            n.children.push_back(block());
        }
        return close(std::move(n));
    }

    Node while_statement() {
        Node n = open(NodeKind::While);
        ++pos_;
        n.children.push_back(condition());
        expect_op(":");
        n.children.push_back(block());
        else_clause(n);
        return close(std::move(n));
    }

    void else_clause(Node& n) {
        if (at_kw("else")) {
            ++pos_;
            expect_op(":");
            n.children.push_back(block());
        }
    }

    Node for_statement() {
        Node n = open(NodeKind::For);
        ++pos_;
        n.children.push_back(target_list());
        expect_kw("in");
        n.children.push_back(star_expressions());
        expect_op(":");
        n.children.push_back(block());
        else_clause(n);
        return close(std::move(n));
    }

    Node try_statement() {
        Node n = open(NodeKind::Try);
        ++pos_;
        expect_op(":");
        n.children.push_back(block());
        bool handlers = false;
        while (at_kw("except")) {
            handlers = true;
            ++pos_;
            if (!at_op(":")) {
                n.children.push_back(expression());
                if (at_op(",")) {
                    // except A, B: is Python 2 only
                    fail("multiple exception types must be parenthesized");
                }
                if (at_kw("as")) {
                    ++pos_;
                    expect_name();
                }
            }
            expect_op(":");
            n.children.push_back(block());
        }
        if (handlers) else_clause(n);
        if (at_kw("finally")) {
            ++pos_;
            expect_op(":");
            n.children.push_back(block());
        } else if (!handlers) {
            fail("expected 'except' or 'finally' block");
        }
        return close(std::move(n));
    }

    void with_items(Node& n, bool parenthesized) {
        while (true) {
            n.children.push_back(expression());
            if (at_kw("as")) {
                ++pos_;
                n.children.push_back(single_target());
            }
            if (!at_op(",")) break;
            ++pos_;
            if (parenthesized && at_op(")")) break;
        }
    }

    Node with_statement() {
        Node n = open(NodeKind::With);
        ++pos_;
        bool done = false;
        if (at_op("(")) {
            // Parenthesized with-items; fall back to an ordinary expression
            // (a tuple or a parenthesized context manager) if it does not fit.
            const std::size_t save = pos_;
            Node attempt = n;
            try {
                ++pos_;
                with_items(attempt, true);
                expect_op(")");
                if (!at_op(":")) fail("invalid syntax");
                n = std::move(attempt);
                done = true;
            } catch (const ParseError&) {
                pos_ = save;
            }
        }
        if (!done) with_items(n, false);
        expect_op(":");
        n.children.push_back(block());
        return close(std::move(n));
    }

    Node parameters(bool annotations, std::string_view closer) {
        Node n = open(NodeKind::Parameters);
        bool saw_default = false;
        bool saw_star = false;
        bool bare_star_pending = false;
        while (!at_op(closer)) {
            if (at_op("/")) {
                if (saw_star) fail("/ must be ahead of *");
                ++pos_;
            } else if (at_op("*") || at_op("**")) {
                const bool kwargs = at_op("**");
                if (kwargs && bare_star_pending) fail("named arguments must follow bare *");
                ++pos_;
                if (!kwargs) {
                    if (saw_star) fail("* argument may appear only once");
                    saw_star = true;
                }
                if (kwargs || !(at_op(",") || at_op(closer))) {
                    expect_name();
                    if (annotations && at_op(":")) {
                        ++pos_;
                        n.children.push_back(expression());
                    }
                } else {
                    bare_star_pending = true;
                }
                if (kwargs && !at_op(closer) && !(at_op(",") && peek_op(1, closer))) {
                    fail("arguments cannot follow var-keyword argument");
                }
            } else {
                expect_name();
                bare_star_pending = false;
                if (annotations && at_op(":")) {
                    ++pos_;
                    n.children.push_back(expression());
                }
                if (at_op("=")) {
                    ++pos_;
                    n.children.push_back(expression());
                    saw_default = true;
                } else if (saw_default && !saw_star) {
                    fail("non-default argument follows default argument");
                }
            }
            if (!at_op(",")) break;
            ++pos_;
        }
        if (bare_star_pending) fail("named arguments must follow bare *");
        return close(std::move(n));
    }

    Node function_def() {
        Node n = open(NodeKind::FunctionDef);
        expect_kw("def");
        expect_name();
        expect_op("(");
        n.children.push_back(parameters(true, ")"));
        expect_op(")");
        if (at_op("->")) {
            ++pos_;
            n.children.push_back(expression());
        }
        expect_op(":");
        n.children.push_back(block());
        return close(std::move(n));
    }

    Node class_def() {
        Node n = open(NodeKind::ClassDef);
        expect_kw("class");
        expect_name();
        if (at_op("(")) {
            ++pos_;
            arguments(n);
            expect_op(")");
        }
        expect_op(":");
        n.children.push_back(block());
        return close(std::move(n));
    }

    Node async_statement() {
        const std::size_t start = pos_;
        ++pos_;
        Node inner = at_kw("def")    ? function_def()
                     : at_kw("for")  ? for_statement()
                     : at_kw("with") ? with_statement()
                                     : (fail("invalid syntax"), Node{});
        inner.begin = start;
        return inner;
    }

    Node decorated() {
        Node n = open(NodeKind::Decorator);
        while (at_op("@")) {
            ++pos_;
            n.children.push_back(named_expression());
            expect_newline();
        }
        if (at_kw("def")) {
            n.children.push_back(function_def());
        } else if (at_kw("class")) {
            n.children.push_back(class_def());
        } else if (at_kw("async") && peek_kw(1, "def")) {
            n.children.push_back(async_statement());
        } else {
            fail("invalid syntax");
        }
        return close(std::move(n));
    }

    // `match` is a soft keyword: it starts a match statement only when the
    // logical line ends with ':' and opens an indented block.
    bool looks_like_match() const {
        const Token& next = peek(1);
        if (next.kind == TokenKind::Op) {
            const std::string_view o = text(next);
            if (o != "(" && o != "[" && o != "{" && o != "-" && o != "*" && o != "~") return false;
        } else if (next.kind == TokenKind::Newline || next.kind == TokenKind::EndMarker) {
            return false;
        }
        std::size_t i = pos_;
        while (i < toks_.size() && toks_[i].kind != TokenKind::Newline && toks_[i].kind != TokenKind::EndMarker) ++i;
        if (i >= toks_.size() || toks_[i].kind != TokenKind::Newline || i == 0) return false;
        const Token& last = toks_[i - 1];
        return last.kind == TokenKind::Op && text(last) == ":" && i + 1 < toks_.size() &&
               toks_[i + 1].kind == TokenKind::Indent;
    }

    Node match_statement() {
        Node n = open(NodeKind::Match);
        ++pos_;  // match
        n.children.push_back(star_named_expressions_as_tuple());
        expect_op(":");
        expect_newline();
        if (!at(TokenKind::Indent)) fail("expected an indented block");
        ++pos_;
        while (at_kw("case")) n.children.push_back(case_block());
        if (!at(TokenKind::Dedent)) fail("invalid syntax");
        ++pos_;
        return close(std::move(n));
    }

    Node case_block() {
        Node n = open(NodeKind::Case);
        ++pos_;  // case
        // Patterns are kept opaque: balanced tokens up to the guard or ':'.
        Node pattern = open(NodeKind::Pattern);
        std::size_t depth = 0;
        while (true) {
            if (at(TokenKind::Newline) || at(TokenKind::EndMarker)) fail("expected ':'");
            if (depth == 0 && (at_op(":") || at_kw("if"))) break;
            if (at_op("(") || at_op("[") || at_op("{")) ++depth;
            if (at_op(")") || at_op("]") || at_op("}")) --depth;
            ++pos_;
        }
        if (pos_ == pattern.begin) fail("invalid syntax");
        n.children.push_back(close(std::move(pattern)));
        if (at_kw("if")) {
            ++pos_;
            n.children.push_back(named_expression());
        }
        expect_op(":");
        n.children.push_back(block());
        return close(std::move(n));
    }

    // ---- expressions --------------------------------------------------------

    // Comma-separated star_expressions; a tuple node when commas are present.
    Node star_expressions() {
        Node first = star_expression();
        if (!at_op(",")) return first;
        Node tuple = wrap(NodeKind::Tuple, std::move(first));
        while (at_op(",")) {
            ++pos_;
            if (!starts_expression()) break;
            tuple.children.push_back(star_expression());
        }
        return close(std::move(tuple));
    }

    Node star_expression() {
        if (at_op("*")) {
            Node n = open(NodeKind::Starred);
            ++pos_;
            n.children.push_back(bitwise_or());
            return close(std::move(n));
        }
        return expression();
    }

    Node star_named_expression() {
        if (at_op("*")) {
            Node n = open(NodeKind::Starred);
            ++pos_;
            n.children.push_back(bitwise_or());
            return close(std::move(n));
        }
        return named_expression();
    }

    Node star_named_expressions_as_tuple() {
        Node first = star_named_expression();
        if (!at_op(",")) return first;
        Node tuple = wrap(NodeKind::Tuple, std::move(first));
        while (at_op(",")) {
            ++pos_;
            if (!starts_expression()) break;
            tuple.children.push_back(star_named_expression());
        }
        return close(std::move(tuple));
    }

    Node named_expression() {
        if (cur().kind == TokenKind::Name && peek_op(1, ":=")) {
            Node n = open(NodeKind::NamedExpr);
            expect_name();
            ++pos_;
            n.children.push_back(expression());
            return close(std::move(n));
        }
        return expression();
    }

    Node expression() {
        if (at_kw("lambda")) return lambda();
        Node body = disjunction();
        if (at_kw("if")) {
            Node n = wrap(NodeKind::Ternary, std::move(body));
            ++pos_;
            n.children.push_back(disjunction());
            expect_kw("else");
            n.children.push_back(expression());
            return close(std::move(n));
        }
        return body;
    }

    Node lambda() {
        Node n = open(NodeKind::Lambda);
        ++pos_;
        n.children.push_back(parameters(false, ":"));
        expect_op(":");
        n.children.push_back(expression());
        return close(std::move(n));
    }

    Node disjunction() {
        Node first = conjunction();
        if (!at_kw("or")) return first;
        Node n = wrap(NodeKind::BoolOp, std::move(first));
        while (at_kw("or")) {
            n.ops.push_back(pos_++);
            n.children.push_back(conjunction());
        }
        return close(std::move(n));
    }

    Node conjunction() {
        Node first = inversion();
        if (!at_kw("and")) return first;
        Node n = wrap(NodeKind::BoolOp, std::move(first));
        while (at_kw("and")) {
            n.ops.push_back(pos_++);
            n.children.push_back(inversion());
        }
        return close(std::move(n));
    }

    Node inversion() {
        if (at_kw("not")) {
            Node n = open(NodeKind::Not);
            n.ops.push_back(pos_++);
            n.children.push_back(inversion());
            return close(std::move(n));
        }
        return comparison();
    }

    // Returns the number of tokens of the comparison operator at pos_, or 0.
    std::size_t comparison_op_width() const {
        const Token& t = cur();
        if (t.kind == TokenKind::Op && is_comparison_op(text(t))) return 1;
        if (at_kw("in")) return 1;
        if (at_kw("not") && peek_kw(1, "in")) return 2;
        if (at_kw("is")) return peek_kw(1, "not") ? 2 : 1;
        return 0;
    }

    Node comparison() {
        Node first = bitwise_or();
        if (comparison_op_width() == 0) return first;
        Node n = wrap(NodeKind::Compare, std::move(first));
        while (const std::size_t width = comparison_op_width()) {
            n.ops.push_back(pos_);
            pos_ += width;
            n.children.push_back(bitwise_or());
        }
        return close(std::move(n));
    }

    template <typename Next>
    Node binary(Next next, std::initializer_list<std::string_view> ops) {
        Node left = (this->*next)();
        auto matches = [&] {
            if (cur().kind != TokenKind::Op) return false;
            for (std::string_view o : ops) {
                if (text(cur()) == o) return true;
            }
            return false;
        };
        while (matches()) {
            Node n = wrap(NodeKind::BinOp, std::move(left));
            n.ops.push_back(pos_++);
            n.children.push_back((this->*next)());
            left = close(std::move(n));
        }
        return left;
    }

    Node bitwise_or() { return binary(&Parser::bitwise_xor, {"|"}); }
    Node bitwise_xor() { return binary(&Parser::bitwise_and, {"^"}); }
    Node bitwise_and() { return binary(&Parser::shift_expr, {"&"}); }
    Node shift_expr() { return binary(&Parser::sum, {"<<", ">>"}); }
    Node sum() { return binary(&Parser::term, {"+", "-"}); }
    Node term() { return binary(&Parser::factor, {"*", "/", "//", "%", "@"}); }

    Node factor() {
        if (at_op("+") || at_op("-") || at_op("~")) {
            Node n = open(NodeKind::UnaryOp);
            n.ops.push_back(pos_++);
            n.children.push_back(factor());
            return close(std::move(n));
        }
        return power();
    }

    Node power() {
        Node base = await_primary();
        if (!at_op("**")) return base;
        Node n = wrap(NodeKind::Power, std::move(base));
        ++pos_;
        n.children.push_back(factor());
        return close(std::move(n));
    }

    Node await_primary() {
        if (at_kw("await")) {
            Node n = open(NodeKind::Await);
            ++pos_;
            n.children.push_back(primary());
            return close(std::move(n));
        }
        return primary();
    }

    Node primary() {
        Node value = atom();
        while (true) {
            if (at_op(".")) {
                Node n = wrap(NodeKind::Attribute, std::move(value));
                ++pos_;
                expect_name();
                value = close(std::move(n));
            } else if (at_op("(")) {
                Node n = wrap(NodeKind::Call, std::move(value));
                ++pos_;
                arguments(n);
                expect_op(")");
                value = close(std::move(n));
            } else if (at_op("[")) {
                Node n = wrap(NodeKind::Subscript, std::move(value));
                ++pos_;
                slices(n);
                expect_op("]");
                value = close(std::move(n));
            } else {
                return value;
            }
        }
    }

    // Call arguments up to (not including) ')'.
    void arguments(Node& call) {
        bool first = true;
        bool saw_keyword = false;
        bool saw_double_star = false;
        while (!at_op(")")) {
            if (at_op("*") || at_op("**")) {
                const bool double_star = at_op("**");
                if (!double_star && saw_double_star) {
                    fail("iterable argument unpacking follows keyword argument unpacking");
                }
                saw_double_star = saw_double_star || double_star;
                Node n = open(NodeKind::Starred);
                ++pos_;
                n.children.push_back(expression());
                call.children.push_back(close(std::move(n)));
            } else if (cur().kind == TokenKind::Name && peek_op(1, "=") && !is_keyword(text(cur()))) {
                saw_keyword = true;
                Node n = open(NodeKind::Keyword);
                pos_ += 2;
                n.children.push_back(expression());
                call.children.push_back(close(std::move(n)));
            } else {
                if (saw_double_star) fail("positional argument follows keyword argument unpacking");
                if (saw_keyword) fail("positional argument follows keyword argument");
                Node arg = named_expression();
                if (first && (at_kw("for") || at_kw("async"))) {
                    Node gen = wrap(NodeKind::GenExp, std::move(arg));
                    comprehension_clauses(gen);
                    arg = close(std::move(gen));
                    if (!at_op(")")) fail("Generator expression must be parenthesized");
                }
                call.children.push_back(std::move(arg));
            }
            first = false;
            if (!at_op(",")) break;
            ++pos_;
        }
    }

    void slices(Node& sub) {
        while (true) {
            sub.children.push_back(slice());
            if (!at_op(",")) break;
            ++pos_;
            if (at_op("]")) break;
        }
    }

    Node slice() {
        Node n = open(NodeKind::Slice);
        if (at_op("*")) return star_named_expression();
        if (!at_op(":")) {
            Node lower = named_expression();
            if (!at_op(":")) return lower;
            n.children.push_back(std::move(lower));
        }
        ++pos_;  // ':'
        if (!at_op(":") && !at_op("]") && !at_op(",")) n.children.push_back(expression());
        if (at_op(":")) {
            ++pos_;
            if (!at_op("]") && !at_op(",")) n.children.push_back(expression());
        }
        return close(std::move(n));
    }

    void comprehension_clauses(Node& comp) {
        if (!at_kw("for") && !at_kw("async")) fail("invalid syntax");
        while (at_kw("for") || (at_kw("async") && peek_kw(1, "for"))) {
            Node clause = open(NodeKind::Comprehension);
            if (at_kw("async")) ++pos_;
            ++pos_;  // for
            clause.children.push_back(target_list());
            expect_kw("in");
            clause.children.push_back(disjunction());
            while (at_kw("if")) {
                ++pos_;
                clause.children.push_back(disjunction());
            }
            comp.children.push_back(close(std::move(clause)));
        }
    }

    Node single_target() {
        if (at_op("*")) {
            Node n = open(NodeKind::Starred);
            ++pos_;
            n.children.push_back(bitwise_or());
            return close(std::move(n));
        }
        return bitwise_or();
    }

    // Assignment / loop targets. Parsed at bitwise_or level so that the `in`
    // of a for-clause is not taken as a comparison.
    Node target_list() {
        Node first = single_target();
        if (!at_op(",")) return first;
        Node tuple = wrap(NodeKind::Tuple, std::move(first));
        while (at_op(",")) {
            ++pos_;
            if (at_kw("in") || at_op("=") || at(TokenKind::Newline) || at_op(";")) break;
            tuple.children.push_back(single_target());
        }
        return close(std::move(tuple));
    }

    Node yield_expression() {
        Node n = open(NodeKind::Yield);
        ++pos_;
        if (at_kw("from")) {
            ++pos_;
            n.children.push_back(expression());
        } else if (starts_expression()) {
            n.children.push_back(star_expressions());
        }
        return close(std::move(n));
    }

    Node atom() {
        const Token& t = cur();
        switch (t.kind) {
            case TokenKind::Name: {
                const std::string_view w = text(t);
                if (w == "None" || w == "True" || w == "False") {
                    Node n = open(NodeKind::Constant);
                    ++pos_;
                    return close(std::move(n));
                }
                if (is_keyword(w)) fail("invalid syntax");
                Node n = open(NodeKind::Name);
                ++pos_;
                return close(std::move(n));
            }
            case TokenKind::Number: {
                Node n = open(NodeKind::Number);
                ++pos_;
                return close(std::move(n));
            }
            case TokenKind::String: {
                Node n = open(NodeKind::String);
                while (at(TokenKind::String)) ++pos_;
                return close(std::move(n));
            }
            case TokenKind::Op: {
                const std::string_view o = text(t);
                if (o == "...") {
                    Node n = open(NodeKind::Ellipsis);
                    ++pos_;
                    return close(std::move(n));
                }
                if (o == "(") return paren_atom();
                if (o == "[") return list_atom();
                if (o == "{") return brace_atom();
                break;
            }
            default:
                break;
        }
        fail("invalid syntax");
    }

    Node paren_atom() {
        Node n = open(NodeKind::Paren);
        ++pos_;
        if (at_op(")")) {
            ++pos_;
            n.kind = NodeKind::Tuple;
            return close(std::move(n));
        }
        if (at_kw("yield")) {
            n.children.push_back(yield_expression());
            expect_op(")");
            return close(std::move(n));
        }
        n.children.push_back(star_named_expression());
        if (at_kw("for") || at_kw("async")) {
            n.kind = NodeKind::GenExp;
            comprehension_clauses(n);
        } else if (at_op(",")) {
            n.kind = NodeKind::Tuple;
            while (at_op(",")) {
                ++pos_;
                if (at_op(")")) break;
                n.children.push_back(star_named_expression());
            }
        } else if (n.children.front().kind == NodeKind::Starred) {
            fail("cannot use starred expression here");
        }
        expect_op(")");
        return close(std::move(n));
    }

    Node list_atom() {
        Node n = open(NodeKind::List);
        ++pos_;
        if (!at_op("]")) {
            n.children.push_back(star_named_expression());
            if (at_kw("for") || at_kw("async")) {
                n.kind = NodeKind::ListComp;
                comprehension_clauses(n);
            } else {
                while (at_op(",")) {
                    ++pos_;
                    if (at_op("]")) break;
                    n.children.push_back(star_named_expression());
                }
            }
        }
        expect_op("]");
        return close(std::move(n));
    }

    Node brace_atom() {
        Node n = open(NodeKind::Dict);
        ++pos_;
        if (at_op("}")) {
            ++pos_;
            return close(std::move(n));
        }
        auto dict_item = [&] {
            if (at_op("**")) {
                Node s = open(NodeKind::Starred);
                ++pos_;
                s.children.push_back(bitwise_or());
                n.children.push_back(close(std::move(s)));
                return;
            }
            n.children.push_back(expression());
            expect_op(":");
            n.children.push_back(expression());
        };
        bool is_dict = false;
        if (at_op("**")) {
            is_dict = true;
            dict_item();
        } else {
            Node first = star_named_expression();
            if (at_op(":") && first.kind != NodeKind::Starred) {
                is_dict = true;
                n.children.push_back(std::move(first));
                ++pos_;
                n.children.push_back(expression());
            } else {
                n.children.push_back(std::move(first));
            }
        }
        if (at_kw("for") || at_kw("async")) {
            n.kind = is_dict ? NodeKind::DictComp : NodeKind::SetComp;
            comprehension_clauses(n);
        } else {
            n.kind = is_dict ? NodeKind::Dict : NodeKind::Set;
            while (at_op(",")) {
                ++pos_;
                if (at_op("}")) break;
                if (is_dict) {
                    dict_item();
                } else {
                    n.children.push_back(star_named_expression());
                }
            }
        }
        expect_op("}");
        return close(std::move(n));
    }

    std::string_view src_;
    const std::vector<Token>& toks_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string_view node_kind_name(NodeKind kind) {
    switch (kind) {
        case NodeKind::Module: return "Module";
        case NodeKind::Block: return "Block";
        case NodeKind::ExprStatement: return "ExprStatement";
        case NodeKind::Assign: return "Assign";
        case NodeKind::AnnAssign: return "AnnAssign";
        case NodeKind::AugAssign: return "AugAssign";
        case NodeKind::Return: return "Return";
        case NodeKind::Raise: return "Raise";
        case NodeKind::Pass: return "Pass";
        case NodeKind::Break: return "Break";
        case NodeKind::Continue: return "Continue";
        case NodeKind::Global: return "Global";
        case NodeKind::Nonlocal: return "Nonlocal";
        case NodeKind::Del: return "Del";
        case NodeKind::Assert: return "Assert";
        case NodeKind::Import: return "Import";
        case NodeKind::ImportFrom: return "ImportFrom";
        case NodeKind::If: return "If";
        case NodeKind::While: return "While";
        case NodeKind::For: return "For";
        case NodeKind::With: return "With";
        case NodeKind::Try: return "Try";
        case NodeKind::FunctionDef: return "FunctionDef";
        case NodeKind::ClassDef: return "ClassDef";
        case NodeKind::Decorator: return "Decorator";
        case NodeKind::Match: return "Match";
        case NodeKind::Case: return "Case";
        case NodeKind::Pattern: return "Pattern";
        case NodeKind::Condition: return "Condition";
        case NodeKind::Parameters: return "Parameters";
        case NodeKind::Ternary: return "Ternary";
        case NodeKind::Lambda: return "Lambda";
        case NodeKind::NamedExpr: return "NamedExpr";
        case NodeKind::BoolOp: return "BoolOp";
        case NodeKind::Not: return "Not";
        case NodeKind::Compare: return "Compare";
        case NodeKind::BinOp: return "BinOp";
        case NodeKind::UnaryOp: return "UnaryOp";
        case NodeKind::Power: return "Power";
        case NodeKind::Await: return "Await";
        case NodeKind::Call: return "Call";
        case NodeKind::Subscript: return "Subscript";
        case NodeKind::Attribute: return "Attribute";
        case NodeKind::Name: return "Name";
        case NodeKind::Number: return "Number";
        case NodeKind::String: return "String";
        case NodeKind::Constant: return "Constant";
        case NodeKind::Ellipsis: return "Ellipsis";
        case NodeKind::Paren: return "Paren";
        case NodeKind::Tuple: return "Tuple";
        case NodeKind::List: return "List";
        case NodeKind::Dict: return "Dict";
        case NodeKind::Set: return "Set";
        case NodeKind::ListComp: return "ListComp";
        case NodeKind::SetComp: return "SetComp";
        case NodeKind::DictComp: return "DictComp";
        case NodeKind::GenExp: return "GenExp";
        case NodeKind::Comprehension: return "Comprehension";
        case NodeKind::Starred: return "Starred";
        case NodeKind::Slice: return "Slice";
        case NodeKind::Keyword: return "Keyword";
        case NodeKind::Yield: return "Yield";
    }
    return "?";
}

SyntaxTree SyntaxTree::parse(std::string source) {
    SyntaxTree tree;
    tree.source_ = std::move(source);
    tree.tokens_ = tokenize(tree.source_);
    tree.root_ = Parser(tree.source_, tree.tokens_).file();
    return tree;
}

std::pair<std::size_t, std::size_t> SyntaxTree::byte_span(const Node& node) const {
    if (node.begin >= node.end) return {tokens_[node.begin].offset, tokens_[node.begin].offset};
    return {tokens_[node.begin].offset, tokens_[node.end - 1].end()};
}

std::string_view SyntaxTree::node_text(const Node& node) const {
    const auto [first, last] = byte_span(node);
    return std::string_view(source_).substr(first, last - first);
}

void parse_expression(std::string_view text) {
    // Wrapping in parentheses lets the expression span lines the way it may
    // inside a call; the closing paren is on its own line so a trailing
    // comment cannot swallow it.
    const std::string wrapped = "(" + std::string(text) + "\n)";
    const std::vector<Token> tokens = tokenize(wrapped);
    // Strip the synthetic parens: the parser sees the interior only.
    std::vector<Token> inner(tokens.begin() + 1, tokens.end());
    auto close_it = inner.end();
    for (auto it = inner.begin(); it != inner.end(); ++it) {
        if (it->kind == TokenKind::Op && it->offset == wrapped.size() - 1) close_it = it;
    }
    if (close_it == inner.end()) throw ParseError("invalid syntax", 1, 0);
    inner.erase(close_it);
    Parser(wrapped, inner).expression_only();
}

std::optional<ParseError> check_module(std::string_view source) {
    try {
        SyntaxTree::parse(std::string(source));
    } catch (const ParseError& e) {
        return e;
    }
    return std::nullopt;
}

}  // namespace codeforge::python
