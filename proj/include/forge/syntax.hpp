#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "forge/error.hpp"
#include "forge/ingest.hpp"
#include "forge/lang.hpp"

// Lightweight embedded grammars for the supported corpus languages. The
// parsers are structural: they recover string/comment layout, delimiter
// nesting, and the statement/function skeleton, which is what span-level
// sample construction needs. They do not type-check or resolve names.
//
// Node kinds and their level classification are fixed in
// docs/node_levels.json; the tables below are the same data compiled in.

namespace forge {

enum class NodeLevel { expression, statement, function };

inline std::string_view node_level_name(NodeLevel level) {
    switch (level) {
        case NodeLevel::expression: return "expression";
        case NodeLevel::statement: return "statement";
        case NodeLevel::function: return "function";
    }
    return "expression";
}

inline NodeLevel node_level_from_name(std::string_view name) {
    if (name == "function") return NodeLevel::function;
    if (name == "statement") return NodeLevel::statement;
    if (name == "expression") return NodeLevel::expression;
    raise(ErrorCode::invalid_config, "unknown node level: " + std::string(name));
}

struct SyntaxNode {
    std::string kind;
    NodeLevel level = NodeLevel::statement;
    size_t begin = 0; // byte offsets, half-open [begin, end)
    size_t end = 0;
};

struct SyntaxTree {
    bool valid = false;
    int error_count = 0;
    std::vector<SyntaxNode> nodes; // document order, parents before children

    std::vector<SyntaxNode> nodes_at(NodeLevel level) const {
        std::vector<SyntaxNode> out;
        for (const auto& n : nodes) {
            if (n.level == level) out.push_back(n);
        }
        return out;
    }
};

struct ParseReport {
    bool syntactically_valid = false;
    std::map<NodeLevel, uint64_t> node_counts;
    int parse_error_count = 0;
};

namespace syntax_detail {

// ---------------------------------------------------------------- tokens --

struct Token {
    enum class Kind { ident, keyword, number, str, punct, op };
    Kind kind;
    size_t begin;
    size_t end;
    std::string_view text;

    bool is(std::string_view t) const { return text == t; }
};

inline bool ident_start(unsigned char c) {
    return std::isalpha(c) || c == '_' || c == '$' || c >= 0x80;
}
inline bool ident_cont(unsigned char c) {
    return std::isalnum(c) || c == '_' || c == '$' || c >= 0x80;
}

inline const std::vector<std::string_view>& multi_char_ops() {
    static const std::vector<std::string_view> ops = {
        "<<=", ">>=", ">>>", "===", "!==", "...", "?\?=", "**=",
        "==", "!=", "<=", ">=", "=>", "->", "&&", "||", "++", "--",
        "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<", ">>",
        "::", "?.", "??", "**",
    };
    return ops;
}

struct Lexer {
    std::string_view src;
    Language lang;
    std::vector<Token> tokens;
    int errors = 0;

    void error() { ++errors; }

    void push(Token::Kind kind, size_t begin, size_t end) {
        tokens.push_back({kind, begin, end, src.substr(begin, end - begin)});
    }

    // Quoted string with backslash escapes; returns index past the closer.
    size_t scan_quoted(size_t i, char quote) {
        size_t start = i++;
        while (i < src.size()) {
            char c = src[i];
            if (c == '\\' && i + 1 < src.size()) {
                i += 2;
                continue;
            }
            if (c == quote) return i + 1;
            if (c == '\n' && lang != Language::python) {
                // Unterminated single-line string.
                error();
                return i;
            }
            ++i;
        }
        error();
        (void)start;
        return i;
    }

    // Triple-quoted (python, java text block): """..."""/'''...'''.
    size_t scan_triple(size_t i, char quote) {
        i += 3;
        while (i + 3 <= src.size()) {
            if (src[i] == quote && src[i + 1] == quote && src[i + 2] == quote) {
                return i + 3;
            }
            if (src[i] == '\\' && i + 1 < src.size()) {
                i += 2;
                continue;
            }
            ++i;
        }
        error();
        return src.size();
    }

    // C# verbatim string @"..." with "" escapes.
    size_t scan_verbatim(size_t i) {
        // i at the opening quote
        ++i;
        while (i < src.size()) {
            if (src[i] == '"') {
                if (i + 1 < src.size() && src[i + 1] == '"') {
                    i += 2;
                    continue;
                }
                return i + 1;
            }
            ++i;
        }
        error();
        return i;
    }

    // TS template literal with nested ${...} holes.
    size_t scan_template(size_t i) {
        ++i; // past backtick
        while (i < src.size()) {
            char c = src[i];
            if (c == '\\' && i + 1 < src.size()) {
                i += 2;
                continue;
            }
            if (c == '`') return i + 1;
            if (c == '$' && i + 1 < src.size() && src[i + 1] == '{') {
                i += 2;
                int depth = 1;
                while (i < src.size() && depth > 0) {
                    char h = src[i];
                    if (h == '\\' && i + 1 < src.size()) {
                        i += 2;
                        continue;
                    }
                    if (h == '`') {
                        i = scan_template(i);
                        continue;
                    }
                    if (h == '"' || h == '\'') {
                        i = scan_quoted(i, h);
                        continue;
                    }
                    if (h == '{') ++depth;
                    if (h == '}') --depth;
                    ++i;
                }
                if (depth > 0) error();
                continue;
            }
            ++i;
        }
        error();
        return i;
    }
};

// ------------------------------------------------------- c-family lexing --

inline bool cf_is_keyword(Language lang, std::string_view t) {
    static const std::vector<std::string_view> shared = {
        "if", "else", "for", "while", "do", "switch", "case", "default",
        "break", "continue", "return", "new", "try", "catch", "finally",
        "throw", "this", "super", "class", "interface", "enum", "void",
        "static", "public", "private", "protected", "abstract", "final",
        "import", "package", "extends", "implements", "instanceof",
        "int", "long", "short", "byte", "char", "float", "double", "boolean",
        "true", "false", "null", "throws", "synchronized", "volatile",
        "transient", "native", "strictfp", "assert", "var", "record",
        "sealed", "permits", "yield",
    };
    static const std::vector<std::string_view> ts_extra = {
        "function", "const", "let", "export", "async", "await", "typeof",
        "in", "of", "undefined", "type", "namespace", "declare", "readonly",
        "string", "number", "any", "unknown", "never", "constructor", "get",
        "set", "delete", "as",
    };
    static const std::vector<std::string_view> cs_extra = {
        "namespace", "using", "string", "bool", "decimal", "object", "ref",
        "out", "params", "foreach", "lock", "virtual", "override", "async",
        "await", "readonly", "internal", "partial", "struct", "delegate",
        "event", "get", "set", "base", "is", "as", "uint", "ulong", "sbyte",
        "ushort", "checked", "unchecked", "unsafe", "fixed", "goto", "in",
    };
    auto has = [&](const std::vector<std::string_view>& v) {
        return std::find(v.begin(), v.end(), t) != v.end();
    };
    if (has(shared)) return true;
    if (lang == Language::typescript && has(ts_extra)) return true;
    if (lang == Language::csharp && has(cs_extra)) return true;
    return false;
}

inline Lexer lex_cfamily(Language lang, std::string_view src) {
    Lexer lx{src, lang, {}, 0};
    size_t i = 0;
    const size_t n = src.size();
    while (i < n) {
        char c = src[i];
        if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
            ++i;
            continue;
        }
        if (c == '/' && i + 1 < n && src[i + 1] == '/') {
            size_t eol = src.find('\n', i);
            i = eol == std::string_view::npos ? n : eol + 1;
            continue;
        }
        if (c == '/' && i + 1 < n && src[i + 1] == '*') {
            size_t close = src.find("*/", i + 2);
            if (close == std::string_view::npos) {
                lx.error();
                i = n;
            } else {
                i = close + 2;
            }
            continue;
        }
        if (c == '"' || c == '\'') {
            size_t begin = i;
            if (lang == Language::java && c == '"' && i + 2 < n && src[i + 1] == '"' && src[i + 2] == '"') {
                i = lx.scan_triple(i, '"');
            } else {
                i = lx.scan_quoted(i, c);
            }
            lx.push(Token::Kind::str, begin, i);
            continue;
        }
        if (c == '`' && lang == Language::typescript) {
            size_t begin = i;
            i = lx.scan_template(i);
            lx.push(Token::Kind::str, begin, i);
            continue;
        }
        if (lang == Language::csharp && (c == '@' || c == '$')) {
            // @"...", $"...", $@"...", @$"..."
            size_t j = i;
            bool verbatim = false;
            while (j < n && (src[j] == '@' || src[j] == '$')) {
                if (src[j] == '@') verbatim = true;
                ++j;
            }
            if (j < n && src[j] == '"') {
                size_t begin = i;
                i = verbatim ? lx.scan_verbatim(j) : lx.scan_quoted(j, '"');
                lx.push(Token::Kind::str, begin, i);
                continue;
            }
        }
        if (ident_start(static_cast<unsigned char>(c))) {
            size_t begin = i;
            while (i < n && ident_cont(static_cast<unsigned char>(src[i]))) ++i;
            std::string_view text = src.substr(begin, i - begin);
            lx.push(cf_is_keyword(lang, text) ? Token::Kind::keyword : Token::Kind::ident, begin, i);
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) ||
            (c == '.' && i + 1 < n && std::isdigit(static_cast<unsigned char>(src[i + 1])))) {
            size_t begin = i;
            ++i;
            while (i < n && (std::isalnum(static_cast<unsigned char>(src[i])) || src[i] == '.' || src[i] == '_')) ++i;
            lx.push(Token::Kind::number, begin, i);
            continue;
        }
        // Operators: maximal munch over the multi-char table.
        bool matched = false;
        for (auto op : multi_char_ops()) {
            if (src.substr(i, op.size()) == op) {
                lx.push(Token::Kind::op, i, i + op.size());
                i += op.size();
                matched = true;
                break;
            }
        }
        if (matched) continue;
        if (c == '(' || c == ')' || c == '[' || c == ']' || c == '{' || c == '}' ||
            c == ';' || c == ',' || c == '.' || c == ':' || c == '@' || c == '#') {
            lx.push(Token::Kind::punct, i, i + 1);
        } else {
            lx.push(Token::Kind::op, i, i + 1);
        }
        ++i;
    }
    return lx;
}

// Match () [] {} among tokens; -1 where unmatched. Adds to error count on
// mismatch.
inline std::vector<int> match_delimiters(const std::vector<Token>& tokens, int& errors) {
    std::vector<int> match(tokens.size(), -1);
    std::vector<size_t> stack;
    auto closer_for = [](std::string_view open) -> char {
        if (open == "(") return ')';
        if (open == "[") return ']';
        return '}';
    };
    for (size_t i = 0; i < tokens.size(); ++i) {
        const auto& t = tokens[i];
        if (t.kind != Token::Kind::punct && t.kind != Token::Kind::op) continue;
        if (t.is("(") || t.is("[") || t.is("{")) {
            stack.push_back(i);
        } else if (t.is(")") || t.is("]") || t.is("}")) {
            if (stack.empty()) {
                ++errors;
                continue;
            }
            size_t open = stack.back();
            if (closer_for(tokens[open].text) != t.text[0]) {
                ++errors;
                stack.pop_back();
                continue;
            }
            stack.pop_back();
            match[open] = static_cast<int>(i);
            match[i] = static_cast<int>(open);
        }
    }
    errors += static_cast<int>(stack.size());
    return match;
}

// -------------------------------------------------- c-family node walker --

struct CfParser {
    Language lang;
    std::string_view src;
    const std::vector<Token>& toks;
    const std::vector<int>& match;
    std::vector<SyntaxNode>& nodes;

    static bool control_keyword(std::string_view t) {
        return t == "if" || t == "for" || t == "while" || t == "switch" ||
               t == "catch" || t == "foreach" || t == "using" || t == "lock" ||
               t == "synchronized" || t == "do" || t == "return";
    }

    bool connector_ok(size_t from, size_t to) const {
        // Tokens allowed between a parameter list ')' and the body '{':
        // throws clauses (java), return type annotations (ts), generic
        // bounds. Anything that could open another construct disqualifies.
        for (size_t i = from; i < to; ++i) {
            const auto& t = toks[i];
            if (t.kind == Token::Kind::ident || t.kind == Token::Kind::keyword ||
                t.kind == Token::Kind::number) {
                continue;
            }
            if (t.is(",") || t.is(".") || t.is(":") || t.is("<") || t.is(">") ||
                t.is("[") || t.is("]") || t.is("|") || t.is("&") || t.is("?")) {
                continue;
            }
            return false;
        }
        return true;
    }

    // Find every function-shaped body: ident '(' params ')' [connector] '{'.
    // Returns (body_open_index -> node_index) for statement extraction.
    std::vector<std::pair<size_t, size_t>> find_functions() {
        std::vector<std::pair<size_t, size_t>> bodies; // (open brace, close brace)
        for (size_t i = 0; i < toks.size(); ++i) {
            if (!toks[i].is("{")) continue;
            if (match[i] < 0) continue;
            // Arrow function: ')' '=>' '{'
            if (i >= 2 && lang == Language::typescript && toks[i - 1].is("=>") && toks[i - 2].is(")")) {
                int open = match[i - 2];
                if (open >= 0) {
                    size_t begin = toks[static_cast<size_t>(open)].begin;
                    size_t end = toks[static_cast<size_t>(match[i])].end;
                    nodes.push_back({"arrow_function", NodeLevel::function, begin, end});
                    bodies.emplace_back(i, static_cast<size_t>(match[i]));
                }
                continue;
            }
            // Walk back to the ')' that closes the parameter list.
            size_t j = i;
            while (j > 0) {
                --j;
                if (toks[j].is(")")) break;
                if (toks[j].is("{") || toks[j].is("}") || toks[j].is(";") ||
                    toks[j].is("(") || toks[j].is("=")) {
                    j = 0;
                    break;
                }
            }
            if (j == 0 || !toks[j].is(")")) continue;
            if (!connector_ok(j + 1, i)) continue;
            int open = match[j];
            if (open <= 0) continue;
            size_t p = static_cast<size_t>(open);
            const Token& name = toks[p - 1];
            bool name_ok = name.kind == Token::Kind::ident ||
                           (name.kind == Token::Kind::keyword &&
                            (name.is("constructor") || name.is("get") || name.is("set")));
            if (!name_ok) continue;
            // Reject control headers: "if (...) {" etc.
            if (name.kind == Token::Kind::keyword && control_keyword(name.text)) continue;
            // Declaration start: walk back over modifiers / return type.
            size_t decl = p - 1;
            while (decl > 0) {
                const Token& t = toks[decl - 1];
                if (t.is(";") || t.is("{") || t.is("}") || t.is("(") || t.is(")") ||
                    t.is("=") || t.is(",") || t.is("=>")) {
                    break;
                }
                --decl;
            }
            std::string kind = "method_declaration";
            if (lang == Language::typescript) {
                for (size_t k = decl; k < p; ++k) {
                    if (toks[k].is("function")) {
                        kind = "function_declaration";
                        break;
                    }
                }
            }
            size_t begin = toks[decl].begin;
            size_t end = toks[static_cast<size_t>(match[i])].end;
            nodes.push_back({kind, NodeLevel::function, begin, end});
            bodies.emplace_back(i, static_cast<size_t>(match[i]));
        }
        return bodies;
    }

    // Returns the index one past the parsed statement, emitting its node(s).
    size_t parse_one_statement(size_t i, size_t limit) {
        const Token& t = toks[i];
        auto skip_parens = [&](size_t idx) -> size_t {
            // expects toks[idx] == '('; returns index past matching ')'
            if (idx < limit && toks[idx].is("(") && match[idx] > 0) {
                size_t close = static_cast<size_t>(match[idx]);
                // condition expression inside the parens
                if (close > idx + 1) {
                    nodes.push_back({"condition_expression", NodeLevel::expression,
                                     toks[idx + 1].begin, toks[close - 1].end});
                }
                return close + 1;
            }
            return idx;
        };
        auto parse_body = [&](size_t idx) -> size_t {
            if (idx >= limit) return idx;
            if (toks[idx].is("{") && match[idx] > 0) {
                size_t close = static_cast<size_t>(match[idx]);
                parse_range(idx + 1, close);
                return close + 1;
            }
            return parse_one_statement(idx, limit);
        };

        if (t.kind == Token::Kind::keyword) {
            if (t.is("if")) {
                size_t begin = t.begin;
                size_t j = skip_parens(i + 1);
                j = parse_body(j);
                size_t end = toks[j - 1].end;
                while (j < limit && toks[j].is("else")) {
                    ++j;
                    if (j < limit && toks[j].is("if")) {
                        ++j;
                        j = skip_parens(j);
                    }
                    j = parse_body(j);
                    end = toks[j - 1].end;
                }
                nodes.push_back({"if_statement", NodeLevel::statement, begin, end});
                return j;
            }
            if (t.is("for") || t.is("foreach") || t.is("while") || t.is("switch") ||
                t.is("using") || t.is("lock") || t.is("synchronized")) {
                std::string kind =
                    t.is("for") ? "for_statement" :
                    t.is("foreach") ? "foreach_statement" :
                    t.is("while") ? "while_statement" :
                    t.is("switch") ? "switch_statement" :
                    t.is("using") ? "using_statement" :
                    t.is("lock") ? "lock_statement" : "synchronized_statement";
                size_t begin = t.begin;
                size_t j = i + 1;
                bool had_parens = j < limit && toks[j].is("(");
                if (t.is("for")) {
                    // for-headers are not a single expression; skip the parens
                    // without emitting a condition node.
                    if (had_parens && match[j] > 0) j = static_cast<size_t>(match[j]) + 1;
                } else {
                    j = skip_parens(j);
                }
                if (t.is("using") && !had_parens) {
                    // c# using-declaration: acts as a simple statement
                    return parse_simple(i, limit);
                }
                j = parse_body(j);
                size_t end = toks[j - 1].end;
                nodes.push_back({kind, NodeLevel::statement, begin, end});
                return j;
            }
            if (t.is("do")) {
                size_t begin = t.begin;
                size_t j = parse_body(i + 1);
                if (j < limit && toks[j].is("while")) {
                    ++j;
                    j = skip_parens(j);
                    if (j < limit && toks[j].is(";")) ++j;
                }
                nodes.push_back({"do_statement", NodeLevel::statement, begin, toks[j - 1].end});
                return j;
            }
            if (t.is("try")) {
                size_t begin = t.begin;
                size_t j = parse_body(i + 1);
                while (j < limit && (toks[j].is("catch") || toks[j].is("finally"))) {
                    ++j;
                    if (j < limit && toks[j].is("(") && match[j] > 0) {
                        j = static_cast<size_t>(match[j]) + 1;
                    }
                    j = parse_body(j);
                }
                nodes.push_back({"try_statement", NodeLevel::statement, begin, toks[j - 1].end});
                return j;
            }
            if (t.is("case") || t.is("default")) {
                size_t j = i;
                while (j < limit && !toks[j].is(":")) ++j;
                return j < limit ? j + 1 : j;
            }
            if (t.is("else")) {
                // stray else at walker level: consume defensively
                return parse_body(i + 1);
            }
        }
        if (t.is("{") && match[static_cast<size_t>(i)] > 0) {
            size_t close = static_cast<size_t>(match[i]);
            nodes.push_back({"block_statement", NodeLevel::statement, t.begin, toks[close].end});
            parse_range(i + 1, close);
            return close + 1;
        }
        if (t.is(";")) return i + 1;
        return parse_simple(i, limit);
    }

    size_t parse_simple(size_t i, size_t limit) {
        size_t start = i;
        size_t j = i;
        size_t last = i;
        while (j < limit) {
            const Token& t = toks[j];
            if ((t.is("(") || t.is("[") || t.is("{")) && match[j] > 0) {
                last = static_cast<size_t>(match[j]);
                j = last + 1;
                continue;
            }
            if (t.is(";")) {
                last = j;
                ++j;
                break;
            }
            if (t.is("}")) break; // unterminated at block end
            last = j;
            ++j;
        }
        std::string kind = toks[start].is("return") ? "return_statement" : "simple_statement";
        nodes.push_back({kind, NodeLevel::statement, toks[start].begin, toks[last].end});
        extract_expressions(start, last + 1);
        return j;
    }

    void extract_expressions(size_t begin, size_t end) {
        // assignment RHS: first top-level '=' or compound assignment
        int depth = 0;
        for (size_t i = begin; i < end; ++i) {
            const Token& t = toks[i];
            if (t.is("(") || t.is("[") || t.is("{")) ++depth;
            else if (t.is(")") || t.is("]") || t.is("}")) --depth;
            if (depth != 0) continue;
            bool is_assign = t.kind == Token::Kind::op &&
                             (t.is("=") ||
                              (t.text.size() >= 2 && t.text.back() == '=' &&
                               !t.is("==") && !t.is("!=") && !t.is("<=") && !t.is(">=") &&
                               !t.is("===") && !t.is("!==")));
            if (is_assign) {
                size_t rhs_first = i + 1;
                size_t stop = end - 1;
                if (toks[stop].is(";") && stop > rhs_first) --stop;
                if (rhs_first < end && stop >= rhs_first && !toks[rhs_first].is(";")) {
                    nodes.push_back({"assignment_rhs", NodeLevel::expression,
                                     toks[rhs_first].begin, toks[stop].end});
                }
                break;
            }
        }
        // call / object-creation expressions
        for (size_t i = begin; i < end; ++i) {
            if (!toks[i].is("(") || match[i] <= 0) continue;
            if (i == begin) continue;
            const Token& prev = toks[i - 1];
            bool callable_name = prev.kind == Token::Kind::ident ||
                                 (prev.kind == Token::Kind::keyword &&
                                  (prev.is("this") || prev.is("super") || prev.is("base")));
            if (!callable_name) continue;
            // dotted chain start
            size_t head = i - 1;
            while (head >= begin + 2 && toks[head - 1].is(".") &&
                   (toks[head - 2].kind == Token::Kind::ident ||
                    toks[head - 2].kind == Token::Kind::keyword)) {
                head -= 2;
            }
            std::string kind = "call_expression";
            size_t span_start = toks[head].begin;
            if (head > begin && toks[head - 1].is("new")) {
                kind = "new_expression";
                span_start = toks[head - 1].begin;
            }
            nodes.push_back({kind, NodeLevel::expression, span_start,
                             toks[static_cast<size_t>(match[i])].end});
        }
    }

    void parse_range(size_t begin, size_t end) {
        size_t i = begin;
        while (i < end) {
            size_t next = parse_one_statement(i, end);
            if (next <= i) ++i;
            else i = next;
        }
    }
};

inline SyntaxTree parse_cfamily(Language lang, std::string_view src) {
    SyntaxTree tree;
    Lexer lx = lex_cfamily(lang, src);
    int errors = lx.errors;
    std::vector<int> match = match_delimiters(lx.tokens, errors);
    tree.error_count = errors;
    tree.valid = errors == 0;
    if (!tree.valid) return tree;

    CfParser parser{lang, src, lx.tokens, match, tree.nodes};
    auto bodies = parser.find_functions();
    for (auto [open, close] : bodies) {
        parser.parse_range(open + 1, close);
    }
    std::sort(tree.nodes.begin(), tree.nodes.end(), [](const SyntaxNode& a, const SyntaxNode& b) {
        if (a.begin != b.begin) return a.begin < b.begin;
        if (a.end != b.end) return a.end > b.end;
        return a.kind < b.kind;
    });
    tree.nodes.erase(std::unique(tree.nodes.begin(), tree.nodes.end(),
                                 [](const SyntaxNode& a, const SyntaxNode& b) {
                                     return a.begin == b.begin && a.end == b.end && a.kind == b.kind;
                                 }),
                     tree.nodes.end());
    return tree;
}

// ----------------------------------------------------------- python side --

struct PyLogicalLine {
    size_t start = 0;      // byte offset of the physical line start
    size_t first_code = 0; // first non-whitespace byte
    size_t code_end = 0;   // one past the last code byte (comments trimmed)
    size_t end = 0;        // one past the final physical line (incl. newline)
    std::string indent;    // leading whitespace of the first physical line
    bool blank = true;     // no code at all (empty or comment-only)
};

struct PyScan {
    std::vector<PyLogicalLine> lines;
    int errors = 0;
};

inline PyScan py_scan(std::string_view src) {
    PyScan scan;
    size_t i = 0;
    const size_t n = src.size();
    while (i < n) {
        PyLogicalLine line;
        line.start = i;
        size_t j = i;
        while (j < n && (src[j] == ' ' || src[j] == '\t')) ++j;
        line.indent = std::string(src.substr(i, j - i));
        line.first_code = j;
        line.code_end = j;
        int depth = 0;
        bool done = false;
        while (j < n && !done) {
            char c = src[j];
            if (c == '#') {
                size_t eol = src.find('\n', j);
                j = eol == std::string_view::npos ? n : eol;
                continue;
            }
            if (c == '\'' || c == '"') {
                size_t str_start = j;
                if (j + 2 < n && src[j + 1] == c && src[j + 2] == c) {
                    j += 3;
                    bool closed = false;
                    while (j < n) {
                        if (src[j] == '\\' && j + 1 < n) {
                            j += 2;
                            continue;
                        }
                        if (j + 3 <= n && src[j] == c && src[j + 1] == c && src[j + 2] == c) {
                            j += 3;
                            closed = true;
                            break;
                        }
                        ++j;
                    }
                    if (!closed) ++scan.errors;
                } else {
                    ++j;
                    bool closed = false;
                    while (j < n) {
                        if (src[j] == '\\' && j + 1 < n) {
                            j += 2;
                            continue;
                        }
                        if (src[j] == c) {
                            ++j;
                            closed = true;
                            break;
                        }
                        if (src[j] == '\n') break;
                        ++j;
                    }
                    if (!closed) ++scan.errors;
                }
                (void)str_start;
                line.code_end = j;
                continue;
            }
            if (c == '(' || c == '[' || c == '{') {
                ++depth;
                line.code_end = ++j;
                continue;
            }
            if (c == ')' || c == ']' || c == '}') {
                --depth;
                if (depth < 0) ++scan.errors;
                line.code_end = ++j;
                continue;
            }
            if (c == '\\' && j + 1 < n && src[j + 1] == '\n') {
                j += 2; // explicit continuation
                continue;
            }
            if (c == '\n') {
                if (depth > 0) {
                    ++j; // implicit continuation inside brackets
                    continue;
                }
                done = true;
                ++j;
                continue;
            }
            if (c != ' ' && c != '\t' && c != '\r') line.code_end = j + 1;
            ++j;
        }
        if (depth > 0) ++scan.errors;
        line.end = j;
        line.blank = line.code_end <= line.first_code;
        scan.lines.push_back(std::move(line));
        i = j;
    }
    return scan;
}

inline std::string_view py_first_word(std::string_view src, const PyLogicalLine& line) {
    size_t i = line.first_code;
    size_t j = i;
    while (j < line.code_end && ident_cont(static_cast<unsigned char>(src[j]))) ++j;
    return src.substr(i, j - i);
}

// Does the logical line's code end with ':' at bracket depth zero, and where?
inline size_t py_header_colon(std::string_view src, const PyLogicalLine& line) {
    // We re-scan the code portion, skipping strings/comments, tracking the
    // last top-level ':'; a compound header ends with it.
    size_t last_colon = std::string_view::npos;
    int depth = 0;
    size_t j = line.first_code;
    while (j < line.code_end) {
        char c = src[j];
        if (c == '#') break;
        if (c == '\'' || c == '"') {
            char q = c;
            if (j + 2 < line.code_end && src[j + 1] == q && src[j + 2] == q) {
                j += 3;
                while (j + 3 <= line.code_end &&
                       !(src[j] == q && src[j + 1] == q && src[j + 2] == q)) {
                    j += (src[j] == '\\') ? 2 : 1;
                }
                j = std::min(j + 3, line.code_end);
            } else {
                ++j;
                while (j < line.code_end && src[j] != q) {
                    j += (src[j] == '\\') ? 2 : 1;
                }
                if (j < line.code_end) ++j;
            }
            continue;
        }
        if (c == '(' || c == '[' || c == '{') ++depth;
        if (c == ')' || c == ']' || c == '}') --depth;
        if (c == ':' && depth == 0) last_colon = j;
        ++j;
    }
    if (last_colon == std::string_view::npos) return std::string_view::npos;
    // colon must be the last code character for a block header
    for (size_t k = last_colon + 1; k < line.code_end; ++k) {
        if (src[k] != ' ' && src[k] != '\t') return std::string_view::npos;
    }
    return last_colon;
}

struct PyParser {
    std::string_view src;
    const std::vector<PyLogicalLine>& lines;
    std::vector<SyntaxNode>& nodes;
    int errors = 0;

    static bool compound_word(std::string_view w) {
        return w == "if" || w == "elif" || w == "else" || w == "for" ||
               w == "while" || w == "try" || w == "except" || w == "finally" ||
               w == "with" || w == "def" || w == "class" || w == "async";
    }
    static bool chain_word(std::string_view w) {
        return w == "elif" || w == "else" || w == "except" || w == "finally";
    }

    size_t next_code_line(size_t i) const {
        while (i < lines.size() && lines[i].blank) ++i;
        return i;
    }

    // Parse the block of statements at `indent` starting at line i; returns
    // (next line index, end byte of last statement). Emits nodes.
    std::pair<size_t, size_t> parse_block(size_t i, const std::string& indent) {
        size_t last_end = 0;
        bool any = false;
        while (true) {
            i = next_code_line(i);
            if (i >= lines.size()) break;
            const auto& line = lines[i];
            if (line.indent != indent) {
                if (line.indent.size() > indent.size() &&
                    line.indent.compare(0, indent.size(), indent) == 0) {
                    // deeper than expected: indentation error
                    ++errors;
                    ++i;
                    continue;
                }
                break; // dedent: block ends
            }
            auto [next, end] = parse_statement(i);
            last_end = end;
            any = true;
            i = next;
        }
        if (!any) ++errors; // empty suite
        return {i, last_end};
    }

    // Parse one statement starting at line i (indent already verified).
    // Returns (next line index, end byte).
    std::pair<size_t, size_t> parse_statement(size_t i) {
        const auto& line = lines[i];
        std::string_view word = py_first_word(src, line);
        bool is_async = word == "async";
        std::string_view effective = word;
        if (is_async) {
            size_t p = line.first_code + 5;
            while (p < line.code_end && src[p] == ' ') ++p;
            size_t q = p;
            while (q < line.code_end && ident_cont(static_cast<unsigned char>(src[q]))) ++q;
            effective = src.substr(p, q - p);
        }

        // decorators attach to the following def/class; no node of their own
        if (src[line.first_code] == '@') {
            return {i + 1, line.code_end};
        }

        if (compound_word(effective) && !chain_word(effective)) {
            size_t colon = py_header_colon(src, line);
            if (colon == std::string_view::npos) {
                ++errors;
                emit_simple(line);
                return {i + 1, line.code_end};
            }
            size_t begin = line.first_code;
            size_t end;
            size_t next;
            // inline suite: "if x: y = 1"
            size_t after = colon + 1;
            while (after < line.code_end && (src[after] == ' ' || src[after] == '\t')) ++after;
            if (after < line.code_end) {
                PyLogicalLine inline_body = line;
                inline_body.first_code = after;
                emit_simple(inline_body);
                end = line.code_end;
                next = i + 1;
            } else {
                size_t body = next_code_line(i + 1);
                if (body >= lines.size() ||
                    !(lines[body].indent.size() > line.indent.size() &&
                      lines[body].indent.compare(0, line.indent.size(), line.indent) == 0)) {
                    ++errors;
                    return {i + 1, line.code_end};
                }
                auto [after_block, block_end] = parse_block(body, lines[body].indent);
                end = block_end == 0 ? line.code_end : block_end;
                next = after_block;
            }
            // chained clauses at the same indent (else/elif/except/finally)
            if (effective == "if" || effective == "for" || effective == "while" ||
                effective == "try") {
                while (true) {
                    size_t k = next_code_line(next);
                    if (k >= lines.size() || lines[k].indent != line.indent) break;
                    std::string_view w2 = py_first_word(src, lines[k]);
                    bool chains = (effective == "if" && (w2 == "elif" || w2 == "else")) ||
                                  ((effective == "for" || effective == "while") && w2 == "else") ||
                                  (effective == "try" &&
                                   (w2 == "except" || w2 == "else" || w2 == "finally"));
                    if (!chains) break;
                    auto [n2, e2] = parse_clause(k);
                    next = n2;
                    if (e2 > end) end = e2;
                }
            }
            std::string kind;
            if (effective == "def") kind = "function_definition";
            else if (effective == "class") kind = "class_definition";
            else if (effective == "if") kind = "if_statement";
            else if (effective == "for") kind = "for_statement";
            else if (effective == "while") kind = "while_statement";
            else if (effective == "try") kind = "try_statement";
            else kind = "with_statement";
            NodeLevel level = kind == "function_definition" ? NodeLevel::function : NodeLevel::statement;
            nodes.push_back({kind, level, begin, end});
            if (effective == "return") {} // unreachable; silences no-op warning
            return {next, end};
        }

        if (chain_word(effective)) {
            // chain clause reached at statement position: structural error
            ++errors;
            return {i + 1, line.code_end};
        }

        emit_simple(line);
        return {i + 1, line.code_end};
    }

    // else/elif/except/finally clause: header + suite, no node of its own.
    std::pair<size_t, size_t> parse_clause(size_t i) {
        const auto& line = lines[i];
        size_t colon = py_header_colon(src, line);
        if (colon == std::string_view::npos) {
            ++errors;
            return {i + 1, line.code_end};
        }
        size_t after = colon + 1;
        while (after < line.code_end && (src[after] == ' ' || src[after] == '\t')) ++after;
        if (after < line.code_end) {
            PyLogicalLine inline_body = line;
            inline_body.first_code = after;
            emit_simple(inline_body);
            return {i + 1, line.code_end};
        }
        size_t body = next_code_line(i + 1);
        if (body >= lines.size() ||
            !(lines[body].indent.size() > line.indent.size() &&
              lines[body].indent.compare(0, line.indent.size(), line.indent) == 0)) {
            ++errors;
            return {i + 1, line.code_end};
        }
        auto [after_block, block_end] = parse_block(body, lines[body].indent);
        return {after_block, block_end == 0 ? line.code_end : block_end};
    }

    void emit_simple(const PyLogicalLine& line) {
        size_t begin = line.first_code;
        size_t end = line.code_end;
        if (end <= begin) return;
        nodes.push_back({"simple_statement", NodeLevel::statement, begin, end});
        extract_expressions(begin, end);
    }

    // Expression nodes inside a simple statement. Three deterministic kinds,
    // all matching CPython ast extents on decorator/comment-free code:
    // assignment RHS, return value, and a bare call spanning the whole
    // statement.
    void extract_expressions(size_t begin, size_t end) {
        std::string_view text = src.substr(begin, end - begin);
        // return value
        if (text.substr(0, 6) == "return" &&
            (text.size() == 6 || !ident_cont(static_cast<unsigned char>(text[6])))) {
            size_t v = 6;
            while (v < text.size() && (text[v] == ' ' || text[v] == '\t')) ++v;
            if (v < text.size()) {
                nodes.push_back({"return_expression", NodeLevel::expression, begin + v, end});
            }
            return;
        }
        // last top-level assignment '='
        int depth = 0;
        size_t assign = std::string_view::npos;
        for (size_t i = 0; i < text.size(); ++i) {
            char c = text[i];
            if (c == '\'' || c == '"') {
                char q = c;
                ++i;
                while (i < text.size() && text[i] != q) {
                    i += (text[i] == '\\') ? 2 : 1;
                }
                continue;
            }
            if (c == '(' || c == '[' || c == '{') ++depth;
            if (c == ')' || c == ']' || c == '}') --depth;
            if (depth != 0 || c != '=') continue;
            bool next_eq = i + 1 < text.size() && text[i + 1] == '=';
            bool prev_op = i > 0 && std::string_view("=!<>+-*/%&|^@:").find(text[i - 1]) !=
                                        std::string_view::npos;
            if (next_eq) {
                ++i; // skip '=='
                continue;
            }
            if (prev_op && text[i - 1] != ':' &&
                std::string_view("=!<>").find(text[i - 1]) != std::string_view::npos) {
                continue;
            }
            assign = i;
        }
        if (assign != std::string_view::npos) {
            size_t v = assign + 1;
            while (v < text.size() && (text[v] == ' ' || text[v] == '\t')) ++v;
            if (v < text.size()) {
                nodes.push_back({"assignment_rhs", NodeLevel::expression, begin + v, end});
            }
            return;
        }
        // bare call statement: ident(.ident)* ( ... ) where the opening
        // paren's match is the final character of the statement
        size_t i = 0;
        while (i < text.size() &&
               (ident_cont(static_cast<unsigned char>(text[i])) || text[i] == '.')) {
            ++i;
        }
        if (i == 0 || !ident_start(static_cast<unsigned char>(text[0]))) return;
        if (i >= text.size() || text[i] != '(' || text.back() != ')') return;
        int call_depth = 0;
        size_t close = std::string_view::npos;
        for (size_t k = i; k < text.size(); ++k) {
            char c = text[k];
            if (c == '\'' || c == '"') {
                char q = c;
                ++k;
                while (k < text.size() && text[k] != q) {
                    k += (text[k] == '\\') ? 2 : 1;
                }
                continue;
            }
            if (c == '(' || c == '[' || c == '{') ++call_depth;
            if (c == ')' || c == ']' || c == '}') {
                --call_depth;
                if (call_depth == 0) {
                    close = k;
                    break;
                }
            }
        }
        if (close == text.size() - 1) {
            nodes.push_back({"call_expression", NodeLevel::expression, begin, end});
        }
    }
};

inline SyntaxTree parse_python(std::string_view src) {
    SyntaxTree tree;
    PyScan scan = py_scan(src);
    tree.error_count = scan.errors;
    if (scan.errors > 0) {
        tree.valid = false;
        return tree;
    }
    PyParser parser{src, scan.lines, tree.nodes, 0};
    size_t i = parser.next_code_line(0);
    while (i < scan.lines.size()) {
        const auto& line = scan.lines[i];
        if (!line.indent.empty()) {
            ++parser.errors; // top-level statements must be unindented
            ++i;
            i = parser.next_code_line(i);
            continue;
        }
        auto [next, _] = parser.parse_statement(i);
        i = parser.next_code_line(next);
    }
    tree.error_count += parser.errors;
    tree.valid = tree.error_count == 0;
    if (!tree.valid) {
        tree.nodes.clear();
        return tree;
    }
    std::sort(tree.nodes.begin(), tree.nodes.end(), [](const SyntaxNode& a, const SyntaxNode& b) {
        if (a.begin != b.begin) return a.begin < b.begin;
        if (a.end != b.end) return a.end > b.end;
        return a.kind < b.kind;
    });
    return tree;
}

} // namespace syntax_detail

// Parse a source file with the embedded grammar for its language.
inline SyntaxTree parse_source(Language lang, std::string_view content) {
    switch (lang) {
        case Language::python:
            return syntax_detail::parse_python(content);
        case Language::java:
        case Language::typescript:
        case Language::csharp:
            return syntax_detail::parse_cfamily(lang, content);
        case Language::unknown:
            break;
    }
    raise(ErrorCode::unsupported_language, "no embedded grammar for this language");
}

inline ParseReport report_from_tree(const SyntaxTree& tree) {
    ParseReport report;
    report.syntactically_valid = tree.valid;
    report.parse_error_count = tree.error_count;
    report.node_counts[NodeLevel::expression] = 0;
    report.node_counts[NodeLevel::statement] = 0;
    report.node_counts[NodeLevel::function] = 0;
    for (const auto& n : tree.nodes) ++report.node_counts[n.level];
    return report;
}

// Validate the syntactic structure of a source file and classify its parse
// nodes into the three span levels.
inline ParseReport validate_syntax(const SourceFile& file) {
    return report_from_tree(parse_source(file.language, file.content));
}

} // namespace forge
