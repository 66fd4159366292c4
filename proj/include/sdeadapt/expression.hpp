#pragma once

#include <cctype>
#include <charconv>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sdeadapt {

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& msg, std::size_t pos)
        : std::runtime_error(msg + " (at position " + std::to_string(pos) + ")"),
          position(pos) {}
    std::size_t position;
};

namespace expr {

// Grammar: expr := term (('+'|'-') term)*
//          term := factor (('*'|'/') factor)*
//          factor := unary ('^' factor)?
//          unary := '-' unary | primary
//          primary := number | 'x' | ident '(' expr ')' | '(' expr ')'
// Smooth primitives only; derivatives are supplied separately in config, not
// differentiated here.
struct Node {
    enum class Kind { constant, variable, add, sub, mul, div, pow, neg, call } kind;
    double value = 0.0;
    double (*fn)(double) = nullptr;
    std::shared_ptr<Node> lhs, rhs;
};

using NodePtr = std::shared_ptr<Node>;

inline double eval(const Node& n, double x) {
    using Kind = Node::Kind;
    switch (n.kind) {
        case Kind::constant: return n.value;
        case Kind::variable: return x;
        case Kind::add: return eval(*n.lhs, x) + eval(*n.rhs, x);
        case Kind::sub: return eval(*n.lhs, x) - eval(*n.rhs, x);
        case Kind::mul: return eval(*n.lhs, x) * eval(*n.rhs, x);
        case Kind::div: return eval(*n.lhs, x) / eval(*n.rhs, x);
        case Kind::pow: return std::pow(eval(*n.lhs, x), eval(*n.rhs, x));
        case Kind::neg: return -eval(*n.lhs, x);
        case Kind::call: return n.fn(eval(*n.lhs, x));
    }
    return 0.0;
}

class Parser {
public:
    explicit Parser(std::string_view src) : src_(src) {}

    NodePtr parse() {
        auto n = parse_expr();
        skip_ws();
        if (pos_ != src_.size()) throw ParseError("unexpected trailing input", pos_);
        return n;
    }

private:
    static NodePtr make(Node n) { return std::make_shared<Node>(std::move(n)); }

    void skip_ws() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }
    bool consume(char c) {
        skip_ws();
        if (pos_ < src_.size() && src_[pos_] == c) { ++pos_; return true; }
        return false;
    }
    char peek() {
        skip_ws();
        return pos_ < src_.size() ? src_[pos_] : '\0';
    }

    NodePtr parse_expr() {
        auto lhs = parse_term();
        while (true) {
            if (consume('+')) lhs = make({Node::Kind::add, 0, nullptr, lhs, parse_term()});
            else if (consume('-')) lhs = make({Node::Kind::sub, 0, nullptr, lhs, parse_term()});
            else return lhs;
        }
    }
    NodePtr parse_term() {
        auto lhs = parse_factor();
        while (true) {
            if (consume('*')) lhs = make({Node::Kind::mul, 0, nullptr, lhs, parse_factor()});
            else if (consume('/')) lhs = make({Node::Kind::div, 0, nullptr, lhs, parse_factor()});
            else return lhs;
        }
    }
    NodePtr parse_factor() {
        auto base = parse_unary();
        if (consume('^'))
            return make({Node::Kind::pow, 0, nullptr, base, parse_factor()});
        return base;
    }
    NodePtr parse_unary() {
        if (consume('-')) return make({Node::Kind::neg, 0, nullptr, parse_unary(), nullptr});
        return parse_primary();
    }
    NodePtr parse_primary() {
        skip_ws();
        if (pos_ >= src_.size()) throw ParseError("unexpected end of expression", pos_);
        const char c = src_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
        if (c == '(') {
            ++pos_;
            auto inner = parse_expr();
            if (!consume(')')) throw ParseError("missing ')'", pos_);
            return inner;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_ident();
        throw ParseError(std::string("unexpected character '") + c + "'", pos_);
    }
    NodePtr parse_number() {
        const char* begin = src_.data() + pos_;
        const char* end = src_.data() + src_.size();
        double v = 0.0;
        auto [p, ec] = std::from_chars(begin, end, v);
        if (ec != std::errc{}) throw ParseError("bad number literal", pos_);
        pos_ = static_cast<std::size_t>(p - src_.data());
        return make({Node::Kind::constant, v, nullptr, nullptr, nullptr});
    }
    NodePtr parse_ident() {
        const std::size_t start = pos_;
        while (pos_ < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
            ++pos_;
        const std::string_view name = src_.substr(start, pos_ - start);
        if (name == "x") return make({Node::Kind::variable, 0, nullptr, nullptr, nullptr});
        if (name == "pi") return make({Node::Kind::constant, std::numbers::pi, nullptr, nullptr, nullptr});
        if (name == "e") return make({Node::Kind::constant, std::numbers::e, nullptr, nullptr, nullptr});

        struct Fn { std::string_view name; double (*fn)(double); };
        static constexpr Fn fns[] = {
            {"exp", [](double v) { return std::exp(v); }},
            {"log", [](double v) { return std::log(v); }},
            {"sin", [](double v) { return std::sin(v); }},
            {"cos", [](double v) { return std::cos(v); }},
            {"tanh", [](double v) { return std::tanh(v); }},
            {"sinh", [](double v) { return std::sinh(v); }},
            {"cosh", [](double v) { return std::cosh(v); }},
            {"sqrt", [](double v) { return std::sqrt(v); }},
        };
        for (const auto& f : fns) {
            if (name == f.name) {
                if (!consume('(')) throw ParseError("expected '(' after function name", pos_);
                auto arg = parse_expr();
                if (!consume(')')) throw ParseError("missing ')'", pos_);
                return make({Node::Kind::call, 0, f.fn, arg, nullptr});
            }
        }
        throw ParseError("unknown identifier '" + std::string(name) + "'", start);
    }

    std::string_view src_;
    std::size_t pos_ = 0;
};

} // namespace expr

/// Compile an expression in x to a callable. The returned closure owns the
/// parsed tree.
inline std::function<double(double)> compile_expression(const std::string& src) {
    auto root = expr::Parser(src).parse();
    return [root](double x) { return expr::eval(*root, x); };
}

} // namespace sdeadapt
