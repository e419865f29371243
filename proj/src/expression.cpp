#include "scmal/expression.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cctype>
#include <cmath>
#include <cstring>
#include <utility>

namespace scmal {

struct Expression::Node {
    Op op;
    double value = 0.0;
    int index = -1;
    std::shared_ptr<const Node> lhs;
    std::shared_ptr<const Node> rhs;
};

Expression Expression::constant(double value)
{
    return Expression(std::make_shared<const Node>(Node{Op::constant, value, -1, nullptr, nullptr}));
}

Expression Expression::parent(int index)
{
    if (index < 0) throw std::invalid_argument("negative parent index");
    return Expression(std::make_shared<const Node>(Node{Op::parent, 0.0, index, nullptr, nullptr}));
}

Expression Expression::binary(Op op, Expression lhs, Expression rhs)
{
    if (op != Op::add && op != Op::sub && op != Op::mul) throw std::invalid_argument("not a binary operator");
    return Expression(std::make_shared<const Node>(Node{op, 0.0, -1, std::move(lhs.node_), std::move(rhs.node_)}));
}

Expression Expression::unary(Op op, Expression operand)
{
    if (op != Op::neg && op != Op::sin && op != Op::cos) throw std::invalid_argument("not a unary operator");
    return Expression(std::make_shared<const Node>(Node{op, 0.0, -1, std::move(operand.node_), nullptr}));
}

Expression::Op Expression::op() const { return node_->op; }
double Expression::value() const { return node_->value; }
int Expression::index() const { return node_->index; }

namespace {

template <class Node>
double eval_scalar(const Node& n, std::span<const double> p)
{
    using Op = Expression::Op;
    switch (n.op) {
    case Op::constant: return n.value;
    case Op::parent: return p[static_cast<std::size_t>(n.index)];
    case Op::add: return eval_scalar(*n.lhs, p) + eval_scalar(*n.rhs, p);
    case Op::sub: return eval_scalar(*n.lhs, p) - eval_scalar(*n.rhs, p);
    case Op::mul: return eval_scalar(*n.lhs, p) * eval_scalar(*n.rhs, p);
    case Op::neg: return -eval_scalar(*n.lhs, p);
    case Op::sin: return std::sin(eval_scalar(*n.lhs, p));
    case Op::cos: return std::cos(eval_scalar(*n.lhs, p));
    }
    return 0.0;
}

template <class Node>
Eigen::ArrayXd eval_batch(const Node& n, const Eigen::Ref<const Eigen::MatrixXd>& p)
{
    using Op = Expression::Op;
    switch (n.op) {
    case Op::constant: return Eigen::ArrayXd::Constant(p.rows(), n.value);
    case Op::parent: return p.col(n.index).array();
    case Op::add: return eval_batch(*n.lhs, p) + eval_batch(*n.rhs, p);
    case Op::sub: return eval_batch(*n.lhs, p) - eval_batch(*n.rhs, p);
    case Op::mul: return eval_batch(*n.lhs, p) * eval_batch(*n.rhs, p);
    case Op::neg: return -eval_batch(*n.lhs, p);
    case Op::sin: return eval_batch(*n.lhs, p).sin();
    case Op::cos: return eval_batch(*n.lhs, p).cos();
    }
    return {};
}

template <class Node>
int max_index(const Node& n)
{
    int m = n.index;
    if (n.lhs) m = std::max(m, max_index(*n.lhs));
    if (n.rhs) m = std::max(m, max_index(*n.rhs));
    return m;
}

template <class Node>
bool equal(const Node& a, const Node& b)
{
    if (a.op != b.op || a.index != b.index) return false;
    if (a.op == Expression::Op::constant && std::memcmp(&a.value, &b.value, sizeof(double)) != 0) return false;
    if (static_cast<bool>(a.lhs) != static_cast<bool>(b.lhs) || static_cast<bool>(a.rhs) != static_cast<bool>(b.rhs))
        return false;
    if (a.lhs && !equal(*a.lhs, *b.lhs)) return false;
    if (a.rhs && !equal(*a.rhs, *b.rhs)) return false;
    return true;
}

std::string format_number(double v)
{
    std::array<char, 64> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), end);
}

// Binding strength: sums 1, products 2, prefix minus 3, atoms 4.
template <class Node>
int precedence(const Node& n)
{
    using Op = Expression::Op;
    switch (n.op) {
    case Op::add:
    case Op::sub: return 1;
    case Op::mul: return 2;
    case Op::neg: return 3;
    case Op::constant: return n.value < 0 || std::signbit(n.value) ? 3 : 4;
    default: return 4;
    }
}

template <class Node>
std::string print(const Node& n)
{
    using Op = Expression::Op;
    auto wrap = [](const Node& child, bool parens) {
        std::string s = print(child);
        return parens ? "(" + s + ")" : s;
    };
    switch (n.op) {
    case Op::constant: return format_number(n.value);
    case Op::parent: return "p" + std::to_string(n.index);
    case Op::sin: return "sin(" + print(*n.lhs) + ")";
    case Op::cos: return "cos(" + print(*n.lhs) + ")";
    case Op::neg: return "-" + wrap(*n.lhs, precedence(*n.lhs) < 3);
    default: break;
    }
    const int p = precedence(n);
    const char* sym = n.op == Op::add ? " + " : n.op == Op::sub ? " - " : "*";
    return wrap(*n.lhs, precedence(*n.lhs) < p) + sym + wrap(*n.rhs, precedence(*n.rhs) <= p);
}

class Parser {
public:
    Parser(std::string_view src, int arity) : src_(src), arity_(arity) {}

    Expression parse()
    {
        Expression e = sum();
        skip_space();
        if (pos_ != src_.size()) fail("unexpected character '" + std::string(1, src_[pos_]) + "'");
        return e;
    }

private:
    [[noreturn]] void fail(const std::string& what) const { throw ParseError(what, pos_); }

    void skip_space()
    {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }

    bool accept(char c)
    {
        skip_space();
        if (pos_ < src_.size() && src_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect(char c)
    {
        if (!accept(c)) fail(std::string("expected '") + c + "'");
    }

    Expression sum()
    {
        Expression lhs = product();
        for (;;) {
            if (accept('+'))
                lhs = Expression::binary(Expression::Op::add, lhs, product());
            else if (accept('-'))
                lhs = Expression::binary(Expression::Op::sub, lhs, product());
            else
                return lhs;
        }
    }

    Expression product()
    {
        Expression lhs = factor();
        while (accept('*')) lhs = Expression::binary(Expression::Op::mul, lhs, factor());
        return lhs;
    }

    Expression factor()
    {
        if (accept('-')) {
            Expression operand = factor();
            if (operand.op() == Expression::Op::constant) return Expression::constant(-operand.value());
            return Expression::unary(Expression::Op::neg, operand);
        }
        if (accept('+')) return factor();
        return primary();
    }

    Expression primary()
    {
        skip_space();
        if (pos_ >= src_.size()) fail("unexpected end of input");
        const char c = src_[pos_];
        if (c == '(') {
            ++pos_;
            Expression e = sum();
            expect(')');
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (std::isalpha(static_cast<unsigned char>(c))) return identifier();
        fail("unexpected character '" + std::string(1, c) + "'");
    }

    Expression number()
    {
        const std::size_t start = pos_;
        auto digits = [&] {
            while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
        };
        digits();
        if (pos_ < src_.size() && src_[pos_] == '.') {
            ++pos_;
            digits();
        }
        if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
            ++pos_;
            if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
            const std::size_t exp_start = pos_;
            digits();
            if (pos_ == exp_start) fail("malformed exponent");
        }
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(src_.data() + start, src_.data() + pos_, v);
        if (ec != std::errc() || ptr != src_.data() + pos_ || !std::isfinite(v)) {
            pos_ = start;
            fail("malformed number");
        }
        return Expression::constant(v);
    }

    Expression identifier()
    {
        const std::size_t start = pos_;
        while (pos_ < src_.size() && std::isalnum(static_cast<unsigned char>(src_[pos_]))) ++pos_;
        const std::string_view word = src_.substr(start, pos_ - start);
        if (word == "sin" || word == "cos") {
            expect('(');
            Expression arg = sum();
            expect(')');
            return Expression::unary(word == "sin" ? Expression::Op::sin : Expression::Op::cos, arg);
        }
        if (word.size() > 1 && word[0] == 'p' &&
            std::all_of(word.begin() + 1, word.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); })) {
            int index = 0;
            auto [ptr, ec] = std::from_chars(word.data() + 1, word.data() + word.size(), index);
            if (ec != std::errc() || index >= arity_) {
                pos_ = start;
                fail("parent reference " + std::string(word) + " out of range for arity " + std::to_string(arity_));
            }
            return Expression::parent(index);
        }
        pos_ = start;
        fail("unknown identifier '" + std::string(word) + "'");
    }

    std::string_view src_;
    int arity_;
    std::size_t pos_ = 0;
};

}  // namespace

double Expression::evaluate(std::span<const double> parents) const { return eval_scalar(*node_, parents); }

Eigen::ArrayXd Expression::evaluate(const Eigen::Ref<const Eigen::MatrixXd>& parents) const
{
    return eval_batch(*node_, parents);
}

int Expression::max_parent_index() const { return max_index(*node_); }

std::string Expression::to_string() const { return print(*node_); }

bool operator==(const Expression& a, const Expression& b) { return equal(*a.node_, *b.node_); }

Expression parse_expression(std::string_view source, int arity)
{
    if (arity < 0) throw std::invalid_argument("negative arity");
    return Parser(source, arity).parse();
}

}  // namespace scmal
