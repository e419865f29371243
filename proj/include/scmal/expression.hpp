#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Core>

namespace scmal {

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t position)
        : std::runtime_error(what + " at position " + std::to_string(position)), position_(position)
    {
    }

    std::size_t position() const { return position_; }

private:
    std::size_t position_;
};

/// Immutable expression tree for a structural function. The language has real
/// literals, parent references p0..p(k-1), binary + - *, unary minus, sin and
/// cos. Every operation is total, so evaluation at finite input is finite.
class Expression {
public:
    enum class Op { constant, parent, add, sub, mul, neg, sin, cos };

    static Expression constant(double value);
    static Expression parent(int index);
    static Expression binary(Op op, Expression lhs, Expression rhs);
    static Expression unary(Op op, Expression operand);

    Op op() const;
    double value() const;
    int index() const;

    double evaluate(std::span<const double> parents) const;

    /// Evaluates row-wise: row r of `parents` holds the parent values of sample r.
    Eigen::ArrayXd evaluate(const Eigen::Ref<const Eigen::MatrixXd>& parents) const;

    /// Largest referenced parent index, or -1 for a closed expression.
    int max_parent_index() const;

    /// Canonical text form; parse_expression(e.to_string()) rebuilds the same tree.
    std::string to_string() const;

    friend bool operator==(const Expression& a, const Expression& b);

private:
    struct Node;
    explicit Expression(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
    std::shared_ptr<const Node> node_;
};

/// Parses `source` into an expression over `arity` parents. Throws ParseError on
/// malformed input or a parent index >= arity.
Expression parse_expression(std::string_view source, int arity);

}  // namespace scmal
