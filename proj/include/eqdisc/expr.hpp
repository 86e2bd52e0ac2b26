#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "eqdisc/errors.hpp"
#include "eqdisc/schema.hpp"

namespace eqdisc {

enum class NodeKind { Number, Coeff, Var, Unary, Binary };
enum class UnaryOp { Neg, Sqrt, Ln, Exp, Sin, Cos, Abs };
enum class BinaryOp { Add, Sub, Mul, Div, Pow };

struct ExprNode;
using NodeRef = std::shared_ptr<const ExprNode>;

// Immutable after construction; shared freely across threads.
struct ExprNode {
    NodeKind kind;
    double value = 0.0;     // Number
    int slot = -1;          // Coeff
    std::string name;       // Var
    UnaryOp uop = UnaryOp::Neg;
    BinaryOp bop = BinaryOp::Add;
    NodeRef lhs; // unary operand lives here
    NodeRef rhs;
};

NodeRef make_number(double v);
NodeRef make_coeff(int slot);
NodeRef make_var(std::string name);
NodeRef make_unary(UnaryOp op, NodeRef operand);
NodeRef make_binary(BinaryOp op, NodeRef lhs, NodeRef rhs);

struct ExprLimits {
    int max_depth = 32;
    int max_nodes = 512;
};

struct ParseError : Error {
    ParseError(std::size_t pos, const std::string& message)
        : Error("parse error at " + std::to_string(pos) + ": " + message), position(pos) {}
    std::size_t position;
};

/// A candidate analytical model: an expression tree over named input
/// variables and coefficient slots a0..a<k-1>.
class Expression {
public:
    Expression() = default;
    explicit Expression(NodeRef root);

    const NodeRef& root() const { return root_; }
    bool empty() const { return root_ == nullptr; }
    int coefficient_count() const { return coeff_count_; }
    const std::vector<std::string>& variables() const { return variables_; } // first-appearance order

    std::size_t node_count() const;
    int depth() const;

    // Canonical text with minimal parentheses and a<k> coefficient slots.
    std::string render() const;
    // Same, with fitted coefficient values substituted for the slots.
    std::string render_with(std::span<const double> coeffs) const;

    // Domain violations (sqrt/ln of a negative, division by zero, overflow)
    // propagate as non-finite values instead of throwing.
    double evaluate(std::span<const double> coeffs,
                    const std::unordered_map<std::string, double>& point) const;
    double evaluate(std::span<const double> coeffs,
                    const std::function<double(const std::string&)>& var_value) const;

private:
    NodeRef root_;
    int coeff_count_ = 0;
    std::vector<std::string> variables_;
};

bool structurally_equal(const Expression& a, const Expression& b);

/// Coefficient slots renumbered to 0..k-1 by first appearance, unary minus
/// folded into numeric literals. Idempotent.
Expression normalize(const Expression& expr);

/// Parses DSL text, resolving variable tokens (names or aliases) against the
/// schema and normalizing the result.
Expression parse_expression(std::string_view text, const ProcessSchema& schema,
                            const ExprLimits& limits = {});

/// Syntax-only parse: any identifier that is not a coefficient or function is
/// accepted as a variable. Used to vet extracted generator output.
Expression parse_expression_permissive(std::string_view text, const ExprLimits& limits = {});

struct SubstitutionRule {
    std::string from;
    std::string to;
    bool word_boundary = false; // only replace when not embedded in an identifier
};

std::vector<SubstitutionRule> default_substitution_rules();
std::vector<SubstitutionRule> load_substitution_rules(const std::string& path);
std::string apply_substitutions(std::string text, std::span<const SubstitutionRule> rules);

/// Recovers a single DSL expression from raw generator output: strips code
/// fences and function-definition wrappers, follows the return path, and
/// applies the substitution table. Throws DataError("no expression found")
/// when nothing usable remains.
std::string extract_candidate(const std::string& raw,
                              std::span<const SubstitutionRule> rules);
std::string extract_candidate(const std::string& raw);

struct LiftResult {
    Expression expr;
    std::vector<double> initial_values; // one per new slot, in slot order
};

/// Replaces numeric literals (except integer exponents of power nodes) with
/// fresh coefficient slots appended after any existing ones. A literal that
/// forms the leading factor of a subtracted term is lifted with a negated
/// initial value and the subtraction becomes an addition, so a - 0.5*b turns
/// into a + a<k>*b with initial -0.5.
LiftResult lift_constants(const Expression& expr);

/// Numeric superposition probe: true iff f(x; u) is affine in the coefficient
/// vector u at randomly drawn positive inputs. Non-finite probes report false.
bool is_linear_in_coefficients(const Expression& expr);

} // namespace eqdisc
