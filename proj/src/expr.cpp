#include "eqdisc/expr.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

namespace eqdisc {

NodeRef make_number(double v) {
    auto n = std::make_shared<ExprNode>();
    n->kind = NodeKind::Number;
    n->value = v;
    return n;
}

NodeRef make_coeff(int slot) {
    auto n = std::make_shared<ExprNode>();
    n->kind = NodeKind::Coeff;
    n->slot = slot;
    return n;
}

NodeRef make_var(std::string name) {
    auto n = std::make_shared<ExprNode>();
    n->kind = NodeKind::Var;
    n->name = std::move(name);
    return n;
}

NodeRef make_unary(UnaryOp op, NodeRef operand) {
    auto n = std::make_shared<ExprNode>();
    n->kind = NodeKind::Unary;
    n->uop = op;
    n->lhs = std::move(operand);
    return n;
}

NodeRef make_binary(BinaryOp op, NodeRef lhs, NodeRef rhs) {
    auto n = std::make_shared<ExprNode>();
    n->kind = NodeKind::Binary;
    n->bop = op;
    n->lhs = std::move(lhs);
    n->rhs = std::move(rhs);
    return n;
}

namespace {

std::size_t count_nodes(const NodeRef& n) {
    if (!n) return 0;
    return 1 + count_nodes(n->lhs) + count_nodes(n->rhs);
}

int tree_depth(const NodeRef& n) {
    if (!n) return 0;
    return 1 + std::max(tree_depth(n->lhs), tree_depth(n->rhs));
}

void collect_meta(const NodeRef& n, int& max_slot, std::vector<std::string>& vars) {
    if (!n) return;
    if (n->kind == NodeKind::Coeff) max_slot = std::max(max_slot, n->slot);
    if (n->kind == NodeKind::Var && std::find(vars.begin(), vars.end(), n->name) == vars.end())
        vars.push_back(n->name);
    collect_meta(n->lhs, max_slot, vars);
    collect_meta(n->rhs, max_slot, vars);
}

} // namespace

Expression::Expression(NodeRef root) : root_(std::move(root)) {
    int max_slot = -1;
    collect_meta(root_, max_slot, variables_);
    coeff_count_ = max_slot + 1;
}

std::size_t Expression::node_count() const { return count_nodes(root_); }
int Expression::depth() const { return tree_depth(root_); }

// ---------------------------------------------------------------------------
// Tokenizer

namespace {

enum class Tok { Num, Ident, Plus, Minus, Star, Slash, Caret, LParen, RParen, End };

struct Token {
    Tok kind;
    std::size_t pos;
    double number = 0.0;
    std::string text;
};

std::vector<Token> tokenize(std::string_view src) {
    std::vector<Token> out;
    std::size_t i = 0;
    const std::size_t n = src.size();
    auto isident0 = [](char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; };
    auto isident = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };

    while (i < n) {
        const char c = src[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) ||
            (c == '.' && i + 1 < n && std::isdigit(static_cast<unsigned char>(src[i + 1])))) {
            double value = 0.0;
            const char* first = src.data() + i;
            const char* last = src.data() + n;
            auto [ptr, ec] = std::from_chars(first, last, value);
            if (ec != std::errc() || !std::isfinite(value))
                throw ParseError(i, "bad numeric literal");
            out.push_back({Tok::Num, i, value, std::string(first, ptr)});
            i = static_cast<std::size_t>(ptr - src.data());
            continue;
        }
        if (isident0(c)) {
            std::size_t j = i + 1;
            while (j < n && isident(src[j])) ++j;
            out.push_back({Tok::Ident, i, 0.0, std::string(src.substr(i, j - i))});
            i = j;
            continue;
        }
        Tok kind;
        switch (c) {
        case '+': kind = Tok::Plus; break;
        case '-': kind = Tok::Minus; break;
        case '*': kind = Tok::Star; break;
        case '/': kind = Tok::Slash; break;
        case '^': kind = Tok::Caret; break;
        case '(': kind = Tok::LParen; break;
        case ')': kind = Tok::RParen; break;
        default:
            throw ParseError(i, std::string("unexpected character '") + c + "'");
        }
        out.push_back({kind, i});
        ++i;
    }
    out.push_back({Tok::End, n});
    return out;
}

bool coeff_slot(const std::string& ident, int& slot, std::size_t pos) {
    if (ident.size() < 2 || ident[0] != 'a') return false;
    long value = 0;
    for (std::size_t i = 1; i < ident.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(ident[i]))) return false;
        value = value * 10 + (ident[i] - '0');
        if (value > 100000) throw ParseError(pos, "coefficient index too large: " + ident);
    }
    slot = static_cast<int>(value);
    return true;
}

bool function_op(const std::string& ident, UnaryOp& op) {
    if (ident == "sqrt") op = UnaryOp::Sqrt;
    else if (ident == "ln" || ident == "log") op = UnaryOp::Ln;
    else if (ident == "exp") op = UnaryOp::Exp;
    else if (ident == "sin") op = UnaryOp::Sin;
    else if (ident == "cos") op = UnaryOp::Cos;
    else if (ident == "abs") op = UnaryOp::Abs;
    else return false;
    return true;
}

// Recursive-descent parser for:
//   expression := term (('+'|'-') term)*
//   term       := factor (('*'|'/') factor)*
//   factor     := '-' factor | power
//   power      := atom ('^' factor)?        right-associative, above unary minus
//   atom       := number | coeff | func '(' expression ')' | var | '(' expression ')'
class Parser {
public:
    Parser(std::vector<Token> toks, const ProcessSchema* schema) : toks_(std::move(toks)), schema_(schema) {}

    NodeRef parse() {
        NodeRef e = expression();
        if (peek().kind != Tok::End)
            throw ParseError(peek().pos, "unexpected trailing input");
        return e;
    }

private:
    const Token& peek() const { return toks_[idx_]; }
    Token take() { return toks_[idx_++]; }
    bool accept(Tok k) {
        if (peek().kind == k) {
            ++idx_;
            return true;
        }
        return false;
    }

    NodeRef expression() {
        NodeRef lhs = term();
        for (;;) {
            if (accept(Tok::Plus)) lhs = make_binary(BinaryOp::Add, lhs, term());
            else if (accept(Tok::Minus)) lhs = make_binary(BinaryOp::Sub, lhs, term());
            else return lhs;
        }
    }

    NodeRef term() {
        NodeRef lhs = factor();
        for (;;) {
            if (accept(Tok::Star)) lhs = make_binary(BinaryOp::Mul, lhs, factor());
            else if (accept(Tok::Slash)) lhs = make_binary(BinaryOp::Div, lhs, factor());
            else return lhs;
        }
    }

    NodeRef factor() {
        if (accept(Tok::Minus)) return make_unary(UnaryOp::Neg, factor());
        return power();
    }

    NodeRef power() {
        NodeRef base = atom();
        if (accept(Tok::Caret)) return make_binary(BinaryOp::Pow, base, factor());
        return base;
    }

    NodeRef atom() {
        const Token t = take();
        switch (t.kind) {
        case Tok::Num:
            return make_number(t.number);
        case Tok::LParen: {
            NodeRef e = expression();
            if (!accept(Tok::RParen)) throw ParseError(peek().pos, "expected ')'");
            return e;
        }
        case Tok::Ident: {
            UnaryOp fop;
            if (function_op(t.text, fop)) {
                if (!accept(Tok::LParen))
                    throw ParseError(peek().pos, "expected '(' after function '" + t.text + "'");
                NodeRef arg = expression();
                if (!accept(Tok::RParen)) throw ParseError(peek().pos, "expected ')'");
                return make_unary(fop, arg);
            }
            int slot;
            if (coeff_slot(t.text, slot, t.pos)) return make_coeff(slot);
            if (schema_) {
                auto canonical = schema_->resolve_input(t.text);
                if (!canonical) throw ParseError(t.pos, "unknown variable '" + t.text + "'");
                return make_var(*canonical);
            }
            return make_var(t.text);
        }
        default:
            throw ParseError(t.pos, "expected a value");
        }
    }

    std::vector<Token> toks_;
    const ProcessSchema* schema_;
    std::size_t idx_ = 0;
};

// ---------------------------------------------------------------------------
// Normalization

NodeRef fold_neg(const NodeRef& n) {
    if (!n) return n;
    NodeRef lhs = fold_neg(n->lhs);
    NodeRef rhs = fold_neg(n->rhs);
    if (n->kind == NodeKind::Unary && n->uop == UnaryOp::Neg) {
        if (lhs->kind == NodeKind::Number) return make_number(-lhs->value);
        if (lhs->kind == NodeKind::Unary && lhs->uop == UnaryOp::Neg) return lhs->lhs;
    }
    if (lhs == n->lhs && rhs == n->rhs) return n;
    auto copy = std::make_shared<ExprNode>(*n);
    copy->lhs = std::move(lhs);
    copy->rhs = std::move(rhs);
    return copy;
}

void slot_order(const NodeRef& n, std::vector<int>& order) {
    if (!n) return;
    if (n->kind == NodeKind::Coeff &&
        std::find(order.begin(), order.end(), n->slot) == order.end())
        order.push_back(n->slot);
    slot_order(n->lhs, order);
    slot_order(n->rhs, order);
}

NodeRef renumber(const NodeRef& n, const std::unordered_map<int, int>& remap) {
    if (!n) return n;
    if (n->kind == NodeKind::Coeff) {
        const int target = remap.at(n->slot);
        return target == n->slot ? n : make_coeff(target);
    }
    NodeRef lhs = renumber(n->lhs, remap);
    NodeRef rhs = renumber(n->rhs, remap);
    if (lhs == n->lhs && rhs == n->rhs) return n;
    auto copy = std::make_shared<ExprNode>(*n);
    copy->lhs = std::move(lhs);
    copy->rhs = std::move(rhs);
    return copy;
}

} // namespace

Expression normalize(const Expression& expr) {
    if (expr.empty()) return expr;
    NodeRef root = fold_neg(expr.root());
    std::vector<int> order;
    slot_order(root, order);
    std::unordered_map<int, int> remap;
    for (std::size_t i = 0; i < order.size(); ++i) remap[order[i]] = static_cast<int>(i);
    return Expression(renumber(root, remap));
}

namespace {

void enforce_limits(const Expression& e, const ExprLimits& limits) {
    if (static_cast<int>(e.node_count()) > limits.max_nodes)
        throw ParseError(0, "expression exceeds node limit (" + std::to_string(limits.max_nodes) + ")");
    if (e.depth() > limits.max_depth)
        throw ParseError(0, "expression exceeds depth limit (" + std::to_string(limits.max_depth) + ")");
}

} // namespace

Expression parse_expression(std::string_view text, const ProcessSchema& schema, const ExprLimits& limits) {
    if (text.find_first_not_of(" \t\r\n") == std::string_view::npos)
        throw ParseError(0, "empty expression");
    Parser parser(tokenize(text), &schema);
    Expression e = normalize(Expression(parser.parse()));
    enforce_limits(e, limits);
    return e;
}

Expression parse_expression_permissive(std::string_view text, const ExprLimits& limits) {
    if (text.find_first_not_of(" \t\r\n") == std::string_view::npos)
        throw ParseError(0, "empty expression");
    Parser parser(tokenize(text), nullptr);
    Expression e = normalize(Expression(parser.parse()));
    enforce_limits(e, limits);
    return e;
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

std::string format_number(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

const char* unary_name(UnaryOp op) {
    switch (op) {
    case UnaryOp::Sqrt: return "sqrt";
    case UnaryOp::Ln: return "ln";
    case UnaryOp::Exp: return "exp";
    case UnaryOp::Sin: return "sin";
    case UnaryOp::Cos: return "cos";
    case UnaryOp::Abs: return "abs";
    case UnaryOp::Neg: return "-";
    }
    return "?";
}

// Precedence levels used by the renderer: 1 add/sub, 2 mul/div, 3 unary
// minus and negative literals, 4 power, 6 atoms and function calls.
int precedence(const ExprNode& n) {
    switch (n.kind) {
    case NodeKind::Number: return std::signbit(n.value) ? 3 : 6;
    case NodeKind::Coeff:
    case NodeKind::Var: return 6;
    case NodeKind::Unary: return n.uop == UnaryOp::Neg ? 3 : 6;
    case NodeKind::Binary:
        switch (n.bop) {
        case BinaryOp::Add:
        case BinaryOp::Sub: return 1;
        case BinaryOp::Mul:
        case BinaryOp::Div: return 2;
        case BinaryOp::Pow: return 4;
        }
    }
    return 6;
}

// True when the rendered form would start with '-': a negative literal, a
// unary minus, or a product/power chain led by one.
bool negative_leading(const ExprNode& n) {
    if (n.kind == NodeKind::Number) return std::signbit(n.value);
    if (n.kind == NodeKind::Unary) return n.uop == UnaryOp::Neg;
    if (n.kind == NodeKind::Binary) return negative_leading(*n.lhs);
    return false;
}

void render_node(const NodeRef& n, std::string& out);

void render_child(const NodeRef& child, std::string& out, int min_prec, bool no_negative_leading) {
    const bool parens = precedence(*child) < min_prec ||
                        (no_negative_leading && negative_leading(*child));
    if (parens) out += '(';
    render_node(child, out);
    if (parens) out += ')';
}

void render_node(const NodeRef& n, std::string& out) {
    switch (n->kind) {
    case NodeKind::Number:
        out += format_number(n->value);
        return;
    case NodeKind::Coeff:
        out += 'a';
        out += std::to_string(n->slot);
        return;
    case NodeKind::Var:
        out += n->name;
        return;
    case NodeKind::Unary:
        if (n->uop == UnaryOp::Neg) {
            out += '-';
            render_child(n->lhs, out, 3, false);
        } else {
            out += unary_name(n->uop);
            out += '(';
            render_node(n->lhs, out);
            out += ')';
        }
        return;
    case NodeKind::Binary:
        switch (n->bop) {
        case BinaryOp::Add:
            render_child(n->lhs, out, 1, false);
            out += " + ";
            render_child(n->rhs, out, 2, true);
            return;
        case BinaryOp::Sub:
            render_child(n->lhs, out, 1, false);
            out += " - ";
            render_child(n->rhs, out, 2, true);
            return;
        case BinaryOp::Mul:
            render_child(n->lhs, out, 2, false);
            out += '*';
            render_child(n->rhs, out, 4, true);
            return;
        case BinaryOp::Div:
            render_child(n->lhs, out, 2, false);
            out += '/';
            render_child(n->rhs, out, 4, true);
            return;
        case BinaryOp::Pow:
            render_child(n->lhs, out, 6, false);
            out += '^';
            render_child(n->rhs, out, 4, true);
            return;
        }
    }
}

NodeRef substitute_coeffs(const NodeRef& n, std::span<const double> coeffs) {
    if (!n) return n;
    if (n->kind == NodeKind::Coeff) {
        const double v = n->slot < static_cast<int>(coeffs.size()) ? coeffs[n->slot] : 0.0;
        return make_number(v);
    }
    NodeRef lhs = substitute_coeffs(n->lhs, coeffs);
    NodeRef rhs = substitute_coeffs(n->rhs, coeffs);
    if (lhs == n->lhs && rhs == n->rhs) return n;
    auto copy = std::make_shared<ExprNode>(*n);
    copy->lhs = std::move(lhs);
    copy->rhs = std::move(rhs);
    return copy;
}

} // namespace

std::string Expression::render() const {
    if (!root_) return "";
    std::string out;
    render_node(root_, out);
    return out;
}

std::string Expression::render_with(std::span<const double> coeffs) const {
    if (!root_) return "";
    std::string out;
    render_node(substitute_coeffs(root_, coeffs), out);
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

double eval_node(const ExprNode& n, std::span<const double> coeffs,
                 const std::function<double(const std::string&)>& var_value) {
    switch (n.kind) {
    case NodeKind::Number:
        return n.value;
    case NodeKind::Coeff:
        return coeffs[static_cast<std::size_t>(n.slot)];
    case NodeKind::Var:
        return var_value(n.name);
    case NodeKind::Unary: {
        const double x = eval_node(*n.lhs, coeffs, var_value);
        switch (n.uop) {
        case UnaryOp::Neg: return -x;
        case UnaryOp::Sqrt: return std::sqrt(x);
        case UnaryOp::Ln: return std::log(x);
        case UnaryOp::Exp: return std::exp(x);
        case UnaryOp::Sin: return std::sin(x);
        case UnaryOp::Cos: return std::cos(x);
        case UnaryOp::Abs: return std::fabs(x);
        }
        return std::numeric_limits<double>::quiet_NaN();
    }
    case NodeKind::Binary: {
        const double a = eval_node(*n.lhs, coeffs, var_value);
        const double b = eval_node(*n.rhs, coeffs, var_value);
        switch (n.bop) {
        case BinaryOp::Add: return a + b;
        case BinaryOp::Sub: return a - b;
        case BinaryOp::Mul: return a * b;
        case BinaryOp::Div: return a / b;
        case BinaryOp::Pow: return std::pow(a, b);
        }
        return std::numeric_limits<double>::quiet_NaN();
    }
    }
    return std::numeric_limits<double>::quiet_NaN();
}

} // namespace

double Expression::evaluate(std::span<const double> coeffs,
                            const std::function<double(const std::string&)>& var_value) const {
    if (static_cast<int>(coeffs.size()) != coeff_count_)
        throw DataError("coefficient vector has size " + std::to_string(coeffs.size()) +
                        ", expression needs " + std::to_string(coeff_count_));
    return eval_node(*root_, coeffs, var_value);
}

double Expression::evaluate(std::span<const double> coeffs,
                            const std::unordered_map<std::string, double>& point) const {
    return evaluate(coeffs, [&](const std::string& name) -> double {
        auto it = point.find(name);
        if (it == point.end()) throw DataError("point is missing variable '" + name + "'");
        return it->second;
    });
}

bool structurally_equal(const Expression& a, const Expression& b) {
    std::function<bool(const NodeRef&, const NodeRef&)> eq = [&](const NodeRef& x, const NodeRef& y) {
        if (!x || !y) return x == y;
        if (x->kind != y->kind) return false;
        switch (x->kind) {
        case NodeKind::Number: return x->value == y->value;
        case NodeKind::Coeff: return x->slot == y->slot;
        case NodeKind::Var: return x->name == y->name;
        case NodeKind::Unary: return x->uop == y->uop && eq(x->lhs, y->lhs);
        case NodeKind::Binary: return x->bop == y->bop && eq(x->lhs, y->lhs) && eq(x->rhs, y->rhs);
        }
        return false;
    };
    return eq(a.root(), b.root());
}

// ---------------------------------------------------------------------------
// Constant lifting

namespace {

bool integer_exponent(const NodeRef& n) {
    return n->kind == NodeKind::Number && std::isfinite(n->value) &&
           n->value == std::rint(n->value) && std::fabs(n->value) < 1e15;
}

// Leftmost factor of a product/quotient chain, e.g. the 0.5 in 0.5*x*y or 21.9/SS.
bool has_leading_literal(const NodeRef& n) {
    const ExprNode* cur = n.get();
    while (cur->kind == NodeKind::Binary && (cur->bop == BinaryOp::Mul || cur->bop == BinaryOp::Div))
        cur = cur->lhs.get();
    return cur->kind == NodeKind::Number;
}

class Lifter {
public:
    explicit Lifter(int first_slot) : next_slot_(first_slot) {}

    // absorb: the node sits at the head of a subtracted term whose leading
    // literal takes a negated initial value.
    NodeRef lift(const NodeRef& n, bool absorb) {
        switch (n->kind) {
        case NodeKind::Number: {
            initials.push_back(absorb ? -n->value : n->value);
            return make_coeff(next_slot_++);
        }
        case NodeKind::Coeff:
        case NodeKind::Var:
            return n;
        case NodeKind::Unary:
            return make_unary(n->uop, lift(n->lhs, false));
        case NodeKind::Binary:
            // slot numbering follows source order, so children are lifted
            // left-to-right explicitly
            switch (n->bop) {
            case BinaryOp::Mul:
            case BinaryOp::Div: {
                NodeRef lhs = lift(n->lhs, absorb);
                NodeRef rhs = lift(n->rhs, false);
                return make_binary(n->bop, std::move(lhs), std::move(rhs));
            }
            case BinaryOp::Sub: {
                NodeRef lhs = lift(n->lhs, false);
                if (has_leading_literal(n->rhs))
                    return make_binary(BinaryOp::Add, std::move(lhs), lift(n->rhs, true));
                return make_binary(BinaryOp::Sub, std::move(lhs), lift(n->rhs, false));
            }
            case BinaryOp::Add: {
                NodeRef lhs = lift(n->lhs, false);
                NodeRef rhs = lift(n->rhs, false);
                return make_binary(BinaryOp::Add, std::move(lhs), std::move(rhs));
            }
            case BinaryOp::Pow: {
                NodeRef base = lift(n->lhs, false);
                NodeRef exponent = integer_exponent(n->rhs) ? n->rhs : lift(n->rhs, false);
                return make_binary(BinaryOp::Pow, std::move(base), std::move(exponent));
            }
            }
        }
        return n;
    }

    std::vector<double> initials;

private:
    int next_slot_;
};

} // namespace

LiftResult lift_constants(const Expression& expr) {
    if (expr.empty()) return {expr, {}};
    Lifter lifter(expr.coefficient_count());
    NodeRef root = lifter.lift(expr.root(), false);
    return {Expression(std::move(root)), std::move(lifter.initials)};
}

// ---------------------------------------------------------------------------
// Linearity probe

bool is_linear_in_coefficients(const Expression& expr) {
    const int k = expr.coefficient_count();
    if (k == 0) return true;

    std::mt19937_64 rng(0x9e3779b97f4a7c15ULL);
    auto uniform = [&](double lo, double hi) {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        return lo + u * (hi - lo);
    };
    auto gauss = [&]() {
        // Box-Muller on two fixed uniform draws; only used as probe noise.
        const double u1 = std::max(uniform(0.0, 1.0), 1e-12);
        const double u2 = uniform(0.0, 1.0);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    };

    const auto& vars = expr.variables();
    for (int probe = 0; probe < 8; ++probe) {
        std::unordered_map<std::string, double> point;
        for (const auto& v : vars) point[v] = uniform(0.5, 2.0);

        std::vector<double> u(static_cast<std::size_t>(k)), v(static_cast<std::size_t>(k)),
            zero(static_cast<std::size_t>(k), 0.0), mix(static_cast<std::size_t>(k));
        for (auto& x : u) x = gauss();
        for (auto& x : v) x = gauss();
        const double alpha = uniform(-2.0, 2.0);
        const double beta = uniform(-2.0, 2.0);
        for (int i = 0; i < k; ++i)
            mix[static_cast<std::size_t>(i)] =
                alpha * u[static_cast<std::size_t>(i)] + beta * v[static_cast<std::size_t>(i)];

        const double f0 = expr.evaluate(zero, point);
        const double fu = expr.evaluate(u, point);
        const double fv = expr.evaluate(v, point);
        const double fm = expr.evaluate(mix, point);
        if (!std::isfinite(f0) || !std::isfinite(fu) || !std::isfinite(fv) || !std::isfinite(fm))
            return false;

        const double expected = alpha * fu + beta * fv + (1.0 - alpha - beta) * f0;
        const double tol = 1e-8 * std::max({1.0, std::fabs(fm), std::fabs(expected)});
        if (std::fabs(fm - expected) > tol) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Generator-output extraction

std::vector<SubstitutionRule> default_substitution_rules() {
    return {
        {"np.", "", false},
        {"numpy.", "", false},
        {"math.", "", false},
        {"**", "^", false},
        {"·", "*", false},  // middle dot
        {"×", "*", false},  // multiplication sign
        {"÷", "/", false},  // division sign
        {"−", "-", false},  // unicode minus
        {"log", "ln", true},
    };
}

std::vector<SubstitutionRule> load_substitution_rules(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open substitution rules: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("substitution rules JSON: ") + e.what());
    }
    std::vector<SubstitutionRule> rules;
    for (const auto& r : j.at("rules"))
        rules.push_back({r.at("from").get<std::string>(), r.at("to").get<std::string>(),
                         r.value("word", false)});
    return rules;
}

namespace {

bool ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

std::string replace_all(std::string text, const SubstitutionRule& rule) {
    if (rule.from.empty()) return text;
    std::string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        if (text.compare(i, rule.from.size(), rule.from) == 0) {
            const bool left_ok = !rule.word_boundary || i == 0 || !ident_char(text[i - 1]);
            const std::size_t end = i + rule.from.size();
            const bool right_ok = !rule.word_boundary || end >= text.size() || !ident_char(text[end]);
            if (left_ok && right_ok) {
                out += rule.to;
                i = end;
                continue;
            }
        }
        out += text[i];
        ++i;
    }
    return out;
}

std::string trim(std::string_view s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string_view::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(begin, end - begin + 1));
}

std::string strip_code_fence(const std::string& raw) {
    const std::size_t open = raw.find("```");
    if (open == std::string::npos) return raw;
    std::size_t body = raw.find('\n', open);
    if (body == std::string::npos) return raw.substr(open + 3);
    ++body;
    const std::size_t close = raw.find("```", body);
    return close == std::string::npos ? raw.substr(body) : raw.substr(body, close - body);
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) lines.push_back(line);
    return lines;
}

bool is_def_line(const std::string& line) {
    const std::string t = trim(line);
    return t.rfind("def ", 0) == 0 && t.find('(') != std::string::npos;
}

std::string strip_comment(const std::string& line) {
    const std::size_t hash = line.find('#');
    return hash == std::string::npos ? line : line.substr(0, hash);
}

// Follows the return path of a python-style wrapper: collect single-name
// assignments, then resolve the returned identifier through them.
std::string unwrap_function(const std::vector<std::string>& lines) {
    std::unordered_map<std::string, std::string> assigned;
    std::string returned;
    for (const auto& raw_line : lines) {
        const std::string line = trim(strip_comment(raw_line));
        if (line.empty() || is_def_line(line)) continue;
        if (line.rfind("return", 0) == 0 &&
            (line.size() == 6 || !ident_char(line[6]))) {
            returned = trim(line.substr(6));
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos || (eq + 1 < line.size() && line[eq + 1] == '=')) continue;
        const std::string lhs = trim(line.substr(0, eq));
        if (lhs.empty() || lhs.find(',') != std::string::npos) continue; // tuple unpack
        bool plain = true;
        for (char c : lhs)
            if (!ident_char(c)) plain = false;
        if (!plain) continue;
        assigned[lhs] = trim(line.substr(eq + 1));
    }
    for (int hops = 0; hops < 8 && assigned.count(returned); ++hops) {
        const std::string next = assigned[returned];
        if (next == returned) break;
        bool bare = !next.empty();
        for (char c : next)
            if (!ident_char(c)) bare = false;
        returned = assigned[returned];
        if (!bare) break;
    }
    return returned;
}

} // namespace

std::string apply_substitutions(std::string text, std::span<const SubstitutionRule> rules) {
    for (const auto& rule : rules) text = replace_all(std::move(text), rule);
    return text;
}

std::string extract_candidate(const std::string& raw, std::span<const SubstitutionRule> rules) {
    if (trim(raw).empty()) throw DataError("no expression found: empty output");

    std::string body = strip_code_fence(raw);
    const std::vector<std::string> lines = split_lines(body);

    std::string candidate;
    bool wrapped = false;
    for (const auto& line : lines) {
        if (is_def_line(line)) {
            wrapped = true;
            break;
        }
    }
    if (wrapped) {
        candidate = unwrap_function(lines);
        if (candidate.empty()) throw DataError("no expression found: wrapper without return value");
    } else {
        for (const auto& line : lines) {
            if (!candidate.empty()) candidate += ' ';
            candidate += line;
        }
        candidate = trim(candidate);
    }

    // "Name = rhs" outputs reduce to the right-hand side.
    const std::size_t eq = candidate.find('=');
    if (eq != std::string::npos && candidate.find('=', eq + 1) == std::string::npos) {
        const std::string lhs = trim(candidate.substr(0, eq));
        bool plain_ident = !lhs.empty();
        for (char c : lhs)
            if (!ident_char(c)) plain_ident = false;
        if (plain_ident) candidate = trim(candidate.substr(eq + 1));
    }

    candidate = trim(apply_substitutions(std::move(candidate), rules));
    if (candidate.empty()) throw DataError("no expression found: empty after substitutions");
    try {
        parse_expression_permissive(candidate);
    } catch (const ParseError& e) {
        throw DataError(std::string("no expression found: ") + e.what());
    }
    return candidate;
}

std::string extract_candidate(const std::string& raw) {
    const auto rules = default_substitution_rules();
    return extract_candidate(raw, rules);
}

} // namespace eqdisc
