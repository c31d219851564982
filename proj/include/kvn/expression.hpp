#pragma once

#include <Eigen/Dense>
#include <cctype>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace kvn {

/// Compiled arithmetic expression over the variables x1..xd and t.
///
/// Grammar: + - * / ^ (right-assoc), unary minus, parentheses, numeric
/// literals, and the functions sin, cos, exp, tanh. Anything else is a
/// parse error with the offending position.
class Expression {
public:
    static Expression parse(const std::string& text, int dimension) {
        Parser p{text, 0, dimension};
        auto root = p.parse_expr();
        p.skip_ws();
        if (p.pos != text.size())
            throw std::invalid_argument(p.error("unexpected trailing input"));
        Expression e;
        e.root_ = std::move(root);
        e.text_ = text;
        e.dim_ = dimension;
        return e;
    }

    double operator()(const Eigen::VectorXd& x, double t) const {
        return root_->eval(x, t);
    }

    const std::string& text() const { return text_; }
    int dimension() const { return dim_; }

private:
    struct Node {
        virtual ~Node() = default;
        virtual double eval(const Eigen::VectorXd& x, double t) const = 0;
    };
    using NodePtr = std::unique_ptr<Node>;

    struct Const : Node {
        double v;
        explicit Const(double v) : v(v) {}
        double eval(const Eigen::VectorXd&, double) const override { return v; }
    };
    struct Var : Node {
        int index;  // -1 means t
        explicit Var(int i) : index(i) {}
        double eval(const Eigen::VectorXd& x, double t) const override {
            return index < 0 ? t : x[index];
        }
    };
    struct Unary : Node {
        char op;
        NodePtr a;
        Unary(char op, NodePtr a) : op(op), a(std::move(a)) {}
        double eval(const Eigen::VectorXd& x, double t) const override {
            return op == '-' ? -a->eval(x, t) : a->eval(x, t);
        }
    };
    struct Binary : Node {
        char op;
        NodePtr a, b;
        Binary(char op, NodePtr a, NodePtr b) : op(op), a(std::move(a)), b(std::move(b)) {}
        double eval(const Eigen::VectorXd& x, double t) const override {
            const double u = a->eval(x, t), v = b->eval(x, t);
            switch (op) {
                case '+': return u + v;
                case '-': return u - v;
                case '*': return u * v;
                case '/': return u / v;
                default: return std::pow(u, v);
            }
        }
    };
    struct Call : Node {
        int fn;  // 0 sin, 1 cos, 2 exp, 3 tanh
        NodePtr a;
        Call(int fn, NodePtr a) : fn(fn), a(std::move(a)) {}
        double eval(const Eigen::VectorXd& x, double t) const override {
            const double u = a->eval(x, t);
            switch (fn) {
                case 0: return std::sin(u);
                case 1: return std::cos(u);
                case 2: return std::exp(u);
                default: return std::tanh(u);
            }
        }
    };

    struct Parser {
        const std::string& s;
        std::size_t pos;
        int dim;

        std::string error(const std::string& msg) const {
            return "expression error at position " + std::to_string(pos) + ": " + msg +
                   " in \"" + s + "\"";
        }
        void skip_ws() {
            while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
        }
        bool peek(char c) {
            skip_ws();
            return pos < s.size() && s[pos] == c;
        }
        bool consume(char c) {
            if (peek(c)) {
                ++pos;
                return true;
            }
            return false;
        }

        NodePtr parse_expr() {
            auto lhs = parse_term();
            for (;;) {
                if (consume('+'))
                    lhs = std::make_unique<Binary>('+', std::move(lhs), parse_term());
                else if (consume('-'))
                    lhs = std::make_unique<Binary>('-', std::move(lhs), parse_term());
                else
                    return lhs;
            }
        }
        NodePtr parse_term() {
            auto lhs = parse_factor();
            for (;;) {
                if (consume('*'))
                    lhs = std::make_unique<Binary>('*', std::move(lhs), parse_factor());
                else if (consume('/'))
                    lhs = std::make_unique<Binary>('/', std::move(lhs), parse_factor());
                else
                    return lhs;
            }
        }
        NodePtr parse_factor() {
            auto base = parse_unary();
            if (consume('^'))
                return std::make_unique<Binary>('^', std::move(base), parse_factor());
            return base;
        }
        NodePtr parse_unary() {
            if (consume('-')) return std::make_unique<Unary>('-', parse_unary());
            if (consume('+')) return parse_unary();
            return parse_primary();
        }
        NodePtr parse_primary() {
            skip_ws();
            if (pos >= s.size()) throw std::invalid_argument(error("unexpected end of input"));
            const char c = s[pos];
            if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
            if (std::isalpha(static_cast<unsigned char>(c))) return parse_ident();
            if (consume('(')) {
                auto e = parse_expr();
                if (!consume(')')) throw std::invalid_argument(error("expected ')'"));
                return e;
            }
            throw std::invalid_argument(error(std::string("unexpected character '") + c + "'"));
        }
        NodePtr parse_number() {
            std::size_t used = 0;
            double v = 0;
            try {
                v = std::stod(s.substr(pos), &used);
            } catch (const std::exception&) {
                throw std::invalid_argument(error("malformed number"));
            }
            pos += used;
            return std::make_unique<Const>(v);
        }
        NodePtr parse_ident() {
            const std::size_t start = pos;
            while (pos < s.size() &&
                   (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_'))
                ++pos;
            const std::string name = s.substr(start, pos - start);
            static const char* fns[] = {"sin", "cos", "exp", "tanh"};
            for (int f = 0; f < 4; ++f) {
                if (name == fns[f]) {
                    if (!consume('('))
                        throw std::invalid_argument(error("expected '(' after " + name));
                    auto arg = parse_expr();
                    if (!consume(')')) throw std::invalid_argument(error("expected ')'"));
                    return std::make_unique<Call>(f, std::move(arg));
                }
            }
            if (name == "t") return std::make_unique<Var>(-1);
            if (name.size() >= 2 && name[0] == 'x') {
                bool digits = true;
                for (std::size_t i = 1; i < name.size(); ++i)
                    digits = digits && std::isdigit(static_cast<unsigned char>(name[i]));
                if (digits) {
                    const int idx = std::stoi(name.substr(1));
                    if (idx < 1 || idx > dim)
                        throw std::invalid_argument(
                            error("variable " + name + " out of range for dimension " +
                                  std::to_string(dim)));
                    return std::make_unique<Var>(idx - 1);
                }
            }
            throw std::invalid_argument(error("unknown identifier '" + name + "'"));
        }
    };

    std::shared_ptr<const Node> root_;
    std::string text_;
    int dim_ = 0;
};

}  // namespace kvn
