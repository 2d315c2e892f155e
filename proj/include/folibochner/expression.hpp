#pragma once

// Small scalar expression trees over chart coordinates x0, x1, ...
//
// Models describe metric entries and frame coefficients as expressions; the
// geometry layer evaluates them either as plain doubles or as truncated
// Taylor jets (which is how all derivatives of metric data are obtained).
// A text parser accepts the same syntax that to_string() emits.

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "jet.hpp"

namespace folib {

class Expr;
Expr operator+(const Expr&, const Expr&);
Expr operator-(const Expr&, const Expr&);
Expr operator*(const Expr&, const Expr&);
Expr operator/(const Expr&, const Expr&);
Expr operator-(const Expr&);

class Expr {
public:
    enum class Kind { Const, Var, Add, Sub, Mul, Div, Neg, Pow, Fun };
    enum class Fn { Sin, Cos, Exp, Sqrt, Log };

    struct Node {
        Kind kind;
        double value = 0.0; // Const
        int var = -1;       // Var
        Fn fn = Fn::Sin;    // Fun
        std::shared_ptr<const Node> a, b;
    };

    /// Constant zero.
    Expr() : root_(make(Kind::Const)) {}

    static Expr c(double v) {
        auto n = make(Kind::Const);
        n->value = v;
        return Expr(std::move(n));
    }

    static Expr var(int i) {
        if (i < 0 || i > 15)
            throw ArityError("variable index " + std::to_string(i) + " out of range [0, 15]");
        auto n = make(Kind::Var);
        n->var = i;
        return Expr(std::move(n));
    }

    static Expr fun(Fn f, const Expr& arg) {
        auto n = make(Kind::Fun);
        n->fn = f;
        n->a = arg.root_;
        return Expr(std::move(n));
    }

    static Expr pow(const Expr& base, const Expr& exponent) {
        auto n = make(Kind::Pow);
        n->a = base.root_;
        n->b = exponent.root_;
        return Expr(std::move(n));
    }

    /// Parse expression text; see README for the grammar.  Throws
    /// BadExpression with a character position on malformed input.
    static Expr parse(const std::string& text);

    const Node& node() const { return *root_; }

    bool is_const() const { return root_->kind == Kind::Const; }
    bool is_zero() const { return is_const() && root_->value == 0.0; }
    bool is_one() const { return is_const() && root_->value == 1.0; }
    double const_value() const { return root_->value; }

    /// Largest variable index referenced, or -1 for a constant expression.
    int max_var_index() const { return max_var(*root_); }

    /// Evaluate on plain doubles.  Throws DomainError exactly where jet
    /// evaluation would (division by zero, sqrt/log of non-positive values).
    double eval(const std::vector<double>& x) const { return eval_d(*root_, x); }

    /// Evaluate as an order-p jet about the point x.
    Jet eval_jet(const std::vector<double>& x, int order) const {
        std::vector<Jet> vars;
        vars.reserve(x.size());
        for (std::size_t i = 0; i < x.size(); ++i)
            vars.push_back(order >= 1
                               ? Jet::variable(static_cast<int>(x.size()), order,
                                               static_cast<int>(i), x[i])
                               : Jet::constant(static_cast<int>(x.size()), 0, x[i]));
        return eval_jet(vars);
    }

    /// Evaluate against pre-built coordinate jets (vars[i] is the jet of x_i).
    Jet eval_jet(const std::vector<Jet>& vars) const {
        if (vars.empty()) throw ArityError("expression evaluation needs at least one coordinate jet");
        if (max_var_index() >= static_cast<int>(vars.size()))
            throw ArityError("expression references x" + std::to_string(max_var_index()) +
                             " but only " + std::to_string(vars.size()) +
                             " coordinates were provided");
        return eval_j(*root_, vars);
    }

    std::string to_string() const {
        std::string out;
        print(*root_, 0, out);
        return out;
    }

private:
    std::shared_ptr<const Node> root_;

    explicit Expr(std::shared_ptr<const Node> n) : root_(std::move(n)) {}

    static std::shared_ptr<Node> make(Kind k) {
        auto n = std::make_shared<Node>();
        n->kind = k;
        return n;
    }

    static Expr binary(Kind k, const Expr& a, const Expr& b) {
        auto n = make(k);
        n->a = a.root_;
        n->b = b.root_;
        return Expr(std::move(n));
    }

    static Expr unary(Kind k, const Expr& a) {
        auto n = make(k);
        n->a = a.root_;
        return Expr(std::move(n));
    }

    static int max_var(const Node& n) {
        int m = n.kind == Kind::Var ? n.var : -1;
        if (n.a) m = std::max(m, max_var(*n.a));
        if (n.b) m = std::max(m, max_var(*n.b));
        return m;
    }

    static double eval_d(const Node& n, const std::vector<double>& x) {
        switch (n.kind) {
            case Kind::Const: return n.value;
            case Kind::Var:
                if (n.var >= static_cast<int>(x.size()))
                    throw ArityError("expression references x" + std::to_string(n.var) +
                                     " beyond the evaluation point dimension");
                return x[n.var];
            case Kind::Add: return eval_d(*n.a, x) + eval_d(*n.b, x);
            case Kind::Sub: return eval_d(*n.a, x) - eval_d(*n.b, x);
            case Kind::Mul: return eval_d(*n.a, x) * eval_d(*n.b, x);
            case Kind::Div: {
                double den = eval_d(*n.b, x);
                if (den == 0.0) throw DomainError("division by zero in expression evaluation");
                return eval_d(*n.a, x) / den;
            }
            case Kind::Neg: return -eval_d(*n.a, x);
            case Kind::Pow: {
                double base = eval_d(*n.a, x), p = eval_d(*n.b, x);
                double ip;
                if (std::modf(p, &ip) == 0.0 && std::abs(ip) <= 64.0) {
                    if (base == 0.0 && ip < 0.0)
                        throw DomainError("zero base with negative exponent");
                    return std::pow(base, ip);
                }
                if (base <= 0.0)
                    throw DomainError("non-integer power of a non-positive base");
                return std::pow(base, p);
            }
            case Kind::Fun:
                switch (n.fn) {
                    case Fn::Sin: return std::sin(eval_d(*n.a, x));
                    case Fn::Cos: return std::cos(eval_d(*n.a, x));
                    case Fn::Exp: return std::exp(eval_d(*n.a, x));
                    case Fn::Sqrt: {
                        double u = eval_d(*n.a, x);
                        if (u <= 0.0) throw DomainError("sqrt of a non-positive value");
                        return std::sqrt(u);
                    }
                    case Fn::Log: {
                        double u = eval_d(*n.a, x);
                        if (u <= 0.0) throw DomainError("log of a non-positive value");
                        return std::log(u);
                    }
                }
        }
        throw Error("unreachable expression node");
    }

    static Jet eval_j(const Node& n, const std::vector<Jet>& vars) {
        const int d = vars[0].dim(), p = vars[0].order();
        switch (n.kind) {
            case Kind::Const: return Jet::constant(d, p, n.value);
            case Kind::Var: return vars[n.var];
            case Kind::Add: return eval_j(*n.a, vars) + eval_j(*n.b, vars);
            case Kind::Sub: return eval_j(*n.a, vars) - eval_j(*n.b, vars);
            case Kind::Mul: return eval_j(*n.a, vars) * eval_j(*n.b, vars);
            case Kind::Div: return eval_j(*n.a, vars) / eval_j(*n.b, vars);
            case Kind::Neg: return -eval_j(*n.a, vars);
            case Kind::Pow: {
                // Constant integral exponents stay exact integer powers; any
                // other exponent goes through the positive-base power series.
                if (n.b->kind == Kind::Const)
                    return folib::pow(eval_j(*n.a, vars), n.b->value);
                return folib::exp(eval_j(*n.b, vars) * folib::log(eval_j(*n.a, vars)));
            }
            case Kind::Fun:
                switch (n.fn) {
                    case Fn::Sin: return folib::sin(eval_j(*n.a, vars));
                    case Fn::Cos: return folib::cos(eval_j(*n.a, vars));
                    case Fn::Exp: return folib::exp(eval_j(*n.a, vars));
                    case Fn::Sqrt: return folib::sqrt(eval_j(*n.a, vars));
                    case Fn::Log: return folib::log(eval_j(*n.a, vars));
                }
        }
        throw Error("unreachable expression node");
    }

    // Printer precedence: additive 1, multiplicative 2, unary minus 3,
    // power 4 (right associative), atoms 5.
    static void print(const Node& n, int parent_prec, std::string& out) {
        auto wrap = [&](int prec, auto&& body) {
            bool paren = prec < parent_prec;
            if (paren) out += '(';
            body();
            if (paren) out += ')';
        };
        switch (n.kind) {
            case Kind::Const: {
                char buf[32];
                std::snprintf(buf, sizeof buf, "%.17g", n.value);
                if (n.value < 0.0)
                    wrap(3, [&] { out += buf; });
                else
                    out += buf;
                return;
            }
            case Kind::Var:
                out += 'x';
                out += std::to_string(n.var);
                return;
            case Kind::Add:
                return wrap(1, [&] {
                    print(*n.a, 1, out);
                    out += " + ";
                    print(*n.b, 2, out);
                });
            case Kind::Sub:
                return wrap(1, [&] {
                    print(*n.a, 1, out);
                    out += " - ";
                    print(*n.b, 2, out);
                });
            case Kind::Mul:
                return wrap(2, [&] {
                    print(*n.a, 2, out);
                    out += " * ";
                    print(*n.b, 3, out);
                });
            case Kind::Div:
                return wrap(2, [&] {
                    print(*n.a, 2, out);
                    out += " / ";
                    print(*n.b, 3, out);
                });
            case Kind::Neg:
                return wrap(3, [&] {
                    out += '-';
                    print(*n.a, 3, out);
                });
            case Kind::Pow:
                return wrap(4, [&] {
                    print(*n.a, 5, out);
                    out += '^';
                    print(*n.b, 4, out);
                });
            case Kind::Fun: {
                switch (n.fn) {
                    case Fn::Sin: out += "sin"; break;
                    case Fn::Cos: out += "cos"; break;
                    case Fn::Exp: out += "exp"; break;
                    case Fn::Sqrt: out += "sqrt"; break;
                    case Fn::Log: out += "log"; break;
                }
                out += '(';
                print(*n.a, 0, out);
                out += ')';
                return;
            }
        }
    }

    friend Expr operator+(const Expr&, const Expr&);
    friend Expr operator-(const Expr&, const Expr&);
    friend Expr operator*(const Expr&, const Expr&);
    friend Expr operator/(const Expr&, const Expr&);
    friend Expr operator-(const Expr&);
    friend class ExprParser;
};

// Builder overloads fold the constants that show up constantly in generated
// frame coefficients (zeros and ones), keeping those trees small.
inline Expr operator+(const Expr& a, const Expr& b) {
    if (a.is_zero()) return b;
    if (b.is_zero()) return a;
    if (a.is_const() && b.is_const()) return Expr::c(a.const_value() + b.const_value());
    return Expr::binary(Expr::Kind::Add, a, b);
}

inline Expr operator-(const Expr& a, const Expr& b) {
    if (b.is_zero()) return a;
    if (a.is_const() && b.is_const()) return Expr::c(a.const_value() - b.const_value());
    if (a.is_zero()) return Expr::unary(Expr::Kind::Neg, b);
    return Expr::binary(Expr::Kind::Sub, a, b);
}

inline Expr operator*(const Expr& a, const Expr& b) {
    if (a.is_zero() || b.is_zero()) return Expr::c(0.0);
    if (a.is_one()) return b;
    if (b.is_one()) return a;
    if (a.is_const() && b.is_const()) return Expr::c(a.const_value() * b.const_value());
    return Expr::binary(Expr::Kind::Mul, a, b);
}

inline Expr operator/(const Expr& a, const Expr& b) {
    if (b.is_one()) return a;
    if (a.is_zero() && !(b.is_const() && b.const_value() == 0.0)) return Expr::c(0.0);
    return Expr::binary(Expr::Kind::Div, a, b);
}

inline Expr operator-(const Expr& a) {
    if (a.is_const()) return Expr::c(-a.const_value());
    return Expr::unary(Expr::Kind::Neg, a);
}

// Recursive-descent parser for the printer's grammar:
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := '-' unary | power
//   power   := primary ('^' unary)?
//   primary := number | name '(' expr ')' | 'x' digits | '(' expr ')'
class ExprParser {
public:
    explicit ExprParser(const std::string& text) : s_(text) {}

    Expr run() {
        Expr e = expr();
        skip_ws();
        if (pos_ != s_.size()) fail("unexpected trailing input");
        return e;
    }

private:
    const std::string& s_;
    std::size_t pos_ = 0;

    [[noreturn]] void fail(const std::string& msg) const {
        throw BadExpression(msg + " at position " + std::to_string(pos_) + " in \"" + s_ + "\"");
    }

    void skip_ws() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    bool eat(char c) {
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    char peek() {
        skip_ws();
        return pos_ < s_.size() ? s_[pos_] : '\0';
    }

    Expr expr() {
        Expr e = term();
        for (;;) {
            if (eat('+')) e = Expr::binary(Expr::Kind::Add, e, term());
            else if (eat('-')) e = Expr::binary(Expr::Kind::Sub, e, term());
            else return e;
        }
    }

    Expr term() {
        Expr e = unary();
        for (;;) {
            if (eat('*')) e = Expr::binary(Expr::Kind::Mul, e, unary());
            else if (eat('/')) e = Expr::binary(Expr::Kind::Div, e, unary());
            else return e;
        }
    }

    Expr unary() {
        if (eat('-')) return Expr::unary(Expr::Kind::Neg, unary());
        return power();
    }

    Expr power() {
        Expr base = primary();
        if (eat('^')) return Expr::pow(base, unary());
        return base;
    }

    Expr primary() {
        char c = peek();
        if (c == '(') {
            eat('(');
            Expr e = expr();
            if (!eat(')')) fail("expected ')'");
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            const char* begin = s_.c_str() + pos_;
            char* end = nullptr;
            double v = std::strtod(begin, &end);
            if (end == begin) fail("malformed number");
            pos_ += static_cast<std::size_t>(end - begin);
            return Expr::c(v);
        }
        if (std::isalpha(static_cast<unsigned char>(c))) {
            std::string name;
            while (pos_ < s_.size() &&
                   (std::isalnum(static_cast<unsigned char>(s_[pos_]))))
                name += s_[pos_++];
            if (name.size() >= 2 && name[0] == 'x' &&
                name.find_first_not_of("0123456789", 1) == std::string::npos)
                return Expr::var(std::atoi(name.c_str() + 1));
            Expr::Fn fn;
            if (name == "sin") fn = Expr::Fn::Sin;
            else if (name == "cos") fn = Expr::Fn::Cos;
            else if (name == "exp") fn = Expr::Fn::Exp;
            else if (name == "sqrt") fn = Expr::Fn::Sqrt;
            else if (name == "log") fn = Expr::Fn::Log;
            else fail("unknown name '" + name + "'");
            if (!eat('(')) fail("expected '(' after function name");
            Expr arg = expr();
            if (!eat(')')) fail("expected ')'");
            return Expr::fun(fn, arg);
        }
        fail("expected a number, name, or '('");
    }
};

inline Expr Expr::parse(const std::string& text) { return ExprParser(text).run(); }

} // namespace folib
