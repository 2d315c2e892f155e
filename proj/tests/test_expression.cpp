#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "folibochner/expression.hpp"

using folib::Expr;

TEST_CASE("parser handles precedence and associativity") {
    std::vector<double> none = {0.0};
    CHECK(Expr::parse("2 + 3 * 4^2").eval(none) == 50.0);
    CHECK(Expr::parse("2 * 3^2").eval(none) == 18.0);
    CHECK(Expr::parse("2^3^2").eval(none) == 512.0); // right associative
    CHECK(Expr::parse("(2 + 3) * 4").eval(none) == 20.0);
    CHECK(Expr::parse("2^-2").eval(none) == 0.25);
    CHECK(Expr::parse("-2^2").eval(none) == -4.0); // unary minus binds looser than ^
    CHECK(Expr::parse("6 / 3 / 2").eval(none) == 1.0);
    CHECK(Expr::parse("1 - 2 - 3").eval(none) == -4.0);
    CHECK(Expr::parse("1e-3 + 2.5e2").eval(none) == Catch::Approx(250.001));
}

TEST_CASE("variables and functions evaluate") {
    CHECK(Expr::parse("x0^2 + 3*x1").eval({2.0, 5.0}) == 19.0);
    CHECK(Expr::parse("x0 * x1 - x2 / 4").eval({1.0, 2.0, 8.0}) == 0.0);
    CHECK(Expr::parse("sin(x0)^2 + cos(x0)^2").eval({0.81}) == Catch::Approx(1.0));
    CHECK(Expr::parse("exp(log(x0))").eval({2.5}) == Catch::Approx(2.5));
    CHECK(Expr::parse("sqrt(x0^2)").eval({3.0}) == Catch::Approx(3.0));
    CHECK(Expr::parse("x0^2").eval({-2.0}) == 4.0);
    CHECK(Expr::parse("x0^x1").eval({2.0, 1.5}) == Catch::Approx(std::pow(2.0, 1.5)));
}

TEST_CASE("malformed input throws BadExpression") {
    CHECK_THROWS_AS(Expr::parse("2 +"), folib::BadExpression);
    CHECK_THROWS_AS(Expr::parse("sin 3"), folib::BadExpression);
    CHECK_THROWS_AS(Expr::parse("foo(2)"), folib::BadExpression);
    CHECK_THROWS_AS(Expr::parse("(2"), folib::BadExpression);
    CHECK_THROWS_AS(Expr::parse("2 3"), folib::BadExpression);
    CHECK_THROWS_AS(Expr::parse(""), folib::BadExpression);
}

TEST_CASE("arity violations throw ArityError") {
    CHECK_THROWS_AS(Expr::parse("x99"), folib::ArityError);
    CHECK_THROWS_AS(Expr::parse("x2 + 1").eval({1.0, 2.0}), folib::ArityError);
    CHECK_THROWS_AS(Expr::parse("x2 + 1").eval_jet({1.0, 2.0}, 2), folib::ArityError);
}

TEST_CASE("domain violations throw DomainError in both evaluators") {
    Expr bad_div = Expr::parse("1 / x0");
    CHECK_THROWS_AS(bad_div.eval({0.0}), folib::DomainError);
    CHECK_THROWS_AS(bad_div.eval_jet({0.0}, 2), folib::DomainError);
    Expr bad_pow = Expr::parse("x0^0.5");
    CHECK_THROWS_AS(bad_pow.eval({-1.0}), folib::DomainError);
    CHECK_THROWS_AS(bad_pow.eval_jet({-1.0}, 2), folib::DomainError);
    CHECK_THROWS_AS(Expr::parse("x0^x1").eval({-1.0, 0.5}), folib::DomainError);
}

TEST_CASE("jet evaluation matches plain evaluation and known derivatives") {
    Expr e = Expr::parse("x0^2 * sin(x1) + exp(x0 * x1)");
    std::vector<double> pt = {0.4, -1.1};
    folib::Jet j = e.eval_jet(pt, 3);
    CHECK(j.value() == Catch::Approx(e.eval(pt)).epsilon(1e-14));

    Expr sq = Expr::parse("x0^2");
    CHECK(sq.eval_jet({3.0}, 2).deriv({1}) == 6.0);
    CHECK(sq.eval_jet({3.0}, 2).deriv({2}) == 2.0);
}

TEST_CASE("builder overloads fold trivial constants") {
    Expr z = Expr::c(0.0), one = Expr::c(1.0), x = Expr::var(1);
    CHECK((z + x).node().kind == Expr::Kind::Var);
    CHECK((x + z).node().kind == Expr::Kind::Var);
    CHECK((z * x).is_zero());
    CHECK((one * x).node().kind == Expr::Kind::Var);
    CHECK((x * one).node().kind == Expr::Kind::Var);
    CHECK((x - z).node().kind == Expr::Kind::Var);
    CHECK((x / one).node().kind == Expr::Kind::Var);
    CHECK((Expr::c(2.0) * Expr::c(3.0)).const_value() == 6.0);
    CHECK((Expr::c(2.0) + Expr::c(3.0)).const_value() == 5.0);
    CHECK(Expr().is_zero());
    CHECK(Expr::c(4.0).max_var_index() == -1);
    CHECK((x * Expr::var(3)).max_var_index() == 3);
}

TEST_CASE("printing round-trips through the parser") {
    std::mt19937_64 rng(20250822);
    std::uniform_real_distribution<double> coeff(-2.0, 2.0);
    std::uniform_int_distribution<int> pick(0, 6);

    // Random trees over x0, x1 built with the public builders.
    auto random_tree = [&](auto&& self, int depth) -> Expr {
        if (depth == 0) {
            if (pick(rng) < 3) return Expr::c(coeff(rng));
            return Expr::var(pick(rng) % 2);
        }
        Expr a = self(self, depth - 1), b = self(self, depth - 1);
        switch (pick(rng)) {
            case 0: return a + b;
            case 1: return a - b;
            case 2: return a * b;
            case 3: return Expr::fun(Expr::Fn::Sin, a);
            case 4: return Expr::fun(Expr::Fn::Cos, a) * b;
            case 5: return Expr::fun(Expr::Fn::Exp, a - b);
            default: return -a + Expr::pow(b, Expr::c(2.0));
        }
    };

    std::uniform_real_distribution<double> coord(-1.5, 1.5);
    for (int trial = 0; trial < 50; ++trial) {
        Expr e = random_tree(random_tree, 3);
        Expr back = Expr::parse(e.to_string());
        for (int k = 0; k < 5; ++k) {
            std::vector<double> pt = {coord(rng), coord(rng)};
            double a = e.eval(pt), b = back.eval(pt);
            CHECK(b == Catch::Approx(a).margin(1e-12).epsilon(1e-12));
        }
    }
}
