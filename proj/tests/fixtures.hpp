#pragma once

// Hand-written model specs and jet helpers shared across test files.

#include <vector>

#include "folibochner/connection.hpp"
#include "folibochner/geometry.hpp"

namespace fixtures {

using namespace folib;

inline std::vector<std::vector<Expr>> parse_matrix(
    const std::vector<std::vector<const char*>>& rows) {
    std::vector<std::vector<Expr>> out;
    for (const auto& row : rows) {
        out.emplace_back();
        for (const char* e : row) out.back().push_back(Expr::parse(e));
    }
    return out;
}

inline ModelSpec flat3() {
    ModelSpec s;
    s.name = "flat3";
    s.n = 2;
    s.m = 1;
    s.metric = parse_matrix({{"1", "0", "0"}, {"0", "1", "0"}, {"0", "0", "1"}});
    s.vertical = parse_matrix({{"0", "0", "1"}});
    s.sample_box = {{-1, 1}, {-1, 1}, {-1, 1}};
    return s;
}

// Step-two nilpotent chart given purely through its metric matrix.
inline ModelSpec nilpotent_metric() {
    ModelSpec s;
    s.name = "nilpotent_metric";
    s.n = 2;
    s.m = 1;
    s.metric = parse_matrix({{"1 + x1^2/4", "-x0*x1/4", "x1/2"},
                             {"-x0*x1/4", "1 + x0^2/4", "-x0/2"},
                             {"x1/2", "-x0/2", "1"}});
    s.vertical = parse_matrix({{"0", "0", "1"}});
    s.sample_box = {{-2, 2}, {-2, 2}, {-2, 2}};
    return s;
}

// Same geometry, declared through its adapted orthonormal frame.
inline ModelSpec nilpotent_frame() {
    ModelSpec s;
    s.name = "nilpotent_frame";
    s.n = 2;
    s.m = 1;
    s.frame = parse_matrix({{"1", "0", "-x1/2"}, {"0", "1", "x0/2"}, {"0", "0", "1"}});
    s.sample_box = {{-2, 2}, {-2, 2}, {-2, 2}};
    return s;
}

// Mixed model whose vertical planes tilt with the point and do not integrate
// to a foliation; it also has curvature and nonzero mean curvature.
inline ModelSpec twisted_flat() {
    ModelSpec s;
    s.name = "twisted_flat";
    s.n = 2;
    s.m = 2;
    s.metric = parse_matrix({{"1", "0", "0", "0"},
                             {"0", "1", "0", "0"},
                             {"0", "0", "exp(2*x0)", "0"},
                             {"0", "0", "0", "1"}});
    s.vertical = parse_matrix({{"0", "0", "1", "0"}, {"x2", "0", "0", "1"}});
    s.sample_box = {{-1, 1}, {-1, 1}, {-1, 1}, {-1, 1}};
    return s;
}

inline double max_jet_coeff(const Jet& j) {
    double m = 0.0;
    for (const MultiIndex& alpha : j.table().alphas) m = std::max(m, std::abs(j.coeff(alpha)));
    return m;
}

inline double max_jet_coeff(const JetVector& v) {
    double m = 0.0;
    for (const Jet& j : v) m = std::max(m, max_jet_coeff(j));
    return m;
}

inline JetVector vec_diff(JetVector a, const JetVector& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = a[i] - b[i];
    return a;
}

inline JetVector make_field(const std::vector<const char*>& comps, const std::vector<Jet>& vars) {
    JetVector v;
    for (const char* c : comps) v.push_back(Expr::parse(c).eval_jet(vars));
    return v;
}

/// A small family of generic polynomial/trig test fields in dimension d.
inline std::vector<JetVector> generic_fields(const std::vector<Jet>& vars) {
    const int d = static_cast<int>(vars.size());
    std::vector<std::vector<const char*>> comps3 = {
        {"1 + x1", "x0*x2", "sin(x1)"},
        {"x2^2", "0.5", "x0 - x1"},
        {"cos(x0)", "x1*x2", "2"},
    };
    std::vector<std::vector<const char*>> comps4 = {
        {"1 + x1", "x0*x2", "sin(x1)", "x3"},
        {"x2^2", "0.5", "x0 - x1", "x1*x3"},
        {"cos(x0)", "x1*x2", "2", "x0 + x2"},
    };
    std::vector<JetVector> out;
    for (const auto& comps : (d == 3 ? comps3 : comps4)) out.push_back(make_field(comps, vars));
    return out;
}

} // namespace fixtures
