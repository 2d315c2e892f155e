#pragma once

// Truncated multivariate Taylor arithmetic.
//
// A Jet of dimension d and order p stores the Taylor coefficients
//     c_alpha = (d^alpha f)(x0) / alpha!        for |alpha| <= p
// of a scalar function about a base point.  Arithmetic on jets then computes
// the coefficients of sums, products, quotients and elementary-function
// compositions exactly (up to roundoff), which is what the geometry layer
// uses to get derivatives of metric data without symbolic differentiation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace folib {

using MultiIndex = std::vector<int>;

namespace detail {

// Multi-indices are packed 4 bits per component into a uint64 for hashing;
// this caps components at 15 and the dimension at 16, far beyond what the
// geometry layer needs.
inline std::uint64_t pack_multi_index(const MultiIndex& alpha) {
    std::uint64_t key = 0;
    for (std::size_t i = 0; i < alpha.size(); ++i)
        key |= static_cast<std::uint64_t>(alpha[i] & 0xF) << (4 * i);
    return key;
}

} // namespace detail

// Shared per-(dim, order) layout: multi-index enumeration, index lookup and
// the sparse convolution table used by multiplication.  Instances are built
// once and cached; jets hold a shared_ptr to an immutable table.
class JetTable {
public:
    struct MulEntry {
        std::uint32_t a, b, dst; // c[dst] += x[a] * y[b]
    };

    int dim;
    int order;
    // Graded lexicographic layout: degree 0, 1, ..., order; within a degree,
    // the first component decreases first ((2,0) before (1,1) before (0,2)).
    // Consequence: the leading C(dim+q, q) slots are exactly the jets of
    // order q, so truncation is a prefix copy.
    std::vector<MultiIndex> alphas;
    std::vector<int> degree;            // |alpha| per slot
    std::vector<double> factorial_alpha; // alpha! per slot
    std::vector<int> offset;            // offset[q] = first slot of degree q
    std::vector<MulEntry> mul;

    // Slot of a multi-index, or -1 when |alpha| exceeds the order.
    int slot(const MultiIndex& alpha) const {
        auto it = index_.find(detail::pack_multi_index(alpha));
        return it == index_.end() ? -1 : it->second;
    }

    int size() const { return static_cast<int>(alphas.size()); }

    static std::shared_ptr<const JetTable> get(int dim, int order) {
        if (dim < 1 || dim > 16)
            throw ArityError("jet dimension must be in [1, 16], got " + std::to_string(dim));
        if (order < 0 || order > 15)
            throw OrderError("jet order must be in [0, 15], got " + std::to_string(order));
        static std::mutex mutex;
        static std::map<std::pair<int, int>, std::shared_ptr<const JetTable>> cache;
        std::lock_guard<std::mutex> lock(mutex);
        auto key = std::make_pair(dim, order);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
        auto table = std::shared_ptr<const JetTable>(new JetTable(dim, order));
        cache.emplace(key, table);
        return table;
    }

private:
    std::unordered_map<std::uint64_t, int> index_;

    JetTable(int d, int p) : dim(d), order(p) {
        offset.assign(p + 2, 0);
        MultiIndex alpha(d, 0);
        for (int q = 0; q <= p; ++q) {
            offset[q] = static_cast<int>(alphas.size());
            enumerate_degree(alpha, 0, q);
        }
        offset[p + 1] = static_cast<int>(alphas.size());
        for (int s = 0; s < size(); ++s) {
            index_.emplace(detail::pack_multi_index(alphas[s]), s);
            int deg = 0;
            double fact = 1.0;
            for (int c : alphas[s]) {
                deg += c;
                for (int k = 2; k <= c; ++k) fact *= k;
            }
            degree.push_back(deg);
            factorial_alpha.push_back(fact);
        }
        // Convolution table: every ordered slot pair whose degrees fit.
        MultiIndex sum(d, 0);
        for (int a = 0; a < size(); ++a) {
            for (int b = 0; b < size(); ++b) {
                if (degree[a] + degree[b] > p) continue;
                for (int i = 0; i < d; ++i) sum[i] = alphas[a][i] + alphas[b][i];
                mul.push_back({static_cast<std::uint32_t>(a),
                               static_cast<std::uint32_t>(b),
                               static_cast<std::uint32_t>(slot(sum))});
            }
        }
    }

    // Append all multi-indices of total degree `left` filled from `pos`,
    // first component descending.
    void enumerate_degree(MultiIndex& alpha, int pos, int left) {
        if (pos == dim - 1) {
            alpha[pos] = left;
            alphas.push_back(alpha);
            return;
        }
        for (int c = left; c >= 0; --c) {
            alpha[pos] = c;
            enumerate_degree(alpha, pos + 1, left - c);
        }
        alpha[pos] = 0;
    }
};

class Jet {
public:
    Jet() = default;

    explicit Jet(std::shared_ptr<const JetTable> table)
        : tab_(std::move(table)), c_(tab_->size(), 0.0) {}

    /// Jet of the constant function `v`.
    static Jet constant(int dim, int order, double v) {
        Jet j(JetTable::get(dim, order));
        j.c_[0] = v;
        return j;
    }

    /// Jet of the coordinate function x_i about a point where x_i = v.
    static Jet variable(int dim, int order, int i, double v) {
        if (order < 1)
            throw OrderError("a coordinate jet needs order >= 1 to carry its linear term");
        if (i < 0 || i >= dim)
            throw ArityError("variable index " + std::to_string(i) + " out of range for dimension " +
                             std::to_string(dim));
        Jet j(JetTable::get(dim, order));
        j.c_[0] = v;
        MultiIndex e(dim, 0);
        e[i] = 1;
        j.c_[j.tab_->slot(e)] = 1.0;
        return j;
    }

    int dim() const { return tab_->dim; }
    int order() const { return tab_->order; }
    const JetTable& table() const { return *tab_; }

    double value() const { return c_[0]; }

    /// Raw Taylor coefficient c_alpha (zero-checked bounds).
    double coeff(const MultiIndex& alpha) const {
        int s = checked_slot(alpha);
        return c_[s];
    }

    /// Partial derivative d^alpha f at the base point: alpha! * c_alpha.
    double deriv(const MultiIndex& alpha) const {
        int s = checked_slot(alpha);
        return c_[s] * tab_->factorial_alpha[s];
    }

    /// Jet of df/dx_i, one order lower.
    Jet partial(int i) const {
        if (i < 0 || i >= dim())
            throw ArityError("partial index " + std::to_string(i) + " out of range");
        if (order() == 0)
            throw OrderError("cannot differentiate an order-0 jet");
        Jet r(JetTable::get(dim(), order() - 1));
        MultiIndex up(dim(), 0);
        for (int s = 0; s < r.tab_->size(); ++s) {
            up = r.tab_->alphas[s];
            up[i] += 1;
            // d/dx_i maps the x^{beta+e_i} term to (beta_i + 1) x^{beta}.
            r.c_[s] = c_[tab_->slot(up)] * (r.tab_->alphas[s][i] + 1);
        }
        return r;
    }

    /// Copy of this jet truncated to a lower order (prefix of the layout).
    Jet truncated(int new_order) const {
        if (new_order < 0 || new_order > order())
            throw OrderError("truncation order " + std::to_string(new_order) +
                             " out of range for order " + std::to_string(order()));
        if (new_order == order()) return *this;
        Jet r(JetTable::get(dim(), new_order));
        std::copy(c_.begin(), c_.begin() + r.tab_->size(), r.c_.begin());
        return r;
    }

    Jet& operator+=(const Jet& o) { *this = *this + o; return *this; }
    Jet& operator-=(const Jet& o) { *this = *this - o; return *this; }
    Jet& operator+=(double v) { c_[0] += v; return *this; }
    Jet& operator-=(double v) { c_[0] -= v; return *this; }
    Jet& operator*=(double v) { for (double& x : c_) x *= v; return *this; }

    friend Jet operator+(Jet a, const Jet& b) {
        Jet bb = b;
        harmonize(a, bb);
        for (int s = 0; s < a.tab_->size(); ++s) a.c_[s] += bb.c_[s];
        return a;
    }
    friend Jet operator-(Jet a, const Jet& b) {
        Jet bb = b;
        harmonize(a, bb);
        for (int s = 0; s < a.tab_->size(); ++s) a.c_[s] -= bb.c_[s];
        return a;
    }
    friend Jet operator*(const Jet& a, const Jet& b) {
        Jet x = a, y = b;
        harmonize(x, y);
        Jet r(x.tab_);
        for (const auto& e : x.tab_->mul) r.c_[e.dst] += x.c_[e.a] * y.c_[e.b];
        return r;
    }
    friend Jet operator/(const Jet& a, const Jet& b) { return a * b.reciprocal(); }

    friend Jet operator-(Jet a) { for (double& x : a.c_) x = -x; return a; }
    friend Jet operator+(Jet a, double v) { a.c_[0] += v; return a; }
    friend Jet operator+(double v, Jet a) { a.c_[0] += v; return a; }
    friend Jet operator-(Jet a, double v) { a.c_[0] -= v; return a; }
    friend Jet operator-(double v, Jet a) {
        for (double& x : a.c_) x = -x;
        a.c_[0] += v;
        return a;
    }
    friend Jet operator*(Jet a, double v) { a *= v; return a; }
    friend Jet operator*(double v, Jet a) { a *= v; return a; }
    friend Jet operator/(Jet a, double v) { a *= 1.0 / v; return a; }
    friend Jet operator/(double v, const Jet& a) { return a.reciprocal() * v; }

    /// Composition h(f) given the scaled derivatives a_k = h^(k)(f0) / k!.
    /// Standard truncated-series composition: with w = f - f0 (nilpotent),
    /// h(f) = sum_k a_k w^k, evaluated by Horner.
    Jet compose_series(const std::vector<double>& a) const {
        Jet w = *this;
        w.c_[0] = 0.0;
        Jet r = Jet::constant(dim(), order(), a.empty() ? 0.0 : a.back());
        for (int k = static_cast<int>(a.size()) - 2; k >= 0; --k) {
            r = r * w;
            r.c_[0] += a[k];
        }
        return r;
    }

    Jet reciprocal() const {
        double u0 = value();
        if (u0 == 0.0) throw DomainError("division by a jet with zero value");
        // (1/u)^(k)/k! at u0 = (-1)^k / u0^{k+1}
        std::vector<double> a(order() + 1);
        double t = 1.0 / u0;
        for (int k = 0; k <= order(); ++k) {
            a[k] = t;
            t *= -1.0 / u0;
        }
        return compose_series(a);
    }

private:
    std::shared_ptr<const JetTable> tab_;
    std::vector<double> c_;

    int checked_slot(const MultiIndex& alpha) const {
        if (static_cast<int>(alpha.size()) != dim())
            throw ArityError("multi-index length " + std::to_string(alpha.size()) +
                             " does not match jet dimension " + std::to_string(dim()));
        for (int c : alpha)
            if (c < 0) throw OrderError("multi-index components must be non-negative");
        int s = tab_->slot(alpha);
        if (s < 0)
            throw OrderError("derivative order exceeds jet truncation order " +
                             std::to_string(order()));
        return s;
    }

    void add_in_place(const Jet& o) {
        for (int s = 0; s < tab_->size() && s < o.tab_->size(); ++s) c_[s] += o.c_[s];
    }

    // Binary operands must share a dimension; mixed orders truncate to the
    // shallower one (information beyond it is meaningless for the result).
    static void harmonize(Jet& a, Jet& b) {
        if (a.dim() != b.dim())
            throw ArityError("cannot combine jets of dimensions " + std::to_string(a.dim()) +
                             " and " + std::to_string(b.dim()));
        if (a.order() > b.order()) a = a.truncated(b.order());
        else if (b.order() > a.order()) b = b.truncated(a.order());
    }

    friend Jet sqrt(const Jet&);
    friend Jet exp(const Jet&);
    friend Jet log(const Jet&);
    friend Jet sin(const Jet&);
    friend Jet cos(const Jet&);
    friend Jet pow(const Jet&, double);
};

inline Jet sqrt(const Jet& f) {
    double u0 = f.value();
    if (u0 <= 0.0) throw DomainError("sqrt of a jet with non-positive value");
    // (u^{1/2})^(k)/k! = C(1/2, k) u0^{1/2 - k}
    std::vector<double> a(f.order() + 1);
    double t = std::sqrt(u0);
    double p = 0.5;
    for (int k = 0; k <= f.order(); ++k) {
        a[k] = t;
        t *= (p - k) / ((k + 1) * u0);
    }
    return f.compose_series(a);
}

inline Jet exp(const Jet& f) {
    // exp^(k)(u0)/k! = e^{u0}/k!
    std::vector<double> a(f.order() + 1);
    double e = std::exp(f.value());
    double fact = 1.0;
    for (int k = 0; k <= f.order(); ++k) {
        if (k > 0) fact *= k;
        a[k] = e / fact;
    }
    return f.compose_series(a);
}

inline Jet log(const Jet& f) {
    double u0 = f.value();
    if (u0 <= 0.0) throw DomainError("log of a jet with non-positive value");
    // log^(k)(u0)/k! = (-1)^{k-1} / (k u0^k) for k >= 1
    std::vector<double> a(f.order() + 1);
    a[0] = std::log(u0);
    double t = 1.0;
    for (int k = 1; k <= f.order(); ++k) {
        t /= u0;
        a[k] = ((k % 2) ? t : -t) / k;
    }
    return f.compose_series(a);
}

inline Jet sin(const Jet& f) {
    double s = std::sin(f.value()), c = std::cos(f.value());
    std::vector<double> a(f.order() + 1);
    double fact = 1.0;
    static const double cycle_sign[4] = {1.0, 1.0, -1.0, -1.0};
    for (int k = 0; k <= f.order(); ++k) {
        if (k > 0) fact *= k;
        a[k] = cycle_sign[k % 4] * ((k % 2) ? c : s) / fact;
    }
    return f.compose_series(a);
}

inline Jet cos(const Jet& f) {
    double s = std::sin(f.value()), c = std::cos(f.value());
    std::vector<double> a(f.order() + 1);
    double fact = 1.0;
    static const double cycle_sign[4] = {1.0, -1.0, -1.0, 1.0};
    for (int k = 0; k <= f.order(); ++k) {
        if (k > 0) fact *= k;
        a[k] = cycle_sign[k % 4] * ((k % 2) ? s : c) / fact;
    }
    return f.compose_series(a);
}

/// Integer powers are exact products (any base); other exponents use the
/// binomial series and require a positive base value.
inline Jet pow(const Jet& f, double p) {
    double ip;
    if (std::modf(p, &ip) == 0.0 && std::abs(ip) <= 64.0) {
        int n = static_cast<int>(ip);
        Jet base = n < 0 ? f.reciprocal() : f;
        Jet r = Jet::constant(f.dim(), f.order(), 1.0);
        for (int k = 0; k < std::abs(n); ++k) r = r * base;
        return r;
    }
    double u0 = f.value();
    if (u0 <= 0.0)
        throw DomainError("non-integer power of a jet with non-positive value");
    // (u^p)^(k)/k! = C(p, k) u0^{p-k}
    std::vector<double> a(f.order() + 1);
    double t = std::pow(u0, p);
    for (int k = 0; k <= f.order(); ++k) {
        a[k] = t;
        t *= (p - k) / ((k + 1) * u0);
    }
    return f.compose_series(a);
}

} // namespace folib
