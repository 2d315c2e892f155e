#pragma once

// Dense linear algebra over jets: small matrices and vectors whose entries
// carry truncated Taylor expansions.  Everything here is sized by the chart
// dimension (at most a handful), so plain O(d^3) loops are fine.

#include <vector>

#include "errors.hpp"
#include "jet.hpp"

namespace folib {

using JetVector = std::vector<Jet>;
using JetMatrix = std::vector<std::vector<Jet>>;

inline JetMatrix jet_matrix(int rows, int cols, int dim, int order) {
    return JetMatrix(rows, JetVector(cols, Jet::constant(dim, order, 0.0)));
}

inline JetVector jet_vector(int size, int dim, int order) {
    return JetVector(size, Jet::constant(dim, order, 0.0));
}

/// u . (g v) for a symmetric coefficient matrix g.
inline Jet metric_dot(const JetMatrix& g, const JetVector& u, const JetVector& v) {
    const int d = static_cast<int>(g.size());
    Jet s = Jet::constant(u[0].dim(), u[0].order(), 0.0);
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) s += u[a] * g[a][b] * v[b];
    return s;
}

/// Plain matrix-vector product (Pv)^a = P^a_b v^b.
inline JetVector mat_apply(const JetMatrix& P, const JetVector& v) {
    const int d = static_cast<int>(P.size());
    JetVector r = jet_vector(d, v[0].dim(), v[0].order());
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) r[a] += P[a][b] * v[b];
    return r;
}

// Cholesky factorization of a symmetric positive definite jet matrix, plus
// the inverse and the determinant square root derived from it.
struct MetricFactorization {
    JetMatrix L;     // lower triangular, L L^T = g
    JetMatrix Linv;  // lower triangular inverse of L
    JetMatrix ginv;  // Linv^T Linv
    Jet sqrt_det;    // product of the Cholesky pivots
};

/// Factor a symmetric jet matrix; throws MetricNotSPD when a pivot's value
/// drops to `pivot_tol` or below (the matrix is not safely positive).
inline MetricFactorization factorize_spd(const JetMatrix& g, double pivot_tol = 1e-12) {
    const int d = static_cast<int>(g.size());
    const int dim = g[0][0].dim(), order = g[0][0].order();
    MetricFactorization f;
    f.L = jet_matrix(d, d, dim, order);
    for (int j = 0; j < d; ++j) {
        Jet s = g[j][j];
        for (int k = 0; k < j; ++k) s -= f.L[j][k] * f.L[j][k];
        if (s.value() <= pivot_tol)
            throw MetricNotSPD("Cholesky pivot " + std::to_string(j) + " is " +
                               std::to_string(s.value()) + " (not positive definite)");
        f.L[j][j] = sqrt(s);
        for (int i = j + 1; i < d; ++i) {
            Jet t = g[i][j];
            for (int k = 0; k < j; ++k) t -= f.L[i][k] * f.L[j][k];
            f.L[i][j] = t / f.L[j][j];
        }
    }
    // Forward substitution for L^{-1}.
    f.Linv = jet_matrix(d, d, dim, order);
    for (int j = 0; j < d; ++j) {
        f.Linv[j][j] = 1.0 / f.L[j][j];
        for (int i = j + 1; i < d; ++i) {
            Jet t = Jet::constant(dim, order, 0.0);
            for (int k = j; k < i; ++k) t += f.L[i][k] * f.Linv[k][j];
            f.Linv[i][j] = -t / f.L[i][i];
        }
    }
    f.ginv = jet_matrix(d, d, dim, order);
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b)
            for (int i = std::max(a, b); i < d; ++i)
                f.ginv[a][b] += f.Linv[i][a] * f.Linv[i][b];
    f.sqrt_det = Jet::constant(dim, order, 1.0);
    for (int j = 0; j < d; ++j) f.sqrt_det = f.sqrt_det * f.L[j][j];
    return f;
}

} // namespace folib
