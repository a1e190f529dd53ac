#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gibbslab/errors.hpp"

namespace gibbslab {

// Dense real symmetric matrix, row-major storage.
struct SymMatrix {
    int dim = 0;
    std::vector<double> a;

    SymMatrix() = default;
    explicit SymMatrix(int n) : dim(n), a(static_cast<size_t>(n) * n, 0.0) {
        if (n <= 0) throw ParameterError("SymMatrix: dim must be positive");
    }

    double& at(int i, int j) { return a[static_cast<size_t>(i) * dim + j]; }
    double at(int i, int j) const { return a[static_cast<size_t>(i) * dim + j]; }

    static SymMatrix identity(int n);

    double max_abs() const;
    // Largest |A_ij - A_ji|; the symmetric-storage invariant allows
    // asymmetry up to 1e-14 * max|A| before operations reject the matrix.
    double asymmetry() const;
    void require_symmetric(const std::string& where) const;
};

// Eigenvalues ascending; q holds eigenvectors as columns, row-major.
struct EigDecomposition {
    int dim = 0;
    std::vector<double> eigenvalues;
    std::vector<double> q;

    double q_at(int i, int j) const { return q[static_cast<size_t>(i) * dim + j]; }
};

// Cyclic Jacobi diagonalization.  Deterministic sweep order; converges when
// every off-diagonal magnitude is <= 1e-12 * max|A_in|.  Non-finite entries
// are rejected.  Trace is preserved to 1e-10 relative by construction.
EigDecomposition jacobi_eigh(const SymMatrix& A);

// Q f(Lambda) Q^T.  f is applied to each eigenvalue; a non-finite f value
// names the offending eigenvalue in the thrown error.
SymMatrix sym_matrix_function(const SymMatrix& A, const std::function<double(double)>& f,
                              const std::string& f_name = "f");

struct QuadRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

// Gauss-Legendre rule with n nodes on [a,b]; exact for polynomial degree
// <= 2n-1 within 1e-12 relative.
QuadRule gauss_legendre(int n, double a, double b);

// Quadrature over the ordered time simplex
//   { eta <= t_m <= ... <= t_1 <= 1 - eta }.
// nodes[j] lists (t_1, ..., t_m) for node j.  Weights are positive and sum
// to the simplex volume (1-2eta)^m / m!.
struct SimplexRule {
    int m = 0;
    double eta = 0.0;
    std::vector<std::vector<double>> nodes;
    std::vector<double> weights;

    double volume() const;
};

// Iterated Gauss-Legendre via the substitution t_k - eta = (t_{k-1} - eta) u_k
// with t_0 = 1 - eta, so every node satisfies the strict interior ordering.
// m = 0 yields the single empty node with weight 1.  eta must lie in [0, 1/4].
SimplexRule simplex_rule(int m, double eta, int order = 12);

}  // namespace gibbslab
