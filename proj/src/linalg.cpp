#include "gibbslab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace gibbslab {

SymMatrix SymMatrix::identity(int n) {
    SymMatrix m(n);
    for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
}

double SymMatrix::max_abs() const {
    double v = 0.0;
    for (double x : a) v = std::max(v, std::abs(x));
    return v;
}

double SymMatrix::asymmetry() const {
    double v = 0.0;
    for (int i = 0; i < dim; ++i)
        for (int j = i + 1; j < dim; ++j) v = std::max(v, std::abs(at(i, j) - at(j, i)));
    return v;
}

void SymMatrix::require_symmetric(const std::string& where) const {
    for (double x : a)
        if (!std::isfinite(x)) throw ParameterError(where + ": non-finite matrix entry");
    if (asymmetry() > 1e-14 * std::max(max_abs(), 1e-300))
        throw ParameterError(where + ": matrix is not symmetric");
}

EigDecomposition jacobi_eigh(const SymMatrix& A) {
    A.require_symmetric("jacobi_eigh");
    const int n = A.dim;
    const double scale = A.max_abs();
    const double thresh = 1e-12 * scale;

    std::vector<double> m = A.a;
    auto el = [&](int i, int j) -> double& { return m[static_cast<size_t>(i) * n + j]; };
    std::vector<double> q(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) q[static_cast<size_t>(i) * n + i] = 1.0;

    if (scale > 0.0) {
        const int max_sweeps = 64;
        for (int sweep = 0; sweep < max_sweeps; ++sweep) {
            double off = 0.0;
            for (int p = 0; p < n; ++p)
                for (int r = p + 1; r < n; ++r) off = std::max(off, std::abs(el(p, r)));
            if (off <= thresh) break;
            if (sweep == max_sweeps - 1)
                throw InvariantError("jacobi_eigh: no convergence in " +
                                     std::to_string(max_sweeps) + " sweeps");
            for (int p = 0; p < n; ++p) {
                for (int r = p + 1; r < n; ++r) {
                    const double apr = el(p, r);
                    if (std::abs(apr) <= thresh * 1e-2) continue;
                    const double theta = (el(r, r) - el(p, p)) / (2.0 * apr);
                    const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                     (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                    const double c = 1.0 / std::sqrt(t * t + 1.0);
                    const double s = t * c;
                    const double tau = s / (1.0 + c);
                    const double app = el(p, p), arr = el(r, r);
                    el(p, p) = app - t * apr;
                    el(r, r) = arr + t * apr;
                    el(p, r) = el(r, p) = 0.0;
                    for (int k = 0; k < n; ++k) {
                        if (k == p || k == r) continue;
                        const double akp = el(k, p), akr = el(k, r);
                        el(k, p) = el(p, k) = akp - s * (akr + tau * akp);
                        el(k, r) = el(r, k) = akr + s * (akp - tau * akr);
                    }
                    for (int k = 0; k < n; ++k) {
                        double& qkp = q[static_cast<size_t>(k) * n + p];
                        double& qkr = q[static_cast<size_t>(k) * n + r];
                        const double a0 = qkp, b0 = qkr;
                        qkp = a0 - s * (b0 + tau * a0);
                        qkr = b0 + s * (a0 - tau * b0);
                    }
                }
            }
        }
    }

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int i, int j) { return el(i, i) < el(j, j); });

    EigDecomposition d;
    d.dim = n;
    d.eigenvalues.resize(n);
    d.q.resize(static_cast<size_t>(n) * n);
    for (int j = 0; j < n; ++j) {
        d.eigenvalues[j] = el(order[j], order[j]);
        for (int i = 0; i < n; ++i)
            d.q[static_cast<size_t>(i) * n + j] = q[static_cast<size_t>(i) * n + order[j]];
    }
    return d;
}

SymMatrix sym_matrix_function(const SymMatrix& A, const std::function<double(double)>& f,
                              const std::string& f_name) {
    EigDecomposition d = jacobi_eigh(A);
    const int n = A.dim;
    std::vector<double> fl(n);
    for (int j = 0; j < n; ++j) {
        fl[j] = f(d.eigenvalues[j]);
        if (!std::isfinite(fl[j]))
            throw ParameterError("sym_matrix_function: " + f_name +
                                 " not finite at eigenvalue " + std::to_string(d.eigenvalues[j]));
    }
    SymMatrix out(n);
    for (int i = 0; i < n; ++i) {
        for (int j = i; j < n; ++j) {
            double s = 0.0;
            for (int k = 0; k < n; ++k) s += d.q_at(i, k) * fl[k] * d.q_at(j, k);
            out.at(i, j) = out.at(j, i) = s;
        }
    }
    return out;
}

QuadRule gauss_legendre(int n, double a, double b) {
    if (n <= 0) throw ParameterError("gauss_legendre: n must be positive");
    if (!(a < b)) throw ParameterError("gauss_legendre: need a < b");
    QuadRule r;
    r.nodes.resize(n);
    r.weights.resize(n);
    // Newton iteration on P_n over [-1,1]; nodes symmetric about 0.
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
        r.nodes[i] = mid - half * x;
        r.nodes[n - 1 - i] = mid + half * x;
        r.weights[i] = r.weights[n - 1 - i] = w * half;
    }
    return r;
}

double SimplexRule::volume() const {
    double v = std::pow(1.0 - 2.0 * eta, m);
    for (int k = 2; k <= m; ++k) v /= k;
    return v;
}

SimplexRule simplex_rule(int m, double eta, int order) {
    if (m < 0) throw ParameterError("simplex_rule: m must be >= 0");
    if (!(eta >= 0.0 && eta <= 0.25)) throw ParameterError("simplex_rule: eta must lie in [0, 1/4]");
    if (order <= 0) throw ParameterError("simplex_rule: order must be positive");

    SimplexRule rule;
    rule.m = m;
    rule.eta = eta;
    if (m == 0) {
        rule.nodes.push_back({});
        rule.weights.push_back(1.0);
        return rule;
    }

    const QuadRule g = gauss_legendre(order, 0.0, 1.0);
    const double span = 1.0 - 2.0 * eta;
    std::vector<int> idx(m, 0);
    std::vector<double> t(m);
    for (;;) {
        // t_k - eta = (t_{k-1} - eta) * u_k, t_0 = 1 - eta.
        double prev = span;  // t_{k-1} - eta
        double w = 1.0;
        for (int k = 0; k < m; ++k) {
            const double u = g.nodes[idx[k]];
            w *= g.weights[idx[k]] * prev;  // Jacobian factor d t_k / d u_k
            prev *= u;
            t[k] = eta + prev;
        }
        rule.nodes.push_back(t);
        rule.weights.push_back(w);
        int k = m - 1;
        while (k >= 0 && ++idx[k] == order) idx[k--] = 0;
        if (k < 0) break;
    }
    return rule;
}

}  // namespace gibbslab
