#include "gibbslab/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace gibbslab {

namespace {

// 1/(tau (e^{lambda/tau} - 1)) evaluated stably: for lambda/tau large the
// direct form underflows gracefully; for lambda/tau small use expm1.
double bose_value(double lambda, double tau) {
    return 1.0 / (tau * std::expm1(lambda / tau));
}

}  // namespace

int TorusBasis::index_of(const Mode& n) const {
    for (int c = d; c < 3; ++c)
        if (n[c] != 0) return -1;
    int idx = 0;
    const int side = 2 * K + 1;
    for (int c = 0; c < d; ++c) {
        if (n[c] < -K || n[c] > K) return -1;
        idx = idx * side + (n[c] + K);
    }
    return idx;
}

int TorusBasis::negate_index(int i) const {
    Mode m = modes[i];
    for (int c = 0; c < 3; ++c) m[c] = -m[c];
    return index_of(m);
}

TorusBasis build_basis(int d, int K, double kappa) {
    if (d < 1 || d > 3) throw ParameterError("build_basis: d must be 1, 2 or 3");
    if (K < 0) throw ParameterError("build_basis: K must be >= 0");
    if (!(kappa > 0.0)) throw ParameterError("build_basis: kappa must be positive");
    TorusBasis b;
    b.d = d;
    b.K = K;
    b.kappa = kappa;
    const int side = 2 * K + 1;
    int total = 1;
    for (int c = 0; c < d; ++c) total *= side;
    b.modes.reserve(total);
    b.eigenvalues.reserve(total);
    std::vector<int> idx(d, -K);
    for (;;) {
        Mode m{0, 0, 0};
        double n2 = 0.0;
        for (int c = 0; c < d; ++c) {
            m[c] = idx[c];
            n2 += static_cast<double>(idx[c]) * idx[c];
        }
        b.modes.push_back(m);
        b.eigenvalues.push_back(4.0 * std::numbers::pi * std::numbers::pi * n2 + kappa);
        int c = d - 1;
        while (c >= 0 && ++idx[c] > K) idx[c--] = -K;
        if (c < 0) break;
    }
    return b;
}

DiagonalOperator green_quantum(const TorusBasis& basis, double tau, double t) {
    if (!(tau > 0.0)) throw ParameterError("green_quantum: tau must be positive");
    if (!(t > -1.0)) throw ParameterError("green_quantum: t must exceed -1");
    DiagonalOperator op;
    op.basis = &basis;
    op.positive_kernel = true;
    op.tag = "green_quantum";
    op.values.reserve(basis.num_modes());
    for (double l : basis.eigenvalues)
        op.values.push_back(std::exp(-t * l / tau) * bose_value(l, tau));
    return op;
}

DiagonalOperator semigroup(const TorusBasis& basis, double tau, double t) {
    if (!(tau > 0.0)) throw ParameterError("semigroup: tau must be positive");
    if (!(t >= 0.0)) throw ParameterError("semigroup: t must be >= 0");
    DiagonalOperator op;
    op.basis = &basis;
    op.positive_kernel = true;
    op.tag = "semigroup";
    op.values.reserve(basis.num_modes());
    for (double l : basis.eigenvalues) op.values.push_back(std::exp(-t * l / tau));
    return op;
}

DiagonalOperator green_classical(const TorusBasis& basis) {
    DiagonalOperator op;
    op.basis = &basis;
    op.positive_kernel = true;
    op.tag = "green_classical";
    op.values.reserve(basis.num_modes());
    for (double l : basis.eigenvalues) op.values.push_back(1.0 / l);
    return op;
}

DiagonalOperator identity_operator(const TorusBasis& basis) {
    DiagonalOperator op;
    op.basis = &basis;
    op.tag = "identity";
    op.values.assign(basis.num_modes(), 1.0);
    return op;
}

int KernelGrid::points() const {
    int p = 1;
    for (int c = 0; c < basis->d; ++c) p *= N;
    return p;
}

double KernelGrid::min_value() const { return *std::min_element(values.begin(), values.end()); }
double KernelGrid::max_value() const { return *std::max_element(values.begin(), values.end()); }

KernelGrid kernel(const DiagonalOperator& op, int N) {
    const TorusBasis& b = *op.basis;
    if (N < 2 * (2 * b.K + 1))
        throw ParameterError("kernel: grid N = " + std::to_string(N) +
                             " aliases mode differences; need N >= " +
                             std::to_string(2 * (2 * b.K + 1)));
    // displacement table a(delta) over the N^d circular offsets; the mode set
    // is closed under negation and values depend on |n| only, so the cosine
    // sum is exact and real.
    const int d = b.d;
    int npts = 1;
    for (int c = 0; c < d; ++c) npts *= N;
    std::vector<double> disp(npts, 0.0);
    std::vector<int> offset(d, 0);
    for (int j = 0; j < npts; ++j) {
        int rem = j;
        for (int c = d - 1; c >= 0; --c) {
            offset[c] = rem % N;
            rem /= N;
        }
        double s = 0.0;
        for (int n = 0; n < b.num_modes(); ++n) {
            double phase = 0.0;
            for (int c = 0; c < d; ++c)
                phase += static_cast<double>(b.modes[n][c]) * offset[c] / N;
            s += op.values[n] * std::cos(2.0 * std::numbers::pi * phase);
        }
        disp[j] = s;
    }
    KernelGrid g;
    g.basis = &b;
    g.N = N;
    g.values.resize(static_cast<size_t>(npts) * npts);
    std::vector<int> xi(d), xj(d);
    for (int i = 0; i < npts; ++i) {
        int rem = i;
        for (int c = d - 1; c >= 0; --c) {
            xi[c] = rem % N;
            rem /= N;
        }
        for (int j = 0; j < npts; ++j) {
            rem = j;
            for (int c = d - 1; c >= 0; --c) {
                xj[c] = rem % N;
                rem /= N;
            }
            int key = 0;
            for (int c = 0; c < d; ++c) key = key * N + ((xi[c] - xj[c]) % N + N) % N;
            g.values[static_cast<size_t>(i) * npts + j] = disp[key];
        }
    }
    return g;
}

double hs_norm(const DiagonalOperator& op) {
    double s = 0.0;
    for (double v : op.values) s += v * v;
    return std::sqrt(s);
}

double trace(const DiagonalOperator& op) {
    double s = 0.0;
    for (double v : op.values) s += v;
    return s;
}

double particle_number(const TorusBasis& basis, double tau) {
    if (!(tau > 0.0)) throw ParameterError("particle_number: tau must be positive");
    double s = 0.0;
    for (double l : basis.eigenvalues) s += bose_value(l, tau);
    return s;
}

double Interaction::at(const Mode& n) const {
    for (int c = d; c < 3; ++c)
        if (n[c] != 0) return 0.0;
    int idx = 0;
    const int side = 2 * Kw + 1;
    for (int c = 0; c < d; ++c) {
        if (n[c] < -Kw || n[c] > Kw) return 0.0;
        idx = idx * side + (n[c] + Kw);
    }
    return coeffs[idx];
}

double Interaction::w_zero() const {
    double s = 0.0;
    for (double c : coeffs) s += c;
    return s;
}

bool Interaction::any_negative() const {
    for (double c : coeffs)
        if (c < 0.0) return true;
    return false;
}

Interaction Interaction::zero(int d) {
    Interaction w;
    w.d = d;
    w.Kw = 0;
    w.coeffs.assign(1, 0.0);
    return w;
}

namespace {

template <typename F>
Interaction tabulate_interaction(int d, int Kw, F&& f) {
    if (d < 1 || d > 3) throw ParameterError("interaction: d must be 1, 2 or 3");
    if (Kw < 0) throw ParameterError("interaction: Kw must be >= 0");
    Interaction w;
    w.d = d;
    w.Kw = Kw;
    const int side = 2 * Kw + 1;
    int total = 1;
    for (int c = 0; c < d; ++c) total *= side;
    w.coeffs.resize(total);
    std::vector<int> idx(d, -Kw);
    for (int j = 0; j < total; ++j) {
        double n2 = 0.0;
        for (int c = 0; c < d; ++c) n2 += static_cast<double>(idx[c]) * idx[c];
        w.coeffs[j] = f(n2);
        int c = d - 1;
        while (c >= 0 && ++idx[c] > Kw) idx[c--] = -Kw;
    }
    return w;
}

}  // namespace

Interaction gaussian_interaction(int d, int Kw, double amp, double width, double arg_scale) {
    if (!(width > 0.0)) throw ParameterError("gaussian_interaction: width must be positive");
    const double s2 = arg_scale * arg_scale / (width * width);
    return tabulate_interaction(d, Kw, [&](double n2) { return amp * std::exp(-n2 * s2); });
}

Interaction constant_interaction(int d, int Kw, double amp) {
    return tabulate_interaction(d, Kw, [&](double) { return amp; });
}

std::vector<ConvergenceRow> convergence_report(const TorusBasis& basis,
                                               const std::vector<double>& taus) {
    std::vector<ConvergenceRow> rows;
    rows.reserve(taus.size());
    const DiagonalOperator gc = green_classical(basis);
    for (double tau : taus) {
        ConvergenceRow r;
        r.tau = tau;
        const DiagonalOperator gq = green_quantum(basis, tau, 0.0);
        double s2 = 0.0;
        for (int n = 0; n < basis.num_modes(); ++n) {
            const double diff = gq.values[n] - gc.values[n];
            s2 += diff * diff;
        }
        r.gap_s2 = std::sqrt(s2);
        r.scaled_trace = trace(gq) / tau;
        for (int j = -19; j <= 19; ++j) {
            const double t = j / 20.0;
            const DiagonalOperator gt = green_quantum(basis, tau, t);
            double acc = 0.0;
            for (int n = 0; n < basis.num_modes(); ++n) {
                const double diff = gt.values[n] - gc.values[n];
                acc += diff * diff;
            }
            r.time_uniform_gap = std::max(r.time_uniform_gap, (1.0 + t) * std::sqrt(acc));
        }
        for (int j = 1; j <= 19; ++j) {
            const double t = j / 20.0;
            r.semigroup_bound =
                std::max(r.semigroup_bound, (t / tau) * hs_norm(semigroup(basis, tau, t)));
        }
        rows.push_back(r);
    }
    return rows;
}

}  // namespace gibbslab
