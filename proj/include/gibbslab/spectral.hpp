#pragma once

#include <array>
#include <string>
#include <vector>

#include "gibbslab/errors.hpp"

namespace gibbslab {

using Mode = std::array<int, 3>;  // unused trailing components stay 0

// Plane-wave basis u_n(x) = e^{2 pi i n.x} on the unit torus in dimension d,
// truncated to |n|_inf <= K.  Eigenvalues of -Laplacian + kappa are
// lambda_n = 4 pi^2 |n|^2 + kappa.  Modes are listed lexicographically, so
// the set is closed under negation.
struct TorusBasis {
    int d = 0;
    int K = 0;
    double kappa = 0.0;
    std::vector<Mode> modes;
    std::vector<double> eigenvalues;

    int num_modes() const { return static_cast<int>(modes.size()); }
    // Index of mode n, or -1 when outside the truncation.
    int index_of(const Mode& n) const;
    int negate_index(int i) const;
};

TorusBasis build_basis(int d, int K, double kappa);

// Operator diagonal in the plane-wave basis.  positive_kernel marks the
// Green/semigroup family whose full-space kernels are pointwise nonnegative.
struct DiagonalOperator {
    const TorusBasis* basis = nullptr;
    std::vector<double> values;
    bool positive_kernel = false;
    std::string tag;
};

// G_{tau,t} = e^{-t h / tau} / (tau (e^{h/tau} - 1)), defined for t > -1.
DiagonalOperator green_quantum(const TorusBasis& basis, double tau, double t);
// S_{tau,t} = e^{-t h / tau}, defined for t >= 0.
DiagonalOperator semigroup(const TorusBasis& basis, double tau, double t);
// G = h^{-1}, the classical covariance.
DiagonalOperator green_classical(const TorusBasis& basis);
DiagonalOperator identity_operator(const TorusBasis& basis);

// Translation-invariant kernel sampled on the uniform N^d grid:
// values[i*N^d + j] = A(x_i; x_j) = sum_n v_n e^{2 pi i n.(x_i - x_j)}.
struct KernelGrid {
    const TorusBasis* basis = nullptr;
    int N = 0;
    std::vector<double> values;

    int points() const;
    double at(int i, int j) const { return values[static_cast<size_t>(i) * points() + j]; }
    double min_value() const;
    double max_value() const;
};

// Requires N >= 2(2K+1) so the displacement sampling is alias-free.
KernelGrid kernel(const DiagonalOperator& op, int N);

double hs_norm(const DiagonalOperator& op);   // Hilbert-Schmidt norm
double trace(const DiagonalOperator& op);     // integrated diagonal

// rho_tau(N_tau) = sum_n 1/(tau (e^{lambda_n/tau} - 1)).
double particle_number(const TorusBasis& basis, double tau);

// Two-body potential given by its Fourier coefficients on |n|_inf <= Kw,
// stored lexicographically like a TorusBasis mode list.  Real and even:
// coeff(n) = coeff(-n).  positive_type marks the renormalized regime where
// every coefficient must be >= 0.
struct Interaction {
    int d = 1;
    int Kw = 0;
    std::vector<double> coeffs;
    bool positive_type = true;

    double at(const Mode& n) const;
    double at3(int n0, int n1, int n2) const { return at(Mode{n0, n1, n2}); }
    // w(0) = sum of all coefficients (band-limited point value).
    double w_zero() const;
    bool any_negative() const;

    static Interaction zero(int d);
};

// coeff(n) = amp * exp(-|n|^2 scale^2 / width^2); arg scale /= tau recovers
// the local-interaction family w_tau with coefficients w_hat(n/tau).
Interaction gaussian_interaction(int d, int Kw, double amp, double width, double arg_scale = 1.0);
Interaction constant_interaction(int d, int Kw, double amp);

// Per-tau diagnostics of the high-temperature limit:
//   gap_s2            = || G_tau - h^{-1} ||_{S^2}
//   scaled_trace      = (1/tau) tr G_tau
//   time_uniform_gap  = sup_t (1+t) || G_{tau,t} - h^{-1} ||_{S^2},  t in (-1,1)
//   semigroup_bound   = sup_t (t/tau) || S_{tau,t} ||_{S^2},         t in (0,1)
struct ConvergenceRow {
    double tau = 0.0;
    double gap_s2 = 0.0;
    double scaled_trace = 0.0;
    double time_uniform_gap = 0.0;
    double semigroup_bound = 0.0;
};

std::vector<ConvergenceRow> convergence_report(const TorusBasis& basis,
                                               const std::vector<double>& taus);

}  // namespace gibbslab
