#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "gibbslab/expansion.hpp"
#include "gibbslab/spectral.hpp"

namespace gibbslab {

// Truncated Gaussian free field phi = sum_n omega_n u_n / sqrt(lambda_n) for
// i.i.d. standard complex Gaussians omega_n (density pi^{-1} e^{-|z|^2}, so
// E|omega|^2 = 1 and each real component has variance 1/2).
struct FieldSample {
    const TorusBasis* basis = nullptr;
    std::vector<std::complex<double>> amplitudes;  // phi_hat_n, basis mode order
    int N = 0;                                     // grid points per axis
    std::vector<std::complex<double>> grid;        // synthesis on the N^d grid

    // 0 outside the truncation.
    std::complex<double> amplitude(const Mode& n) const;
    double mass() const;  // sum_n |phi_hat_n|^2
};

struct MCEstimate {
    double mean = 0.0;
    double se = 0.0;  // sample std / sqrt(count); delta method for ratios
    long long count = 0;
    std::uint64_t seed = 0;
};

// The synthesis grid has N = 4K + 2 points per axis, alias-free for every
// band-limited functional of |phi|^2 used below.
FieldSample sample_field(const TorusBasis& basis, std::mt19937_64& rng);

// wick_ordered subtracts the constant density rho_[K] = sum_n 1/lambda_n from
// |phi|^2 before the modes are paired through w_hat; plain keeps |phi|^2;
// local_quartic is the d = 1 contact interaction (alpha/2) int |phi|^4 with
// the coupling alpha read from the zero Fourier coefficient of w.
enum class ClassicalRegime { wick_ordered, plain, local_quartic };

// rho_[K] = E |phi(x)|^2, independent of x on the torus.
double classical_density(const TorusBasis& basis);

double interaction_value(const FieldSample& phi, const Interaction& w, ClassicalRegime regime);

// E[W^m] under the free field for the wick-ordered regime, m in {1, 2}:
// closed-form mode sums by Wick's theorem (pair contractions for m = 1,
// fixed-point-free contraction permutations for m = 2).
double interaction_moment_exact(const TorusBasis& basis, const Interaction& w, int m);

// Lift of the p-particle kernel to the field algebra: a rank-one term
// |u_k><u_l| contributes phi_hat_k conj(phi_hat_l) per slot, the identity
// kernel contributes mass()^p.
std::complex<double> observable_value(const Observable& xi, const FieldSample& phi);

using FieldFunctional = std::function<double(const FieldSample&)>;

// rho_z(X) = E[X e^{-zW}] / E[e^{-zW}] by a shared-sample ratio estimator.
MCEstimate reweighted_expectation(const TorusBasis& basis, const Interaction& w,
                                  ClassicalRegime regime, const FieldFunctional& theta,
                                  long long samples, double z, std::uint64_t seed);
// Observable form; xi must be self-adjoint so the lifted value is real.
MCEstimate reweighted_expectation(const TorusBasis& basis, const Interaction& w,
                                  ClassicalRegime regime, const Observable& xi,
                                  long long samples, double z, std::uint64_t seed);

// Coupled-cutoff second moment E|W_fine - W_coarse|^2: the coarse field reuses
// the fine field's omega draws mode by mode, so the difference is estimated
// without independent-sample variance.
MCEstimate cauchy_check(const TorusBasis& coarse, const TorusBasis& fine, const Interaction& w,
                        ClassicalRegime regime, long long samples, std::uint64_t seed);

// Mode-basis p-particle correlation estimates.  Per-sample kernels are
// hermitian identically, so hermitization only removes rounding noise, and
// entries are real because momentum conservation kills the imaginary parts.
struct GammaEstimate {
    CorrelationKernel kernel;
    std::vector<double> se;  // per entry, same layout as kernel.entries
    long long count = 0;
    std::uint64_t seed = 0;
};

GammaEstimate classical_gamma(const TorusBasis& basis, const Interaction& w,
                              ClassicalRegime regime, int p, long long samples, double z,
                              std::uint64_t seed);

}  // namespace gibbslab
