#pragma once

#include <map>
#include <string>
#include <vector>

#include "gibbslab/errors.hpp"
#include "gibbslab/spectral.hpp"

namespace gibbslab {

struct FockCaps {
    int max_modes = 5;
    int max_total = 8;
    int max_dim = 5000;
};

// Truncated bosonic Fock space over the basis modes with total occupation
// <= cap.  States are ordered by total particle number, then lexicographic
// occupation, so fixed-number blocks are contiguous.  dim = C(M+N, N).
struct FockSpace {
    TorusBasis basis;
    int cap = 0;
    std::vector<std::vector<int>> states;
    std::map<std::vector<int>, int> index;
    std::vector<std::pair<int, int>> blocks;  // [begin, end) per total occupation

    int dim() const { return static_cast<int>(states.size()); }
    int num_modes() const { return basis.num_modes(); }
    int index_of(const std::vector<int>& occ) const;
    int total_occupation(int state) const;
};

FockSpace build_fock_space(const TorusBasis& basis, int cap, const FockCaps& caps = {});

// Dense operator on the Fock space.
struct FockOperator {
    const FockSpace* fs = nullptr;
    std::vector<double> a;
    bool hermitian = false;
    std::string label;

    int dim() const { return fs->dim(); }
    double& at(int i, int j) { return a[static_cast<size_t>(i) * dim() + j]; }
    double at(int i, int j) const { return a[static_cast<size_t>(i) * dim() + j]; }
    double max_abs() const;
    double hermiticity_gap() const;  // max |A - A^T|
};

enum class LadderKind { annihilate, create };

// Matrix of b_k (annihilate) or b*_k (create), scaled by tau^{-1/2}; tau = 1
// gives the bare ladder.  Creation out of the top shell maps to zero.
FockOperator ladder(const FockSpace& fs, int mode, LadderKind kind, double tau = 1.0);

struct LadderOp {
    int mode = 0;
    bool create = false;
};
// Operator product, leftmost factor first.
using Monomial = std::vector<LadderOp>;

struct Hamiltonians {
    FockOperator h0;      // (1/tau) sum_k lambda_k b*_k b_k, diagonal
    FockOperator w;       // (1/2) sum_n what(n) D_n^* D_n with the density
                          // counterterm rho_bar = sum_k g_k subtracted at n=0
    FockOperator wplain;  // (1/2) sum_n what(n) sum_{k,l} phi*_{k+n} phi*_{l-n} phi_k phi_l
    double rho_bar = 0.0;
};

// Requires positive-type coefficients for the renormalized interaction; also
// verifies W is positive semidefinite up to -1e-10 * ||W||.
Hamiltonians hamiltonians(const FockSpace& fs, double tau, const Interaction& w);

struct TracedValue {
    double value = 0.0;
    bool truncation_warning = false;  // doubling the cap moved the value > 1e-8 rel
};

// <monomial> under the quasi-free state rho_0 = e^{-H0}/tr e^{-H0}, computed
// as an exact diagonal trace (ladder strings walk basis states).
TracedValue quasi_free_expectation(const FockSpace& fs, double tau, const Monomial& mono);

struct WickCheckResult {
    double lhs = 0.0;  // quasi-free trace
    double rhs = 0.0;  // pairing sum of exact two-point functions
    double gap = 0.0;
};

// Two-point values: rho_0(b*_k b_l) = delta_{kl} c_k, rho_0(b_k b*_l) =
// delta_{kl}(1 + c_k), c_k = 1/(e^{lambda_k/tau} - 1); unbalanced pairs vanish.
WickCheckResult wick_check(const FockSpace& fs, double tau, const Monomial& mono);

// Unnormalized interacting state e^{-eta H0} e^{-((1-2eta) H0 + z W)} e^{-eta H0}
// divided by tr e^{-H0}, built blockwise over particle-number sectors.
struct ThermalState {
    const FockSpace* fs = nullptr;
    double tau = 0.0, eta = 0.0, z = 0.0;
    std::vector<double> rho;  // dense dim x dim, block-diagonal
    double z0 = 0.0;          // tr e^{-H0}
};

ThermalState build_thermal_state(const FockSpace& fs, double tau, double eta, double z,
                                 const Interaction& w, const FockCaps& caps = {});

double full_state_expectation(const ThermalState& st, const FockOperator& theta);
double full_state_expectation(const FockSpace& fs, double tau, double eta, double z,
                              const Interaction& w, const FockOperator& theta,
                              const FockCaps& caps = {});

// g_m(t) = tr(Theta e^{-(1-t_1)H0} V e^{-(t_1-t_2)H0} ... V e^{-t_m H0}) / tr e^{-H0}
// for simplex-ordered times eta <= t_m <= ... <= t_1 <= 1 - eta, with V an
// arbitrary vertex operator.
double duhamel_time_product(const FockSpace& fs, double tau, double eta,
                            const std::vector<double>& times, const FockOperator& w_op,
                            const FockOperator& theta);
// Same with V = the renormalized interaction built from w.
double duhamel_time_product(const FockSpace& fs, double tau, double eta,
                            const std::vector<double>& times, const Interaction& w,
                            const FockOperator& theta);

// Reduced correlation entries gamma_p(k;l) = rho(Theta(u_k u_l^*)) for p = 1,
// or the order-2 tensor for p = 2, from the normalized interacting state.
std::vector<double> exact_correlation(const FockSpace& fs, double tau, double eta, double z,
                                      const Interaction& w, int p, const FockCaps& caps = {});

// Number operator N_tau = sum_k phi*_k phi_k and rank-one observables
// Theta_tau(u_k u_l^*) = phi*_k phi_l = b*_k b_l / tau.
FockOperator number_operator(const FockSpace& fs, double tau);
FockOperator mode_projector(const FockSpace& fs, int k, int l, double tau);
FockOperator identity_fock(const FockSpace& fs);

}  // namespace gibbslab
