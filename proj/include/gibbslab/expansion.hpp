#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "gibbslab/errors.hpp"
#include "gibbslab/linalg.hpp"
#include "gibbslab/pairing.hpp"
#include "gibbslab/spectral.hpp"

namespace gibbslab {

// positive_type: every Fourier coefficient of w must be >= 0.
// pointwise_1d: d = 1 and the band-limited real-space samples of w must be
//   nonnegative; Fourier coefficients may change sign.
enum class InteractionRegime { positive_type, pointwise_1d };

struct RankOneTerm {
    double c = 1.0;
    std::vector<Mode> ks;  // creation modes, one per particle slot
    std::vector<Mode> ls;  // annihilation modes
};

// p-particle observable kernel xi.  Lifting to the field algebra happens in
// fockoracle (quantum) and classicalmc (classical); here xi only attaches
// plane-wave phases to the open legs of a pairing integral.
struct Observable {
    int p = 0;
    bool identity = false;  // identity kernel: each slot's two legs share one
                            // position variable and no phase is attached
    std::vector<RankOneTerm> terms;
    bool normalized = false;  // ||xi||_{S2} <= 1

    static Observable unit();                  // p = 0, the scalar 1
    static Observable identity_kernel(int p);  // p >= 1; not normalized
    static Observable rank_one(const Mode& k, const Mode& l);
    static Observable rank_one_pair(const Mode& k1, const Mode& k2, const Mode& l1,
                                    const Mode& l2);

    bool self_adjoint() const;
    // Valid for a list of distinct plane-wave dyads; identity kernels have no
    // finite S2 norm and are rejected.
    double s2_norm() const;
};

struct ExpansionConfig {
    TorusBasis basis;
    double tau = 1.0;  // > 0; +infinity selects the classical theory
    double eta = 0.0;  // in [0, 1/4]
    Interaction w;
    InteractionRegime regime = InteractionRegime::positive_type;
    PairingClass pairing_class = PairingClass::P;
    int grid_size = 0;       // 0: smallest alias-free grid, chosen per contraction
    int quad_order = 12;     // Gauss order per simplex axis
    double quad_tol = 1e-9;  // relative acceptance for the order-doubling check
    int threads = 1;
    EnumerationCaps caps;

    bool classical() const { return std::isinf(tau); }
};

void validate_config(const ExpansionConfig& cfg);

// The renormalized interaction alternates creation/annihilation within each
// density factor; the plain quartic lists both creations first.
VertexOrdering ordering_for(PairingClass cls);

// Diagonal representation of the two-point factor of a collapsed edge:
//   quantum: G_{tau, sigma (s_a - s_b)} + 1{sigma = +1} (1/tau) S_{tau, s_a - s_b}
//   classical: h^{-1}, times ignored.
// s_a is the time of the earlier endpoint, so s_a - s_b >= 0; violations mean
// the caller's graph or time ordering is corrupt.
DiagonalOperator edge_operator(const ExpansionConfig& cfg, int sigma, double s_a, double s_b);

// The same factor as a grid kernel; edge_index addresses g.edges and times
// are the simplex times (t_1 >= ... >= t_m).
KernelGrid edge_kernel(const ExpansionConfig& cfg, const CollapsedGraph& g, int edge_index,
                       const std::vector<double>& times);

// Smallest grid size N for which every pairing integral at order (m, p) is an
// exact cubature of its band-limited integrand under cfg's basis and
// interaction (plus observable phases of frequency up to basis.K).
int required_grid(const ExpansionConfig& cfg, int m, int p);

// Value of one admissible pairing: the integral over one position variable
// per collapsed class of the product of density couplings w, the observable
// kernel, and the two-point edge factors.
double pairing_value(const ExpansionConfig& cfg, int m, const Pairing& pi, const Observable& xi,
                     const std::vector<double>& times);

// Integrand of the m-th coefficient: sum of pairing_value over the configured
// pairing class.
double f_value(const ExpansionConfig& cfg, int m, const Observable& xi,
               const std::vector<double>& times);

// Quantum: (-1)^m / ((1-2 eta)^m 2^m) times the simplex integral of f_value,
// by iterated Gauss quadrature with one adaptive order doubling.  Classical:
// (-1)^m / (m! 2^m) times the time-independent pairing sum.
double coefficient(const ExpansionConfig& cfg, int m, const Observable& xi);

struct CoefficientSeries {
    std::vector<double> values;  // a_0 .. a_{M-1}
    double nu = 0.0;             // |a_m| <= nu sigma^m m! for every stored m
    double sigma = 0.0;
    bool classical = false;
    double tau = 0.0;
    double eta = 0.0;

    int size() const { return static_cast<int>(values.size()); }
};

// Minimal growth envelope: with r_m = |a_m|/m! and the anchor
// nu_0 = max(r_0, 1e-12 max_m r_m), sigma = max_{m>=1} (r_m/nu_0)^{1/m}, then
// nu = max_m r_m / sigma^m.  All-zero series fit (0, 0).
void fit_growth(CoefficientSeries& s);

CoefficientSeries coefficient_series(const ExpansionConfig& cfg, int M, const Observable& xi);

// Resummed value of a coefficient series at z = 1; supplied by the borel
// module (or a direct oracle at small scale).
using SeriesEvaluator = std::function<double(const CoefficientSeries&)>;

struct CorrelationKernel {
    int p = 1;
    int num_modes = 0;
    // p = 1: row-major (k; l); p = 2: row-major ((k1,k2); (l1,l2)).  Entries
    // are the real parts of the hermitized kernel; the dropped remainder is
    // recorded in hermiticity_deviation.
    std::vector<double> entries;
    bool classical = false;
    double tau = 0.0;
    double eta = 0.0;
    double hermiticity_deviation = 0.0;

    double at(int k, int l) const { return entries[static_cast<size_t>(k) * num_modes + l]; }
    double at2(int k1, int k2, int l1, int l2) const;
};

// Entry (k; l) = resummed A^{xi_kl}(1) / A^{1}(1) with xi_kl the normalized
// rank-one dyad; one shared pairing contraction per (m, quadrature node)
// serves all entries.
CorrelationKernel correlation_kernel(const ExpansionConfig& cfg, int p, int M,
                                     const SeriesEvaluator& resum);

}  // namespace gibbslab
