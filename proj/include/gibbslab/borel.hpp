#pragma once

#include <vector>

#include "gibbslab/errors.hpp"
#include "gibbslab/expansion.hpp"

namespace gibbslab {

// Taylor coefficients of B(t) = sum a_m t^m / m! at the origin, with the
// growth envelope carried over from the source series; convergence radius
// is 1/sigma.
struct BorelSeries {
    std::vector<double> coefficients;
    double nu = 0.0;
    double sigma = 0.0;

    int size() const { return static_cast<int>(coefficients.size()); }
    double radius() const;
};

// pre: series has >= 2 terms and its (nu, sigma) envelope actually bounds it.
BorelSeries borel_transform(const CoefficientSeries& series);

// Anchors 0 = t_0 < ... < t_J = T with local Taylor coefficients of B at
// each anchor.  The local data is re-expanded from a rational model of the
// constant-subtracted transform (denominator order chosen by descent until
// the model reproduces all input coefficients and stays pole-free on
// [0, T]); with no admissible denominator the raw truncated polynomial is
// shifted instead.  shift_residual accumulates, per step, the mismatch
// between the previous local series pushed to the next anchor and that
// anchor's own value; the polynomial fallback instead accrues the envelope
// estimate nu sigma^M ((t+h)^M - t^M) of the first unmodelled term.
struct ContinuationGrid {
    std::vector<double> anchors;
    std::vector<std::vector<double>> local;
    double nu = 0.0;
    double sigma = 0.0;
    double shift_residual = 0.0;

    double T() const { return anchors.empty() ? 0.0 : anchors.back(); }
    // local series at anchor j evaluated at absolute position t
    double eval(int j, double t) const;
};

// Step is 1/(step_factor * sigma), capped at T; step_factor >= 4 keeps the
// step within the quarter-radius bound.  Accumulated residual beyond
// residual_tol aborts with the furthest reachable T in the message.
ContinuationGrid continue_series(const BorelSeries& series, double T, double step_factor = 5.0,
                                 double residual_tol = 1e-6);

struct LaplaceResult {
    double value = 0.0;
    double tail_bound = 0.0;      // Laplace weight of [T, inf) under the strip bound
    double shift_residual = 0.0;  // copied from the grid
};

// (1/z) integral of e^{-t/z} B(t) over [0, T] by per-interval Gauss rules,
// plus the reported tail bound R nu max(1, sigma) e^{-T(1/z - 1/R)} /
// (z (1/z - 1/R)) with R = 2 max(1, z).  Throws when z is outside the
// Laplace domain or the tail bound exceeds tail_tol * max(1, |value|).
LaplaceResult laplace_sum(const ContinuationGrid& grid, double z, double tail_tol = 1e-6);

// Full pipeline: transform, continue far enough that the tail bound drops
// below 1e-6 of the result (a few T extensions), sum.  The continuation
// residual is reported, never fatal, on this path.
LaplaceResult resum_detail(const CoefficientSeries& series, double z = 1.0);
double borel_resum(const CoefficientSeries& series, double z = 1.0);

struct DistanceResult {
    double distance = 0.0;
    double budget = 0.0;  // combined tail bounds and shift residuals
};

DistanceResult resummation_distance(const CoefficientSeries& a, const CoefficientSeries& b,
                                    double z);

// Exact rational coefficient of the quartic toy expansion,
// a_m = (-1)^m (4m-1)!!/m!; denominators are powers of two.
struct ToyRational {
    __int128 num = 0;
    unsigned long long den = 1;

    double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

ToyRational toy_coefficient_exact(int m);  // m in [0, 16]
CoefficientSeries toy_series(int M);       // rounded values with fitted envelope

// (2 pi)^{-1/2} integral of e^{-z x^4 - x^2/2} dx to 1e-10 absolute, z >= 0.
double toy_oracle(double z);

}  // namespace gibbslab
