#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gibbslab/errors.hpp"
#include "gibbslab/spectral.hpp"

namespace gibbslab {

// Potential sampled on the uniform N^d torus grid x_j = j/N, row-major over
// axes.  N is odd so the grid's Fourier modes pair as +/-n and the spectral
// Laplacian matrix stays real symmetric.  V must be nonnegative; v_min is the
// positivity floor used by the weighted norm where V vanishes.
struct PotentialGrid {
    int d = 1;
    int N = 0;
    std::vector<double> values;
    double kappa = 0.0;
    double tau = 0.0;
    double v_min = 1e-3;

    size_t size() const { return values.size(); }
};

// Samples V(x) (unused trailing coordinates are passed as 0) on the grid.
PotentialGrid make_potential(int d, int N, double kappa, double tau,
                             const std::function<double(double, double, double)>& V,
                             double v_min = 1e-3);

void validate_grid(const PotentialGrid& grid);

// sup_x |f(x)| / max(V(x), v_min), the metric of the fixed-point ball.
double weighted_norm(const PotentialGrid& grid, const std::vector<double>& f);

// Trigonometric interpolation onto the 2N+1 grid (next odd refinement); the
// coarse mode band embeds exactly, so band-limited data is reproduced.
PotentialGrid refine_grid(const PotentialGrid& grid);
std::vector<double> refine_field(const PotentialGrid& grid, const std::vector<double>& f);

// rho^{kappa+u}(x_j): diagonal of 1/(tau (e^{h_u/tau} - 1)) where h_u is the
// spectral Laplacian on the grid's own modes plus diag(kappa + u).  Constant
// u reduces to the exact mode sum (spectral shift); otherwise the dense grid
// matrix is diagonalized.
std::vector<double> density_diag(const PotentialGrid& grid, const std::vector<double>& u);

// The u == 0 constant from density_diag (independent of x).
double reference_density(const PotentialGrid& grid);

// Phi(u) = V + w * (rho^{kappa+u} - rho_bar), the convolution taken as exact
// circular convolution in the grid's Fourier representation.  Requires the
// grid to resolve the interaction band: N >= 2 Kw + 1.
std::vector<double> phi_map(const PotentialGrid& grid, const std::vector<double>& u,
                            const Interaction& w);

// Below this kappa the iteration is not guaranteed to contract; solves still
// run but the report carries a warning.
inline constexpr double kContractionKappaFloor = 8.0;

struct FixedPointReport {
    std::vector<double> residuals;  // ||Phi(u_k) - u_k||_V per iteration
    std::vector<double> ratios;     // successive-residual quotients
    std::vector<double> v;          // final iterate
    int iterations = 0;
    bool converged = false;
    bool ball_escape = false;
    std::string diagnosis;
};

// Banach iteration u <- Phi(u) from u0 = V inside the radius-r ball around V
// in the weighted norm.  Leaving the ball aborts with a diagnosis instead of
// converging to a spurious point; r must lie in (0,1).
FixedPointReport solve_fixed_point(const PotentialGrid& grid, const Interaction& w,
                                   double r, int max_iter, double tol);

// kappa-scaling measurements of the squared-Green diagonal and the
// off-diagonal Green kernel at the antipodal separation.
struct ScalingReport {
    std::vector<double> kappas;
    std::vector<double> diag_values;
    std::vector<double> offdiag_values;  // empty when alpha >= 1
    double diag_slope = 0.0;    // d log(diag) / d log(kappa)
    double diag_r2 = 0.0;
    double offdiag_rate = 0.0;  // d log(offdiag) / d sqrt(kappa)
    double separation = 0.0;    // torus distance of the off-diagonal probe
};

// (a) diagonal of (1/tau^2) e^{alpha h/tau} / (e^{h/tau} - 1)^2 summed over
// torus modes, log-log slope over the kappa ladder (expected d/2 - 2 in the
// kappa << tau regime); (b) for alpha < 1, the kernel of
// (1/tau) e^{alpha h/tau} / (e^{h/tau} - 1) at x = (1/2, 0, ..), exponential
// rate fitted against sqrt(kappa).  Needs >= 3 kappas spanning a factor >= 4.
ScalingReport kernel_scaling_check(int d, const std::vector<double>& kappas, double tau,
                                   double alpha);

}  // namespace gibbslab
