#include "gibbslab/counterterm.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <sstream>

#include "gibbslab/linalg.hpp"

namespace gibbslab {

namespace {

constexpr double kTwoPi = 6.283185307179586476925287;
constexpr double kFourPiSq = 39.47841760435743447533796;

size_t grid_points(int d, int N) {
    size_t p = 1;
    for (int a = 0; a < d; ++a) p *= static_cast<size_t>(N);
    return p;
}

void decode(int d, int N, size_t idx, int* c) {
    c[0] = c[1] = c[2] = 0;
    for (int a = d - 1; a >= 0; --a) {
        c[a] = static_cast<int>(idx % N);
        idx /= static_cast<size_t>(N);
    }
}

// 1/(tau (e^{lambda/tau} - 1)); overflow upstairs collapses to 0.
double bose_weight(double lambda, double tau) {
    double e = std::expm1(lambda / tau);
    if (!std::isfinite(e)) return 0.0;
    return 1.0 / (tau * e);
}

// e^{alpha x} / (tau (e^x - 1))^power with x = lambda/tau, alpha < power.
// Rewritten through e^{(alpha-power)x} so large x never overflows.
double green_power(double lambda, double tau, double alpha, int power) {
    double x = lambda / tau;
    if (x > 1.0) {
        double log_val = (alpha - power) * x - power * std::log1p(-std::exp(-x));
        return std::exp(log_val) / std::pow(tau, power);
    }
    double e = std::expm1(x);
    return std::exp(alpha * x) / std::pow(tau * e, power);
}

// Mode sum of the density over the grid's own modes with kappa shifted; the
// fixed lexicographic order makes repeated calls bitwise identical.
double constant_density(const PotentialGrid& grid, double shift) {
    int h = (grid.N - 1) / 2;
    int b2 = grid.d > 1 ? h : 0;
    int b3 = grid.d > 2 ? h : 0;
    double acc = 0.0;
    for (int n1 = -h; n1 <= h; ++n1)
        for (int n2 = -b2; n2 <= b2; ++n2)
            for (int n3 = -b3; n3 <= b3; ++n3) {
                double lambda = kFourPiSq * (double(n1) * n1 + double(n2) * n2 + double(n3) * n3) +
                                grid.kappa + shift;
                acc += bose_weight(lambda, grid.tau);
            }
    return acc;
}

// Circulant row of the 1D spectral Laplacian: ell[p] reproduces the exact
// eigenvalues 4 pi^2 n^2 on the grid's modes.
std::vector<double> laplacian_row(int N) {
    int h = (N - 1) / 2;
    std::vector<double> ell(static_cast<size_t>(N), 0.0);
    for (int p = 0; p < N; ++p) {
        double acc = 0.0;
        for (int n = 1; n <= h; ++n)
            acc += double(n) * n * std::cos(kTwoPi * n * p / N);
        ell[static_cast<size_t>(p)] = 2.0 * kFourPiSq * acc / N;
    }
    return ell;
}

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
};

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    size_t n = x.size();
    double sx = 0, sy = 0;
    for (size_t i = 0; i < n; ++i) {
        sx += x[i];
        sy += y[i];
    }
    double mx = sx / double(n), my = sy / double(n);
    double sxx = 0, sxy = 0, syy = 0;
    for (size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    LineFit fit;
    if (sxx <= 0.0) throw ParameterError("fit_line: abscissa has no spread");
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
    return fit;
}

void require_field(const PotentialGrid& grid, const std::vector<double>& f, const char* what) {
    if (f.size() != grid.size())
        throw ParameterError(std::string(what) + ": field size does not match the grid");
    for (double v : f)
        if (!std::isfinite(v)) throw ParameterError(std::string(what) + ": non-finite field value");
}

}  // namespace

PotentialGrid make_potential(int d, int N, double kappa, double tau,
                             const std::function<double(double, double, double)>& V,
                             double v_min) {
    PotentialGrid grid;
    grid.d = d;
    grid.N = N;
    grid.kappa = kappa;
    grid.tau = tau;
    grid.v_min = v_min;
    if (d < 1 || d > 3) throw ParameterError("make_potential: d must be 1, 2, or 3");
    if (N < 3 || N % 2 == 0) throw ParameterError("make_potential: N must be odd and >= 3");
    grid.values.resize(grid_points(d, N));
    int c[3];
    for (size_t i = 0; i < grid.values.size(); ++i) {
        decode(d, N, i, c);
        grid.values[i] = V(double(c[0]) / N, double(c[1]) / N, double(c[2]) / N);
    }
    validate_grid(grid);
    return grid;
}

void validate_grid(const PotentialGrid& grid) {
    if (grid.d < 1 || grid.d > 3) throw ParameterError("PotentialGrid: d must be 1, 2, or 3");
    if (grid.N < 3 || grid.N % 2 == 0)
        throw ParameterError("PotentialGrid: N must be odd and >= 3");
    if (!(grid.kappa > 0.0) || !std::isfinite(grid.kappa))
        throw ParameterError("PotentialGrid: kappa must be positive");
    if (!(grid.tau > 0.0) || !std::isfinite(grid.tau))
        throw ParameterError("PotentialGrid: tau must be positive");
    if (!(grid.v_min > 0.0)) throw ParameterError("PotentialGrid: v_min must be positive");
    if (grid.values.size() != grid_points(grid.d, grid.N))
        throw ParameterError("PotentialGrid: values size does not match N^d");
    for (double v : grid.values) {
        if (!std::isfinite(v) || v < 0.0)
            throw ParameterError("PotentialGrid: V must be finite and nonnegative");
    }
}

double weighted_norm(const PotentialGrid& grid, const std::vector<double>& f) {
    require_field(grid, f, "weighted_norm");
    double worst = 0.0;
    for (size_t i = 0; i < f.size(); ++i) {
        double weight = std::max(grid.values[i], grid.v_min);
        worst = std::max(worst, std::abs(f[i]) / weight);
    }
    return worst;
}

std::vector<double> refine_field(const PotentialGrid& grid, const std::vector<double>& f) {
    require_field(grid, f, "refine_field");
    int N = grid.N, d = grid.d, h = (N - 1) / 2;
    int M = 2 * N + 1;
    // Forward coefficients on the coarse modes.
    int b2 = d > 1 ? h : 0, b3 = d > 2 ? h : 0;
    std::vector<std::complex<double>> coeff;
    std::vector<Mode> modes;
    int c[3];
    for (int n1 = -h; n1 <= h; ++n1)
        for (int n2 = -b2; n2 <= b2; ++n2)
            for (int n3 = -b3; n3 <= b3; ++n3) {
                std::complex<double> acc(0.0, 0.0);
                for (size_t j = 0; j < f.size(); ++j) {
                    decode(d, N, j, c);
                    double phase = -kTwoPi * (double(n1) * c[0] + double(n2) * c[1] + double(n3) * c[2]) / N;
                    acc += f[j] * std::complex<double>(std::cos(phase), std::sin(phase));
                }
                coeff.push_back(acc / double(f.size()));
                modes.push_back(Mode{n1, n2, n3});
            }
    std::vector<double> out(grid_points(d, M), 0.0);
    for (size_t j = 0; j < out.size(); ++j) {
        decode(d, M, j, c);
        double acc = 0.0;
        for (size_t m = 0; m < modes.size(); ++m) {
            double phase = kTwoPi * (double(modes[m][0]) * c[0] + double(modes[m][1]) * c[1] +
                                     double(modes[m][2]) * c[2]) / M;
            acc += coeff[m].real() * std::cos(phase) - coeff[m].imag() * std::sin(phase);
        }
        out[j] = acc;
    }
    return out;
}

PotentialGrid refine_grid(const PotentialGrid& grid) {
    validate_grid(grid);
    PotentialGrid fine = grid;
    fine.N = 2 * grid.N + 1;
    fine.values = refine_field(grid, grid.values);
    for (double& v : fine.values) {
        if (v < 0.0) {
            if (v < -1e-10)
                throw InvariantError("refine_grid: interpolated potential went negative; "
                                     "V is not resolved on the coarse grid");
            v = 0.0;
        }
    }
    return fine;
}

std::vector<double> density_diag(const PotentialGrid& grid, const std::vector<double>& u) {
    validate_grid(grid);
    require_field(grid, u, "density_diag");
    for (size_t i = 0; i < u.size(); ++i)
        if (!(grid.kappa + u[i] > 0.0))
            throw ParameterError("density_diag: kappa + u must stay positive on the grid");

    bool constant = std::all_of(u.begin(), u.end(), [&](double v) { return v == u[0]; });
    if (constant) {
        double rho = constant_density(grid, u[0]);
        return std::vector<double>(grid.size(), rho);
    }

    size_t P = grid.size();
    if (P > 2048) throw ResourceError("density_diag: grid too large for the dense solver");
    int dim = static_cast<int>(P);
    SymMatrix H(dim);
    std::vector<double> ell = laplacian_row(grid.N);
    int c[3];
    size_t stride[3] = {0, 0, 0};
    {
        size_t s = 1;
        for (int a = grid.d - 1; a >= 0; --a) {
            stride[a] = s;
            s *= static_cast<size_t>(grid.N);
        }
    }
    for (size_t i = 0; i < P; ++i) {
        decode(grid.d, grid.N, i, c);
        for (int a = 0; a < grid.d; ++a) {
            size_t base = i - static_cast<size_t>(c[a]) * stride[a];
            for (int k = 0; k < grid.N; ++k) {
                size_t j = base + static_cast<size_t>(k) * stride[a];
                H.at(static_cast<int>(i), static_cast<int>(j)) += ell[static_cast<size_t>((c[a] - k + grid.N) % grid.N)];
            }
        }
        H.at(static_cast<int>(i), static_cast<int>(i)) += grid.kappa + u[i];
    }

    EigDecomposition eig = jacobi_eigh(H);
    if (eig.eigenvalues.front() <= 0.0) {
        std::ostringstream msg;
        msg << "density_diag: h_u spectrum must be positive, found " << eig.eigenvalues.front();
        throw ParameterError(msg.str());
    }
    std::vector<double> fv(P);
    for (size_t k = 0; k < P; ++k) fv[k] = bose_weight(eig.eigenvalues[k], grid.tau);
    std::vector<double> rho(P, 0.0);
    double scale = double(P);  // kernel diagonal vs matrix diagonal on the unit torus
    for (size_t j = 0; j < P; ++j) {
        double acc = 0.0;
        for (size_t k = 0; k < P; ++k) {
            double q = eig.q_at(static_cast<int>(j), static_cast<int>(k));
            acc += fv[k] * q * q;
        }
        rho[j] = scale * acc;
    }
    return rho;
}

double reference_density(const PotentialGrid& grid) {
    validate_grid(grid);
    return constant_density(grid, 0.0);
}

std::vector<double> phi_map(const PotentialGrid& grid, const std::vector<double>& u,
                            const Interaction& w) {
    validate_grid(grid);
    if (w.d != grid.d) throw ParameterError("phi_map: interaction dimension mismatch");
    if (grid.N < 2 * w.Kw + 1)
        throw ParameterError("phi_map: grid too coarse for the interaction band");
    int bw1 = w.Kw, bw2 = grid.d > 1 ? w.Kw : 0, bw3 = grid.d > 2 ? w.Kw : 0;
    for (int n1 = -bw1; n1 <= bw1; ++n1)
        for (int n2 = -bw2; n2 <= bw2; ++n2)
            for (int n3 = -bw3; n3 <= bw3; ++n3) {
                double fwd = w.at(Mode{n1, n2, n3});
                double rev = w.at(Mode{-n1, -n2, -n3});
                if (std::abs(fwd - rev) > 1e-12 * std::max(1.0, std::abs(fwd)))
                    throw ParameterError("phi_map: interaction coefficients must be even");
            }

    std::vector<double> rho = density_diag(grid, u);
    double rho_bar = reference_density(grid);
    std::vector<double> g(rho.size());
    for (size_t i = 0; i < g.size(); ++i) g[i] = rho[i] - rho_bar;

    std::vector<double> out = grid.values;
    int c[3];
    for (int n1 = -bw1; n1 <= bw1; ++n1)
        for (int n2 = -bw2; n2 <= bw2; ++n2)
            for (int n3 = -bw3; n3 <= bw3; ++n3) {
                double wn = w.at(Mode{n1, n2, n3});
                if (wn == 0.0) continue;
                std::complex<double> ghat(0.0, 0.0);
                for (size_t j = 0; j < g.size(); ++j) {
                    decode(grid.d, grid.N, j, c);
                    double phase = -kTwoPi * (double(n1) * c[0] + double(n2) * c[1] + double(n3) * c[2]) / grid.N;
                    ghat += g[j] * std::complex<double>(std::cos(phase), std::sin(phase));
                }
                ghat /= double(g.size());
                for (size_t j = 0; j < out.size(); ++j) {
                    decode(grid.d, grid.N, j, c);
                    double phase = kTwoPi * (double(n1) * c[0] + double(n2) * c[1] + double(n3) * c[2]) / grid.N;
                    out[j] += wn * (ghat.real() * std::cos(phase) - ghat.imag() * std::sin(phase));
                }
            }
    return out;
}

FixedPointReport solve_fixed_point(const PotentialGrid& grid, const Interaction& w,
                                   double r, int max_iter, double tol) {
    validate_grid(grid);
    if (!(r > 0.0) || !(r < 1.0)) throw ParameterError("solve_fixed_point: r must lie in (0,1)");
    if (max_iter < 1) throw ParameterError("solve_fixed_point: max_iter must be >= 1");
    if (!(tol > 0.0)) throw ParameterError("solve_fixed_point: tol must be positive");

    FixedPointReport report;
    if (grid.kappa < kContractionKappaFloor)
        report.diagnosis = "kappa below the contraction floor; iteration may not contract";

    std::vector<double> u = grid.values;
    std::vector<double> scratch(u.size());
    for (int k = 1; k <= max_iter; ++k) {
        std::vector<double> next = phi_map(grid, u, w);
        for (size_t i = 0; i < u.size(); ++i) scratch[i] = next[i] - u[i];
        double res = weighted_norm(grid, scratch);
        if (!report.residuals.empty() && report.residuals.back() > 0.0)
            report.ratios.push_back(res / report.residuals.back());
        report.residuals.push_back(res);
        report.iterations = k;
        u = std::move(next);
        if (res <= tol) {
            report.converged = true;
            break;
        }
        for (size_t i = 0; i < u.size(); ++i) scratch[i] = u[i] - grid.values[i];
        double dist = weighted_norm(grid, scratch);
        if (dist > r) {
            report.ball_escape = true;
            std::ostringstream msg;
            msg << "iterate left the radius-" << r << " ball around V after " << k
                << " steps (distance " << dist << "); the map does not contract here";
            report.diagnosis = msg.str();
            break;
        }
    }
    if (!report.converged && !report.ball_escape) {
        std::ostringstream msg;
        msg << "max_iter reached with residual " << report.residuals.back();
        if (!report.diagnosis.empty()) msg << "; " << report.diagnosis;
        report.diagnosis = msg.str();
    }
    report.v = std::move(u);
    return report;
}

ScalingReport kernel_scaling_check(int d, const std::vector<double>& kappas, double tau,
                                   double alpha) {
    if (d < 1 || d > 3) throw ParameterError("kernel_scaling_check: d must be 1, 2, or 3");
    if (!(tau > 0.0) || !std::isfinite(tau))
        throw ParameterError("kernel_scaling_check: tau must be positive");
    if (alpha < 0.0 || alpha >= 2.0)
        throw ParameterError("kernel_scaling_check: alpha must lie in [0,2)");
    if (kappas.size() < 3)
        throw ParameterError("kernel_scaling_check: need at least 3 kappa values for the fit");
    double kmin = kappas.front(), kmax = kappas.front();
    for (double k : kappas) {
        if (!(k >= 1.0)) throw ParameterError("kernel_scaling_check: kappa must be >= 1");
        kmin = std::min(kmin, k);
        kmax = std::max(kmax, k);
    }
    if (kmax / kmin < 4.0)
        throw ParameterError("kernel_scaling_check: kappa range too narrow for the scaling fit");

    bool want_offdiag = alpha < 1.0;
    // Mode cutoff where the slowest exponential factor has decayed to ~e^{-42}.
    double decay = want_offdiag ? std::min(2.0 - alpha, 1.0 - alpha) : 2.0 - alpha;
    double lambda_cut = 42.0 * tau / decay;
    int Kc = static_cast<int>(std::ceil(std::sqrt(lambda_cut) / kTwoPi)) + 1;
    double mode_count = std::pow(2.0 * Kc + 1.0, d);
    if (mode_count > 8e8)
        throw ResourceError("kernel_scaling_check: tau/alpha combination needs too many modes");

    // Radial histogram over |n|^2, split by the parity of n_1 so the kernel
    // at the antipodal point x = (1/2, 0, ..) is a signed radial sum.
    size_t rmax = static_cast<size_t>(d) * static_cast<size_t>(Kc) * static_cast<size_t>(Kc);
    std::vector<int64_t> cnt(rmax + 1, 0), cnt_odd(rmax + 1, 0);
    int b2 = d > 1 ? Kc : 0, b3 = d > 2 ? Kc : 0;
    for (int n1 = -Kc; n1 <= Kc; ++n1)
        for (int n2 = -b2; n2 <= b2; ++n2)
            for (int n3 = -b3; n3 <= b3; ++n3) {
                size_t r = static_cast<size_t>(int64_t(n1) * n1 + int64_t(n2) * n2 + int64_t(n3) * n3);
                ++cnt[r];
                if (n1 & 1) ++cnt_odd[r];
            }

    ScalingReport report;
    report.kappas = kappas;
    report.separation = 0.5;
    for (double kappa : kappas) {
        double diag = 0.0, off = 0.0;
        for (size_t r = 0; r <= rmax; ++r) {
            if (cnt[r] == 0) continue;
            double lambda = kFourPiSq * double(r) + kappa;
            diag += double(cnt[r]) * green_power(lambda, tau, alpha, 2);
            if (want_offdiag)
                off += double(cnt[r] - 2 * cnt_odd[r]) * green_power(lambda, tau, alpha, 1);
        }
        report.diag_values.push_back(diag);
        if (want_offdiag) report.offdiag_values.push_back(off);
    }

    std::vector<double> lx, ly;
    for (size_t i = 0; i < kappas.size(); ++i) {
        lx.push_back(std::log(kappas[i]));
        ly.push_back(std::log(report.diag_values[i]));
    }
    LineFit diag_fit = fit_line(lx, ly);
    report.diag_slope = diag_fit.slope;
    report.diag_r2 = diag_fit.r2;

    if (want_offdiag) {
        bool positive = std::all_of(report.offdiag_values.begin(), report.offdiag_values.end(),
                                    [](double v) { return v > 0.0; });
        if (!positive) {
            report.offdiag_values.clear();
        } else {
            std::vector<double> sx, sy;
            for (size_t i = 0; i < kappas.size(); ++i) {
                sx.push_back(std::sqrt(kappas[i]));
                sy.push_back(std::log(report.offdiag_values[i]));
            }
            report.offdiag_rate = fit_line(sx, sy).slope;
        }
    }
    return report;
}

}  // namespace gibbslab
