#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "gibbslab/counterterm.hpp"
#include "gibbslab/linalg.hpp"

using namespace gibbslab;

namespace {

constexpr double kPi = std::numbers::pi;

double smooth_v(double x, double, double) { return 1.0 + 0.5 * std::cos(2.0 * kPi * x); }
double zero_v(double, double, double) { return 0.0; }

double bose(double lambda, double tau) { return 1.0 / (tau * std::expm1(lambda / tau)); }

std::vector<double> sub(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> out(a.size());
    for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

}  // namespace

TEST_CASE("make_potential samples and validates") {
    PotentialGrid g = make_potential(1, 9, 10.0, 40.0, smooth_v);
    CHECK(g.size() == 9);
    CHECK(g.values[0] == doctest::Approx(1.5).epsilon(1e-15));
    CHECK(g.values[3] == doctest::Approx(1.0 + 0.5 * std::cos(2.0 * kPi / 3.0)).epsilon(1e-14));

    PotentialGrid g2 = make_potential(2, 5, 10.0, 40.0,
                                      [](double x, double y, double) { return 1.0 + x + 10.0 * y; });
    CHECK(g2.size() == 25);
    // row-major: first axis slowest
    CHECK(g2.values[5] == doctest::Approx(1.2).epsilon(1e-14));
    CHECK(g2.values[1] == doctest::Approx(3.0).epsilon(1e-14));

    CHECK_THROWS_AS(make_potential(1, 8, 10.0, 40.0, smooth_v), ParameterError);
    CHECK_THROWS_AS(make_potential(4, 9, 10.0, 40.0, smooth_v), ParameterError);
    CHECK_THROWS_AS(make_potential(1, 9, 0.0, 40.0, smooth_v), ParameterError);
    CHECK_THROWS_AS(make_potential(1, 9, 10.0, -1.0, smooth_v), ParameterError);
    CHECK_THROWS_AS(make_potential(1, 9, 10.0, 40.0,
                                   [](double, double, double) { return -0.1; }),
                    ParameterError);
}

TEST_CASE("weighted norm floors the weight at v_min") {
    PotentialGrid g = make_potential(1, 5, 10.0, 40.0, zero_v, 1e-3);
    std::vector<double> f(5, 0.0);
    f[2] = 2e-3;
    CHECK(weighted_norm(g, f) == doctest::Approx(2.0).epsilon(1e-14));

    PotentialGrid h = make_potential(1, 5, 10.0, 40.0,
                                     [](double, double, double) { return 4.0; });
    CHECK(weighted_norm(h, f) == doctest::Approx(5e-4).epsilon(1e-14));
    CHECK_THROWS_AS(weighted_norm(h, std::vector<double>(4, 0.0)), ParameterError);
}

TEST_CASE("density constant paths: reference, spectral shift, single-mode terms") {
    PotentialGrid g = make_potential(1, 3, 2.5, 30.0, zero_v);
    double rb = reference_density(g);
    double lam1 = 4.0 * kPi * kPi + 2.5;
    CHECK(rb == doctest::Approx(bose(2.5, 30.0) + 2.0 * bose(lam1, 30.0)).epsilon(1e-14));

    // u == 0 through density_diag agrees exactly
    std::vector<double> rho0 = density_diag(g, std::vector<double>(g.size(), 0.0));
    for (double v : rho0) CHECK(v == rb);

    // u == c equals the kappa -> kappa + c reference
    PotentialGrid gs = g;
    gs.kappa = 2.5 + 0.7;
    std::vector<double> rhoc = density_diag(g, std::vector<double>(g.size(), 0.7));
    for (double v : rhoc) CHECK(v == doctest::Approx(reference_density(gs)).epsilon(1e-15));
}

TEST_CASE("reference density grows with tau for d = 2, 3") {
    for (int d : {2, 3}) {
        PotentialGrid g = make_potential(d, d == 2 ? 9 : 5, 1.0, 25.0, zero_v);
        PotentialGrid g2 = g;
        g2.tau = 50.0;
        CHECK(reference_density(g2) > reference_density(g));
    }
}

TEST_CASE("general density path matches the mode-basis oracle") {
    const int N = 9, h = 4;
    const double kappa = 20.0, tau = 60.0;
    PotentialGrid g = make_potential(1, N, kappa, tau, smooth_v);
    std::vector<double> u(g.size());
    for (int j = 0; j < N; ++j)
        u[static_cast<size_t>(j)] =
            0.4 * std::cos(2.0 * kPi * j / N) + 0.1 * std::cos(4.0 * kPi * j / N);
    std::vector<double> rho = density_diag(g, u);

    // Same operator assembled in the Fourier basis: multiplication by u is the
    // circulant u_hat((n - m) wrapped into the grid's mode window).
    auto uhat = [&](int p) {
        p = ((p % N) + N) % N;
        if (p > h) p -= N;
        if (p == 1 || p == -1) return 0.2;
        if (p == 2 || p == -2) return 0.05;
        return 0.0;
    };
    SymMatrix H(N);
    for (int a = 0; a < N; ++a)
        for (int b = 0; b < N; ++b) {
            int na = a - h, nb = b - h;
            double val = uhat(na - nb);
            if (a == b) val += 4.0 * kPi * kPi * na * na + kappa;
            H.at(a, b) = val;
        }
    EigDecomposition eig = jacobi_eigh(H);
    for (int j = 0; j < N; ++j) {
        double acc = 0.0;
        for (int k = 0; k < N; ++k) {
            std::complex<double> psi(0.0, 0.0);
            for (int a = 0; a < N; ++a) {
                double phase = 2.0 * kPi * (a - h) * j / N;
                psi += eig.q_at(a, k) * std::complex<double>(std::cos(phase), std::sin(phase));
            }
            acc += bose(eig.eigenvalues[static_cast<size_t>(k)], tau) * std::norm(psi);
        }
        CHECK(rho[static_cast<size_t>(j)] == doctest::Approx(acc).epsilon(1e-10));
    }
}

TEST_CASE("density diagonal moves against the potential bump") {
    PotentialGrid g = make_potential(1, 17, 30.0, 80.0, smooth_v);
    std::vector<double> u(g.size());
    for (int j = 0; j < g.N; ++j) u[static_cast<size_t>(j)] = 0.2 * std::cos(2.0 * kPi * j / g.N);
    std::vector<double> rho = density_diag(g, u);
    for (size_t i = 0; i < u.size(); ++i)
        for (size_t j = 0; j < u.size(); ++j) {
            if (std::abs(u[i] - u[j]) < 1e-12) continue;
            CHECK((u[i] - u[j]) * (rho[i] - rho[j]) < 0.0);
        }

    // nonnegative u keeps the density below the reference everywhere
    for (double& v : u) v = std::abs(v) + 0.05;
    rho = density_diag(g, u);
    double rb = reference_density(g);
    for (double v : rho) CHECK(v - rb <= 1e-9 * rb);
}

TEST_CASE("density path errors") {
    PotentialGrid g = make_potential(1, 9, 1.0, 40.0, smooth_v);
    std::vector<double> u(g.size(), -2.0);
    CHECK_THROWS_AS(density_diag(g, u), ParameterError);
    CHECK_THROWS_AS(density_diag(g, std::vector<double>(3, 0.0)), ParameterError);

    PotentialGrid big = make_potential(3, 15, 10.0, 40.0, smooth_v);
    std::vector<double> ub(big.size(), 0.0);
    ub[0] = 0.1;  // forces the dense path
    CHECK_THROWS_AS(density_diag(big, ub), ResourceError);
    CHECK_NOTHROW(density_diag(big, std::vector<double>(big.size(), 0.1)));
}

TEST_CASE("phi map degenerate cases and convolution identity") {
    Interaction w = gaussian_interaction(1, 2, 0.4, 1.5);
    PotentialGrid g = make_potential(1, 9, 25.0, 60.0, smooth_v);

    std::vector<double> u(g.size(), 0.0);
    std::vector<double> phi0 = phi_map(g, u, Interaction::zero(1));
    for (size_t i = 0; i < phi0.size(); ++i) CHECK(phi0[i] == g.values[i]);

    PotentialGrid gz = make_potential(1, 9, 25.0, 60.0, zero_v);
    std::vector<double> phi_z = phi_map(gz, u, w);
    for (double v : phi_z) CHECK(v == 0.0);

    // against a direct real-space circular convolution of the density gap
    for (int j = 0; j < g.N; ++j) u[static_cast<size_t>(j)] = 0.1 * std::cos(2.0 * kPi * j / g.N);
    std::vector<double> rho = density_diag(g, u);
    double rb = reference_density(g);
    std::vector<double> wx(static_cast<size_t>(g.N));
    for (int j = 0; j < g.N; ++j) {
        double acc = 0.0;
        for (int n = -w.Kw; n <= w.Kw; ++n)
            acc += w.at(Mode{n, 0, 0}) * std::cos(2.0 * kPi * n * j / g.N);
        wx[static_cast<size_t>(j)] = acc;
    }
    std::vector<double> phi = phi_map(g, u, w);
    for (int j = 0; j < g.N; ++j) {
        double conv = 0.0;
        for (int k = 0; k < g.N; ++k)
            conv += wx[static_cast<size_t>((j - k + g.N) % g.N)] * (rho[static_cast<size_t>(k)] - rb);
        conv /= g.N;
        CHECK(phi[static_cast<size_t>(j)] ==
              doctest::Approx(g.values[static_cast<size_t>(j)] + conv).epsilon(1e-12));
    }
}

TEST_CASE("phi map rejects mismatched or uneven interactions") {
    PotentialGrid g = make_potential(1, 9, 25.0, 60.0, smooth_v);
    std::vector<double> u(g.size(), 0.0);
    CHECK_THROWS_AS(phi_map(g, u, gaussian_interaction(2, 2, 0.4, 1.5)), ParameterError);

    PotentialGrid tiny = make_potential(1, 5, 25.0, 60.0, smooth_v);
    CHECK_THROWS_AS(phi_map(tiny, std::vector<double>(5, 0.0), gaussian_interaction(1, 3, 0.4, 1.5)),
                    ParameterError);

    Interaction odd = gaussian_interaction(1, 1, 0.4, 1.5);
    odd.coeffs[0] += 0.1;  // breaks coeff(n) = coeff(-n)
    CHECK_THROWS_AS(phi_map(g, u, odd), ParameterError);
}

TEST_CASE("phi map contracts near V and tightens with kappa") {
    Interaction w = gaussian_interaction(1, 2, 0.5, 1.5);
    double prev = 1.0;
    for (double kappa : {50.0, 200.0}) {
        PotentialGrid g = make_potential(1, 17, kappa, 80.0, smooth_v);
        std::vector<double> u1 = g.values, u2 = g.values;
        for (size_t j = 0; j < u1.size(); ++j) {
            u1[j] *= 1.05;
            u2[j] *= 0.95;
        }
        double num = weighted_norm(g, sub(phi_map(g, u1, w), phi_map(g, u2, w)));
        double den = weighted_norm(g, sub(u1, u2));
        double quotient = num / den;
        CHECK(quotient < 1.0);
        CHECK(quotient < prev);
        prev = quotient;
    }
}

TEST_CASE("fixed point: zero potential is exact in one step") {
    PotentialGrid g = make_potential(1, 33, 50.0, 100.0, zero_v);
    FixedPointReport rep = solve_fixed_point(g, gaussian_interaction(1, 2, 0.5, 1.5), 0.5, 30, 1e-10);
    CHECK(rep.converged);
    CHECK(rep.iterations == 1);
    CHECK(rep.residuals.size() == 1);
    CHECK(rep.residuals[0] <= 1e-12);
    for (double v : rep.v) CHECK(v == 0.0);
}

TEST_CASE("fixed point: smooth potential converges fast at large kappa") {
    Interaction w = gaussian_interaction(1, 2, 0.5, 1.5);
    PotentialGrid g = make_potential(1, 33, 100.0, 100.0, smooth_v);
    FixedPointReport rep = solve_fixed_point(g, w, 0.5, 30, 1e-10);
    CHECK(rep.converged);
    CHECK(rep.iterations <= 30);
    CHECK(rep.residuals.back() <= 1e-10);
    CHECK_FALSE(rep.ball_escape);
    for (double q : rep.ratios) CHECK(q < 1.0);

    // converged iterate still solves the equation on the doubled grid
    PotentialGrid fine = refine_grid(g);
    std::vector<double> vf = refine_field(g, rep.v);
    std::vector<double> res = sub(phi_map(fine, vf, w), vf);
    CHECK(weighted_norm(fine, res) <= 10.0 * 1e-10);
}

TEST_CASE("fixed point: contraction ratio falls along the kappa doubling ladder") {
    Interaction w = gaussian_interaction(1, 2, 0.5, 1.5);
    double prev = 1.0;
    for (double kappa : {25.0, 50.0, 100.0, 200.0}) {
        PotentialGrid g = make_potential(1, 33, kappa, 100.0, smooth_v);
        FixedPointReport rep = solve_fixed_point(g, w, 0.5, 30, 1e-11);
        REQUIRE(rep.converged);
        REQUIRE(rep.ratios.size() >= 1);
        CHECK(rep.ratios.front() < prev);
        prev = rep.ratios.front();
    }
}

TEST_CASE("fixed point: tau sweep is Cauchy") {
    Interaction w = gaussian_interaction(1, 2, 0.5, 1.5);
    PotentialGrid base = make_potential(1, 33, 50.0, 50.0, smooth_v);
    std::vector<std::vector<double>> iterates;
    for (double tau : {50.0, 100.0, 200.0, 400.0}) {
        PotentialGrid g = base;
        g.tau = tau;
        FixedPointReport rep = solve_fixed_point(g, w, 0.5, 40, 1e-12);
        REQUIRE(rep.converged);
        iterates.push_back(rep.v);
    }
    double prev = 1e300;
    for (size_t i = 0; i + 1 < iterates.size(); ++i) {
        double dist = weighted_norm(base, sub(iterates[i], iterates[i + 1]));
        CHECK(dist > 0.0);
        CHECK(dist < prev);
        prev = dist;
    }
}

TEST_CASE("fixed point: ball escape and argument errors") {
    PotentialGrid g = make_potential(1, 17, 0.05, 200.0, smooth_v);
    Interaction strong = gaussian_interaction(1, 2, 80.0, 1.5);
    FixedPointReport rep = solve_fixed_point(g, strong, 0.3, 50, 1e-11);
    CHECK_FALSE(rep.converged);
    CHECK(rep.ball_escape);
    CHECK(rep.diagnosis.find("ball") != std::string::npos);

    // below the contraction floor a converged run still carries the warning
    PotentialGrid low = make_potential(1, 17, 5.0, 80.0, smooth_v);
    FixedPointReport warned = solve_fixed_point(low, gaussian_interaction(1, 2, 0.1, 1.5), 0.5, 40, 1e-10);
    CHECK(warned.converged);
    CHECK(warned.diagnosis.find("contraction floor") != std::string::npos);

    Interaction w = gaussian_interaction(1, 2, 0.5, 1.5);
    CHECK_THROWS_AS(solve_fixed_point(g, w, 0.0, 30, 1e-10), ParameterError);
    CHECK_THROWS_AS(solve_fixed_point(g, w, 1.0, 30, 1e-10), ParameterError);
    CHECK_THROWS_AS(solve_fixed_point(g, w, 0.5, 0, 1e-10), ParameterError);
    CHECK_THROWS_AS(solve_fixed_point(g, w, 0.5, 30, 0.0), ParameterError);
}

TEST_CASE("refinement reproduces band-limited data") {
    PotentialGrid g = make_potential(1, 9, 10.0, 40.0, smooth_v);
    PotentialGrid fine = refine_grid(g);
    CHECK(fine.N == 19);
    for (int j = 0; j < fine.N; ++j)
        CHECK(fine.values[static_cast<size_t>(j)] ==
              doctest::Approx(smooth_v(double(j) / fine.N, 0, 0)).epsilon(1e-12));

    std::vector<double> f(g.size());
    for (int j = 0; j < g.N; ++j) f[static_cast<size_t>(j)] = std::cos(4.0 * kPi * j / g.N);
    std::vector<double> ff = refine_field(g, f);
    for (int j = 0; j < fine.N; ++j)
        CHECK(ff[static_cast<size_t>(j)] == doctest::Approx(std::cos(4.0 * kPi * j / fine.N)).epsilon(1e-12));

    // a grid spike interpolates through negative lobes and is rejected
    PotentialGrid spike = make_potential(1, 9, 10.0, 40.0,
                                         [](double x, double, double) { return x < 0.05 ? 1.0 : 0.0; });
    CHECK_THROWS_AS(refine_grid(spike), InvariantError);
}

TEST_CASE("kernel scaling: diagonal slopes sit in the lemma bands") {
    std::vector<double> ladder = {64.0, 128.0, 256.0, 512.0, 1024.0};
    for (double alpha : {0.0, 1.5}) {
        ScalingReport r2 = kernel_scaling_check(2, ladder, 1e5, alpha);
        CHECK(r2.diag_slope == doctest::Approx(-1.0).epsilon(0.15));
        CHECK(r2.diag_r2 >= 0.99);
        ScalingReport r3 = kernel_scaling_check(3, ladder, 1e5, alpha);
        CHECK(r3.diag_slope == doctest::Approx(-0.5).epsilon(0.3));
        CHECK(std::abs(r3.diag_slope + 0.5) <= 0.15);
        CHECK(r3.diag_r2 >= 0.99);
    }
}

TEST_CASE("kernel scaling: off-diagonal decay beats the quarter-distance bound") {
    std::vector<double> ladder = {16.0, 32.0, 64.0, 128.0};
    ScalingReport rep = kernel_scaling_check(2, ladder, 2e4, 0.0);
    REQUIRE(rep.offdiag_values.size() == ladder.size());
    for (size_t i = 0; i < rep.offdiag_values.size(); ++i) {
        CHECK(rep.offdiag_values[i] > 0.0);
        if (i > 0) CHECK(rep.offdiag_values[i] < rep.offdiag_values[i - 1]);
    }
    CHECK(rep.separation == doctest::Approx(0.5));
    CHECK(rep.offdiag_rate <= -rep.separation / 4.0);
    CHECK(rep.offdiag_rate >= -2.0);

    // the decay factor itself respects e^{-sqrt(kappa)/4} at the probe point
    for (size_t i = 0; i + 1 < ladder.size(); ++i) {
        double bound = std::exp(-(std::sqrt(ladder[i + 1]) - std::sqrt(ladder[i])) *
                                rep.separation / 4.0);
        CHECK(rep.offdiag_values[i + 1] / rep.offdiag_values[i] <= bound);
    }

    ScalingReport no_off = kernel_scaling_check(2, ladder, 2e4, 1.5);
    CHECK(no_off.offdiag_values.empty());
}

TEST_CASE("kernel scaling argument errors") {
    std::vector<double> ladder = {16.0, 32.0, 64.0, 128.0};
    CHECK_THROWS_AS(kernel_scaling_check(0, ladder, 2e4, 0.0), ParameterError);
    CHECK_THROWS_AS(kernel_scaling_check(2, ladder, 0.0, 0.0), ParameterError);
    CHECK_THROWS_AS(kernel_scaling_check(2, ladder, 2e4, 2.0), ParameterError);
    CHECK_THROWS_AS(kernel_scaling_check(2, ladder, 2e4, -0.1), ParameterError);
    CHECK_THROWS_AS(kernel_scaling_check(2, {16.0, 32.0}, 2e4, 0.0), ParameterError);
    CHECK_THROWS_AS(kernel_scaling_check(2, {16.0, 20.0, 24.0}, 2e4, 0.0), ParameterError);
    CHECK_THROWS_AS(kernel_scaling_check(2, {0.5, 16.0, 64.0}, 2e4, 0.0), ParameterError);
}
