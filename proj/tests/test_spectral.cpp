#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "gibbslab/spectral.hpp"

using namespace gibbslab;

namespace {
constexpr double kPi = std::numbers::pi;
}

TEST_CASE("build_basis layout and eigenvalues") {
    TorusBasis b = build_basis(1, 1, 1.0);
    CHECK(b.num_modes() == 3);
    CHECK(b.modes[0][0] == -1);
    CHECK(b.modes[1][0] == 0);
    CHECK(b.modes[2][0] == 1);
    CHECK(b.eigenvalues[1] == doctest::Approx(1.0));
    CHECK(b.eigenvalues[2] == doctest::Approx(4.0 * kPi * kPi + 1.0).epsilon(1e-14));

    TorusBasis b3 = build_basis(3, 2, 0.5);
    CHECK(b3.num_modes() == 125);
    for (int i = 0; i < b3.num_modes(); ++i) {
        const int j = b3.negate_index(i);
        REQUIRE(j >= 0);
        CHECK(b3.eigenvalues[j] == doctest::Approx(b3.eigenvalues[i]));
    }
    CHECK(b3.index_of(Mode{0, 0, 0}) == 62);
    CHECK(b3.index_of(Mode{3, 0, 0}) == -1);
}

TEST_CASE("build_basis rejects nonpositive kappa") {
    CHECK_THROWS_AS(build_basis(1, 1, 0.0), ParameterError);
    CHECK_THROWS_AS(build_basis(1, 1, -2.0), ParameterError);
    CHECK_THROWS_AS(build_basis(4, 1, 1.0), ParameterError);
}

TEST_CASE("green_quantum reference values") {
    TorusBasis b = build_basis(1, 0, 1.0);  // single mode, lambda = 1
    CHECK(green_quantum(b, 1.0, 0.0).values[0] ==
          doctest::Approx(1.0 / (std::numbers::e - 1.0)).epsilon(1e-12));
    CHECK(green_quantum(b, 1.0, -0.5).values[0] ==
          doctest::Approx(std::exp(0.5) / (std::numbers::e - 1.0)).epsilon(1e-12));
    // high-temperature limit: tau (e^{l/tau} - 1) -> l
    CHECK(std::abs(green_quantum(b, 1e6, 0.0).values[0] - 1.0) <= 1e-5);
}

TEST_CASE("green_quantum domain") {
    TorusBasis b = build_basis(1, 1, 1.0);
    CHECK_THROWS_AS(green_quantum(b, 1.0, -1.0), ParameterError);
    CHECK_THROWS_AS(green_quantum(b, 0.0, 0.0), ParameterError);
}

TEST_CASE("semigroup composition and domain") {
    TorusBasis b = build_basis(1, 2, 1.3);
    DiagonalOperator s1 = semigroup(b, 2.0, 0.3);
    DiagonalOperator s2 = semigroup(b, 2.0, 0.45);
    DiagonalOperator s12 = semigroup(b, 2.0, 0.75);
    for (int n = 0; n < b.num_modes(); ++n)
        CHECK(std::abs(s1.values[n] * s2.values[n] - s12.values[n]) <= 1e-12);
    CHECK_THROWS_AS(semigroup(b, 2.0, -0.1), ParameterError);
}

TEST_CASE("kernel grid size guard") {
    TorusBasis b = build_basis(1, 1, 1.0);
    CHECK_THROWS_AS(kernel(identity_operator(b), 5), ParameterError);
    CHECK_NOTHROW(kernel(identity_operator(b), 6));
}

TEST_CASE("kernel of identity is the discrete delta row") {
    TorusBasis b = build_basis(1, 1, 1.0);
    KernelGrid g = kernel(identity_operator(b), 6);
    CHECK(g.at(0, 0) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(g.at(2, 2) == doctest::Approx(3.0).epsilon(1e-12));
    // Dirichlet kernel at offset 3 of 6: 1 + 2 cos(pi) = -1
    CHECK(g.at(3, 0) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("kernel diagonal of the classical Green operator") {
    TorusBasis b = build_basis(1, 1, 1.0);
    KernelGrid g = kernel(green_classical(b), 6);
    const double expected = 1.0 + 2.0 / (4.0 * kPi * kPi + 1.0);
    for (int i = 0; i < g.points(); ++i) CHECK(g.at(i, i) == doctest::Approx(expected).epsilon(1e-12));
    for (int i = 0; i < g.points(); ++i)
        for (int j = 0; j < g.points(); ++j)
            CHECK(std::abs(g.at(i, j) - g.at(j, i)) <= 1e-10 * std::abs(g.max_value()));
}

TEST_CASE("quantum Green kernels stay pointwise nonnegative") {
    TorusBasis b = build_basis(1, 8, 1.0);
    for (double t : {-0.9, 0.0, 0.9}) {
        KernelGrid g = kernel(green_quantum(b, 10.0, t), 40);
        CHECK(g.min_value() >= -1e-9 * std::abs(g.max_value()));
    }
    TorusBasis b2 = build_basis(2, 3, 1.0);
    KernelGrid g2 = kernel(green_quantum(b2, 5.0, 0.0), 14);
    CHECK(g2.min_value() >= -1e-9 * std::abs(g2.max_value()));
}

TEST_CASE("kernel-operator consistency for hs_norm") {
    TorusBasis b = build_basis(1, 2, 0.7);
    DiagonalOperator op = green_quantum(b, 3.0, 0.25);
    const int N = 12;
    KernelGrid g = kernel(op, N);
    double acc = 0.0;
    for (double v : g.values) acc += v * v;
    acc /= static_cast<double>(N) * N;  // (|Lambda|/N^d)^2 sum with |Lambda| = 1, d = 1
    const double hs2 = hs_norm(op) * hs_norm(op);
    CHECK(std::abs(acc - hs2) <= 1e-8 * std::max(hs2, 1e-30));

    double tr_grid = 0.0;
    for (int i = 0; i < g.points(); ++i) tr_grid += g.at(i, i);
    tr_grid /= N;
    CHECK(std::abs(tr_grid - trace(op)) <= 1e-10 * std::max(std::abs(trace(op)), 1e-30));
}

TEST_CASE("particle_number matches mode sum and grows with tau") {
    TorusBasis b = build_basis(1, 1, 1.0);
    const double lam1 = 4.0 * kPi * kPi + 1.0;
    const double tau = 2.0;
    const double expected =
        1.0 / (tau * std::expm1(1.0 / tau)) + 2.0 / (tau * std::expm1(lam1 / tau));
    CHECK(particle_number(b, tau) == doctest::Approx(expected).epsilon(1e-13));

    TorusBasis b3 = build_basis(3, 6, 1.0);
    CHECK(particle_number(b3, 8.0) < particle_number(b3, 32.0));
}

TEST_CASE("convergence_report columns decay in tau") {
    TorusBasis b = build_basis(1, 8, 1.0);
    auto rows = convergence_report(b, {10.0, 100.0, 1000.0});
    REQUIRE(rows.size() == 3);
    for (size_t i = 0; i + 1 < rows.size(); ++i) {
        CHECK(rows[i + 1].gap_s2 < rows[i].gap_s2);
        CHECK(rows[i + 1].time_uniform_gap < rows[i].time_uniform_gap);
        CHECK(rows[i + 1].semigroup_bound < rows[i].semigroup_bound);
    }
    // scaled trace approaches (1/tau) * tr G_tau ~ rho_tau / tau; with d = 1 it
    // must shrink since rho_tau saturates at tr h^{-1}.
    CHECK(rows[2].scaled_trace < rows[0].scaled_trace);
}
