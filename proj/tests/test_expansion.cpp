#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "gibbslab/expansion.hpp"
#include "gibbslab/fockoracle.hpp"

using namespace gibbslab;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

ExpansionConfig make_cfg(int d, int K, double kappa, double tau, int Kw, double amp) {
    ExpansionConfig cfg;
    cfg.basis = build_basis(d, K, kappa);
    cfg.tau = tau;
    cfg.w = gaussian_interaction(d, Kw, amp, 1.0);
    return cfg;
}

double g_val(const TorusBasis& b, double tau, int k) {
    return 1.0 / (tau * std::expm1(b.eigenvalues[k] / tau));
}

// sum over the truncated modes of w(n) q(a) q(a + n) with q the given
// per-mode weight; the direct form of the one-interaction pairing sum
double mode_sum(const ExpansionConfig& cfg, const std::vector<double>& qa,
                const std::vector<double>& qb) {
    const TorusBasis& b = cfg.basis;
    double acc = 0.0;
    for (int n0 = -cfg.w.Kw; n0 <= cfg.w.Kw; ++n0) {
        const double wn = cfg.w.at(Mode{n0, 0, 0});
        for (int a = 0; a < b.num_modes(); ++a) {
            const int j = b.index_of(Mode{b.modes[a][0] + n0, 0, 0});
            if (j < 0) continue;
            acc += wn * qa[a] * qb[j];
        }
    }
    return acc;
}

}  // namespace

TEST_CASE("classical one-interaction values against the mode sum") {
    ExpansionConfig cfg = make_cfg(1, 2, 3.0, kInf, 2, 0.7);
    const TorusBasis& b = cfg.basis;
    std::vector<double> inv(b.num_modes());
    for (int k = 0; k < b.num_modes(); ++k) inv[k] = 1.0 / b.eigenvalues[k];
    const double f1 = mode_sum(cfg, inv, inv);

    VertexSet vs = build_vertex_set(1, 0, ordering_for(PairingClass::P));
    auto ps = enumerate_pairings(vs, PairingClass::P);
    REQUIRE(ps.size() == 1);
    CHECK(pairing_value(cfg, 1, ps[0], Observable::unit(), {}) ==
          doctest::Approx(f1).epsilon(1e-12));
    CHECK(f_value(cfg, 1, Observable::unit(), {}) == doctest::Approx(f1).epsilon(1e-12));
    CHECK(coefficient(cfg, 1, Observable::unit()) == doctest::Approx(-0.5 * f1).epsilon(1e-12));
}

TEST_CASE("quantum one-interaction coefficient in closed form, eta independent") {
    ExpansionConfig cfg = make_cfg(1, 1, 8.0, 2.0, 1, 0.4);
    const TorusBasis& b = cfg.basis;
    std::vector<double> g(b.num_modes()), gp(b.num_modes());
    for (int k = 0; k < b.num_modes(); ++k) {
        g[k] = g_val(b, cfg.tau, k);
        gp[k] = g[k] + 1.0 / cfg.tau;
    }
    const double a1 = -0.5 * mode_sum(cfg, g, gp);
    CHECK(coefficient(cfg, 1, Observable::unit()) == doctest::Approx(a1).epsilon(1e-12));
    cfg.eta = 0.1;
    CHECK(coefficient(cfg, 1, Observable::unit()) == doctest::Approx(a1).epsilon(1e-12));
}

TEST_CASE("no interaction only keeps the order-zero term") {
    ExpansionConfig cfg = make_cfg(1, 1, 2.0, 4.0, 1, 0.5);
    cfg.w = Interaction::zero(1);
    CHECK(coefficient(cfg, 0, Observable::unit()) == doctest::Approx(1.0));
    CHECK(coefficient(cfg, 1, Observable::unit()) == 0.0);
    CHECK(coefficient(cfg, 2, Observable::unit()) == 0.0);
}

TEST_CASE("order-zero observables reproduce the free two-point values") {
    ExpansionConfig cfg = make_cfg(1, 1, 6.0, 3.0, 1, 0.3);
    const TorusBasis& b = cfg.basis;
    for (int k = 0; k < b.num_modes(); ++k) {
        const Observable xi = Observable::rank_one(b.modes[k], b.modes[k]);
        CHECK(f_value(cfg, 0, xi, {}) == doctest::Approx(g_val(b, cfg.tau, k)).epsilon(1e-13));
    }
    // off-diagonal dyads vanish by translation invariance
    const Observable off = Observable::rank_one(b.modes[0], b.modes[2]);
    CHECK(std::abs(f_value(cfg, 0, off, {})) < 1e-15);

    double rho_bar = 0.0;
    for (int k = 0; k < b.num_modes(); ++k) rho_bar += g_val(b, cfg.tau, k);
    CHECK(f_value(cfg, 0, Observable::identity_kernel(1), {}) ==
          doctest::Approx(rho_bar).epsilon(1e-13));

    // two-particle dyad at order zero: both exchange pairings contribute
    const Observable pair2 =
        Observable::rank_one_pair(b.modes[1], b.modes[1], b.modes[1], b.modes[1]);
    const double g0 = g_val(b, cfg.tau, 1);
    CHECK(f_value(cfg, 0, pair2, {}) == doctest::Approx(2.0 * g0 * g0).epsilon(1e-12));

    ExpansionConfig ccl = cfg;
    ccl.tau = kInf;
    for (int k = 0; k < b.num_modes(); ++k) {
        const Observable xi = Observable::rank_one(b.modes[k], b.modes[k]);
        CHECK(f_value(ccl, 0, xi, {}) ==
              doctest::Approx(1.0 / b.eigenvalues[k]).epsilon(1e-13));
    }
}

TEST_CASE("pairing sums match exact traces on the fock space") {
    ExpansionConfig cfg = make_cfg(1, 1, 8.0, 2.0, 1, 0.4);
    FockSpace fs = build_fock_space(cfg.basis, 8);
    FockOperator id = identity_fock(fs);

    SUBCASE("one and two interactions, scalar observable") {
        const double f1 = f_value(cfg, 1, Observable::unit(), {0.4});
        const double o1 = 2.0 * duhamel_time_product(fs, cfg.tau, 0.0, {0.4}, cfg.w, id);
        CHECK(f1 == doctest::Approx(o1).epsilon(1e-8));

        const double f2 = f_value(cfg, 2, Observable::unit(), {0.7, 0.3});
        const double o2 = 4.0 * duhamel_time_product(fs, cfg.tau, 0.0, {0.7, 0.3}, cfg.w, id);
        CHECK(f2 == doctest::Approx(o2).epsilon(1e-8));
    }

    SUBCASE("three interactions") {
        const double f3 = f_value(cfg, 3, Observable::unit(), {0.8, 0.5, 0.2});
        const double o3 =
            8.0 * duhamel_time_product(fs, cfg.tau, 0.0, {0.8, 0.5, 0.2}, cfg.w, id);
        CHECK(f3 == doctest::Approx(o3).epsilon(1e-8));
    }

    SUBCASE("rank-one and identity observables") {
        for (int k : {0, 1}) {
            const Observable xi = Observable::rank_one(cfg.basis.modes[k], cfg.basis.modes[k]);
            const double f = f_value(cfg, 1, xi, {0.6});
            const double o = 2.0 * duhamel_time_product(fs, cfg.tau, 0.0, {0.6}, cfg.w,
                                                        mode_projector(fs, k, k, cfg.tau));
            CHECK(f == doctest::Approx(o).epsilon(1e-8));
        }
        const Observable off = Observable::rank_one(cfg.basis.modes[0], cfg.basis.modes[2]);
        CHECK(std::abs(f_value(cfg, 1, off, {0.6})) < 1e-14);
        CHECK(std::abs(duhamel_time_product(fs, cfg.tau, 0.0, {0.6}, cfg.w,
                                            mode_projector(fs, 0, 2, cfg.tau))) < 1e-14);

        const double fn = f_value(cfg, 1, Observable::identity_kernel(1), {0.6});
        const double on = 2.0 * duhamel_time_product(fs, cfg.tau, 0.0, {0.6}, cfg.w,
                                                     number_operator(fs, cfg.tau));
        CHECK(fn == doctest::Approx(on).epsilon(1e-8));
    }

    SUBCASE("plain vertex ordering against the unrenormalized quartic") {
        ExpansionConfig plain = cfg;
        plain.pairing_class = PairingClass::N;
        Hamiltonians h = hamiltonians(fs, cfg.tau, cfg.w);
        const double f1 = f_value(plain, 1, Observable::unit(), {0.4});
        const double o1 = 2.0 * duhamel_time_product(fs, cfg.tau, 0.0, {0.4}, h.wplain, id);
        CHECK(f1 == doctest::Approx(o1).epsilon(1e-8));

        const double f2 = f_value(plain, 2, Observable::unit(), {0.7, 0.3});
        const double o2 =
            4.0 * duhamel_time_product(fs, cfg.tau, 0.0, {0.7, 0.3}, h.wplain, id);
        CHECK(f2 == doctest::Approx(o2).epsilon(1e-8));
    }
}

TEST_CASE("second coefficient against a thermal-state taylor fit") {
    ExpansionConfig cfg = make_cfg(1, 1, 8.0, 2.0, 1, 0.5);
    FockSpace fs = build_fock_space(cfg.basis, 8);
    FockOperator id = identity_fock(fs);
    auto A = [&](double z) {
        return full_state_expectation(build_thermal_state(fs, cfg.tau, 0.0, z, cfg.w), id);
    };
    // degree-5 polynomial through A at six couplings; the state only exists
    // for z >= 0, so the nodes are one-sided
    const int n = 6;
    std::vector<double> z{0.0, 0.05, 0.1, 0.15, 0.2, 0.25};
    std::vector<double> V(n * n), rhs(n);
    for (int i = 0; i < n; ++i) {
        rhs[i] = A(z[i]);
        double zp = 1.0;
        for (int j = 0; j < n; ++j) {
            V[static_cast<size_t>(i) * n + j] = zp;
            zp *= z[i];
        }
    }
    for (int c = 0; c < n; ++c) {  // partial-pivot elimination
        int piv = c;
        for (int r = c + 1; r < n; ++r)
            if (std::abs(V[static_cast<size_t>(r) * n + c]) >
                std::abs(V[static_cast<size_t>(piv) * n + c]))
                piv = r;
        for (int j = 0; j < n; ++j)
            std::swap(V[static_cast<size_t>(c) * n + j], V[static_cast<size_t>(piv) * n + j]);
        std::swap(rhs[c], rhs[piv]);
        for (int r = c + 1; r < n; ++r) {
            const double q = V[static_cast<size_t>(r) * n + c] / V[static_cast<size_t>(c) * n + c];
            for (int j = c; j < n; ++j)
                V[static_cast<size_t>(r) * n + j] -= q * V[static_cast<size_t>(c) * n + j];
            rhs[r] -= q * rhs[c];
        }
    }
    std::vector<double> coef(n);
    for (int r = n - 1; r >= 0; --r) {
        double acc = rhs[r];
        for (int j = r + 1; j < n; ++j) acc -= V[static_cast<size_t>(r) * n + j] * coef[j];
        coef[r] = acc / V[static_cast<size_t>(r) * n + r];
    }
    CHECK(coefficient(cfg, 1, Observable::unit()) == doctest::Approx(coef[1]).epsilon(1e-6));
    CHECK(coefficient(cfg, 2, Observable::unit()) == doctest::Approx(coef[2]).epsilon(1e-4));
}

TEST_CASE("grid doubling is exact and undersized grids are refused") {
    ExpansionConfig cfg = make_cfg(1, 1, 5.0, 2.0, 1, 0.6);
    CHECK(required_grid(cfg, 1, 0) == 4);
    CHECK(required_grid(cfg, 0, 1) == 3);
    CHECK(required_grid(cfg, 0, 0) == 1);

    cfg.grid_size = 4;
    const double base = f_value(cfg, 2, Observable::unit(), {0.6, 0.2});
    cfg.grid_size = 8;
    const double fine = f_value(cfg, 2, Observable::unit(), {0.6, 0.2});
    CHECK(std::abs(fine - base) <= 1e-11 * std::max(1.0, std::abs(fine)));

    cfg.grid_size = 3;
    try {
        f_value(cfg, 2, Observable::unit(), {0.6, 0.2});
        FAIL("undersized grid accepted");
    } catch (const ParameterError& e) {
        CHECK(std::string(e.what()).find("requires N >= 4") != std::string::npos);
    }

    ExpansionConfig c2 = make_cfg(2, 1, 5.0, 2.0, 1, 0.6);
    c2.grid_size = 4;
    const double b2 = f_value(c2, 1, Observable::unit(), {0.5});
    c2.grid_size = 8;
    const double f2 = f_value(c2, 1, Observable::unit(), {0.5});
    CHECK(std::abs(f2 - b2) <= 1e-11 * std::max(1.0, std::abs(f2)));
}

TEST_CASE("pairing values stay nonnegative for nonnegative observables") {
    ExpansionConfig cfg = make_cfg(1, 1, 4.0, 5.0, 1, 0.8);
    const Observable xi = Observable::rank_one(cfg.basis.modes[1], cfg.basis.modes[1]);
    for (int m : {1, 2}) {
        VertexSet vs = build_vertex_set(m, 1, ordering_for(PairingClass::P));
        auto ps = enumerate_pairings(vs, PairingClass::P);
        std::vector<double> times(m == 1 ? std::vector<double>{0.6}
                                         : std::vector<double>{0.6, 0.2});
        double scale = 1.0;
        std::vector<double> vals;
        for (const Pairing& pi : ps) {
            vals.push_back(pairing_value(cfg, m, pi, xi, times));
            scale = std::max(scale, std::abs(vals.back()));
        }
        for (double v : vals) CHECK(v >= -1e-9 * scale);
    }
    ExpansionConfig ccl = cfg;
    ccl.tau = kInf;
    VertexSet vs = build_vertex_set(2, 1, ordering_for(PairingClass::P));
    for (const Pairing& pi : enumerate_pairings(vs, PairingClass::P))
        CHECK(pairing_value(ccl, 2, pi, xi, {}) >= -1e-12);
}

TEST_CASE("closed-path values depend only on time differences") {
    ExpansionConfig cfg = make_cfg(1, 1, 6.0, 2.0, 1, 0.5);
    const double a = f_value(cfg, 2, Observable::unit(), {0.5, 0.25});
    const double b = f_value(cfg, 2, Observable::unit(), {0.75, 0.5});
    CHECK(a == doctest::Approx(b).epsilon(1e-14));
}

TEST_CASE("per-pairing quantum values approach the classical ones") {
    ExpansionConfig ccl = make_cfg(1, 1, 3.0, kInf, 1, 0.7);
    for (int m : {1, 2}) {
        VertexSet vs = build_vertex_set(m, 0, ordering_for(PairingClass::P));
        auto ps = enumerate_pairings(vs, PairingClass::P);
        std::vector<double> times(m == 1 ? std::vector<double>{0.5}
                                         : std::vector<double>{0.5, 0.25});
        for (const Pairing& pi : ps) {
            const double cl = pairing_value(ccl, m, pi, Observable::unit(), {});
            double prev = std::numeric_limits<double>::infinity();
            for (double tau : {10.0, 100.0, 1000.0}) {
                ExpansionConfig cfg = ccl;
                cfg.tau = tau;
                const double gap = std::abs(pairing_value(cfg, m, pi, Observable::unit(), times) - cl);
                CHECK(gap < prev);
                prev = gap;
            }
        }
    }
}

TEST_CASE("edge operators implement the two-point factors") {
    ExpansionConfig cfg = make_cfg(1, 1, 6.0, 2.0, 1, 0.5);
    const TorusBasis& b = cfg.basis;
    DiagonalOperator minus = edge_operator(cfg, -1, 0.6, 0.2);
    DiagonalOperator plus = edge_operator(cfg, +1, 0.6, 0.2);
    for (int k = 0; k < b.num_modes(); ++k) {
        const double g = g_val(b, cfg.tau, k);
        const double lam = b.eigenvalues[k];
        CHECK(minus.values[k] == doctest::Approx(std::exp(0.4 * lam / cfg.tau) * g).epsilon(1e-13));
        CHECK(plus.values[k] ==
              doctest::Approx(std::exp(-0.4 * lam / cfg.tau) * (g + 1.0 / cfg.tau)).epsilon(1e-13));
    }
    CHECK_THROWS_AS(edge_operator(cfg, +1, 0.2, 0.6), InvariantError);
    CHECK_THROWS_AS(edge_operator(cfg, 2, 0.6, 0.2), ParameterError);

    ExpansionConfig ccl = cfg;
    ccl.tau = kInf;
    DiagonalOperator cl = edge_operator(ccl, -1, 0.6, 0.2);
    CHECK(cl.values[1] == doctest::Approx(1.0 / b.eigenvalues[1]).epsilon(1e-14));

    VertexSet vs = build_vertex_set(1, 0, ordering_for(PairingClass::P));
    auto ps = enumerate_pairings(vs, PairingClass::P);
    CollapsedGraph g = collapse(vs, ps[0], CollapseVariant::standard);
    KernelGrid kg = edge_kernel(cfg, g, 0, {0.5});
    CHECK(kg.N >= 2 * (2 * cfg.basis.K + 1));
    CHECK(kg.max_value() > 0.0);
}

TEST_CASE("config validation rejects malformed inputs") {
    ExpansionConfig cfg = make_cfg(1, 1, 4.0, 2.0, 1, 0.5);
    validate_config(cfg);

    ExpansionConfig bad = cfg;
    bad.eta = 0.3;
    CHECK_THROWS_AS(validate_config(bad), ParameterError);
    bad = cfg;
    bad.tau = -1.0;
    CHECK_THROWS_AS(validate_config(bad), ParameterError);
    bad = cfg;
    bad.w = gaussian_interaction(2, 1, 0.5, 1.0);
    CHECK_THROWS_AS(validate_config(bad), ParameterError);

    // negative coefficients: rejected as positive-type, accepted pointwise
    Interaction mixed;
    mixed.d = 1;
    mixed.Kw = 1;
    mixed.coeffs = {-0.2, 1.0, -0.2};
    mixed.positive_type = false;
    bad = cfg;
    bad.w = mixed;
    CHECK_THROWS_AS(validate_config(bad), ParameterError);
    bad.regime = InteractionRegime::pointwise_1d;
    validate_config(bad);

    // w(x) dips below zero once the coefficients grow
    Interaction neg = mixed;
    neg.coeffs = {-0.6, 1.0, -0.6};
    bad.w = neg;
    CHECK_THROWS_AS(validate_config(bad), ParameterError);

    bad = cfg;
    bad.regime = InteractionRegime::pointwise_1d;
    bad.basis = build_basis(2, 1, 4.0);
    bad.w = gaussian_interaction(2, 1, 0.5, 1.0);
    CHECK_THROWS_AS(validate_config(bad), ParameterError);

    CHECK_THROWS_AS(f_value(cfg, 1, Observable::unit(), {1.2}), ParameterError);
    CHECK_THROWS_AS(f_value(cfg, 2, Observable::unit(), {0.3, 0.6}), ParameterError);
    CHECK_THROWS_AS(f_value(cfg, 1, Observable::unit(), {}), ParameterError);
    const Observable outside = Observable::rank_one(Mode{2, 0, 0}, Mode{2, 0, 0});
    CHECK_THROWS_AS(f_value(cfg, 1, outside, {0.5}), ParameterError);
}

TEST_CASE("thread count does not change the reduction") {
    ExpansionConfig cfg = make_cfg(1, 1, 6.0, 2.0, 1, 0.5);
    const double one = f_value(cfg, 2, Observable::unit(), {0.7, 0.3});
    cfg.threads = 2;
    const double two = f_value(cfg, 2, Observable::unit(), {0.7, 0.3});
    CHECK(one == two);
}

TEST_CASE("fitted envelope bounds the series and is tight somewhere") {
    ExpansionConfig cfg = make_cfg(1, 1, 2.0, kInf, 1, 1.2);
    CoefficientSeries s = coefficient_series(cfg, 4, Observable::unit());
    REQUIRE(s.size() == 4);
    double best = 0.0;
    for (int m = 0; m < s.size(); ++m) {
        const double cap = s.nu * std::pow(s.sigma, m) * std::tgamma(m + 1.0);
        CHECK(std::abs(s.values[m]) <= cap * (1.0 + 1e-12));
        if (cap > 0.0) best = std::max(best, std::abs(s.values[m]) / cap);
    }
    CHECK(best >= 1.0 - 1e-9);

    CoefficientSeries zero;
    zero.values = {0.0, 0.0, 0.0};
    fit_growth(zero);
    CHECK(zero.nu == 0.0);
    CHECK(zero.sigma == 0.0);
}

TEST_CASE("growth scale is stable when the order cap moves") {
    ExpansionConfig cfg = make_cfg(1, 1, 2.0, kInf, 0, 1.0);
    cfg.grid_size = 3;
    CoefficientSeries s5 = coefficient_series(cfg, 5, Observable::unit());
    CoefficientSeries s6 = coefficient_series(cfg, 6, Observable::unit());
    REQUIRE(s6.sigma > 0.0);
    CHECK(std::abs(s5.sigma - s6.sigma) <= 0.25 * s6.sigma);
}

TEST_CASE("correlation kernel matches exact diagonalization at weak coupling") {
    ExpansionConfig cfg = make_cfg(1, 1, 8.0, 2.0, 1, 0.02);
    FockSpace fs = build_fock_space(cfg.basis, 8);
    const int n = cfg.basis.num_modes();
    SeriesEvaluator partial = [](const CoefficientSeries& s) {
        double acc = 0.0;
        for (double v : s.values) acc += v;
        return acc;
    };

    CorrelationKernel k1 = correlation_kernel(cfg, 1, 3, partial);
    std::vector<double> e1 = exact_correlation(fs, cfg.tau, 0.0, 1.0, cfg.w, 1);
    double scale1 = 0.0;
    for (double v : e1) scale1 = std::max(scale1, std::abs(v));
    for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l)
            CHECK(std::abs(k1.at(k, l) - e1[static_cast<size_t>(k) * n + l]) <= 1e-6 * scale1);
    CHECK(k1.hermiticity_deviation <= 1e-10);

    CorrelationKernel k2 = correlation_kernel(cfg, 2, 3, partial);
    std::vector<double> e2 = exact_correlation(fs, cfg.tau, 0.0, 1.0, cfg.w, 2);
    double scale2 = 0.0;
    for (double v : e2) scale2 = std::max(scale2, std::abs(v));
    for (int k1i = 0; k1i < n; ++k1i)
        for (int k2i = 0; k2i < n; ++k2i)
            for (int l1 = 0; l1 < n; ++l1)
                for (int l2 = 0; l2 < n; ++l2) {
                    const double ex =
                        e2[((static_cast<size_t>(k1i) * n + k2i) * n + l1) * n + l2];
                    CHECK(std::abs(k2.at2(k1i, k2i, l1, l2) - ex) <= 1e-6 * scale2);
                }
}

TEST_CASE("classical correlation kernel agrees with per-entry series") {
    ExpansionConfig cfg = make_cfg(1, 1, 3.0, kInf, 1, 0.6);
    SeriesEvaluator partial = [](const CoefficientSeries& s) {
        double acc = 0.0;
        for (double v : s.values) acc += v;
        return acc;
    };
    CorrelationKernel ck = correlation_kernel(cfg, 1, 3, partial);
    const double den = partial(coefficient_series(cfg, 3, Observable::unit()));
    for (int k = 0; k < cfg.basis.num_modes(); ++k) {
        const Observable xi = Observable::rank_one(cfg.basis.modes[k], cfg.basis.modes[k]);
        const double num = partial(coefficient_series(cfg, 3, xi));
        CHECK(ck.at(k, k) == doctest::Approx(num / den).epsilon(1e-10));
    }
}

TEST_CASE("observable helpers") {
    Observable r = Observable::rank_one(Mode{0, 0, 0}, Mode{1, 0, 0});
    CHECK(!r.self_adjoint());
    r.terms.push_back({1.0, {Mode{1, 0, 0}}, {Mode{0, 0, 0}}});
    CHECK(r.self_adjoint());
    CHECK(r.s2_norm() == doctest::Approx(std::sqrt(2.0)));
    CHECK(Observable::unit().self_adjoint());
    CHECK_THROWS_AS(Observable::identity_kernel(1).s2_norm(), ParameterError);
    CHECK_THROWS_AS(Observable::identity_kernel(0), ParameterError);
}
