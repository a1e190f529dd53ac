#include "gibbslab/classicalmc.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace gibbslab {

namespace {

Mode add(const Mode& a, const Mode& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
Mode sub(const Mode& a, const Mode& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }

// One i.i.d. draw of the standard complex Gaussian in polar form: |omega|^2 is
// exactly Exp(1), so E|omega|^2 = 1 and each real component has variance 1/2.
std::complex<double> draw_gaussian(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double r = std::sqrt(-std::log(1.0 - unif(rng)));
    const double arg = 2.0 * std::numbers::pi * unif(rng);
    return {r * std::cos(arg), r * std::sin(arg)};
}

void draw_amplitudes(const TorusBasis& basis, std::mt19937_64& rng,
                     std::vector<std::complex<double>>& out) {
    const int M = basis.num_modes();
    out.resize(M);
    for (int i = 0; i < M; ++i) out[i] = draw_gaussian(rng) / std::sqrt(basis.eigenvalues[i]);
}

std::vector<std::complex<double>> synthesize(const TorusBasis& basis,
                                             const std::vector<std::complex<double>>& amps,
                                             int N) {
    const int M = basis.num_modes();
    // per-axis phase table e^{2 pi i n j / N}, n in [-K, K]
    const int side = 2 * basis.K + 1;
    std::vector<std::complex<double>> phase(static_cast<size_t>(side) * N);
    for (int n = -basis.K; n <= basis.K; ++n)
        for (int j = 0; j < N; ++j) {
            const double a = 2.0 * std::numbers::pi * n * j / N;
            phase[static_cast<size_t>(n + basis.K) * N + j] = {std::cos(a), std::sin(a)};
        }
    size_t points = 1;
    for (int c = 0; c < basis.d; ++c) points *= N;
    std::vector<std::complex<double>> grid(points);
    std::array<int, 3> j{0, 0, 0};
    for (size_t g = 0; g < points; ++g) {
        std::complex<double> acc = 0.0;
        for (int i = 0; i < M; ++i) {
            std::complex<double> ph = 1.0;
            for (int c = 0; c < basis.d; ++c)
                ph *= phase[static_cast<size_t>(basis.modes[i][c] + basis.K) * N + j[c]];
            acc += amps[i] * ph;
        }
        grid[g] = acc;
        for (int c = basis.d - 1; c >= 0; --c) {
            if (++j[c] < N) break;
            j[c] = 0;
        }
    }
    return grid;
}

// W = 1/2 sum_n w_hat(n) |h_n|^2 with h_n the Fourier coefficients of |phi|^2
// (minus rho_[K] at n = 0 when wick is set), computed band-limited in mode
// space; only |n|_inf <= min(2K, Kw) contributes.
double pair_interaction(const TorusBasis& basis, const std::vector<std::complex<double>>& amps,
                        const Interaction& w, bool wick) {
    const int nmax = std::min(2 * basis.K, w.Kw);
    const double rho = wick ? classical_density(basis) : 0.0;
    double acc = 0.0, scale = 0.0;
    Mode n{0, 0, 0};
    for (int c = 0; c < basis.d; ++c) n[c] = -nmax;
    while (true) {
        const double wn = w.at(n);
        if (wn != 0.0) {
            std::complex<double> hn = 0.0;
            for (int ib = 0; ib < basis.num_modes(); ++ib) {
                const int ia = basis.index_of(add(basis.modes[ib], n));
                if (ia >= 0) hn += amps[ia] * std::conj(amps[ib]);
            }
            if (wick && n == Mode{0, 0, 0}) hn -= rho;
            const double term = 0.5 * wn * std::norm(hn);
            acc += term;
            scale += std::abs(term);
        }
        int c = basis.d - 1;
        for (; c >= 0; --c) {
            if (++n[c] <= nmax) break;
            n[c] = -nmax;
        }
        if (c < 0) break;
    }
    if (!w.any_negative() && acc < -1e-9 * std::max(scale, 1.0))
        throw InvariantError("interaction_value: negative energy in a positive-type regime");
    return acc;
}

struct RatioAccumulator {
    double sum_a = 0.0, sum_aa = 0.0, sum_ab = 0.0;

    void add(double a, double b) {
        sum_a += a;
        sum_aa += a * a;
        sum_ab += a * b;
    }
    // delta-method standard error of (sum a)/(sum b)
    double finish(double sum_b, double sum_bb, long long n, double& mean) const {
        mean = sum_a / sum_b;
        const double bbar = sum_b / n;
        const double ss = sum_aa - 2.0 * mean * sum_ab + mean * mean * sum_bb;
        return std::sqrt(std::max(ss, 0.0) / (n - 1.0)) / (bbar * std::sqrt(static_cast<double>(n)));
    }
};

void check_sampling_args(long long samples, double z) {
    if (samples < 1000) throw ParameterError("sampling requires at least 1000 samples");
    if (!(z >= 0.0)) throw ParameterError("reweighting parameter z must be >= 0");
}

}  // namespace

std::complex<double> FieldSample::amplitude(const Mode& n) const {
    const int i = basis->index_of(n);
    return i < 0 ? std::complex<double>(0.0) : amplitudes[i];
}

double FieldSample::mass() const {
    double s = 0.0;
    for (const auto& a : amplitudes) s += std::norm(a);
    return s;
}

FieldSample sample_field(const TorusBasis& basis, std::mt19937_64& rng) {
    FieldSample s;
    s.basis = &basis;
    draw_amplitudes(basis, rng, s.amplitudes);
    s.N = 4 * basis.K + 2;
    s.grid = synthesize(basis, s.amplitudes, s.N);
    return s;
}

double classical_density(const TorusBasis& basis) {
    double rho = 0.0;
    for (double lam : basis.eigenvalues) rho += 1.0 / lam;
    return rho;
}

double interaction_value(const FieldSample& phi, const Interaction& w, ClassicalRegime regime) {
    const TorusBasis& basis = *phi.basis;
    if (regime == ClassicalRegime::local_quartic) {
        if (basis.d != 1) throw ParameterError("local quartic interaction is one-dimensional");
        if (phi.grid.empty()) throw ParameterError("field sample lacks grid values");
        const double alpha = w.at(Mode{0, 0, 0});
        double acc = 0.0;
        for (const auto& v : phi.grid) {
            const double q = std::norm(v);
            acc += q * q;
        }
        acc *= 0.5 * alpha / static_cast<double>(phi.grid.size());
        if (alpha >= 0.0 && acc < -1e-9)
            throw InvariantError("interaction_value: negative energy in a positive-type regime");
        return acc;
    }
    return pair_interaction(basis, phi.amplitudes, w, regime == ClassicalRegime::wick_ordered);
}

double interaction_moment_exact(const TorusBasis& basis, const Interaction& w, int m) {
    if (m != 1 && m != 2) throw ParameterError("interaction moments are available for m in {1, 2}");
    const int nmax = std::min(2 * basis.K, w.Kw);
    std::vector<Mode> box;
    {
        Mode n{0, 0, 0};
        for (int c = 0; c < basis.d; ++c) n[c] = -nmax;
        while (true) {
            if (w.at(n) != 0.0) box.push_back(n);
            int c = basis.d - 1;
            for (; c >= 0; --c) {
                if (++n[c] <= nmax) break;
                n[c] = -nmax;
            }
            if (c < 0) break;
        }
    }
    // c2(n) = sum_b 1/(lambda_{n+b} lambda_b), the Fourier coefficient of the
    // squared free two-point function
    auto c2 = [&](const Mode& n) {
        double s = 0.0;
        for (int ib = 0; ib < basis.num_modes(); ++ib) {
            const int ia = basis.index_of(add(basis.modes[ib], n));
            if (ia >= 0) s += 1.0 / (basis.eigenvalues[ia] * basis.eigenvalues[ib]);
        }
        return s;
    };
    if (m == 1) {
        double acc = 0.0;
        for (const Mode& n : box) acc += 0.5 * w.at(n) * c2(n);
        return acc;
    }

    // E[W^2]: four wick-ordered density factors h_{n1}, conj h_{n1}, h_{n2},
    // conj h_{n2}; Wick's theorem pairs every phi slot with a conj-phi slot of
    // a different factor, so the contractions are the 9 fixed-point-free
    // permutations of four factors, and each permutation cycle carries one
    // free mode sum.
    std::array<int, 4> perm{0, 1, 2, 3};
    std::vector<std::array<int, 4>> derangements;
    do {
        if (perm[0] != 0 && perm[1] != 1 && perm[2] != 2 && perm[3] != 3)
            derangements.push_back(perm);
    } while (std::next_permutation(perm.begin(), perm.end()));

    double acc = 0.0;
    for (const Mode& n1 : box) {
        for (const Mode& n2 : box) {
            std::array<Mode, 4> shift{n1, n1, n2, n2};
            std::array<bool, 4> conj{false, true, false, true};
            double pair_sum = 0.0;
            for (const auto& sigma : derangements) {
                double prod = 1.0;
                std::array<bool, 4> seen{false, false, false, false};
                for (int start = 0; start < 4 && prod != 0.0; ++start) {
                    if (seen[start]) continue;
                    std::vector<int> cycle;
                    for (int i = start; !seen[i]; i = sigma[i]) {
                        seen[i] = true;
                        cycle.push_back(i);
                    }
                    double cyc = 0.0;
                    for (int ib = 0; ib < basis.num_modes(); ++ib) {
                        Mode b = basis.modes[ib];
                        double weight = 1.0;
                        bool ok = true;
                        for (size_t t = 0; t < cycle.size() && ok; ++t) {
                            const int i = cycle[t];
                            const Mode u = conj[i] ? b : add(b, shift[i]);
                            const int iu = basis.index_of(u);
                            if (iu < 0) {
                                ok = false;
                                break;
                            }
                            weight /= basis.eigenvalues[iu];
                            const int j = cycle[(t + 1) % cycle.size()];
                            const Mode bj = conj[j] ? sub(u, shift[j]) : u;
                            if (t + 1 < cycle.size()) {
                                if (basis.index_of(bj) < 0) {
                                    ok = false;
                                    break;
                                }
                                b = bj;
                            } else {
                                ok = (bj == basis.modes[ib]);
                            }
                        }
                        if (ok) cyc += weight;
                    }
                    prod *= cyc;
                }
                pair_sum += prod;
            }
            acc += 0.25 * w.at(n1) * w.at(n2) * pair_sum;
        }
    }
    return acc;
}

std::complex<double> observable_value(const Observable& xi, const FieldSample& phi) {
    if (xi.p == 0) return 1.0;
    if (xi.identity) return std::pow(phi.mass(), xi.p);
    std::complex<double> acc = 0.0;
    for (const RankOneTerm& term : xi.terms) {
        std::complex<double> v = term.c;
        for (int s = 0; s < xi.p; ++s)
            v *= phi.amplitude(term.ks[s]) * std::conj(phi.amplitude(term.ls[s]));
        acc += v;
    }
    return acc;
}

MCEstimate reweighted_expectation(const TorusBasis& basis, const Interaction& w,
                                  ClassicalRegime regime, const FieldFunctional& theta,
                                  long long samples, double z, std::uint64_t seed) {
    check_sampling_args(samples, z);
    std::mt19937_64 rng(seed);
    RatioAccumulator acc;
    double sum_b = 0.0, sum_bb = 0.0;
    for (long long i = 0; i < samples; ++i) {
        const FieldSample s = sample_field(basis, rng);
        const double wt = std::exp(-z * interaction_value(s, w, regime));
        acc.add(theta(s) * wt, wt);
        sum_b += wt;
        sum_bb += wt * wt;
    }
    if (sum_b * sum_b < 50.0 * sum_bb)
        throw ResourceError("reweighted_expectation: effective sample size below 50");
    MCEstimate est;
    est.se = acc.finish(sum_b, sum_bb, samples, est.mean);
    est.count = samples;
    est.seed = seed;
    return est;
}

MCEstimate reweighted_expectation(const TorusBasis& basis, const Interaction& w,
                                  ClassicalRegime regime, const Observable& xi,
                                  long long samples, double z, std::uint64_t seed) {
    if (!xi.self_adjoint())
        throw ParameterError("reweighted_expectation requires a self-adjoint observable");
    return reweighted_expectation(
        basis, w, regime,
        [&xi](const FieldSample& s) { return observable_value(xi, s).real(); }, samples, z, seed);
}

MCEstimate cauchy_check(const TorusBasis& coarse, const TorusBasis& fine, const Interaction& w,
                        ClassicalRegime regime, long long samples, std::uint64_t seed) {
    if (coarse.d != fine.d || coarse.kappa != fine.kappa || coarse.K > fine.K)
        throw ParameterError("cauchy_check requires nested cutoffs over one torus");
    if (samples < 1000) throw ParameterError("sampling requires at least 1000 samples");
    std::vector<int> restrict_map(coarse.num_modes());
    for (int i = 0; i < coarse.num_modes(); ++i)
        restrict_map[i] = fine.index_of(coarse.modes[i]);

    std::mt19937_64 rng(seed);
    std::vector<std::complex<double>> amps_f, amps_c(coarse.num_modes());
    double sum = 0.0, sum_sq = 0.0;
    for (long long i = 0; i < samples; ++i) {
        draw_amplitudes(fine, rng, amps_f);
        for (int k = 0; k < coarse.num_modes(); ++k) amps_c[k] = amps_f[restrict_map[k]];
        double wf, wc;
        if (regime == ClassicalRegime::local_quartic) {
            FieldSample sf{&fine, amps_f, 4 * fine.K + 2, {}};
            sf.grid = synthesize(fine, amps_f, sf.N);
            FieldSample sc{&coarse, amps_c, 4 * coarse.K + 2, {}};
            sc.grid = synthesize(coarse, amps_c, sc.N);
            wf = interaction_value(sf, w, regime);
            wc = interaction_value(sc, w, regime);
        } else {
            const bool wick = regime == ClassicalRegime::wick_ordered;
            wf = pair_interaction(fine, amps_f, w, wick);
            wc = pair_interaction(coarse, amps_c, w, wick);
        }
        const double d2 = (wf - wc) * (wf - wc);
        sum += d2;
        sum_sq += d2 * d2;
    }
    MCEstimate est;
    est.mean = sum / samples;
    est.se = std::sqrt(std::max(sum_sq / samples - est.mean * est.mean, 0.0) /
                       static_cast<double>(samples - 1));
    est.count = samples;
    est.seed = seed;
    return est;
}

GammaEstimate classical_gamma(const TorusBasis& basis, const Interaction& w,
                              ClassicalRegime regime, int p, long long samples, double z,
                              std::uint64_t seed) {
    if (p != 1 && p != 2) throw ParameterError("classical_gamma supports p in {1, 2}");
    check_sampling_args(samples, z);
    const int M = basis.num_modes();
    const size_t entries = p == 1 ? static_cast<size_t>(M) * M
                                  : static_cast<size_t>(M) * M * M * M;
    std::vector<RatioAccumulator> acc(entries);
    double sum_b = 0.0, sum_bb = 0.0;

    std::mt19937_64 rng(seed);
    std::vector<std::complex<double>> pairprod(static_cast<size_t>(M) * M);
    for (long long i = 0; i < samples; ++i) {
        const FieldSample s = sample_field(basis, rng);
        const double wt = std::exp(-z * interaction_value(s, w, regime));
        sum_b += wt;
        sum_bb += wt * wt;
        for (int k = 0; k < M; ++k)
            for (int l = 0; l < M; ++l)
                pairprod[static_cast<size_t>(k) * M + l] =
                    s.amplitudes[k] * std::conj(s.amplitudes[l]);
        if (p == 1) {
            for (size_t e = 0; e < entries; ++e) acc[e].add(pairprod[e].real() * wt, wt);
        } else {
            // value at ((k1,k2),(l1,l2)) factorizes over slots; real parts are
            // taken per sample, which is already the hermitized kernel
            size_t e = 0;
            for (int k1 = 0; k1 < M; ++k1)
                for (int k2 = 0; k2 < M; ++k2)
                    for (int l1 = 0; l1 < M; ++l1) {
                        const std::complex<double> left = pairprod[static_cast<size_t>(k1) * M + l1];
                        for (int l2 = 0; l2 < M; ++l2, ++e) {
                            const std::complex<double> v =
                                left * pairprod[static_cast<size_t>(k2) * M + l2];
                            acc[e].add(v.real() * wt, wt);
                        }
                    }
        }
    }
    if (sum_b * sum_b < 50.0 * sum_bb)
        throw ResourceError("classical_gamma: effective sample size below 50");

    GammaEstimate out;
    out.kernel.p = p;
    out.kernel.num_modes = M;
    out.kernel.entries.resize(entries);
    out.kernel.classical = true;
    out.kernel.tau = std::numeric_limits<double>::infinity();
    out.kernel.eta = 0.0;
    out.se.resize(entries);
    for (size_t e = 0; e < entries; ++e)
        out.se[e] = acc[e].finish(sum_b, sum_bb, samples, out.kernel.entries[e]);

    // per-sample kernels are hermitian, so only rounding noise is dropped here
    double dev = 0.0;
    auto symmetrize = [&](size_t e, size_t et) {
        if (et <= e) return;
        const double half_gap = 0.5 * std::abs(out.kernel.entries[e] - out.kernel.entries[et]);
        dev = std::max(dev, half_gap);
        const double mean = 0.5 * (out.kernel.entries[e] + out.kernel.entries[et]);
        out.kernel.entries[e] = mean;
        out.kernel.entries[et] = mean;
    };
    if (p == 1) {
        for (int k = 0; k < M; ++k)
            for (int l = 0; l < M; ++l)
                symmetrize(static_cast<size_t>(k) * M + l, static_cast<size_t>(l) * M + k);
    } else {
        for (int k1 = 0; k1 < M; ++k1)
            for (int k2 = 0; k2 < M; ++k2)
                for (int l1 = 0; l1 < M; ++l1)
                    for (int l2 = 0; l2 < M; ++l2)
                        symmetrize(((static_cast<size_t>(k1) * M + k2) * M + l1) * M + l2,
                                   ((static_cast<size_t>(l1) * M + l2) * M + k1) * M + k2);
    }
    out.kernel.hermiticity_deviation = dev;
    out.count = samples;
    out.seed = seed;
    return out;
}

}  // namespace gibbslab
