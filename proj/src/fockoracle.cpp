#include "gibbslab/fockoracle.hpp"

#include <algorithm>
#include <cmath>

#include "gibbslab/linalg.hpp"

namespace gibbslab {

namespace {

void enumerate_occupations(int modes, int cap, std::vector<int>& occ, int pos, int used,
                           std::vector<std::vector<int>>& out) {
    if (pos == modes) {
        if (used <= cap) out.push_back(occ);
        return;
    }
    for (int m = 0; used + m <= cap; ++m) {
        occ[pos] = m;
        enumerate_occupations(modes, cap, occ, pos + 1, used + m, out);
    }
    occ[pos] = 0;
}

double binomial(int n, int k) {
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

}  // namespace

int FockSpace::index_of(const std::vector<int>& occ) const {
    auto it = index.find(occ);
    return it == index.end() ? -1 : it->second;
}

int FockSpace::total_occupation(int state) const {
    int t = 0;
    for (int m : states[state]) t += m;
    return t;
}

FockSpace build_fock_space(const TorusBasis& basis, int cap, const FockCaps& caps) {
    if (cap < 0) throw ParameterError("build_fock_space: cap must be >= 0");
    if (basis.num_modes() > caps.max_modes)
        throw ResourceError("build_fock_space: " + std::to_string(basis.num_modes()) +
                            " modes exceeds cap " + std::to_string(caps.max_modes));
    if (cap > caps.max_total)
        throw ResourceError("build_fock_space: total occupation cap " + std::to_string(cap) +
                            " exceeds " + std::to_string(caps.max_total));
    FockSpace fs;
    fs.basis = basis;
    fs.cap = cap;
    const int M = basis.num_modes();
    std::vector<std::vector<int>> all;
    std::vector<int> occ(M, 0);
    enumerate_occupations(M, cap, occ, 0, 0, all);
    std::sort(all.begin(), all.end(), [](const std::vector<int>& a, const std::vector<int>& b) {
        int ta = 0, tb = 0;
        for (int x : a) ta += x;
        for (int x : b) tb += x;
        if (ta != tb) return ta < tb;
        return a < b;
    });
    fs.states = std::move(all);
    const double expect = binomial(M + cap, cap);
    if (std::abs(static_cast<double>(fs.states.size()) - expect) > 0.5)
        throw InvariantError("build_fock_space: state count mismatch");
    for (int s = 0; s < fs.dim(); ++s) fs.index[fs.states[s]] = s;
    fs.blocks.assign(cap + 1, {0, 0});
    for (int n = 0, s = 0; n <= cap; ++n) {
        fs.blocks[n].first = s;
        while (s < fs.dim() && fs.total_occupation(s) == n) ++s;
        fs.blocks[n].second = s;
    }
    return fs;
}

double FockOperator::max_abs() const {
    double v = 0.0;
    for (double x : a) v = std::max(v, std::abs(x));
    return v;
}

double FockOperator::hermiticity_gap() const {
    double v = 0.0;
    const int n = dim();
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) v = std::max(v, std::abs(at(i, j) - at(j, i)));
    return v;
}

FockOperator ladder(const FockSpace& fs, int mode, LadderKind kind, double tau) {
    if (mode < 0 || mode >= fs.num_modes()) throw ParameterError("ladder: mode out of range");
    if (!(tau > 0.0)) throw ParameterError("ladder: tau must be positive");
    FockOperator op;
    op.fs = &fs;
    op.a.assign(static_cast<size_t>(fs.dim()) * fs.dim(), 0.0);
    op.hermitian = false;
    op.label = (kind == LadderKind::create ? "b*" : "b") + std::to_string(mode);
    const double scale = 1.0 / std::sqrt(tau);
    for (int s = 0; s < fs.dim(); ++s) {
        std::vector<int> occ = fs.states[s];
        if (kind == LadderKind::annihilate) {
            if (occ[mode] == 0) continue;
            const double amp = std::sqrt(static_cast<double>(occ[mode]));
            occ[mode] -= 1;
            op.at(fs.index_of(occ), s) = amp * scale;
        } else {
            const double amp = std::sqrt(static_cast<double>(occ[mode] + 1));
            occ[mode] += 1;
            const int t = fs.index_of(occ);
            if (t >= 0) op.at(t, s) = amp * scale;  // top shell maps to zero
        }
    }
    return op;
}

namespace {

// Sparse state vector used while applying ladder strings.
using StateVec = std::map<int, double>;

// T_n = (1/tau) sum_k b*_{k+n} b_k, restricted to modes visible in the basis.
void apply_hop(const FockSpace& fs, const Mode& n, double tau, const StateVec& in, StateVec& out) {
    const TorusBasis& b = fs.basis;
    for (const auto& [s, c] : in) {
        const std::vector<int>& occ = fs.states[s];
        for (int k = 0; k < fs.num_modes(); ++k) {
            if (occ[k] == 0) continue;
            Mode target = b.modes[k];
            for (int cc = 0; cc < 3; ++cc) target[cc] += n[cc];
            const int kp = b.index_of(target);
            if (kp < 0) continue;
            std::vector<int> o2 = occ;
            o2[k] -= 1;
            const double amp1 = std::sqrt(static_cast<double>(occ[k]));
            const double amp2 = std::sqrt(static_cast<double>(o2[kp] + 1));
            o2[kp] += 1;
            out[fs.index_of(o2)] += c * amp1 * amp2 / tau;
        }
    }
}

Mode negate(const Mode& n) { return Mode{-n[0], -n[1], -n[2]}; }

std::vector<Mode> support_modes(const Interaction& w) {
    std::vector<Mode> out;
    const int side = 2 * w.Kw + 1;
    int total = 1;
    for (int c = 0; c < w.d; ++c) total *= side;
    std::vector<int> idx(w.d, -w.Kw);
    for (int j = 0; j < total; ++j) {
        Mode m{0, 0, 0};
        for (int c = 0; c < w.d; ++c) m[c] = idx[c];
        if (w.at(m) != 0.0) out.push_back(m);
        int c = w.d - 1;
        while (c >= 0 && ++idx[c] > w.Kw) idx[c--] = -w.Kw;
    }
    return out;
}

double bose_occupancy(double lambda, double tau) { return 1.0 / (tau * std::expm1(lambda / tau)); }

}  // namespace

Hamiltonians hamiltonians(const FockSpace& fs, double tau, const Interaction& w) {
    if (!(tau > 0.0)) throw ParameterError("hamiltonians: tau must be positive");
    if (w.d != fs.basis.d) throw ParameterError("hamiltonians: interaction dimension mismatch");
    if (w.any_negative())
        throw ParameterError("hamiltonians: negative coefficient in the renormalized regime");
    const int dim = fs.dim();
    Hamiltonians h;
    for (FockOperator* op : {&h.h0, &h.w, &h.wplain}) {
        op->fs = &fs;
        op->a.assign(static_cast<size_t>(dim) * dim, 0.0);
        op->hermitian = true;
    }
    h.h0.label = "H0";
    h.w.label = "W";
    h.wplain.label = "Wplain";

    for (int s = 0; s < dim; ++s) {
        double e = 0.0;
        for (int k = 0; k < fs.num_modes(); ++k)
            e += fs.states[s][k] * fs.basis.eigenvalues[k];
        h.h0.at(s, s) = e / tau;
    }

    double rho_bar = 0.0;
    for (double l : fs.basis.eigenvalues) rho_bar += bose_occupancy(l, tau);
    h.rho_bar = rho_bar;

    const std::vector<Mode> ns = support_modes(w);
    const Mode zero{0, 0, 0};
    for (int s = 0; s < dim; ++s) {
        StateVec col{{s, 1.0}};
        for (const Mode& n : ns) {
            const double wn = w.at(n);
            StateVec tn, acc;
            apply_hop(fs, n, tau, col, tn);
            apply_hop(fs, negate(n), tau, tn, acc);
            const bool is_zero = (n == zero);
            if (is_zero) {
                for (const auto& [t, c] : tn) acc[t] -= 2.0 * rho_bar * c;
                acc[s] += rho_bar * rho_bar;
            }
            for (const auto& [t, c] : acc) h.w.at(t, s) += 0.5 * wn * c;
        }
    }

    // Wplain columns built by direct normal-ordered application; the particle
    // number is conserved so the cap never truncates the quartic itself.
    const TorusBasis& b = fs.basis;
    for (int s = 0; s < dim; ++s) {
        const std::vector<int>& occ = fs.states[s];
        for (int l = 0; l < fs.num_modes(); ++l) {
            if (occ[l] == 0) continue;
            for (int k = 0; k < fs.num_modes(); ++k) {
                std::vector<int> o1 = occ;
                const double a_l = std::sqrt(static_cast<double>(o1[l]));
                o1[l] -= 1;
                if (o1[k] == 0) continue;
                const double a_k = std::sqrt(static_cast<double>(o1[k]));
                o1[k] -= 1;
                for (const Mode& n : ns) {
                    Mode mkp = b.modes[k], mlp = b.modes[l];
                    for (int cc = 0; cc < 3; ++cc) {
                        mkp[cc] += n[cc];
                        mlp[cc] -= n[cc];
                    }
                    const int kp = b.index_of(mkp);
                    const int lp = b.index_of(mlp);
                    if (kp < 0 || lp < 0) continue;
                    std::vector<int> o2 = o1;
                    const double c_lp = std::sqrt(static_cast<double>(o2[lp] + 1));
                    o2[lp] += 1;
                    const double c_kp = std::sqrt(static_cast<double>(o2[kp] + 1));
                    o2[kp] += 1;
                    h.wplain.at(fs.index_of(o2), s) +=
                        0.5 * w.at(n) * a_l * a_k * c_lp * c_kp / (tau * tau);
                }
            }
        }
    }

    for (const FockOperator* op : {&h.w, &h.wplain}) {
        const double scale = std::max(op->max_abs(), 1e-300);
        if (op->hermiticity_gap() > 1e-12 * scale)
            throw InvariantError("hamiltonians: " + op->label + " not hermitian");
    }

    // renormalized W is a sum of D_n^* D_n, hence positive semidefinite
    double wnorm = 0.0, min_eig = 0.0;
    for (const auto& [lo, hi] : fs.blocks) {
        const int bd = hi - lo;
        if (bd == 0) continue;
        SymMatrix blk(bd);
        for (int i = 0; i < bd; ++i)
            for (int j = 0; j < bd; ++j) blk.at(i, j) = h.w.at(lo + i, lo + j);
        for (int i = 0; i < bd; ++i)
            for (int j = i + 1; j < bd; ++j) {
                const double sym = 0.5 * (blk.at(i, j) + blk.at(j, i));
                blk.at(i, j) = blk.at(j, i) = sym;
            }
        EigDecomposition d = jacobi_eigh(blk);
        min_eig = std::min(min_eig, d.eigenvalues.front());
        wnorm = std::max(wnorm, std::max(std::abs(d.eigenvalues.front()),
                                         std::abs(d.eigenvalues.back())));
    }
    if (min_eig < -1e-10 * std::max(wnorm, 1e-300))
        throw InvariantError("hamiltonians: renormalized W has negative eigenvalue " +
                             std::to_string(min_eig));
    return h;
}

namespace {

// Applies the monomial (leftmost factor last) to |s>; returns the reached
// state index and accumulated amplitude, or -1 when annihilated.
std::pair<int, double> apply_monomial(const FockSpace& fs, const Monomial& mono, int s) {
    std::vector<int> occ = fs.states[s];
    double amp = 1.0;
    int total = 0;
    for (int m : occ) total += m;
    for (auto it = mono.rbegin(); it != mono.rend(); ++it) {
        if (it->mode < 0 || it->mode >= fs.num_modes())
            throw ParameterError("monomial: mode out of range");
        if (it->create) {
            if (total == fs.cap) return {-1, 0.0};
            amp *= std::sqrt(static_cast<double>(occ[it->mode] + 1));
            occ[it->mode] += 1;
            ++total;
        } else {
            if (occ[it->mode] == 0) return {-1, 0.0};
            amp *= std::sqrt(static_cast<double>(occ[it->mode]));
            occ[it->mode] -= 1;
            --total;
        }
    }
    return {fs.index_of(occ), amp};
}

double quasi_free_raw(const FockSpace& fs, double tau, const Monomial& mono) {
    double num = 0.0, den = 0.0;
    for (int s = 0; s < fs.dim(); ++s) {
        double e = 0.0;
        for (int k = 0; k < fs.num_modes(); ++k)
            e += fs.states[s][k] * fs.basis.eigenvalues[k];
        const double boltz = std::exp(-e / tau);
        den += boltz;
        const auto [t, amp] = apply_monomial(fs, mono, s);
        if (t == s) num += amp * boltz;
    }
    return num / den;
}

}  // namespace

TracedValue quasi_free_expectation(const FockSpace& fs, double tau, const Monomial& mono) {
    if (!(tau > 0.0)) throw ParameterError("quasi_free_expectation: tau must be positive");
    TracedValue out;
    out.value = quasi_free_raw(fs, tau, mono);
    FockCaps wide;
    wide.max_total = 2 * fs.cap;
    wide.max_dim = 1 << 26;
    const FockSpace fs2 = build_fock_space(fs.basis, 2 * fs.cap, wide);
    const double v2 = quasi_free_raw(fs2, tau, mono);
    if (std::abs(v2 - out.value) > 1e-8 * std::max({std::abs(out.value), std::abs(v2), 1e-12}))
        out.truncation_warning = true;
    return out;
}

WickCheckResult wick_check(const FockSpace& fs, double tau, const Monomial& mono) {
    WickCheckResult r;
    r.lhs = quasi_free_raw(fs, tau, mono);
    const int q = static_cast<int>(mono.size());
    if (q % 2 == 0) {
        // exact two-point table
        auto pair_value = [&](int i, int j) -> double {
            const LadderOp &A = mono[i], &B = mono[j];
            if (A.mode != B.mode || A.create == B.create) return 0.0;
            const double c = 1.0 / std::expm1(fs.basis.eigenvalues[A.mode] / tau);
            return A.create ? c : 1.0 + c;
        };
        std::vector<int> match(q, -1);
        std::vector<std::pair<int, int>> acc;
        double sum = 0.0;
        auto rec = [&](auto&& self, int) -> void {
            int a = 0;
            while (a < q && match[a] >= 0) ++a;
            if (a == q) {
                double prod = 1.0;
                for (const auto& [i, j] : acc) prod *= pair_value(i, j);
                sum += prod;
                return;
            }
            for (int b = a + 1; b < q; ++b) {
                if (match[b] >= 0 || pair_value(a, b) == 0.0) continue;
                match[a] = b;
                match[b] = a;
                acc.emplace_back(a, b);
                self(self, 0);
                acc.pop_back();
                match[a] = match[b] = -1;
            }
        };
        rec(rec, 0);
        r.rhs = sum;
    }
    r.gap = r.lhs - r.rhs;
    return r;
}

ThermalState build_thermal_state(const FockSpace& fs, double tau, double eta, double z,
                                 const Interaction& w, const FockCaps& caps) {
    if (!(eta >= 0.0 && eta <= 0.25))
        throw ParameterError("build_thermal_state: eta must lie in [0, 1/4]");
    if (!(z >= 0.0)) throw ParameterError("build_thermal_state: z must be >= 0");
    if (fs.dim() > caps.max_dim)
        throw ResourceError("build_thermal_state: dim " + std::to_string(fs.dim()) +
                            " exceeds cap " + std::to_string(caps.max_dim));
    Hamiltonians h = hamiltonians(fs, tau, w);
    ThermalState st;
    st.fs = &fs;
    st.tau = tau;
    st.eta = eta;
    st.z = z;
    st.rho.assign(static_cast<size_t>(fs.dim()) * fs.dim(), 0.0);
    st.z0 = 0.0;
    for (int s = 0; s < fs.dim(); ++s) st.z0 += std::exp(-h.h0.at(s, s));
    for (const auto& [lo, hi] : fs.blocks) {
        const int bd = hi - lo;
        if (bd == 0) continue;
        SymMatrix blk(bd);
        for (int i = 0; i < bd; ++i)
            for (int j = 0; j < bd; ++j)
                blk.at(i, j) = (1.0 - 2.0 * eta) * (i == j ? h.h0.at(lo + i, lo + i) : 0.0) +
                               z * 0.5 * (h.w.at(lo + i, lo + j) + h.w.at(lo + j, lo + i));
        SymMatrix eb = sym_matrix_function(blk, [](double x) { return std::exp(-x); }, "exp(-x)");
        for (int i = 0; i < bd; ++i) {
            const double li = std::exp(-eta * h.h0.at(lo + i, lo + i));
            for (int j = 0; j < bd; ++j) {
                const double lj = std::exp(-eta * h.h0.at(lo + j, lo + j));
                st.rho[static_cast<size_t>(lo + i) * fs.dim() + (lo + j)] = li * eb.at(i, j) * lj;
            }
        }
    }
    return st;
}

double full_state_expectation(const ThermalState& st, const FockOperator& theta) {
    const FockSpace& fs = *st.fs;
    if (theta.fs != &fs) throw ParameterError("full_state_expectation: observable space mismatch");
    double tr = 0.0;
    for (int i = 0; i < fs.dim(); ++i)
        for (int j = 0; j < fs.dim(); ++j)
            tr += theta.at(i, j) * st.rho[static_cast<size_t>(j) * fs.dim() + i];
    return tr / st.z0;
}

double full_state_expectation(const FockSpace& fs, double tau, double eta, double z,
                              const Interaction& w, const FockOperator& theta,
                              const FockCaps& caps) {
    return full_state_expectation(build_thermal_state(fs, tau, eta, z, w, caps), theta);
}

double duhamel_time_product(const FockSpace& fs, double tau, double eta,
                            const std::vector<double>& times, const FockOperator& w_op,
                            const FockOperator& theta) {
    if (w_op.fs != &fs || theta.fs != &fs)
        throw ParameterError("duhamel_time_product: operator space mismatch");
    const int m = static_cast<int>(times.size());
    double prev = 1.0 - eta;
    for (int k = 0; k < m; ++k) {
        if (!(times[k] >= eta && times[k] <= prev))
            throw ParameterError("duhamel_time_product: times violate the simplex ordering");
        prev = times[k];
    }
    std::vector<double> e0(fs.dim(), 0.0);
    for (int s = 0; s < fs.dim(); ++s) {
        double acc = 0.0;
        for (int k = 0; k < fs.num_modes(); ++k)
            acc += fs.basis.eigenvalues[k] * fs.states[s][k];
        e0[s] = acc / tau;
    }
    double z0 = 0.0;
    for (int s = 0; s < fs.dim(); ++s) z0 += std::exp(-e0[s]);

    double acc = 0.0;
    for (const auto& [lo, hi] : fs.blocks) {
        const int bd = hi - lo;
        if (bd == 0) continue;
        // P = e^{-(1-t_1)H0} W e^{-(t_1-t_2)H0} ... W e^{-t_m H0}
        std::vector<double> P(static_cast<size_t>(bd) * bd, 0.0);
        const double t1 = m > 0 ? times[0] : 0.0;
        for (int i = 0; i < bd; ++i)
            P[static_cast<size_t>(i) * bd + i] = std::exp(-(1.0 - t1) * e0[lo + i]);
        std::vector<double> tmp(static_cast<size_t>(bd) * bd);
        for (int alpha = 0; alpha < m; ++alpha) {
            // P <- P * W_blk
            std::fill(tmp.begin(), tmp.end(), 0.0);
            for (int i = 0; i < bd; ++i)
                for (int k = 0; k < bd; ++k) {
                    const double pik = P[static_cast<size_t>(i) * bd + k];
                    if (pik == 0.0) continue;
                    for (int j = 0; j < bd; ++j)
                        tmp[static_cast<size_t>(i) * bd + j] += pik * w_op.at(lo + k, lo + j);
                }
            const double tnext = (alpha + 1 < m) ? times[alpha + 1] : 0.0;
            const double dt = times[alpha] - tnext;
            for (int i = 0; i < bd; ++i)
                for (int j = 0; j < bd; ++j)
                    P[static_cast<size_t>(i) * bd + j] =
                        tmp[static_cast<size_t>(i) * bd + j] * std::exp(-dt * e0[lo + j]);
        }
        for (int i = 0; i < bd; ++i)
            for (int j = 0; j < bd; ++j)
                acc += theta.at(lo + i, lo + j) * P[static_cast<size_t>(j) * bd + i];
    }
    return acc / z0;
}

double duhamel_time_product(const FockSpace& fs, double tau, double eta,
                            const std::vector<double>& times, const Interaction& w,
                            const FockOperator& theta) {
    return duhamel_time_product(fs, tau, eta, times, hamiltonians(fs, tau, w).w, theta);
}

std::vector<double> exact_correlation(const FockSpace& fs, double tau, double eta, double z,
                                      const Interaction& w, int p, const FockCaps& caps) {
    if (p != 1 && p != 2) throw ParameterError("exact_correlation: p must be 1 or 2");
    ThermalState st = build_thermal_state(fs, tau, eta, z, w, caps);
    const double denom = full_state_expectation(st, identity_fock(fs));
    if (std::abs(denom) < 1e-10)
        throw InvariantError("exact_correlation: degenerate state, |rho(I)| < 1e-10");
    const int M = fs.num_modes();
    if (p == 1) {
        std::vector<double> gamma(static_cast<size_t>(M) * M, 0.0);
        for (int k = 0; k < M; ++k)
            for (int l = 0; l < M; ++l)
                gamma[static_cast<size_t>(k) * M + l] =
                    full_state_expectation(st, mode_projector(fs, k, l, tau)) / denom;
        return gamma;
    }
    std::vector<double> gamma(static_cast<size_t>(M) * M * M * M, 0.0);
    for (int k1 = 0; k1 < M; ++k1)
        for (int k2 = 0; k2 < M; ++k2)
            for (int l1 = 0; l1 < M; ++l1)
                for (int l2 = 0; l2 < M; ++l2) {
                    // Theta(u_{k1} x u_{k2} (u_{l1} x u_{l2})^*) =
                    //   phi*_{k1} phi*_{k2} phi_{l2} phi_{l1}
                    FockOperator th;
                    th.fs = &fs;
                    th.a.assign(static_cast<size_t>(fs.dim()) * fs.dim(), 0.0);
                    Monomial mono{{k1, true}, {k2, true}, {l2, false}, {l1, false}};
                    for (int s = 0; s < fs.dim(); ++s) {
                        const auto [t, amp] = apply_monomial(fs, mono, s);
                        if (t >= 0) th.at(t, s) += amp / (tau * tau);
                    }
                    gamma[((static_cast<size_t>(k1) * M + k2) * M + l1) * M + l2] =
                        full_state_expectation(st, th) / denom;
                }
    return gamma;
}

FockOperator number_operator(const FockSpace& fs, double tau) {
    FockOperator op;
    op.fs = &fs;
    op.a.assign(static_cast<size_t>(fs.dim()) * fs.dim(), 0.0);
    op.hermitian = true;
    op.label = "N_tau";
    for (int s = 0; s < fs.dim(); ++s) op.at(s, s) = fs.total_occupation(s) / tau;
    return op;
}

FockOperator mode_projector(const FockSpace& fs, int k, int l, double tau) {
    if (k < 0 || k >= fs.num_modes() || l < 0 || l >= fs.num_modes())
        throw ParameterError("mode_projector: mode out of range");
    FockOperator op;
    op.fs = &fs;
    op.a.assign(static_cast<size_t>(fs.dim()) * fs.dim(), 0.0);
    op.hermitian = (k == l);
    op.label = "phi*_" + std::to_string(k) + " phi_" + std::to_string(l);
    for (int s = 0; s < fs.dim(); ++s) {
        Monomial mono{{k, true}, {l, false}};
        const auto [t, amp] = apply_monomial(fs, mono, s);
        if (t >= 0) op.at(t, s) += amp / tau;
    }
    return op;
}

FockOperator identity_fock(const FockSpace& fs) {
    FockOperator op;
    op.fs = &fs;
    op.a.assign(static_cast<size_t>(fs.dim()) * fs.dim(), 0.0);
    op.hermitian = true;
    op.label = "I";
    for (int s = 0; s < fs.dim(); ++s) op.at(s, s) = 1.0;
    return op;
}

}  // namespace gibbslab
