#include "gibbslab/expansion.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstring>
#include <future>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

namespace gibbslab {

namespace {

constexpr double kTimeSlack = 1e-12;

int ipow(int b, int e) {
    int t = 1;
    for (int i = 0; i < e; ++i) t *= b;
    return t;
}

// Uniform N^d grid on the torus; point index is row-major over the d
// coordinate digits.  disp maps a point pair to the flattened index of their
// componentwise displacement, so translation-invariant factors are one table
// lookup per entry.
struct GridGeom {
    int d = 1;
    int N = 1;
    int G = 1;
    std::vector<std::array<int, 3>> coords;
    std::vector<int> disp;
};

GridGeom make_geom(int d, int N) {
    GridGeom g;
    g.d = d;
    g.N = N;
    g.G = ipow(N, d);
    g.coords.assign(g.G, {0, 0, 0});
    for (int i = 0; i < g.G; ++i) {
        int rem = i;
        for (int j = d - 1; j >= 0; --j) {
            g.coords[i][j] = rem % N;
            rem /= N;
        }
    }
    g.disp.assign(static_cast<size_t>(g.G) * g.G, 0);
    for (int x = 0; x < g.G; ++x)
        for (int y = 0; y < g.G; ++y) {
            int flat = 0;
            for (int j = 0; j < d; ++j)
                flat = flat * N + (g.coords[x][j] - g.coords[y][j] + N) % N;
            g.disp[static_cast<size_t>(x) * g.G + y] = flat;
        }
    return g;
}

// Displacement table of a mode sum: t[delta] = sum_i v_i cos(2 pi n_i.delta/N).
// Valid because every mode family here is closed under negation with even
// values, so the sine parts cancel exactly.
std::vector<double> displacement_table(const GridGeom& geom, const std::vector<Mode>& modes,
                                       const std::vector<double>& vals) {
    std::vector<double> tab(geom.G, 0.0);
    const double step = 2.0 * std::numbers::pi / geom.N;
    for (int dlt = 0; dlt < geom.G; ++dlt) {
        double acc = 0.0;
        for (size_t i = 0; i < modes.size(); ++i) {
            double phase = 0.0;
            for (int j = 0; j < geom.d; ++j) phase += modes[i][j] * geom.coords[dlt][j];
            acc += vals[i] * std::cos(step * phase);
        }
        tab[dlt] = acc;
    }
    return tab;
}

void interaction_modes(const Interaction& w, std::vector<Mode>& modes, std::vector<double>& vals) {
    const int Kw = w.Kw;
    const int r1 = w.d > 1 ? Kw : 0;
    const int r2 = w.d > 2 ? Kw : 0;
    for (int n0 = -Kw; n0 <= Kw; ++n0)
        for (int n1 = -r1; n1 <= r1; ++n1)
            for (int n2 = -r2; n2 <= r2; ++n2) {
                Mode n{n0, n1, n2};
                modes.push_back(n);
                vals.push_back(w.at(n));
            }
}

struct Factor {
    std::vector<int> vars;  // ascending variable ids
    std::vector<double> data;  // size G^vars.size(), row-major in vars order
};

size_t tensor_entries(int G, size_t nvars, size_t cap, const char* where) {
    size_t t = 1;
    for (size_t i = 0; i < nvars; ++i) {
        t *= static_cast<size_t>(G);
        if (t > cap) {
            std::ostringstream os;
            os << where << ": intermediate tensor over " << nvars << " grid variables of size "
               << G << " exceeds the entry cap " << cap;
            throw ResourceError(os.str());
        }
    }
    return t;
}

// Pointwise product of the given factors on outVars (+ sumVar), summed over
// sumVar with the 1/G integration weight; sumVar = -1 skips the summation.
Factor fuse(int G, const std::vector<const Factor*>& in, const std::vector<int>& outVars,
            int sumVar, size_t capEntries) {
    Factor out;
    out.vars = outVars;
    const int nOut = static_cast<int>(outVars.size());
    const size_t total = tensor_entries(G, outVars.size(), capEntries, "contraction");
    out.data.assign(total, 0.0);

    const int F = static_cast<int>(in.size());
    std::vector<std::vector<size_t>> os(F, std::vector<size_t>(nOut, 0));
    std::vector<size_t> ss(F, 0);
    for (int f = 0; f < F; ++f) {
        const auto& fv = in[f]->vars;
        size_t stride = 1;
        for (int q = static_cast<int>(fv.size()) - 1; q >= 0; --q) {
            if (fv[q] == sumVar) {
                ss[f] = stride;
            } else {
                const auto it = std::find(outVars.begin(), outVars.end(), fv[q]);
                if (it == outVars.end()) throw InvariantError("contraction: factor variable missing");
                os[f][it - outVars.begin()] = stride;
            }
            stride *= G;
        }
    }

    std::vector<int> digit(nOut, 0);
    std::vector<size_t> base(F, 0);
    for (size_t o = 0; o < total; ++o) {
        for (int f = 0; f < F; ++f) {
            size_t b = 0;
            for (int j = 0; j < nOut; ++j) b += static_cast<size_t>(digit[j]) * os[f][j];
            base[f] = b;
        }
        double cell;
        if (sumVar >= 0) {
            double acc = 0.0;
            for (int x = 0; x < G; ++x) {
                double prod = 1.0;
                for (int f = 0; f < F; ++f) prod *= in[f]->data[base[f] + x * ss[f]];
                acc += prod;
            }
            cell = acc / G;
        } else {
            double prod = 1.0;
            for (int f = 0; f < F; ++f) prod *= in[f]->data[base[f]];
            cell = prod;
        }
        out.data[o] = cell;
        for (int j = nOut - 1; j >= 0; --j) {
            if (++digit[j] < G) break;
            digit[j] = 0;
        }
    }
    return out;
}

// Greedy smallest-union elimination of every variable not kept open; returns
// the factor over the open variables (ascending).
Factor contract_net(int G, std::vector<Factor> factors, double scalar,
                    const std::vector<int>& openAsc, size_t capEntries) {
    for (;;) {
        std::set<int> active;
        for (const Factor& f : factors)
            for (int v : f.vars)
                if (!std::binary_search(openAsc.begin(), openAsc.end(), v)) active.insert(v);
        if (active.empty()) break;

        int bestV = -1, bestCnt = 0;
        size_t bestU = 0;
        std::vector<int> bestOut;
        for (int v : active) {
            std::set<int> u;
            int cnt = 0;
            for (const Factor& f : factors)
                if (std::find(f.vars.begin(), f.vars.end(), v) != f.vars.end()) {
                    ++cnt;
                    u.insert(f.vars.begin(), f.vars.end());
                }
            u.erase(v);
            if (bestV < 0 || u.size() < bestU || (u.size() == bestU && cnt < bestCnt)) {
                bestV = v;
                bestU = u.size();
                bestCnt = cnt;
                bestOut.assign(u.begin(), u.end());
            }
        }

        std::vector<Factor> rest;
        std::vector<Factor> inc;
        for (Factor& f : factors) {
            if (std::find(f.vars.begin(), f.vars.end(), bestV) != f.vars.end())
                inc.push_back(std::move(f));
            else
                rest.push_back(std::move(f));
        }
        std::vector<const Factor*> ptrs;
        for (const Factor& f : inc) ptrs.push_back(&f);
        Factor r = fuse(G, ptrs, bestOut, bestV, capEntries);
        if (r.vars.empty())
            scalar *= r.data[0];
        else
            rest.push_back(std::move(r));
        factors = std::move(rest);
    }

    if (factors.empty()) {
        Factor res;
        res.vars = openAsc;
        res.data.assign(tensor_entries(G, openAsc.size(), capEntries, "contraction"), scalar);
        return res;
    }
    std::vector<const Factor*> ptrs;
    for (const Factor& f : factors) ptrs.push_back(&f);
    Factor res = fuse(G, ptrs, openAsc, -1, capEntries);
    for (double& v : res.data) v *= scalar;
    return res;
}

// Edge factors depend only on (sigma, s_a - s_b), so one node's tables are
// shared across pairings.
struct EdgeTableCache {
    const ExpansionConfig* cfg = nullptr;
    const GridGeom* geom = nullptr;
    std::map<std::pair<int, long long>, std::vector<double>> tabs;
    std::map<std::pair<int, long long>, double> zero_disp;  // loop-edge constants

    static long long key_bits(double dt) {
        long long b;
        static_assert(sizeof(b) == sizeof(dt));
        std::memcpy(&b, &dt, sizeof(b));
        return b;
    }

    const std::vector<double>& table(int sigma, double sa, double sb) {
        const double dt = cfg->classical() ? 0.0 : sa - sb;
        const auto key = std::make_pair(cfg->classical() ? 0 : sigma, key_bits(dt));
        auto it = tabs.find(key);
        if (it != tabs.end()) return it->second;
        DiagonalOperator op = edge_operator(*cfg, sigma, sa, sb);
        std::vector<double> tab = displacement_table(*geom, op.basis->modes, op.values);
        return tabs.emplace(key, std::move(tab)).first->second;
    }

    double loop_value(int sigma, double sa, double sb) {
        const double dt = cfg->classical() ? 0.0 : sa - sb;
        const auto key = std::make_pair(cfg->classical() ? 0 : sigma, key_bits(dt));
        auto it = zero_disp.find(key);
        if (it != zero_disp.end()) return it->second;
        DiagonalOperator op = edge_operator(*cfg, sigma, sa, sb);
        double acc = 0.0;
        for (double v : op.values) acc += v;
        zero_disp.emplace(key, acc);
        return acc;
    }
};

struct Prep {
    VertexSet vs;
    std::vector<Pairing> pairings;
    CollapseVariant variant = CollapseVariant::standard;
    // graphs cached only when the enumeration is small; large classical runs
    // collapse on the fly to keep memory flat
    bool cached = false;
    std::vector<CollapsedGraph> graphs;
};

constexpr size_t kGraphCacheLimit = 10000;

// Fills in place: the cached graphs point back at p.vs, so p must already sit
// at its final address.
void prepare(const ExpansionConfig& cfg, int m, const Observable& xi, Prep& p) {
    p.vs = build_vertex_set(m, xi.p, ordering_for(cfg.pairing_class));
    p.pairings = enumerate_pairings(p.vs, cfg.pairing_class, cfg.caps);
    p.variant = (xi.identity && xi.p > 0) ? CollapseVariant::identity_observable
                                          : CollapseVariant::standard;
    p.cached = false;
    p.graphs.clear();
    if (p.pairings.size() <= kGraphCacheLimit) {
        p.cached = true;
        p.graphs.reserve(p.pairings.size());
        for (const Pairing& pi : p.pairings) p.graphs.push_back(collapse(p.vs, pi, p.variant));
    }
}

// Class ids are assigned by first vertex occurrence, which depends only on
// (m, p, ordering, variant): interaction classes 0..2m-1, then observable
// classes.  Pairings therefore share one variable layout.
std::vector<int> open_classes(const CollapsedGraph& g, int m, int p) {
    std::vector<int> open;
    if (g.variant == CollapseVariant::identity_observable) return open;
    for (int delta : {+1, -1})
        for (int r = 1; r <= p; ++r) {
            int found = -1;
            for (size_t c = 0; c < g.classes.size(); ++c)
                if (g.classes[c].i == m + 1 && g.classes[c].r == r && g.classes[c].delta == delta)
                    found = static_cast<int>(c);
            if (found < 0) throw InvariantError("expansion: observable class missing");
            open.push_back(found);
        }
    if (!std::is_sorted(open.begin(), open.end()))
        throw InvariantError("expansion: observable classes out of order");
    return open;
}

// Real tensor over the open observable classes of one pairing; all closed
// variables integrated out.  wtab is the displacement table of w.
Factor pairing_tensor(const CollapsedGraph& g, int m,
                      const std::vector<double>& times, const GridGeom& geom,
                      const std::vector<double>& wtab, EdgeTableCache& cache,
                      const std::vector<int>& open) {
    std::vector<double> ctime(g.classes.size(), 0.0);
    for (size_t c = 0; c < g.classes.size(); ++c)
        ctime[c] = class_time(g.classes[c], m, times);

    std::vector<Factor> factors;
    double scalar = 1.0;

    // constant w (Kw = 0) contributes a scalar per density pair
    bool wconst = true;
    for (double v : wtab)
        if (v != wtab[0]) {
            wconst = false;
            break;
        }

    std::vector<int> slot(static_cast<size_t>(2) * std::max(m, 0), -1);
    for (size_t c = 0; c < g.classes.size(); ++c)
        if (g.classes[c].i <= m) slot[static_cast<size_t>(g.classes[c].i - 1) * 2 + (g.classes[c].r - 1)] = static_cast<int>(c);

    for (int i = 1; i <= m; ++i) {
        const int c1 = slot[static_cast<size_t>(i - 1) * 2];
        const int c2 = slot[static_cast<size_t>(i - 1) * 2 + 1];
        if (c1 < 0 || c2 < 0) throw InvariantError("expansion: density classes missing");
        if (wconst) {
            scalar *= wtab[0];
            continue;
        }
        Factor f;
        f.vars = {std::min(c1, c2), std::max(c1, c2)};
        f.data.resize(static_cast<size_t>(geom.G) * geom.G);
        for (int x = 0; x < geom.G; ++x)
            for (int y = 0; y < geom.G; ++y)
                f.data[static_cast<size_t>(x) * geom.G + y] =
                    wtab[geom.disp[static_cast<size_t>(x) * geom.G + y]];
        factors.push_back(std::move(f));
    }

    for (const CollapsedEdge& e : g.edges) {
        const int ca = g.class_of_vertex(e.alpha);
        const int cb = g.class_of_vertex(e.beta);
        if (ca == cb) {
            scalar *= cache.loop_value(e.sigma, ctime[ca], ctime[cb]);
            continue;
        }
        const std::vector<double>& tab = cache.table(e.sigma, ctime[ca], ctime[cb]);
        Factor f;
        f.vars = {std::min(ca, cb), std::max(ca, cb)};
        f.data.resize(static_cast<size_t>(geom.G) * geom.G);
        for (int x = 0; x < geom.G; ++x)
            for (int y = 0; y < geom.G; ++y)
                f.data[static_cast<size_t>(x) * geom.G + y] =
                    tab[geom.disp[static_cast<size_t>(x) * geom.G + y]];
        factors.push_back(std::move(f));
    }

    return contract_net(geom.G, std::move(factors), scalar, open, 50'000'000);
}

// Phase sum over the open legs: value = G^{-2p} sum_x T(x) prod_j u_{k_j}(x_j)
// prod_j conj(u_{l_j}(y_j)).  Axes are [+ legs r = 1..p, then - legs].
std::complex<double> dyad_sum(const Factor& T, const RankOneTerm& term, const GridGeom& geom,
                              int p) {
    const int legs = 2 * p;
    std::vector<std::vector<std::complex<double>>> ph(legs);
    const double step = 2.0 * std::numbers::pi / geom.N;
    for (int j = 0; j < legs; ++j) {
        const Mode& mode = j < p ? term.ks[j] : term.ls[j - p];
        const double sgn = j < p ? 1.0 : -1.0;
        ph[j].resize(geom.G);
        for (int x = 0; x < geom.G; ++x) {
            double phase = 0.0;
            for (int dim = 0; dim < geom.d; ++dim) phase += mode[dim] * geom.coords[x][dim];
            ph[j][x] = std::polar(1.0, sgn * step * phase);
        }
    }
    std::complex<double> acc = 0.0;
    std::vector<int> digit(legs, 0);
    for (size_t flat = 0; flat < T.data.size(); ++flat) {
        std::complex<double> v = T.data[flat];
        for (int j = 0; j < legs; ++j) v *= ph[j][digit[j]];
        acc += v;
        for (int j = legs - 1; j >= 0; --j) {
            if (++digit[j] < geom.G) break;
            digit[j] = 0;
        }
    }
    double weight = 1.0;
    for (int j = 0; j < legs; ++j) weight /= geom.G;
    return acc * weight;
}

double apply_observable(const Factor& T, const Observable& xi, const GridGeom& geom) {
    if (xi.p == 0 || xi.identity) {
        if (!T.vars.empty()) throw InvariantError("expansion: scalar tensor expected");
        return T.data[0];
    }
    std::complex<double> val = 0.0;
    for (const RankOneTerm& term : xi.terms) val += term.c * dyad_sum(T, term, geom, xi.p);
    if (std::abs(val.imag()) > 1e-9 * std::max(1.0, std::abs(val.real())))
        throw InvariantError("expansion: pairing value has a nonvanishing imaginary part");
    return val.real();
}

void check_observable(const ExpansionConfig& cfg, const Observable& xi) {
    if (xi.p < 0) throw ParameterError("observable: p must be >= 0");
    if (xi.p == 0 || xi.identity) return;
    if (xi.terms.empty()) throw ParameterError("observable: no kernel terms");
    for (const RankOneTerm& t : xi.terms) {
        if (static_cast<int>(t.ks.size()) != xi.p || static_cast<int>(t.ls.size()) != xi.p)
            throw ParameterError("observable: term arity does not match p");
        for (const Mode& n : t.ks)
            if (cfg.basis.index_of(n) < 0) throw ParameterError("observable: creation mode outside the basis");
        for (const Mode& n : t.ls)
            if (cfg.basis.index_of(n) < 0)
                throw ParameterError("observable: annihilation mode outside the basis");
    }
}

void check_times(const ExpansionConfig& cfg, int m, const std::vector<double>& times) {
    if (cfg.classical()) return;
    if (static_cast<int>(times.size()) != m)
        throw ParameterError("expansion: expected one time per interaction order");
    double prev = 1.0 - cfg.eta + kTimeSlack;
    for (double t : times) {
        if (!(t >= cfg.eta - kTimeSlack && t <= prev))
            throw ParameterError("expansion: times violate the simplex ordering");
        prev = t + kTimeSlack;
    }
}

std::vector<double> effective_times(const ExpansionConfig& cfg, int m,
                                    const std::vector<double>& times) {
    if (!cfg.classical()) return times;
    return std::vector<double>(static_cast<size_t>(m), 0.0);
}

int grid_for(const ExpansionConfig& cfg, int m, int p) {
    const int need = required_grid(cfg, m, p);
    if (cfg.grid_size == 0) return need;
    if (cfg.grid_size < need) {
        std::ostringstream os;
        os << "expansion: grid N = " << cfg.grid_size
           << " cannot integrate the trigonometric degree at (m, p) = (" << m << ", " << p
           << "); requires N >= " << need;
        throw ParameterError(os.str());
    }
    return cfg.grid_size;
}

// Fixed-size chunks summed in index order: the reduction is independent of
// the thread count.
double chunked_sum(size_t n, int threads, const std::function<double(size_t)>& term) {
    constexpr size_t kChunk = 256;
    const size_t nch = (n + kChunk - 1) / kChunk;
    std::vector<double> partial(nch, 0.0);
    auto run_chunk = [&](size_t c) {
        double acc = 0.0;
        const size_t hi = std::min(n, (c + 1) * kChunk);
        for (size_t i = c * kChunk; i < hi; ++i) acc += term(i);
        partial[c] = acc;
    };
    if (threads <= 1 || nch <= 1) {
        for (size_t c = 0; c < nch; ++c) run_chunk(c);
    } else {
        const int T = std::min<size_t>(threads, nch);
        std::vector<std::future<void>> workers;
        for (int w = 0; w < T; ++w)
            workers.push_back(std::async(std::launch::async, [&, w]() {
                for (size_t c = static_cast<size_t>(w); c < nch; c += T) run_chunk(c);
            }));
        for (auto& f : workers) f.get();
    }
    double total = 0.0;
    for (double v : partial) total += v;
    return total;
}

// Shared f evaluation over prepared pairings at one node.
double f_at(const ExpansionConfig& cfg, const Prep& prep, int m, const Observable& xi,
            const std::vector<double>& times, const GridGeom& geom,
            const std::vector<double>& wtab) {
    EdgeTableCache cache{&cfg, &geom, {}, {}};
    // warm the cache serially so the parallel section only reads it
    std::set<std::pair<int, long long>> seen;
    auto warm = [&](const CollapsedGraph& g) {
        std::vector<double> ctime(g.classes.size(), 0.0);
        for (size_t c = 0; c < g.classes.size(); ++c) ctime[c] = class_time(g.classes[c], m, times);
        for (const CollapsedEdge& e : g.edges) {
            const int ca = g.class_of_vertex(e.alpha);
            const int cb = g.class_of_vertex(e.beta);
            if (ca == cb)
                cache.loop_value(e.sigma, ctime[ca], ctime[cb]);
            else
                cache.table(e.sigma, ctime[ca], ctime[cb]);
        }
    };
    if (prep.cached)
        for (const CollapsedGraph& g : prep.graphs) warm(g);

    auto one = [&](size_t idx) {
        if (prep.cached) {
            const CollapsedGraph& g = prep.graphs[idx];
            const std::vector<int> open = open_classes(g, m, xi.p);
            return apply_observable(pairing_tensor(g, m, times, geom, wtab, cache, open),
                                    xi, geom);
        }
        CollapsedGraph g = collapse(prep.vs, prep.pairings[idx], prep.variant);
        const std::vector<int> open = open_classes(g, m, xi.p);
        return apply_observable(pairing_tensor(g, m, times, geom, wtab, cache, open), xi,
                                geom);
    };
    const int threads = prep.cached ? cfg.threads : 1;
    return chunked_sum(prep.pairings.size(), threads, one);
}

std::vector<double> make_wtab(const ExpansionConfig& cfg, const GridGeom& geom) {
    std::vector<Mode> modes;
    std::vector<double> vals;
    interaction_modes(cfg.w, modes, vals);
    return displacement_table(geom, modes, vals);
}

double series_prefactor(const ExpansionConfig& cfg, int m) {
    const double sign = (m % 2 == 0) ? 1.0 : -1.0;
    if (cfg.classical()) return sign / (std::tgamma(m + 1.0) * std::pow(2.0, m));
    return sign / (std::pow(1.0 - 2.0 * cfg.eta, m) * std::pow(2.0, m));
}

}  // namespace

Observable Observable::unit() {
    Observable o;
    o.p = 0;
    o.normalized = true;
    return o;
}

Observable Observable::identity_kernel(int p) {
    if (p < 1) throw ParameterError("observable: identity kernel needs p >= 1");
    Observable o;
    o.p = p;
    o.identity = true;
    o.normalized = false;
    return o;
}

Observable Observable::rank_one(const Mode& k, const Mode& l) {
    Observable o;
    o.p = 1;
    o.terms.push_back({1.0, {k}, {l}});
    o.normalized = true;
    return o;
}

Observable Observable::rank_one_pair(const Mode& k1, const Mode& k2, const Mode& l1,
                                     const Mode& l2) {
    Observable o;
    o.p = 2;
    o.terms.push_back({1.0, {k1, k2}, {l1, l2}});
    o.normalized = true;
    return o;
}

bool Observable::self_adjoint() const {
    if (p == 0 || identity) return true;
    for (const RankOneTerm& t : terms) {
        bool matched = false;
        for (const RankOneTerm& s : terms)
            if (s.ks == t.ls && s.ls == t.ks && std::abs(s.c - t.c) <= 1e-14 * std::abs(t.c)) {
                matched = true;
                break;
            }
        if (!matched) return false;
    }
    return true;
}

double Observable::s2_norm() const {
    if (identity) throw ParameterError("observable: identity kernel has no finite S2 norm");
    if (p == 0) return 1.0;
    double acc = 0.0;
    for (const RankOneTerm& t : terms) acc += t.c * t.c;
    return std::sqrt(acc);
}

void validate_config(const ExpansionConfig& cfg) {
    if (cfg.basis.num_modes() <= 0) throw ParameterError("expansion: empty basis");
    if (!(cfg.tau > 0.0) && !std::isinf(cfg.tau))
        throw ParameterError("expansion: tau must be positive or infinite");
    if (!(cfg.eta >= 0.0 && cfg.eta <= 0.25)) throw ParameterError("expansion: eta must lie in [0, 1/4]");
    if (cfg.w.d != cfg.basis.d) throw ParameterError("expansion: interaction dimension mismatch");
    if (cfg.quad_order < 2) throw ParameterError("expansion: quadrature order must be >= 2");
    if (cfg.grid_size < 0) throw ParameterError("expansion: grid size must be >= 0");
    if (cfg.threads < 1) throw ParameterError("expansion: threads must be >= 1");

    std::vector<Mode> modes;
    std::vector<double> vals;
    interaction_modes(cfg.w, modes, vals);
    for (size_t i = 0; i < modes.size(); ++i) {
        const Mode neg{-modes[i][0], -modes[i][1], -modes[i][2]};
        if (std::abs(cfg.w.at(neg) - vals[i]) > 1e-14 * std::max(1.0, std::abs(vals[i])))
            throw ParameterError("expansion: interaction coefficients are not even");
    }

    if (cfg.regime == InteractionRegime::positive_type) {
        if (cfg.w.any_negative())
            throw ParameterError("expansion: positive-type regime needs nonnegative coefficients");
    } else {
        if (cfg.basis.d != 1)
            throw ParameterError("expansion: the pointwise regime is one-dimensional");
        const int Ns = 8 * (cfg.w.Kw + 1);
        double mn = 0.0, mx = 0.0;
        for (int j = 0; j < Ns; ++j) {
            double v = 0.0;
            for (size_t i = 0; i < modes.size(); ++i)
                v += vals[i] * std::cos(2.0 * std::numbers::pi * modes[i][0] * j / Ns);
            mn = std::min(mn, v);
            mx = std::max(mx, std::abs(v));
        }
        if (mn < -1e-12 * std::max(1.0, mx))
            throw ParameterError("expansion: pointwise regime needs w >= 0 on the torus");
    }
}

VertexOrdering ordering_for(PairingClass cls) {
    return cls == PairingClass::P ? VertexOrdering::renormalized : VertexOrdering::lex1d;
}

DiagonalOperator edge_operator(const ExpansionConfig& cfg, int sigma, double s_a, double s_b) {
    if (sigma != 1 && sigma != -1) throw ParameterError("edge_operator: sigma must be +-1");
    if (cfg.classical()) return green_classical(cfg.basis);
    double dt = s_a - s_b;
    if (dt < -kTimeSlack)
        throw InvariantError("edge_operator: later endpoint carries the larger time");
    dt = std::max(dt, 0.0);
    if (sigma * dt <= -1.0 + kTimeSlack)
        throw InvariantError("edge_operator: time difference leaves the Green domain");
    DiagonalOperator op = green_quantum(cfg.basis, cfg.tau, sigma * dt);
    if (sigma == 1) {
        const DiagonalOperator s = semigroup(cfg.basis, cfg.tau, dt);
        for (size_t i = 0; i < op.values.size(); ++i) op.values[i] += s.values[i] / cfg.tau;
        op.tag = "edge(+1)";
    } else {
        op.tag = "edge(-1)";
    }
    return op;
}

KernelGrid edge_kernel(const ExpansionConfig& cfg, const CollapsedGraph& g, int edge_index,
                       const std::vector<double>& times) {
    if (edge_index < 0 || edge_index >= static_cast<int>(g.edges.size()))
        throw ParameterError("edge_kernel: edge index out of range");
    const int m = g.vs->m;
    check_times(cfg, m, times);
    const std::vector<double> t = effective_times(cfg, m, times);
    const CollapsedEdge& e = g.edges[edge_index];
    const double sa = class_time(g.classes[g.class_of_vertex(e.alpha)], m, t);
    const double sb = class_time(g.classes[g.class_of_vertex(e.beta)], m, t);
    const DiagonalOperator op = edge_operator(cfg, e.sigma, sa, sb);
    const int N = cfg.grid_size > 0 ? cfg.grid_size : 2 * (2 * cfg.basis.K + 1);
    return kernel(op, N);
}

int required_grid(const ExpansionConfig& cfg, int m, int p) {
    const int K = cfg.basis.K;
    const int Kw = cfg.w.Kw;
    int budget = 0;  // m = 0, p = 0: constant integrand
    if (m > 0) budget = std::max(budget, 2 * K + Kw);
    if (p > 0) budget = std::max(budget, 2 * K);
    return budget + 1;
}

double pairing_value(const ExpansionConfig& cfg, int m, const Pairing& pi, const Observable& xi,
                     const std::vector<double>& times) {
    validate_config(cfg);
    check_observable(cfg, xi);
    if (m < 0) throw ParameterError("pairing_value: m must be >= 0");
    if (static_cast<int>(pi.edges.size()) * 2 != 4 * m + 2 * xi.p)
        throw ParameterError("pairing_value: pairing size does not match (m, p)");
    check_times(cfg, m, times);
    const std::vector<double> t = effective_times(cfg, m, times);

    const VertexSet vs = build_vertex_set(m, xi.p, ordering_for(cfg.pairing_class));
    const CollapseVariant variant = (xi.identity && xi.p > 0)
                                        ? CollapseVariant::identity_observable
                                        : CollapseVariant::standard;
    const CollapsedGraph g = collapse(vs, pi, variant);

    const GridGeom geom = make_geom(cfg.basis.d, grid_for(cfg, m, xi.p));
    const std::vector<double> wtab = make_wtab(cfg, geom);
    EdgeTableCache cache{&cfg, &geom, {}, {}};
    const std::vector<int> open = open_classes(g, m, xi.p);
    return apply_observable(pairing_tensor(g, m, t, geom, wtab, cache, open), xi, geom);
}

double f_value(const ExpansionConfig& cfg, int m, const Observable& xi,
               const std::vector<double>& times) {
    validate_config(cfg);
    check_observable(cfg, xi);
    if (m < 0) throw ParameterError("f_value: m must be >= 0");
    check_times(cfg, m, times);
    const std::vector<double> t = effective_times(cfg, m, times);
    Prep prep;
    prepare(cfg, m, xi, prep);
    const GridGeom geom = make_geom(cfg.basis.d, grid_for(cfg, m, xi.p));
    const std::vector<double> wtab = make_wtab(cfg, geom);
    return f_at(cfg, prep, m, xi, t, geom, wtab);
}

double coefficient(const ExpansionConfig& cfg, int m, const Observable& xi) {
    validate_config(cfg);
    check_observable(cfg, xi);
    if (m < 0) throw ParameterError("coefficient: m must be >= 0");
    Prep prep;
    prepare(cfg, m, xi, prep);
    const GridGeom geom = make_geom(cfg.basis.d, grid_for(cfg, m, xi.p));
    const std::vector<double> wtab = make_wtab(cfg, geom);
    const double pref = series_prefactor(cfg, m);

    if (cfg.classical() || m == 0) {
        const std::vector<double> t(static_cast<size_t>(m), 0.0);
        return pref * f_at(cfg, prep, m, xi, t, geom, wtab);
    }

    auto integral = [&](int order) {
        const SimplexRule rule = simplex_rule(m, cfg.eta, order);
        double acc = 0.0;
        for (size_t q = 0; q < rule.nodes.size(); ++q)
            acc += rule.weights[q] * f_at(cfg, prep, m, xi, rule.nodes[q], geom, wtab);
        return acc;
    };

    const double base = integral(std::max(2, cfg.quad_order / 2));
    const double fine = integral(cfg.quad_order);
    if (std::abs(fine - base) <= cfg.quad_tol * std::max(1.0, std::abs(fine))) return pref * fine;
    const double finer = integral(2 * cfg.quad_order);
    if (std::abs(finer - fine) <= cfg.quad_tol * std::max(1.0, std::abs(finer)))
        return pref * finer;
    std::ostringstream os;
    os << "coefficient: quadrature did not converge at order " << 2 * cfg.quad_order
       << "; order " << cfg.quad_order << " gave " << fine << ", order " << 2 * cfg.quad_order
       << " gave " << finer;
    throw ResourceError(os.str());
}

void fit_growth(CoefficientSeries& s) {
    const int M = s.size();
    if (M == 0) throw ParameterError("fit_growth: empty series");
    std::vector<double> r(M);
    double rmax = 0.0;
    for (int m = 0; m < M; ++m) {
        r[m] = std::abs(s.values[m]) / std::tgamma(m + 1.0);
        rmax = std::max(rmax, r[m]);
    }
    if (rmax == 0.0) {
        s.nu = 0.0;
        s.sigma = 0.0;
        return;
    }
    const double nu0 = std::max(r[0], 1e-12 * rmax);
    double sigma = 0.0;
    for (int m = 1; m < M; ++m)
        if (r[m] > 0.0) sigma = std::max(sigma, std::pow(r[m] / nu0, 1.0 / m));
    double nu = 0.0;
    for (int m = 0; m < M; ++m) {
        const double denom = (m == 0) ? 1.0 : std::pow(sigma, m);
        if (denom > 0.0) nu = std::max(nu, r[m] / denom);
    }
    if (sigma == 0.0) nu = r[0];
    s.nu = nu;
    s.sigma = sigma;
}

CoefficientSeries coefficient_series(const ExpansionConfig& cfg, int M, const Observable& xi) {
    if (M < 1) throw ParameterError("coefficient_series: M must be >= 1");
    if (M - 1 > cfg.caps.max_m)
        throw ResourceError("coefficient_series: M exceeds the enumeration cap");
    CoefficientSeries s;
    s.classical = cfg.classical();
    s.tau = cfg.tau;
    s.eta = cfg.eta;
    s.values.resize(M);
    for (int m = 0; m < M; ++m) s.values[m] = coefficient(cfg, m, xi);
    fit_growth(s);
    return s;
}

double CorrelationKernel::at2(int k1, int k2, int l1, int l2) const {
    const int n = num_modes;
    const size_t row = static_cast<size_t>(k1) * n + k2;
    const size_t col = static_cast<size_t>(l1) * n + l2;
    return entries[row * n * n + col];
}

CorrelationKernel correlation_kernel(const ExpansionConfig& cfg, int p, int M,
                                     const SeriesEvaluator& resum) {
    validate_config(cfg);
    if (p != 1 && p != 2) throw ParameterError("correlation_kernel: p must be 1 or 2");
    if (M < 1) throw ParameterError("correlation_kernel: M must be >= 1");
    if (!resum) throw ParameterError("correlation_kernel: missing series evaluator");

    const int n = cfg.basis.num_modes();
    const size_t side = static_cast<size_t>(ipow(n, p));
    const size_t total = side * side;

    // entry (k; l) of the m-th coefficient, for all entries at once
    std::vector<std::vector<std::complex<double>>> A(
        static_cast<size_t>(M), std::vector<std::complex<double>>(total, 0.0));

    const GridGeom geom = make_geom(cfg.basis.d, [&] {
        // every entry shares one grid: phases reach up to K
        int best = 0;
        for (int m = 0; m < M; ++m) best = std::max(best, grid_for(cfg, m, p));
        return best;
    }());
    const std::vector<double> wtab = make_wtab(cfg, geom);

    // phase matrix u_k(x) per basis mode
    std::vector<std::vector<std::complex<double>>> ph(
        static_cast<size_t>(n), std::vector<std::complex<double>>(geom.G));
    const double step = 2.0 * std::numbers::pi / geom.N;
    for (int k = 0; k < n; ++k)
        for (int x = 0; x < geom.G; ++x) {
            double phase = 0.0;
            for (int dim = 0; dim < geom.d; ++dim)
                phase += cfg.basis.modes[k][dim] * geom.coords[x][dim];
            ph[k][x] = std::polar(1.0, step * phase);
        }

    Observable probe = Observable::rank_one(cfg.basis.modes[0], cfg.basis.modes[0]);
    probe.p = p;  // leg layout only; terms unused below

    auto tensor_to_entries = [&](const Factor& T, std::vector<std::complex<double>>& out) {
        // out(k; l) += G^{-2p} sum_x T(x) prod u_{k_j}(x_j) conj(u_{l_j}(y_j))
        double weight = 1.0;
        for (int j = 0; j < 2 * p; ++j) weight /= geom.G;
        std::vector<int> legs(2 * p, 0);   // mode index per leg
        std::vector<int> digit(2 * p, 0);  // grid digit per leg
        const size_t nm = static_cast<size_t>(ipow(n, 2 * p));
        for (size_t e = 0; e < nm; ++e) {
            std::complex<double> acc = 0.0;
            std::fill(digit.begin(), digit.end(), 0);
            for (size_t flat = 0; flat < T.data.size(); ++flat) {
                std::complex<double> v = T.data[flat];
                for (int j = 0; j < p; ++j) v *= ph[legs[j]][digit[j]];
                for (int j = p; j < 2 * p; ++j) v *= std::conj(ph[legs[j]][digit[j]]);
                acc += v;
                for (int j = 2 * p - 1; j >= 0; --j) {
                    if (++digit[j] < geom.G) break;
                    digit[j] = 0;
                }
            }
            // legs = (k_1..k_p, l_1..l_p) -> row-major (k; l)
            size_t row = 0, col = 0;
            for (int j = 0; j < p; ++j) row = row * n + legs[j];
            for (int j = p; j < 2 * p; ++j) col = col * n + legs[j];
            out[row * side + col] += acc * weight;
            for (int j = 2 * p - 1; j >= 0; --j) {
                if (++legs[j] < n) break;
                legs[j] = 0;
            }
        }
    };

    for (int m = 0; m < M; ++m) {
        Prep prep;
        prepare(cfg, m, probe, prep);
        const double pref = series_prefactor(cfg, m);

        auto summed_tensor = [&](const std::vector<double>& t) {
            EdgeTableCache cache{&cfg, &geom, {}, {}};
            Factor sum;
            bool first = true;
            for (size_t idx = 0; idx < prep.pairings.size(); ++idx) {
                const CollapsedGraph* gp;
                CollapsedGraph local;
                if (prep.cached) {
                    gp = &prep.graphs[idx];
                } else {
                    local = collapse(prep.vs, prep.pairings[idx], prep.variant);
                    gp = &local;
                }
                const std::vector<int> open = open_classes(*gp, m, p);
                Factor T = pairing_tensor(*gp, m, t, geom, wtab, cache, open);
                if (first) {
                    sum = std::move(T);
                    first = false;
                } else {
                    if (sum.vars != T.vars) throw InvariantError("correlation_kernel: leg mismatch");
                    for (size_t i = 0; i < sum.data.size(); ++i) sum.data[i] += T.data[i];
                }
            }
            return sum;
        };

        auto matrix_at_order = [&](int order) {
            std::vector<std::complex<double>> out(total, 0.0);
            if (cfg.classical() || m == 0) {
                const std::vector<double> t(static_cast<size_t>(m), 0.0);
                tensor_to_entries(summed_tensor(t), out);
                for (auto& v : out) v *= pref;
                return out;
            }
            const SimplexRule rule = simplex_rule(m, cfg.eta, order);
            for (size_t q = 0; q < rule.nodes.size(); ++q) {
                Factor T = summed_tensor(rule.nodes[q]);
                for (double& v : T.data) v *= rule.weights[q];
                tensor_to_entries(T, out);
            }
            for (auto& v : out) v *= pref;
            return out;
        };

        auto max_gap = [&](const std::vector<std::complex<double>>& a,
                           const std::vector<std::complex<double>>& b) {
            double g = 0.0, scale = 1.0;
            for (size_t i = 0; i < a.size(); ++i) {
                g = std::max(g, std::abs(a[i] - b[i]));
                scale = std::max(scale, std::abs(a[i]));
            }
            return std::make_pair(g, scale);
        };

        if (cfg.classical() || m == 0) {
            A[m] = matrix_at_order(cfg.quad_order);
        } else {
            const auto base = matrix_at_order(std::max(2, cfg.quad_order / 2));
            auto fine = matrix_at_order(cfg.quad_order);
            auto [gap, scale] = max_gap(fine, base);
            if (gap <= cfg.quad_tol * scale) {
                A[m] = std::move(fine);
            } else {
                auto finer = matrix_at_order(2 * cfg.quad_order);
                auto [gap2, scale2] = max_gap(finer, fine);
                if (gap2 > cfg.quad_tol * scale2)
                    throw ResourceError("correlation_kernel: quadrature did not converge");
                A[m] = std::move(finer);
            }
        }
    }

    const CoefficientSeries den = coefficient_series(cfg, M, Observable::unit());
    const double denom = resum(den);
    if (std::abs(denom) < 1e-10)
        throw InvariantError("correlation_kernel: degenerate state, |A(1)| < 1e-10");

    CorrelationKernel out;
    out.p = p;
    out.num_modes = n;
    out.classical = cfg.classical();
    out.tau = cfg.tau;
    out.eta = cfg.eta;
    out.entries.assign(total, 0.0);

    double imag_max = 0.0;
    std::vector<double> raw(total, 0.0);
    for (size_t e = 0; e < total; ++e) {
        CoefficientSeries se;
        se.classical = cfg.classical();
        se.tau = cfg.tau;
        se.eta = cfg.eta;
        se.values.resize(M);
        for (int m = 0; m < M; ++m) {
            se.values[m] = A[m][e].real();
            imag_max = std::max(imag_max, std::abs(A[m][e].imag()));
        }
        fit_growth(se);
        raw[e] = resum(se) / denom;
    }
    double asym = 0.0;
    for (size_t row = 0; row < side; ++row)
        for (size_t col = 0; col < side; ++col) {
            const double a = raw[row * side + col];
            const double b = raw[col * side + row];
            out.entries[row * side + col] = 0.5 * (a + b);
            asym = std::max(asym, std::abs(a - b) / 2.0);
        }
    out.hermiticity_deviation = asym + imag_max;
    return out;
}

}  // namespace gibbslab
