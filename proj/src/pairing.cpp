#include "gibbslab/pairing.hpp"

#include <algorithm>
#include <cmath>

namespace gibbslab {

VertexSet build_vertex_set(int m, int p, VertexOrdering ordering) {
    if (m < 0 || p < 0) throw ParameterError("build_vertex_set: m and p must be >= 0");
    VertexSet vs;
    vs.m = m;
    vs.p = p;
    vs.ordering = ordering;
    vs.vertices.reserve(4 * m + 2 * p);
    for (int i = 1; i <= m; ++i) {
        if (ordering == VertexOrdering::renormalized) {
            vs.vertices.push_back({i, 1, +1});
            vs.vertices.push_back({i, 1, -1});
            vs.vertices.push_back({i, 2, +1});
            vs.vertices.push_back({i, 2, -1});
        } else {
            vs.vertices.push_back({i, 1, +1});
            vs.vertices.push_back({i, 2, +1});
            vs.vertices.push_back({i, 1, -1});
            vs.vertices.push_back({i, 2, -1});
        }
    }
    for (int r = 1; r <= p; ++r) vs.vertices.push_back({m + 1, r, +1});
    for (int r = 1; r <= p; ++r) vs.vertices.push_back({m + 1, r, -1});
    return vs;
}

namespace {

bool admissible_pair(const VertexSet& vs, int a, int b, PairingClass cls) {
    const Vertex& va = vs.vertices[a];
    const Vertex& vb = vs.vertices[b];
    if (va.delta * vb.delta != -1) return false;
    if (cls == PairingClass::P && va.i == vb.i && va.i <= vs.m && va.r == vb.r) return false;
    return true;
}

void backtrack(const VertexSet& vs, PairingClass cls, std::vector<int>& match,
               std::vector<std::pair<int, int>>& acc, std::vector<Pairing>& out) {
    const int n = vs.size();
    int a = 0;
    while (a < n && match[a] >= 0) ++a;
    if (a == n) {
        out.push_back(Pairing{acc});
        return;
    }
    // prune: unmatched creation and annihilation counts must balance
    int plus = 0, minus = 0;
    for (int v = a; v < n; ++v) {
        if (match[v] >= 0) continue;
        (vs.vertices[v].delta > 0 ? plus : minus)++;
    }
    if (plus != minus) return;
    for (int b = a + 1; b < n; ++b) {
        if (match[b] >= 0 || !admissible_pair(vs, a, b, cls)) continue;
        match[a] = b;
        match[b] = a;
        acc.emplace_back(a, b);
        backtrack(vs, cls, match, acc, out);
        acc.pop_back();
        match[a] = match[b] = -1;
    }
}

}  // namespace

std::vector<Pairing> enumerate_pairings(const VertexSet& vs, PairingClass cls,
                                        const EnumerationCaps& caps) {
    if (vs.m > caps.max_m || vs.p > caps.max_p)
        throw ResourceError("enumerate_pairings: m = " + std::to_string(vs.m) +
                            ", p = " + std::to_string(vs.p) + " exceeds caps (m <= " +
                            std::to_string(caps.max_m) + ", p <= " + std::to_string(caps.max_p) +
                            ")");
    std::vector<Pairing> out;
    if (vs.size() % 2 != 0) return out;
    std::vector<int> match(vs.size(), -1);
    std::vector<std::pair<int, int>> acc;
    backtrack(vs, cls, match, acc, out);
    return out;
}

int CollapsedGraph::class_of_vertex(int position) const {
    const Vertex& v = vs->vertices[position];
    for (size_t c = 0; c < classes.size(); ++c) {
        const CollapsedClass& cc = classes[c];
        if (cc.i != v.i || cc.r != v.r) continue;
        if (cc.delta == 0 || cc.delta == v.delta) return static_cast<int>(c);
    }
    throw InvariantError("collapse: vertex has no class");
}

CollapsedGraph collapse(const VertexSet& vs, const Pairing& pi, CollapseVariant variant) {
    CollapsedGraph g;
    g.vs = &vs;
    g.variant = variant;
    // classes in inherited order: first occurrence of (i, r[, delta]) wins
    for (const Vertex& v : vs.vertices) {
        const bool merged = v.i <= vs.m || variant == CollapseVariant::identity_observable;
        const int want_delta = merged ? 0 : v.delta;
        bool seen = false;
        for (const CollapsedClass& c : g.classes)
            if (c.i == v.i && c.r == v.r && c.delta == want_delta) seen = true;
        if (!seen) g.classes.push_back({v.i, v.r, want_delta});
    }
    for (const auto& [alpha, beta] : pi.edges) {
        CollapsedEdge e;
        e.alpha = alpha;
        e.beta = beta;
        e.sigma = vs.vertices[beta].delta;
        const int ca = g.class_of_vertex(alpha);
        const int cb = g.class_of_vertex(beta);
        e.a = std::min(ca, cb);
        e.b = std::max(ca, cb);
        g.edges.push_back(e);
    }

    // decompose into paths/cycles; every class has degree 1 or 2
    const int nc = static_cast<int>(g.classes.size());
    std::vector<std::vector<int>> incident(nc);
    for (size_t e = 0; e < g.edges.size(); ++e) {
        incident[g.edges[e].a].push_back(static_cast<int>(e));
        if (g.edges[e].b != g.edges[e].a) incident[g.edges[e].b].push_back(static_cast<int>(e));
    }
    std::vector<bool> edge_used(g.edges.size(), false);
    auto walk = [&](int start, int first_edge) {
        PathComponent comp;
        comp.vertex_seq.push_back(start);
        int cur = start, eidx = first_edge;
        for (;;) {
            edge_used[eidx] = true;
            comp.edge_seq.push_back(eidx);
            const CollapsedEdge& e = g.edges[eidx];
            cur = (e.a == cur) ? e.b : e.a;
            comp.vertex_seq.push_back(cur);
            int next = -1;
            for (int cand : incident[cur])
                if (!edge_used[cand]) next = cand;
            if (next < 0) break;
            eidx = next;
        }
        comp.closed = (comp.vertex_seq.front() == comp.vertex_seq.back()) &&
                      comp.edge_seq.size() > 0 &&
                      (comp.vertex_seq.size() > 2 || g.edges[comp.edge_seq[0]].a ==
                                                         g.edges[comp.edge_seq[0]].b);
        return comp;
    };
    // open paths first (degree-1 starts), then remaining cycles
    for (int c = 0; c < nc; ++c) {
        if (incident[c].size() == 1 && !edge_used[incident[c][0]])
            g.components.push_back(walk(c, incident[c][0]));
    }
    for (int c = 0; c < nc; ++c) {
        for (int eidx : incident[c])
            if (!edge_used[eidx]) g.components.push_back(walk(c, eidx));
    }
    return g;
}

double class_time(const CollapsedClass& c, int m, const std::vector<double>& times) {
    return c.i <= m ? times[c.i - 1] : 0.0;
}

double path_time_sum(const CollapsedGraph& g, const PathComponent& comp,
                     const std::vector<double>& times, double eta) {
    const int m = g.vs->m;
    if (static_cast<int>(times.size()) != m)
        throw ParameterError("path_time_sum: need exactly m times");
    double prev = 1.0 - eta;
    for (int k = 0; k < m; ++k) {
        if (!(times[k] >= eta && times[k] <= prev))
            throw ParameterError("path_time_sum: times violate the simplex ordering");
        prev = times[k];
    }
    if (comp.edge_seq.empty()) return 0.0;
    const double sig = g.edges[comp.edge_seq[0]].sigma;
    double acc = 0.0;
    for (size_t j = 0; j + 1 < comp.vertex_seq.size(); ++j) {
        const double sa = class_time(g.classes[comp.vertex_seq[j]], m, times);
        const double sb = class_time(g.classes[comp.vertex_seq[j + 1]], m, times);
        acc += sig * (sa - sb);
    }
    return acc;
}

std::string format_pairing(const VertexSet& vs, const Pairing& pi) {
    std::string line;
    for (size_t e = 0; e < pi.edges.size(); ++e) {
        const Vertex& a = vs.vertices[pi.edges[e].first];
        const Vertex& b = vs.vertices[pi.edges[e].second];
        if (e) line += ' ';
        line += "(" + std::to_string(a.i) + "," + std::to_string(a.r) + "," +
                (a.delta > 0 ? "+1" : "-1") + ")-(" + std::to_string(b.i) + "," +
                std::to_string(b.r) + "," + (b.delta > 0 ? "+1" : "-1") + ")";
    }
    return line;
}

}  // namespace gibbslab
