#pragma once

#include <string>
#include <vector>

#include "gibbslab/errors.hpp"

namespace gibbslab {

// Field label (i, r, delta): interaction slot i in 1..m with leg r in {1,2},
// observable slot i = m+1 with leg r in 1..p; delta = +1 marks a creation
// (conjugate) field, delta = -1 an annihilation field.
struct Vertex {
    int i = 0;
    int r = 0;
    int delta = 0;
};

// renormalized: per interaction (i,1,+1),(i,1,-1),(i,2,+1),(i,2,-1); all
//   observable +1 legs precede the -1 legs.
// lex1d: per interaction both +1 legs precede both -1 legs, matching the
//   creation-first operator order of the plain quartic; observable tail equal.
enum class VertexOrdering { renormalized, lex1d };

struct VertexSet {
    int m = 0;
    int p = 0;
    VertexOrdering ordering = VertexOrdering::renormalized;
    std::vector<Vertex> vertices;  // position in this list is the linear order

    int size() const { return static_cast<int>(vertices.size()); }
};

VertexSet build_vertex_set(int m, int p, VertexOrdering ordering);

// Class P: delta_a * delta_b = -1 and no pair joins the two fields of one
//   density factor (same (i, r) with i <= m); encodes the Wick-ordered
//   interaction whose self-contractions are subtracted.
// Class N: only delta_a * delta_b = -1; same-(i,r) pairs allowed, encoding
//   the plain (unrenormalized) quartic.
enum class PairingClass { P, N };

struct Pairing {
    std::vector<std::pair<int, int>> edges;  // positions (alpha, beta), alpha < beta
};

struct EnumerationCaps {
    int max_m = 8;
    int max_p = 2;
};

// Deterministic backtracking over the smallest unmatched vertex.  Pairings
// are labelled: no symmetry factors are applied here or downstream.
std::vector<Pairing> enumerate_pairings(const VertexSet& vs, PairingClass cls,
                                        const EnumerationCaps& caps = {});

// standard: the two fields of each density factor (i <= m) merge into one
//   position class; observable fields stay singletons (the open-path ends).
// identity_observable: observable legs (m+1, r, +1) and (m+1, r, -1) merge
//   too, so every class has degree 2 and all components close up.
enum class CollapseVariant { standard, identity_observable };

struct CollapsedEdge {
    int a = 0;      // class indices, ordered a <= b by inherited order
    int b = 0;
    int sigma = 0;  // delta of the later endpoint of the generating pair
    int alpha = 0;  // generating vertex positions, alpha < beta
    int beta = 0;
};

struct CollapsedClass {
    int i = 0;
    int r = 0;
    int delta = 0;  // 0 for merged classes, +/-1 for observable singletons
};

struct PathComponent {
    std::vector<int> vertex_seq;  // class walk; closed paths repeat the start
    std::vector<int> edge_seq;    // edge index per step
    bool closed = false;
};

struct CollapsedGraph {
    const VertexSet* vs = nullptr;
    CollapseVariant variant = CollapseVariant::standard;
    std::vector<CollapsedClass> classes;
    std::vector<CollapsedEdge> edges;
    std::vector<PathComponent> components;

    int class_of_vertex(int position) const;
};

CollapsedGraph collapse(const VertexSet& vs, const Pairing& pi, CollapseVariant variant);

// Signed time increment sum sigma(e_1) * sum_j (s_{a_j} - s_{a_{j+1}}) along
// one component; identically zero for closed paths and for open paths (both
// endpoints sit at time 0).  times = (t_1 >= ... >= t_m) from the simplex.
double path_time_sum(const CollapsedGraph& g, const PathComponent& comp,
                     const std::vector<double>& times, double eta = 0.0);

// Time coordinate of a class: t_i for i <= m, 0 for the observable slot.
double class_time(const CollapsedClass& c, int m, const std::vector<double>& times);

// One pairing per line, edges as "(i,r,+1)-(i,r,-1)" tokens separated by
// single spaces.
std::string format_pairing(const VertexSet& vs, const Pairing& pi);

}  // namespace gibbslab
