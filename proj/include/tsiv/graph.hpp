#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "tsiv/errors.hpp"
#include "tsiv/var_model.hpp"

namespace tsiv {

/// A node of a time graph: (component index, time index).
struct NodeId {
    int component = 0;
    int t = 0;
    friend bool operator==(const NodeId&, const NodeId&) = default;
    friend auto operator<=>(const NodeId& a, const NodeId& b) {
        if (a.t != b.t) return a.t <=> b.t;
        return a.component <=> b.component;
    }
};

using NodeSet = std::set<NodeId>;
using EdgeList = std::vector<std::pair<NodeId, NodeId>>;

namespace detail {

/// Mixed-graph view shared by TimeGraph and MarginalGraph queries.
/// A directed edge u -> v has a tail mark at u and an arrow mark at v;
/// a bidirected edge has arrow marks at both endpoints.
struct AdmgView {
    struct Half {
        int to;
        bool arrow_at_self;   // arrowhead pointing into the node the list belongs to
        bool arrow_at_other;  // arrowhead pointing into `to`
    };
    int n = 0;
    std::vector<std::vector<Half>> incident;
    std::vector<std::vector<int>> children;  // directed edges only
    std::vector<std::vector<int>> parents;

    void add_directed(int u, int v) {
        incident[u].push_back({v, false, true});
        incident[v].push_back({u, true, false});
        children[u].push_back(v);
        parents[v].push_back(u);
    }
    void add_bidirected(int u, int v) {
        incident[u].push_back({v, true, true});
        incident[v].push_back({u, true, true});
    }

    std::vector<bool> ancestors_of(const std::vector<int>& seed) const {
        std::vector<bool> mark(n, false);
        std::vector<int> stack(seed);
        for (int s : seed) mark[s] = true;
        while (!stack.empty()) {
            int v = stack.back();
            stack.pop_back();
            for (int p : parents[v])
                if (!mark[p]) {
                    mark[p] = true;
                    stack.push_back(p);
                }
        }
        return mark;
    }

    std::vector<bool> descendants_of(const std::vector<int>& seed) const {
        std::vector<bool> mark(n, false);
        std::vector<int> stack;
        for (int s : seed)
            for (int c : children[s])
                if (!mark[c]) {
                    mark[c] = true;
                    stack.push_back(c);
                }
        while (!stack.empty()) {
            int v = stack.back();
            stack.pop_back();
            for (int c : children[v])
                if (!mark[c]) {
                    mark[c] = true;
                    stack.push_back(c);
                }
        }
        return mark;
    }
};

/// Reachability form of m-separation (Bayes-ball generalized to arrowhead
/// semantics). Exact: walk-connectedness coincides with path-connectedness.
inline bool admg_d_separated(const AdmgView& g, const std::vector<int>& a, const std::vector<int>& c,
                             const std::vector<int>& b) {
    std::vector<bool> in_b(g.n, false), in_c(g.n, false);
    for (int v : b) in_b[v] = true;
    for (int v : c) in_c[v] = true;
    const std::vector<bool> anb = [&] {
        auto m = g.ancestors_of(b);
        for (int v : b) m[v] = true;
        return m;
    }();

    // state = (node, entered-with-arrowhead?)
    std::vector<std::array<bool, 2>> visited(g.n, {false, false});
    std::vector<std::pair<int, bool>> stack;
    for (int s : a) {
        if (in_c[s]) throw DimensionError("d_separated: query sets overlap");
        for (const auto& e : g.incident[s]) {
            if (in_c[e.to]) return false;
            if (!visited[e.to][e.arrow_at_other]) {
                visited[e.to][e.arrow_at_other] = true;
                stack.emplace_back(e.to, e.arrow_at_other);
            }
        }
    }
    while (!stack.empty()) {
        auto [w, arrived_arrow] = stack.back();
        stack.pop_back();
        for (const auto& e : g.incident[w]) {
            const bool collider = arrived_arrow && e.arrow_at_self;
            const bool allowed = collider ? anb[w] : !in_b[w];
            if (!allowed) continue;
            if (in_c[e.to]) return false;
            if (!visited[e.to][e.arrow_at_other]) {
                visited[e.to][e.arrow_at_other] = true;
                stack.emplace_back(e.to, e.arrow_at_other);
            }
        }
    }
    return true;
}

}  // namespace detail

/// Finite-window full time graph of a VAR(p): nodes (component, t) for t in
/// [t_min, t_max]; edge (j, t) -> (i, t+k) iff A_k(i, j) != 0.
class TimeGraph {
public:
    TimeGraph(const VarParameters& params, int t_min, int t_max)
        : d_(params.dim()), t_min_(t_min), t_max_(t_max) {
        if (t_min > t_max) throw DimensionError("TimeGraph: empty window");
        for (int k = 1; k <= params.order(); ++k)
            for (int i = 0; i < d_; ++i)
                for (int j = 0; j < d_; ++j)
                    if (params.A[k - 1](i, j) != 0.0)
                        for (int t = t_min; t + k <= t_max; ++t)
                            edges_.emplace_back(NodeId{j, t}, NodeId{i, t + k});
    }

    int components() const { return d_; }
    int t_min() const { return t_min_; }
    int t_max() const { return t_max_; }
    int node_count() const { return d_ * (t_max_ - t_min_ + 1); }

    bool contains(const NodeId& v) const {
        return v.component >= 0 && v.component < d_ && v.t >= t_min_ && v.t <= t_max_;
    }

    std::vector<NodeId> nodes() const {
        std::vector<NodeId> out;
        out.reserve(node_count());
        for (int t = t_min_; t <= t_max_; ++t)
            for (int c = 0; c < d_; ++c) out.push_back({c, t});
        return out;
    }

    const EdgeList& directed_edges() const { return edges_; }

    int index_of(const NodeId& v) const {
        if (!contains(v)) throw DimensionError("TimeGraph: node outside window");
        return (v.t - t_min_) * d_ + v.component;
    }
    NodeId node_at(int idx) const { return {idx % d_, t_min_ + idx / d_}; }

    detail::AdmgView view() const {
        detail::AdmgView g;
        g.n = node_count();
        g.incident.resize(g.n);
        g.children.resize(g.n);
        g.parents.resize(g.n);
        for (const auto& [u, v] : edges_) g.add_directed(index_of(u), index_of(v));
        return g;
    }

private:
    int d_, t_min_, t_max_;
    EdgeList edges_;
};

/// Latent projection onto a node subset: an ADMG with directed and
/// bidirected edges with the marginalized-time-graph semantics.
class MarginalGraph {
public:
    MarginalGraph(std::vector<NodeId> nodes, EdgeList directed, EdgeList bidirected)
        : nodes_(std::move(nodes)) {
        std::sort(nodes_.begin(), nodes_.end());
        for (std::size_t i = 0; i < nodes_.size(); ++i) index_[nodes_[i]] = static_cast<int>(i);
        if (index_.size() != nodes_.size()) throw DimensionError("MarginalGraph: duplicate nodes");
        for (auto& [u, v] : directed) directed_.emplace_back(idx(u), idx(v));
        for (auto& [u, v] : bidirected) {
            int a = idx(u), b = idx(v);
            if (a == b) throw DimensionError("MarginalGraph: bidirected self-loop");
            bidirected_.emplace_back(std::min(a, b), std::max(a, b));
        }
        std::sort(directed_.begin(), directed_.end());
        directed_.erase(std::unique(directed_.begin(), directed_.end()), directed_.end());
        std::sort(bidirected_.begin(), bidirected_.end());
        bidirected_.erase(std::unique(bidirected_.begin(), bidirected_.end()), bidirected_.end());
    }

    const std::vector<NodeId>& nodes() const { return nodes_; }
    bool contains(const NodeId& v) const { return index_.count(v) > 0; }
    int index_of(const NodeId& v) const { return idx(v); }
    std::size_t directed_count() const { return directed_.size(); }
    std::size_t bidirected_count() const { return bidirected_.size(); }

    EdgeList directed_edges() const {
        EdgeList out;
        for (auto [u, v] : directed_) out.emplace_back(nodes_[u], nodes_[v]);
        return out;
    }
    EdgeList bidirected_edges() const {
        EdgeList out;
        for (auto [u, v] : bidirected_) out.emplace_back(nodes_[u], nodes_[v]);
        return out;
    }

    bool has_directed(const NodeId& u, const NodeId& v) const {
        return std::binary_search(directed_.begin(), directed_.end(), std::pair(idx(u), idx(v)));
    }
    bool has_bidirected(const NodeId& u, const NodeId& v) const {
        int a = idx(u), b = idx(v);
        return std::binary_search(bidirected_.begin(), bidirected_.end(),
                                  std::pair(std::min(a, b), std::max(a, b)));
    }

    detail::AdmgView view() const {
        detail::AdmgView g;
        g.n = static_cast<int>(nodes_.size());
        g.incident.resize(g.n);
        g.children.resize(g.n);
        g.parents.resize(g.n);
        for (auto [u, v] : directed_) g.add_directed(u, v);
        for (auto [u, v] : bidirected_) g.add_bidirected(u, v);
        return g;
    }

    /// Removes direct edges x -> y for x in xs, y in ys (the C1 surgery).
    MarginalGraph without_direct_edges(const NodeSet& xs, const NodeSet& ys) const {
        MarginalGraph out(*this);
        std::erase_if(out.directed_, [&](const std::pair<int, int>& e) {
            return xs.count(nodes_[e.first]) && ys.count(nodes_[e.second]);
        });
        return out;
    }

    /// Removes every directed edge leaving xs that lies on a directed path to
    /// y (the C1' surgery): edge x -> v is dropped iff v == y or y is
    /// reachable from v via directed edges.
    MarginalGraph without_causal_path_edges(const NodeSet& xs, const NodeId& y) const {
        auto g = view();
        std::vector<bool> reaches_y(g.n, false);
        {
            // reverse reachability from y
            std::vector<int> stack{idx(y)};
            reaches_y[idx(y)] = true;
            while (!stack.empty()) {
                int v = stack.back();
                stack.pop_back();
                for (int p : g.parents[v])
                    if (!reaches_y[p]) {
                        reaches_y[p] = true;
                        stack.push_back(p);
                    }
            }
        }
        MarginalGraph out(*this);
        std::erase_if(out.directed_, [&](const std::pair<int, int>& e) {
            return xs.count(nodes_[e.first]) && reaches_y[e.second];
        });
        return out;
    }

private:
    int idx(const NodeId& v) const {
        auto it = index_.find(v);
        if (it == index_.end()) throw DimensionError("MarginalGraph: unknown node");
        return it->second;
    }

    std::vector<NodeId> nodes_;
    std::map<NodeId, int> index_;
    std::vector<std::pair<int, int>> directed_;
    std::vector<std::pair<int, int>> bidirected_;
};

inline TimeGraph build_full_time_graph(const VarParameters& params, int t_min, int t_max) {
    return TimeGraph(params, t_min, t_max);
}

namespace detail {

/// M-nodes reachable from `start` along directed paths whose interior nodes
/// avoid M. M nodes are absorbing; paths may share intermediates (the
/// permissive reading of the bidirected-edge condition).
inline std::vector<int> reach_into_m(const AdmgView& g, int start, const std::vector<bool>& in_m) {
    std::vector<bool> seen(g.n, false);
    std::vector<int> out, stack{start};
    std::vector<bool> hit(g.n, false);
    while (!stack.empty()) {
        int v = stack.back();
        stack.pop_back();
        for (int c : g.children[v]) {
            if (in_m[c]) {
                if (!hit[c]) {
                    hit[c] = true;
                    out.push_back(c);
                }
            } else if (!seen[c]) {
                seen[c] = true;
                stack.push_back(c);
            }
        }
    }
    return out;
}

template <typename Graph>
MarginalGraph marginalize_impl(const Graph& g, const NodeSet& m) {
    for (const auto& v : m)
        if (!g.contains(v)) throw DimensionError("marginalize: M contains nodes outside the graph");
    const auto view = g.view();
    std::vector<bool> in_m(view.n, false);
    for (const auto& v : m) in_m[g.index_of(v)] = true;

    std::vector<NodeId> nodes(m.begin(), m.end());
    EdgeList directed, bidirected;
    for (const auto& v : m) {
        for (int target : reach_into_m(view, g.index_of(v), in_m))
            directed.emplace_back(v, g.node_at(target));
    }
    for (int u = 0; u < view.n; ++u) {
        if (in_m[u]) continue;
        const auto reach = reach_into_m(view, u, in_m);
        for (std::size_t i = 0; i < reach.size(); ++i)
            for (std::size_t j = i + 1; j < reach.size(); ++j)
                bidirected.emplace_back(g.node_at(reach[i]), g.node_at(reach[j]));
    }
    return MarginalGraph(std::move(nodes), std::move(directed), std::move(bidirected));
}

}  // namespace detail

/// Definition-4 marginalization of a full time graph.
inline MarginalGraph marginalize(const TimeGraph& g, const NodeSet& m) {
    return detail::marginalize_impl(g, m);
}

/// Marginalization of an already-projected graph; defined for graphs without
/// bidirected edges (the latent projection of a DAG composes, the general
/// ADMG case is not needed here).
inline MarginalGraph marginalize(const MarginalGraph& g, const NodeSet& m) {
    if (g.bidirected_count() > 0)
        throw DimensionError("marginalize: input must not contain bidirected edges");
    struct Adapter {
        const MarginalGraph& g;
        bool contains(const NodeId& v) const { return g.contains(v); }
        int index_of(const NodeId& v) const { return g.index_of(v); }
        NodeId node_at(int i) const { return g.nodes()[i]; }
        detail::AdmgView view() const { return g.view(); }
    };
    return detail::marginalize_impl(Adapter{g}, m);
}

/// Projects at the given history window and again with `extension` more
/// steps of history; the projection is considered stable when the edge sets
/// coincide. Certifies that the finite window already captures the
/// stationary structure around M.
struct StabilizedMarginalization {
    MarginalGraph graph;
    bool stable;
};

inline StabilizedMarginalization marginalize_stable(const VarParameters& params, const NodeSet& m,
                                                    int t_min, int t_max, int extension = 5) {
    MarginalGraph first = marginalize(TimeGraph(params, t_min, t_max), m);
    MarginalGraph wider = marginalize(TimeGraph(params, t_min - extension, t_max), m);
    const bool stable = first.directed_edges() == wider.directed_edges() &&
                        first.bidirected_edges() == wider.bidirected_edges();
    return {std::move(wider), stable};
}

/// Edge surgery applied before a separation query.
enum class EdgeRemoval { none, direct_xy, outgoing_on_causal_paths };

struct SeparationQuery {
    NodeSet a;
    NodeSet c;
    NodeSet b;
    EdgeRemoval removal = EdgeRemoval::none;
    NodeSet removal_x;                  // the regressor set for the surgery
    std::optional<NodeId> removal_y;    // the response node for the surgery
};

namespace detail {

inline void check_disjoint(const NodeSet& a, const NodeSet& c, const NodeSet& b) {
    for (const auto& v : a)
        if (c.count(v) || b.count(v)) throw DimensionError("separation query sets must be disjoint");
    for (const auto& v : c)
        if (b.count(v)) throw DimensionError("separation query sets must be disjoint");
}

template <typename Graph>
bool d_separated_on(const Graph& g, const NodeSet& a, const NodeSet& c, const NodeSet& b) {
    check_disjoint(a, c, b);
    auto view = g.view();
    auto to_idx = [&](const NodeSet& s) {
        std::vector<int> out;
        for (const auto& v : s) out.push_back(g.index_of(v));
        return out;
    };
    return admg_d_separated(view, to_idx(a), to_idx(c), to_idx(b));
}

}  // namespace detail

inline bool d_separated(const TimeGraph& g, const NodeSet& a, const NodeSet& c, const NodeSet& b) {
    return detail::d_separated_on(g, a, c, b);
}

inline bool d_separated(const MarginalGraph& g, const NodeSet& a, const NodeSet& c, const NodeSet& b) {
    return detail::d_separated_on(g, a, c, b);
}

inline bool d_separated(const MarginalGraph& g, const SeparationQuery& q) {
    switch (q.removal) {
        case EdgeRemoval::none:
            return d_separated(g, q.a, q.c, q.b);
        case EdgeRemoval::direct_xy: {
            NodeSet ys = q.removal_y ? NodeSet{*q.removal_y} : q.c;
            return d_separated(g.without_direct_edges(q.removal_x, ys), q.a, q.c, q.b);
        }
        case EdgeRemoval::outgoing_on_causal_paths: {
            if (!q.removal_y) throw DimensionError("C1' surgery needs a response node");
            return d_separated(g.without_causal_path_edges(q.removal_x, *q.removal_y), q.a, q.c, q.b);
        }
    }
    throw DimensionError("unknown edge removal directive");
}

/// Full time graph variant of the query (used for the conditioning examples
/// on unprojected graphs): the surgery is applied on a projected copy with
/// M = all nodes, which preserves the edge set exactly.
inline bool d_separated(const TimeGraph& g, const SeparationQuery& q) {
    if (q.removal == EdgeRemoval::none) return d_separated(g, q.a, q.c, q.b);
    auto all = g.nodes();
    MarginalGraph full = marginalize(g, NodeSet(all.begin(), all.end()));
    return d_separated(full, q);
}

/// Graphical CIV/NIV conditions. C3 (the rank condition) is a covariance
/// check and lives with the identifiability code, not here.
struct ConditionReport {
    bool c1_or_c1prime = false;
    bool c2 = false;
};

inline ConditionReport check_conditions(const MarginalGraph& g, const NodeSet& instruments,
                                        const NodeSet& regressors, const NodeSet& conditioning,
                                        const NodeId& response, EdgeRemoval variant) {
    if (variant == EdgeRemoval::none)
        throw DimensionError("check_conditions: variant must be direct_xy (C1) or outgoing_on_causal_paths (C1')");
    for (const auto& v : regressors)
        if (instruments.count(v) || conditioning.count(v) || v == response)
            throw DimensionError("check_conditions: sets must be disjoint");

    SeparationQuery q;
    q.a = instruments;
    q.c = {response};
    q.b = conditioning;
    q.removal = variant;
    q.removal_x = regressors;
    q.removal_y = response;
    ConditionReport report;
    report.c1_or_c1prime = d_separated(g, q);

    auto view = g.view();
    std::vector<int> seed;
    for (const auto& v : regressors) seed.push_back(g.index_of(v));
    seed.push_back(g.index_of(response));
    const auto desc = view.descendants_of(seed);
    report.c2 = true;
    for (const auto& v : conditioning)
        if (desc[g.index_of(v)]) report.c2 = false;
    return report;
}

/// DOT rendering; bidirected edges are drawn with double arrowheads.
inline std::string to_dot(const MarginalGraph& g) {
    auto name = [](const NodeId& v) {
        return "\"c" + std::to_string(v.component) + ",t" + std::to_string(v.t) + "\"";
    };
    std::string out = "digraph marginal {\n";
    for (const auto& v : g.nodes()) out += "  " + name(v) + ";\n";
    for (const auto& [u, v] : g.directed_edges()) out += "  " + name(u) + " -> " + name(v) + ";\n";
    for (const auto& [u, v] : g.bidirected_edges())
        out += "  " + name(u) + " -> " + name(v) + " [dir=both, style=dashed];\n";
    out += "}\n";
    return out;
}

}  // namespace tsiv
