#ifndef DYNTRACE_GRAPH_HPP
#define DYNTRACE_GRAPH_HPP

#include <algorithm>
#include <bit>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "dyntrace/linear_operator.hpp"
#include "dyntrace/rng.hpp"
#include "dyntrace/stream.hpp"

namespace dyntrace {

/// One clique insertion: all pairs among `vertices` become edges
/// (already-present edges are no-ops).
struct CliqueEvent {
    std::vector<std::int32_t> vertices;
};

/// Dynamic simple graph: an initial edge set followed by one clique
/// insertion per step.
struct GraphStream {
    std::int32_t node_count = 0;
    std::vector<std::pair<std::int32_t, std::int32_t>> initial_edges;
    std::vector<CliqueEvent> events;
};

namespace detail {

// Bit-packed symmetric adjacency with popcount-based common-neighbor counts.
class BitAdjacency {
public:
    explicit BitAdjacency(std::int32_t n)
        : n_(n), words_((static_cast<std::size_t>(n) + 63) / 64),
          rows_(static_cast<std::size_t>(n) * words_, 0) {}

    bool has(std::int32_t u, std::int32_t v) const {
        return (row(u)[static_cast<std::size_t>(v) / 64] >> (v % 64)) & 1u;
    }

    void add(std::int32_t u, std::int32_t v) {
        row(u)[static_cast<std::size_t>(v) / 64] |= std::uint64_t{1} << (v % 64);
        row(v)[static_cast<std::size_t>(u) / 64] |= std::uint64_t{1} << (u % 64);
    }

    std::int64_t common_neighbors(std::int32_t u, std::int32_t v) const {
        const std::uint64_t* a = row(u);
        const std::uint64_t* b = row(v);
        std::int64_t count = 0;
        for (std::size_t w = 0; w < words_; ++w) count += std::popcount(a[w] & b[w]);
        return count;
    }

    std::vector<std::vector<std::int32_t>> neighbor_lists() const {
        std::vector<std::vector<std::int32_t>> lists(static_cast<std::size_t>(n_));
        for (std::int32_t u = 0; u < n_; ++u) {
            const std::uint64_t* r = row(u);
            for (std::size_t w = 0; w < words_; ++w) {
                std::uint64_t bits = r[w];
                while (bits) {
                    const int bit = std::countr_zero(bits);
                    lists[static_cast<std::size_t>(u)].push_back(
                        static_cast<std::int32_t>(w * 64 + static_cast<std::size_t>(bit)));
                    bits &= bits - 1;
                }
            }
        }
        return lists;
    }

    std::int32_t size() const { return n_; }

private:
    const std::uint64_t* row(std::int32_t u) const {
        return rows_.data() + static_cast<std::size_t>(u) * words_;
    }
    std::uint64_t* row(std::int32_t u) {
        return rows_.data() + static_cast<std::size_t>(u) * words_;
    }

    std::int32_t n_;
    std::size_t words_;
    std::vector<std::uint64_t> rows_;
};

inline void check_vertex(std::int32_t v, std::int32_t n) {
    if (v < 0 || v >= n) {
        throw std::invalid_argument("graph: vertex " + std::to_string(v) +
                                    " outside [0, " + std::to_string(n) + ")");
    }
}

} // namespace detail

/// Triangle count by direct enumeration over the adjacency bitset:
/// sum over edges of |N(u) cap N(v)| counts each triangle three times.
inline std::int64_t count_triangles(const detail::BitAdjacency& adjacency,
                                    const std::vector<std::pair<std::int32_t, std::int32_t>>& edges) {
    std::int64_t triple = 0;
    for (const auto& [u, v] : edges) {
        triple += adjacency.common_neighbors(u, v);
    }
    return triple / 3;
}

/// A materialized dynamic triangle-counting run. Step 1 is the initial
/// graph; step i applies the first i-1 clique events. Operators are cubed
/// adjacencies, so Tr A^3 = 6 * triangles; exact counts are maintained
/// incrementally and checked against enumeration.
struct GraphRun {
    std::shared_ptr<MaterializedStream> stream;
    std::vector<double> true_traces;     // 6 * triangle count per step
    std::vector<std::int64_t> triangles; // enumeration ground truth
};

inline GraphRun graph_to_stream(const GraphStream& graph, double declared_alpha = 0.5,
                                double declared_p = 1.0) {
    if (graph.node_count < 1) {
        throw std::invalid_argument("graph_to_stream: node_count must be positive");
    }
    detail::BitAdjacency adjacency(graph.node_count);
    std::vector<std::pair<std::int32_t, std::int32_t>> edges;
    std::int64_t triangles = 0;

    const auto insert_edge = [&](std::int32_t u, std::int32_t v) {
        detail::check_vertex(u, graph.node_count);
        detail::check_vertex(v, graph.node_count);
        if (u == v || adjacency.has(u, v)) return; // simple graph: no loops, no duplicates
        triangles += adjacency.common_neighbors(u, v);
        adjacency.add(u, v);
        edges.emplace_back(u, v);
    };

    for (const auto& [u, v] : graph.initial_edges) insert_edge(u, v);

    GraphRun run;
    std::vector<OperatorPtr> ops;
    const auto snapshot = [&]() {
        auto adjacency_op = std::make_shared<AdjacencyOperator>(graph.node_count,
                                                                adjacency.neighbor_lists());
        ops.push_back(make_power(adjacency_op, 3));
        run.triangles.push_back(triangles);
        run.true_traces.push_back(6.0 * static_cast<double>(triangles));
    };

    snapshot();
    for (const CliqueEvent& event : graph.events) {
        for (std::size_t a = 0; a < event.vertices.size(); ++a) {
            for (std::size_t b = a + 1; b < event.vertices.size(); ++b) {
                insert_edge(event.vertices[a], event.vertices[b]);
            }
        }
        snapshot();
    }

    run.stream = std::make_shared<MaterializedStream>(std::move(ops), declared_alpha, declared_p);
    return run;
}

/// Erdos-Renyi initial graph plus uniformly random clique insertions of
/// size 3..max_clique (clamped to 6).
inline GraphStream random_graph_stream(std::int32_t nodes, double edge_prob, int steps,
                                       int max_clique, RngStream& rng) {
    if (nodes < 3) {
        throw std::invalid_argument("random_graph_stream: need at least 3 nodes");
    }
    if (!(edge_prob >= 0.0 && edge_prob <= 1.0)) {
        throw std::invalid_argument("random_graph_stream: edge_prob outside [0,1]");
    }
    max_clique = std::clamp(max_clique, 2, 6);

    GraphStream graph;
    graph.node_count = nodes;
    for (std::int32_t u = 0; u < nodes; ++u) {
        for (std::int32_t v = u + 1; v < nodes; ++v) {
            if (rng.uniform() < edge_prob) graph.initial_edges.emplace_back(u, v);
        }
    }
    for (int step = 0; step < steps; ++step) {
        const int size = max_clique <= 3
                             ? max_clique
                             : 3 + static_cast<int>(rng.uniform_index(
                                       static_cast<std::uint64_t>(max_clique - 2)));
        CliqueEvent event;
        while (static_cast<int>(event.vertices.size()) < size) {
            const auto v = static_cast<std::int32_t>(rng.uniform_index(
                static_cast<std::uint64_t>(nodes)));
            if (std::find(event.vertices.begin(), event.vertices.end(), v) ==
                event.vertices.end()) {
                event.vertices.push_back(v);
            }
        }
        graph.events.push_back(std::move(event));
    }
    return graph;
}

} // namespace dyntrace

#endif // DYNTRACE_GRAPH_HPP
