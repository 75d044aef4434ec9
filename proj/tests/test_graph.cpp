#include <gtest/gtest.h>

#include <set>

#include "dyntrace/graph.hpp"
#include "dyntrace/linear_operator.hpp"
#include "support/exact_oracle.hpp"

using namespace dyntrace;

namespace {

GraphStream complete_graph(std::int32_t n, std::int32_t total_nodes = -1) {
    GraphStream graph;
    graph.node_count = total_nodes < 0 ? n : total_nodes;
    for (std::int32_t u = 0; u < n; ++u)
        for (std::int32_t v = u + 1; v < n; ++v) graph.initial_edges.emplace_back(u, v);
    return graph;
}

} // namespace

TEST(GraphRun, CompleteGraphTriangles) {
    const GraphRun run = graph_to_stream(complete_graph(4));
    ASSERT_EQ(run.stream->size(), 1);
    EXPECT_EQ(run.triangles[0], 4);
    EXPECT_DOUBLE_EQ(run.true_traces[0], 24.0);
    // Cross-check against the dense cube of the adjacency matrix.
    EXPECT_DOUBLE_EQ(dyntrace::testing::oracle_trace(*run.stream->at(1)), 24.0);
}

TEST(GraphRun, EmptyGraphHasNoTriangles) {
    GraphStream graph;
    graph.node_count = 6;
    const GraphRun run = graph_to_stream(graph);
    EXPECT_EQ(run.triangles[0], 0);
    EXPECT_DOUBLE_EQ(run.true_traces[0], 0.0);
}

TEST(GraphRun, CliqueInsertionAddsTriangles) {
    // K4 on five nodes, then a 3-clique touching the extra vertex: one new
    // triangle on top of the four existing ones.
    GraphStream graph = complete_graph(4, 5);
    graph.events.push_back(CliqueEvent{{0, 1, 4}});
    const GraphRun run = graph_to_stream(graph);
    ASSERT_EQ(run.stream->size(), 2);
    EXPECT_EQ(run.triangles[0], 4);
    EXPECT_EQ(run.triangles[1], 5);
    EXPECT_DOUBLE_EQ(dyntrace::testing::oracle_trace(*run.stream->at(2)), 30.0);
}

TEST(GraphRun, ReinsertedEdgesAreNoOps) {
    GraphStream graph = complete_graph(3, 4);
    graph.events.push_back(CliqueEvent{{0, 1, 2}}); // all edges already present
    const GraphRun run = graph_to_stream(graph);
    EXPECT_EQ(run.triangles[0], 1);
    EXPECT_EQ(run.triangles[1], 1);
}

TEST(GraphRun, VertexOutOfRangeRejected) {
    GraphStream graph;
    graph.node_count = 3;
    graph.initial_edges.emplace_back(0, 5);
    EXPECT_THROW(graph_to_stream(graph), std::invalid_argument);
}

TEST(GraphRun, AdjacencyStaysSimpleAndSymmetric) {
    RngStream rng(21);
    const GraphStream graph = random_graph_stream(20, 0.2, 6, 6, rng);
    const GraphRun run = graph_to_stream(graph);
    for (int step = 1; step <= run.stream->size(); ++step) {
        const auto* power = dynamic_cast<const PowerOperator*>(run.stream->at(step).get());
        ASSERT_NE(power, nullptr);
        const Matrix a = dyntrace::testing::dense_entries(power->base());
        ASSERT_LT((a - a.transpose()).norm(), 1e-15);
        ASSERT_DOUBLE_EQ(a.diagonal().cwiseAbs().sum(), 0.0);
        for (Eigen::Index i = 0; i < a.rows(); ++i)
            for (Eigen::Index j = 0; j < a.cols(); ++j)
                ASSERT_TRUE(a(i, j) == 0.0 || a(i, j) == 1.0);
    }
}

TEST(GraphRun, IncrementalCountsMatchDenseCubeAndEnumeration) {
    RngStream rng(33);
    const GraphStream graph = random_graph_stream(18, 0.25, 8, 6, rng);
    const GraphRun run = graph_to_stream(graph);
    for (int step = 1; step <= run.stream->size(); ++step) {
        const double cube_trace = dyntrace::testing::oracle_trace(*run.stream->at(step));
        ASSERT_DOUBLE_EQ(run.true_traces[static_cast<std::size_t>(step - 1)], cube_trace);
        ASSERT_EQ(run.triangles[static_cast<std::size_t>(step - 1)],
                  static_cast<std::int64_t>(cube_trace) / 6);
    }
}

TEST(RandomGraphStream, RespectsCliqueSizeAndDeterminism) {
    RngStream rng_a(5);
    const GraphStream a = random_graph_stream(30, 0.1, 12, 6, rng_a);
    RngStream rng_b(5);
    const GraphStream b = random_graph_stream(30, 0.1, 12, 6, rng_b);
    ASSERT_EQ(a.initial_edges, b.initial_edges);
    ASSERT_EQ(a.events.size(), 12u);
    for (std::size_t e = 0; e < a.events.size(); ++e) {
        ASSERT_EQ(a.events[e].vertices, b.events[e].vertices);
        ASSERT_GE(a.events[e].vertices.size(), 3u);
        ASSERT_LE(a.events[e].vertices.size(), 6u);
        std::set<std::int32_t> unique(a.events[e].vertices.begin(), a.events[e].vertices.end());
        ASSERT_EQ(unique.size(), a.events[e].vertices.size());
    }
}

TEST(PowerOperator, GraphStreamQueriesCostThree) {
    const GraphRun run = graph_to_stream(complete_graph(4));
    QueryLedger ledger;
    Vector v = Vector::Ones(4);
    run.stream->at(1)->apply(v, ledger, "t");
    EXPECT_EQ(ledger.total(), 3u);
}
