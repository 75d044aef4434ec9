#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "dyntrace/baselines.hpp"
#include "dyntrace/linear_operator.hpp"
#include "dyntrace/stream.hpp"
#include "support/exact_oracle.hpp"
#include "support/matrices.hpp"

using namespace dyntrace;

namespace {

MaterializedStream identity_stream(int m, int n) {
    std::vector<OperatorPtr> ops(static_cast<std::size_t>(m),
                                 make_dense(Matrix::Identity(n, n)));
    return MaterializedStream(ops, 0.1, 1.0);
}

MaterializedStream diagonal_stream(const std::vector<double>& traces, int n = 4) {
    std::vector<OperatorPtr> ops;
    for (double t : traces) {
        Vector d = Vector::Zero(n);
        d[0] = t;
        ops.push_back(make_dense(Matrix(d.asDiagonal())));
    }
    return MaterializedStream(ops, 0.5, 1.0);
}

} // namespace

TEST(PerStepHutchinson, IdentityStreamIsExact) {
    const auto stream = identity_stream(7, 5);
    RngStream rng(1);
    QueryLedger ledger;
    const auto estimates = per_step_hutchinson(stream, 3, ProbeKind::rademacher, rng, ledger);
    ASSERT_EQ(estimates.size(), 7u);
    for (const auto& est : estimates) {
        ASSERT_DOUBLE_EQ(est.value, 5.0);
    }
    EXPECT_EQ(ledger.total(), 7u * 3u);
}

TEST(PerStepHutchinson, SingleStepReducesToStaticEstimator) {
    RngStream setup(9);
    const Matrix a = dyntrace::testing::random_symmetric(12, setup);
    const MaterializedStream stream({make_dense(a)}, 0.1, 1.0);

    RngStream rng_a(77);
    QueryLedger ledger_a;
    const auto estimates = per_step_hutchinson(stream, 25, ProbeKind::gaussian, rng_a, ledger_a);

    RngStream rng_b = RngStream(77).substream(1u);
    QueryLedger ledger_b;
    const auto direct = hutchinson(*stream.at(1), 25, ProbeKind::gaussian, rng_b, ledger_b);

    ASSERT_EQ(estimates.size(), 1u);
    EXPECT_DOUBLE_EQ(estimates[0].value, direct.value);
    EXPECT_EQ(ledger_a.total(), ledger_b.total());
}

TEST(PerStepHutchinson, MatchesScriptedReference) {
    // Independent per-probe reference implementation on the dense entries.
    const std::vector<double> traces{2.0, 3.5, -1.0};
    const auto stream = diagonal_stream(traces, 6);
    const int probes = 11;

    RngStream rng(2025);
    QueryLedger ledger;
    const auto estimates = per_step_hutchinson(stream, probes, ProbeKind::gaussian, rng, ledger);

    for (int step = 1; step <= 3; ++step) {
        RngStream ref_rng = RngStream(2025).substream(static_cast<unsigned>(step));
        const Matrix dense = dyntrace::testing::dense_entries(*stream.at(step));
        double sum = 0.0;
        for (int q = 0; q < probes; ++q) {
            Vector probe(6);
            for (int i = 0; i < 6; ++i) probe[i] = ref_rng.gaussian();
            sum += probe.dot(dense * probe);
        }
        ASSERT_NEAR(estimates[static_cast<std::size_t>(step - 1)].value, sum / probes, 1e-12);
    }
}

TEST(PerStepHutchinson, RejectsBadArguments) {
    const auto stream = identity_stream(2, 3);
    RngStream rng(1);
    QueryLedger ledger;
    EXPECT_THROW(per_step_hutchinson(stream, 0, ProbeKind::rademacher, rng, ledger),
                 std::invalid_argument);
}

TEST(DiffSum, ConstantStreamKeepsFirstEstimate) {
    RngStream setup(3);
    const Matrix a = dyntrace::testing::random_symmetric(8, setup);
    std::vector<OperatorPtr> ops(10, make_dense(a));
    const MaterializedStream stream(ops, 0.1, 1.0);
    RngStream rng(5);
    QueryLedger ledger;
    const auto estimates = diffsum(stream, BudgetPolicy{400, 0.2}, ProbeKind::rademacher, rng, ledger);
    ASSERT_EQ(estimates.size(), 10u);
    for (const auto& est : estimates) {
        // Differences are the zero operator: every probe contributes exactly 0.
        ASSERT_DOUBLE_EQ(est.value, estimates[0].value);
    }
}

TEST(DiffSum, DiagonalStreamTelescopesExactly) {
    // Sign probes are exact on diagonal matrices, so the running sum
    // reproduces every trace exactly.
    const std::vector<double> traces{1.0, 1.5, 1.25, 2.0, 2.5};
    const auto stream = diagonal_stream(traces);
    RngStream rng(11);
    QueryLedger ledger;
    const auto estimates = diffsum(stream, BudgetPolicy{200, 0.2}, ProbeKind::rademacher, rng, ledger);
    for (std::size_t i = 0; i < traces.size(); ++i) {
        ASSERT_NEAR(estimates[i].value, traces[i], 1e-12);
    }
}

TEST(DiffSum, TwoStepStreamLandsOnSecondTrace) {
    const auto stream = diagonal_stream({5.0, 7.0});
    RngStream rng(123);
    QueryLedger ledger;
    const auto estimates = diffsum(stream, BudgetPolicy{10000, 0.2}, ProbeKind::rademacher, rng, ledger);
    ASSERT_EQ(estimates.size(), 2u);
    EXPECT_NEAR(estimates[1].value, 7.0, 1e-10);
}

TEST(DiffSum, BudgetConservation) {
    RngStream setup(17);
    std::vector<OperatorPtr> ops;
    for (int i = 0; i < 9; ++i) {
        ops.push_back(make_dense(dyntrace::testing::random_symmetric(6, setup)));
    }
    const MaterializedStream stream(ops, 0.2, 1.0);
    const std::uint64_t first_cost = stream.at(1)->query_cost();
    const std::uint64_t diff_cost = 2 * first_cost;
    for (std::uint64_t budget : {50u, 137u, 747u, 1000u}) {
        RngStream rng(setup.next_u64());
        QueryLedger ledger;
        diffsum(stream, BudgetPolicy{budget, 0.2}, ProbeKind::rademacher, rng, ledger);
        ASSERT_LE(ledger.total(), budget);
        ASSERT_LT(budget - ledger.total(), first_cost + diff_cost + 1);
    }
}

TEST(DiffSum, BudgetTooSmallIsRejected) {
    const auto stream = diagonal_stream({1.0, 2.0, 3.0, 4.0});
    RngStream rng(1);
    QueryLedger ledger;
    // First step eats ceil(0.2 * 7) = 2 queries; 5 left cannot give one
    // 2-query probe to each of the three difference steps.
    EXPECT_THROW(diffsum(stream, BudgetPolicy{7, 0.2}, ProbeKind::rademacher, rng, ledger),
                 std::invalid_argument);
    EXPECT_THROW(diffsum(stream, BudgetPolicy{0, 0.2}, ProbeKind::rademacher, rng, ledger),
                 std::invalid_argument);
}

TEST(DiffSum, VarianceAccumulatesAcrossSteps) {
    // Fixed stream whose increments carry constant Frobenius mass: the
    // variance of the step-m error grows with m.
    RngStream setup(31);
    const int n = 10;
    const int m = 24;
    std::vector<OperatorPtr> ops;
    Matrix current = dyntrace::testing::random_symmetric(n, setup);
    ops.push_back(make_dense(current));
    std::vector<double> truths{current.trace()};
    for (int step = 1; step < m; ++step) {
        Matrix bump = dyntrace::testing::random_symmetric(n, setup);
        bump *= 1.0 / bump.norm();
        current += bump;
        ops.push_back(make_dense(current));
        truths.push_back(current.trace());
    }
    const MaterializedStream stream(ops, 0.5, 1.0);

    const std::vector<int> checkpoints{5, 11, 17, 23};
    std::vector<std::vector<double>> errors(checkpoints.size());
    RngStream master(404);
    for (int seed = 0; seed < 200; ++seed) {
        RngStream rng = master.substream(static_cast<unsigned>(seed));
        QueryLedger ledger;
        const auto estimates =
            diffsum(stream, BudgetPolicy{4 * 24 * 10, 0.2}, ProbeKind::rademacher, rng, ledger);
        for (std::size_t c = 0; c < checkpoints.size(); ++c) {
            const int step = checkpoints[c];
            errors[c].push_back(estimates[static_cast<std::size_t>(step - 1)].value -
                                truths[static_cast<std::size_t>(step - 1)]);
        }
    }
    std::vector<double> variances;
    for (const auto& samples : errors) {
        double mean = 0.0;
        for (double e : samples) mean += e;
        mean /= static_cast<double>(samples.size());
        double var = 0.0;
        for (double e : samples) var += (e - mean) * (e - mean);
        variances.push_back(var / static_cast<double>(samples.size() - 1));
    }
    for (std::size_t c = 1; c < variances.size(); ++c) {
        ASSERT_GT(variances[c], variances[c - 1]) << "checkpoint " << c;
    }
}
