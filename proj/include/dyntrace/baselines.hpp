#ifndef DYNTRACE_BASELINES_HPP
#define DYNTRACE_BASELINES_HPP

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "dyntrace/dynamic_tree.hpp"
#include "dyntrace/hutchinson.hpp"
#include "dyntrace/stream.hpp"

namespace dyntrace {

/// Query allocation for diffsum: the first estimate gets
/// ceil(first_fraction * total_budget) queries, the remaining steps split
/// the rest equally, leftover probes going to the earliest steps.
struct BudgetPolicy {
    std::uint64_t total_budget = 0;
    double first_fraction = 0.2;

    void validate() const {
        if (total_budget < 1) {
            throw std::invalid_argument("BudgetPolicy: total_budget must be positive");
        }
        if (!(first_fraction > 0.0 && first_fraction <= 1.0)) {
            throw std::invalid_argument("BudgetPolicy: first_fraction must lie in (0,1]");
        }
    }
};

/// Every step estimated independently with the classic estimator.
inline std::vector<StepEstimate> per_step_hutchinson(const StreamSource& stream,
                                                     int probes_per_step, ProbeKind kind,
                                                     RngStream& rng, QueryLedger& ledger) {
    if (stream.size() < 1) {
        throw std::invalid_argument("per_step_hutchinson: empty stream");
    }
    if (probes_per_step < 1) {
        throw std::invalid_argument("per_step_hutchinson: probes_per_step must be >= 1");
    }
    std::vector<StepEstimate> estimates;
    estimates.reserve(static_cast<std::size_t>(stream.size()));
    for (int step = 1; step <= stream.size(); ++step) {
        RngStream step_rng = rng.substream(static_cast<unsigned>(step));
        const auto op = stream.at(step);
        const TraceEstimate est = hutchinson(*op, probes_per_step, kind, step_rng, ledger, "hutch");
        estimates.push_back(StepEstimate{step, est.value, ledger.total(), true});
    }
    return estimates;
}

/// First trace plus a running sum of independently estimated neighboring
/// differences. Errors accumulate with the step index; there is no per-step
/// guarantee.
inline std::vector<StepEstimate> diffsum(const StreamSource& stream, const BudgetPolicy& policy,
                                         ProbeKind kind, RngStream& rng, QueryLedger& ledger) {
    policy.validate();
    const int m = stream.size();
    if (m < 1) {
        throw std::invalid_argument("diffsum: empty stream");
    }

    const std::uint64_t first_alloc = static_cast<std::uint64_t>(
        std::ceil(policy.first_fraction * static_cast<double>(policy.total_budget)));
    const std::uint64_t first_cost = stream.at(1)->query_cost();
    const int first_probes = static_cast<int>(first_alloc / first_cost);
    if (first_probes < 1) {
        throw std::invalid_argument("diffsum: budget too small for one probe on the first step");
    }

    std::vector<StepEstimate> estimates;
    estimates.reserve(static_cast<std::size_t>(m));
    RngStream first_rng = rng.substream(1u);
    double running = hutchinson(*stream.at(1), first_probes, kind, first_rng, ledger,
                                "diffsum_first").value;
    estimates.push_back(StepEstimate{1, running, ledger.total(), true});
    if (m == 1) return estimates;

    const std::uint64_t remainder = policy.total_budget - std::min(first_alloc, policy.total_budget);
    const std::uint64_t diff_cost = stream.at(1)->query_cost() + stream.at(2)->query_cost();
    const std::uint64_t total_diff_probes = remainder / diff_cost;
    const std::uint64_t diff_steps = static_cast<std::uint64_t>(m - 1);
    if (total_diff_probes < diff_steps) {
        throw std::invalid_argument("diffsum: budget too small for one probe per difference step");
    }
    const std::uint64_t base_probes = total_diff_probes / diff_steps;
    const std::uint64_t leftover = total_diff_probes % diff_steps;

    for (int step = 2; step <= m; ++step) {
        const std::uint64_t extra = static_cast<std::uint64_t>(step - 2) < leftover ? 1 : 0;
        const int probes = static_cast<int>(base_probes + extra);
        const auto diff = difference(stream.at(step), stream.at(step - 1));
        RngStream step_rng = rng.substream(static_cast<unsigned>(step));
        running += hutchinson(*diff, probes, kind, step_rng, ledger, "diffsum_diff").value;
        estimates.push_back(StepEstimate{step, running, ledger.total(), true});
    }
    return estimates;
}

} // namespace dyntrace

#endif // DYNTRACE_BASELINES_HPP
