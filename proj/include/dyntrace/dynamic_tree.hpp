#ifndef DYNTRACE_DYNAMIC_TREE_HPP
#define DYNTRACE_DYNAMIC_TREE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "dyntrace/hutch_pp.hpp"
#include "dyntrace/hutchinson.hpp"
#include "dyntrace/linear_operator.hpp"
#include "dyntrace/query_ledger.hpp"
#include "dyntrace/rng.hpp"
#include "dyntrace/stream.hpp"

namespace dyntrace {

struct DriftParams {
    double alpha;
    double p;
    double eps;
    double delta;

    void validate() const {
        if (!(alpha > 0.0 && alpha < 1.0)) {
            throw std::invalid_argument("DriftParams: alpha must lie in (0,1)");
        }
        if (!(p >= 1.0 && p <= 2.0)) {
            throw std::invalid_argument("DriftParams: p must lie in [1,2]");
        }
        if (!(eps > 0.0 && eps < 1.0)) {
            throw std::invalid_argument("DriftParams: eps must lie in (0,1)");
        }
        if (!(delta > 0.0 && delta < 1.0)) {
            throw std::invalid_argument("DriftParams: delta must lie in (0,1)");
        }
    }
};

/// Partition layout for the grouped tree. When alpha < eps the stream is
/// thinned first: only every refresh_stride-th step gets a fresh estimate,
/// and the tree runs at half the error budget so that staleness drift
/// (at most stride * alpha <= eps/2) plus estimation error stays within eps.
/// Group size and level parameters are then derived from the thinned
/// sequence's effective drift, stride * alpha.
struct GroupPlan {
    int group_size = 1;      // s, a power of two
    int num_groups = 1;
    int padded_tail = 0;     // dummy entries completing the final group
    int refresh_stride = 1;
    int effective_length = 1; // ceil(m / refresh_stride)
    double alpha_effective = 0.0;
    double eps_tree = 0.0;   // error budget handed to the tree itself
};

namespace detail {

inline int next_pow2(int v) {
    int p = 1;
    while (p < v) p <<= 1;
    return p;
}

inline int log2_exact(int pow2_value) {
    int l = 0;
    while ((1 << l) < pow2_value) ++l;
    return l;
}

} // namespace detail

inline GroupPlan plan_groups(int m, const DriftParams& drift) {
    drift.validate();
    if (m < 1) {
        throw std::invalid_argument("plan_groups: m must be >= 1");
    }
    GroupPlan plan;
    if (drift.alpha >= drift.eps) {
        plan.refresh_stride = 1;
    } else {
        plan.refresh_stride = std::max(1, static_cast<int>(std::floor(drift.eps / (2.0 * drift.alpha))));
    }
    plan.effective_length = (m + plan.refresh_stride - 1) / plan.refresh_stride;
    plan.alpha_effective = plan.refresh_stride * drift.alpha;
    plan.eps_tree = plan.refresh_stride == 1 ? drift.eps : drift.eps / 2.0;
    const int raw = static_cast<int>(std::ceil(1.0 / (2.0 * plan.alpha_effective)));
    plan.group_size = detail::next_pow2(std::max(1, raw));
    plan.num_groups = (plan.effective_length + plan.group_size - 1) / plan.group_size;
    plan.padded_tail = plan.num_groups * plan.group_size - plan.effective_length;
    return plan;
}

enum class TreeMode { partitioned, flat };

struct LevelParams {
    int level = 0;
    double eps_level = 0.0;
    double delta_level = 0.0;
};

/// Per-level estimator parameters. Partitioned mode halves eps_level per
/// level against the group's log2(s) levels with delta' = alpha * delta;
/// flat mode spans one group of size m rounded up to a power of two with
/// delta' = delta / m, assuming only a norm bound on the first matrix.
inline LevelParams level_params(int level, const GroupPlan& plan, const DriftParams& drift,
                                TreeMode mode, int m) {
    drift.validate();
    LevelParams out;
    out.level = level;
    if (mode == TreeMode::partitioned) {
        const int log2s = detail::log2_exact(plan.group_size);
        if (level < 0 || level >= log2s) {
            throw std::invalid_argument("level_params: level " + std::to_string(level) +
                                        " outside [0, log2 s)");
        }
        out.eps_level = plan.eps_tree /
                        (std::pow(2.0, level + 1) * plan.alpha_effective * log2s);
        out.delta_level = plan.alpha_effective * drift.delta;
    } else {
        const int flat_size = detail::next_pow2(std::max(1, m));
        const int log2s = detail::log2_exact(flat_size);
        if (level < 0 || level >= std::max(1, log2s)) {
            throw std::invalid_argument("level_params: level " + std::to_string(level) +
                                        " outside flat range");
        }
        out.eps_level = drift.eps / (std::pow(2.0, level + 1) * drift.alpha * log2s);
        out.delta_level = drift.delta / m;
    }
    return out;
}

struct TreeNodeRef {
    int level = 0;
    int index = 0;
};

/// Binary prefix decomposition of (0, j]: one interval ((k-1)*2^l, k*2^l]
/// per set bit of j, levels strictly decreasing. Empty exactly when j = 0.
inline std::vector<TreeNodeRef> sumtree_decompose(int j, int s) {
    if (s < 1 || (s & (s - 1)) != 0) {
        throw std::invalid_argument("sumtree_decompose: s must be a positive power of two");
    }
    if (j < 0 || j > s - 1) {
        throw std::invalid_argument("sumtree_decompose: j outside [0, s-1]");
    }
    std::vector<TreeNodeRef> nodes;
    int prefix = 0;
    for (int level = detail::log2_exact(s); level >= 0; --level) {
        const int gap = 1 << level;
        if (j & gap) {
            nodes.push_back(TreeNodeRef{level, prefix / gap + 1});
            prefix += gap;
        }
    }
    return nodes;
}

/// Per-group state: the base estimate t_0 plus difference-trace nodes
/// t_{l,k} for intervals ((k-1)*2^l, k*2^l].
struct TreeNodeTable {
    double base_estimate = 0.0;
    int group_size = 1;
    std::map<std::pair<int, int>, double> nodes;
};

inline double sum_tree(const TreeNodeTable& table, int j) {
    double value = table.base_estimate;
    for (const TreeNodeRef& ref : sumtree_decompose(j, table.group_size)) {
        auto it = table.nodes.find({ref.level, ref.index});
        if (it == table.nodes.end()) {
            throw std::logic_error("sum_tree: missing node (" + std::to_string(ref.level) +
                                   ", " + std::to_string(ref.index) + ")");
        }
        value += it->second;
    }
    return value;
}

struct StepEstimate {
    int step = 0; // 1-based position in the stream
    double value = 0.0;
    std::uint64_t queries_cumulative = 0;
    bool fresh = true;
};

/// Trace estimator invoked per tree call. The plan describes the widths the
/// scheduler budgeted for the call; substituting an exact oracle here
/// isolates the scheduler from estimator noise.
using TraceEstimatorFn =
    std::function<double(const LinearOperator&, const detail::ProbePlan&, RngStream&, QueryLedger&)>;

struct TreeOptions {
    ProbeKind probes = ProbeKind::rademacher;
    /// Pins the number of groups (group size becomes the effective length
    /// divided by the group count, rounded up to a power of two).
    std::optional<int> groups_override;
    std::optional<int> stride_override;
    /// Switches call planning from the analytic schedule to an explicit
    /// total query budget, split evenly over groups and tree levels.
    std::optional<std::uint64_t> total_budget;
    TraceEstimatorFn estimator; // empty: sketch-and-deflate with the planned widths
};

namespace detail {

inline TraceEstimatorFn default_estimator(ProbeKind kind) {
    return [kind](const LinearOperator& op, const ProbePlan& plan, RngStream& rng,
                  QueryLedger& ledger) {
        return estimate_with_plan(op, plan, kind, rng, ledger).value;
    };
}

// Produces the probe plan for every call the tree makes. Theory planning
// follows the per-level schedule; budget planning splits an explicit query
// budget: the base call gets at most a third of its group's share (capped at
// the cost of exact probing), the rest divides evenly over levels and then
// over the level's paying nodes. Either way a plan whose sketch would reach
// the dimension is replaced by exact diagonal probing, which is both cheaper
// and error-free.
class CallPlanner {
public:
    CallPlanner(const GroupPlan& plan, const DriftParams& drift, TreeMode mode, int m,
                const TreeOptions& options, Eigen::Index dim, std::uint64_t base_cost)
        : plan_(plan), drift_(drift), mode_(mode), m_(m) {
        if (options.total_budget) {
            const std::uint64_t per_group =
                *options.total_budget / static_cast<std::uint64_t>(plan.num_groups);
            const std::uint64_t exact_cost = static_cast<std::uint64_t>(dim) * base_cost;
            base_budget_ = plan.group_size == 1
                               ? per_group
                               : std::min(exact_cost, std::max<std::uint64_t>(1, per_group / 3));
            const int levels = std::max(1, log2_exact(plan.group_size));
            level_budget_ = (per_group - std::min(base_budget_, per_group)) /
                            static_cast<std::uint64_t>(levels);
            budgeted_ = true;
        }
    }

    ProbePlan base_plan(Eigen::Index dim, std::uint64_t cost) const {
        if (budgeted_) {
            return budget_call(base_budget_, dim, cost);
        }
        // Degenerate single-entry groups are plain static calls at (eps, delta).
        const double eps = plan_.group_size == 1 ? plan_.eps_tree : plan_.eps_tree / 2.0;
        const double delta = plan_.group_size == 1 ? drift_.delta : drift_.delta / 2.0;
        return schedule_call(eps, delta, dim);
    }

    ProbePlan node_plan(int level, Eigen::Index dim, std::uint64_t cost, int paying_nodes) const {
        if (budgeted_) {
            const std::uint64_t node_share =
                level_budget_ / static_cast<std::uint64_t>(std::max(1, paying_nodes));
            return budget_call(node_share, dim, cost);
        }
        const LevelParams lp = level_params(level, plan_, drift_, mode_, m_);
        return schedule_call(lp.eps_level, lp.delta_level, dim);
    }

private:
    ProbePlan schedule_call(double eps, double delta, Eigen::Index dim) const {
        // Schedules want eps in (0,1); wider tolerances are served by the
        // minimal schedule, which can only overshoot the guarantee.
        const double eps_clamped = std::min(eps, 0.999999);
        const SchattenSchedule schedule = schatten_schedule(eps_clamped, delta, drift_.p);
        if (schedule.sketch_width >= dim) {
            return ProbePlan::exact_plan();
        }
        return ProbePlan{schedule.sketch_width, schedule.residual_probes, false};
    }

    ProbePlan budget_call(std::uint64_t queries, Eigen::Index dim, std::uint64_t cost) const {
        if (queries >= static_cast<std::uint64_t>(dim) * cost) {
            return ProbePlan::exact_plan();
        }
        const int width =
            static_cast<int>(std::max<std::uint64_t>(1, queries / (3 * std::max<std::uint64_t>(1, cost))));
        if (width >= dim) {
            return ProbePlan::exact_plan();
        }
        return ProbePlan{width, width, false};
    }

    const GroupPlan& plan_;
    const DriftParams& drift_;
    TreeMode mode_;
    int m_;
    bool budgeted_ = false;
    std::uint64_t base_budget_ = 0;
    std::uint64_t level_budget_ = 0;
};

} // namespace detail

/// Builds the full node table for one group of exactly `group_size`
/// operators. Nodes whose interval lies entirely in the padded tail are
/// pinned to exactly zero without spending queries; every other node is
/// estimated from its own rng substream keyed by (level, k), so estimates
/// for real indices do not depend on whether padding was appended.
inline TreeNodeTable build_group_tree(std::span<const OperatorPtr> group, const DriftParams& drift,
                                      const GroupPlan& plan, RngStream& rng, QueryLedger& ledger,
                                      const TreeOptions& options = {}, int real_length = -1) {
    drift.validate();
    const int s = plan.group_size;
    if (static_cast<int>(group.size()) != s) {
        throw std::invalid_argument("build_group_tree: group length " +
                                    std::to_string(group.size()) + " != group size " +
                                    std::to_string(s));
    }
    if (real_length < 0) real_length = s;

    const detail::CallPlanner planner(plan, drift, TreeMode::partitioned, s, options,
                                      group[0]->dim(), group[0]->query_cost());
    const TraceEstimatorFn estimator =
        options.estimator ? options.estimator : detail::default_estimator(options.probes);

    TreeNodeTable table;
    table.group_size = s;

    {
        RngStream base_rng = rng.substream(0u, 0u);
        const detail::ProbePlan probe_plan =
            planner.base_plan(group[0]->dim(), group[0]->query_cost());
        table.base_estimate = estimator(*group[0], probe_plan, base_rng, ledger);
    }

    const int levels = detail::log2_exact(s);
    for (int level = 0; level < levels; ++level) {
        const int gap = 1 << level;
        const int node_count = (s - 1) / gap;
        int paying = 0;
        for (int k = 1; k <= node_count; ++k) {
            if ((k - 1) * gap + 1 < real_length) ++paying;
        }
        for (int k = 1; k <= node_count; ++k) {
            const int lo = (k - 1) * gap;
            const int hi = k * gap;
            if (lo + 1 >= real_length) {
                table.nodes[{level, k}] = 0.0; // interval entirely inside the padded tail
                continue;
            }
            const auto diff = difference(group[static_cast<std::size_t>(hi)],
                                         group[static_cast<std::size_t>(lo)]);
            RngStream node_rng = rng.substream(static_cast<unsigned>(level + 1),
                                               static_cast<unsigned>(k));
            const detail::ProbePlan probe_plan =
                planner.node_plan(level, diff->dim(), diff->query_cost(), paying);
            table.nodes[{level, k}] = estimator(*diff, probe_plan, node_rng, ledger);
        }
    }
    return table;
}

/// Dynamic trace estimation over the full stream. Partitioned mode thins by
/// the refresh stride, partitions the thinned sequence into groups, and
/// builds one binary difference tree per group; every step is served from
/// its group's prefix decomposition, with non-anchor steps repeating the
/// latest fresh value. Flat mode runs a single tree over the whole stream
/// and only assumes a norm bound on the first matrix.
inline std::vector<StepEstimate> dynamic_estimate(const StreamSource& stream,
                                                  const DriftParams& drift, TreeMode mode,
                                                  RngStream& rng, QueryLedger& ledger,
                                                  const TreeOptions& options = {}) {
    drift.validate();
    const int m = stream.size();
    if (m < 1) {
        throw std::invalid_argument("dynamic_estimate: empty stream");
    }
    const Eigen::Index n = stream.dim();

    GroupPlan plan;
    if (mode == TreeMode::partitioned) {
        plan = plan_groups(m, drift);
        if (options.stride_override) {
            plan.refresh_stride = std::max(1, *options.stride_override);
            plan.effective_length = (m + plan.refresh_stride - 1) / plan.refresh_stride;
            plan.alpha_effective = plan.refresh_stride * drift.alpha;
            plan.eps_tree = plan.refresh_stride == 1 ? drift.eps : drift.eps / 2.0;
            const int raw = static_cast<int>(std::ceil(1.0 / (2.0 * plan.alpha_effective)));
            plan.group_size = detail::next_pow2(std::max(1, raw));
        }
        if (options.groups_override) {
            const int groups = std::max(1, *options.groups_override);
            plan.group_size =
                detail::next_pow2(std::max(1, (plan.effective_length + groups - 1) / groups));
        }
        plan.num_groups = (plan.effective_length + plan.group_size - 1) / plan.group_size;
        plan.padded_tail = plan.num_groups * plan.group_size - plan.effective_length;
    } else {
        plan.refresh_stride = 1;
        plan.effective_length = m;
        plan.alpha_effective = drift.alpha;
        plan.eps_tree = drift.eps;
        plan.group_size = detail::next_pow2(m);
        plan.num_groups = 1;
        plan.padded_tail = plan.group_size - m;
    }

    const detail::CallPlanner planner(plan, drift, mode, m, options, n,
                                      stream.at(1)->query_cost());
    const TraceEstimatorFn estimator =
        options.estimator ? options.estimator : detail::default_estimator(options.probes);

    const int s = plan.group_size;
    const int stride = plan.refresh_stride;
    const int levels = detail::log2_exact(s);

    const auto original_step = [&](int thinned) { return 1 + thinned * stride; };

    std::vector<StepEstimate> estimates;
    estimates.reserve(static_cast<std::size_t>(m));

    TreeNodeTable table;
    int group_index = -1;
    double latest_value = 0.0;

    for (int step = 1; step <= m; ++step) {
        const bool anchor = (step - 1) % stride == 0;
        if (anchor) {
            const int thinned = (step - 1) / stride;
            const int group = thinned / s;
            const int local = thinned % s;
            const int remaining_anchors = plan.effective_length - group * s;
            const int real_length = std::min(s, remaining_anchors);

            const OperatorPtr current = stream.at(step);
            if (current->dim() != n) {
                throw std::invalid_argument("dynamic_estimate: dimension change mid-stream at step " +
                                            std::to_string(step));
            }

            if (group != group_index) {
                group_index = group;
                table = TreeNodeTable{};
                table.group_size = s;
                RngStream base_rng = rng.substream(static_cast<unsigned>(group), 0u, 0u);
                const detail::ProbePlan probe_plan =
                    planner.base_plan(current->dim(), current->query_cost());
                table.base_estimate = estimator(*current, probe_plan, base_rng, ledger);
            } else {
                // Every level whose gap divides the local index gains a node
                // ending here; the difference spans gap thinned steps.
                for (int level = 0; level < levels; ++level) {
                    const int gap = 1 << level;
                    if (local % gap != 0) break;
                    const int k = local / gap;
                    int paying = 0;
                    for (int kk = 1; kk <= (s - 1) / gap; ++kk) {
                        if ((kk - 1) * gap + 1 < real_length) ++paying;
                    }
                    const OperatorPtr earlier = stream.at(original_step(group * s + local - gap));
                    const auto diff = difference(current, earlier);
                    RngStream node_rng = rng.substream(static_cast<unsigned>(group),
                                                       static_cast<unsigned>(level + 1),
                                                       static_cast<unsigned>(k));
                    const detail::ProbePlan probe_plan =
                        planner.node_plan(level, diff->dim(), diff->query_cost(), paying);
                    table.nodes[{level, k}] = estimator(*diff, probe_plan, node_rng, ledger);
                }
            }
            latest_value = sum_tree(table, local);
        }
        estimates.push_back(StepEstimate{step, latest_value, ledger.total(), anchor});
    }
    return estimates;
}

} // namespace dyntrace

#endif // DYNTRACE_DYNAMIC_TREE_HPP
