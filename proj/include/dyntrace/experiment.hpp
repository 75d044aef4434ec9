#ifndef DYNTRACE_EXPERIMENT_HPP
#define DYNTRACE_EXPERIMENT_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "dyntrace/baselines.hpp"
#include "dyntrace/dynamic_tree.hpp"
#include "dyntrace/rng.hpp"
#include "dyntrace/stream.hpp"

namespace dyntrace {

struct RunRecord {
    int step = 0;
    std::string estimator;
    double estimate = 0.0;
    double true_value = 0.0;
    double abs_error = 0.0;
    double rel_error = 0.0;
    std::uint64_t queries_cumulative = 0;
    std::uint64_t trial_seed = 0;
};

enum class EstimatorKind { tree, hutch, diffsum, exact };

inline const char* estimator_label(EstimatorKind kind) {
    switch (kind) {
        case EstimatorKind::tree: return "tree";
        case EstimatorKind::hutch: return "hutch";
        case EstimatorKind::diffsum: return "diffsum";
        case EstimatorKind::exact: return "exact";
    }
    return "?";
}

inline EstimatorKind parse_estimator(const std::string& label) {
    if (label == "tree") return EstimatorKind::tree;
    if (label == "hutch") return EstimatorKind::hutch;
    if (label == "diffsum") return EstimatorKind::diffsum;
    if (label == "exact") return EstimatorKind::exact;
    throw std::invalid_argument("unknown estimator label '" + label + "'");
}

/// One trial's prepared inputs: the shared stream all estimators see, its
/// exact per-step traces, and the drift declared to the dynamic estimator.
struct TrialData {
    std::shared_ptr<MaterializedStream> stream;
    std::vector<double> true_traces;
    double measured_alpha = 0.0;
};

using TrialFactory = std::function<TrialData(std::uint64_t trial_seed)>;

struct ExperimentConfig {
    double eps = 0.05;
    double delta = 0.1;
    double p = 1.0;
    TreeMode mode = TreeMode::partitioned;
    /// Query budget for the baselines; when absent the tree runs first and
    /// its measured ledger total becomes the trial's budget.
    std::optional<std::uint64_t> budget;
    /// Run the tree itself against the explicit budget instead of the
    /// analytic schedule (the tuned-groups experiment protocol).
    bool budget_tree = false;
    std::optional<int> groups;
    std::optional<int> stride;
    std::vector<EstimatorKind> estimators;
    int trials = 1;
    std::uint64_t master_seed = 0;
    int jobs = 1;
};

struct ExperimentResult {
    std::vector<RunRecord> records;
    std::map<std::string, double> average_abs_error;
    std::map<std::string, std::uint64_t> total_queries;
};

namespace detail {

inline std::uint64_t trial_seed_for(std::uint64_t master, int trial) {
    std::uint64_t s = master;
    s = mix(s, 0x747269616cULL); // domain tag
    s = mix(s, static_cast<std::uint64_t>(trial));
    return s;
}

inline std::vector<RunRecord> records_from(const std::vector<StepEstimate>& estimates,
                                           const std::vector<double>& truths,
                                           EstimatorKind kind, std::uint64_t trial_seed) {
    double max_abs_truth = 0.0;
    for (double t : truths) max_abs_truth = std::max(max_abs_truth, std::abs(t));
    std::vector<RunRecord> records;
    records.reserve(estimates.size());
    for (const StepEstimate& est : estimates) {
        RunRecord record;
        record.step = est.step;
        record.estimator = estimator_label(kind);
        record.estimate = est.value;
        record.true_value = truths[static_cast<std::size_t>(est.step - 1)];
        record.abs_error = std::abs(est.value - record.true_value);
        record.rel_error =
            max_abs_truth > 0.0 ? record.abs_error / max_abs_truth : record.abs_error;
        record.queries_cumulative = est.queries_cumulative;
        record.trial_seed = trial_seed;
        records.push_back(std::move(record));
    }
    return records;
}

} // namespace detail

/// Runs every configured estimator on identical per-trial streams with
/// independent estimator seeds and matched query budgets. Trials execute
/// concurrently when jobs > 1; the output is independent of the job count.
inline ExperimentResult run_experiment(const TrialFactory& factory,
                                       const ExperimentConfig& config) {
    if (config.estimators.empty()) {
        throw std::invalid_argument("run_experiment: no estimators selected");
    }
    if (config.trials < 1) {
        throw std::invalid_argument("run_experiment: trials must be >= 1");
    }
    const bool has_tree =
        std::find(config.estimators.begin(), config.estimators.end(), EstimatorKind::tree) !=
        config.estimators.end();
    const bool needs_budget =
        std::find_if(config.estimators.begin(), config.estimators.end(), [](EstimatorKind k) {
            return k == EstimatorKind::hutch || k == EstimatorKind::diffsum;
        }) != config.estimators.end();
    if (needs_budget && !config.budget && !has_tree) {
        throw std::invalid_argument(
            "run_experiment: baselines need --budget or a tree run to match against");
    }
    if (config.budget_tree && !config.budget) {
        throw std::invalid_argument("run_experiment: budget_tree requires an explicit budget");
    }

    std::vector<std::vector<RunRecord>> per_trial(static_cast<std::size_t>(config.trials));
    std::atomic<int> next_trial{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;

    const auto worker = [&]() {
        for (;;) {
            const int trial = next_trial.fetch_add(1);
            if (trial >= config.trials) return;
            try {
                const std::uint64_t seed = detail::trial_seed_for(config.master_seed, trial);
                const TrialData data = factory(seed);
                const int m = data.stream->size();
                std::vector<RunRecord> records;

                std::optional<std::uint64_t> budget = config.budget;
                for (const EstimatorKind kind : config.estimators) {
                    RngStream rng = RngStream(seed).substream(
                        0xe57u, static_cast<unsigned>(kind));
                    QueryLedger ledger;
                    std::vector<StepEstimate> estimates;
                    switch (kind) {
                        case EstimatorKind::tree: {
                            DriftParams drift{data.measured_alpha, config.p, config.eps,
                                              config.delta};
                            TreeOptions options;
                            options.groups_override = config.groups;
                            options.stride_override = config.stride;
                            if (config.budget_tree) options.total_budget = budget;
                            estimates = dynamic_estimate(*data.stream, drift, config.mode, rng,
                                                         ledger, options);
                            if (!budget) budget = ledger.total();
                            break;
                        }
                        case EstimatorKind::hutch: {
                            const std::uint64_t cost = data.stream->at(1)->query_cost();
                            const std::uint64_t per_step = *budget / static_cast<std::uint64_t>(m);
                            const int probes =
                                static_cast<int>(std::max<std::uint64_t>(1, per_step / cost));
                            estimates = per_step_hutchinson(*data.stream, probes,
                                                            ProbeKind::rademacher, rng, ledger);
                            break;
                        }
                        case EstimatorKind::diffsum: {
                            estimates = diffsum(*data.stream, BudgetPolicy{*budget, 0.2},
                                                ProbeKind::rademacher, rng, ledger);
                            break;
                        }
                        case EstimatorKind::exact: {
                            for (int step = 1; step <= m; ++step) {
                                estimates.push_back(StepEstimate{
                                    step, data.true_traces[static_cast<std::size_t>(step - 1)], 0,
                                    true});
                            }
                            break;
                        }
                    }
                    auto estimator_records =
                        detail::records_from(estimates, data.true_traces, kind, seed);
                    records.insert(records.end(), estimator_records.begin(),
                                   estimator_records.end());
                }
                per_trial[static_cast<std::size_t>(trial)] = std::move(records);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };

    const int jobs = std::max(1, std::min(config.jobs, config.trials));
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(static_cast<std::size_t>(jobs));
        for (int j = 0; j < jobs; ++j) threads.emplace_back(worker);
        for (auto& thread : threads) thread.join();
    }
    if (failure) std::rethrow_exception(failure);

    ExperimentResult result;
    for (auto& records : per_trial) {
        result.records.insert(result.records.end(), records.begin(), records.end());
    }
    std::sort(result.records.begin(), result.records.end(),
              [](const RunRecord& a, const RunRecord& b) {
                  return std::tie(a.estimator, a.trial_seed, a.step) <
                         std::tie(b.estimator, b.trial_seed, b.step);
              });

    std::map<std::string, std::pair<double, std::uint64_t>> sums;
    std::map<std::string, std::map<std::uint64_t, std::uint64_t>> trial_totals;
    for (const RunRecord& record : result.records) {
        auto& [sum, count] = sums[record.estimator];
        sum += record.abs_error;
        count += 1;
        auto& total = trial_totals[record.estimator][record.trial_seed];
        total = std::max(total, record.queries_cumulative);
    }
    for (const auto& [label, pair] : sums) {
        result.average_abs_error[label] = pair.first / static_cast<double>(pair.second);
    }
    for (const auto& [label, per_seed] : trial_totals) {
        std::uint64_t total = 0;
        for (const auto& [seed, queries] : per_seed) total += queries;
        result.total_queries[label] = total;
    }
    return result;
}

/// CSV emission, sorted by (estimator, trial, step); floats carry 15
/// significant digits.
inline void write_records(const std::vector<RunRecord>& records, std::ostream& out) {
    out << "step,estimator,estimate,true_value,abs_error,rel_error,queries_cumulative,trial_seed\n";
    std::vector<const RunRecord*> sorted;
    sorted.reserve(records.size());
    for (const RunRecord& record : records) sorted.push_back(&record);
    std::stable_sort(sorted.begin(), sorted.end(), [](const RunRecord* a, const RunRecord* b) {
        return std::tie(a->estimator, a->trial_seed, a->step) <
               std::tie(b->estimator, b->trial_seed, b->step);
    });
    char buffer[160];
    for (const RunRecord* record : sorted) {
        std::snprintf(buffer, sizeof buffer, "%d,%s,%.15g,%.15g,%.15g,%.15g,%llu,%llu\n",
                      record->step, record->estimator.c_str(), record->estimate,
                      record->true_value, record->abs_error, record->rel_error,
                      static_cast<unsigned long long>(record->queries_cumulative),
                      static_cast<unsigned long long>(record->trial_seed));
        out << buffer;
    }
}

inline void write_records(const std::vector<RunRecord>& records, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open output file '" + path + "'");
    write_records(records, out);
}

} // namespace dyntrace

#endif // DYNTRACE_EXPERIMENT_HPP
