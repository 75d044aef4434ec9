// Command-line driver: synthetic and graph experiments, file-backed streams,
// and single-shot static estimation, all with deterministic seeding.
#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dyntrace/experiment.hpp"
#include "dyntrace/graph.hpp"
#include "dyntrace/hutch_pp.hpp"
#include "dyntrace/io.hpp"
#include "dyntrace/synthetic.hpp"

namespace {

using namespace dyntrace;

struct CommonOptions {
    double eps = 0.05;
    double delta = 0.1;
    double p = 1.0;
    std::string mode = "partitioned";
    std::string estimators = "tree";
    std::uint64_t budget = 0; // 0: match the tree's measured total
    bool budget_tree = false;
    int groups = 0;
    int stride = 0;
    int trials = 1;
    std::uint64_t seed = 0;
    int jobs = 1;
    std::string out = "-";
};

void add_common_flags(CLI::App* cmd, CommonOptions& opt) {
    cmd->add_option("--eps", opt.eps, "Per-step error bound")
        ->check(CLI::Range(1e-9, 1.0).description("(0,1)"));
    cmd->add_option("--delta", opt.delta, "Failure probability")
        ->check(CLI::Range(1e-9, 1.0).description("(0,1)"));
    cmd->add_option("--p", opt.p, "Schatten norm order")
        ->check(CLI::Range(1.0, 2.0).description("[1,2]"));
    cmd->add_option("--mode", opt.mode, "Scheduler mode")
        ->check(CLI::IsMember({"partitioned", "flat"}));
    cmd->add_option("--estimators", opt.estimators,
                    "Comma-separated labels: tree,hutch,diffsum,exact");
    cmd->add_option("--budget", opt.budget,
                    "Total query budget for baselines (0: match the tree)");
    cmd->add_flag("--budget-tree", opt.budget_tree,
                  "Plan the tree's probe counts from --budget instead of the schedule");
    cmd->add_option("--groups", opt.groups, "Override the number of groups");
    cmd->add_option("--stride", opt.stride, "Override the refresh stride");
    cmd->add_option("--trials", opt.trials, "Independent trials")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", opt.seed, "Master seed");
    cmd->add_option("--jobs", opt.jobs, "Concurrent trial workers")->check(CLI::PositiveNumber);
    cmd->add_option("--out", opt.out, "Output CSV path, or - for standard output");
}

std::vector<EstimatorKind> parse_estimator_list(const std::string& labels) {
    std::vector<EstimatorKind> kinds;
    std::size_t start = 0;
    while (start <= labels.size()) {
        const std::size_t comma = labels.find(',', start);
        const std::string label = labels.substr(
            start, comma == std::string::npos ? std::string::npos : comma - start);
        if (!label.empty()) kinds.push_back(parse_estimator(label));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    if (kinds.empty()) {
        throw CLI::ValidationError("--estimators", "no estimator labels given");
    }
    return kinds;
}

ExperimentConfig experiment_config(const CommonOptions& opt) {
    ExperimentConfig config;
    config.eps = opt.eps;
    config.delta = opt.delta;
    config.p = opt.p;
    config.mode = opt.mode == "flat" ? TreeMode::flat : TreeMode::partitioned;
    if (opt.budget > 0) config.budget = opt.budget;
    config.budget_tree = opt.budget_tree;
    if (opt.groups > 0) config.groups = opt.groups;
    if (opt.stride > 0) config.stride = opt.stride;
    config.estimators = parse_estimator_list(opt.estimators);
    config.trials = opt.trials;
    config.master_seed = opt.seed;
    config.jobs = opt.jobs;
    return config;
}

void emit(const ExperimentResult& result, const std::string& out) {
    if (out == "-") {
        write_records(result.records, std::cout);
    } else {
        write_records(result.records, out);
    }
}

int run_synth(const CommonOptions& opt, int n, int steps, const std::string& regime,
              bool normalize) {
    ExperimentConfig config = experiment_config(opt);
    const PerturbationRegime kind =
        regime == "high" ? PerturbationRegime::high : PerturbationRegime::low;
    const TrialFactory factory = [=](std::uint64_t trial_seed) {
        SyntheticConfig synth;
        synth.n = n;
        synth.steps = steps;
        synth.regime = kind;
        synth.seed = trial_seed;
        const SyntheticRun run = make_synthetic_run(synth, normalize);
        return TrialData{run.stream, run.true_traces, run.measured_alpha};
    };
    emit(run_experiment(factory, config), opt.out);
    return 0;
}

int run_graph(const CommonOptions& opt, const std::string& file, int nodes, double edge_prob,
              int steps, int clique_max, double alpha) {
    ExperimentConfig config = experiment_config(opt);
    if (config.budget_tree && !config.groups) {
        config.groups = std::max(1, (steps + 1 + 15) / 16);
    }
    const TrialFactory factory = [=](std::uint64_t trial_seed) {
        GraphStream graph;
        if (!file.empty()) {
            graph = read_graph_file(file);
        } else {
            RngStream rng = RngStream(trial_seed).substream(0x6772u);
            graph = random_graph_stream(nodes, edge_prob, steps, clique_max, rng);
        }
        const GraphRun run = graph_to_stream(graph, alpha);
        return TrialData{run.stream, run.true_traces, alpha};
    };
    emit(run_experiment(factory, config), opt.out);
    return 0;
}

int run_file(const CommonOptions& opt, const std::string& file, double alpha) {
    ExperimentConfig config = experiment_config(opt);
    const SequenceData data = read_sequence_file(file);
    const auto stream = data.to_stream(alpha, opt.p);
    const auto truths = data.exact_traces();
    const TrialFactory factory = [=](std::uint64_t) {
        return TrialData{stream, truths, alpha};
    };
    emit(run_experiment(factory, config), opt.out);
    return 0;
}

int run_static(const std::string& file, double eps, double delta, double p,
               std::uint64_t seed) {
    const SequenceData data = read_sequence_file(file);
    const auto op = make_dense(data.snapshots.front());
    RngStream rng(seed);
    QueryLedger ledger;
    const TraceEstimate est = hutch_pp(*op, StaticParams{eps, delta, p}, rng, ledger);
    std::printf("estimate=%.15g queries=%llu\n", est.value,
                static_cast<unsigned long long>(est.queries_used));
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dynamic and static implicit trace estimation via matvec queries"};
    app.require_subcommand(1);

    CommonOptions synth_opt, graph_opt, file_opt;

    auto* synth = app.add_subcommand("synth", "Synthetic perturbation-stream experiment");
    int synth_n = 1000, synth_steps = 100;
    std::string synth_regime = "low";
    bool synth_normalize = false;
    synth->add_option("--n", synth_n, "Matrix dimension")->check(CLI::Range(2, 1 << 20));
    synth->add_option("--steps", synth_steps, "Time steps")->check(CLI::PositiveNumber);
    synth->add_option("--regime", synth_regime, "Perturbation regime")
        ->check(CLI::IsMember({"low", "high"}));
    synth->add_flag("--normalize", synth_normalize,
                    "Scale the stream so every nuclear norm is at most 1");
    add_common_flags(synth, synth_opt);

    auto* graph = app.add_subcommand("graph", "Dynamic triangle-counting experiment");
    std::string graph_file;
    int graph_nodes = 500, graph_steps = 50, graph_clique = 6;
    double graph_prob = 0.05, graph_alpha = 0.5;
    graph->add_option("--file", graph_file, "DYNTRACE-GRAPH input file");
    graph->add_option("--nodes", graph_nodes, "Random graph node count")
        ->check(CLI::Range(3, 1 << 20));
    graph->add_option("--edge-prob", graph_prob, "Random graph edge probability")
        ->check(CLI::Range(0.0, 1.0));
    graph->add_option("--steps", graph_steps, "Clique insertion steps")
        ->check(CLI::NonNegativeNumber);
    graph->add_option("--clique-max", graph_clique, "Largest inserted clique")
        ->check(CLI::Range(2, 6));
    graph->add_option("--alpha", graph_alpha, "Declared drift for the scheduler")
        ->check(CLI::Range(1e-12, 1.0).description("(0,1)"));
    add_common_flags(graph, graph_opt);

    auto* file = app.add_subcommand("file", "Experiment over a DYNTRACE-SEQ stream");
    std::string file_path;
    double file_alpha = 0.1;
    file->add_option("--file", file_path, "DYNTRACE-SEQ input file")->required();
    file->add_option("--alpha", file_alpha, "Declared drift of the stream")
        ->check(CLI::Range(1e-12, 1.0).description("(0,1)"));
    add_common_flags(file, file_opt);

    auto* single = app.add_subcommand("static", "One-shot estimate of the first matrix");
    std::string static_file;
    double static_eps = 0.1, static_delta = 0.05, static_p = 1.0;
    std::uint64_t static_seed = 0;
    single->add_option("--file", static_file, "DYNTRACE-SEQ input file")->required();
    single->add_option("--eps", static_eps, "Error bound")
        ->check(CLI::Range(1e-9, 1.0).description("(0,1)"));
    single->add_option("--delta", static_delta, "Failure probability")
        ->check(CLI::Range(1e-9, 1.0).description("(0,1)"));
    single->add_option("--p", static_p, "Schatten norm order")
        ->check(CLI::Range(1.0, 2.0).description("[1,2]"));
    single->add_option("--seed", static_seed, "Seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) {
            return run_synth(synth_opt, synth_n, synth_steps, synth_regime, synth_normalize);
        }
        if (graph->parsed()) {
            return run_graph(graph_opt, graph_file, graph_nodes, graph_prob, graph_steps,
                             graph_clique, graph_alpha);
        }
        if (file->parsed()) {
            return run_file(file_opt, file_path, file_alpha);
        }
        if (single->parsed()) {
            return run_static(static_file, static_eps, static_delta, static_p, static_seed);
        }
    } catch (const std::exception& err) {
        std::cerr << "dyntrace: " << err.what() << "\n";
        return 1;
    }
    return 0;
}
