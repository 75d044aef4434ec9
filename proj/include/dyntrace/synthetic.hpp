#ifndef DYNTRACE_SYNTHETIC_HPP
#define DYNTRACE_SYNTHETIC_HPP

#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "dyntrace/linear_operator.hpp"
#include "dyntrace/rng.hpp"
#include "dyntrace/stream.hpp"

namespace dyntrace {

enum class PerturbationRegime { low, high };

struct SyntheticConfig {
    int n = 1000;
    int steps = 100;
    PerturbationRegime regime = PerturbationRegime::low;
    std::uint64_t seed = 0;
};

namespace detail {

inline Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, RngStream& rng) {
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.gaussian();
    return m;
}

inline Matrix random_orthogonal(Eigen::Index n, RngStream& rng) {
    const Matrix g = gaussian_matrix(n, n, rng);
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ();
    const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < n; ++j) {
        if (r(j, j) < 0) q.col(j) = -q.col(j);
    }
    return q;
}

// One perturbation with its construction-exact trace and nuclear norm
// (both are outer-product sums, so no factorization is needed).
struct PerturbationSample {
    Matrix delta;
    double trace = 0.0;
    double nuclear_norm = 0.0;
};

inline PerturbationSample sample_perturbation(PerturbationRegime regime, int n, RngStream& rng) {
    PerturbationSample out;
    if (regime == PerturbationRegime::low) {
        const double scale = 5e-5;
        const double sign = rng.rademacher();
        Vector g(n);
        for (int i = 0; i < n; ++i) g[i] = rng.gaussian();
        out.delta = (scale * sign) * (g * g.transpose());
        out.nuclear_norm = scale * g.squaredNorm();
        out.trace = sign * out.nuclear_norm;
    } else {
        if (n < 20) {
            throw std::invalid_argument("sample_perturbation: high regime needs n >= 20");
        }
        const double scale = 5e-3 / static_cast<double>(n);
        out.delta = Matrix::Zero(n, n);
        double trace = 0.0;
        for (int r = 0; r < 20; ++r) {
            Vector g(n);
            for (int i = 0; i < n; ++i) g[i] = rng.gaussian();
            out.delta += scale * (g * g.transpose());
            trace += scale * g.squaredNorm();
        }
        out.trace = trace;
        out.nuclear_norm = trace; // PSD: nuclear norm equals the trace
    }
    return out;
}

} // namespace detail

/// Symmetric base matrix U diag(lambda) U^T with a random orthogonal U and
/// eigenvalues uniform on [-1, 1].
inline DenseSymmetricOperator gen_synthetic_base(int n, RngStream& rng) {
    if (n < 2) {
        throw std::invalid_argument("gen_synthetic_base: n must be >= 2");
    }
    Vector eigenvalues(n);
    for (int i = 0; i < n; ++i) eigenvalues[i] = rng.uniform(-1.0, 1.0);
    const Matrix u = detail::random_orthogonal(n, rng);
    return DenseSymmetricOperator(u * eigenvalues.asDiagonal() * u.transpose());
}

/// Per-step update: low regime adds a signed rank-1 outer product scaled by
/// 5e-5, high regime a rank-20 PSD sum with per-component scale 5e-3/n.
inline DenseSymmetricOperator gen_perturbation(PerturbationRegime regime, int n, RngStream& rng) {
    return DenseSymmetricOperator(detail::sample_perturbation(regime, n, rng).delta);
}

/// A fully materialized synthetic run: operators, exact traces maintained
/// incrementally from the construction, the measured drift declared to
/// estimators (max step-wise nuclear norm with a 1.1 safety factor), and a
/// bound on the largest nuclear norm along the stream.
struct SyntheticRun {
    std::shared_ptr<MaterializedStream> stream;
    std::vector<double> true_traces;
    double measured_alpha = 0.0;
    double norm_bound = 0.0; // ||A_1||_* plus the sum of update norms
};

inline SyntheticRun make_synthetic_run(const SyntheticConfig& config, bool normalize = false) {
    if (config.steps < 1) {
        throw std::invalid_argument("make_synthetic_run: steps must be >= 1");
    }
    RngStream rng(config.seed);

    RngStream base_rng = rng.substream(0u);
    Vector eigenvalues(config.n);
    for (int i = 0; i < config.n; ++i) eigenvalues[i] = base_rng.uniform(-1.0, 1.0);
    const Matrix u = detail::random_orthogonal(config.n, base_rng);
    Matrix current = u * eigenvalues.asDiagonal() * u.transpose();
    current = 0.5 * (current + current.transpose());

    double trace = eigenvalues.sum();
    double norm_bound = eigenvalues.cwiseAbs().sum();
    double max_step_norm = 0.0;

    std::vector<Matrix> snapshots;
    std::vector<double> traces;
    snapshots.push_back(current);
    traces.push_back(trace);

    for (int step = 2; step <= config.steps; ++step) {
        RngStream step_rng = rng.substream(static_cast<unsigned>(step));
        const auto sample = detail::sample_perturbation(config.regime, config.n, step_rng);
        current += sample.delta;
        trace += sample.trace;
        norm_bound += sample.nuclear_norm;
        max_step_norm = std::max(max_step_norm, sample.nuclear_norm);
        snapshots.push_back(current);
        traces.push_back(trace);
    }

    SyntheticRun run;
    run.norm_bound = norm_bound;
    run.measured_alpha = 1.1 * max_step_norm;
    const double scale = normalize ? 1.0 / norm_bound : 1.0;

    std::vector<OperatorPtr> ops;
    ops.reserve(snapshots.size());
    for (std::size_t i = 0; i < snapshots.size(); ++i) {
        ops.push_back(make_dense(scale * snapshots[i]));
        run.true_traces.push_back(scale * traces[i]);
    }
    run.measured_alpha *= scale;
    if (config.steps == 1) {
        // A single-step run has no updates; declare a nominal tiny drift.
        run.measured_alpha = 1e-6;
    }
    run.stream = std::make_shared<MaterializedStream>(std::move(ops), run.measured_alpha, 1.0);
    return run;
}

} // namespace dyntrace

#endif // DYNTRACE_SYNTHETIC_HPP
