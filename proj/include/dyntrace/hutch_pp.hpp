#ifndef DYNTRACE_HUTCH_PP_HPP
#define DYNTRACE_HUTCH_PP_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "dyntrace/hutchinson.hpp"
#include "dyntrace/linear_operator.hpp"
#include "dyntrace/query_ledger.hpp"
#include "dyntrace/rng.hpp"

namespace dyntrace {

struct SchattenSchedule {
    int sketch_width = 0;    // k: columns in the range sketch
    int residual_probes = 0; // l: Hutchinson probes on the deflated operator
};

/// Width schedule for the Schatten-p estimator: k = l =
/// max(ceil((sqrt(ln(1/delta))/eps)^p), ceil(ln(1/delta))). The second term
/// keeps the residual phase honest at small failure rates.
inline SchattenSchedule schatten_schedule(double eps, double delta, double p) {
    StaticParams{eps, delta, p}.validate();
    const double log_term = std::log(1.0 / delta);
    const double lead = std::pow(std::sqrt(log_term) / eps, p);
    const int width = static_cast<int>(std::max(std::ceil(lead), std::ceil(log_term)));
    return SchattenSchedule{width, width};
}

namespace detail {

// Two-pass modified Gram-Schmidt. Columns whose projected norm falls below
// the drop tolerance are discarded, so rank-deficient sketches shrink the
// basis instead of dividing by noise.
inline Matrix orthonormalize(const Matrix& input, double drop_tol = 1e-10) {
    const Eigen::Index n = input.rows();
    Matrix basis(n, input.cols());
    Eigen::Index kept = 0;
    const double scale = input.norm();
    const double threshold = drop_tol * std::max(1.0, scale);
    for (Eigen::Index j = 0; j < input.cols(); ++j) {
        Vector candidate = input.col(j);
        for (int pass = 0; pass < 2; ++pass) {
            if (kept > 0) {
                candidate -= basis.leftCols(kept) * (basis.leftCols(kept).transpose() * candidate);
            }
        }
        const double norm = candidate.norm();
        if (norm > threshold) {
            basis.col(kept) = candidate / norm;
            ++kept;
        }
    }
    return basis.leftCols(kept);
}

} // namespace detail

/// Orthonormal basis for the sketched range of `op`: draws a sign sketch of
/// the requested width, applies the operator once per column, and
/// orthonormalizes the image. Consumes exactly `width` applies.
inline Matrix range_finder(const LinearOperator& op, int width, RngStream& rng,
                           QueryLedger& ledger, std::string_view label = "sketch") {
    if (width < 1) {
        throw std::invalid_argument("range_finder: width must be >= 1");
    }
    if (width > op.dim()) {
        throw std::invalid_argument("range_finder: width exceeds operator dimension");
    }
    const Matrix sketch = make_probes(op.dim(), width, ProbeKind::rademacher, rng);
    const Matrix image = op.apply_block(sketch, ledger, label);
    return detail::orthonormalize(image);
}

namespace detail {

struct ProbePlan {
    int sketch_width = 0;
    int residual_probes = 0;
    bool exact = false; // probe every coordinate; exact trace in dim applies

    static ProbePlan exact_plan() { return ProbePlan{0, 0, true}; }
};

// Diagonal sum through dim unit-vector queries. Exact, and cheaper than any
// schedule whose sketch width reaches the dimension.
inline TraceEstimate probe_diagonal(const LinearOperator& op, QueryLedger& ledger,
                                    std::string_view label = "exact_probe") {
    const std::uint64_t before = ledger.total();
    const Eigen::Index n = op.dim();
    double trace = 0.0;
    constexpr Eigen::Index kBlock = 128;
    for (Eigen::Index start = 0; start < n; start += kBlock) {
        const Eigen::Index width = std::min(kBlock, n - start);
        Matrix unit = Matrix::Zero(n, width);
        for (Eigen::Index j = 0; j < width; ++j) unit(start + j, j) = 1.0;
        const Matrix image = op.apply_block(unit, ledger, label);
        for (Eigen::Index j = 0; j < width; ++j) trace += image(start + j, j);
    }
    return TraceEstimate{trace, ledger.total() - before};
}

// Low-rank deflation plus Hutchinson on the residual, with explicit widths.
// value = tr(Q^T A Q) + mean_q w^T (A w) with w = (I - QQ^T) q; the second
// term equals q^T (I-QQ^T) A (I-QQ^T) q by symmetry of the projector.
inline TraceEstimate hutch_pp_with_widths(const LinearOperator& op, int sketch_width,
                                          int residual_probes, ProbeKind kind, RngStream& rng,
                                          QueryLedger& ledger) {
    const std::uint64_t before = ledger.total();
    const Matrix basis = range_finder(op, sketch_width, rng, ledger, "sketch");

    double deflated_trace = 0.0;
    if (basis.cols() > 0) {
        const Matrix image = op.apply_block(basis, ledger, "trace_eval");
        deflated_trace = basis.cwiseProduct(image).sum();
    }

    double residual_sum = 0.0;
    if (residual_probes > 0) {
        constexpr int kBlock = 64;
        int done = 0;
        while (done < residual_probes) {
            const int width = std::min(kBlock, residual_probes - done);
            Matrix probes = make_probes(op.dim(), width, kind, rng);
            if (basis.cols() > 0) {
                probes -= basis * (basis.transpose() * probes);
            }
            const Matrix images = op.apply_block(probes, ledger, "residual");
            residual_sum += probes.cwiseProduct(images).sum();
            done += width;
        }
        residual_sum /= static_cast<double>(residual_probes);
    }

    return TraceEstimate{deflated_trace + residual_sum, ledger.total() - before};
}

// Plan dispatcher used by the dynamic scheduler; `exact` plans take the
// diagonal-probe path.
inline TraceEstimate estimate_with_plan(const LinearOperator& op, const ProbePlan& plan,
                                        ProbeKind kind, RngStream& rng, QueryLedger& ledger) {
    if (plan.exact || plan.sketch_width >= op.dim()) {
        return probe_diagonal(op, ledger);
    }
    return hutch_pp_with_widths(op, plan.sketch_width, plan.residual_probes, kind, rng, ledger);
}

} // namespace detail

/// Variance-reduced trace estimator: deflates a sketched rank-k part whose
/// trace is computed exactly, then runs Hutchinson on the two-sided
/// deflation (I-QQ^T) A (I-QQ^T). Satisfies |t - tr A| <= eps ||A||_p with
/// probability at least 1 - delta at the schatten_schedule widths.
inline TraceEstimate hutch_pp(const LinearOperator& op, const StaticParams& params,
                              RngStream& rng, QueryLedger& ledger,
                              ProbeKind kind = ProbeKind::rademacher) {
    params.validate();
    const SchattenSchedule schedule = schatten_schedule(params.eps, params.delta, params.p);
    if (op.dim() < schedule.sketch_width) {
        throw std::invalid_argument(
            "hutch_pp: dimension below schedule (dim " + std::to_string(op.dim()) +
            ", sketch width " + std::to_string(schedule.sketch_width) + ")");
    }
    return detail::hutch_pp_with_widths(op, schedule.sketch_width, schedule.residual_probes,
                                        kind, rng, ledger);
}

} // namespace dyntrace

#endif // DYNTRACE_HUTCH_PP_HPP
