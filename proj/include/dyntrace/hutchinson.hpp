#ifndef DYNTRACE_HUTCHINSON_HPP
#define DYNTRACE_HUTCHINSON_HPP

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "dyntrace/linear_operator.hpp"
#include "dyntrace/query_ledger.hpp"
#include "dyntrace/rng.hpp"

namespace dyntrace {

/// Probe vector distribution. Rademacher is the default everywhere: for a
/// fixed budget it has no larger variance than Gaussian probes.
enum class ProbeKind { rademacher, gaussian };

struct StaticParams {
    double eps;
    double delta;
    double p;

    void validate() const {
        if (!(eps > 0.0 && eps < 1.0)) {
            throw std::invalid_argument("StaticParams: eps must lie in (0,1)");
        }
        if (!(delta > 0.0 && delta < 1.0)) {
            throw std::invalid_argument("StaticParams: delta must lie in (0,1)");
        }
        if (!(p >= 1.0 && p <= 2.0)) {
            throw std::invalid_argument("StaticParams: p must lie in [1,2]");
        }
    }
};

struct TraceEstimate {
    double value = 0.0;
    std::uint64_t queries_used = 0;
};

inline void fill_probe(Vector& probe, ProbeKind kind, RngStream& rng) {
    if (kind == ProbeKind::rademacher) {
        for (Eigen::Index i = 0; i < probe.size(); ++i) probe[i] = rng.rademacher();
    } else {
        for (Eigen::Index i = 0; i < probe.size(); ++i) probe[i] = rng.gaussian();
    }
}

inline Matrix make_probes(Eigen::Index n, int count, ProbeKind kind, RngStream& rng) {
    Matrix probes(n, count);
    Vector column(n);
    for (int j = 0; j < count; ++j) {
        fill_probe(column, kind, rng);
        probes.col(j) = column;
    }
    return probes;
}

/// Girard-Hutchinson estimator: the mean of q^T (A q) over random probes.
/// Unbiased for symmetric probe distributions.
inline TraceEstimate hutchinson(const LinearOperator& op, int num_probes, ProbeKind kind,
                                RngStream& rng, QueryLedger& ledger,
                                std::string_view label = "hutchinson") {
    if (num_probes < 1) {
        throw std::invalid_argument("hutchinson: num_probes must be >= 1");
    }
    const std::uint64_t before = ledger.total();
    const Eigen::Index n = op.dim();
    double sum = 0.0;
    constexpr int kBlock = 64;
    int done = 0;
    while (done < num_probes) {
        const int width = std::min(kBlock, num_probes - done);
        const Matrix probes = make_probes(n, width, kind, rng);
        const Matrix images = op.apply_block(probes, ledger, label);
        sum += probes.cwiseProduct(images).sum();
        done += width;
    }
    return TraceEstimate{sum / static_cast<double>(num_probes), ledger.total() - before};
}

/// Probe-count constant in the static query bound; exposed so experiments
/// can tighten or relax the schedule without rebuilding.
inline constexpr double kHutchinsonConstant = 4.0;

/// Number of probes sufficient for |t - tr A| <= eps * ||A||_F with failure
/// probability delta: ceil(C * ln(1/delta) / eps^2).
inline int hutch_budget(double eps, double delta, double constant = kHutchinsonConstant) {
    if (!(eps > 0.0 && eps <= 1.0)) {
        throw std::invalid_argument("hutch_budget: eps must lie in (0,1]");
    }
    if (!(delta > 0.0 && delta < 1.0)) {
        throw std::invalid_argument("hutch_budget: delta must lie in (0,1)");
    }
    const double raw = constant * std::log(1.0 / delta) / (eps * eps);
    return static_cast<int>(std::ceil(raw));
}

} // namespace dyntrace

#endif // DYNTRACE_HUTCHINSON_HPP
