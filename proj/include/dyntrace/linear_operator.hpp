#ifndef DYNTRACE_LINEAR_OPERATOR_HPP
#define DYNTRACE_LINEAR_OPERATOR_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string_view>
#include <utility>
#include <vector>

#include "dyntrace/query_ledger.hpp"

namespace dyntrace {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// An n x n implicit matrix reachable only through matvec queries.
///
/// `apply` is the sole access path: it validates the input, charges the
/// operator's declared query cost to the ledger, and evaluates the product.
/// Operators are immutable after construction and safe to share between
/// concurrently running trials.
class LinearOperator {
public:
    virtual ~LinearOperator() = default;

    virtual Eigen::Index dim() const = 0;

    /// Ledger charge for a single apply (1 for dense, e for an e-th power,
    /// sum of both sides for a difference; composes recursively).
    virtual std::uint64_t query_cost() const = 0;

    Vector apply(const Vector& v, QueryLedger& ledger, std::string_view label) const {
        check_input(v.size());
        if (!v.allFinite()) {
            throw std::invalid_argument("apply: input vector has non-finite entries");
        }
        ledger.charge(label, query_cost());
        Vector out(dim());
        apply_impl(v, out);
        return out;
    }

    /// Column-blocked apply; charges one query per column. Dense operators
    /// override the implementation with a matrix-matrix product.
    Matrix apply_block(const Matrix& block, QueryLedger& ledger, std::string_view label) const {
        check_input(block.rows());
        if (!block.allFinite()) {
            throw std::invalid_argument("apply: input block has non-finite entries");
        }
        ledger.charge(label, query_cost() * static_cast<std::uint64_t>(block.cols()));
        Matrix out(dim(), block.cols());
        apply_block_impl(block, out);
        return out;
    }

protected:
    virtual void apply_impl(const Vector& in, Vector& out) const = 0;

    virtual void apply_block_impl(const Matrix& in, Matrix& out) const {
        Vector column(dim());
        for (Eigen::Index j = 0; j < in.cols(); ++j) {
            Vector x = in.col(j);
            apply_impl(x, column);
            out.col(j) = column;
        }
    }

private:
    void check_input(Eigen::Index rows) const {
        if (rows != dim()) {
            throw std::invalid_argument("apply: dimension mismatch (operator dim " +
                                        std::to_string(dim()) + ", input dim " +
                                        std::to_string(rows) + ")");
        }
    }
};

using OperatorPtr = std::shared_ptr<const LinearOperator>;

/// Dense symmetric matrix; construction symmetrizes so entries(i,j) ==
/// entries(j,i) holds exactly.
class DenseSymmetricOperator final : public LinearOperator {
public:
    explicit DenseSymmetricOperator(Matrix entries) : entries_(std::move(entries)) {
        if (entries_.rows() != entries_.cols()) {
            throw std::invalid_argument("DenseSymmetricOperator: matrix must be square");
        }
        entries_ = ((entries_ + entries_.transpose()) * 0.5).eval();
    }

    static DenseSymmetricOperator identity(Eigen::Index n) {
        return DenseSymmetricOperator(Matrix::Identity(n, n));
    }

    static DenseSymmetricOperator zero(Eigen::Index n) {
        return DenseSymmetricOperator(Matrix::Zero(n, n));
    }

    static DenseSymmetricOperator diagonal(const Vector& d) {
        return DenseSymmetricOperator(Matrix(d.asDiagonal()));
    }

    Eigen::Index dim() const override { return entries_.rows(); }
    std::uint64_t query_cost() const override { return 1; }

    const Matrix& entries() const { return entries_; }

protected:
    void apply_impl(const Vector& in, Vector& out) const override {
        out.noalias() = entries_.selfadjointView<Eigen::Lower>() * in;
    }

    void apply_block_impl(const Matrix& in, Matrix& out) const override {
        out.noalias() = entries_.selfadjointView<Eigen::Lower>() * in;
    }

private:
    Matrix entries_;
};

/// base^e realized by repeated application; one apply charges e base queries.
class PowerOperator final : public LinearOperator {
public:
    PowerOperator(OperatorPtr base, int exponent)
        : base_(std::move(base)), exponent_(exponent) {
        if (!base_) {
            throw std::invalid_argument("PowerOperator: null base operator");
        }
        if (exponent_ < 1) {
            throw std::invalid_argument("PowerOperator: exponent must be positive");
        }
    }

    Eigen::Index dim() const override { return base_->dim(); }
    std::uint64_t query_cost() const override {
        return static_cast<std::uint64_t>(exponent_) * base_->query_cost();
    }

    int exponent() const { return exponent_; }
    const LinearOperator& base() const { return *base_; }

protected:
    void apply_impl(const Vector& in, Vector& out) const override {
        Vector current = in;
        Vector next(dim());
        for (int i = 0; i < exponent_; ++i) {
            base_apply(*base_, current, next);
            current.swap(next);
        }
        out = current;
    }

    void apply_block_impl(const Matrix& in, Matrix& out) const override {
        Matrix current = in;
        Matrix next(dim(), in.cols());
        for (int i = 0; i < exponent_; ++i) {
            base_block(*base_, current, next);
            current.swap(next);
        }
        out = current;
    }

private:
    static void base_apply(const LinearOperator& op, const Vector& in, Vector& out);
    static void base_block(const LinearOperator& op, const Matrix& in, Matrix& out);

    OperatorPtr base_;
    int exponent_;
};

/// left - right over a shared dimension; one apply touches both endpoint
/// matrices, so it charges the sum of their costs.
class DifferenceOperator final : public LinearOperator {
public:
    DifferenceOperator(OperatorPtr left, OperatorPtr right)
        : left_(std::move(left)), right_(std::move(right)) {
        if (!left_ || !right_) {
            throw std::invalid_argument("DifferenceOperator: null operand");
        }
        if (left_->dim() != right_->dim()) {
            throw std::invalid_argument("DifferenceOperator: dimension mismatch (" +
                                        std::to_string(left_->dim()) + " vs " +
                                        std::to_string(right_->dim()) + ")");
        }
    }

    Eigen::Index dim() const override { return left_->dim(); }
    std::uint64_t query_cost() const override {
        return left_->query_cost() + right_->query_cost();
    }

    const LinearOperator& left() const { return *left_; }
    const LinearOperator& right() const { return *right_; }

protected:
    void apply_impl(const Vector& in, Vector& out) const override;
    void apply_block_impl(const Matrix& in, Matrix& out) const override;

private:
    OperatorPtr left_;
    OperatorPtr right_;
};

/// 0/1 adjacency matrix of a simple undirected graph, stored as neighbor
/// lists. Symmetric with a zero diagonal by construction.
class AdjacencyOperator final : public LinearOperator {
public:
    AdjacencyOperator(Eigen::Index node_count, std::vector<std::vector<std::int32_t>> neighbors)
        : node_count_(node_count), neighbors_(std::move(neighbors)) {
        if (static_cast<Eigen::Index>(neighbors_.size()) != node_count_) {
            throw std::invalid_argument("AdjacencyOperator: neighbor table size mismatch");
        }
    }

    Eigen::Index dim() const override { return node_count_; }
    std::uint64_t query_cost() const override { return 1; }

    const std::vector<std::vector<std::int32_t>>& neighbors() const { return neighbors_; }

protected:
    void apply_impl(const Vector& in, Vector& out) const override {
        out.setZero();
        for (Eigen::Index u = 0; u < node_count_; ++u) {
            double sum = 0.0;
            for (std::int32_t v : neighbors_[static_cast<std::size_t>(u)]) {
                sum += in[v];
            }
            out[u] = sum;
        }
    }

private:
    Eigen::Index node_count_;
    std::vector<std::vector<std::int32_t>> neighbors_;
};

// Child applies run against a scratch ledger: the parent operator already
// charged its full recursive cost at the outer apply call.
inline void PowerOperator::base_apply(const LinearOperator& op, const Vector& in, Vector& out) {
    QueryLedger scratch;
    out = op.apply(in, scratch, "internal");
}

inline void PowerOperator::base_block(const LinearOperator& op, const Matrix& in, Matrix& out) {
    QueryLedger scratch;
    out = op.apply_block(in, scratch, "internal");
}

inline void DifferenceOperator::apply_impl(const Vector& in, Vector& out) const {
    QueryLedger scratch;
    out = left_->apply(in, scratch, "internal") - right_->apply(in, scratch, "internal");
}

inline void DifferenceOperator::apply_block_impl(const Matrix& in, Matrix& out) const {
    QueryLedger scratch;
    out = left_->apply_block(in, scratch, "internal") - right_->apply_block(in, scratch, "internal");
}

/// Exact trace of a dense operator: the sum of its diagonal. Test and
/// benchmark ground truth only; never charged to any ledger.
inline double exact_trace(const DenseSymmetricOperator& op) {
    return op.entries().trace();
}

inline OperatorPtr make_dense(Matrix entries) {
    return std::make_shared<DenseSymmetricOperator>(std::move(entries));
}

inline OperatorPtr make_difference(OperatorPtr left, OperatorPtr right) {
    return std::make_shared<DifferenceOperator>(std::move(left), std::move(right));
}

inline OperatorPtr make_power(OperatorPtr base, int exponent) {
    return std::make_shared<PowerOperator>(std::move(base), exponent);
}

/// difference(a, b) as an operator-valued convenience over shared handles.
inline std::shared_ptr<const DifferenceOperator> difference(OperatorPtr a, OperatorPtr b) {
    return std::make_shared<DifferenceOperator>(std::move(a), std::move(b));
}

} // namespace dyntrace

#endif // DYNTRACE_LINEAR_OPERATOR_HPP
