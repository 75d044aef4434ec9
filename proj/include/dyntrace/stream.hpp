#ifndef DYNTRACE_STREAM_HPP
#define DYNTRACE_STREAM_HPP

#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "dyntrace/linear_operator.hpp"

namespace dyntrace {

/// Ordered source of matrices A_1..A_m with declared drift: consecutive
/// Schatten-p differences are bounded by alpha. Steps are 1-based.
class StreamSource {
public:
    virtual ~StreamSource() = default;

    virtual int size() const = 0;
    virtual Eigen::Index dim() const = 0;
    virtual OperatorPtr at(int step) const = 0;

    virtual double declared_alpha() const = 0;
    virtual double declared_p() const = 0;
};

class MaterializedStream final : public StreamSource {
public:
    MaterializedStream(std::vector<OperatorPtr> operators, double alpha, double p)
        : operators_(std::move(operators)), alpha_(alpha), p_(p) {
        if (operators_.empty()) {
            throw std::invalid_argument("MaterializedStream: empty stream");
        }
        for (const auto& op : operators_) {
            if (!op) throw std::invalid_argument("MaterializedStream: null operator");
            if (op->dim() != operators_.front()->dim()) {
                throw std::invalid_argument("MaterializedStream: dimension change mid-stream");
            }
        }
    }

    int size() const override { return static_cast<int>(operators_.size()); }
    Eigen::Index dim() const override { return operators_.front()->dim(); }
    OperatorPtr at(int step) const override {
        if (step < 1 || step > size()) {
            throw std::out_of_range("MaterializedStream: step " + std::to_string(step) +
                                    " outside [1, " + std::to_string(size()) + "]");
        }
        return operators_[static_cast<std::size_t>(step - 1)];
    }

    double declared_alpha() const override { return alpha_; }
    double declared_p() const override { return p_; }

private:
    std::vector<OperatorPtr> operators_;
    double alpha_;
    double p_;
};

} // namespace dyntrace

#endif // DYNTRACE_STREAM_HPP
