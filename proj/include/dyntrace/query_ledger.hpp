#ifndef DYNTRACE_QUERY_LEDGER_HPP
#define DYNTRACE_QUERY_LEDGER_HPP

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

namespace dyntrace {

/// Exact running count of matrix-vector queries, grouped by caller label.
///
/// The total always equals the sum of the per-label counters; counters only
/// grow between resets. One ledger belongs to one run.
class QueryLedger {
public:
    void charge(std::string_view label, std::uint64_t queries = 1) {
        counts_[std::string(label)] += queries;
        total_ += queries;
    }

    std::uint64_t total() const { return total_; }

    std::uint64_t count(std::string_view label) const {
        auto it = counts_.find(std::string(label));
        return it == counts_.end() ? 0 : it->second;
    }

    const std::map<std::string, std::uint64_t>& by_label() const { return counts_; }

    void reset() {
        counts_.clear();
        total_ = 0;
    }

private:
    std::map<std::string, std::uint64_t> counts_;
    std::uint64_t total_ = 0;
};

} // namespace dyntrace

#endif // DYNTRACE_QUERY_LEDGER_HPP
