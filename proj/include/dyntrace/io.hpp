#ifndef DYNTRACE_IO_HPP
#define DYNTRACE_IO_HPP

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dyntrace/graph.hpp"
#include "dyntrace/linear_operator.hpp"
#include "dyntrace/stream.hpp"

namespace dyntrace {

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& path, int line, const std::string& message)
        : std::runtime_error(path + ":" + std::to_string(line) + ": " + message),
          line_(line) {}

    int line() const { return line_; }

private:
    int line_;
};

/// Snapshots read from a sequence file; delta blocks are already applied.
struct SequenceData {
    std::vector<Matrix> snapshots;

    std::shared_ptr<MaterializedStream> to_stream(double alpha, double p) const {
        std::vector<OperatorPtr> ops;
        ops.reserve(snapshots.size());
        for (const Matrix& m : snapshots) ops.push_back(make_dense(m));
        return std::make_shared<MaterializedStream>(std::move(ops), alpha, p);
    }

    std::vector<double> exact_traces() const {
        std::vector<double> traces;
        traces.reserve(snapshots.size());
        for (const Matrix& m : snapshots) traces.push_back(m.trace());
        return traces;
    }
};

namespace detail {

class LineReader {
public:
    LineReader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}

    bool next(std::string& line) {
        while (std::getline(in_, line)) {
            ++line_number_;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty()) return true;
        }
        return false;
    }

    [[noreturn]] void fail(const std::string& message) const {
        throw ParseError(path_, line_number_, message);
    }

    [[noreturn]] void fail_at_end(const std::string& message) const {
        throw ParseError(path_, line_number_ + 1, message);
    }

    int line_number() const { return line_number_; }

private:
    std::istream& in_;
    std::string path_;
    int line_number_ = 0;
};

inline double parse_finite(const std::string& token, const LineReader& reader) {
    std::size_t used = 0;
    double value = 0.0;
    try {
        value = std::stod(token, &used);
    } catch (const std::exception&) {
        reader.fail("expected a decimal number, got '" + token + "'");
    }
    if (used != token.size()) {
        reader.fail("trailing characters after number '" + token + "'");
    }
    if (!std::isfinite(value)) {
        reader.fail("non-finite value '" + token + "'");
    }
    return value;
}

inline long parse_int(const std::string& token, const LineReader& reader) {
    try {
        std::size_t used = 0;
        const long value = std::stol(token, &used);
        if (used != token.size()) throw std::invalid_argument(token);
        return value;
    } catch (const std::exception&) {
        reader.fail("expected an integer, got '" + token + "'");
    }
}

inline std::vector<std::string> split_tokens(const std::string& line) {
    std::vector<std::string> tokens;
    std::istringstream stream(line);
    std::string token;
    while (stream >> token) tokens.push_back(token);
    return tokens;
}

} // namespace detail

/// Reads a DYNTRACE-SEQ file: a dense MATRIX block per step or a SPARSE
/// block of symmetric deltas applied to the previous snapshot (diagonal
/// entries are applied once). Step 0 must be a MATRIX block.
inline SequenceData read_sequence_file(std::istream& in, const std::string& path = "<stream>") {
    detail::LineReader reader(in, path);
    std::string line;

    if (!reader.next(line)) reader.fail_at_end("missing header line 'DYNTRACE-SEQ 1'");
    if (line != "DYNTRACE-SEQ 1") reader.fail("malformed header: expected 'DYNTRACE-SEQ 1'");

    if (!reader.next(line)) reader.fail_at_end("missing size line 'n <n> steps <m>'");
    auto tokens = detail::split_tokens(line);
    if (tokens.size() != 4 || tokens[0] != "n" || tokens[2] != "steps") {
        reader.fail("malformed size line: expected 'n <n> steps <m>'");
    }
    const long n = detail::parse_int(tokens[1], reader);
    const long steps = detail::parse_int(tokens[3], reader);
    if (n < 1 || steps < 1) reader.fail("n and steps must be positive");

    SequenceData data;
    for (long t = 0; t < steps; ++t) {
        if (!reader.next(line)) {
            reader.fail_at_end("missing block for step " + std::to_string(t));
        }
        tokens = detail::split_tokens(line);
        if (tokens.empty()) reader.fail("empty block header");
        if (tokens[0] == "MATRIX") {
            if (tokens.size() != 2 || detail::parse_int(tokens[1], reader) != t) {
                reader.fail("expected 'MATRIX " + std::to_string(t) + "'");
            }
            Matrix snapshot(n, n);
            for (long row = 0; row < n; ++row) {
                if (!reader.next(line)) {
                    reader.fail_at_end("truncated matrix block: expected " + std::to_string(n) +
                                       " rows, got " + std::to_string(row));
                }
                const auto values = detail::split_tokens(line);
                if (static_cast<long>(values.size()) != n) {
                    reader.fail("dimension mismatch: expected " + std::to_string(n) +
                                " values in row, got " + std::to_string(values.size()));
                }
                for (long col = 0; col < n; ++col) {
                    snapshot(row, col) = detail::parse_finite(values[static_cast<std::size_t>(col)],
                                                              reader);
                }
            }
            data.snapshots.push_back(snapshot);
        } else if (tokens[0] == "SPARSE") {
            if (t == 0) reader.fail("step 0 must be a MATRIX block");
            if (tokens.size() != 3 || detail::parse_int(tokens[1], reader) != t) {
                reader.fail("expected 'SPARSE " + std::to_string(t) + " <k>'");
            }
            const long k = detail::parse_int(tokens[2], reader);
            Matrix snapshot = data.snapshots.back();
            for (long entry = 0; entry < k; ++entry) {
                if (!reader.next(line)) {
                    reader.fail_at_end("truncated sparse block: expected " + std::to_string(k) +
                                       " entries, got " + std::to_string(entry));
                }
                const auto values = detail::split_tokens(line);
                if (values.size() != 3) {
                    reader.fail("expected 'i j value'");
                }
                const long i = detail::parse_int(values[0], reader);
                const long j = detail::parse_int(values[1], reader);
                if (i < 0 || i >= n || j < 0 || j >= n) {
                    reader.fail("index (" + std::to_string(i) + ", " + std::to_string(j) +
                                ") outside the " + std::to_string(n) + "-dimensional matrix");
                }
                const double value = detail::parse_finite(values[2], reader);
                snapshot(i, j) += value;
                if (i != j) snapshot(j, i) += value;
            }
            data.snapshots.push_back(snapshot);
        } else {
            reader.fail("unknown block '" + tokens[0] + "' (expected MATRIX or SPARSE)");
        }
    }
    return data;
}

inline SequenceData read_sequence_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open sequence file '" + path + "'");
    return read_sequence_file(in, path);
}

inline void write_sequence_file(std::ostream& out, const std::vector<Matrix>& snapshots) {
    if (snapshots.empty()) {
        throw std::invalid_argument("write_sequence_file: no snapshots");
    }
    const Eigen::Index n = snapshots.front().rows();
    out << "DYNTRACE-SEQ 1\n";
    out << "n " << n << " steps " << snapshots.size() << "\n";
    char buffer[40];
    for (std::size_t t = 0; t < snapshots.size(); ++t) {
        out << "MATRIX " << t << "\n";
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < n; ++j) {
                std::snprintf(buffer, sizeof buffer, "%.17g", snapshots[t](i, j));
                out << buffer << (j + 1 < n ? " " : "");
            }
            out << "\n";
        }
    }
}

/// Reads a DYNTRACE-GRAPH file: initial E edges, then one CLIQUE event line
/// per step with 2..6 vertices.
inline GraphStream read_graph_file(std::istream& in, const std::string& path = "<stream>") {
    detail::LineReader reader(in, path);
    std::string line;

    if (!reader.next(line)) reader.fail_at_end("missing header line 'DYNTRACE-GRAPH 1'");
    if (line != "DYNTRACE-GRAPH 1") reader.fail("malformed header: expected 'DYNTRACE-GRAPH 1'");

    if (!reader.next(line)) reader.fail_at_end("missing 'nodes <n>' line");
    auto tokens = detail::split_tokens(line);
    if (tokens.size() != 2 || tokens[0] != "nodes") reader.fail("expected 'nodes <n>'");
    const long n = detail::parse_int(tokens[1], reader);
    if (n < 1) reader.fail("node count must be positive");

    GraphStream graph;
    graph.node_count = static_cast<std::int32_t>(n);
    const auto check_vertex = [&](long v) {
        if (v < 0 || v >= n) {
            reader.fail("vertex " + std::to_string(v) + " outside [0, " + std::to_string(n) + ")");
        }
        return static_cast<std::int32_t>(v);
    };

    while (reader.next(line)) {
        tokens = detail::split_tokens(line);
        if (tokens[0] == "E") {
            if (!graph.events.empty()) reader.fail("edge line after the first CLIQUE event");
            if (tokens.size() != 3) reader.fail("expected 'E u v'");
            const auto u = check_vertex(detail::parse_int(tokens[1], reader));
            const auto v = check_vertex(detail::parse_int(tokens[2], reader));
            if (u == v) reader.fail("self-loop rejected");
            graph.initial_edges.emplace_back(u, v);
        } else if (tokens[0] == "CLIQUE") {
            if (tokens.size() < 3 || tokens.size() > 7) {
                reader.fail("CLIQUE takes between 2 and 6 vertices");
            }
            CliqueEvent event;
            for (std::size_t i = 1; i < tokens.size(); ++i) {
                event.vertices.push_back(check_vertex(detail::parse_int(tokens[i], reader)));
            }
            graph.events.push_back(std::move(event));
        } else {
            reader.fail("unknown line '" + tokens[0] + "' (expected E or CLIQUE)");
        }
    }
    return graph;
}

inline GraphStream read_graph_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open graph file '" + path + "'");
    return read_graph_file(in, path);
}

inline void write_graph_file(std::ostream& out, const GraphStream& graph) {
    out << "DYNTRACE-GRAPH 1\n";
    out << "nodes " << graph.node_count << "\n";
    for (const auto& [u, v] : graph.initial_edges) out << "E " << u << " " << v << "\n";
    for (const CliqueEvent& event : graph.events) {
        out << "CLIQUE";
        for (std::int32_t v : event.vertices) out << " " << v;
        out << "\n";
    }
}

} // namespace dyntrace

#endif // DYNTRACE_IO_HPP
