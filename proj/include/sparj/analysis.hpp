#pragma once

// Posterior summaries and sparsity-recovery metrics over sampler output.
//
// Metric convention: a sparse entry is a positive, a dense entry a negative.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sparj/error.hpp"
#include "sparj/lgssm.hpp"
#include "sparj/rng.hpp"
#include "sparj/sampler.hpp"
#include "sparj/sparsity_model.hpp"

namespace sparj {

namespace detail {

inline std::size_t first_retained(const Chain& chain, int burn_in)
{
    if (burn_in < 0 || static_cast<std::size_t>(burn_in) >= chain.size()) {
        throw Error("burn-in " + std::to_string(burn_in) + " leaves no samples in a chain of length " +
                    std::to_string(chain.size()));
    }
    return static_cast<std::size_t>(burn_in);
}

} // namespace detail

/// Entrywise mean of the states after the first `burn_in`.
inline Matrix posterior_mean(const Chain& chain, int burn_in)
{
    const std::size_t first = detail::first_retained(chain, burn_in);
    Matrix sum = Matrix::Zero(chain.states[first].A.rows(), chain.states[first].A.cols());
    for (std::size_t n = first; n < chain.size(); ++n) {
        sum += chain.states[n].A;
    }
    return sum / static_cast<double>(chain.size() - first);
}

/// Fraction of post-burn-in samples in which each entry is dense.
inline Matrix dense_frequency(const Chain& chain, int burn_in)
{
    const std::size_t first = detail::first_retained(chain, burn_in);
    const int dx = chain.states[first].model.dim();
    Matrix counts = Matrix::Zero(dx, dx);
    for (std::size_t n = first; n < chain.size(); ++n) {
        for (const auto& idx : chain.states[n].model.dense_indices()) {
            counts(idx.row, idx.col) += 1.0;
        }
    }
    return counts / static_cast<double>(chain.size() - first);
}

/// Majority vote: sparse iff strictly more than half of the post-burn-in
/// samples have the entry sparse. Ties stay dense.
inline SparsityModel classify_sparsity(const Chain& chain, int burn_in)
{
    const std::size_t first = detail::first_retained(chain, burn_in);
    const int dx = chain.states[first].model.dim();
    const long retained = static_cast<long>(chain.size() - first);
    std::vector<long> dense_votes(static_cast<std::size_t>(dx) * dx, 0);
    for (std::size_t n = first; n < chain.size(); ++n) {
        for (const auto& idx : chain.states[n].model.dense_indices()) {
            ++dense_votes[static_cast<std::size_t>(idx.row * dx + idx.col)];
        }
    }
    std::vector<MatrixIndex> dense;
    for (int i = 0; i < dx; ++i) {
        for (int j = 0; j < dx; ++j) {
            const long sparse_votes = retained - dense_votes[static_cast<std::size_t>(i * dx + j)];
            if (2 * sparse_votes <= retained) {
                dense.push_back({i, j});
            }
        }
    }
    return SparsityModel::from_indices(dx, dense);
}

struct SparsityMetrics {
    double rmse = 0.0;
    double specificity = 0.0;
    double recall = 0.0;
    std::optional<double> precision; // undefined when nothing is predicted sparse
    double f1 = 0.0;
    int true_positives = 0;
    int false_positives = 0;
    int true_negatives = 0;
    int false_negatives = 0;
};

/// Confusion-matrix metrics of `est_mask` against `true_mask` plus the
/// entrywise RMSE of A_est over all dx^2 entries.
inline SparsityMetrics compute_metrics(const SparsityModel& est_mask, const SparsityModel& true_mask,
                                       const Matrix& A_est, const Matrix& A_true)
{
    const int dx = true_mask.dim();
    if (est_mask.dim() != dx || A_est.rows() != dx || A_est.cols() != dx || A_true.rows() != dx ||
        A_true.cols() != dx) {
        throw DimensionError("compute_metrics: inconsistent dimensions");
    }
    SparsityMetrics m;
    for (int i = 0; i < dx; ++i) {
        for (int j = 0; j < dx; ++j) {
            const bool est_sparse = !est_mask.is_dense(i, j);
            const bool true_sparse = !true_mask.is_dense(i, j);
            if (est_sparse && true_sparse) {
                ++m.true_positives;
            } else if (est_sparse) {
                ++m.false_positives;
            } else if (true_sparse) {
                ++m.false_negatives;
            } else {
                ++m.true_negatives;
            }
        }
    }
    auto ratio = [](int num, int den) { return den > 0 ? static_cast<double>(num) / den : 0.0; };
    const int negatives = m.true_negatives + m.false_positives;
    m.specificity = negatives > 0 ? ratio(m.true_negatives, negatives) : 1.0;
    m.recall = ratio(m.true_positives, m.true_positives + m.false_negatives);
    const int predicted_positive = m.true_positives + m.false_positives;
    if (predicted_positive > 0) {
        m.precision = ratio(m.true_positives, predicted_positive);
    }
    if (m.precision && *m.precision + m.recall > 0.0) {
        m.f1 = 2.0 * *m.precision * m.recall / (*m.precision + m.recall);
    }
    m.rmse = std::sqrt((A_est - A_true).squaredNorm() / static_cast<double>(dx * dx));
    return m;
}

/// Probabilistic Granger graph. prob(i, j) is the probability that A_ij is
/// dense, i.e. that there is an edge j -> i.
struct EdgeGraph {
    int dx = 0;
    Matrix prob;
    std::vector<std::string> labels;
};

inline std::vector<std::string> default_labels(int dx)
{
    std::vector<std::string> labels;
    for (int i = 0; i < dx; ++i) {
        labels.push_back("x" + std::to_string(i + 1));
    }
    return labels;
}

/// Edge probabilities from the pooled post-burn-in samples of all chains.
inline EdgeGraph edge_probabilities(std::span<const Chain> chains, int burn_in, std::vector<std::string> labels = {})
{
    if (chains.empty()) {
        throw Error("edge_probabilities needs at least one chain");
    }
    const int dx = chains.front().states.at(0).model.dim();
    Matrix counts = Matrix::Zero(dx, dx);
    double total = 0.0;
    for (const Chain& chain : chains) {
        const std::size_t first = detail::first_retained(chain, burn_in);
        if (chain.states[first].model.dim() != dx) {
            throw DimensionError("edge_probabilities: chains have different dimensions");
        }
        for (std::size_t n = first; n < chain.size(); ++n) {
            for (const auto& idx : chain.states[n].model.dense_indices()) {
                counts(idx.row, idx.col) += 1.0;
            }
        }
        total += static_cast<double>(chain.size() - first);
    }
    if (labels.empty()) {
        labels = default_labels(dx);
    }
    if (static_cast<int>(labels.size()) != dx) {
        throw DimensionError("edge_probabilities: label count does not match dx");
    }
    return {dx, counts / total, std::move(labels)};
}

/// Percentile bootstrap interval for the mean of per-chain edge frequencies.
inline std::pair<double, double> bootstrap_edge_interval(std::span<const double> frequencies, double level, int n_boot,
                                                         Rng& rng)
{
    if (frequencies.size() < 2) {
        throw Error("bootstrap_edge_interval needs at least two chains");
    }
    if (!(level > 0.0 && level < 1.0) || n_boot < 1) {
        throw Error("bootstrap_edge_interval: level must lie in (0, 1) and n_boot be positive");
    }
    const auto n = static_cast<std::int64_t>(frequencies.size());
    std::vector<double> means(static_cast<std::size_t>(n_boot));
    for (auto& mean : means) {
        double sum = 0.0;
        for (std::int64_t k = 0; k < n; ++k) {
            sum += frequencies[static_cast<std::size_t>(rng.uniform_int(0, n - 1))];
        }
        mean = sum / static_cast<double>(n);
    }
    std::sort(means.begin(), means.end());
    // Linear interpolation between order statistics.
    auto quantile = [&means](double p) {
        const double pos = p * static_cast<double>(means.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, means.size() - 1);
        const double frac = pos - static_cast<double>(lo);
        return means[lo] + frac * (means[hi] - means[lo]);
    };
    const double tail = 0.5 * (1.0 - level);
    return {quantile(tail), quantile(1.0 - tail)};
}

struct TraceDiagnostics {
    std::vector<double> spectral_norms;
    std::vector<int> sparse_counts;
};

/// Per-iteration spectral norm of A_n and number of sparse entries of M_n.
inline TraceDiagnostics trace_diagnostics(const Chain& chain)
{
    TraceDiagnostics out;
    out.spectral_norms.reserve(chain.size());
    out.sparse_counts.reserve(chain.size());
    for (const auto& state : chain.states) {
        out.spectral_norms.push_back(spectral_norm(state.A));
        out.sparse_counts.push_back(state.model.sparse_count());
    }
    return out;
}

inline constexpr double kMaxPenwidth = 5.0;

namespace detail {

inline std::string dot_quote(const std::string& s)
{
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') {
            out += '\\';
        }
        out += c;
    }
    return out + "\"";
}

} // namespace detail

/// Graphviz digraph with one node per state and an edge j -> i for every
/// off-diagonal prob(i, j) >= threshold (and > 0). penwidth is proportional to
/// the probability. With `include_self_loops` every node also gets its
/// self-loop regardless of the threshold, so persistence is always visible.
inline std::string export_dot(const EdgeGraph& graph, double threshold, bool include_self_loops)
{
    if (!(threshold >= 0.0 && threshold <= 1.0)) {
        throw Error("export_dot: threshold must lie in [0, 1]");
    }
    std::ostringstream out;
    out << std::fixed << std::setprecision(4);
    out << "digraph granger {\n";
    for (int i = 0; i < graph.dx; ++i) {
        out << "  n" << i << " [label=" << detail::dot_quote(graph.labels.at(static_cast<std::size_t>(i))) << "];\n";
    }
    for (int to = 0; to < graph.dx; ++to) {
        for (int from = 0; from < graph.dx; ++from) {
            const double p = graph.prob(to, from);
            const bool self = to == from;
            if (self ? !include_self_loops : (p <= 0.0 || p < threshold)) {
                continue;
            }
            out << "  n" << from << " -> n" << to << " [penwidth=" << kMaxPenwidth * p << ", label=\"" << p
                << "\"];\n";
        }
    }
    out << "}\n";
    return out.str();
}

} // namespace sparj
