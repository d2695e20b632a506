#pragma once

// Model-jump machinery: truncated-Poisson jump lengths, the model proposal
// kernel and the log correction that keeps the jump chain in detailed balance.

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sparj/error.hpp"
#include "sparj/rng.hpp"
#include "sparj/sparsity_model.hpp"

namespace sparj {

enum class JumpKind { Retain, Sparser, Denser };

inline const char* to_string(JumpKind kind)
{
    switch (kind) {
    case JumpKind::Retain:
        return "retain";
    case JumpKind::Sparser:
        return "sparser";
    case JumpKind::Denser:
        return "denser";
    }
    return "?";
}

namespace detail {

inline void require_support(int a, int b)
{
    if (a > b) {
        throw Error("truncated Poisson support is empty: a = " + std::to_string(a) + " > b = " + std::to_string(b));
    }
    if (a < 0) {
        throw Error("truncated Poisson support must be non-negative");
    }
}

/// log sum_{m=a}^{b} lambda^{m-a} a!/m!, i.e. the normaliser rescaled by its
/// first term. Well defined at lambda = 0 (value 0), which yields the point
/// mass at a.
inline double log_scaled_normaliser(double lambda, int a, int b)
{
    double term = 1.0;
    double sum = 1.0;
    for (int m = a + 1; m <= b; ++m) {
        term *= lambda / static_cast<double>(m);
        if (term == 0.0) {
            break;
        }
        sum += term;
    }
    return std::log(sum);
}

} // namespace detail

/// log TPoi(n; lambda, a, b); -inf outside the support.
inline double tpoi_log_pmf(int n, double lambda, int a, int b)
{
    detail::require_support(a, b);
    if (lambda < 0.0) {
        throw Error("truncated Poisson rate must be non-negative");
    }
    if (n < a || n > b) {
        return -std::numeric_limits<double>::infinity();
    }
    if (n == a) {
        return -detail::log_scaled_normaliser(lambda, a, b);
    }
    if (lambda == 0.0) {
        return -std::numeric_limits<double>::infinity();
    }
    return static_cast<double>(n - a) * std::log(lambda) + std::lgamma(a + 1.0) - std::lgamma(n + 1.0) -
           detail::log_scaled_normaliser(lambda, a, b);
}

/// Poisson(lambda) restricted and renormalised to the integers in [a, b].
/// lambda = 0 is the point mass at a.
inline double tpoi_pmf(int n, double lambda, int a, int b)
{
    return std::exp(tpoi_log_pmf(n, lambda, a, b));
}

/// Inverse-CDF draw over the finite support. Consumes one uniform.
inline int tpoi_sample(double lambda, int a, int b, Rng& rng)
{
    detail::require_support(a, b);
    if (lambda < 0.0) {
        throw Error("truncated Poisson rate must be non-negative");
    }
    const double target = rng.uniform() * std::exp(detail::log_scaled_normaliser(lambda, a, b));
    double term = 1.0;
    double cumulative = 1.0;
    for (int n = a; n < b; ++n) {
        if (target <= cumulative) {
            return n;
        }
        term *= lambda / static_cast<double>(n + 1);
        cumulative += term;
    }
    return b;
}

struct ModelProposal {
    SparsityModel proposed;
    JumpKind kind = JumpKind::Retain;
    std::vector<MatrixIndex> changed_indices;
    bool forced = false; // direction was fixed because the previous model was fully sparse or fully dense
};

/// One draw of the model-jump kernel.
///
/// Retains `prev` with probability pi0. Otherwise jumps sparser with
/// probability pi_minus1 (forced denser from the fully sparse model, forced
/// sparser from the fully dense one) by k ~ TPoi(lambda_j, 1, D) or
/// TPoi(lambda_j, 1, S) entries chosen uniformly without replacement.
///
/// Draw order is fixed: retain, direction, length, then k index draws.
inline ModelProposal propose_model(const SparsityModel& prev, double pi0, double pi_minus1, double lambda_j, Rng& rng)
{
    ModelProposal out;
    if (rng.uniform() < pi0) {
        out.proposed = prev;
        return out;
    }

    const double direction_draw = rng.uniform();
    const int dense = prev.dense_count();
    if (dense == 0) {
        out.kind = JumpKind::Denser;
        out.forced = true;
    } else if (dense == prev.size()) {
        out.kind = JumpKind::Sparser;
        out.forced = true;
    } else {
        out.kind = direction_draw < pi_minus1 ? JumpKind::Sparser : JumpKind::Denser;
    }

    std::vector<MatrixIndex> eligible =
        out.kind == JumpKind::Sparser ? prev.dense_indices() : prev.sparse_indices();
    const int k = tpoi_sample(lambda_j, 1, static_cast<int>(eligible.size()), rng);

    // Partial Fisher-Yates: the first k slots end up a uniform k-subset.
    const auto n = static_cast<std::int64_t>(eligible.size());
    for (std::int64_t i = 0; i < k; ++i) {
        const auto j = rng.uniform_int(i, n - 1);
        std::swap(eligible[static_cast<std::size_t>(i)], eligible[static_cast<std::size_t>(j)]);
    }
    eligible.resize(static_cast<std::size_t>(k));
    out.changed_indices = std::move(eligible);
    out.proposed = out.kind == JumpKind::Sparser ? prev.with_sparse(out.changed_indices)
                                                 : prev.with_dense(out.changed_indices);
    return out;
}

struct Adjacency {
    JumpKind direction = JumpKind::Retain;
    int k = 0;

    friend bool operator==(const Adjacency&, const Adjacency&) = default;
};

/// (Denser, k) when m1 has exactly k dense entries m2 lacks and nothing the
/// other way round; (Sparser, k) for the mirror; nullopt when the models are
/// equal or differ in both directions.
inline std::optional<Adjacency> k_adjacency(const SparsityModel& m1, const SparsityModel& m2)
{
    if (m1.dim() != m2.dim()) {
        throw DimensionError("k_adjacency requires models of equal dimension");
    }
    int only_in_first = 0;
    int only_in_second = 0;
    for (int i = 0; i < m1.dim(); ++i) {
        for (int j = 0; j < m1.dim(); ++j) {
            const bool a = m1.is_dense(i, j);
            const bool b = m2.is_dense(i, j);
            only_in_first += static_cast<int>(a && !b);
            only_in_second += static_cast<int>(b && !a);
        }
    }
    if (only_in_first > 0 && only_in_second == 0) {
        return Adjacency{JumpKind::Denser, only_in_first};
    }
    if (only_in_second > 0 && only_in_first == 0) {
        return Adjacency{JumpKind::Sparser, only_in_second};
    }
    return std::nullopt;
}

/// The direction-probability ratio r for a jump of `jump` entries from a model
/// with `dense_before` dense entries, in the convention where the sparser
/// correction multiplies by r and the denser correction by 1/r.
///
/// Interior: r = (1 - pi_minus1) / pi_minus1. A jump whose forward or reverse
/// direction is forced (to/from the fully sparse or fully dense model) swaps
/// in the corresponding boundary value; a jump between the two extremes has
/// r = 1.
inline double direction_ratio(JumpKind kind, int jump, int dense_before, int dx2, double pi_minus1)
{
    if (kind == JumpKind::Sparser) {
        const double forward = dense_before == dx2 ? 1.0 : pi_minus1;
        const double reverse = dense_before - jump == 0 ? 1.0 : 1.0 - pi_minus1;
        return reverse / forward;
    }
    if (kind == JumpKind::Denser) {
        const double forward = dense_before == 0 ? 1.0 : 1.0 - pi_minus1;
        const double reverse = dense_before + jump == dx2 ? 1.0 : pi_minus1;
        // Expressed as r, i.e. the reciprocal of the reverse/forward ratio.
        return forward / reverse;
    }
    return 1.0;
}

/// Log ratio of reverse to forward model-jump probability for a jump of J
/// entries, evaluated entirely in log space:
///
///   sparser: log r + log TPoi(J;1,S+J) - log TPoi(J;1,D) + log(S! D! / ((S+J)! (D-J)!))
///   denser:  -log r + log TPoi(J;1,D+J) - log TPoi(J;1,S) + log(S! D! / ((D+J)! (S-J)!))
///
/// with D, S counted before the jump. The J-dependent parts of the two
/// truncated-Poisson masses cancel, so only their normalisers enter; this
/// keeps the ratio finite for lambda_j = 0.
inline double log_correction(JumpKind kind, int jump, int dense_before, int sparse_before, double pi_minus1,
                             double lambda_j, int dx2)
{
    if (kind == JumpKind::Retain) {
        return 0.0;
    }
    if (dense_before < 0 || sparse_before < 0 || dense_before + sparse_before != dx2) {
        throw Error("log_correction: D + S must equal dx^2");
    }
    if (jump < 1) {
        throw Error("log_correction: jump length must be at least 1");
    }
    if (!(pi_minus1 > 0.0 && pi_minus1 < 1.0)) {
        throw Error("log_correction: pi_minus1 must lie strictly between 0 and 1");
    }
    const double d = dense_before;
    const double s = sparse_before;
    const double j = jump;
    const double r = direction_ratio(kind, jump, dense_before, dx2, pi_minus1);

    if (kind == JumpKind::Sparser) {
        if (jump > dense_before) {
            throw Error("log_correction: sparser jump longer than the dense count");
        }
        return std::log(r) + detail::log_scaled_normaliser(lambda_j, 1, dense_before) -
               detail::log_scaled_normaliser(lambda_j, 1, sparse_before + jump) + std::lgamma(s + 1.0) +
               std::lgamma(d + 1.0) - std::lgamma(s + j + 1.0) - std::lgamma(d - j + 1.0);
    }
    if (jump > sparse_before) {
        throw Error("log_correction: denser jump longer than the sparse count");
    }
    return -std::log(r) + detail::log_scaled_normaliser(lambda_j, 1, sparse_before) -
           detail::log_scaled_normaliser(lambda_j, 1, dense_before + jump) + std::lgamma(s + 1.0) +
           std::lgamma(d + 1.0) - std::lgamma(d + j + 1.0) - std::lgamma(s - j + 1.0);
}

/// Correction for a concrete proposal out of `prev`.
inline double log_correction(const ModelProposal& proposal, const SparsityModel& prev, double pi_minus1,
                             double lambda_j)
{
    return log_correction(proposal.kind, static_cast<int>(proposal.changed_indices.size()), prev.dense_count(),
                          prev.sparse_count(), pi_minus1, lambda_j, prev.size());
}

} // namespace sparj
