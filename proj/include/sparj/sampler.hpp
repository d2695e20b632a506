#pragma once

// Reversible-jump sampler over (A, M): model proposal, parameter proposal or
// mapping, then one joint Metropolis-Hastings accept/reject per iteration.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "sparj/error.hpp"
#include "sparj/lgssm.hpp"
#include "sparj/model_space.hpp"
#include "sparj/rng.hpp"
#include "sparj/sparsity_model.hpp"

namespace sparj {

/// Tuning constants. Defaults are the recommended values: pi0 = 0.8,
/// pi_minus1 = 0.5, lambda_j = 0.2, sigma = sigma_c = 0.1, and a unit
/// Laplace prior scale.
struct SamplerConfig {
    double pi0 = 0.8;
    double pi_minus1 = 0.5;
    double lambda_prior = 1.0;
    double lambda_j = 0.2;
    double sigma_walk = 0.1;
    double sigma_completion = 0.1;
    int n_iters = 15000;
    int burn_in = 5000;

    void validate() const
    {
        auto require = [](bool ok, const char* what) {
            if (!ok) {
                throw Error(std::string("invalid sampler config: ") + what);
            }
        };
        require(pi0 >= 0.0 && pi0 <= 1.0, "pi0 must lie in [0, 1]");
        require(pi_minus1 > 0.0 && pi_minus1 < 1.0, "pi_minus1 must lie in (0, 1)");
        require(lambda_prior >= 0.0, "lambda_prior must be non-negative");
        require(lambda_j >= 0.0 && lambda_j < 1.0, "lambda_j must lie in [0, 1)");
        require(sigma_walk > 0.0, "sigma_walk must be positive");
        require(sigma_completion > 0.0, "sigma_completion must be positive");
        require(n_iters >= 1, "n_iters must be positive");
        require(burn_in >= 0 && burn_in < n_iters, "burn_in must lie in [0, n_iters)");
    }
};

struct ChainState {
    Matrix A;
    SparsityModel model;
    double log_lik = 0.0;
};

struct Chain {
    std::vector<ChainState> states;
    long accept_count_within = 0;
    long propose_count_within = 0;
    long accept_count_jump = 0;
    long propose_count_jump = 0;
    long filter_evaluations = 0; // proposal likelihoods only; the initial one is not counted
    long filter_failures = 0;

    std::size_t size() const { return states.size(); }

    double within_acceptance_rate() const
    {
        return propose_count_within > 0 ? static_cast<double>(accept_count_within) / propose_count_within : 0.0;
    }

    double jump_acceptance_rate() const
    {
        return propose_count_jump > 0 ? static_cast<double>(accept_count_jump) / propose_count_jump : 0.0;
    }
};

struct LaplaceDist {
    double location = 0.0;
    double scale = 1.0;

    double log_pdf(double x) const { return -std::log(2.0 * scale) - std::abs(x - location) / scale; }
    double pdf(double x) const { return std::exp(log_pdf(x)); }
    double sample(Rng& rng) const { return rng.laplace(location, scale); }
};

/// Lambda = lambda (||A_prev||_1 - ||A_prop||_1), the log prior ratio of an
/// entrywise Laplace prior with its normalising constants dropped.
inline double lambda_penalty(const Matrix& A_prev, const Matrix& A_prop, double lambda_prior)
{
    if (A_prev.rows() != A_prop.rows() || A_prev.cols() != A_prop.cols()) {
        throw DimensionError("lambda_penalty: shape mismatch");
    }
    if (lambda_prior == 0.0) {
        return 0.0;
    }
    return lambda_prior * (A_prev.cwiseAbs().sum() - A_prop.cwiseAbs().sum());
}

struct ParameterProposal {
    Matrix A;
    double log_completion = 0.0;
};

/// Model the proposal was made from, reconstructed from the proposed model and the changed set.
inline SparsityModel previous_model(const ModelProposal& proposal)
{
    switch (proposal.kind) {
    case JumpKind::Sparser:
        return proposal.proposed.with_dense(proposal.changed_indices);
    case JumpKind::Denser:
        return proposal.proposed.with_sparse(proposal.changed_indices);
    case JumpKind::Retain:
        break;
    }
    return proposal.proposed;
}

/// Parameter move matching a model proposal.
///
///   Retain:  independent Laplace(a_ij, sigma_walk) steps on every dense entry.
///   Sparser: the changed entries are zeroed; log_completion = sum log g(a_I).
///   Denser:  u_i ~ g placed at the changed entries; log_completion = -sum log g(u_i).
///
/// g is Laplace(0, sigma_completion). Untouched entries are copied verbatim,
/// so the dimension-matching map has unit Jacobian.
inline ParameterProposal propose_parameter(const Matrix& A_prev, const ModelProposal& proposal, double sigma_walk,
                                           double sigma_completion, Rng& rng)
{
    const SparsityModel prev = previous_model(proposal);
    if (A_prev.rows() != prev.dim() || A_prev.cols() != prev.dim()) {
        throw DimensionError("propose_parameter: A does not match the model dimension");
    }
    for (int i = 0; i < prev.dim(); ++i) {
        for (int j = 0; j < prev.dim(); ++j) {
            if (!prev.is_dense(i, j) && A_prev(i, j) != 0.0) {
                throw Error("propose_parameter: A has a non-zero entry outside its model");
            }
        }
    }

    ParameterProposal out{A_prev, 0.0};
    const LaplaceDist completion{0.0, sigma_completion};
    switch (proposal.kind) {
    case JumpKind::Retain:
        for (const auto& idx : proposal.proposed.dense_indices()) {
            out.A(idx.row, idx.col) = rng.laplace(A_prev(idx.row, idx.col), sigma_walk);
        }
        break;
    case JumpKind::Sparser:
        for (const auto& idx : proposal.changed_indices) {
            out.log_completion += completion.log_pdf(A_prev(idx.row, idx.col));
            out.A(idx.row, idx.col) = 0.0;
        }
        break;
    case JumpKind::Denser:
        for (const auto& idx : proposal.changed_indices) {
            const double u = completion.sample(rng);
            out.log_completion -= completion.log_pdf(u);
            out.A(idx.row, idx.col) = u;
        }
        break;
    }
    return out;
}

/// Exact log-likelihood of A with every other parameter held fixed. Reuses one
/// parameter set so the sampler's hot loop only swaps the transition matrix.
class KalmanLikelihood {
public:
    KalmanLikelihood(const KnownParams& known, const ObservationSeries& obs)
        : params_(ModelParams::from_known(known, Matrix::Zero(known.H.cols(), known.H.cols()))), obs_(&obs)
    {
    }

    double operator()(const Matrix& A)
    {
        params_.A = A;
        return log_likelihood(params_, *obs_);
    }

private:
    ModelParams params_;
    const ObservationSeries* obs_;
};

struct StepDiagnostics {
    JumpKind kind = JumpKind::Retain;
    bool forced = false;
    int jump_length = 0;
    bool accepted = false;
    bool filter_failed = false;
    double log_accept = 0.0;
};

struct StepResult {
    ChainState state;
    StepDiagnostics diagnostics;
};

/// One iteration with a caller-supplied likelihood `loglik(A) -> double`,
/// which may throw FilterError. Exactly one likelihood call.
template <class LogLikelihood>
StepResult sparj_step(const ChainState& state, LogLikelihood& loglik, const SamplerConfig& config, Rng& rng)
{
    StepResult out;
    const ModelProposal model = propose_model(state.model, config.pi0, config.pi_minus1, config.lambda_j, rng);
    ParameterProposal param = propose_parameter(state.A, model, config.sigma_walk, config.sigma_completion, rng);

    double proposed_log_lik = -std::numeric_limits<double>::infinity();
    try {
        proposed_log_lik = loglik(param.A);
    } catch (const FilterError&) {
        out.diagnostics.filter_failed = true;
    }

    const double correction =
        param.log_completion + log_correction(model, state.model, config.pi_minus1, config.lambda_j);
    const double log_accept =
        proposed_log_lik - state.log_lik + lambda_penalty(state.A, param.A, config.lambda_prior) + correction;

    out.diagnostics.kind = model.kind;
    out.diagnostics.forced = model.forced;
    out.diagnostics.jump_length = static_cast<int>(model.changed_indices.size());
    out.diagnostics.log_accept = log_accept;
    out.diagnostics.accepted = std::log(rng.uniform()) < log_accept;

    if (out.diagnostics.accepted) {
        out.state = ChainState{std::move(param.A), model.proposed, proposed_log_lik};
    } else {
        out.state = state;
    }
    return out;
}

/// One iteration with the Kalman likelihood of A given the known parameters.
inline StepResult sparj_step(const ChainState& state, const KnownParams& known, const ObservationSeries& obs,
                             const SamplerConfig& config, Rng& rng)
{
    KalmanLikelihood loglik(known, obs);
    return sparj_step(state, loglik, config, rng);
}

/// Runs config.n_iters iterations from A0 under the fully dense model. The
/// initial likelihood must evaluate; its failure is fatal.
template <class LogLikelihood>
Chain run_chain(const Matrix& A0, LogLikelihood& loglik, const SamplerConfig& config, Rng& rng)
{
    config.validate();
    if (A0.rows() != A0.cols() || A0.rows() == 0) {
        throw DimensionError("A0 must be a non-empty square matrix");
    }
    if (!A0.allFinite()) {
        throw Error("A0 contains non-finite entries");
    }

    ChainState state{A0, SparsityModel::fully_dense(static_cast<int>(A0.rows())), loglik(A0)};
    Chain chain;
    chain.states.reserve(static_cast<std::size_t>(config.n_iters));
    for (int n = 0; n < config.n_iters; ++n) {
        StepResult step = sparj_step(state, loglik, config, rng);
        const StepDiagnostics& d = step.diagnostics;
        ++chain.filter_evaluations;
        chain.filter_failures += d.filter_failed ? 1 : 0;
        if (d.kind == JumpKind::Retain) {
            ++chain.propose_count_within;
            chain.accept_count_within += d.accepted ? 1 : 0;
        } else {
            ++chain.propose_count_jump;
            chain.accept_count_jump += d.accepted ? 1 : 0;
        }
        state = std::move(step.state);
        chain.states.push_back(state);
    }
    return chain;
}

namespace detail {

inline void validate_inputs(const KnownParams& known, const Matrix& A0, const ObservationSeries& obs)
{
    ModelParams::from_known(known, A0).validate();
    obs.validate();
}

} // namespace detail

/// Sparse reversible-jump chain for A.
inline Chain sparj_run(const KnownParams& known, const Matrix& A0, const ObservationSeries& obs,
                       const SamplerConfig& config, std::uint64_t seed)
{
    detail::validate_inputs(known, A0, obs);
    KalmanLikelihood loglik(known, obs);
    Rng rng(seed);
    return run_chain(A0, loglik, config, rng);
}

/// Reference random-walk chain that never leaves the fully dense model. It is
/// the same loop with the retention probability pinned to 1, so it consumes
/// the random stream identically to a sparj_run with pi0 = 1.
inline Chain dense_mcmc_run(const KnownParams& known, const Matrix& A0, const ObservationSeries& obs,
                            const SamplerConfig& config, std::uint64_t seed)
{
    SamplerConfig dense = config;
    dense.pi0 = 1.0;
    return sparj_run(known, A0, obs, dense, seed);
}

} // namespace sparj
