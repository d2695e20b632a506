#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "sparj/analysis.hpp"
#include "sparj/experiment.hpp"
#include "sparj/sampler.hpp"

using namespace sparj;

namespace {

KnownParams scalar_known()
{
    return {Matrix::Ones(1, 1), Matrix::Ones(1, 1), Matrix::Ones(1, 1), Vector::Zero(1), Matrix::Ones(1, 1)};
}

ObservationSeries scalar_data(double a_true, int T, std::uint64_t seed)
{
    Rng rng(seed);
    return simulate(ModelParams::from_known(scalar_known(), Matrix::Constant(1, 1, a_true)), T, rng).second;
}

struct CountingLikelihood {
    KalmanLikelihood inner;
    long calls = 0;

    double operator()(const Matrix& A)
    {
        ++calls;
        return inner(A);
    }
};

struct RecordingConstant {
    Matrix last;

    double operator()(const Matrix& A)
    {
        last = A;
        return 0.0;
    }
};

struct AlwaysFails {
    bool armed = false;

    double operator()(const Matrix&)
    {
        if (armed) {
            throw FilterError("forced failure", 1);
        }
        return 0.0;
    }
};

struct Iso3Fixture {
    RegimeData data;
    SamplerInputs inputs;
    SamplerConfig config;
};

Iso3Fixture iso3(int run)
{
    ExperimentSpec spec = regime_defaults(Regime::Iso3);
    spec.seed = 77;
    Iso3Fixture f{build_regime(spec, run_seed(spec, run, SeedPurpose::Data)), {}, spec.sampler};
    f.inputs = prepare_sampler_inputs(spec, f.data, run_seed(spec, run, SeedPurpose::Init));
    return f;
}

} // namespace

TEST(LambdaPenalty, Examples)
{
    const Matrix a{{0.5, -1.0}, {0.0, 2.0}};
    EXPECT_EQ(lambda_penalty(a, a, 1.3), 0.0);
    EXPECT_EQ(lambda_penalty(a, Matrix::Zero(2, 2), 0.0), 0.0);
    EXPECT_NEAR(lambda_penalty(Matrix::Constant(1, 1, 0.5), Matrix::Constant(1, 1, 0.2), 1.0), 0.3, 1e-15);
    EXPECT_THROW(lambda_penalty(a, Matrix::Zero(1, 1), 1.0), DimensionError);
}

TEST(LaplaceDist, IntegratesToOne)
{
    const LaplaceDist g{0.3, 0.7};
    const double total = oracle::trapezoid([&g](double x) { return g.pdf(x); }, -40.0, 40.0, 400001);
    EXPECT_NEAR(total, 1.0, 1e-6);
}

TEST(ProposeParameter, SparserRecordsCompletionDensity)
{
    const auto prev = SparsityModel::fully_dense(2);
    const Matrix A{{0.4, -0.3}, {0.2, 0.9}};
    ModelProposal p{prev.with_sparse({{0, 1}}), JumpKind::Sparser, {{0, 1}}, true};
    Rng rng(1);
    const auto out = propose_parameter(A, p, 0.1, 0.1, rng);
    EXPECT_EQ(out.A(0, 1), 0.0);
    EXPECT_EQ(out.A(0, 0), 0.4);
    EXPECT_EQ(out.A(1, 0), 0.2);
    EXPECT_EQ(out.A(1, 1), 0.9);
    EXPECT_NEAR(out.log_completion, (LaplaceDist{0.0, 0.1}.log_pdf(-0.3)), 1e-15);
}

TEST(ProposeParameter, DenserRecordsNegativeCompletionDensity)
{
    const auto prev = SparsityModel::from_bitstring("1001");
    const Matrix A{{0.4, 0.0}, {0.0, 0.9}};
    ModelProposal p{prev.with_dense({{1, 0}}), JumpKind::Denser, {{1, 0}}, false};
    Rng rng(2);
    const auto out = propose_parameter(A, p, 0.1, 0.25, rng);
    EXPECT_NE(out.A(1, 0), 0.0);
    EXPECT_EQ(out.A(0, 1), 0.0);
    EXPECT_NEAR(out.log_completion, -(LaplaceDist{0.0, 0.25}.log_pdf(out.A(1, 0))), 1e-15);
}

TEST(ProposeParameter, TinyWalkBarelyMoves)
{
    const auto prev = SparsityModel::from_bitstring("1101");
    const Matrix A{{0.4, 0.1}, {0.0, 0.9}};
    ModelProposal p{prev, JumpKind::Retain, {}, false};
    Rng rng(3);
    for (int k = 0; k < 1000; ++k) {
        const auto out = propose_parameter(A, p, 1e-12, 0.1, rng);
        EXPECT_LT((out.A - A).cwiseAbs().maxCoeff(), 1e-9);
        EXPECT_EQ(out.A(1, 0), 0.0);
        EXPECT_EQ(out.log_completion, 0.0);
    }
}

TEST(ProposeParameter, RejectsInconsistentMatrix)
{
    const auto prev = SparsityModel::from_bitstring("1001");
    const Matrix A{{0.4, 0.1}, {0.0, 0.9}};
    ModelProposal p{prev, JumpKind::Retain, {}, false};
    Rng rng(4);
    EXPECT_THROW(propose_parameter(A, p, 0.1, 0.1, rng), Error);
}

TEST(SparjStep, IdentityProposalAlwaysAccepted)
{
    const auto obs = scalar_data(0.5, 20, 5);
    SamplerConfig config;
    config.pi0 = 1.0;
    const ModelParams p = ModelParams::from_known(scalar_known(), Matrix::Zero(1, 1));
    ChainState state{Matrix::Zero(1, 1), SparsityModel::fully_sparse(1), log_likelihood(p, obs)};
    Rng rng(6);
    for (int k = 0; k < 50; ++k) {
        const StepResult r = sparj_step(state, scalar_known(), obs, config, rng);
        EXPECT_EQ(r.diagnostics.log_accept, 0.0);
        EXPECT_TRUE(r.diagnostics.accepted);
        EXPECT_EQ(r.state.A, state.A);
    }
}

TEST(SparjStep, PenaltyLowersAcceptanceForLargerNorm)
{
    SamplerConfig config;
    config.pi0 = 1.0;
    config.lambda_prior = 2.0;
    config.sigma_walk = 0.5;
    ChainState state{Matrix::Constant(1, 1, 0.3), SparsityModel::fully_dense(1), 0.0};
    RecordingConstant loglik;
    Rng rng(7);
    int larger = 0;
    int smaller = 0;
    for (int k = 0; k < 200; ++k) {
        const StepResult r = sparj_step(state, loglik, config, rng);
        const double prop = std::abs(loglik.last(0, 0));
        EXPECT_NEAR(r.diagnostics.log_accept, 2.0 * (0.3 - prop), 1e-15);
        if (prop > 0.3) {
            EXPECT_LT(r.diagnostics.log_accept, 0.0);
            ++larger;
        } else if (prop < 0.3) {
            EXPECT_GT(r.diagnostics.log_accept, 0.0);
            ++smaller;
        }
    }
    EXPECT_GT(larger, 0);
    EXPECT_GT(smaller, 0);
}

TEST(SparjStep, FilterFailureIsRejection)
{
    SamplerConfig config;
    config.n_iters = 20;
    config.burn_in = 0;
    AlwaysFails loglik;
    Rng rng(8);
    ChainState state{Matrix::Constant(2, 2, 0.1), SparsityModel::fully_dense(2), 0.0};
    loglik.armed = true;
    const StepResult r = sparj_step(state, loglik, config, rng);
    EXPECT_TRUE(r.diagnostics.filter_failed);
    EXPECT_FALSE(r.diagnostics.accepted);
    EXPECT_EQ(r.state.A, state.A);

    struct FailAfterFirst {
        int calls = 0;
        double operator()(const Matrix&)
        {
            if (calls++ > 0) {
                throw FilterError("forced failure", 3);
            }
            return 0.0;
        }
    } later;
    const Chain chain = run_chain(Matrix::Constant(2, 2, 0.1), later, config, rng);
    EXPECT_EQ(chain.filter_failures, 20);
    EXPECT_EQ(chain.accept_count_within + chain.accept_count_jump, 0);
}

TEST(SparjRun, OneLikelihoodPerIteration)
{
    const auto obs = scalar_data(0.5, 30, 9);
    SamplerConfig config;
    config.n_iters = 500;
    config.burn_in = 100;
    CountingLikelihood loglik{KalmanLikelihood(scalar_known(), obs)};
    Rng rng(10);
    const Chain chain = run_chain(Matrix::Constant(1, 1, 0.2), loglik, config, rng);
    EXPECT_EQ(chain.size(), 500u);
    EXPECT_EQ(chain.filter_evaluations, 500);
    // The extra call is the initial likelihood of A0.
    EXPECT_EQ(loglik.calls, 501);
    EXPECT_EQ(chain.propose_count_within + chain.propose_count_jump, 500);
}

TEST(SparjRun, SingleIteration)
{
    const auto obs = scalar_data(0.5, 30, 11);
    SamplerConfig config;
    config.n_iters = 1;
    config.burn_in = 0;
    EXPECT_EQ(sparj_run(scalar_known(), Matrix::Constant(1, 1, 0.1), obs, config, 1).size(), 1u);
}

TEST(SparjRun, BadInitialisationIsFatal)
{
    const auto obs = scalar_data(0.5, 30, 12);
    SamplerConfig config;
    config.n_iters = 10;
    config.burn_in = 0;
    KnownParams degenerate = scalar_known();
    degenerate.Q.setZero();
    degenerate.R.setZero();
    degenerate.P0.setZero();
    EXPECT_THROW(sparj_run(degenerate, Matrix::Constant(1, 1, 0.1), obs, config, 1), FilterError);
    EXPECT_THROW(sparj_run(scalar_known(), Matrix::Constant(1, 1, std::nan("")), obs, config, 1), Error);
    config.burn_in = 10;
    EXPECT_THROW(sparj_run(scalar_known(), Matrix::Constant(1, 1, 0.1), obs, config, 1), Error);
}

TEST(SparjRun, ExactZerosAndConsistentLikelihoods)
{
    const Iso3Fixture f = iso3(0);
    SamplerConfig config = f.config;
    config.n_iters = 3000;
    config.burn_in = 1000;
    const Chain chain = sparj_run(f.inputs.known, f.inputs.A0, f.data.obs, config, 4242);
    ASSERT_EQ(chain.size(), 3000u);
    int jumps_seen = 0;
    for (std::size_t n = 0; n < chain.size(); ++n) {
        const ChainState& s = chain.states[n];
        for (const auto& idx : s.model.sparse_indices()) {
            ASSERT_EQ(s.A(idx.row, idx.col), 0.0) << "iteration " << n;
        }
        if (n % 97 == 0) {
            EXPECT_EQ(s.log_lik, log_likelihood(ModelParams::from_known(f.inputs.known, s.A), f.data.obs));
        }
        jumps_seen += s.model.sparse_count() > 0 ? 1 : 0;
    }
    EXPECT_GT(jumps_seen, 0);
}

TEST(SparjRun, AcceptanceRateBand)
{
    for (int run = 0; run < 3; ++run) {
        const Iso3Fixture f = iso3(run);
        const Chain chain = sparj_run(f.inputs.known, f.inputs.A0, f.data.obs, f.config, 900 + run);
        EXPECT_GE(chain.within_acceptance_rate(), 0.1) << "run " << run;
        EXPECT_LE(chain.within_acceptance_rate(), 0.45) << "run " << run;
        EXPECT_EQ(chain.filter_failures, 0);
    }
}

TEST(DenseMcmc, EquivalentToRetainOnlySparj)
{
    const Iso3Fixture f = iso3(1);
    SamplerConfig config = f.config;
    config.n_iters = 2000;
    config.burn_in = 500;
    config.pi0 = 1.0;
    const Chain a = sparj_run(f.inputs.known, f.inputs.A0, f.data.obs, config, 31337);
    config.pi0 = 0.8; // ignored by the dense chain
    const Chain b = dense_mcmc_run(f.inputs.known, f.inputs.A0, f.data.obs, config, 31337);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t n = 0; n < a.size(); ++n) {
        ASSERT_EQ(a.states[n].A, b.states[n].A) << n;
        ASSERT_EQ(a.states[n].log_lik, b.states[n].log_lik) << n;
        ASSERT_EQ(a.states[n].model, b.states[n].model) << n;
    }
    EXPECT_EQ(b.propose_count_jump, 0);
    const auto mask = classify_sparsity(b, config.burn_in);
    EXPECT_EQ(mask, SparsityModel::fully_dense(3));
    const auto m = compute_metrics(mask, *f.data.true_mask, posterior_mean(b, config.burn_in), f.data.params.A);
    EXPECT_EQ(m.specificity, 1.0);
    EXPECT_EQ(m.recall, 0.0);
    EXPECT_FALSE(m.precision.has_value());
    EXPECT_EQ(m.f1, 0.0);
}

TEST(DenseMcmc, PosteriorMeanMatchesQuadrature)
{
    const auto obs = scalar_data(0.5, 50, 13);
    auto loglik = [&obs](double a) {
        return log_likelihood(ModelParams::from_known(scalar_known(), Matrix::Constant(1, 1, a)), obs);
    };
    double peak = -std::numeric_limits<double>::infinity();
    for (int k = 0; k <= 2000; ++k) {
        peak = std::max(peak, loglik(-3.0 + 0.003 * k));
    }
    const double z = oracle::trapezoid([&](double a) { return std::exp(loglik(a) - peak); }, -3.0, 3.0, 2001);
    const double first = oracle::trapezoid([&](double a) { return a * std::exp(loglik(a) - peak); }, -3.0, 3.0, 2001);
    const double exact_mean = first / z;

    SamplerConfig config;
    config.lambda_prior = 0.0;
    config.n_iters = 60000;
    config.burn_in = 5000;
    const Chain chain = dense_mcmc_run(scalar_known(), Matrix::Constant(1, 1, 0.0), obs, config, 2024);
    EXPECT_NEAR(posterior_mean(chain, config.burn_in)(0, 0), exact_mean, 0.02);
}
