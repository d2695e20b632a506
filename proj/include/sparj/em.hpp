#pragma once

// Expectation-maximisation for A and/or Q with the observation model and the
// initial-state prior held fixed. E-step: Kalman filter + RTS smoother.
// M-step: closed-form maximisers from the smoothed sufficient statistics.

#include <string>
#include <vector>

#include "sparj/error.hpp"
#include "sparj/lgssm.hpp"

namespace sparj {

/// Parameters EM never touches.
struct FixedParams {
    Matrix H;
    Matrix R;
    Vector x0_mean;
    Matrix P0;
};

struct EmOptions {
    int n_iters = 50;
    bool estimate_A = true;
    bool estimate_Q = false;
};

struct EmResult {
    Matrix A_hat;
    Matrix Q_hat;
    std::vector<double> loglik_trace; // log p(y | A, Q) at the start of each iteration
};

/// Smoothed second moments summed over t = 1..T.
struct SufficientStats {
    Matrix current;  // sum E[x_t x_t^T]
    Matrix previous; // sum E[x_{t-1} x_{t-1}^T]
    Matrix cross;    // sum E[x_t x_{t-1}^T]
    Eigen::Index T = 0;
};

inline SufficientStats sufficient_stats(const SmootherResult& smoothed)
{
    const Eigen::Index T = smoothed.smoothed_means.rows() - 1;
    const Eigen::Index dx = smoothed.smoothed_means.cols();
    SufficientStats s{Matrix::Zero(dx, dx), Matrix::Zero(dx, dx), Matrix::Zero(dx, dx), T};
    for (Eigen::Index t = 1; t <= T; ++t) {
        const auto ut = static_cast<std::size_t>(t);
        const Vector m = smoothed.smoothed_means.row(t).transpose();
        const Vector m_prev = smoothed.smoothed_means.row(t - 1).transpose();
        s.current += smoothed.smoothed_covs[ut] + m * m.transpose();
        s.previous += smoothed.smoothed_covs[ut - 1] + m_prev * m_prev.transpose();
        s.cross += smoothed.lag_one_covs[ut - 1] + m * m_prev.transpose();
    }
    return s;
}

inline EmResult em_estimate(const ObservationSeries& obs, const FixedParams& fixed, const Matrix& A_init,
                            const Matrix& Q_init, const EmOptions& options = {})
{
    if (options.n_iters < 1) {
        throw Error("em_estimate: n_iters must be positive");
    }
    if (!options.estimate_A && !options.estimate_Q) {
        throw Error("em_estimate: nothing to estimate");
    }
    ModelParams params{A_init, fixed.H, Q_init, fixed.R, fixed.x0_mean, fixed.P0};
    params.validate();
    obs.validate();

    EmResult result;
    result.loglik_trace.reserve(static_cast<std::size_t>(options.n_iters));
    for (int it = 0; it < options.n_iters; ++it) {
        const FilterResult filtered = kalman_filter(params, obs);
        result.loglik_trace.push_back(filtered.log_likelihood);
        const SufficientStats s = sufficient_stats(rts_smoother(params, filtered));

        if (options.estimate_A) {
            Eigen::LLT<Matrix> chol(s.previous);
            if (chol.info() != Eigen::Success) {
                throw Error("em_estimate: singular normal matrix in the A update (iteration " +
                            std::to_string(it + 1) + ")");
            }
            // A = C B^{-1} with B symmetric.
            params.A = chol.solve(s.cross.transpose()).transpose();
        }
        if (options.estimate_Q) {
            const Matrix& A = params.A;
            Matrix Q = s.current - A * s.cross.transpose() - s.cross * A.transpose() + A * s.previous * A.transpose();
            Q /= static_cast<double>(s.T);
            detail::symmetrize(Q);
            params.Q = std::move(Q);
        }
    }
    result.A_hat = params.A;
    result.Q_hat = params.Q;
    return result;
}

} // namespace sparj
