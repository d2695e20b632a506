#pragma once

// Linear-Gaussian state-space model:
//
//   x_0 ~ N(x0_mean, P0)
//   x_t = A x_{t-1} + q_t,   q_t ~ N(0, Q)
//   y_t = H x_t + r_t,       r_t ~ N(0, R)
//
// with exact Kalman filtering, RTS smoothing, simulation, and the random
// system generators used by the experiment harness.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include "sparj/error.hpp"
#include "sparj/rng.hpp"
#include "sparj/sparsity_model.hpp"

namespace sparj {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kSymmetryTolerance = 1e-10;
inline constexpr double kPsdTolerance = 1e-10;

namespace detail {

inline std::string shape(const Matrix& m)
{
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline void require_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols, const char* name)
{
    if (m.rows() != rows || m.cols() != cols) {
        throw DimensionError(std::string(name) + " has shape " + shape(m) + ", expected " +
                             std::to_string(rows) + "x" + std::to_string(cols));
    }
}

inline void require_covariance(const Matrix& m, const char* name)
{
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > kSymmetryTolerance) {
        throw CovarianceError(std::string(name) + " is not symmetric");
    }
    if (m.size() > 0) {
        Eigen::SelfAdjointEigenSolver<Matrix> eig(m, Eigen::EigenvaluesOnly);
        if (eig.eigenvalues().minCoeff() < -kPsdTolerance) {
            throw CovarianceError(std::string(name) + " is not positive semi-definite");
        }
    }
}

/// Square-root factor L with L L^T = cov for a PSD (possibly singular) matrix.
inline Matrix covariance_factor(const Matrix& cov, const char* name)
{
    Eigen::LLT<Matrix> llt(cov);
    if (llt.info() == Eigen::Success) {
        return llt.matrixL();
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
    if (eig.info() != Eigen::Success || eig.eigenvalues().minCoeff() < -kPsdTolerance) {
        throw CovarianceError(std::string("Cholesky factorisation of ") + name + " failed");
    }
    const Vector root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * root.asDiagonal();
}

inline void symmetrize(Matrix& m)
{
    m = 0.5 * (m + m.transpose()).eval();
}

} // namespace detail

/// Every parameter of the model except the transition matrix.
struct KnownParams {
    Matrix H;
    Matrix Q;
    Matrix R;
    Vector x0_mean;
    Matrix P0;
};

struct ModelParams {
    Matrix A;
    Matrix H;
    Matrix Q;
    Matrix R;
    Vector x0_mean;
    Matrix P0;

    static ModelParams from_known(const KnownParams& known, Matrix A)
    {
        return {std::move(A), known.H, known.Q, known.R, known.x0_mean, known.P0};
    }

    KnownParams known() const { return {H, Q, R, x0_mean, P0}; }

    Eigen::Index state_dim() const { return A.rows(); }
    Eigen::Index obs_dim() const { return H.rows(); }

    /// Shapes only; cheap enough for every likelihood evaluation.
    void check_dimensions() const
    {
        const Eigen::Index dx = A.rows();
        const Eigen::Index dy = H.rows();
        if (dx == 0 || dy == 0) {
            throw DimensionError("state and observation dimensions must be positive");
        }
        detail::require_shape(A, dx, dx, "A");
        detail::require_shape(H, dy, dx, "H");
        detail::require_shape(Q, dx, dx, "Q");
        detail::require_shape(R, dy, dy, "R");
        detail::require_shape(P0, dx, dx, "P0");
        if (x0_mean.size() != dx) {
            throw DimensionError("x0_mean has length " + std::to_string(x0_mean.size()) + ", expected " +
                                 std::to_string(dx));
        }
    }

    /// Shapes plus symmetry and positive semi-definiteness of Q, R and P0.
    void validate() const
    {
        check_dimensions();
        detail::require_covariance(Q, "Q");
        detail::require_covariance(R, "R");
        detail::require_covariance(P0, "P0");
    }
};

/// Observations y_1..y_T, one row per time step.
struct ObservationSeries {
    Matrix y;

    Eigen::Index length() const { return y.rows(); }
    Eigen::Index dim() const { return y.cols(); }

    void validate() const
    {
        if (y.rows() < 1) {
            throw DimensionError("observation series must contain at least one time step");
        }
        if (!y.allFinite()) {
            throw Error("observation series contains non-finite values");
        }
    }
};

/// States x_0..x_T, one row per time step.
struct StateSeries {
    Matrix x;
};

struct FilterResult {
    Matrix filtered_means;              // T x dx
    std::vector<Matrix> filtered_covs;  // T of dx x dx
    Matrix predicted_means;             // T x dx
    std::vector<Matrix> predicted_covs; // T of dx x dx
    double log_likelihood = 0.0;
};

struct SmootherResult {
    Matrix smoothed_means;              // (T+1) x dx, rows x_0..x_T
    std::vector<Matrix> smoothed_covs;  // T+1
    std::vector<Matrix> lag_one_covs;   // T; entry t-1 is Cov(x_t, x_{t-1} | y_{1:T})
};

/// Draws x_{0:T} and y_{1:T}. Consumes exactly dx + T (dx + dy) normals.
inline std::pair<StateSeries, ObservationSeries> simulate(const ModelParams& params, Eigen::Index T, Rng& rng)
{
    params.validate();
    if (T < 1) {
        throw DimensionError("series length must be positive");
    }
    const Eigen::Index dx = params.state_dim();
    const Eigen::Index dy = params.obs_dim();
    const Matrix p0_root = detail::covariance_factor(params.P0, "P0");
    const Matrix q_root = detail::covariance_factor(params.Q, "Q");
    const Matrix r_root = detail::covariance_factor(params.R, "R");

    auto draw = [&rng](Eigen::Index n) {
        Vector z(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            z(i) = rng.normal();
        }
        return z;
    };

    StateSeries states{Matrix(T + 1, dx)};
    ObservationSeries obs{Matrix(T, dy)};
    Vector x = params.x0_mean + p0_root * draw(dx);
    states.x.row(0) = x.transpose();
    for (Eigen::Index t = 1; t <= T; ++t) {
        x = params.A * x + q_root * draw(dx);
        const Vector y = params.H * x + r_root * draw(dy);
        states.x.row(t) = x.transpose();
        obs.y.row(t - 1) = y.transpose();
    }
    return {std::move(states), std::move(obs)};
}

namespace detail {

/// Predict/update recursion, compiled for fixed state/observation sizes
/// (DX, DY) or Eigen::Dynamic. The storing filter and the likelihood-only
/// path share it, so both produce bit-identical log-likelihoods.
template <int DX, int DY, bool Store>
double run_kalman_sized(const ModelParams& params, const ObservationSeries& obs, FilterResult* out)
{
    using StateVec = Eigen::Matrix<double, DX, 1>;
    using StateMat = Eigen::Matrix<double, DX, DX>;
    using ObsVec = Eigen::Matrix<double, DY, 1>;
    using ObsMat = Eigen::Matrix<double, DY, DY>;
    using ObsMap = Eigen::Matrix<double, DY, DX>;
    using GainMat = Eigen::Matrix<double, DX, DY>;

    const Eigen::Index dx = params.state_dim();
    const Eigen::Index dy = params.obs_dim();
    const Eigen::Index T = obs.length();

    if constexpr (Store) {
        out->filtered_means.resize(T, dx);
        out->predicted_means.resize(T, dx);
        out->filtered_covs.assign(static_cast<std::size_t>(T), Matrix());
        out->predicted_covs.assign(static_cast<std::size_t>(T), Matrix());
    }

    const StateMat A = params.A;
    const ObsMap H = params.H;
    const StateMat Q = params.Q;
    const ObsMat R = params.R;
    const StateMat identity = StateMat::Identity(dx, dx);
    const double log_two_pi = std::log(2.0 * std::numbers::pi);

    StateVec mean = params.x0_mean;
    StateMat cov = params.P0;
    StateVec mean_pred(dx);
    StateMat cov_pred(dx, dx);
    ObsMat innovation_cov(dy, dy);
    GainMat gain(dx, dy);
    StateMat residual_map(dx, dx);
    ObsVec innovation(dy);
    ObsVec whitened(dy);
    Eigen::LLT<ObsMat> chol(dy);
    double log_lik = 0.0;

    for (Eigen::Index t = 0; t < T; ++t) {
        const auto step = static_cast<std::size_t>(t + 1);
        mean_pred.noalias() = A * mean;
        cov_pred.noalias() = A * cov * A.transpose();
        cov_pred += Q;
        cov_pred = (0.5 * (cov_pred + cov_pred.transpose())).eval();

        innovation = obs.y.row(t).transpose();
        innovation.noalias() -= H * mean_pred;
        innovation_cov.noalias() = H * cov_pred * H.transpose();
        innovation_cov += R;
        innovation_cov = (0.5 * (innovation_cov + innovation_cov.transpose())).eval();

        chol.compute(innovation_cov);
        if (chol.info() != Eigen::Success) {
            throw FilterError("innovation covariance is not positive definite", step);
        }
        whitened = chol.matrixL().solve(innovation);
        const double log_det = 2.0 * chol.matrixLLT().diagonal().array().log().sum();
        log_lik -= 0.5 * (static_cast<double>(dy) * log_two_pi + log_det + whitened.squaredNorm());

        // K = P_pred H^T S^{-1}, computed as (S^{-1} H P_pred)^T.
        gain = chol.solve(H * cov_pred).transpose();
        mean = mean_pred;
        mean.noalias() += gain * innovation;
        residual_map = identity;
        residual_map.noalias() -= gain * H;
        cov.noalias() = residual_map * cov_pred * residual_map.transpose();
        cov.noalias() += gain * R * gain.transpose();
        cov = (0.5 * (cov + cov.transpose())).eval();

        if (!std::isfinite(log_lik) || !mean.allFinite()) {
            throw FilterError("filter produced non-finite values", step);
        }

        if constexpr (Store) {
            out->predicted_means.row(t) = mean_pred.transpose();
            out->predicted_covs[static_cast<std::size_t>(t)] = cov_pred;
            out->filtered_means.row(t) = mean.transpose();
            out->filtered_covs[static_cast<std::size_t>(t)] = cov;
        }
    }
    if constexpr (Store) {
        out->log_likelihood = log_lik;
    }
    return log_lik;
}

template <bool Store>
double run_kalman(const ModelParams& params, const ObservationSeries& obs, FilterResult* out)
{
    params.check_dimensions();
    const Eigen::Index dx = params.state_dim();
    const Eigen::Index dy = params.obs_dim();
    if (obs.dim() != dy) {
        throw DimensionError("observations have " + std::to_string(obs.dim()) + " columns, model expects " +
                             std::to_string(dy));
    }
    if (obs.length() < 1) {
        throw DimensionError("observation series must contain at least one time step");
    }
    if (dx == dy) {
        switch (dx) {
        case 1:
            return run_kalman_sized<1, 1, Store>(params, obs, out);
        case 2:
            return run_kalman_sized<2, 2, Store>(params, obs, out);
        case 3:
            return run_kalman_sized<3, 3, Store>(params, obs, out);
        case 4:
            return run_kalman_sized<4, 4, Store>(params, obs, out);
        case 6:
            return run_kalman_sized<6, 6, Store>(params, obs, out);
        default:
            break;
        }
    }
    return run_kalman_sized<Eigen::Dynamic, Eigen::Dynamic, Store>(params, obs, out);
}

} // namespace detail

/// Kalman filter with Joseph-form covariance updates. The log-likelihood is
/// the prediction-error decomposition sum_t log N(y_t; H m_t|t-1, S_t).
inline FilterResult kalman_filter(const ModelParams& params, const ObservationSeries& obs)
{
    FilterResult result;
    detail::run_kalman<true>(params, obs, &result);
    return result;
}

/// log p(y_{1:T} | params); same arithmetic as kalman_filter without storing moments.
inline double log_likelihood(const ModelParams& params, const ObservationSeries& obs)
{
    return detail::run_kalman<false>(params, obs, nullptr);
}

/// Rauch-Tung-Striebel smoother over the output of kalman_filter for the same
/// params and series. Also smooths x_0 using its prior as the "filtered" moment.
inline SmootherResult rts_smoother(const ModelParams& params, const FilterResult& filter)
{
    params.check_dimensions();
    const Eigen::Index T = filter.filtered_means.rows();
    const Eigen::Index dx = params.state_dim();
    if (T < 1 || filter.filtered_means.cols() != dx || static_cast<Eigen::Index>(filter.filtered_covs.size()) != T ||
        static_cast<Eigen::Index>(filter.predicted_covs.size()) != T) {
        throw DimensionError("filter result does not match the model dimensions");
    }

    SmootherResult out;
    out.smoothed_means.resize(T + 1, dx);
    out.smoothed_covs.assign(static_cast<std::size_t>(T + 1), Matrix());
    out.lag_one_covs.assign(static_cast<std::size_t>(T), Matrix());

    const auto uT = static_cast<std::size_t>(T);
    out.smoothed_means.row(T) = filter.filtered_means.row(T - 1);
    out.smoothed_covs[uT] = filter.filtered_covs[uT - 1];

    Eigen::LLT<Matrix> chol(dx);
    for (Eigen::Index t = T - 1; t >= 0; --t) {
        const auto ut = static_cast<std::size_t>(t);
        // Filtered moments of x_t; for t = 0 these are the prior.
        const Vector mean = t == 0 ? params.x0_mean : Vector(filter.filtered_means.row(t - 1).transpose());
        const Matrix& cov = t == 0 ? params.P0 : filter.filtered_covs[ut - 1];
        const Matrix& cov_pred = filter.predicted_covs[ut];

        chol.compute(cov_pred);
        if (chol.info() != Eigen::Success) {
            throw FilterError("predicted covariance is singular in the smoother", ut + 1);
        }
        // G = P_t A^T P_pred^{-1}
        const Matrix smoother_gain = chol.solve(params.A * cov).transpose();
        const Vector next_mean = out.smoothed_means.row(t + 1).transpose();
        const Vector mean_pred = filter.predicted_means.row(t).transpose();
        out.smoothed_means.row(t) = (mean + smoother_gain * (next_mean - mean_pred)).transpose();

        Matrix smoothed = cov + smoother_gain * (out.smoothed_covs[ut + 1] - cov_pred) * smoother_gain.transpose();
        detail::symmetrize(smoothed);
        out.smoothed_covs[ut] = std::move(smoothed);
        out.lag_one_covs[ut] = out.smoothed_covs[ut + 1] * smoother_gain.transpose();
    }
    return out;
}

/// Largest singular value.
inline double spectral_norm(const Matrix& m)
{
    if (m.size() == 0) {
        return 0.0;
    }
    Eigen::JacobiSVD<Matrix> svd(m);
    return svd.singularValues()(0);
}

/// Divides `m` by its largest singular value and multiplies by `safety_factor`.
inline Matrix scale_to_spectral_norm(const Matrix& m, double safety_factor = 1.0)
{
    const double norm = spectral_norm(m);
    if (!(norm > 0.0)) {
        throw Error("cannot rescale a zero matrix to unit spectral norm");
    }
    return m * (safety_factor / norm);
}

/// Transition matrix with i.i.d. standard normal dense entries, exact zeros
/// elsewhere, rescaled to spectral norm `safety_factor`.
inline Matrix random_stable_A(int dx, const SparsityModel& dense_mask, Rng& rng, double safety_factor = 1.0)
{
    if (dense_mask.dim() != dx) {
        throw DimensionError("mask dimension does not match dx");
    }
    constexpr int kMaxAttempts = 100;
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        Matrix A = Matrix::Zero(dx, dx);
        for (const auto& idx : dense_mask.dense_indices()) {
            A(idx.row, idx.col) = rng.normal();
        }
        if (spectral_norm(A) > 0.0) {
            return scale_to_spectral_norm(A, safety_factor);
        }
    }
    throw Error("random_stable_A drew an all-zero matrix 100 times; the mask has no usable dense entries");
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the signs
/// of R's diagonal folded into Q.
inline Matrix random_orthogonal(int d, Rng& rng)
{
    Matrix z(d, d);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            z(i, j) = rng.normal();
        }
    }
    Eigen::HouseholderQR<Matrix> qr(z);
    Matrix q = qr.householderQ();
    const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int j = 0; j < d; ++j) {
        if (r(j, j) < 0.0) {
            q.col(j) *= -1.0;
        }
    }
    return q;
}

/// Sigma = G^T diag(e_1 >= ... >= e_d) G with e_i ~ U(eig_low, eig_high) and G Haar-orthogonal.
inline Matrix random_covariance(int d, double eig_low, double eig_high, Rng& rng)
{
    if (d <= 0) {
        throw DimensionError("covariance dimension must be positive");
    }
    if (!(eig_low > 0.0) || eig_low > eig_high) {
        throw Error("random_covariance requires 0 < eig_low <= eig_high");
    }
    const Matrix g = random_orthogonal(d, rng);
    std::vector<double> eig(static_cast<std::size_t>(d));
    for (auto& e : eig) {
        e = rng.uniform(eig_low, eig_high);
    }
    std::sort(eig.begin(), eig.end(), std::greater<>());
    const Vector e = Eigen::Map<const Vector>(eig.data(), d);
    Matrix sigma = g.transpose() * e.asDiagonal() * g;
    detail::symmetrize(sigma);
    return sigma;
}

} // namespace sparj
