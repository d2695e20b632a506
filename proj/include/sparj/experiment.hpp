#pragma once

// Experiment harness: synthetic regimes, real-data ingestion, EM
// initialisation, and multi-run orchestration with per-run seeds.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "sparj/analysis.hpp"
#include "sparj/em.hpp"
#include "sparj/error.hpp"
#include "sparj/io.hpp"
#include "sparj/lgssm.hpp"
#include "sparj/rng.hpp"
#include "sparj/sampler.hpp"

namespace sparj {

enum class Regime { Iso3, Iso6Block, Iso12Block, Aniso, AnisoEstimatedQ, VarSparsity, VarLength, RealCsv, Custom };

inline const std::map<std::string, Regime>& regime_names()
{
    static const std::map<std::string, Regime> names{
        {"iso3", Regime::Iso3},
        {"iso6block", Regime::Iso6Block},
        {"iso12block", Regime::Iso12Block},
        {"aniso", Regime::Aniso},
        {"aniso_estimated_q", Regime::AnisoEstimatedQ},
        {"var_sparsity", Regime::VarSparsity},
        {"var_length", Regime::VarLength},
        {"real_csv", Regime::RealCsv},
        {"custom", Regime::Custom},
    };
    return names;
}

inline std::string to_string(Regime r)
{
    for (const auto& [name, value] : regime_names()) {
        if (value == r) {
            return name;
        }
    }
    return "?";
}

inline Regime parse_regime(const std::string& name)
{
    const auto it = regime_names().find(name);
    if (it == regime_names().end()) {
        throw ParseError("unknown regime '" + name + "'");
    }
    return it->second;
}

struct ExperimentSpec {
    Regime regime = Regime::Iso3;
    int dx = 3;
    int T = 100;
    int n_runs = 100;
    SamplerConfig sampler;
    std::uint64_t seed = 1;
    std::string output_dir = "sparj_out";

    // System generation.
    double q_scale = 1.0;
    double r_scale = 1.0;
    double p0_scale = 1e-8;
    double x0_value = 1.0;
    double eig_low = 0.5;
    double eig_high = 1.5;
    double stability_factor = 1.0;
    int n_dense = 8;            // var_sparsity
    std::string mask;           // custom: explicit row-major bitstring
    double density = 0.5;       // custom: dense probability when no mask is given
    bool estimate_q = false;    // custom: estimate Q by EM instead of using the truth

    int em_iters = 50;
    bool run_sparj = true;
    bool run_mcmc = false;
    int threads = 0; // 0: one per hardware thread

    bool write_chains = true;
    bool compact_chains = true;
    bool write_traces = true;
    double dot_threshold = 0.25;

    // real_csv
    std::string csv_path;
    std::vector<std::string> columns;
    std::optional<YearFilter> year_filter;

    bool q_estimated() const
    {
        return regime == Regime::AnisoEstimatedQ || regime == Regime::RealCsv || (regime == Regime::Custom && estimate_q);
    }

    void validate() const
    {
        auto require = [](bool ok, const std::string& what) {
            if (!ok) {
                throw Error("invalid experiment spec: " + what);
            }
        };
        sampler.validate();
        require(n_runs >= 1, "n_runs must be positive");
        require(em_iters >= 1, "em_iters must be positive");
        require(run_sparj || run_mcmc, "no method selected");
        require(p0_scale >= 0.0 && q_scale >= 0.0 && r_scale >= 0.0, "scales must be non-negative");
        switch (regime) {
        case Regime::Iso3:
        case Regime::VarLength:
            require(dx == 3, "iso3/var_length regimes have dx = 3");
            break;
        case Regime::Iso6Block:
            require(dx == 6, "iso6block has dx = 6");
            break;
        case Regime::Iso12Block:
            require(dx == 12, "iso12block has dx = 12");
            break;
        case Regime::Aniso:
        case Regime::AnisoEstimatedQ:
            require(dx == 3 || (dx >= 2 && dx % 2 == 0), "anisotropic regimes need dx = 3 or an even dx");
            require(eig_low > 0.0 && eig_low <= eig_high, "need 0 < eig_low <= eig_high");
            break;
        case Regime::VarSparsity:
            require(dx >= 1 && n_dense >= 0 && n_dense <= dx * dx, "n_dense must lie in [0, dx^2]");
            break;
        case Regime::RealCsv:
            require(!csv_path.empty(), "real_csv needs csv_path");
            require(!columns.empty(), "real_csv needs columns");
            break;
        case Regime::Custom:
            require(dx >= 1, "dx must be positive");
            require(mask.empty() || mask.size() == static_cast<std::size_t>(dx * dx), "mask must have dx^2 bits");
            require(density >= 0.0 && density <= 1.0, "density must lie in [0, 1]");
            break;
        }
        if (regime != Regime::RealCsv) {
            require(T >= 1, "T must be positive");
        }
    }
};

/// Regime presets; any key in a config file overrides them.
inline ExperimentSpec regime_defaults(Regime regime)
{
    ExperimentSpec s;
    s.regime = regime;
    s.sampler.lambda_j = 0.1;
    s.sampler.n_iters = 15000;
    s.sampler.burn_in = 5000;
    switch (regime) {
    case Regime::Iso3:
    case Regime::VarLength:
        s.dx = 3;
        s.q_scale = s.r_scale = 1.0;
        s.sampler.lambda_prior = 1.0;
        if (regime == Regime::VarLength) {
            s.T = 10;
        }
        break;
    case Regime::Iso6Block:
    case Regime::Iso12Block:
        s.dx = regime == Regime::Iso6Block ? 6 : 12;
        s.q_scale = s.r_scale = 1e-2;
        s.sampler.lambda_prior = std::exp(-1.0);
        break;
    case Regime::Aniso:
    case Regime::AnisoEstimatedQ:
        s.dx = 3;
        s.r_scale = 1.0;
        s.sampler.lambda_prior = 1.0;
        break;
    case Regime::VarSparsity:
        s.dx = 4;
        s.T = 50;
        s.q_scale = s.r_scale = 1.0;
        s.sampler.lambda_prior = 0.5;
        break;
    case Regime::RealCsv:
        s.dx = 0;
        s.n_runs = 100;
        s.r_scale = 0.5;
        s.sampler.lambda_prior = 0.5;
        s.sampler.lambda_j = 0.2;
        break;
    case Regime::Custom:
        break;
    }
    return s;
}

namespace detail {

inline bool parse_bool(const std::string& v)
{
    if (v == "1" || v == "true" || v == "yes" || v == "on") {
        return true;
    }
    if (v == "0" || v == "false" || v == "no" || v == "off") {
        return false;
    }
    throw ParseError("expected a boolean, got '" + v + "'");
}

inline double parse_real(const std::string& v)
{
    const auto x = parse_number(v);
    if (!x) {
        throw ParseError("expected a number, got an empty value");
    }
    return *x;
}

inline int parse_int(const std::string& v)
{
    std::size_t used = 0;
    int x = 0;
    try {
        x = std::stoi(v, &used);
    } catch (const std::exception&) {
        throw ParseError("expected an integer, got '" + v + "'");
    }
    if (used != v.size()) {
        throw ParseError("expected an integer, got '" + v + "'");
    }
    return x;
}

inline std::vector<std::string> split_list(const std::string& v)
{
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

} // namespace detail

/// Applies one `key = value` setting.
inline void apply_setting(ExperimentSpec& s, const std::string& key, const std::string& value)
{
    using namespace detail;
    try {
        if (key == "regime") {
            if (parse_regime(value) != s.regime) {
                throw ParseError("regime can only be set first");
            }
        } else if (key == "dx") {
            s.dx = parse_int(value);
        } else if (key == "T") {
            s.T = parse_int(value);
        } else if (key == "n_runs") {
            s.n_runs = parse_int(value);
        } else if (key == "seed") {
            s.seed = std::stoull(value);
        } else if (key == "output_dir") {
            s.output_dir = value;
        } else if (key == "pi0") {
            s.sampler.pi0 = parse_real(value);
        } else if (key == "pi_minus1") {
            s.sampler.pi_minus1 = parse_real(value);
        } else if (key == "lambda_prior") {
            s.sampler.lambda_prior = parse_real(value);
        } else if (key == "lambda_j") {
            s.sampler.lambda_j = parse_real(value);
        } else if (key == "sigma_walk") {
            s.sampler.sigma_walk = parse_real(value);
        } else if (key == "sigma_completion") {
            s.sampler.sigma_completion = parse_real(value);
        } else if (key == "n_iters") {
            s.sampler.n_iters = parse_int(value);
        } else if (key == "burn_in") {
            s.sampler.burn_in = parse_int(value);
        } else if (key == "q_scale") {
            s.q_scale = parse_real(value);
        } else if (key == "r_scale") {
            s.r_scale = parse_real(value);
        } else if (key == "p0_scale") {
            s.p0_scale = parse_real(value);
        } else if (key == "x0_value") {
            s.x0_value = parse_real(value);
        } else if (key == "eig_low") {
            s.eig_low = parse_real(value);
        } else if (key == "eig_high") {
            s.eig_high = parse_real(value);
        } else if (key == "stability_factor") {
            s.stability_factor = parse_real(value);
        } else if (key == "n_dense") {
            s.n_dense = parse_int(value);
        } else if (key == "mask") {
            s.mask = value;
        } else if (key == "density") {
            s.density = parse_real(value);
        } else if (key == "estimate_q") {
            s.estimate_q = parse_bool(value);
        } else if (key == "em_iters") {
            s.em_iters = parse_int(value);
        } else if (key == "methods") {
            s.run_sparj = s.run_mcmc = false;
            for (const auto& m : split_list(value)) {
                if (m == "sparj") {
                    s.run_sparj = true;
                } else if (m == "mcmc") {
                    s.run_mcmc = true;
                } else {
                    throw ParseError("unknown method '" + m + "'");
                }
            }
        } else if (key == "threads") {
            s.threads = parse_int(value);
        } else if (key == "write_chains") {
            s.write_chains = parse_bool(value);
        } else if (key == "compact_chains") {
            s.compact_chains = parse_bool(value);
        } else if (key == "write_traces") {
            s.write_traces = parse_bool(value);
        } else if (key == "dot_threshold") {
            s.dot_threshold = parse_real(value);
        } else if (key == "csv_path") {
            s.csv_path = value;
        } else if (key == "columns") {
            s.columns = split_list(value);
            s.dx = static_cast<int>(s.columns.size());
        } else if (key == "year") {
            if (!s.year_filter) {
                s.year_filter = YearFilter{"Year", 0};
            }
            s.year_filter->value = parse_int(value);
        } else if (key == "year_column") {
            if (!s.year_filter) {
                s.year_filter = YearFilter{"Year", 0};
            }
            s.year_filter->column = value;
        } else {
            throw ParseError("unknown key");
        }
    } catch (const ParseError& e) {
        throw ParseError("setting '" + key + "': " + e.what());
    }
}

/// Flat `key = value` config, one setting per line, '#' starts a comment.
/// The `regime` key, when present, selects the preset the other keys override.
inline ExperimentSpec parse_experiment_spec(std::istream& in)
{
    std::vector<std::pair<std::string, std::string>> settings;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        line = detail::trim(line);
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ParseError("config line " + std::to_string(line_no) + ": expected key = value");
        }
        settings.emplace_back(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    }
    Regime regime = Regime::Iso3;
    for (const auto& [k, v] : settings) {
        if (k == "regime") {
            regime = parse_regime(v);
        }
    }
    ExperimentSpec spec = regime_defaults(regime);
    for (const auto& [k, v] : settings) {
        apply_setting(spec, k, v);
    }
    spec.validate();
    return spec;
}

inline ExperimentSpec parse_experiment_spec(const std::string& text)
{
    std::istringstream in(text);
    return parse_experiment_spec(in);
}

/// Generated (or loaded) data for one run.
struct RegimeData {
    ModelParams params; // generating parameters; A is zero and meaningless for real data
    ObservationSeries obs;
    std::optional<SparsityModel> true_mask;

    bool has_truth() const { return true_mask.has_value(); }
};

/// One sparse entry per row and per column, at a random permutation.
inline SparsityModel permutation_mask(int dx, Rng& rng)
{
    std::vector<int> perm(static_cast<std::size_t>(dx));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng.engine());
    std::vector<MatrixIndex> sparse;
    for (int i = 0; i < dx; ++i) {
        sparse.push_back({i, perm[static_cast<std::size_t>(i)]});
    }
    return SparsityModel::fully_dense(dx).with_sparse(sparse);
}

/// Block diagonal with 2x2 blocks.
inline SparsityModel block_mask(int dx)
{
    if (dx % 2 != 0) {
        throw Error("block-diagonal masks need an even dimension");
    }
    std::vector<MatrixIndex> dense;
    for (int i = 0; i < dx; ++i) {
        for (int j = 0; j < dx; ++j) {
            if (i / 2 == j / 2) {
                dense.push_back({i, j});
            }
        }
    }
    return SparsityModel::from_indices(dx, dense);
}

inline Matrix standard_normal_matrix(int rows, int cols, Rng& rng)
{
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
            m(i, j) = rng.normal();
        }
    }
    return m;
}

/// Builds the generating system and data for one run from `data_seed`.
inline RegimeData build_regime(const ExperimentSpec& spec, std::uint64_t data_seed)
{
    spec.validate();
    Rng rng(data_seed);
    RegimeData data;

    if (spec.regime == Regime::RealCsv) {
        data.obs = load_csv_series(spec.csv_path, spec.columns, spec.year_filter);
        const int d = static_cast<int>(data.obs.dim());
        data.params = ModelParams{Matrix::Zero(d, d),
                                  Matrix::Identity(d, d),
                                  Matrix::Identity(d, d),
                                  spec.r_scale * Matrix::Identity(d, d),
                                  data.obs.y.row(0).transpose(),
                                  Matrix::Identity(d, d)};
        return data;
    }

    const int dx = spec.dx;
    SparsityModel mask;
    Matrix A;
    switch (spec.regime) {
    case Regime::Iso3:
    case Regime::VarLength:
        mask = permutation_mask(dx, rng);
        break;
    case Regime::Iso6Block:
    case Regime::Iso12Block:
        mask = block_mask(dx);
        break;
    case Regime::Aniso:
    case Regime::AnisoEstimatedQ:
        mask = dx == 3 ? permutation_mask(dx, rng) : block_mask(dx);
        break;
    case Regime::VarSparsity: {
        // The base matrix and the order in which entries become dense depend
        // only on the seed, so runs at different n_dense share them.
        const Matrix base = standard_normal_matrix(dx, dx, rng);
        std::vector<int> order(static_cast<std::size_t>(dx * dx));
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng.engine());
        std::vector<MatrixIndex> dense;
        for (int k = 0; k < spec.n_dense; ++k) {
            const int flat = order[static_cast<std::size_t>(k)];
            dense.push_back({flat / dx, flat % dx});
        }
        mask = SparsityModel::from_indices(dx, dense);
        A = Matrix::Zero(dx, dx);
        for (const auto& idx : dense) {
            A(idx.row, idx.col) = base(idx.row, idx.col);
        }
        if (spectral_norm(A) > 0.0) {
            A = scale_to_spectral_norm(A, spec.stability_factor);
        }
        break;
    }
    case Regime::Custom:
        if (!spec.mask.empty()) {
            mask = SparsityModel::from_bitstring(spec.mask);
        } else {
            std::vector<MatrixIndex> dense;
            for (int i = 0; i < dx; ++i) {
                for (int j = 0; j < dx; ++j) {
                    if (rng.uniform() < spec.density) {
                        dense.push_back({i, j});
                    }
                }
            }
            mask = SparsityModel::from_indices(dx, dense);
        }
        break;
    case Regime::RealCsv:
        break;
    }
    if (A.size() == 0) {
        A = random_stable_A(dx, mask, rng, spec.stability_factor);
    }

    Matrix Q = spec.q_scale * Matrix::Identity(dx, dx);
    if (spec.regime == Regime::Aniso || spec.regime == Regime::AnisoEstimatedQ) {
        Q = random_covariance(dx, spec.eig_low, spec.eig_high, rng);
    }
    data.params = ModelParams{A,
                              Matrix::Identity(dx, dx),
                              Q,
                              spec.r_scale * Matrix::Identity(dx, dx),
                              Vector::Constant(dx, spec.x0_value),
                              spec.p0_scale * Matrix::Identity(dx, dx)};
    data.obs = simulate(data.params, spec.T, rng).second;
    data.true_mask = mask;
    return data;
}

/// Seed purposes within a run.
enum class SeedPurpose : std::uint64_t { Data = 1, Init = 2, Chain = 3 };

inline std::uint64_t run_seed(const ExperimentSpec& spec, int run, SeedPurpose purpose)
{
    return derive_seed(spec.seed, static_cast<std::uint64_t>(run), static_cast<std::uint64_t>(purpose));
}

/// Sampler inputs derived from the data: the known parameters (with Q from EM
/// when it is not known) and the EM starting point A0.
struct SamplerInputs {
    KnownParams known;
    Matrix A0;
};

inline SamplerInputs prepare_sampler_inputs(const ExperimentSpec& spec, const RegimeData& data, std::uint64_t init_seed)
{
    Rng rng(init_seed);
    const int dx = static_cast<int>(data.params.state_dim());
    const FixedParams fixed{data.params.H, data.params.R, data.params.x0_mean, data.params.P0};

    Matrix Q = data.params.Q;
    if (spec.q_estimated()) {
        // Joint A/Q estimate; only Q is kept.
        const EmResult joint = em_estimate(data.obs, fixed, standard_normal_matrix(dx, dx, rng),
                                           Matrix::Identity(dx, dx), {spec.em_iters, true, true});
        Q = joint.Q_hat;
    }
    const EmResult init =
        em_estimate(data.obs, fixed, standard_normal_matrix(dx, dx, rng), Q, {spec.em_iters, true, false});
    return {KnownParams{data.params.H, Q, data.params.R, data.params.x0_mean, data.params.P0}, init.A_hat};
}

struct RunRecord {
    int run_id = 0;
    std::string method;
    std::optional<Matrix> true_A;
    std::optional<SparsityMetrics> metrics;
    double wall_time_seconds = 0.0;
    std::string chain_path;
    std::string error;
    double within_acceptance = 0.0;
    long filter_failures = 0;
    Matrix dense_frequency; // post-burn-in, for pooled edge probabilities
    long retained = 0;

    bool ok() const { return error.empty(); }
};

struct MethodSummary {
    std::string method;
    int dx = 0;
    int successful_runs = 0;
    double rmse = 0.0;
    double specificity = 0.0;
    double recall = 0.0;
    std::optional<double> precision;
    double f1 = 0.0;
    double time_s = 0.0;
    bool has_metrics = false;
};

struct ExperimentResult {
    std::vector<RunRecord> records; // ordered by (run, method)
    std::vector<MethodSummary> summaries;
    std::optional<EdgeGraph> graph; // pooled over sparj chains
};

namespace detail {

inline std::vector<RunRecord> execute_run(const ExperimentSpec& spec, int run)
{
    std::vector<std::string> methods;
    if (spec.run_sparj) {
        methods.emplace_back("sparj");
    }
    if (spec.run_mcmc) {
        methods.emplace_back("mcmc");
    }
    std::vector<RunRecord> out;
    for (const auto& m : methods) {
        RunRecord r;
        r.run_id = run;
        r.method = m;
        out.push_back(std::move(r));
    }

    std::optional<RegimeData> data;
    std::optional<SamplerInputs> inputs;
    try {
        data = build_regime(spec, run_seed(spec, run, SeedPurpose::Data));
        inputs = prepare_sampler_inputs(spec, *data, run_seed(spec, run, SeedPurpose::Init));
    } catch (const std::exception& e) {
        for (auto& r : out) {
            r.error = std::string("setup failed: ") + e.what();
        }
        return out;
    }

    const std::filesystem::path dir(spec.output_dir);
    for (auto& record : out) {
        try {
            const auto start = std::chrono::steady_clock::now();
            const std::uint64_t chain_seed = run_seed(spec, run, SeedPurpose::Chain);
            const Chain chain = record.method == "sparj"
                                    ? sparj_run(inputs->known, inputs->A0, data->obs, spec.sampler, chain_seed)
                                    : dense_mcmc_run(inputs->known, inputs->A0, data->obs, spec.sampler, chain_seed);
            record.wall_time_seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            record.within_acceptance = chain.within_acceptance_rate();
            record.filter_failures = chain.filter_failures;
            record.dense_frequency = dense_frequency(chain, spec.sampler.burn_in);
            record.retained = static_cast<long>(chain.size()) - spec.sampler.burn_in;
            if (data->has_truth()) {
                record.true_A = data->params.A;
                record.metrics = compute_metrics(classify_sparsity(chain, spec.sampler.burn_in), *data->true_mask,
                                                 posterior_mean(chain, spec.sampler.burn_in), data->params.A);
            }
            const std::string suffix = (record.method == "sparj" ? "" : record.method + "_") + std::to_string(run);
            if (spec.write_chains) {
                record.chain_path = (dir / ("chain_" + suffix + ".jsonl")).string();
                write_chain_jsonl(record.chain_path, chain, spec.compact_chains);
            }
            if (spec.write_traces) {
                std::ofstream trace((dir / ("trace_" + suffix + ".csv")).string());
                write_trace_csv(trace, trace_diagnostics(chain));
            }
        } catch (const std::exception& e) {
            record.error = e.what();
        }
    }
    return out;
}

inline std::vector<MethodSummary> summarise(const ExperimentSpec& spec, const std::vector<RunRecord>& records)
{
    std::vector<MethodSummary> out;
    for (const char* method : {"sparj", "mcmc"}) {
        MethodSummary s;
        s.method = method;
        s.dx = spec.dx;
        int with_precision = 0;
        double precision_sum = 0.0;
        for (const auto& r : records) {
            if (r.method != method || !r.ok()) {
                continue;
            }
            ++s.successful_runs;
            s.time_s += r.wall_time_seconds;
            if (r.metrics) {
                s.has_metrics = true;
                s.rmse += r.metrics->rmse;
                s.specificity += r.metrics->specificity;
                s.recall += r.metrics->recall;
                s.f1 += r.metrics->f1;
                if (r.metrics->precision) {
                    ++with_precision;
                    precision_sum += *r.metrics->precision;
                }
            }
        }
        if (s.successful_runs == 0) {
            continue;
        }
        const double n = s.successful_runs;
        s.rmse /= n;
        s.specificity /= n;
        s.recall /= n;
        s.f1 /= n;
        s.time_s /= n;
        if (with_precision > 0) {
            s.precision = precision_sum / with_precision;
        }
        out.push_back(s);
    }
    return out;
}

} // namespace detail

/// Runs every (run, method) pair on a worker pool. Results are independent of
/// the pool size: each run draws from its own derived seeds. Chain and trace
/// files are written when enabled; per-run failures are recorded, not thrown.
inline ExperimentResult execute_experiment(const ExperimentSpec& spec)
{
    spec.validate();
    if (spec.write_chains || spec.write_traces) {
        std::filesystem::create_directories(spec.output_dir);
    }
    std::vector<std::vector<RunRecord>> per_run(static_cast<std::size_t>(spec.n_runs));
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int run = next++; run < spec.n_runs; run = next++) {
            per_run[static_cast<std::size_t>(run)] = detail::execute_run(spec, run);
        }
    };
    int pool = spec.threads > 0 ? spec.threads : static_cast<int>(std::thread::hardware_concurrency());
    pool = std::clamp(pool, 1, spec.n_runs);
    if (pool == 1) {
        worker();
    } else {
        std::vector<std::jthread> threads;
        for (int k = 0; k < pool; ++k) {
            threads.emplace_back(worker);
        }
    }

    ExperimentResult result;
    for (auto& records : per_run) {
        for (auto& r : records) {
            result.records.push_back(std::move(r));
        }
    }
    result.summaries = detail::summarise(spec, result.records);

    Matrix counts;
    double total = 0.0;
    for (const auto& r : result.records) {
        if (r.method != "sparj" || !r.ok()) {
            continue;
        }
        if (counts.size() == 0) {
            counts = Matrix::Zero(r.dense_frequency.rows(), r.dense_frequency.cols());
        }
        counts += r.dense_frequency * static_cast<double>(r.retained);
        total += static_cast<double>(r.retained);
    }
    if (total > 0.0) {
        const int dx = static_cast<int>(counts.rows());
        result.graph = EdgeGraph{dx, counts / total, spec.columns.size() == static_cast<std::size_t>(dx)
                                                         ? spec.columns
                                                         : default_labels(dx)};
    }
    return result;
}

/// execute_experiment plus summary.csv, runs.csv and graph.dot in output_dir.
inline ExperimentResult run_experiment(const ExperimentSpec& spec)
{
    ExperimentResult result = execute_experiment(spec);
    const std::filesystem::path dir(spec.output_dir);
    std::filesystem::create_directories(dir);

    std::ofstream summary(dir / "summary.csv");
    summary << kMetricsHeader << '\n';
    for (const auto& s : result.summaries) {
        if (s.has_metrics) {
            summary << metrics_csv_row(s.method, s.dx, s.rmse, s.specificity, s.recall, s.precision, s.f1, s.time_s)
                    << '\n';
        } else {
            summary << s.method << ',' << s.dx << ",--,--,--,--,--," << s.time_s << '\n';
        }
    }

    std::ofstream runs(dir / "runs.csv");
    runs << "run," << kMetricsHeader << ",within_accept,filter_failures,chain_path,error\n";
    for (const auto& r : result.records) {
        runs << r.run_id << ',';
        if (r.metrics) {
            runs << metrics_csv_row(r.method, spec.dx, r.metrics->rmse, r.metrics->specificity, r.metrics->recall,
                                    r.metrics->precision, r.metrics->f1, r.wall_time_seconds);
        } else {
            runs << r.method << ',' << spec.dx << ",--,--,--,--,--," << r.wall_time_seconds;
        }
        std::string err = r.error;
        std::replace(err.begin(), err.end(), ',', ';');
        runs << ',' << r.within_acceptance << ',' << r.filter_failures << ',' << r.chain_path << ',' << err << '\n';
    }

    if (result.graph) {
        std::ofstream dot(dir / "graph.dot");
        dot << export_dot(*result.graph, spec.dot_threshold, true);
    }
    return result;
}

} // namespace sparj
