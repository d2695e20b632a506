// Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero
// if any criterion fails.
//
//   sparj_acceptance [--out dir] [--only 1,4,11]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/graph/adjacency_list.hpp>
#include <boost/graph/graphviz.hpp>

#include "oracles.hpp"
#include "sparj/sparj.hpp"

using namespace sparj;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v, int precision = 4)
{
    std::ostringstream s;
    s << std::setprecision(precision) << v;
    return s.str();
}

const MethodSummary& summary_of(const ExperimentResult& r, const std::string& method)
{
    for (const auto& s : r.summaries) {
        if (s.method == method) {
            return s;
        }
    }
    throw Error("no summary for method " + method);
}

int failed_runs(const ExperimentResult& r)
{
    int n = 0;
    for (const auto& rec : r.records) {
        n += rec.ok() ? 0 : 1;
    }
    return n;
}

ExperimentSpec table_spec(Regime regime, int n_runs, std::uint64_t seed)
{
    ExperimentSpec spec = regime_defaults(regime);
    spec.n_runs = n_runs;
    spec.seed = seed;
    spec.write_chains = false;
    spec.write_traces = false;
    spec.threads = 0;
    return spec;
}

// 1. Kalman likelihood against the joint Gaussian of y_{1:T}.
Outcome criterion_kalman()
{
    constexpr double kRelTol = 1e-8;
    constexpr double kMaxSeconds = 5.0;
    const auto start = std::chrono::steady_clock::now();
    Rng rng(101);
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
        const ModelParams p = oracle::random_system(rng);
        const auto T = static_cast<Eigen::Index>(rng.uniform_int(1, 10));
        const ObservationSeries obs = simulate(p, T, rng).second;
        const double exact = oracle::joint_log_likelihood(p, obs);
        worst = std::max(worst, std::abs(kalman_filter(p, obs).log_likelihood - exact) / std::abs(exact));
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {worst < kRelTol && secs < kMaxSeconds,
            "max rel err " + fmt(worst, 3) + " (< " + fmt(kRelTol) + "), " + fmt(secs, 3) + " s (< 5 s)"};
}

// 2. Correction antisymmetry over every enumerated state.
Outcome criterion_antisymmetry()
{
    constexpr double kTol = 1e-12;
    const auto start = std::chrono::steady_clock::now();
    double worst = 0.0;
    long cases = 0;
    for (int dx2 : {1, 4, 9, 16}) {
        for (double lj : {0.0, 0.1, 0.5}) {
            for (double pim1 : {0.3, 0.5, 0.7}) {
                for (int d = 1; d <= dx2; ++d) {
                    for (int j = 1; j <= d; ++j) {
                        const double fwd = log_correction(JumpKind::Sparser, j, d, dx2 - d, pim1, lj, dx2);
                        const double rev = log_correction(JumpKind::Denser, j, d - j, dx2 - d + j, pim1, lj, dx2);
                        worst = std::max(worst, std::isfinite(fwd + rev) ? std::abs(fwd + rev)
                                                                         : std::numeric_limits<double>::infinity());
                        ++cases;
                    }
                }
            }
        }
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {worst <= kTol && secs < 1.0,
            std::to_string(cases) + " cases, max |c_s + c_d| " + fmt(worst, 3) + " (<= 1e-12), " + fmt(secs, 3) + " s"};
}

// 3. Truncated Poisson normalisation.
Outcome criterion_tpoi()
{
    constexpr double kTol = 1e-12;
    const auto start = std::chrono::steady_clock::now();
    Rng rng(303);
    double worst = 0.0;
    for (int k = 0; k < 1000; ++k) {
        const double lambda = rng.uniform(0.0, 5.0);
        const int a = static_cast<int>(rng.uniform_int(1, 50));
        const int b = static_cast<int>(rng.uniform_int(a, 50));
        double total = 0.0;
        for (int n = a; n <= b; ++n) {
            total += tpoi_pmf(n, lambda, a, b);
        }
        worst = std::max(worst, std::abs(total - 1.0));
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {worst <= kTol && secs < 1.0, "max |sum - 1| " + fmt(worst, 3) + " (<= 1e-12), " + fmt(secs, 3) + " s"};
}

// 4. Two-model system: visit frequency of {A free} against quadrature.
Outcome criterion_two_model()
{
    constexpr double kTol = 0.03;
    constexpr int kIters = 200000;
    constexpr int kBurnIn = 10000;
    const auto start = std::chrono::steady_clock::now();
    const KnownParams known{Matrix::Ones(1, 1), Matrix::Ones(1, 1), Matrix::Ones(1, 1), Vector::Zero(1),
                            Matrix::Ones(1, 1)};
    Rng data_rng(404);
    const ObservationSeries obs =
        simulate(ModelParams::from_known(known, Matrix::Constant(1, 1, 0.5)), 50, data_rng).second;

    auto loglik = [&](double a) { return log_likelihood(ModelParams::from_known(known, Matrix::Constant(1, 1, a)), obs); };
    double peak = loglik(0.0);
    for (int k = 0; k <= 2000; ++k) {
        peak = std::max(peak, loglik(-3.0 + 0.003 * k));
    }
    // Flat prior on the free coefficient, equal model priors.
    const double free_mass = oracle::trapezoid([&](double a) { return std::exp(loglik(a) - peak); }, -3.0, 3.0, 2001);
    const double zero_mass = std::exp(loglik(0.0) - peak);
    const double exact = free_mass / (free_mass + zero_mass);

    SamplerConfig config;
    config.lambda_prior = 0.0;
    config.n_iters = kIters;
    config.burn_in = kBurnIn;
    const Chain chain = sparj_run(known, Matrix::Constant(1, 1, 0.5), obs, config, 4040);
    const double freq = dense_frequency(chain, kBurnIn)(0, 0);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {std::abs(freq - exact) <= kTol && secs < 120.0,
            "P(free) quadrature " + fmt(exact, 6) + ", sampler " + fmt(freq, 6) + " (tol 0.03), jump accept " +
                fmt(chain.jump_acceptance_rate(), 3) + ", " + fmt(secs, 3) + " s"};
}

// 5 and 7. dx = 3 isotropic regime, SpaRJ plus the dense baseline.
std::pair<Outcome, Outcome> criteria_iso3()
{
    constexpr double kMinF1 = 0.90;
    constexpr double kMaxRmse = 0.15;
    constexpr double kMinSpec = 0.90;
    constexpr double kRmseRatio = 0.5;
    ExperimentSpec spec = table_spec(Regime::Iso3, 100, 5);
    spec.run_mcmc = true;
    const auto start = std::chrono::steady_clock::now();
    const ExperimentResult r = execute_experiment(spec);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const auto& sp = summary_of(r, "sparj");
    const auto& mc = summary_of(r, "mcmc");

    bool exact_baseline = true;
    for (const auto& rec : r.records) {
        if (rec.method == "mcmc" && rec.metrics) {
            exact_baseline = exact_baseline && rec.metrics->specificity == 1.0 && rec.metrics->recall == 0.0;
        }
    }
    const int failures = failed_runs(r);
    Outcome c5{failures == 0 && sp.successful_runs == 100 && sp.f1 >= kMinF1 && sp.rmse <= kMaxRmse &&
                   sp.specificity >= kMinSpec,
               "F1 " + fmt(sp.f1) + " (>= 0.90), RMSE " + fmt(sp.rmse) + " (<= 0.15), spec " + fmt(sp.specificity) +
                   " (>= 0.90), recall " + fmt(sp.recall) + ", " + fmt(sp.time_s, 3) + " s/run, " + fmt(secs, 4) +
                   " s total for both methods, failed runs " + std::to_string(failures)};
    const double gap = std::abs(mc.rmse - sp.rmse);
    Outcome c7{exact_baseline && mc.successful_runs == 100 && gap <= kRmseRatio * sp.rmse,
               "MCMC spec " + fmt(mc.specificity) + " recall " + fmt(mc.recall) + " (every run exact: " +
                   (exact_baseline ? "yes" : "no") + "), RMSE " + fmt(mc.rmse) + " vs SpaRJ " + fmt(sp.rmse) +
                   " (|diff| <= 50% of SpaRJ)"};
    return {c5, c7};
}

// 6. dx = 6 block-diagonal regime.
Outcome criterion_iso6()
{
    constexpr double kMinF1 = 0.85;
    constexpr double kMaxRmse = 0.15;
    const ExperimentSpec spec = table_spec(Regime::Iso6Block, 100, 6);
    const auto start = std::chrono::steady_clock::now();
    const ExperimentResult r = execute_experiment(spec);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const auto& sp = summary_of(r, "sparj");
    const int failures = failed_runs(r);
    return {failures == 0 && sp.successful_runs == 100 && sp.f1 >= kMinF1 && sp.rmse <= kMaxRmse && secs <= 5400.0,
            "F1 " + fmt(sp.f1) + " (>= 0.85), RMSE " + fmt(sp.rmse) + " (<= 0.15), spec " + fmt(sp.specificity) +
                ", recall " + fmt(sp.recall) + ", " + fmt(sp.time_s, 3) + " s/run, " + fmt(secs, 4) +
                " s total, failed runs " + std::to_string(failures)};
}

// 8. Prior-scale insensitivity at dx = 6.
Outcome criterion_prior()
{
    constexpr double kMaxSpread = 0.07;
    std::vector<double> f1s;
    std::string detail;
    bool all_ok = true;
    for (double lambda : {std::exp(-2.0), std::exp(-1.0), 1.0, std::exp(1.0), 0.0}) {
        ExperimentSpec spec = table_spec(Regime::Iso6Block, 25, 8);
        spec.sampler.lambda_prior = lambda;
        const ExperimentResult r = execute_experiment(spec);
        all_ok = all_ok && failed_runs(r) == 0;
        const double f1 = summary_of(r, "sparj").f1;
        f1s.push_back(f1);
        detail += "lambda=" + fmt(lambda, 3) + ": F1 " + fmt(f1) + "; ";
    }
    const double spread = *std::max_element(f1s.begin(), f1s.end()) - *std::min_element(f1s.begin(), f1s.end());
    return {all_ok && spread <= kMaxSpread, detail + "spread " + fmt(spread) + " (<= 0.07)"};
}

// 9. F1 grows with series length.
Outcome criterion_length()
{
    constexpr double kMinGain = 0.1;
    std::vector<double> f1s;
    std::string detail;
    bool all_ok = true;
    for (int T : {10, 50, 150}) {
        ExperimentSpec spec = table_spec(Regime::VarLength, 25, 9);
        spec.T = T;
        const ExperimentResult r = execute_experiment(spec);
        all_ok = all_ok && failed_runs(r) == 0;
        f1s.push_back(summary_of(r, "sparj").f1);
        detail += "T=" + std::to_string(T) + ": F1 " + fmt(f1s.back()) + "; ";
    }
    const bool monotone = f1s[0] <= f1s[1] && f1s[1] <= f1s[2];
    const double gain = f1s[2] - f1s[0];
    return {all_ok && monotone && gain >= kMinGain,
            detail + "non-decreasing: " + (monotone ? "yes" : "no") + ", F1(150) - F1(10) = " + fmt(gain) + " (>= 0.1)"};
}

// 10. EM likelihood trace never decreases.
Outcome criterion_em()
{
    constexpr double kStepTol = 1e-6;
    Rng rng(1010);
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
        const ModelParams p = oracle::random_system(rng);
        const ObservationSeries obs = simulate(p, 50, rng).second;
        const int dx = static_cast<int>(p.state_dim());
        const Matrix A0 = scale_to_spectral_norm(oracle::random_matrix(dx, dx, rng), 0.9);
        const EmResult r =
            em_estimate(obs, FixedParams{p.H, p.R, p.x0_mean, p.P0}, A0, Matrix::Identity(dx, dx), {30, true, true});
        for (std::size_t t = 1; t < r.loglik_trace.size(); ++t) {
            worst = std::max(worst, r.loglik_trace[t - 1] - r.loglik_trace[t]);
        }
    }
    return {worst <= kStepTol, "largest per-step decrease " + fmt(worst, 3) + " (<= 1e-6) over 100 instances"};
}

// 11. pi0 = 1 reproduces the dense chain bit for bit.
Outcome criterion_equivalence()
{
    ExperimentSpec spec = regime_defaults(Regime::Iso3);
    spec.seed = 11;
    const RegimeData data = build_regime(spec, run_seed(spec, 0, SeedPurpose::Data));
    const SamplerInputs in = prepare_sampler_inputs(spec, data, run_seed(spec, 0, SeedPurpose::Init));
    SamplerConfig config = spec.sampler;
    config.pi0 = 1.0;
    const std::uint64_t seed = run_seed(spec, 0, SeedPurpose::Chain);
    const Chain a = sparj_run(in.known, in.A0, data.obs, config, seed);
    const Chain b = dense_mcmc_run(in.known, in.A0, data.obs, spec.sampler, seed);
    std::size_t mismatches = a.size() == b.size() ? 0 : 1;
    for (std::size_t n = 0; n < std::min(a.size(), b.size()); ++n) {
        const bool same = a.states[n].A == b.states[n].A && a.states[n].log_lik == b.states[n].log_lik &&
                          a.states[n].model == b.states[n].model;
        mismatches += same ? 0 : 1;
    }
    return {mismatches == 0, std::to_string(a.size()) + " states compared, " + std::to_string(mismatches) + " differ"};
}

// 12. Real-data pipeline on a complete 6-column CSV emits a valid DOT graph
// with all six self-loops.
Outcome criterion_real_pipeline(const fs::path& out)
{
    fs::create_directories(out);
    const fs::path csv = out / "daily_temperature.csv";
    {
        // Seasonal temperatures for six sites with a little cross-coupling.
        Rng rng(1212);
        std::ofstream f(csv);
        f << "Year,Day,Phoenix,Tucson,Denver,Boulder,Seattle,Portland\n";
        Vector x = Vector::Zero(6);
        for (int day = 0; day < 365; ++day) {
            const double season = 10.0 * std::sin(2.0 * std::numbers::pi * day / 365.0);
            Vector next(6);
            for (int i = 0; i < 6; ++i) {
                next(i) = 0.7 * x(i) + 0.2 * x(i ^ 1) + rng.normal();
            }
            x = next;
            f << 2021 << ',' << day;
            for (int i = 0; i < 6; ++i) {
                f << ',' << 15.0 + season + 3.0 * i + x(i);
            }
            f << '\n';
        }
    }
    ExperimentSpec spec = regime_defaults(Regime::RealCsv);
    spec.csv_path = csv.string();
    apply_setting(spec, "columns", "Phoenix,Tucson,Denver,Boulder,Seattle,Portland");
    apply_setting(spec, "year", "2021");
    spec.n_runs = 4;
    spec.sampler.n_iters = 3000;
    spec.sampler.burn_in = 1000;
    spec.output_dir = (out / "real").string();
    spec.threads = 0;
    const ExperimentResult r = run_experiment(spec);

    std::ifstream dot_in(out / "real" / "graph.dot");
    std::stringstream text;
    text << dot_in.rdbuf();

    using Graph = boost::adjacency_list<boost::vecS, boost::vecS, boost::directedS,
                                        boost::property<boost::vertex_name_t, std::string>>;
    Graph g;
    boost::dynamic_properties dp(boost::ignore_other_properties);
    dp.property("node_id", boost::get(boost::vertex_name, g));
    bool parsed = false;
    try {
        std::istringstream in(text.str());
        parsed = boost::read_graphviz(in, g, dp);
    } catch (const std::exception&) {
        parsed = false;
    }
    std::set<std::string> loops;
    if (parsed) {
        auto names = boost::get(boost::vertex_name, g);
        for (auto [it, end] = boost::edges(g); it != end; ++it) {
            if (boost::source(*it, g) == boost::target(*it, g)) {
                loops.insert(names[boost::source(*it, g)]);
            }
        }
    }
    const int failures = failed_runs(r);
    return {parsed && boost::num_vertices(g) == 6 && loops.size() == 6 && failures == 0,
            std::string("DOT parses: ") + (parsed ? "yes" : "no") + ", nodes " + std::to_string(boost::num_vertices(g)) +
                ", self-loops " + std::to_string(loops.size()) + " (need 6), failed runs " + std::to_string(failures)};
}

} // namespace

int main(int argc, char** argv)
{
    fs::path out = fs::temp_directory_path() / "sparj_acceptance";
    std::set<int> only;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--out" && i + 1 < argc) {
            out = argv[++i];
        } else if (arg == "--only" && i + 1 < argc) {
            std::stringstream ss(argv[++i]);
            std::string item;
            while (std::getline(ss, item, ',')) {
                only.insert(std::stoi(item));
            }
        } else {
            std::cerr << "usage: sparj_acceptance [--out dir] [--only 1,2,...]\n";
            return 2;
        }
    }
    auto wanted = [&only](int k) { return only.empty() || only.count(k) > 0; };

    int failures = 0;
    auto report = [&failures](int id, const std::string& name, const Outcome& o, double secs) {
        failures += o.pass ? 0 : 1;
        std::cout << (o.pass ? "PASS" : "FAIL") << "  C" << id << "  " << name << ": " << o.detail << "  ["
                  << fmt(secs, 4) << " s]" << std::endl;
    };
    auto timed = [&](int id, const std::string& name, const std::function<Outcome()>& f) {
        if (!wanted(id)) {
            return;
        }
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = f();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        report(id, name, o, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    };

    timed(1, "Kalman likelihood vs joint Gaussian", criterion_kalman);
    timed(2, "correction-term antisymmetry", criterion_antisymmetry);
    timed(3, "truncated Poisson normalisation", criterion_tpoi);
    timed(4, "two-model quadrature oracle", criterion_two_model);
    if (wanted(5) || wanted(7)) {
        const auto start = std::chrono::steady_clock::now();
        std::pair<Outcome, Outcome> both;
        try {
            both = criteria_iso3();
        } catch (const std::exception& e) {
            both = {{false, std::string("exception: ") + e.what()}, {false, std::string("exception: ") + e.what()}};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (wanted(5)) {
            report(5, "dx=3 isotropic regime, 100 runs", both.first, secs);
        }
        if (wanted(7)) {
            report(7, "dense MCMC baseline on the dx=3 regime", both.second, secs);
        }
    }
    timed(6, "dx=6 block regime, 100 runs", criterion_iso6);
    timed(8, "prior insensitivity at dx=6, 25 runs per lambda", criterion_prior);
    timed(9, "series-length trend at dx=3, 25 runs per T", criterion_length);
    timed(10, "EM monotonicity", criterion_em);
    timed(11, "pi0=1 equals dense MCMC bit for bit", criterion_equivalence);
    timed(12, "real-data pipeline emits DOT with six self-loops", [&out] { return criterion_real_pipeline(out); });

    std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << std::endl;
    return failures == 0 ? 0 : 1;
}
