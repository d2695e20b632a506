// sparj command-line front end.
//
//   sparj simulate   <config> [--run i] [--out dir]
//   sparj run        [config] [--regime r] [--set key=value]... [sampler flags]
//   sparj em         --csv file [--columns a,b,...] [--iters n] [--estimate-q]
//   sparj analyze    <chain.jsonl>... [--burn-in n] [--truth system.json] [--out dir]
//   sparj export-dot <chain.jsonl>... [--burn-in n] [--threshold p] [--self-loops]

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sparj/sparj.hpp"

namespace fs = std::filesystem;
using namespace sparj;

namespace {

struct SamplerFlags {
    std::optional<double> pi0, pi_minus1, lambda_prior, lambda_j, sigma_walk, sigma_completion;
    std::optional<int> n_iters, burn_in;

    void attach(CLI::App* app)
    {
        app->add_option("--pi0", pi0, "model retention probability");
        app->add_option("--pi-minus1", pi_minus1, "probability of a sparser jump");
        app->add_option("--lambda", lambda_prior, "Laplace prior scale");
        app->add_option("--lambda-j", lambda_j, "jump-length rate");
        app->add_option("--sigma", sigma_walk, "random-walk scale");
        app->add_option("--sigma-c", sigma_completion, "completion scale");
        app->add_option("--n-iters", n_iters, "iterations per chain, burn-in included");
        app->add_option("--burn-in", burn_in, "discarded iterations");
    }

    void apply(SamplerConfig& c) const
    {
        if (pi0) c.pi0 = *pi0;
        if (pi_minus1) c.pi_minus1 = *pi_minus1;
        if (lambda_prior) c.lambda_prior = *lambda_prior;
        if (lambda_j) c.lambda_j = *lambda_j;
        if (sigma_walk) c.sigma_walk = *sigma_walk;
        if (sigma_completion) c.sigma_completion = *sigma_completion;
        if (n_iters) c.n_iters = *n_iters;
        if (burn_in) c.burn_in = *burn_in;
    }
};

ExperimentSpec load_spec(const std::string& config, const std::string& regime, const std::vector<std::string>& sets)
{
    std::string text;
    if (!config.empty()) {
        std::ifstream in(config);
        if (!in) {
            throw Error("cannot open config " + config);
        }
        std::stringstream buf;
        buf << in.rdbuf();
        text = buf.str();
    }
    if (!regime.empty()) {
        text = "regime = " + regime + "\n" + text;
    }
    for (const auto& s : sets) {
        if (s.find('=') == std::string::npos) {
            throw ParseError("--set expects key=value, got '" + s + "'");
        }
        text += s + "\n";
    }
    return parse_experiment_spec(text);
}

std::vector<Chain> read_chains(const std::vector<std::string>& paths)
{
    std::vector<Chain> chains;
    for (const auto& p : paths) {
        chains.push_back(read_chain_jsonl(p));
    }
    return chains;
}

std::vector<std::string> split_labels(const std::string& s)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        out.push_back(item);
    }
    return out;
}

int cmd_simulate(const std::string& config, const std::vector<std::string>& sets, int run, const std::string& out)
{
    const ExperimentSpec spec = load_spec(config, "", sets);
    const RegimeData data = build_regime(spec, run_seed(spec, run, SeedPurpose::Data));
    fs::create_directories(out);
    std::ofstream obs(fs::path(out) / "observations.csv");
    write_series_csv(obs, data.obs.y, "y");

    nlohmann::json sys;
    sys["A"] = matrix_to_json(data.params.A);
    sys["H"] = matrix_to_json(data.params.H);
    sys["Q"] = matrix_to_json(data.params.Q);
    sys["R"] = matrix_to_json(data.params.R);
    sys["P0"] = matrix_to_json(data.params.P0);
    sys["x0_mean"] = std::vector<double>(data.params.x0_mean.data(),
                                         data.params.x0_mean.data() + data.params.x0_mean.size());
    if (data.true_mask) {
        sys["mask"] = data.true_mask->to_bitstring();
    }
    std::ofstream(fs::path(out) / "system.json") << sys.dump(2) << '\n';
    std::cout << "wrote " << data.obs.length() << " observations of dimension " << data.obs.dim() << " to " << out
              << '\n';
    return 0;
}

int cmd_run(ExperimentSpec spec)
{
    const ExperimentResult result = run_experiment(spec);
    std::cout << kMetricsHeader << '\n';
    for (const auto& s : result.summaries) {
        if (s.has_metrics) {
            std::cout << metrics_csv_row(s.method, s.dx, s.rmse, s.specificity, s.recall, s.precision, s.f1, s.time_s)
                      << '\n';
        } else {
            std::cout << s.method << ',' << s.dx << ",--,--,--,--,--," << s.time_s << '\n';
        }
    }
    int failed = 0;
    long filter_failures = 0;
    for (const auto& r : result.records) {
        if (!r.ok()) {
            ++failed;
            std::cerr << "run " << r.run_id << " (" << r.method << ") failed: " << r.error << '\n';
        }
        filter_failures += r.filter_failures;
    }
    if (filter_failures > 0) {
        std::cerr << "warning: " << filter_failures << " proposals were rejected because the Kalman filter failed\n";
    }
    std::cerr << "results in " << spec.output_dir << '\n';
    return failed == static_cast<int>(result.records.size()) ? 1 : 0;
}

int cmd_em(const std::string& csv, const std::string& columns, std::optional<int> year, double r_scale, int iters,
           bool estimate_q, const std::string& out)
{
    std::vector<std::string> cols = split_labels(columns);
    if (cols.empty()) {
        std::ifstream in(csv);
        std::string header;
        if (!std::getline(in, header)) {
            throw ParseError("empty CSV file " + csv);
        }
        for (const auto& c : detail::split_csv_line(header)) {
            cols.push_back(detail::trim(c));
        }
    }
    std::optional<YearFilter> filter;
    if (year) {
        filter = YearFilter{"Year", *year};
    }
    const ObservationSeries obs = load_csv_series(csv, cols, filter);
    const int d = static_cast<int>(obs.dim());
    const FixedParams fixed{Matrix::Identity(d, d), r_scale * Matrix::Identity(d, d), obs.y.row(0).transpose(),
                            Matrix::Identity(d, d)};
    Rng rng(1);
    const EmResult r = em_estimate(obs, fixed, standard_normal_matrix(d, d, rng), Matrix::Identity(d, d),
                                   {iters, true, estimate_q});
    nlohmann::json j;
    j["A_hat"] = matrix_to_json(r.A_hat);
    j["Q_hat"] = matrix_to_json(r.Q_hat);
    j["loglik_trace"] = r.loglik_trace;
    if (out.empty()) {
        std::cout << j.dump(2) << '\n';
    } else {
        std::ofstream(out) << j.dump(2) << '\n';
    }
    return 0;
}

int cmd_analyze(const std::vector<std::string>& paths, int burn_in, const std::string& truth, const std::string& out,
                double threshold, const std::string& labels)
{
    const std::vector<Chain> chains = read_chains(paths);
    std::optional<Matrix> true_A;
    std::optional<SparsityModel> true_mask;
    if (!truth.empty()) {
        std::ifstream in(truth);
        if (!in) {
            throw Error("cannot open " + truth);
        }
        const auto j = nlohmann::json::parse(in);
        true_A = matrix_from_json(j.at("A"));
        true_mask = j.contains("mask") ? SparsityModel::from_bitstring(j["mask"].get<std::string>())
                                       : SparsityModel::fully_dense(static_cast<int>(true_A->rows()));
    }
    fs::create_directories(out);
    std::cout << "chain," << kMetricsHeader << '\n';
    for (std::size_t i = 0; i < chains.size(); ++i) {
        std::ofstream trace(fs::path(out) / ("trace_" + std::to_string(i) + ".csv"));
        write_trace_csv(trace, trace_diagnostics(chains[i]));
        const int dx = chains[i].states.at(0).model.dim();
        if (true_A) {
            const auto m = compute_metrics(classify_sparsity(chains[i], burn_in), *true_mask,
                                           posterior_mean(chains[i], burn_in), *true_A);
            std::cout << i << ',' << metrics_csv_row("sparj", dx, m.rmse, m.specificity, m.recall, m.precision, m.f1, 0.0)
                      << '\n';
        } else {
            std::cout << i << ",sparj," << dx << ",--,--,--,--,--,0\n";
        }
    }
    const EdgeGraph graph = edge_probabilities(chains, burn_in, split_labels(labels));
    std::ofstream(fs::path(out) / "graph.dot") << export_dot(graph, threshold, true);
    std::cerr << "traces and graph.dot in " << out << '\n';
    return 0;
}

int cmd_export_dot(const std::vector<std::string>& paths, int burn_in, double threshold, bool self_loops,
                   const std::string& labels, const std::string& out)
{
    const std::vector<Chain> chains = read_chains(paths);
    const std::string dot = export_dot(edge_probabilities(chains, burn_in, split_labels(labels)), threshold, self_loops);
    if (out.empty()) {
        std::cout << dot;
    } else {
        std::ofstream(out) << dot;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"SpaRJ: reversible-jump sampling of sparse transition matrices"};
    app.require_subcommand(1);

    // simulate
    auto* sim = app.add_subcommand("simulate", "generate one system and its observations from a config");
    std::string sim_config;
    std::vector<std::string> sim_sets;
    int sim_run = 0;
    std::string sim_out = "sparj_sim";
    sim->add_option("config", sim_config, "experiment config")->required()->check(CLI::ExistingFile);
    sim->add_option("--set", sim_sets, "override a config key (key=value)");
    sim->add_option("--run", sim_run, "run index whose data seed is used");
    sim->add_option("--out", sim_out, "output directory");

    // run
    auto* run = app.add_subcommand("run", "run an experiment");
    std::string run_config;
    std::string run_regime;
    std::vector<std::string> run_sets;
    std::optional<int> run_threads;
    std::optional<int> run_runs;
    std::optional<std::string> run_out;
    std::optional<std::uint64_t> run_seed_opt;
    std::vector<std::string> run_methods;
    SamplerFlags run_flags;
    run->add_option("config", run_config, "experiment config")->check(CLI::ExistingFile);
    run->add_option("--regime", run_regime, "regime preset when no config sets one");
    run->add_option("--set", run_sets, "override a config key (key=value)");
    run->add_option("--threads", run_threads, "worker threads (0: all cores)");
    run->add_option("--runs", run_runs, "number of independent runs");
    run->add_option("--out", run_out, "output directory");
    run->add_option("--seed", run_seed_opt, "master seed");
    run->add_option("--methods", run_methods, "sparj and/or mcmc")->delimiter(',');
    run_flags.attach(run);

    // em
    auto* em = app.add_subcommand("em", "EM estimate of A (and Q) from a CSV series with H = I");
    std::string em_csv;
    std::string em_columns;
    std::optional<int> em_year;
    double em_r = 0.5;
    int em_iters = 50;
    bool em_q = false;
    std::string em_out;
    em->add_option("--csv", em_csv, "headed CSV file")->required()->check(CLI::ExistingFile);
    em->add_option("--columns", em_columns, "comma-separated columns (default: all)");
    em->add_option("--year", em_year, "keep rows whose Year column equals this");
    em->add_option("--r-scale", em_r, "observation noise R = r I");
    em->add_option("--iters", em_iters, "EM iterations");
    em->add_flag("--estimate-q", em_q, "also estimate Q");
    em->add_option("--out", em_out, "JSON output file (default: stdout)");

    // analyze
    auto* an = app.add_subcommand("analyze", "metrics, traces and graph from chain files");
    std::vector<std::string> an_chains;
    int an_burn = 5000;
    std::string an_truth;
    std::string an_out = "sparj_analysis";
    double an_threshold = 0.25;
    std::string an_labels;
    an->add_option("chains", an_chains, "chain JSON-lines files")->required()->check(CLI::ExistingFile);
    an->add_option("--burn-in", an_burn, "discarded iterations");
    an->add_option("--truth", an_truth, "system.json with the true A (and mask)");
    an->add_option("--out", an_out, "output directory");
    an->add_option("--threshold", an_threshold, "edge probability threshold for graph.dot");
    an->add_option("--labels", an_labels, "comma-separated node labels");

    // export-dot
    auto* ed = app.add_subcommand("export-dot", "Granger graph of pooled chains in DOT");
    std::vector<std::string> ed_chains;
    int ed_burn = 5000;
    double ed_threshold = 0.25;
    bool ed_loops = false;
    std::string ed_labels;
    std::string ed_out;
    ed->add_option("chains", ed_chains, "chain JSON-lines files")->required()->check(CLI::ExistingFile);
    ed->add_option("--burn-in", ed_burn, "discarded iterations");
    ed->add_option("--threshold", ed_threshold, "edge probability threshold");
    ed->add_flag("--self-loops", ed_loops, "draw self-loops");
    ed->add_option("--labels", ed_labels, "comma-separated node labels");
    ed->add_option("-o,--out", ed_out, "output file (default: stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*sim) {
            return cmd_simulate(sim_config, sim_sets, sim_run, sim_out);
        }
        if (*run) {
            if (run_config.empty() && run_regime.empty()) {
                throw Error("run needs a config file or --regime");
            }
            ExperimentSpec spec = load_spec(run_config, run_regime, run_sets);
            if (run_threads) spec.threads = *run_threads;
            if (run_runs) spec.n_runs = *run_runs;
            if (run_out) spec.output_dir = *run_out;
            if (run_seed_opt) spec.seed = *run_seed_opt;
            if (!run_methods.empty()) {
                std::string joined;
                for (const auto& m : run_methods) {
                    joined += m + ",";
                }
                apply_setting(spec, "methods", joined);
            }
            run_flags.apply(spec.sampler);
            spec.validate();
            return cmd_run(spec);
        }
        if (*em) {
            return cmd_em(em_csv, em_columns, em_year, em_r, em_iters, em_q, em_out);
        }
        if (*an) {
            return cmd_analyze(an_chains, an_burn, an_truth, an_out, an_threshold, an_labels);
        }
        if (*ed) {
            return cmd_export_dot(ed_chains, ed_burn, ed_threshold, ed_loops, ed_labels, ed_out);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
