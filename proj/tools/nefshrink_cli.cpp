// nefshrink: fit shrinkage estimators, run Monte Carlo experiments, read off rates.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "nefshrink/config.hpp"
#include "nefshrink/csv_io.hpp"
#include "nefshrink/estimators.hpp"
#include "nefshrink/harness.hpp"

namespace ns = nefshrink;

namespace {

std::vector<int> parse_trials(const std::string& text, ns::Index n) {
    std::vector<int> values;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');) values.push_back(std::stoi(item));
    if (values.size() == 1) values.assign(static_cast<std::size_t>(n), values.front());
    if (static_cast<ns::Index>(values.size()) != n)
        throw std::invalid_argument(
            fmt::format("--N lists {} values but the data has {} rows", values.size(), n));
    return values;
}

std::string join(const ns::Vector& v) {
    std::string out;
    for (ns::Index i = 0; i < v.size(); ++i) {
        if (i > 0) out += ',';
        out += ns::format_double(v(i));
    }
    return out;
}

struct FitArgs {
    std::string data;
    std::string family;
    std::optional<double> lambda;
    std::string trials;
    std::string tau;
    std::string mode = "location";
    std::string out;
    int max_iter = 200;
    double tol = 1e-10;
};

int run_fit(const FitArgs& args) {
    ns::DataMatrix data;
    data.y = ns::read_matrix(args.data);
    const ns::FamilyKind kind = ns::parse_family_kind(args.family);
    std::optional<std::vector<int>> trials;
    if (!args.trials.empty()) trials = parse_trials(args.trials, data.rows());
    const ns::FamilySpec spec =
        ns::make_family(kind, kind == ns::FamilyKind::Gamma ? args.lambda : std::nullopt, trials);
    std::optional<ns::IntMatrix> tau;
    if (!args.tau.empty()) tau = ns::read_int_matrix(args.tau);
    data.tau = ns::family_tau(spec, data.rows(), data.cols(), tau);

    ns::ShrinkageMode mode;
    if (args.mode == "location")
        mode = ns::ShrinkageMode::Location;
    else if (args.mode == "grandmean")
        mode = ns::ShrinkageMode::GrandMean;
    else
        throw std::invalid_argument(fmt::format("unknown mode '{}'", args.mode));

    ns::SolverOptions opts;
    opts.max_outer_iterations = args.max_iter;
    opts.tolerance = args.tol;
    const auto [result, estimate] = ns::fit(data, spec, mode, opts);

    std::cout << "b: " << join(result.b) << '\n';
    std::cout << (mode == ns::ShrinkageMode::Location ? "mu: " : "grand_mean: ") << join(result.mu)
              << '\n';
    std::cout << "objective: " << ns::format_double(result.objective) << '\n';
    std::cout << "iterations: " << result.iterations << '\n';
    std::cout << "converged: " << (result.converged ? "true" : "false") << '\n';
    if (!args.out.empty()) {
        std::ofstream os(args.out);
        if (!os) throw std::runtime_error(fmt::format("cannot write '{}'", args.out));
        ns::write_matrix(os, estimate.theta_hat);
    }
    return 0;
}

int run_simulate(const std::string& config_path, std::optional<long long> seed,
                 const std::string& out, unsigned threads) {
    ns::ExperimentConfig cfg = ns::load_config(config_path);
    if (seed) cfg.seed = static_cast<std::uint64_t>(*seed);
    const ns::ExperimentResult result = ns::run_experiment(cfg, threads);
    if (out.empty()) {
        ns::write_records_csv(std::cout, result);
    } else {
        std::ofstream os(out);
        if (!os) throw std::runtime_error(fmt::format("cannot write '{}'", out));
        ns::write_records_csv(os, result);
    }
    return 0;
}

int run_rates(const std::string& in, const std::string& estimator, const std::string& metric_token) {
    std::ifstream is(in);
    if (!is) throw std::runtime_error(fmt::format("cannot read '{}'", in));
    const ns::ExperimentResult table = ns::read_records_csv(is);
    ns::RateMetric metric;
    if (metric_token == "mean_sup_gap")
        metric = ns::RateMetric::MeanSupGap;
    else if (metric_token == "mean_excess_loss")
        metric = ns::RateMetric::MeanExcessLoss;
    else
        throw std::invalid_argument(fmt::format("unknown metric '{}'", metric_token));
    const auto points = ns::rate_points(table.records, estimator, metric);
    std::cout << "n," << metric_token << '\n';
    for (const auto& pt : points) std::cout << pt.n << ',' << ns::format_double(pt.value) << '\n';
    const ns::RateFit fit = ns::fit_rate(points);
    std::cout << fmt::format("slope: {:.6f}\nintercept: {:.6f}\nstderr: {:.6f}\n", fit.slope,
                             fit.intercept, fit.stderr_slope);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Shrinkage estimation for quadratic-variance exponential families"};
    app.require_subcommand(1);

    FitArgs fit_args;
    auto* fit_cmd = app.add_subcommand("fit", "Fit a shrinkage estimator to a data matrix");
    fit_cmd->add_option("data", fit_args.data, "Comma-separated data matrix")->required();
    fit_cmd->add_option("--family", fit_args.family,
                        "normal|poisson|gamma|multinomial|negmultinomial")
        ->required();
    fit_cmd->add_option("--lambda", fit_args.lambda, "Gamma shape");
    fit_cmd->add_option("--N", fit_args.trials, "Trials per row: one value or a comma list");
    fit_cmd->add_option("--tau", fit_args.tau, "Comma-separated tau matrix");
    fit_cmd->add_option("--mode", fit_args.mode, "location|grandmean");
    fit_cmd->add_option("--out", fit_args.out, "Write the estimate matrix here");
    fit_cmd->add_option("--max-iter", fit_args.max_iter, "Coordinate-descent iterations");
    fit_cmd->add_option("--tol", fit_args.tol, "Coordinate-descent tolerance");

    std::string config_path, sim_out;
    std::optional<long long> seed;
    unsigned threads = std::max(1u, std::thread::hardware_concurrency());
    auto* sim_cmd = app.add_subcommand("simulate", "Run a Monte Carlo experiment");
    sim_cmd->add_option("--config", config_path, "Experiment config")->required();
    sim_cmd->add_option("--seed", seed, "Override the config seed");
    sim_cmd->add_option("--out", sim_out, "Record CSV (default stdout)");
    sim_cmd->add_option("--threads", threads, "Parallel replications");

    std::string rates_in, estimator = "ure", metric = "mean_sup_gap";
    auto* rates_cmd = app.add_subcommand("rates", "Log-log slope of a simulated statistic in n");
    rates_cmd->add_option("records", rates_in, "Record CSV from simulate")->required();
    rates_cmd->add_option("--estimator", estimator, "Estimator rows to use");
    rates_cmd->add_option("--metric", metric, "mean_sup_gap|mean_excess_loss");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*fit_cmd) return run_fit(fit_args);
        if (*sim_cmd) return run_simulate(config_path, seed, sim_out, threads);
        if (*rates_cmd) return run_rates(rates_in, estimator, metric);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
