#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "adbid/config.hpp"
#include "adbid/harness.hpp"
#include "adbid/planning.hpp"
#include "adbid/snapshot.hpp"

using namespace adbid;

namespace {

ExperimentConfig config_or_default(const std::string& path)
{
    return path.empty() ? ExperimentConfig{} : load_config(path);
}

std::string read_file(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

/// Contexts file: one context per line, comma- or whitespace-separated.
std::vector<Vector> read_contexts(const std::string& path, int dim)
{
    std::ifstream is(path);
    if (!is)
        throw std::runtime_error("cannot open " + path);
    std::vector<Vector> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos)
            line.resize(hash);
        for (char& c : line)
            if (c == ',' || c == '\t')
                c = ' ';
        std::istringstream ls(line);
        std::vector<double> v;
        std::string tok;
        while (ls >> tok)
            v.push_back(detail::parse_double(tok, lineno));
        if (v.empty())
            continue;
        if (static_cast<int>(v.size()) != dim)
            throw std::runtime_error("line " + std::to_string(lineno) + ": expected " + std::to_string(dim) +
                                     " context values, found " + std::to_string(v.size()));
        out.push_back(Eigen::Map<Vector>(v.data(), dim));
    }
    return out;
}

std::vector<long> parse_checkpoint_list(const std::string& s)
{
    auto v = detail::parse_long_list(s);
    if (v.size() < 2)
        throw std::invalid_argument("--checkpoints needs at least two values");
    return v;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Ad-bidding regret lab: delayed-impact bidding over short customer horizons"};
    app.require_subcommand(1);

    // run
    auto* run = app.add_subcommand("run", "Run the multi-trial regret benchmark");
    std::string run_config, run_out, run_mode;
    std::optional<int> run_trials, run_workers;
    std::optional<std::uint64_t> run_seed;
    bool emit_logs = false;
    run->add_option("--config", run_config, "Config file (key = value)")->required()->check(CLI::ExistingFile);
    run->add_option("--trials", run_trials, "Number of trials");
    run->add_option("--seed", run_seed, "Master seed");
    run->add_option("--out", run_out, "Output directory")->required();
    run->add_option("--workers", run_workers, "Concurrent trials");
    run->add_option("--mode", run_mode, "Learner planner")->check(CLI::IsMember({"outcome", "dp"}));
    run->add_flag("--emit-logs", emit_logs, "Write learner episodes to episodes.csv");

    // oracle
    auto* oracle = app.add_subcommand("oracle", "Print oracle values and maximizing plans for contexts");
    std::string oracle_config, oracle_contexts, oracle_instance;
    int oracle_trial = 0;
    oracle->add_option("--config", oracle_config, "Config file")->required()->check(CLI::ExistingFile);
    oracle->add_option("--contexts", oracle_contexts, "Context file, one context per line")
        ->required()
        ->check(CLI::ExistingFile);
    oracle->add_option("--instance", oracle_instance, "Instance snapshot (default: generate from config seed)")
        ->check(CLI::ExistingFile);
    oracle->add_option("--trial", oracle_trial, "Trial whose instance is generated when no snapshot is given");

    // fit
    auto* fit = app.add_subcommand("fit", "Fit regret orders from a curve file");
    std::string fit_curve, fit_checkpoints;
    fit->add_option("--curve", fit_curve, "curves.csv")->required()->check(CLI::ExistingFile);
    fit->add_option("--checkpoints", fit_checkpoints, "Comma-separated customer indices")->required();

    // estimate
    auto* est = app.add_subcommand("estimate", "Replay an episode log through the estimators");
    std::string est_log, est_out, est_config;
    std::optional<std::uint64_t> est_trial;
    est->add_option("--log", est_log, "episodes.csv")->required()->check(CLI::ExistingFile);
    est->add_option("--out", est_out, "Agent snapshot to write")->required();
    est->add_option("--config", est_config, "Config used for the live run")->check(CLI::ExistingFile);
    est->add_option("--trial", est_trial, "Trial to replay when the log holds several");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            auto cfg = load_config(run_config);
            if (run_trials)
                cfg.trials = *run_trials;
            if (run_seed)
                cfg.seed = *run_seed;
            if (run_workers)
                cfg.workers = *run_workers;
            if (!run_mode.empty())
                cfg.planner = parse_planner(run_mode);
            RunOptions opts;
            opts.emit_logs = emit_logs;
            const auto res = run_experiment(cfg, run_out, opts);
            write_summary(std::cout, cfg, res.summary, cfg.trials);
        } else if (*oracle) {
            const auto cfg = load_config(oracle_config);
            Instance inst;
            if (!oracle_instance.empty()) {
                inst = instance_from_json(read_snapshot(oracle_instance));
            } else {
                auto eng = RandomSource(cfg.seed).stream(static_cast<std::uint64_t>(oracle_trial), 0, 0,
                                                          Purpose::Instance);
                inst = generate_instance(cfg.instance, cfg.bounds, eng);
            }
            const int dim = static_cast<int>(inst.model.theta.front().size());
            std::cout << "context,outcome_value,plan,dp_value\n";
            for (const auto& x : read_contexts(oracle_contexts, dim)) {
                const auto p = plan_params(x, inst.model, inst.auction, cfg.bounds.B_A);
                const auto best = best_outcome_plan(p);
                const double dp = dp_policy(p, default_bid_grid(cfg.bounds, cfg.bid_grid_points)).value;
                for (Eigen::Index i = 0; i < x.size(); ++i)
                    std::cout << (i ? " " : "") << detail::format_double(x(i));
                std::cout << ',' << detail::format_double(best.value) << ',' << best.plan.to_string() << ','
                          << detail::format_double(dp) << '\n';
            }
        } else if (*fit) {
            const auto cps = parse_checkpoint_list(fit_checkpoints);
            std::ifstream is(fit_curve);
            const auto rows = read_curves_csv(is);
            std::cout << "policy,alpha\n";
            for (const auto& [policy, means] : checkpoint_means(rows, cps)) {
                std::cout << policy << ',';
                try {
                    std::cout << detail::fixed(fit_regret_order(cps, means), 4) << '\n';
                } catch (const std::domain_error&) {
                    std::cout << "undefined\n";
                }
            }
        } else if (*est) {
            auto cfg = config_or_default(est_config);
            const auto text = read_file(est_log);
            std::istringstream shape_is(text);
            const auto [H, dim] = infer_log_shape(shape_is);
            if (est_config.empty() && H > 0) {
                cfg.bounds.H = H;
                cfg.bounds.dim = dim;
            }
            std::istringstream is(text);
            const auto logs = read_episode_logs(is, cfg.bounds.H);
            const auto agent = replay_estimation(logs, cfg, est_trial);
            write_snapshot(est_out, agent_to_json(agent));
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
