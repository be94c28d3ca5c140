#pragma once

// Multi-trial regret benchmark: one random instance per trial, the learner and
// the baselines played on paired noise, cumulative regret against the
// outcome-enumeration oracle, checkpoint aggregation and log-log order fits.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "adbid/agent.hpp"
#include "adbid/config.hpp"
#include "adbid/environment.hpp"
#include "adbid/planning.hpp"
#include "adbid/random.hpp"
#include "adbid/snapshot.hpp"

namespace adbid {

/// OLS slope of log(mean) on log(t).
inline double fit_regret_order(const std::vector<long>& checkpoints, const std::vector<double>& means)
{
    if (checkpoints.size() != means.size())
        throw std::invalid_argument("checkpoints and means differ in length");
    if (checkpoints.size() < 2)
        throw std::invalid_argument("regret order needs at least two checkpoints");
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < means.size(); ++i) {
        if (!(means[i] > 0) || checkpoints[i] < 1)
            throw std::domain_error("regret order undefined: nonpositive checkpoint mean");
        lx.push_back(std::log(static_cast<double>(checkpoints[i])));
        ly.push_back(std::log(means[i]));
    }
    const double n = static_cast<double>(lx.size());
    const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n;
    const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sxy += (lx[i] - mx) * (ly[i] - my);
        sxx += (lx[i] - mx) * (lx[i] - mx);
    }
    if (!(sxx > 0))
        throw std::invalid_argument("regret order needs distinct checkpoints");
    return sxy / sxx;
}

struct PolicyCurve
{
    PolicyKind policy = PolicyKind::Algorithm1;
    std::vector<double> cum_regret;            // index t-1
    std::vector<double> cum_expected_regret;
};

struct TrialResult
{
    int trial = 0;
    Instance instance;
    std::vector<PolicyCurve> curves;           // config.policies order
    std::optional<Json> agent_snapshot;
    std::string episode_csv;                   // algorithm-1 episodes when logs are emitted
    double oracle_gap = 0.0;                   // mean (DP oracle - outcome oracle) over the gap sample
    long exploration_min_delay_count = -1;     // min delay-bucket count when exploration ends
};

struct RunOptions
{
    bool emit_logs = false;
};

namespace detail {

inline PlanParams true_params(const Vector& x, const Instance& inst, const Bounds& bounds)
{
    return plan_params(x, inst.model, inst.auction, bounds.B_A);
}

} // namespace detail

inline TrialResult run_trial(const ExperimentConfig& cfg, int trial, const RunOptions& opts = {})
{
    const RandomSource rng(cfg.seed);
    const auto tr = static_cast<std::uint64_t>(trial);
    const auto& B = cfg.bounds;
    TrialResult res;
    res.trial = trial;
    {
        auto eng = rng.stream(tr, 0, 0, Purpose::Instance);
        res.instance = generate_instance(cfg.instance, B, eng);
    }
    const auto& inst = res.instance;

    std::optional<Agent> agent;
    for (auto k : cfg.policies) {
        res.curves.push_back({k, {}, {}});
        res.curves.back().cum_regret.reserve(static_cast<std::size_t>(cfg.customers));
        res.curves.back().cum_expected_regret.reserve(static_cast<std::size_t>(cfg.customers));
        if (k == PolicyKind::Algorithm1 && !agent)
            agent.emplace(cfg.agent_config());
    }
    std::ostringstream episodes;
    if (opts.emit_logs)
        write_episode_header(episodes, B.dim);

    const long explore_end = (B.H + 1) * cfg.exploration_block();
    double gap_sum = 0.0;
    int gap_count = 0;
    std::vector<double> cum(cfg.policies.size(), 0.0), cum_exp(cfg.policies.size(), 0.0);

    for (long t = 1; t <= cfg.customers; ++t) {
        try {
            const auto ut = static_cast<std::uint64_t>(t);
            auto ctx_eng = rng.stream(tr, ut, 0, Purpose::Context);
            const Vector x = sample_context(cfg.instance, B, inst.model, ctx_eng);
            const auto p = detail::true_params(x, inst, B);
            const auto opt = best_outcome_plan(p);
            if (gap_count < cfg.oracle_gap_samples) {
                gap_sum += dp_policy(p, default_bid_grid(B, cfg.bid_grid_points)).value - opt.value;
                ++gap_count;
            }
            const EpisodeKey key{tr, ut};
            for (std::size_t i = 0; i < cfg.policies.size(); ++i) {
                const auto kind = cfg.policies[i];
                EpisodeLog log;
                double expected = 0.0;
                if (kind == PolicyKind::Algorithm1) {
                    const auto decision = agent->act(x);
                    log = run_episode(decision.policy(), x, inst.model, inst.auction, rng, key, decision.mode, B.B_A);
                    expected = decision.expected_value(p);
                    agent->update(log);
                    if (opts.emit_logs)
                        write_episode_rows(episodes, log);
                } else {
                    auto pol_eng = rng.stream(tr, ut, 0, Purpose::Policy);
                    const BaselineKind bk = kind == PolicyKind::Aggressive ? BaselineKind::Aggressive
                                            : kind == PolicyKind::Random   ? BaselineKind::Random
                                                                           : BaselineKind::Passive;
                    const auto plan = baseline_act(bk, B.H, pol_eng);
                    log = run_episode([&plan](int h, const ExposureState&) { return RoundAction{0.0, plan.win_at(h)}; },
                                      x, inst.model, inst.auction, rng, key, BidMode::ForcedOutcome);
                    expected = outcome_value(plan, p);
                }
                cum[i] += opt.value - log.realized_reward;
                cum_exp[i] += opt.value - expected;
                res.curves[i].cum_regret.push_back(cum[i]);
                res.curves[i].cum_expected_regret.push_back(cum_exp[i]);
            }
            if (agent && t == explore_end) {
                long m = -1;
                for (std::size_t k = 1; k < agent->delay_bank().size(); ++k)
                    m = m < 0 ? agent->delay_bank()[k].count() : std::min(m, agent->delay_bank()[k].count());
                res.exploration_min_delay_count = m;
            }
        } catch (const std::exception& e) {
            throw std::runtime_error("trial " + std::to_string(trial) + ", customer " + std::to_string(t) + ": " +
                                     e.what());
        }
    }
    res.oracle_gap = gap_count ? gap_sum / gap_count : 0.0;
    if (agent)
        res.agent_snapshot = agent_to_json(*agent);
    if (opts.emit_logs)
        res.episode_csv = episodes.str();
    return res;
}

struct CheckpointStat
{
    long t = 0;
    double mean = 0.0;
    double half_width = 0.0;
    double expected_mean = 0.0;
};

struct PolicySummary
{
    PolicyKind policy = PolicyKind::Algorithm1;
    std::vector<CheckpointStat> checkpoints;
    std::optional<double> alpha_mean_curve;
    std::optional<double> alpha_per_trial;     // average of per-trial fits
    std::optional<double> alpha_expected;      // mean-curve fit of expected regret
};

struct SummaryStats
{
    std::vector<PolicySummary> policies;
    double oracle_gap = 0.0;
    double exploration_min_delay_count = -1;
};

namespace detail {

inline std::optional<double> try_fit(const std::vector<long>& cps, const std::vector<double>& means)
{
    try {
        return fit_regret_order(cps, means);
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

} // namespace detail

/// Aggregates in trial order so the result does not depend on scheduling.
inline SummaryStats summarize(const ExperimentConfig& cfg, const std::vector<TrialResult>& trials)
{
    SummaryStats out;
    const auto cps = cfg.effective_checkpoints();
    const double n = static_cast<double>(trials.size());
    for (std::size_t i = 0; i < cfg.policies.size(); ++i) {
        PolicySummary ps;
        ps.policy = cfg.policies[i];
        std::vector<double> means, exp_means;
        for (long c : cps) {
            const auto idx = static_cast<std::size_t>(c - 1);
            CheckpointStat st;
            st.t = c;
            double s = 0, se = 0;
            for (const auto& tr : trials) {
                s += tr.curves[i].cum_regret[idx];
                se += tr.curves[i].cum_expected_regret[idx];
            }
            st.mean = s / n;
            st.expected_mean = se / n;
            double ss = 0;
            for (const auto& tr : trials) {
                const double dv = tr.curves[i].cum_regret[idx] - st.mean;
                ss += dv * dv;
            }
            const double sd = trials.size() > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
            st.half_width = cfg.half_width_multiplier * sd;
            means.push_back(st.mean);
            exp_means.push_back(st.expected_mean);
            ps.checkpoints.push_back(st);
        }
        ps.alpha_mean_curve = detail::try_fit(cps, means);
        ps.alpha_expected = detail::try_fit(cps, exp_means);
        double a_sum = 0;
        bool ok = true;
        for (const auto& tr : trials) {
            std::vector<double> v;
            for (long c : cps)
                v.push_back(tr.curves[i].cum_regret[static_cast<std::size_t>(c - 1)]);
            const auto a = detail::try_fit(cps, v);
            if (!a) {
                ok = false;
                break;
            }
            a_sum += *a;
        }
        if (ok)
            ps.alpha_per_trial = a_sum / n;
        out.policies.push_back(std::move(ps));
    }
    double g = 0, m = 0;
    for (const auto& tr : trials) {
        g += tr.oracle_gap;
        m += static_cast<double>(tr.exploration_min_delay_count);
    }
    out.oracle_gap = g / n;
    out.exploration_min_delay_count = m / n;
    return out;
}

inline void write_curves_csv(std::ostream& os, const ExperimentConfig& cfg, const std::vector<TrialResult>& trials)
{
    os << "trial,t,policy,cum_regret,cum_expected_regret\n";
    for (const auto& tr : trials)
        for (std::size_t i = 0; i < cfg.policies.size(); ++i) {
            const auto name = policy_name(cfg.policies[i]);
            const auto& c = tr.curves[i];
            for (std::size_t k = 0; k < c.cum_regret.size(); ++k)
                os << tr.trial << ',' << (k + 1) << ',' << name << ',' << detail::format_double(c.cum_regret[k]) << ','
                   << detail::format_double(c.cum_expected_regret[k]) << '\n';
        }
}

struct CurveRow
{
    int trial = 0;
    long t = 0;
    std::string policy;
    double cum_regret = 0.0;
    double cum_expected_regret = 0.0;

    friend bool operator==(const CurveRow&, const CurveRow&) = default;
};

inline std::vector<CurveRow> read_curves_csv(std::istream& is)
{
    std::vector<CurveRow> out;
    std::string line;
    std::size_t lineno = 1;
    if (!std::getline(is, line))
        throw std::runtime_error("curve file is empty");
    const auto head = detail::split_commas(detail::trim(line));
    const bool has_expected = head.size() == 5;
    if (head.size() < 4 || head[0] != "trial" || head[1] != "t" || head[2] != "policy" || head[3] != "cum_regret" ||
        (has_expected && head[4] != "cum_expected_regret"))
        throw std::runtime_error("line 1: expected header trial,t,policy,cum_regret[,cum_expected_regret]");
    while (std::getline(is, line)) {
        ++lineno;
        const auto s = detail::trim(line);
        if (s.empty())
            continue;
        const auto cols = detail::split_commas(s);
        if (cols.size() != head.size())
            throw std::runtime_error("line " + std::to_string(lineno) + ": wrong column count");
        CurveRow r;
        r.trial = detail::parse_int<int>(cols[0], lineno);
        r.t = detail::parse_int<long>(cols[1], lineno);
        r.policy = std::string(cols[2]);
        r.cum_regret = detail::parse_double(cols[3], lineno);
        if (has_expected)
            r.cum_expected_regret = detail::parse_double(cols[4], lineno);
        out.push_back(std::move(r));
    }
    return out;
}

/// Mean cumulative regret per policy at the given checkpoints, averaged over
/// the trials present in the curve file. Policies keep first-appearance order.
inline std::vector<std::pair<std::string, std::vector<double>>> checkpoint_means(const std::vector<CurveRow>& rows,
                                                                                 const std::vector<long>& cps)
{
    std::vector<std::pair<std::string, std::vector<double>>> out;
    std::vector<std::vector<int>> counts;
    for (const auto& r : rows) {
        auto it = std::find_if(out.begin(), out.end(), [&](const auto& p) { return p.first == r.policy; });
        if (it == out.end()) {
            out.push_back({r.policy, std::vector<double>(cps.size(), 0.0)});
            counts.emplace_back(cps.size(), 0);
            it = out.end() - 1;
        }
        const auto pi = static_cast<std::size_t>(it - out.begin());
        for (std::size_t k = 0; k < cps.size(); ++k)
            if (r.t == cps[k]) {
                it->second[k] += r.cum_regret;
                ++counts[pi][k];
            }
    }
    for (std::size_t pi = 0; pi < out.size(); ++pi)
        for (std::size_t k = 0; k < cps.size(); ++k) {
            if (counts[pi][k] == 0)
                throw std::runtime_error("policy " + out[pi].first + " has no row at t = " + std::to_string(cps[k]));
            out[pi].second[k] /= counts[pi][k];
        }
    return out;
}

namespace detail {

inline std::string fixed(double v, int prec = 0)
{
    std::ostringstream os;
    os << std::fixed << std::setprecision(prec) << v;
    return os.str();
}

inline std::string alpha_text(const std::optional<double>& a)
{
    return a ? fixed(*a, 3) : std::string("undefined");
}

} // namespace detail

/// Checkpoint table in the layout of the reference results: mean
/// [mean - hw, mean + hw] per policy column, then fitted orders.
inline void write_summary(std::ostream& os, const ExperimentConfig& cfg, const SummaryStats& s, int trials)
{
    os << "# average cumulative regret (+/- " << detail::fixed(cfg.half_width_multiplier, 2)
       << " standard deviation), " << trials << " trials, " << cfg.customers << " customers, seed " << cfg.seed
       << "\n";
    os << std::left << std::setw(8) << "t";
    for (const auto& p : s.policies)
        os << std::setw(32) << policy_name(p.policy);
    os << "\n";
    const std::size_t ncp = s.policies.empty() ? 0 : s.policies.front().checkpoints.size();
    for (std::size_t k = 0; k < ncp; ++k) {
        os << std::setw(8) << s.policies.front().checkpoints[k].t;
        for (const auto& p : s.policies) {
            const auto& c = p.checkpoints[k];
            os << std::setw(32)
               << (detail::fixed(c.mean) + " [" + detail::fixed(c.mean - c.half_width) + ", " +
                   detail::fixed(c.mean + c.half_width) + "]");
        }
        os << "\n";
    }
    os << std::setw(8) << "T^alpha";
    for (const auto& p : s.policies)
        os << std::setw(32) << detail::alpha_text(p.alpha_mean_curve);
    os << "\n\n# fitted order variants\n";
    for (const auto& p : s.policies)
        os << policy_name(p.policy) << ": mean_curve=" << detail::alpha_text(p.alpha_mean_curve)
           << " per_trial_avg=" << detail::alpha_text(p.alpha_per_trial)
           << " expected_regret=" << detail::alpha_text(p.alpha_expected) << "\n";
    os << "\n# expected-regret checkpoint means\n";
    for (const auto& p : s.policies) {
        os << policy_name(p.policy) << ":";
        for (const auto& c : p.checkpoints)
            os << " " << detail::fixed(c.expected_mean);
        os << "\n";
    }
    os << "\n# oracle mode gap (dp minus outcome, mean over first " << cfg.oracle_gap_samples
       << " customers per trial): " << detail::fixed(s.oracle_gap, 6) << "\n";
    if (s.exploration_min_delay_count >= 0)
        os << "# min delay-bucket count at end of exploration (trial mean): "
           << detail::fixed(s.exploration_min_delay_count, 1) << "\n";
}

struct ExperimentResult
{
    std::vector<TrialResult> trials;
    SummaryStats summary;
};

/// Runs all trials on up to cfg.workers threads. Any failing trial aborts the
/// experiment with every failure listed.
inline ExperimentResult run_trials(const ExperimentConfig& cfg, const RunOptions& opts = {})
{
    cfg.validate();
    std::vector<std::optional<TrialResult>> slots(static_cast<std::size_t>(cfg.trials));
    std::vector<std::string> errors(static_cast<std::size_t>(cfg.trials));
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int k = next++; k < cfg.trials; k = next++) {
            try {
                slots[static_cast<std::size_t>(k)] = run_trial(cfg, k, opts);
            } catch (const std::exception& e) {
                errors[static_cast<std::size_t>(k)] = e.what();
            }
        }
    };
    const int nthreads = std::min(cfg.workers, cfg.trials);
    if (nthreads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < nthreads; ++i)
            pool.emplace_back(worker);
        for (auto& th : pool)
            th.join();
    }
    std::string report;
    for (const auto& e : errors)
        if (!e.empty())
            report += "  " + e + "\n";
    if (!report.empty())
        throw std::runtime_error("experiment aborted:\n" + report);
    ExperimentResult out;
    for (auto& s : slots)
        out.trials.push_back(std::move(*s));
    out.summary = summarize(cfg, out.trials);
    return out;
}

/// run_trials plus persisted outputs under `dir`.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& dir,
                                       const RunOptions& opts = {})
{
    auto res = run_trials(cfg, opts);
    std::filesystem::create_directories(dir);
    auto open = [&](const std::string& name) {
        std::ofstream os(dir / name, std::ios::binary);
        if (!os)
            throw std::runtime_error("cannot write " + (dir / name).string());
        return os;
    };
    {
        auto os = open("curves.csv");
        write_curves_csv(os, cfg, res.trials);
    }
    {
        auto os = open("summary.txt");
        write_summary(os, cfg, res.summary, cfg.trials);
    }
    for (const auto& tr : res.trials) {
        const auto k = std::to_string(tr.trial);
        write_snapshot((dir / ("instance_" + k + ".snapshot")).string(), instance_to_json(tr.instance));
        if (tr.agent_snapshot)
            write_snapshot((dir / ("agent_" + k + ".snapshot")).string(), *tr.agent_snapshot);
    }
    if (opts.emit_logs) {
        auto os = open("episodes.csv");
        bool first = true;
        for (const auto& tr : res.trials) {
            std::string_view body = tr.episode_csv;
            if (!first)
                body.remove_prefix(std::min(body.size(), body.find('\n') + 1));   // drop repeated header
            os << body;
            first = false;
        }
    }
    return res;
}

/// Feeds logged episodes of one trial through Agent::update, without
/// re-simulating, and returns the resulting agent.
inline Agent replay_estimation(const std::vector<EpisodeLog>& logs, const ExperimentConfig& cfg,
                               std::optional<std::uint64_t> trial = std::nullopt)
{
    Agent agent(cfg.agent_config());
    std::optional<std::uint64_t> want = trial;
    for (const auto& log : logs) {
        if (!want)
            want = log.trial;
        if (log.trial != *want) {
            if (trial)
                continue;
            throw std::invalid_argument("log holds several trials; select one");
        }
        agent.update(log);
    }
    return agent;
}

/// Horizon and context dimension of an episode CSV, read from its header and
/// the first episode's rows.
inline std::pair<int, int> infer_log_shape(std::istream& is)
{
    std::string line;
    if (!std::getline(is, line))
        return {0, 0};
    const int dim = static_cast<int>(detail::split_commas(detail::trim(line)).size()) - 10;
    int H = 0;
    std::string first_key;
    while (std::getline(is, line)) {
        const auto cols = detail::split_commas(detail::trim(line));
        if (cols.size() < 3)
            continue;
        const std::string key = std::string(cols[0]) + "," + std::string(cols[1]);
        if (first_key.empty())
            first_key = key;
        if (key != first_key)
            break;
        ++H;
    }
    return {H, dim};
}

} // namespace adbid
