#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "adbid/harness.hpp"

using namespace adbid;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_experiment()
{
    ExperimentConfig c;
    c.customers = 300;
    c.trials = 3;
    c.seed = 17;
    c.n_underbar = 10;
    c.width_scale = 1e-5;
    c.oracle_gap_samples = 10;
    c.bid_grid_points = 32;
    return c;
}

std::string slurp(const fs::path& p)
{
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

fs::path scratch(const std::string& name)
{
    const auto p = fs::temp_directory_path() / ("adbid_test_" + name);
    fs::remove_all(p);
    return p;
}

} // namespace

TEST(FitRegretOrder, PowerLawsAndErrors)
{
    const std::vector<long> cps{500, 5000, 10000, 15000, 20000};
    std::vector<double> lin, root;
    for (long c : cps) {
        lin.push_back(static_cast<double>(c));
        root.push_back(std::sqrt(static_cast<double>(c)));
    }
    EXPECT_NEAR(fit_regret_order(cps, lin), 1.0, 1e-12);
    EXPECT_NEAR(fit_regret_order(cps, root), 0.5, 1e-12);
    EXPECT_THROW(fit_regret_order(cps, {1, 2, 0, 4, 5}), std::domain_error);
    EXPECT_THROW(fit_regret_order({10}, {3.0}), std::invalid_argument);
    EXPECT_THROW(fit_regret_order({10, 20}, {3.0}), std::invalid_argument);
}

TEST(FitRegretOrder, ReferenceColumnsAgainstIndependentFit)
{
    // reference slopes from numpy.polyfit on natural logs
    const std::vector<long> cps{500, 5000, 10000, 15000, 20000};
    EXPECT_NEAR(fit_regret_order(cps, {1770, 8465, 8484, 8505, 8525}), 0.44435007300056645, 1e-12);
    EXPECT_NEAR(fit_regret_order(cps, {228, 2373, 4741, 7142, 9568}), 1.0126913296694982, 1e-12);
    EXPECT_NEAR(fit_regret_order(cps, {1920, 19285, 38399, 57651, 76945}), 1.0002643371424889, 1e-12);
    EXPECT_NEAR(fit_regret_order(cps, {4630, 46179, 92468, 138652, 184873}), 0.9995350841087889, 1e-12);
}

TEST(Config, DefaultsAndEveryDocumentedKey)
{
    const auto def = parse_config_text("");
    EXPECT_EQ(def.customers, 20000);
    EXPECT_EQ(def.bounds.H, 3);
    EXPECT_EQ(def.bounds.dim, 2);
    EXPECT_EQ(def.exploration_block(), 600);
    EXPECT_EQ(def.effective_checkpoints(), (std::vector<long>{500, 5000, 10000, 15000, 20000}));
    EXPECT_EQ(def.policies.size(), 4u);
    // every documented default parses back to the built-in default
    std::string text;
    for (const auto& [k, v] : config_keys())
        text += k + " = " + v + "\n";
    const auto all = parse_config_text(text);
    EXPECT_EQ(all.customers, def.customers);
    EXPECT_EQ(all.width_scale, def.width_scale);
    EXPECT_EQ(all.instance.theta.scale, def.instance.theta.scale);
    EXPECT_EQ(all.confidence().gamma, def.confidence().gamma);
    EXPECT_EQ(all.exploration_block(), def.exploration_block());
}

TEST(Config, ErrorsNameTheLine)
{
    auto message = [](const std::string& text) {
        try {
            parse_config_text(text);
        } catch (const std::exception& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    EXPECT_NE(message("seed = 1\nnot_a_key = 3\n").find("config line 2"), std::string::npos);
    EXPECT_NE(message("seed = 1\n# c\nseed = 2\n").find("already set on line 1"), std::string::npos);
    EXPECT_NE(message("customers = many\n").find("config line 1"), std::string::npos);
    EXPECT_NE(message("planner = greedy\n").find("planner"), std::string::npos);
    EXPECT_NE(message("checkpoints = 5, 3\n").find("increasing"), std::string::npos);
    const auto c = parse_config_text("customers = 1000   # inline\ncheckpoints = 10, 100, 1000\npolicies = passive\n");
    EXPECT_EQ(c.customers, 1000);
    EXPECT_EQ(c.checkpoints.size(), 3u);
    EXPECT_EQ(c.policies, std::vector<PolicyKind>{PolicyKind::Passive});
}

TEST(Config, ScaledCheckpoints)
{
    ExperimentConfig c;
    c.customers = 2000;
    EXPECT_EQ(c.effective_checkpoints(), (std::vector<long>{50, 500, 1000, 1500, 2000}));
}

TEST(RunTrial, CurvesAndOracleDominance)
{
    const auto cfg = small_experiment();
    const auto tr = run_trial(cfg, 0);
    ASSERT_EQ(tr.curves.size(), 4u);
    for (const auto& c : tr.curves) {
        ASSERT_EQ(c.cum_regret.size(), 300u);
        double prev = 0;
        for (std::size_t k = 0; k < c.cum_regret.size(); ++k) {
            EXPECT_TRUE(std::isfinite(c.cum_regret[k]));
            // every policy plays a forced plan here, so the outcome oracle dominates in expectation
            EXPECT_GE(c.cum_expected_regret[k], prev - 1e-9) << policy_name(c.policy) << " t " << k + 1;
            prev = c.cum_expected_regret[k];
        }
    }
    EXPECT_EQ(tr.exploration_min_delay_count, 10);
    ASSERT_TRUE(tr.agent_snapshot);
    EXPECT_EQ(tr.agent_snapshot->at("next_customer").get<long>(), 301);
}

TEST(RunTrial, SameSeedSameCurves)
{
    const auto cfg = small_experiment();
    const auto a = run_trial(cfg, 1);
    const auto b = run_trial(cfg, 1);
    for (std::size_t i = 0; i < a.curves.size(); ++i) {
        EXPECT_EQ(a.curves[i].cum_regret, b.curves[i].cum_regret);
        EXPECT_EQ(a.curves[i].cum_expected_regret, b.curves[i].cum_expected_regret);
    }
    auto other = cfg;
    other.seed = 18;
    EXPECT_NE(run_trial(other, 1).curves[0].cum_regret, a.curves[0].cum_regret);
}

TEST(Summary, MeansEqualArithmeticMeanOfTrials)
{
    const auto cfg = small_experiment();
    const auto res = run_trials(cfg);
    const auto cps = cfg.effective_checkpoints();
    for (std::size_t i = 0; i < cfg.policies.size(); ++i)
        for (std::size_t k = 0; k < cps.size(); ++k) {
            double s = 0;
            for (const auto& tr : res.trials)
                s += tr.curves[i].cum_regret[static_cast<std::size_t>(cps[k] - 1)];
            EXPECT_NEAR(res.summary.policies[i].checkpoints[k].mean, s / cfg.trials, 1e-12);
        }
}

TEST(Summary, HalfWidthIsMultipleOfSampleSd)
{
    auto cfg = small_experiment();
    cfg.half_width_multiplier = 1.0;
    const auto res = run_trials(cfg);
    const auto idx = static_cast<std::size_t>(cfg.customers - 1);
    std::vector<double> v;
    for (const auto& tr : res.trials)
        v.push_back(tr.curves[3].cum_regret[idx]);
    const double m = (v[0] + v[1] + v[2]) / 3;
    const double sd = std::sqrt(((v[0] - m) * (v[0] - m) + (v[1] - m) * (v[1] - m) + (v[2] - m) * (v[2] - m)) / 2);
    EXPECT_NEAR(res.summary.policies[3].checkpoints.back().half_width, sd, 1e-9 * (1 + sd));
}

TEST(CurvesCsv, RoundTripExact)
{
    const auto cfg = small_experiment();
    const auto res = run_trials(cfg);
    std::ostringstream os;
    write_curves_csv(os, cfg, res.trials);
    std::istringstream is(os.str());
    const auto rows = read_curves_csv(is);
    ASSERT_EQ(rows.size(), 3u * 4u * 300u);
    std::size_t r = 0;
    for (const auto& tr : res.trials)
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t k = 0; k < 300; ++k, ++r) {
                EXPECT_EQ(rows[r].trial, tr.trial);
                EXPECT_EQ(rows[r].policy, policy_name(cfg.policies[i]));
                EXPECT_EQ(rows[r].cum_regret, tr.curves[i].cum_regret[k]);
                EXPECT_EQ(rows[r].cum_expected_regret, tr.curves[i].cum_expected_regret[k]);
            }
    const auto means = checkpoint_means(rows, cfg.effective_checkpoints());
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t k = 0; k < means[i].second.size(); ++k)
            EXPECT_NEAR(means[i].second[k], res.summary.policies[i].checkpoints[k].mean, 1e-9);
    std::istringstream bad("trial,t,policy,cum_regret\n0,1,passive\n");
    EXPECT_THROW(read_curves_csv(bad), std::runtime_error);
}

TEST(RunExperiment, ByteIdenticalAcrossWorkersAndRuns)
{
    auto cfg = small_experiment();
    const auto d1 = scratch("w1"), d2 = scratch("w2"), d3 = scratch("w3");
    cfg.workers = 1;
    run_experiment(cfg, d1, {true});
    cfg.workers = 3;
    run_experiment(cfg, d2, {true});
    run_experiment(cfg, d3, {true});
    for (const char* f : {"curves.csv", "summary.txt", "episodes.csv", "agent_0.snapshot", "agent_2.snapshot",
                          "instance_1.snapshot"}) {
        ASSERT_TRUE(fs::exists(d1 / f)) << f;
        EXPECT_EQ(slurp(d1 / f), slurp(d2 / f)) << f;
        EXPECT_EQ(slurp(d2 / f), slurp(d3 / f)) << f;
    }
    for (const auto& d : {d1, d2, d3})
        fs::remove_all(d);
}

TEST(Replay, MatchesLiveSnapshotBitExactly)
{
    const auto cfg = small_experiment();
    const auto tr = run_trial(cfg, 2, {true});
    std::istringstream is(tr.episode_csv);
    const auto logs = read_episode_logs(is, cfg.bounds.H);
    ASSERT_EQ(logs.size(), 300u);
    const auto agent = replay_estimation(logs, cfg);
    EXPECT_EQ(dump_snapshot(agent_to_json(agent)), dump_snapshot(*tr.agent_snapshot));

    std::istringstream shape(tr.episode_csv);
    EXPECT_EQ(infer_log_shape(shape), (std::pair<int, int>{3, 2}));
}

TEST(Replay, PrefixMatchesLiveAgentAtTruncation)
{
    // drive the learner by hand with the harness's streams and compare at t = 150
    const auto cfg = small_experiment();
    const auto tr = run_trial(cfg, 0, {true});
    std::istringstream is(tr.episode_csv);
    auto logs = read_episode_logs(is, cfg.bounds.H);
    logs.resize(150);

    const RandomSource rng(cfg.seed);
    Agent live(cfg.agent_config());
    for (long t = 1; t <= 150; ++t) {
        auto ctx = rng.stream(0, static_cast<std::uint64_t>(t), 0, Purpose::Context);
        const Vector x = sample_context(cfg.instance, cfg.bounds, tr.instance.model, ctx);
        const auto d = live.act(x);
        live.update(run_episode(d.policy(), x, tr.instance.model, tr.instance.auction, rng,
                                {0, static_cast<std::uint64_t>(t)}, d.mode, cfg.bounds.B_A));
    }
    EXPECT_EQ(dump_snapshot(agent_to_json(replay_estimation(logs, cfg))), dump_snapshot(agent_to_json(live)));
}

TEST(Replay, EmptyLogGivesInitialSnapshot)
{
    const auto cfg = small_experiment();
    EXPECT_EQ(dump_snapshot(agent_to_json(replay_estimation({}, cfg))),
              dump_snapshot(agent_to_json(Agent(cfg.agent_config()))));
}

TEST(Replay, MixedTrialsNeedSelection)
{
    const auto cfg = small_experiment();
    const auto res = run_trials(cfg, {true});
    std::string all = res.trials[0].episode_csv;
    const auto& second = res.trials[1].episode_csv;
    all += second.substr(second.find('\n') + 1);
    std::istringstream is(all);
    const auto logs = read_episode_logs(is, cfg.bounds.H);
    EXPECT_THROW(replay_estimation(logs, cfg), std::invalid_argument);
    EXPECT_EQ(dump_snapshot(agent_to_json(replay_estimation(logs, cfg, 1))),
              dump_snapshot(*res.trials[1].agent_snapshot));
}

TEST(Snapshot, RoundTrips)
{
    const auto cfg = small_experiment();
    const auto tr = run_trial(cfg, 0);
    const auto inst = instance_from_json(Json::parse(dump_snapshot(instance_to_json(tr.instance))));
    EXPECT_EQ(dump_snapshot(instance_to_json(inst)), dump_snapshot(instance_to_json(tr.instance)));
    for (std::size_t i = 0; i < inst.model.theta.size(); ++i)
        EXPECT_EQ(inst.model.theta[i], tr.instance.model.theta[i]);

    Agent restored(cfg.agent_config());
    agent_from_json(Json::parse(dump_snapshot(*tr.agent_snapshot)), restored);
    EXPECT_EQ(dump_snapshot(agent_to_json(restored)), dump_snapshot(*tr.agent_snapshot));
    EXPECT_EQ(restored.next_customer(), 301);
    EXPECT_THROW(agent_from_json(instance_to_json(inst), restored), std::runtime_error);
}

TEST(RunTrials, FailureIsReportedWithProvenance)
{
    auto cfg = small_experiment();
    cfg.instance.strict_bounds = true;
    cfg.instance.theta.offset = 1.0;
    cfg.bounds.B_x = 0.145;   // the smallest context the recipe draws has norm 0.141
    try {
        run_trials(cfg);
        FAIL() << "expected an abort";
    } catch (const std::exception& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("experiment aborted"), std::string::npos) << msg;
        EXPECT_NE(msg.find("trial 0, customer 1:"), std::string::npos) << msg;
        EXPECT_NE(msg.find("trial 2, customer 1:"), std::string::npos) << msg;
    }
}
