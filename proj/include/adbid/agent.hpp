#pragma once

// The learning agent: a fixed exploration schedule over the first (H+1) n
// customers, then optimistic planning against the confidence region, with the
// estimator bank updated after every customer. Also the three fixed baselines.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "adbid/core.hpp"
#include "adbid/environment.hpp"
#include "adbid/estimation.hpp"
#include "adbid/planning.hpp"
#include "adbid/random.hpp"

namespace adbid {

enum class PlannerMode { Outcome, DynamicProgramming };

struct AgentConfig
{
    Bounds bounds;
    ConfidenceConfig confidence;
    long customers = 20000;           // T, enters the delay radius
    long exploration_block = 600;     // n, customers per exploration block
    PlannerMode planner = PlannerMode::Outcome;
    /// Forced outcomes (experiment semantics) or bids of B_A that may still
    /// lose against the sampled HOB (theory semantics).
    BidMode exploration_mode = BidMode::ForcedOutcome;
    int bid_grid_points = 256;
    double sigma_floor = 1e-3;
    double ridge_lambda = 1.0;

    void validate() const
    {
        bounds.validate();
        confidence.validate();
        if (customers < 1 || exploration_block < 1)
            throw std::invalid_argument("customers and exploration_block must be positive");
        if (bid_grid_points < 2)
            throw std::invalid_argument("bid grid needs at least two points");
    }
};

/// Exploration plan of customer t (1-based): block l = floor((t-1)/n)
/// clamped to [0, H]; l = H loses everything, otherwise rounds 1 and l+1 win.
inline OutcomePlan exploration_plan(long t, long block, int H)
{
    if (t < 1 || block < 1)
        throw std::invalid_argument("exploration_plan needs t >= 1 and block >= 1");
    const long l = std::clamp((t - 1) / block, 0L, static_cast<long>(H));
    auto plan = OutcomePlan::all_lose(H);
    if (l == H)
        return plan;
    plan.wins[0] = true;
    plan.wins[static_cast<std::size_t>(l)] = true;
    return plan;
}

/// How one customer is played: either a forced outcome plan or a bid table.
struct AgentDecision
{
    bool exploring = false;
    BidMode mode = BidMode::ForcedOutcome;
    std::optional<OutcomePlan> plan;
    std::optional<PolicyTable> table;
    double planned_value = 0.0;   // value under the planner's own inputs

    EpisodePolicy policy() const
    {
        if (table) {
            const PolicyTable* t = &*table;
            return [t](int h, const ExposureState& s) { return RoundAction{t->bid(h, s), false}; };
        }
        const OutcomePlan* p = &*plan;
        return [p](int h, const ExposureState&) { return RoundAction{0.0, p->win_at(h)}; };
    }

    /// Expected reward of this decision under parameters `p`.
    double expected_value(const PlanParams& p) const
    {
        return table ? evaluate_policy(*table, p) : outcome_value(*plan, p);
    }
};

/// Bid table that bids `bid` on the plan's win rounds and 0 elsewhere.
inline PolicyTable table_from_plan(const OutcomePlan& plan, double bid)
{
    const int H = plan.horizon();
    PolicyTable t;
    t.rounds.resize(static_cast<std::size_t>(H));
    for (int h = 1; h <= H; ++h)
        for (const auto& s : reachable_states(h, H))
            t.rounds[static_cast<std::size_t>(h - 1)].push_back({s, plan.win_at(h) ? bid : 0.0, 0.0});
    return t;
}

class Agent
{
public:
    explicit Agent(AgentConfig cfg) : cfg_(std::move(cfg))
    {
        cfg_.validate();
        const int H = cfg_.bounds.H;
        const int d = cfg_.bounds.dim;
        for (int slot = 0; slot < ThetaIndex::slot_count(H); ++slot)
            theta_bank_.emplace_back(ThetaIndex::from_slot(slot), d);
        for (int k = 0; k < DelayIndex::slot_count(H); ++k)
            delay_bank_.emplace_back(k);
        auction_ = AuctionEstimator(H, d, cfg_.ridge_lambda);
    }

    const AgentConfig& config() const { return cfg_; }
    long next_customer() const { return t_; }
    long planner_calls() const { return planner_calls_; }
    const std::vector<ThetaEstimator>& theta_bank() const { return theta_bank_; }
    const std::vector<DelayEstimator>& delay_bank() const { return delay_bank_; }
    const AuctionEstimator& auction_estimator() const { return auction_; }

    bool exploring(long t) const { return t <= (cfg_.bounds.H + 1) * cfg_.exploration_block; }

    /// Optimistic planner inputs for context x: theta means at the top of
    /// their ellipsoids, delays at the top of their intervals (capped at B_d),
    /// and the point-estimated HOB model.
    PlanParams optimistic_params(const Vector& x) const
    {
        const auto& B = cfg_.bounds;
        PlanParams p;
        for (const auto& est : theta_bank_)
            p.mu.push_back(optimistic_mean(est, x, cfg_.confidence.gamma, B.b));
        p.delay.assign(static_cast<std::size_t>(DelayIndex::slot_count(B.H)), 1.0);
        for (int k = 1; k < B.H; ++k)
            p.delay[static_cast<std::size_t>(k)] = optimistic_delay(k);
        const auto model = auction_.estimated_model(cfg_.sigma_floor);
        for (int h = 1; h <= B.H; ++h)
            p.hob.push_back(model.hob(h, x));
        p.max_bid = B.B_A;
        return p;
    }

    /// d_hat + radius clamped to [0, B_d]; B_d while the estimate is unavailable.
    double optimistic_delay(int lag) const
    {
        const auto& est = delay_bank_.at(static_cast<std::size_t>(lag));
        const auto d_hat = est.estimate();
        if (!d_hat || est.count() == 0)
            return cfg_.bounds.B_d;
        const double r = delay_radius(est.count(), cfg_.confidence.gamma, cfg_.bounds,
                                      static_cast<double>(cfg_.customers), cfg_.confidence.delta,
                                      cfg_.confidence.width_scale);
        return std::clamp(*d_hat + r, 0.0, cfg_.bounds.B_d);
    }

    /// Decision for the next customer, whose context is x.
    AgentDecision act(const Vector& x)
    {
        const int H = cfg_.bounds.H;
        AgentDecision out;
        if (exploring(t_)) {
            out.exploring = true;
            auto plan = exploration_plan(t_, cfg_.exploration_block, H);
            if (cfg_.exploration_mode == BidMode::Auction) {
                out.mode = BidMode::Auction;
                out.table = table_from_plan(plan, cfg_.bounds.B_A);
            } else {
                out.mode = BidMode::ForcedOutcome;
            }
            out.plan = std::move(plan);
            return out;
        }
        ++planner_calls_;
        const auto p = optimistic_params(x);
        if (cfg_.planner == PlannerMode::Outcome) {
            auto choice = best_outcome_plan(p);
            out.mode = BidMode::ForcedOutcome;
            out.plan = std::move(choice.plan);
            out.planned_value = choice.value;
        } else {
            auto table = dp_policy(p, default_bid_grid(cfg_.bounds, cfg_.bid_grid_points));
            out.mode = BidMode::Auction;
            out.planned_value = table.value;
            out.table = std::move(table);
        }
        return out;
    }

    /// Consumes customer t's episode: HOB regressions for every round, then
    /// theta updates from the W buckets, then delay updates from the D buckets
    /// against the freshly updated theta bank.
    void update(const EpisodeLog& log)
    {
        if (log.customer != static_cast<std::uint64_t>(t_))
            throw std::invalid_argument("episode for customer " + std::to_string(log.customer) +
                                        " arrived while expecting customer " + std::to_string(t_));
        const int H = cfg_.bounds.H;
        check_episode(log, H);
        for (const auto& r : log.rounds)
            auction_.at(r.h).update(log.x, std::log(r.hob));

        const auto split = split_episode(log, H);
        for (int slot = 0; slot < ThetaIndex::slot_count(H); ++slot) {
            auto& est = theta_bank_[static_cast<std::size_t>(slot)];
            for (int h : split.theta_rounds[static_cast<std::size_t>(slot)]) {
                const auto& r = log.rounds[static_cast<std::size_t>(h - 1)];
                const auto idx = r.won ? win_index(r.state) : ThetaIndex::natural_demand();
                if (idx.slot() != slot || (!r.won && !r.state.never_exposed()))
                    throw std::logic_error("theta estimator fed a round outside its W bucket");
                est.update(log.x, static_cast<double>(r.conversions), cfg_.confidence.truncation, cfg_.bounds.B_theta);
            }
        }
        for (int k = 1; k < H; ++k) {
            const auto& rounds = split.delay_rounds[static_cast<std::size_t>(k)];
            if (rounds.empty())
                continue;
            auto& est = delay_bank_[static_cast<std::size_t>(k)];
            est = tsmle_update(est, log, rounds, theta_bank_, cfg_.bounds.b);
        }
        ++t_;
    }

    /// Overwrites every estimator with exact parameters (zero-error state).
    /// Used to check that planning on exact inputs reproduces the oracle.
    void inject_exact(const TrueModel& m, const AuctionModel& a)
    {
        for (std::size_t i = 0; i < theta_bank_.size(); ++i)
            theta_bank_[i].set_theta_hat(m.theta.at(i));
        for (std::size_t k = 1; k < delay_bank_.size(); ++k)
            delay_bank_[k].restore(m.delay.at(k), 1.0, 1);
        for (int h = 1; h <= cfg_.bounds.H; ++h) {
            const auto i = static_cast<std::size_t>(h - 1);
            const int d = cfg_.bounds.dim;
            auction_.at(h).restore(Matrix::Identity(d, d), a.beta.at(i), a.sigma.at(i) * a.sigma.at(i), 1);
        }
    }

    /// Jumps the customer counter (used together with inject_exact).
    void set_next_customer(long t) { t_ = t; }

    // snapshot restore hooks
    std::vector<ThetaEstimator>& mutable_theta_bank() { return theta_bank_; }
    std::vector<DelayEstimator>& mutable_delay_bank() { return delay_bank_; }
    AuctionEstimator& mutable_auction_estimator() { return auction_; }

private:
    AgentConfig cfg_;
    std::vector<ThetaEstimator> theta_bank_;
    std::vector<DelayEstimator> delay_bank_;   // slot 0 (Never) is unused
    AuctionEstimator auction_;
    long t_ = 1;
    long planner_calls_ = 0;
};

// ---------------------------------------------------------------------------
// Baselines
// ---------------------------------------------------------------------------

enum class BaselineKind { Aggressive, Random, Passive };

/// Aggressive wins every round, passive loses every round, random draws one
/// of the 2^H plans uniformly.
inline OutcomePlan baseline_act(BaselineKind kind, int H, Engine& eng)
{
    switch (kind) {
    case BaselineKind::Aggressive: return OutcomePlan::all_win(H);
    case BaselineKind::Passive: return OutcomePlan::all_lose(H);
    case BaselineKind::Random: {
        // top H bits of a 64-bit draw are uniform over 2^H codes
        const auto code = static_cast<std::uint32_t>(eng() >> (64 - H));
        return OutcomePlan::from_code(code, H);
    }
    }
    throw std::logic_error("unknown baseline");
}

} // namespace adbid
