#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "adbid/core.hpp"

namespace adbid {

/// Per-context planning inputs: scalar conversion means per ThetaIndex slot,
/// delay factors per DelayIndex slot, and the HOB law of each round.
struct PlanParams
{
    std::vector<double> mu;
    std::vector<double> delay;
    std::vector<LognormalHob> hob;
    double max_bid = std::numeric_limits<double>::infinity();

    int horizon() const { return static_cast<int>(hob.size()); }

    double win_value(const ExposureState& s) const { return mu.at(static_cast<std::size_t>(win_index(s).slot())); }
    double lose_value(const ExposureState& s) const
    {
        return delay.at(static_cast<std::size_t>(delay_index(s).slot())) *
               mu.at(static_cast<std::size_t>(lose_index(s).slot()));
    }
    const LognormalHob& hob_at(int h) const { return hob.at(static_cast<std::size_t>(h - 1)); }
};

inline PlanParams plan_params(const Vector& x, const TrueModel& m, const AuctionModel& a, double max_bid)
{
    PlanParams p;
    for (const auto& th : m.theta)
        p.mu.push_back(th.dot(x));
    p.delay = m.delay;
    for (int h = 1; h <= a.horizon(); ++h)
        p.hob.push_back(a.hob(h, x));
    p.max_bid = max_bid;
    return p;
}

// ---------------------------------------------------------------------------
// Outcome plans
// ---------------------------------------------------------------------------

/// Target outcome per round, wins[0] is round 1.
struct OutcomePlan
{
    std::vector<bool> wins;

    static OutcomePlan all_win(int H) { return {std::vector<bool>(static_cast<std::size_t>(H), true)}; }
    static OutcomePlan all_lose(int H) { return {std::vector<bool>(static_cast<std::size_t>(H), false)}; }

    /// Bit H-1 of `code` is round 1, so increasing codes are increasing in
    /// lexicographic order with lose < win.
    static OutcomePlan from_code(std::uint32_t code, int H)
    {
        OutcomePlan p;
        p.wins.resize(static_cast<std::size_t>(H));
        for (int h = 0; h < H; ++h)
            p.wins[static_cast<std::size_t>(h)] = (code >> (H - 1 - h)) & 1u;
        return p;
    }

    std::uint32_t code() const
    {
        std::uint32_t c = 0;
        for (bool w : wins)
            c = (c << 1) | (w ? 1u : 0u);
        return c;
    }

    int horizon() const { return static_cast<int>(wins.size()); }
    bool win_at(int h) const { return wins.at(static_cast<std::size_t>(h - 1)); }

    std::string to_string() const
    {
        std::string s;
        for (bool w : wins)
            s += w ? '1' : '0';
        return s;
    }

    friend bool operator==(const OutcomePlan&, const OutcomePlan&) = default;
};

/// Expected reward of forcing `plan`: a forced win pays the unconditional HOB
/// mean. Per-round rewards are summed from the last round back, matching the
/// accumulation order of dp_policy.
inline double outcome_value(const OutcomePlan& plan, const PlanParams& p)
{
    const int H = p.horizon();
    if (plan.horizon() != H)
        throw std::invalid_argument("plan length must equal the horizon");
    std::vector<double> r(static_cast<std::size_t>(H));
    ExposureState s = ExposureState::initial();
    for (int h = 1; h <= H; ++h) {
        const bool w = plan.win_at(h);
        r[static_cast<std::size_t>(h - 1)] = w ? p.win_value(s) - p.hob_at(h).mean() : p.lose_value(s);
        s = next_state(s, w);
    }
    double v = 0.0;
    for (int h = H; h >= 1; --h)
        v = r[static_cast<std::size_t>(h - 1)] + v;
    return v;
}

struct PlanChoice
{
    OutcomePlan plan;
    double value = 0.0;
};

inline constexpr int kMaxEnumerationHorizon = 20;

/// Argmax over all 2^H plans; ties go to the lexicographically smallest plan.
inline PlanChoice best_outcome_plan(const PlanParams& p)
{
    const int H = p.horizon();
    if (H > kMaxEnumerationHorizon)
        throw std::length_error("outcome enumeration capped at H = " + std::to_string(kMaxEnumerationHorizon));
    PlanChoice best{OutcomePlan::all_lose(H), -std::numeric_limits<double>::infinity()};
    const std::uint32_t n = 1u << H;
    for (std::uint32_t code = 0; code < n; ++code) {
        auto plan = OutcomePlan::from_code(code, H);
        const double v = outcome_value(plan, p);
        if (v > best.value) {
            best.value = v;
            best.plan = std::move(plan);
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Dynamic programming over bids
// ---------------------------------------------------------------------------

/// Dense lookup over (since_last, gap) for one round.
class StateValues
{
public:
    explicit StateValues(int H) : stride_(H + 3), values_(static_cast<std::size_t>((H + 3) * (H + 3)), 0.0) {}

    double& operator[](const ExposureState& s) { return values_[index(s)]; }
    double operator[](const ExposureState& s) const { return values_[index(s)]; }

private:
    std::size_t index(const ExposureState& s) const
    {
        return static_cast<std::size_t>(s.since_last * stride_ + (s.gap + 1));
    }
    int stride_;
    std::vector<double> values_;
};

struct PolicyEntry
{
    ExposureState state;
    double bid = 0.0;
    double value = 0.0;   // optimal value-to-go from (h, state)
};

/// Bid per reachable (h, state) and the value from the initial state.
struct PolicyTable
{
    std::vector<std::vector<PolicyEntry>> rounds;   // rounds[h-1]
    double value = 0.0;

    const PolicyEntry& entry(int h, const ExposureState& s) const
    {
        for (const auto& e : rounds.at(static_cast<std::size_t>(h - 1)))
            if (e.state == s)
                return e;
        throw std::out_of_range("state not reachable at this round");
    }
    double bid(int h, const ExposureState& s) const { return entry(h, s).bid; }
};

/// Q_h(s, a) with continuation values of round h+1.
inline double action_value(const PlanParams& p, int h, const ExposureState& s, double bid, const StateValues& next)
{
    const auto& hob = p.hob_at(h);
    const double r = round_reward(p.win_value(s), p.lose_value(s), hob, bid);
    const double F = hob.cdf(bid);
    return r + F * next[next_state(s, true)] + (1 - F) * next[next_state(s, false)];
}

/// Backward induction over a bid grid; the argmax keeps the first (lowest)
/// grid bid on ties. An infinite grid point acts as a forced win.
inline PolicyTable dp_policy(const PlanParams& p, const std::vector<double>& grid)
{
    if (grid.empty())
        throw std::invalid_argument("bid grid must be nonempty");
    const int H = p.horizon();
    PolicyTable table;
    table.rounds.resize(static_cast<std::size_t>(H));
    StateValues next(H);
    for (int h = H; h >= 1; --h) {
        StateValues cur(H);
        for (const auto& s : reachable_states(h, H)) {
            double best_q = -std::numeric_limits<double>::infinity();
            double best_bid = grid.front();
            for (double a : grid) {
                const double q = action_value(p, h, s, a, next);
                if (q > best_q) {
                    best_q = q;
                    best_bid = a;
                }
            }
            cur[s] = best_q;
            table.rounds[static_cast<std::size_t>(h - 1)].push_back({s, best_bid, best_q});
        }
        next = cur;
    }
    table.value = next[ExposureState::initial()];
    return table;
}

/// Marginal value of winning at (h, s), clamped to [0, max_bid]. With
/// continuation values this is the optimal second-price bid.
inline double closed_form_bid(int h, const ExposureState& s, const PlanParams& p, const StateValues& next)
{
    (void)h;
    const double marginal = p.win_value(s) - p.lose_value(s) + next[next_state(s, true)] - next[next_state(s, false)];
    return std::clamp(marginal, 0.0, p.max_bid);
}

/// Policy that bids closed_form_bid everywhere; its value is the optimum over
/// continuous bids in [0, max_bid].
inline PolicyTable closed_form_policy(const PlanParams& p)
{
    const int H = p.horizon();
    PolicyTable table;
    table.rounds.resize(static_cast<std::size_t>(H));
    StateValues next(H);
    for (int h = H; h >= 1; --h) {
        StateValues cur(H);
        for (const auto& s : reachable_states(h, H)) {
            const double a = closed_form_bid(h, s, p, next);
            const double q = action_value(p, h, s, a, next);
            cur[s] = q;
            table.rounds[static_cast<std::size_t>(h - 1)].push_back({s, a, q});
        }
        next = cur;
    }
    table.value = next[ExposureState::initial()];
    return table;
}

/// Expected value of following a fixed bid table under `p`.
inline double evaluate_policy(const PolicyTable& table, const PlanParams& p)
{
    const int H = p.horizon();
    StateValues next(H);
    for (int h = H; h >= 1; --h) {
        StateValues cur(H);
        for (const auto& s : reachable_states(h, H))
            cur[s] = action_value(p, h, s, table.bid(h, s), next);
        next = cur;
    }
    return next[ExposureState::initial()];
}

/// 0 followed by `points` log-spaced bids from low to high.
inline std::vector<double> log_bid_grid(double low, double high, int points)
{
    if (!(low > 0) || !(high > low) || points < 2)
        throw std::invalid_argument("log grid needs 0 < low < high and at least two points");
    std::vector<double> g{0.0};
    const double step = std::log(high / low) / (points - 1);
    for (int i = 0; i < points; ++i)
        g.push_back(low * std::exp(step * i));
    g.back() = high;
    return g;
}

inline std::vector<double> default_bid_grid(const Bounds& bounds, int points = 256)
{
    return log_bid_grid(bounds.b * 1e-2, bounds.B_A, points);
}

/// 0 followed by `points` evenly spaced bids on (0, high].
inline std::vector<double> uniform_bid_grid(double high, int points)
{
    std::vector<double> g{0.0};
    for (int i = 1; i <= points; ++i)
        g.push_back(high * i / points);
    return g;
}

enum class OracleMode { OutcomeEnumeration, DynamicProgramming };

inline double oracle_value(const Vector& x, const TrueModel& m, const AuctionModel& a, OracleMode mode,
                           const Bounds& bounds, int grid_points = 256)
{
    const auto p = plan_params(x, m, a, bounds.B_A);
    if (mode == OracleMode::OutcomeEnumeration)
        return best_outcome_plan(p).value;
    return dp_policy(p, default_bid_grid(bounds, grid_points)).value;
}

} // namespace adbid
