#pragma once

// Pure model of the bidding CMDP: exposure states, conversion means, the
// lognormal highest-other-bid (HOB) distribution and the per-round reward.
// Nothing in here draws random numbers or mutates shared state.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace adbid {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Assumption-level constants shared by the estimators and planners.
struct Bounds
{
    double b = 0.1;          // floor on every conversion mean <theta_l, x>
    double B_x = 1.0;        // context norm bound
    double B_theta = 10.0;   // theta norm bound
    double B_d = 5.0;        // delay factor cap
    double B_A = 1000.0;     // maximum bid
    int H = 3;               // rounds per customer
    int dim = 2;             // context dimension

    void validate() const
    {
        if (!(b > 0 && B_x > 0 && B_theta > 0 && B_d > 0 && B_A > 0))
            throw std::invalid_argument("bounds must be strictly positive");
        if (H < 1 || dim < 1)
            throw std::invalid_argument("H and dim must be at least 1");
        if (b > B_x * B_theta)
            throw std::invalid_argument("b exceeds B_x * B_theta; no model satisfies the floor");
    }
};

// ---------------------------------------------------------------------------
// Parameter indices
// ---------------------------------------------------------------------------

/// Index of a conversion-effect vector theta_l.
///
/// NaturalDemand is the no-ad baseline, FirstExposure the effect of a first
/// impression, Lag(k) the effect of an impression shown k rounds after the
/// previous one. Dense slot layout: NaturalDemand=0, FirstExposure=1, Lag k=1+k,
/// so a horizon-H table has H+1 slots.
class ThetaIndex
{
public:
    enum class Kind : std::uint8_t { NaturalDemand, FirstExposure, Lag };

    static constexpr ThetaIndex natural_demand() { return ThetaIndex(Kind::NaturalDemand, 0); }
    static constexpr ThetaIndex first_exposure() { return ThetaIndex(Kind::FirstExposure, 0); }
    static ThetaIndex lag(int k)
    {
        if (k < 1)
            throw std::invalid_argument("theta lag must be >= 1");
        return ThetaIndex(Kind::Lag, k);
    }
    static ThetaIndex from_slot(int slot)
    {
        if (slot == 0)
            return natural_demand();
        if (slot == 1)
            return first_exposure();
        return lag(slot - 1);
    }

    constexpr Kind kind() const { return kind_; }
    constexpr int lag_value() const { return lag_; }
    constexpr int slot() const
    {
        switch (kind_) {
        case Kind::NaturalDemand: return 0;
        case Kind::FirstExposure: return 1;
        default: return 1 + lag_;
        }
    }
    static constexpr int slot_count(int H) { return H + 1; }

    std::string name() const
    {
        switch (kind_) {
        case Kind::NaturalDemand: return "natural_demand";
        case Kind::FirstExposure: return "first_exposure";
        default: return "lag" + std::to_string(lag_);
        }
    }

    friend constexpr bool operator==(ThetaIndex, ThetaIndex) = default;

private:
    constexpr ThetaIndex(Kind k, int lag) : kind_(k), lag_(lag) {}
    Kind kind_;
    int lag_;
};

/// Index of a delay factor d_l. Never (no ad shown yet) has factor 1 and is
/// not estimated. Dense slot layout: Never=0, Lag k=k; H slots in total.
class DelayIndex
{
public:
    static constexpr DelayIndex never() { return DelayIndex(0); }
    static DelayIndex lag(int k)
    {
        if (k < 1)
            throw std::invalid_argument("delay lag must be >= 1");
        return DelayIndex(k);
    }
    constexpr bool is_never() const { return lag_ == 0; }
    constexpr int lag_value() const { return lag_; }
    constexpr int slot() const { return lag_; }
    static constexpr int slot_count(int H) { return H; }

    friend constexpr bool operator==(DelayIndex, DelayIndex) = default;

private:
    constexpr explicit DelayIndex(int lag) : lag_(lag) {}
    int lag_;
};

// ---------------------------------------------------------------------------
// Exposure state
// ---------------------------------------------------------------------------

/// The pair [S1, S2]: rounds since the last impression and the gap between
/// the last two impressions.
///
/// since_last is kNever or a lag >= 1. gap is kNeverBefore (no impression at
/// all), kOnlyOne (exactly one impression so far) or a gap >= 1.
struct ExposureState
{
    static constexpr int kNever = 0;
    static constexpr int kNeverBefore = -1;
    static constexpr int kOnlyOne = 0;

    int since_last = kNever;
    int gap = kNeverBefore;

    static constexpr ExposureState initial() { return {}; }

    constexpr bool never_exposed() const { return since_last == kNever; }

    /// Structural validity for a horizon-H episode: the sentinel pairing and
    /// l + k <= H - 1 for two recorded impressions.
    constexpr bool valid(int H) const
    {
        if (since_last == kNever)
            return gap == kNeverBefore;
        if (since_last < 1 || since_last > H - 1)
            return false;
        if (gap == kOnlyOne)
            return true;
        if (gap < 1 || gap > H - 2)
            return false;
        return since_last + gap <= H - 1;
    }

    friend constexpr bool operator==(const ExposureState&, const ExposureState&) = default;
};

inline ExposureState next_state(const ExposureState& s, bool won)
{
    if (won) {
        const int promoted = s.never_exposed() ? ExposureState::kOnlyOne : s.since_last;
        return {1, promoted};
    }
    if (s.never_exposed())
        return s;
    return {s.since_last + 1, s.gap};
}

/// theta index used when the current round is won.
inline ThetaIndex win_index(const ExposureState& s)
{
    return s.never_exposed() ? ThetaIndex::first_exposure() : ThetaIndex::lag(s.since_last);
}

/// theta index whose effect carries over when the current round is lost.
inline ThetaIndex lose_index(const ExposureState& s)
{
    if (s.gap == ExposureState::kNeverBefore)
        return ThetaIndex::natural_demand();
    if (s.gap == ExposureState::kOnlyOne)
        return ThetaIndex::first_exposure();
    return ThetaIndex::lag(s.gap);
}

/// delay factor applied on a lost round.
inline DelayIndex delay_index(const ExposureState& s)
{
    return s.never_exposed() ? DelayIndex::never() : DelayIndex::lag(s.since_last);
}

/// Every state reachable at round h (1-based) of a horizon-H episode, in a
/// fixed order: [Never, NeverBefore] first, then by since_last, then by gap.
inline std::vector<ExposureState> reachable_states(int h, int H)
{
    std::vector<ExposureState> out;
    if (h < 1 || h > H)
        return out;
    out.push_back(ExposureState::initial());
    // last impression at round h - l, l in [1, h-1]
    for (int l = 1; l <= h - 1; ++l) {
        out.push_back({l, ExposureState::kOnlyOne});
        for (int k = 1; l + k <= h - 1; ++k)
            out.push_back({l, k});
    }
    (void)H;
    return out;
}

// ---------------------------------------------------------------------------
// Parameter tables
// ---------------------------------------------------------------------------

/// Ground-truth conversion parameters: theta vectors per ThetaIndex slot and
/// delay factors per DelayIndex slot (slot 0 is Never and pinned to 1).
struct TrueModel
{
    std::vector<Vector> theta;
    std::vector<double> delay;

    int horizon() const { return static_cast<int>(delay.size()); }

    const Vector& theta_at(ThetaIndex i) const { return theta.at(static_cast<std::size_t>(i.slot())); }
    double delay_at(DelayIndex i) const { return delay.at(static_cast<std::size_t>(i.slot())); }

    void validate(const Bounds& bounds) const
    {
        if (static_cast<int>(theta.size()) != ThetaIndex::slot_count(bounds.H) ||
            static_cast<int>(delay.size()) != DelayIndex::slot_count(bounds.H))
            throw std::invalid_argument("true model table sizes do not match the horizon");
        for (const auto& t : theta) {
            if (t.size() != bounds.dim)
                throw std::invalid_argument("theta dimension mismatch");
            if (t.norm() > bounds.B_theta * (1 + 1e-12))
                throw std::invalid_argument("theta exceeds B_theta");
        }
        if (delay[0] != 1.0)
            throw std::invalid_argument("delay at Never must be exactly 1");
        for (std::size_t k = 1; k < delay.size(); ++k)
            if (delay[k] < 0 || delay[k] > bounds.B_d)
                throw std::invalid_argument("delay factor outside [0, B_d]");
    }
};

// ---------------------------------------------------------------------------
// Normal CDF and the lognormal HOB distribution
// ---------------------------------------------------------------------------

/// Standard normal CDF, Phi(z) = erfc(-z / sqrt 2) / 2. The libm erfc is
/// accurate to a few ulp, well inside 1e-12 absolute, and deterministic for a
/// given build, so repeated runs are bit-identical.
inline double normal_cdf(double z)
{
    if (z == -std::numeric_limits<double>::infinity())
        return 0.0;
    if (z == std::numeric_limits<double>::infinity())
        return 1.0;
    return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

/// log(m) ~ N(location, scale^2).
struct LognormalHob
{
    double location = 0.0;
    double scale = 1.0;

    double cdf(double bid) const
    {
        if (!(bid > 0))
            return 0.0;
        if (std::isinf(bid))
            return 1.0;
        return normal_cdf((std::log(bid) - location) / scale);
    }

    double mean() const { return std::exp(location + 0.5 * scale * scale); }

    /// E[m 1{m <= bid}] = mean * Phi((log bid - location - scale^2) / scale).
    double partial_expectation(double bid) const
    {
        if (!(bid > 0))
            return 0.0;
        if (std::isinf(bid))
            return mean();
        return mean() * normal_cdf((std::log(bid) - location - scale * scale) / scale);
    }

    /// integral_0^bid F(v) dv = bid F(bid) - E[m 1{m <= bid}].
    double cdf_integral(double bid) const
    {
        if (!(bid > 0))
            return 0.0;
        return bid * cdf(bid) - partial_expectation(bid);
    }

    /// Second-price payment given a win, E[m | m <= bid].
    double conditional_payment(double bid) const
    {
        const double F = cdf(bid);
        if (!(F > 0))
            throw std::domain_error("payment undefined: win probability is zero");
        if (std::isinf(bid))
            return mean();
        const double p = partial_expectation(bid) / F;
        return std::min(p, bid);
    }
};

/// Per-round lognormal HOB parameters (beta_h, sigma_h), h = 1..H stored at h-1.
struct AuctionModel
{
    std::vector<Vector> beta;
    std::vector<double> sigma;

    int horizon() const { return static_cast<int>(sigma.size()); }

    LognormalHob hob(int h, const Vector& x) const
    {
        const auto i = static_cast<std::size_t>(h - 1);
        return {x.dot(beta.at(i)), sigma.at(i)};
    }
};

// ---------------------------------------------------------------------------
// Model operations
// ---------------------------------------------------------------------------

inline double mean_effect(ThetaIndex idx, const Vector& x, const TrueModel& m)
{
    return m.theta_at(idx).dot(x);
}

/// Poisson rate of the conversions observed in a round.
inline double conversion_mean(const ExposureState& s, bool won, const Vector& x, const TrueModel& m)
{
    const double rate = won ? mean_effect(win_index(s), x, m)
                            : m.delay_at(delay_index(s)) * mean_effect(lose_index(s), x, m);
    if (rate < 0)
        throw std::domain_error("negative conversion rate");
    return rate;
}

inline double win_probability(int h, double bid, const Vector& x, const AuctionModel& a)
{
    if (bid < 0)
        throw std::invalid_argument("bid must be nonnegative");
    return a.hob(h, x).cdf(bid);
}

/// bid - (1/F(bid)) * integral_0^bid F(v) dv, evaluated in closed form.
inline double expected_payment_given_win(int h, double bid, const Vector& x, const AuctionModel& a)
{
    return a.hob(h, x).conditional_payment(bid);
}

/// Expected reward of a round from scalar ingredients. win_value is the
/// conversion mean if the round is won, lose_value the (delayed) mean if lost.
/// bid = 0 is the opt-out action and returns lose_value exactly.
inline double round_reward(double win_value, double lose_value, const LognormalHob& hob, double bid)
{
    if (bid <= 0)
        return lose_value;
    const double F = hob.cdf(bid);
    if (F <= 0)
        return lose_value;
    if (F >= 1 && std::isinf(bid))
        return win_value - hob.mean();
    // (win - p) F = win F - E[m 1{m <= bid}]
    return lose_value * (1 - F) + win_value * F - hob.partial_expectation(bid);
}

inline double expected_round_reward(int h, const ExposureState& s, double bid, const Vector& x,
                                    const TrueModel& m, const AuctionModel& a)
{
    const double win_value = mean_effect(win_index(s), x, m);
    const double lose_value = m.delay_at(delay_index(s)) * mean_effect(lose_index(s), x, m);
    return round_reward(win_value, lose_value, a.hob(h, x), bid);
}

} // namespace adbid
