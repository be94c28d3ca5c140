#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "adbid/core.hpp"
#include "adbid/random.hpp"

namespace adbid {

// ---------------------------------------------------------------------------
// Episode records
// ---------------------------------------------------------------------------

struct RoundRecord
{
    int h = 1;
    ExposureState state;
    double bid = 0.0;
    double hob = 0.0;   // realized HOB, recorded on wins and losses alike
    bool won = false;
    bool forced = false;
    double payment = 0.0;
    long conversions = 0;
};

struct EpisodeLog
{
    std::uint64_t trial = 0;
    std::uint64_t customer = 0;   // 1-based customer index t
    Vector x;
    std::vector<RoundRecord> rounds;
    double realized_reward = 0.0;

    /// Recomputes sum(conversions - payment) in round order.
    double recompute_reward() const
    {
        double r = 0.0;
        for (const auto& rec : rounds)
            r += static_cast<double>(rec.conversions) - rec.payment;
        return r;
    }
};

/// Structural checks on a log: H records, chain of next_state transitions
/// starting at [Never, NeverBefore], payment = hob 1{won}, and won <=> bid >= hob.
inline void check_episode(const EpisodeLog& log, int H)
{
    if (static_cast<int>(log.rounds.size()) != H)
        throw std::invalid_argument("episode must have exactly H rounds");
    ExposureState s = ExposureState::initial();
    for (int i = 0; i < H; ++i) {
        const auto& r = log.rounds[static_cast<std::size_t>(i)];
        if (r.h != i + 1)
            throw std::invalid_argument("round numbers out of order");
        if (!(r.state == s))
            throw std::invalid_argument("state chain broken at round " + std::to_string(r.h));
        if (r.payment != (r.won ? r.hob : 0.0))
            throw std::invalid_argument("payment inconsistent with outcome at round " + std::to_string(r.h));
        if (!r.forced && r.won != (r.bid >= r.hob))
            throw std::invalid_argument("outcome inconsistent with bid at round " + std::to_string(r.h));
        if (r.conversions < 0)
            throw std::invalid_argument("negative conversions");
        s = next_state(s, r.won);
    }
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

inline double sample_hob(int h, const Vector& x, const AuctionModel& a, Engine& eng)
{
    const auto hob = a.hob(h, x);
    return std::exp(hob.location + hob.scale * standard_normal(eng));
}

inline long sample_conversions(double rate, Engine& eng)
{
    if (rate < 0)
        throw std::invalid_argument("conversion rate must be nonnegative");
    return poisson(rate, eng);
}

/// scale * |N(0,1)| + offset per element.
struct Family
{
    double scale = 1.0;
    double offset = 0.1;

    double draw(Engine& eng) const { return scale * std::abs(standard_normal(eng)) + offset; }
};

/// Recipe for random problem instances and contexts.
struct InstanceSpec
{
    Family theta{5.0, 0.1};
    Family delay{1.0, 0.1};
    Family beta{1.0, 0.1};
    Family sigma{1.0, 0.1};
    Family context{1.0, 0.1};
    double beta_norm_cap = std::numeric_limits<double>::infinity();
    double sigma_cap = std::numeric_limits<double>::infinity();
    /// When set, instances whose recipe can put <theta_l, x> below b are
    /// rejected and contexts violating the floor or B_x are resampled.
    bool strict_bounds = false;

    void validate() const
    {
        for (const Family* f : {&theta, &delay, &beta, &sigma, &context})
            if (!(f->scale >= 0 && f->offset > 0))
                throw std::invalid_argument("instance families need scale >= 0 and offset > 0");
    }
};

namespace detail {

inline Vector clamp_norm(Vector v, double cap)
{
    const double n = v.norm();
    if (n > cap)
        v *= cap / n;
    return v;
}

} // namespace detail

struct Instance
{
    TrueModel model;
    AuctionModel auction;
};

inline Instance generate_instance(const InstanceSpec& spec, const Bounds& bounds, Engine& eng)
{
    spec.validate();
    bounds.validate();
    if (spec.strict_bounds) {
        // every component of theta and x is at least its offset
        const double floor = bounds.dim * spec.theta.offset * spec.context.offset;
        if (floor < bounds.b)
            throw std::invalid_argument("strict bounds: recipe can produce <theta, x> below b");
    }
    Instance inst;
    const int H = bounds.H;
    const int d = bounds.dim;
    inst.model.theta.resize(static_cast<std::size_t>(ThetaIndex::slot_count(H)));
    for (auto& th : inst.model.theta) {
        th.resize(d);
        for (int i = 0; i < d; ++i)
            th(i) = spec.theta.draw(eng);
        th = detail::clamp_norm(th, bounds.B_theta);
    }
    inst.model.delay.assign(static_cast<std::size_t>(DelayIndex::slot_count(H)), 1.0);
    for (int k = 1; k < H; ++k)
        inst.model.delay[static_cast<std::size_t>(k)] = std::min(spec.delay.draw(eng), bounds.B_d);
    inst.auction.beta.resize(static_cast<std::size_t>(H));
    inst.auction.sigma.resize(static_cast<std::size_t>(H));
    for (int h = 0; h < H; ++h) {
        Vector b(d);
        for (int i = 0; i < d; ++i)
            b(i) = spec.beta.draw(eng);
        inst.auction.beta[static_cast<std::size_t>(h)] = detail::clamp_norm(b, spec.beta_norm_cap);
        inst.auction.sigma[static_cast<std::size_t>(h)] = std::min(spec.sigma.draw(eng), spec.sigma_cap);
    }
    return inst;
}

inline Vector sample_context(const InstanceSpec& spec, int dim, Engine& eng)
{
    Vector x(dim);
    for (int i = 0; i < dim; ++i)
        x(i) = spec.context.draw(eng);
    return x;
}

/// Context draw honoring strict bounds against a specific model.
inline Vector sample_context(const InstanceSpec& spec, const Bounds& bounds, const TrueModel& m, Engine& eng)
{
    for (int attempt = 0; attempt < 10000; ++attempt) {
        Vector x = sample_context(spec, bounds.dim, eng);
        if (!spec.strict_bounds)
            return x;
        bool ok = x.norm() <= bounds.B_x;
        for (const auto& th : m.theta)
            ok = ok && th.dot(x) >= bounds.b;
        if (ok)
            return x;
    }
    throw std::runtime_error("strict bounds: could not draw a context satisfying the floor");
}

// ---------------------------------------------------------------------------
// Episodes
// ---------------------------------------------------------------------------

enum class BidMode { Auction, ForcedOutcome };

/// In auction mode `bid` is submitted (capped at B_A). In forced-outcome mode
/// `force_win` decides the outcome directly; a forced win pays the realized HOB.
struct RoundAction
{
    double bid = 0.0;
    bool force_win = false;
};

using EpisodePolicy = std::function<RoundAction(int h, const ExposureState&)>;

struct EpisodeKey
{
    std::uint64_t trial = 0;
    std::uint64_t customer = 1;
};

inline EpisodeLog run_episode(const EpisodePolicy& policy, const Vector& x, const TrueModel& m,
                              const AuctionModel& a, const RandomSource& rng, EpisodeKey key,
                              BidMode mode, double max_bid = std::numeric_limits<double>::infinity())
{
    const int H = a.horizon();
    EpisodeLog log;
    log.trial = key.trial;
    log.customer = key.customer;
    log.x = x;
    log.rounds.reserve(static_cast<std::size_t>(H));
    ExposureState s = ExposureState::initial();
    for (int h = 1; h <= H; ++h) {
        auto hob_eng = rng.stream(key.trial, key.customer, static_cast<std::uint64_t>(h), Purpose::Hob);
        auto conv_eng = rng.stream(key.trial, key.customer, static_cast<std::uint64_t>(h), Purpose::Conversion);
        const RoundAction act = policy(h, s);
        RoundRecord rec;
        rec.h = h;
        rec.state = s;
        rec.hob = sample_hob(h, x, a, hob_eng);
        if (mode == BidMode::Auction) {
            rec.bid = std::clamp(act.bid, 0.0, max_bid);
            rec.won = rec.bid > 0 && rec.bid >= rec.hob;
        } else {
            rec.forced = true;
            rec.won = act.force_win;
            rec.bid = rec.won ? rec.hob : 0.0;
        }
        rec.payment = rec.won ? rec.hob : 0.0;
        rec.conversions = sample_conversions(conversion_mean(s, rec.won, x, m), conv_eng);
        log.realized_reward += static_cast<double>(rec.conversions) - rec.payment;
        log.rounds.push_back(rec);
        s = next_state(s, rec.won);
    }
    return log;
}

// ---------------------------------------------------------------------------
// CSV episode logs
// ---------------------------------------------------------------------------

namespace detail {

inline std::string format_double(double v)
{
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, std::size_t line)
{
    double v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw std::runtime_error("line " + std::to_string(line) + ": bad number '" + std::string(s) + "'");
    return v;
}

template <class Int>
Int parse_int(std::string_view s, std::size_t line)
{
    Int v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw std::runtime_error("line " + std::to_string(line) + ": bad integer '" + std::string(s) + "'");
    return v;
}

inline std::vector<std::string_view> split_commas(std::string_view line)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

} // namespace detail

inline std::string format_since_last(int s1)
{
    return s1 == ExposureState::kNever ? "NEVER" : std::to_string(s1);
}

inline std::string format_gap(int s2)
{
    if (s2 == ExposureState::kNeverBefore)
        return "NEVERBEFORE";
    if (s2 == ExposureState::kOnlyOne)
        return "ONLYONE";
    return std::to_string(s2);
}

inline void write_episode_header(std::ostream& os, int dim)
{
    os << "trial,t,h,s1,s2,bid,hob,won,payment,conversions";
    for (int i = 1; i <= dim; ++i)
        os << ",x" << i;
    os << '\n';
}

/// One row per round. Context columns x1..xd follow the outcome columns so a
/// log can be replayed through the estimators without re-simulation.
inline void write_episode_rows(std::ostream& os, const EpisodeLog& log)
{
    for (const auto& r : log.rounds) {
        os << log.trial << ',' << log.customer << ',' << r.h << ',' << format_since_last(r.state.since_last) << ','
           << format_gap(r.state.gap) << ',' << detail::format_double(r.bid) << ','
           << detail::format_double(r.hob) << ',' << (r.won ? 1 : 0) << ','
           << detail::format_double(r.payment) << ',' << r.conversions;
        for (Eigen::Index i = 0; i < log.x.size(); ++i)
            os << ',' << detail::format_double(log.x(i));
        os << '\n';
    }
}

/// Parses a log written by write_episode_header/write_episode_rows. Rows are
/// grouped into episodes by consecutive (trial, t); every episode must hold
/// exactly H rounds and pass check_episode. Errors carry the line number.
inline std::vector<EpisodeLog> read_episode_logs(std::istream& is, int H)
{
    std::vector<EpisodeLog> out;
    std::string line;
    std::size_t lineno = 0;
    int dim = -1;
    if (!std::getline(is, line))
        return out;
    ++lineno;
    {
        const auto cols = detail::split_commas(line);
        static constexpr std::string_view expected[] = {"trial", "t",  "h",   "s1",      "s2",
                                                        "bid",   "hob", "won", "payment", "conversions"};
        if (cols.size() < 11)
            throw std::runtime_error("line 1: header needs the outcome columns and at least one context column");
        for (std::size_t i = 0; i < 10; ++i)
            if (cols[i] != expected[i])
                throw std::runtime_error("line 1: unexpected column '" + std::string(cols[i]) + "'");
        dim = static_cast<int>(cols.size() - 10);
        for (int i = 0; i < dim; ++i)
            if (cols[static_cast<std::size_t>(10 + i)] != "x" + std::to_string(i + 1))
                throw std::runtime_error("line 1: unexpected context column");
    }
    std::size_t episode_start_line = 0;
    auto finish = [&](EpisodeLog& log) {
        if (static_cast<int>(log.rounds.size()) != H)
            throw std::runtime_error("line " + std::to_string(episode_start_line) + ": episode has " +
                                     std::to_string(log.rounds.size()) + " rounds, expected " + std::to_string(H));
        try {
            check_episode(log, H);
        } catch (const std::exception& e) {
            throw std::runtime_error("line " + std::to_string(episode_start_line) + ": " + e.what());
        }
        log.realized_reward = log.recompute_reward();
    };
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty())
            continue;
        const auto cols = detail::split_commas(line);
        if (static_cast<int>(cols.size()) != 10 + dim)
            throw std::runtime_error("line " + std::to_string(lineno) + ": expected " + std::to_string(10 + dim) +
                                     " columns, found " + std::to_string(cols.size()));
        const auto trial = detail::parse_int<std::uint64_t>(cols[0], lineno);
        const auto t = detail::parse_int<std::uint64_t>(cols[1], lineno);
        RoundRecord r;
        r.h = detail::parse_int<int>(cols[2], lineno);
        if (cols[3] == "NEVER")
            r.state.since_last = ExposureState::kNever;
        else
            r.state.since_last = detail::parse_int<int>(cols[3], lineno);
        if (cols[4] == "NEVERBEFORE")
            r.state.gap = ExposureState::kNeverBefore;
        else if (cols[4] == "ONLYONE")
            r.state.gap = ExposureState::kOnlyOne;
        else
            r.state.gap = detail::parse_int<int>(cols[4], lineno);
        if (r.state.since_last != ExposureState::kNever && r.state.since_last < 1)
            throw std::runtime_error("line " + std::to_string(lineno) + ": invalid s1");
        if (r.state.gap != ExposureState::kNeverBefore && r.state.gap != ExposureState::kOnlyOne && r.state.gap < 1)
            throw std::runtime_error("line " + std::to_string(lineno) + ": invalid s2");
        r.bid = detail::parse_double(cols[5], lineno);
        r.hob = detail::parse_double(cols[6], lineno);
        if (cols[7] != "0" && cols[7] != "1")
            throw std::runtime_error("line " + std::to_string(lineno) + ": won must be 0 or 1");
        r.won = cols[7] == "1";
        r.payment = detail::parse_double(cols[8], lineno);
        r.conversions = detail::parse_int<long>(cols[9], lineno);
        if (!(r.hob > 0) || !std::isfinite(r.hob))
            throw std::runtime_error("line " + std::to_string(lineno) + ": hob must be positive and finite");
        Vector x(dim);
        for (int i = 0; i < dim; ++i)
            x(i) = detail::parse_double(cols[static_cast<std::size_t>(10 + i)], lineno);

        const bool new_episode = out.empty() || out.back().trial != trial || out.back().customer != t ||
                                 static_cast<int>(out.back().rounds.size()) >= H;
        if (new_episode) {
            if (!out.empty())
                finish(out.back());
            EpisodeLog log;
            log.trial = trial;
            log.customer = t;
            log.x = x;
            out.push_back(std::move(log));
            episode_start_line = lineno;
        } else if (!(out.back().x == x)) {
            throw std::runtime_error("line " + std::to_string(lineno) + ": context changes within an episode");
        }
        out.back().rounds.push_back(r);
    }
    if (!out.empty())
        finish(out.back());
    return out;
}

} // namespace adbid
