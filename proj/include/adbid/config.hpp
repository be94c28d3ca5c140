#pragma once

// Experiment configuration and its key = value file format.
//
//   # comment
//   customers = 20000
//   policies = algorithm1, aggressive, random, passive
//
// Every ExperimentConfig field has one key (see config_keys()); unknown keys,
// repeated keys and malformed values are errors reported with line numbers.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "adbid/agent.hpp"
#include "adbid/core.hpp"
#include "adbid/environment.hpp"
#include "adbid/estimation.hpp"

namespace adbid {

enum class PolicyKind { Algorithm1, Aggressive, Random, Passive };

inline std::string policy_name(PolicyKind k)
{
    switch (k) {
    case PolicyKind::Algorithm1: return "algorithm1";
    case PolicyKind::Aggressive: return "aggressive";
    case PolicyKind::Random: return "random";
    case PolicyKind::Passive: return "passive";
    }
    return "?";
}

inline PolicyKind parse_policy(std::string_view s)
{
    for (auto k : {PolicyKind::Algorithm1, PolicyKind::Aggressive, PolicyKind::Random, PolicyKind::Passive})
        if (s == policy_name(k))
            return k;
    throw std::invalid_argument("unknown policy '" + std::string(s) + "'");
}

struct ExperimentConfig
{
    Bounds bounds{0.1, 3.0, 10.0, 5.0, 1000.0, 3, 2};
    long customers = 20000;
    int trials = 5;
    std::uint64_t seed = 1;
    int workers = 1;

    InstanceSpec instance;

    double delta = 0.01;
    std::optional<double> gamma;                 // unscaled; theory formula when absent
    std::optional<double> truncation = 100000;   // theory formula when absent
    double width_scale = 1.0;
    std::optional<long> n_underbar = 600;        // derived from the bounds when absent

    PlannerMode planner = PlannerMode::Outcome;
    BidMode exploration_mode = BidMode::ForcedOutcome;
    int bid_grid_points = 256;
    double sigma_floor = 1e-3;

    std::vector<PolicyKind> policies{PolicyKind::Algorithm1, PolicyKind::Aggressive, PolicyKind::Random,
                                     PolicyKind::Passive};
    std::vector<long> checkpoints;               // scaled reference grid when empty
    double half_width_multiplier = 0.5;
    int oracle_gap_samples = 200;

    long exploration_block() const
    {
        return n_underbar ? *n_underbar : exploration_block_size(bounds, static_cast<double>(customers));
    }

    /// {500, 5000, 10000, 15000, 20000} scaled by T / 20000.
    std::vector<long> effective_checkpoints() const
    {
        if (!checkpoints.empty())
            return checkpoints;
        std::vector<long> out;
        for (long c : {500L, 5000L, 10000L, 15000L, 20000L}) {
            const long v = std::max(1L, std::lround(static_cast<double>(c) * static_cast<double>(customers) / 20000.0));
            if (out.empty() || v > out.back())
                out.push_back(std::min(v, customers));
        }
        return out;
    }

    ConfidenceConfig confidence() const
    {
        return ConfidenceConfig::theory(bounds, static_cast<double>(customers), delta, width_scale, gamma, truncation);
    }

    AgentConfig agent_config() const
    {
        AgentConfig a;
        a.bounds = bounds;
        a.confidence = confidence();
        a.customers = customers;
        a.exploration_block = exploration_block();
        a.planner = planner;
        a.exploration_mode = exploration_mode;
        a.bid_grid_points = bid_grid_points;
        a.sigma_floor = sigma_floor;
        return a;
    }

    void validate() const
    {
        bounds.validate();
        instance.validate();
        if (customers < 1 || trials < 1 || workers < 1)
            throw std::invalid_argument("customers, trials and workers must be positive");
        if (policies.empty())
            throw std::invalid_argument("at least one policy is required");
        const auto cps = effective_checkpoints();
        for (std::size_t i = 0; i < cps.size(); ++i) {
            if (cps[i] < 1 || cps[i] > customers)
                throw std::invalid_argument("checkpoints must lie in [1, customers]");
            if (i > 0 && cps[i] <= cps[i - 1])
                throw std::invalid_argument("checkpoints must be strictly increasing");
        }
        if (!(half_width_multiplier >= 0))
            throw std::invalid_argument("half_width_multiplier must be nonnegative");
        if (oracle_gap_samples < 0)
            throw std::invalid_argument("oracle_gap_samples must be nonnegative");
        if (bounds.H > kMaxEnumerationHorizon)
            throw std::invalid_argument("horizon exceeds the outcome enumeration cap");
        agent_config().validate();
    }
};

/// Documented keys with their defaults, in file order.
inline const std::vector<std::pair<std::string, std::string>>& config_keys()
{
    static const std::vector<std::pair<std::string, std::string>> keys = {
        {"dim", "2"},
        {"horizon", "3"},
        {"customers", "20000"},
        {"trials", "5"},
        {"seed", "1"},
        {"workers", "1"},
        {"b", "0.1"},
        {"B_x", "3"},
        {"B_theta", "10"},
        {"B_d", "5"},
        {"B_A", "1000"},
        {"delta", "0.01"},
        {"gamma", "theory"},
        {"truncation", "100000"},
        {"width_scale", "1"},
        {"n_underbar", "600"},
        {"planner", "outcome"},
        {"exploration_mode", "forced"},
        {"bid_grid_points", "256"},
        {"sigma_floor", "0.001"},
        {"policies", "algorithm1, aggressive, random, passive"},
        {"checkpoints", "auto"},
        {"half_width_multiplier", "0.5"},
        {"oracle_gap_samples", "200"},
        {"theta_scale", "5"},
        {"theta_offset", "0.1"},
        {"delay_scale", "1"},
        {"delay_offset", "0.1"},
        {"beta_scale", "1"},
        {"beta_offset", "0.1"},
        {"sigma_scale", "1"},
        {"sigma_offset", "0.1"},
        {"context_scale", "1"},
        {"context_offset", "0.1"},
        {"beta_norm_cap", "inf"},
        {"sigma_cap", "inf"},
        {"strict_bounds", "false"},
    };
    return keys;
}

namespace detail {

inline std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_list(std::string_view s)
{
    std::vector<std::string_view> out;
    for (auto part : split_commas(s)) {
        part = trim(part);
        if (!part.empty())
            out.push_back(part);
    }
    return out;
}

inline double parse_real(std::string_view s)
{
    if (s == "inf")
        return std::numeric_limits<double>::infinity();
    double v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw std::invalid_argument("expected a number, found '" + std::string(s) + "'");
    return v;
}

template <class Int>
Int parse_integer(std::string_view s)
{
    Int v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw std::invalid_argument("expected an integer, found '" + std::string(s) + "'");
    return v;
}

inline bool parse_bool(std::string_view s)
{
    if (s == "true" || s == "1")
        return true;
    if (s == "false" || s == "0")
        return false;
    throw std::invalid_argument("expected true or false, found '" + std::string(s) + "'");
}

inline std::vector<long> parse_long_list(std::string_view s)
{
    std::vector<long> out;
    for (auto p : split_list(s))
        out.push_back(parse_integer<long>(p));
    return out;
}

} // namespace detail

inline PlannerMode parse_planner(std::string_view s)
{
    if (s == "outcome")
        return PlannerMode::Outcome;
    if (s == "dp")
        return PlannerMode::DynamicProgramming;
    throw std::invalid_argument("planner must be outcome or dp, found '" + std::string(s) + "'");
}

/// Applies one key = value assignment.
inline void apply_config_key(ExperimentConfig& c, std::string_view key, std::string_view v)
{
    using namespace detail;
    if (key == "dim") c.bounds.dim = parse_integer<int>(v);
    else if (key == "horizon") c.bounds.H = parse_integer<int>(v);
    else if (key == "customers") c.customers = parse_integer<long>(v);
    else if (key == "trials") c.trials = parse_integer<int>(v);
    else if (key == "seed") c.seed = parse_integer<std::uint64_t>(v);
    else if (key == "workers") c.workers = parse_integer<int>(v);
    else if (key == "b") c.bounds.b = parse_real(v);
    else if (key == "B_x") c.bounds.B_x = parse_real(v);
    else if (key == "B_theta") c.bounds.B_theta = parse_real(v);
    else if (key == "B_d") c.bounds.B_d = parse_real(v);
    else if (key == "B_A") c.bounds.B_A = parse_real(v);
    else if (key == "delta") c.delta = parse_real(v);
    else if (key == "gamma") c.gamma = v == "theory" ? std::nullopt : std::optional<double>(parse_real(v));
    else if (key == "truncation") c.truncation = v == "theory" ? std::nullopt : std::optional<double>(parse_real(v));
    else if (key == "width_scale") c.width_scale = parse_real(v);
    else if (key == "n_underbar") c.n_underbar = v == "auto" ? std::nullopt : std::optional<long>(parse_integer<long>(v));
    else if (key == "planner") c.planner = parse_planner(v);
    else if (key == "exploration_mode") {
        if (v == "forced") c.exploration_mode = BidMode::ForcedOutcome;
        else if (v == "auction") c.exploration_mode = BidMode::Auction;
        else throw std::invalid_argument("exploration_mode must be forced or auction");
    }
    else if (key == "bid_grid_points") c.bid_grid_points = parse_integer<int>(v);
    else if (key == "sigma_floor") c.sigma_floor = parse_real(v);
    else if (key == "policies") {
        c.policies.clear();
        for (auto p : split_list(v))
            c.policies.push_back(parse_policy(p));
    }
    else if (key == "checkpoints") c.checkpoints = v == "auto" ? std::vector<long>{} : parse_long_list(v);
    else if (key == "half_width_multiplier") c.half_width_multiplier = parse_real(v);
    else if (key == "oracle_gap_samples") c.oracle_gap_samples = parse_integer<int>(v);
    else if (key == "theta_scale") c.instance.theta.scale = parse_real(v);
    else if (key == "theta_offset") c.instance.theta.offset = parse_real(v);
    else if (key == "delay_scale") c.instance.delay.scale = parse_real(v);
    else if (key == "delay_offset") c.instance.delay.offset = parse_real(v);
    else if (key == "beta_scale") c.instance.beta.scale = parse_real(v);
    else if (key == "beta_offset") c.instance.beta.offset = parse_real(v);
    else if (key == "sigma_scale") c.instance.sigma.scale = parse_real(v);
    else if (key == "sigma_offset") c.instance.sigma.offset = parse_real(v);
    else if (key == "context_scale") c.instance.context.scale = parse_real(v);
    else if (key == "context_offset") c.instance.context.offset = parse_real(v);
    else if (key == "beta_norm_cap") c.instance.beta_norm_cap = parse_real(v);
    else if (key == "sigma_cap") c.instance.sigma_cap = parse_real(v);
    else if (key == "strict_bounds") c.instance.strict_bounds = parse_bool(v);
    else throw std::invalid_argument("unknown key '" + std::string(key) + "'");
}

inline ExperimentConfig parse_config(std::istream& is)
{
    ExperimentConfig c;
    std::map<std::string, std::size_t, std::less<>> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::string_view s = line;
        if (auto hash = s.find('#'); hash != std::string_view::npos)
            s = s.substr(0, hash);
        s = detail::trim(s);
        if (s.empty())
            continue;
        const auto eq = s.find('=');
        if (eq == std::string_view::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
        const auto key = detail::trim(s.substr(0, eq));
        const auto value = detail::trim(s.substr(eq + 1));
        if (auto it = seen.find(key); it != seen.end())
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": key '" + std::string(key) +
                                        "' already set on line " + std::to_string(it->second));
        seen.emplace(std::string(key), lineno);
        try {
            apply_config_key(c, key, value);
        } catch (const std::exception& e) {
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    c.validate();
    return c;
}

inline ExperimentConfig parse_config_text(const std::string& text)
{
    std::istringstream is(text);
    return parse_config(is);
}

inline ExperimentConfig load_config(const std::string& path)
{
    std::ifstream is(path);
    if (!is)
        throw std::runtime_error("cannot open config " + path);
    return parse_config(is);
}

} // namespace adbid
