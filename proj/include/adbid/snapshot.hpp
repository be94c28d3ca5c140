#pragma once

// JSON snapshots of problem instances and agent estimator state. Doubles are
// written in shortest round-trip form, so dump -> parse -> dump is stable and
// two equal states produce byte-identical files.

#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "adbid/agent.hpp"
#include "adbid/environment.hpp"

namespace adbid {

using Json = nlohmann::ordered_json;

namespace detail {

inline Json to_json(const Vector& v)
{
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i)
        a.push_back(v(i));
    return a;
}

inline Json to_json(const Matrix& m)
{
    Json a = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            row.push_back(m(i, j));
        a.push_back(std::move(row));
    }
    return a;
}

inline Vector vector_from(const Json& a)
{
    Vector v(static_cast<Eigen::Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i)
        v(static_cast<Eigen::Index>(i)) = a.at(i).get<double>();
    return v;
}

inline Matrix matrix_from(const Json& a)
{
    const auto rows = a.size();
    const auto cols = rows ? a.at(0).size() : 0;
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < rows; ++i) {
        if (a.at(i).size() != cols)
            throw std::runtime_error("snapshot: ragged matrix");
        for (std::size_t j = 0; j < cols; ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = a.at(i).at(j).get<double>();
    }
    return m;
}

} // namespace detail

inline Json instance_to_json(const Instance& inst)
{
    Json j;
    j["kind"] = "instance";
    Json theta = Json::array();
    for (std::size_t i = 0; i < inst.model.theta.size(); ++i)
        theta.push_back({{"index", ThetaIndex::from_slot(static_cast<int>(i)).name()},
                         {"value", detail::to_json(inst.model.theta[i])}});
    j["theta"] = std::move(theta);
    j["delay"] = inst.model.delay;
    Json rounds = Json::array();
    for (std::size_t h = 0; h < inst.auction.beta.size(); ++h)
        rounds.push_back({{"h", h + 1}, {"beta", detail::to_json(inst.auction.beta[h])}, {"sigma", inst.auction.sigma[h]}});
    j["auction"] = std::move(rounds);
    return j;
}

inline Instance instance_from_json(const Json& j)
{
    if (j.value("kind", "") != "instance")
        throw std::runtime_error("snapshot: not an instance snapshot");
    Instance inst;
    for (const auto& t : j.at("theta"))
        inst.model.theta.push_back(detail::vector_from(t.at("value")));
    inst.model.delay = j.at("delay").get<std::vector<double>>();
    for (const auto& r : j.at("auction")) {
        inst.auction.beta.push_back(detail::vector_from(r.at("beta")));
        inst.auction.sigma.push_back(r.at("sigma").get<double>());
    }
    const int H = inst.auction.horizon();
    if (H < 1 || static_cast<int>(inst.model.theta.size()) != ThetaIndex::slot_count(H) ||
        static_cast<int>(inst.model.delay.size()) != DelayIndex::slot_count(H))
        throw std::runtime_error("snapshot: instance sizes inconsistent with the horizon");
    return inst;
}

inline Json agent_to_json(const Agent& agent)
{
    Json j;
    j["kind"] = "agent";
    j["next_customer"] = agent.next_customer();
    Json theta = Json::array();
    for (const auto& e : agent.theta_bank())
        theta.push_back({{"index", e.index().name()},
                         {"updates", e.update_count()},
                         {"truncated", e.truncated_count()},
                         {"theta_hat", detail::to_json(e.theta_hat())},
                         {"V", detail::to_json(e.V())}});
    j["theta"] = std::move(theta);
    Json delay = Json::array();
    for (std::size_t k = 1; k < agent.delay_bank().size(); ++k) {
        const auto& e = agent.delay_bank()[k];
        delay.push_back({{"lag", e.lag()},
                         {"count", e.count()},
                         {"numerator", e.numerator()},
                         {"denominator", e.denominator()}});
    }
    j["delay"] = std::move(delay);
    Json auction = Json::array();
    for (std::size_t h = 0; h < agent.auction_estimator().rounds.size(); ++h) {
        const auto& r = agent.auction_estimator().rounds[h];
        auction.push_back({{"h", h + 1},
                           {"count", r.count()},
                           {"residual_sq_sum", r.residual_sq_sum()},
                           {"gram", detail::to_json(r.gram())},
                           {"moment", detail::to_json(r.moment())}});
    }
    j["auction"] = std::move(auction);
    return j;
}

/// Restores estimator state into an agent built from the matching config.
inline void agent_from_json(const Json& j, Agent& agent)
{
    if (j.value("kind", "") != "agent")
        throw std::runtime_error("snapshot: not an agent snapshot");
    auto& tb = agent.mutable_theta_bank();
    auto& db = agent.mutable_delay_bank();
    auto& ab = agent.mutable_auction_estimator();
    const auto& theta = j.at("theta");
    const auto& delay = j.at("delay");
    const auto& auction = j.at("auction");
    if (theta.size() != tb.size() || delay.size() + 1 != db.size() || auction.size() != ab.rounds.size())
        throw std::runtime_error("snapshot: agent sizes do not match the configuration");
    for (std::size_t i = 0; i < tb.size(); ++i) {
        const auto& e = theta[i];
        tb[i].restore(detail::matrix_from(e.at("V")), detail::vector_from(e.at("theta_hat")),
                      e.at("updates").get<long>(), e.at("truncated").get<long>());
    }
    for (std::size_t k = 1; k < db.size(); ++k) {
        const auto& e = delay[k - 1];
        db[k].restore(e.at("numerator").get<double>(), e.at("denominator").get<double>(), e.at("count").get<long>());
    }
    for (std::size_t h = 0; h < ab.rounds.size(); ++h) {
        const auto& e = auction[h];
        ab.rounds[h].restore(detail::matrix_from(e.at("gram")), detail::vector_from(e.at("moment")),
                             e.at("residual_sq_sum").get<double>(), e.at("count").get<long>());
    }
    agent.set_next_customer(j.at("next_customer").get<long>());
}

inline std::string dump_snapshot(const Json& j) { return j.dump(2) + "\n"; }

inline void write_snapshot(const std::string& path, const Json& j)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw std::runtime_error("cannot open " + path + " for writing");
    os << dump_snapshot(j);
}

inline Json read_snapshot(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw std::runtime_error("cannot open " + path);
    return Json::parse(is);
}

} // namespace adbid
