#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "adbid/core.hpp"
#include "adbid/planning.hpp"

namespace adbid::fixtures {

/// Half-normal plus offset, the family used throughout the instance recipe.
inline double half_normal(std::mt19937_64& g, double scale = 1.0, double offset = 0.1)
{
    std::normal_distribution<double> n(0.0, 1.0);
    return scale * std::abs(n(g)) + offset;
}

inline Vector random_vector(std::mt19937_64& g, int dim, double scale = 1.0, double offset = 0.1)
{
    Vector v(dim);
    for (int i = 0; i < dim; ++i)
        v(i) = half_normal(g, scale, offset);
    return v;
}

/// Planner inputs with moderate means and HOB costs on the same scale.
inline PlanParams random_params(std::mt19937_64& g, int H, double max_bid = 1000.0)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    PlanParams p;
    for (int i = 0; i < ThetaIndex::slot_count(H); ++i)
        p.mu.push_back(0.1 + 6.0 * u(g));
    p.delay.assign(static_cast<std::size_t>(DelayIndex::slot_count(H)), 1.0);
    for (int k = 1; k < H; ++k)
        p.delay[static_cast<std::size_t>(k)] = 1.5 * u(g);
    for (int h = 1; h <= H; ++h)
        p.hob.push_back({-0.5 + 1.5 * u(g), 0.2 + 0.8 * u(g)});
    p.max_bid = max_bid;
    return p;
}

inline TrueModel random_model(std::mt19937_64& g, int H, int dim)
{
    TrueModel m;
    for (int i = 0; i < ThetaIndex::slot_count(H); ++i)
        m.theta.push_back(random_vector(g, dim, 2.0, 0.2));
    m.delay.assign(static_cast<std::size_t>(DelayIndex::slot_count(H)), 1.0);
    for (int k = 1; k < H; ++k)
        m.delay[static_cast<std::size_t>(k)] = half_normal(g, 0.5, 0.1);
    return m;
}

inline AuctionModel random_auction(std::mt19937_64& g, int H, int dim)
{
    AuctionModel a;
    for (int h = 0; h < H; ++h) {
        a.beta.push_back(random_vector(g, dim, 0.3, 0.05));
        a.sigma.push_back(half_normal(g, 0.3, 0.2));
    }
    return a;
}

} // namespace adbid::fixtures
