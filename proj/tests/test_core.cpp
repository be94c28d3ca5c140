#include <cmath>
#include <functional>
#include <random>
#include <set>
#include <utility>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>

#include "adbid/core.hpp"
#include "test_util.hpp"

using namespace adbid;

namespace {

// Maclaurin series of erf, summed until terms vanish; independent of libm.
double phi_series(double z)
{
    const double x = z / std::sqrt(2.0);
    double term = x, sum = x;
    for (int n = 1; n < 200; ++n) {
        term *= -x * x / n;
        sum += term / (2 * n + 1);
    }
    return 0.5 + sum / std::sqrt(std::numbers::pi);
}

double integral_of_cdf(const LognormalHob& hob, double bid)
{
    using boost::math::quadrature::gauss_kronrod;
    auto F = [&](double v) { return hob.cdf(v); };
    return gauss_kronrod<double, 61>::integrate(F, 0.0, bid, 15, 1e-14);
}

const ExposureState kInit = ExposureState::initial();
constexpr int N0 = ExposureState::kNever;
constexpr int NB = ExposureState::kNeverBefore;
constexpr int O1 = ExposureState::kOnlyOne;

} // namespace

TEST(Bounds, RejectsNonpositiveAndUnsatisfiableFloor)
{
    Bounds ok;
    EXPECT_NO_THROW(ok.validate());
    Bounds neg = ok;
    neg.B_A = 0;
    EXPECT_THROW(neg.validate(), std::invalid_argument);
    Bounds h0 = ok;
    h0.H = 0;
    EXPECT_THROW(h0.validate(), std::invalid_argument);
    Bounds floor = ok;
    floor.b = 11;   // B_x * B_theta = 10
    EXPECT_THROW(floor.validate(), std::invalid_argument);
}

TEST(ThetaIndex, SlotLayout)
{
    EXPECT_EQ(ThetaIndex::natural_demand().slot(), 0);
    EXPECT_EQ(ThetaIndex::first_exposure().slot(), 1);
    EXPECT_EQ(ThetaIndex::lag(1).slot(), 2);
    EXPECT_EQ(ThetaIndex::lag(2).slot(), 3);
    for (int s = 0; s < 6; ++s)
        EXPECT_EQ(ThetaIndex::from_slot(s).slot(), s);
    EXPECT_EQ(ThetaIndex::slot_count(3), 4);
    EXPECT_EQ(DelayIndex::slot_count(3), 3);
    EXPECT_THROW(ThetaIndex::lag(0), std::invalid_argument);
}

TEST(NextState, WorkedTransitions)
{
    EXPECT_EQ(next_state(kInit, true), (ExposureState{1, O1}));
    EXPECT_EQ(next_state(kInit, false), kInit);
    EXPECT_EQ(next_state({3, O1}, true), (ExposureState{1, 3}));
    EXPECT_EQ(next_state({1, O1}, false), (ExposureState{2, O1}));
}

TEST(NextState, ExhaustiveReachabilityIsValid)
{
    for (int H = 1; H <= 8; ++H) {
        std::set<std::pair<int, int>> seen;
        std::function<void(ExposureState, int)> walk = [&](ExposureState s, int h) {
            ASSERT_TRUE(s.valid(H)) << "H=" << H << " h=" << h << " s=(" << s.since_last << "," << s.gap << ")";
            ASSERT_EQ(s.never_exposed(), s.gap == NB);
            seen.insert({s.since_last, s.gap});
            // the enumerated reachable set at round h contains s
            const auto rs = reachable_states(h, H);
            ASSERT_NE(std::find(rs.begin(), rs.end(), s), rs.end());
            if (h == H)
                return;
            walk(next_state(s, true), h + 1);
            walk(next_state(s, false), h + 1);
        };
        walk(kInit, 1);
        // reachable_states lists nothing beyond what play can reach
        for (int h = 1; h <= H; ++h)
            for (const auto& s : reachable_states(h, H))
                EXPECT_TRUE(seen.count({s.since_last, s.gap}));
    }
}

TEST(NextState, WorkedSevenRoundTrajectory)
{
    // wins at rounds 3 and 6 of a 7-round episode
    const bool wins[7] = {false, false, true, false, false, true, false};
    const ExposureState expected[7] = {{N0, NB}, {N0, NB}, {N0, NB}, {1, O1}, {2, O1}, {3, O1}, {1, 3}};
    ExposureState s = kInit;
    for (int h = 0; h < 7; ++h) {
        EXPECT_EQ(s, expected[h]) << "round " << h + 1;
        EXPECT_TRUE(s.valid(7));
        s = next_state(s, wins[h]);
    }
}

TEST(ConversionMean, IndexRouting)
{
    TrueModel m;
    for (int i = 0; i < 4; ++i)
        m.theta.push_back(Vector::Constant(2, 1.0 + i));   // <theta_i, (1,1)> = 2 + 2i
    m.delay = {1.0, 0.5, 0.25};
    const Vector x = Vector::Ones(2);
    EXPECT_DOUBLE_EQ(conversion_mean(kInit, false, x, m), 2.0);
    EXPECT_DOUBLE_EQ(conversion_mean(kInit, true, x, m), 4.0);
    EXPECT_DOUBLE_EQ(conversion_mean({2, O1}, false, x, m), 0.25 * 4.0);
    EXPECT_DOUBLE_EQ(conversion_mean({1, O1}, true, x, m), 6.0);    // lag 1
    EXPECT_DOUBLE_EQ(conversion_mean({1, 1}, false, x, m), 0.5 * 6.0);
    m.theta[0] = -Vector::Ones(2);
    EXPECT_THROW(conversion_mean(kInit, false, x, m), std::domain_error);
}

TEST(NormalCdf, MatchesSeriesOracle)
{
    // series cancels badly past |z| = 4, tails use 30-digit reference values
    for (double z = -4; z <= 4; z += 0.125)
        EXPECT_NEAR(normal_cdf(z), phi_series(z), 1e-12) << z;
    const std::pair<double, double> tails[] = {
        {-6, 9.865876450376981407e-10}, {-5.5, 1.8989562465887719384e-8},
        {-5, 2.8665157187919391167e-7}, {-4.5, 3.3976731247300535e-6},
        {4.5, 0.99999660232687526994}, {6, 0.99999999901341235496}};
    for (const auto& [z, ref] : tails)
        EXPECT_NEAR(normal_cdf(z), ref, 1e-12) << z;
    EXPECT_EQ(normal_cdf(0.0), 0.5);
}

TEST(WinProbability, Examples)
{
    AuctionModel a{{Vector::Zero(2)}, {1.0}};
    const Vector x = Vector::Ones(2);
    EXPECT_DOUBLE_EQ(win_probability(1, 1.0, x, a), 0.5);
    EXPECT_EQ(win_probability(1, 0.0, x, a), 0.0);
    EXPECT_NEAR(win_probability(1, std::exp(1.0), x, a), 0.841345, 1e-6);
    EXPECT_NEAR(win_probability(1, std::exp(1.0), x, a), phi_series(1.0), 1e-12);
    EXPECT_THROW(win_probability(1, -1.0, x, a), std::invalid_argument);
}

TEST(WinProbability, MonotoneAndContinuous)
{
    std::mt19937_64 g(11);
    for (int rep = 0; rep < 50; ++rep) {
        const LognormalHob hob{fixtures::half_normal(g) - 1.0, fixtures::half_normal(g)};
        double prev = 0;
        for (double a = 1e-3; a < 100; a *= 1.05) {
            const double F = hob.cdf(a);
            EXPECT_GE(F, prev);
            EXPECT_NEAR(hob.cdf(a * (1 + 1e-9)), F, 1e-7);
            prev = F;
        }
    }
}

TEST(Payment, ClosedFormExamples)
{
    const LognormalHob hob{0.0, 1.0};
    EXPECT_NEAR(hob.conditional_payment(std::numeric_limits<double>::infinity()), std::exp(0.5), 1e-12);
    EXPECT_NEAR(hob.conditional_payment(1e12), 1.648721, 1e-6);
    const double expected = std::exp(0.5) * phi_series(-1.0) / phi_series(0.0);
    EXPECT_NEAR(hob.conditional_payment(1.0), expected, 1e-12);
    EXPECT_NEAR(hob.conditional_payment(1.0), 0.523209, 1e-4);
    // the definition bid - (1/F) integral_0^bid F, by quadrature
    EXPECT_NEAR(1.0 - integral_of_cdf(hob, 1.0) / hob.cdf(1.0), 0.523209, 1e-4);
    EXPECT_THROW(hob.conditional_payment(0.0), std::domain_error);
}

TEST(Payment, MonotoneAndBelowBid)
{
    std::mt19937_64 g(12);
    for (int rep = 0; rep < 50; ++rep) {
        const LognormalHob hob{fixtures::half_normal(g) - 1.0, fixtures::half_normal(g)};
        double prev = 0;
        for (double a = 1e-2; a < 1e3; a *= 1.1) {
            if (!(hob.cdf(a) > 0))
                continue;
            const double p = hob.conditional_payment(a);
            EXPECT_LE(p, a);
            EXPECT_GT(p, 0);
            EXPECT_GE(p, prev - 1e-12);
            prev = p;
        }
    }
}

TEST(Payment, QuadratureIdentityOnBidGrid)
{
    std::mt19937_64 g(13);
    for (int rep = 0; rep < 5; ++rep) {
        const LognormalHob hob{fixtures::half_normal(g) - 0.5, fixtures::half_normal(g, 0.5, 0.2)};
        for (int i = 1; i <= 100; ++i) {
            const double a = 0.05 * i;
            const double lhs = hob.partial_expectation(a);   // p(a) F(a)
            const double rhs = a * hob.cdf(a) - integral_of_cdf(hob, a);
            EXPECT_NEAR(lhs, rhs, 1e-8) << "a=" << a;
        }
    }
}

TEST(RoundReward, OptOutAndForcedWinLimits)
{
    TrueModel m;
    for (int i = 0; i < 4; ++i)
        m.theta.push_back(Vector::Constant(2, 0.5 + i));
    m.delay = {1.0, 0.6, 0.3};
    AuctionModel a{{Vector::Constant(2, 0.1), Vector::Constant(2, 0.2), Vector::Zero(2)}, {0.5, 0.7, 1.0}};
    const Vector x(Vector::Ones(2));
    const ExposureState s{1, O1};
    EXPECT_DOUBLE_EQ(expected_round_reward(2, s, 0.0, x, m, a), 0.6 * m.theta[1].dot(x));
    const double inf = std::numeric_limits<double>::infinity();
    EXPECT_DOUBLE_EQ(expected_round_reward(2, s, inf, x, m, a), m.theta[2].dot(x) - a.hob(2, x).mean());
    // large finite bids approach the limit
    EXPECT_NEAR(expected_round_reward(2, s, 1e9, x, m, a), m.theta[2].dot(x) - a.hob(2, x).mean(), 1e-9);
}

TEST(RoundReward, MatchesDefinitionWithConditionalPayment)
{
    std::mt19937_64 g(14);
    for (int rep = 0; rep < 200; ++rep) {
        const LognormalHob hob{fixtures::half_normal(g) - 1.0, fixtures::half_normal(g)};
        const double w = fixtures::half_normal(g, 3), l = fixtures::half_normal(g, 3);
        const double a = fixtures::half_normal(g, 2, 0.01);
        const double F = hob.cdf(a);
        if (F < 1e-12)
            continue;
        const double def = l * (1 - F) + (w - hob.conditional_payment(a)) * F;
        EXPECT_NEAR(round_reward(w, l, hob, a), def, 1e-10);
    }
}

TEST(RoundReward, MonotoneInMeansAndDelays)
{
    std::mt19937_64 g(15);
    const int H = 3;
    for (int rep = 0; rep < 100; ++rep) {
        auto m = fixtures::random_model(g, H, 2);
        const auto a = fixtures::random_auction(g, H, 2);
        const Vector x = fixtures::random_vector(g, 2);
        const double bid = fixtures::half_normal(g, 2);
        for (int h = 1; h <= H; ++h)
            for (const auto& s : reachable_states(h, H)) {
                const double base = expected_round_reward(h, s, bid, x, m, a);
                for (std::size_t k = 1; k < m.delay.size(); ++k) {
                    auto m2 = m;
                    m2.delay[k] += 0.1;
                    EXPECT_GE(expected_round_reward(h, s, bid, x, m2, a), base - 1e-12);
                }
                for (std::size_t i = 0; i < m.theta.size(); ++i) {
                    auto m2 = m;
                    m2.theta[i] += 0.1 * x / x.squaredNorm();   // raises <theta_i, x> by 0.1
                    EXPECT_GE(expected_round_reward(h, s, bid, x, m2, a), base - 1e-12);
                }
            }
    }
}

TEST(Purity, IdenticalInputsIdenticalOutputs)
{
    std::mt19937_64 g(16);
    const auto m = fixtures::random_model(g, 3, 2);
    const auto a = fixtures::random_auction(g, 3, 2);
    const Vector x = fixtures::random_vector(g, 2);
    for (int h = 1; h <= 3; ++h)
        for (const auto& s : reachable_states(h, 3)) {
            EXPECT_EQ(conversion_mean(s, true, x, m), conversion_mean(s, true, x, m));
            EXPECT_EQ(win_probability(h, 1.3, x, a), win_probability(h, 1.3, x, a));
            EXPECT_EQ(expected_round_reward(h, s, 0.7, x, m, a), expected_round_reward(h, s, 0.7, x, m, a));
        }
}
