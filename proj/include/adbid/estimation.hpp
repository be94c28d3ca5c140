#pragma once

// Online estimators: data splitting of an episode into theta (W) and delay (D)
// buckets, the truncated online Newton step for theta_l, the two-stage ratio
// estimator for d_l, ridge regression for beta_h with a progressive residual
// variance for sigma_h, and the confidence constants that size the regions.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

#include "adbid/core.hpp"
#include "adbid/environment.hpp"

namespace adbid {

// ---------------------------------------------------------------------------
// Data splitting
// ---------------------------------------------------------------------------

/// Round numbers (1-based) of one episode routed to each estimator.
/// theta_rounds is indexed by ThetaIndex slot, delay_rounds by DelayIndex slot
/// (slot 0, Never, is always empty).
struct SplitDatasets
{
    std::vector<std::vector<int>> theta_rounds;
    std::vector<std::vector<int>> delay_rounds;

    const std::vector<int>& W(ThetaIndex i) const { return theta_rounds.at(static_cast<std::size_t>(i.slot())); }
    const std::vector<int>& D(int lag) const { return delay_rounds.at(static_cast<std::size_t>(lag)); }
};

inline SplitDatasets split_episode(const EpisodeLog& log, int H)
{
    SplitDatasets out;
    out.theta_rounds.resize(static_cast<std::size_t>(ThetaIndex::slot_count(H)));
    out.delay_rounds.resize(static_cast<std::size_t>(DelayIndex::slot_count(H)));
    for (const auto& r : log.rounds) {
        if (r.won) {
            out.theta_rounds[static_cast<std::size_t>(win_index(r.state).slot())].push_back(r.h);
        } else if (r.state.never_exposed()) {
            out.theta_rounds[static_cast<std::size_t>(ThetaIndex::natural_demand().slot())].push_back(r.h);
        } else {
            out.delay_rounds[static_cast<std::size_t>(r.state.since_last)].push_back(r.h);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Confidence constants
// ---------------------------------------------------------------------------

inline double theta_gamma(const Bounds& bounds, double T, double delta, double width_scale = 1.0)
{
    if (T < 1 || !(delta > 0 && delta < 1))
        throw std::invalid_argument("theta_gamma needs T >= 1 and delta in (0, 1)");
    const double d = bounds.dim;
    const double xt = bounds.B_x * bounds.B_theta;
    const double log_det = std::log(1 + T / (2 * d));
    const double g = 896 * d * xt * (1 + xt) * std::log(4 * T / delta) * log_det + 2 * xt * xt + 48 * d * xt * log_det;
    return width_scale * g;
}

inline double truncation_threshold(const Bounds& bounds, double T, double delta)
{
    if (T < 1 || !(delta > 0 && delta < 1))
        throw std::invalid_argument("truncation_threshold needs T >= 1 and delta in (0, 1)");
    const double d = bounds.dim;
    const double xt = bounds.B_x * bounds.B_theta;
    return 2 * std::sqrt(xt * (1 + xt) * std::log(4 * T / delta) * d * std::log(1 + T / (2 * d)));
}

/// Half-width of the delay confidence interval after N observations.
inline double delay_radius(long N, double gamma, const Bounds& bounds, double T, double delta,
                           double width_scale = 1.0)
{
    if (N < 1)
        throw std::invalid_argument("delay_radius needs N >= 1");
    const double d = bounds.dim;
    const double first_stage = 4 * bounds.H * bounds.B_d * std::sqrt(d * std::log(1 + T / (2 * d)) * gamma);
    const double noise = std::sqrt(2 * std::numbers::e * bounds.B_d * bounds.B_x * bounds.B_theta * std::log(2 / delta));
    return width_scale * (first_stage + noise) / (bounds.b * std::sqrt(static_cast<double>(N)));
}

/// Exploration block size ceil(32 log(HT) / (e B_d B_x B_theta b^2)).
inline long exploration_block_size(const Bounds& bounds, double T)
{
    const double v = 32 * std::log(bounds.H * T) /
                     (std::numbers::e * bounds.B_d * bounds.B_x * bounds.B_theta * bounds.b * bounds.b);
    return static_cast<long>(std::ceil(v));
}

struct ConfidenceConfig
{
    double delta = 0.01;
    double gamma = 0.0;        // squared V-radius of the theta ellipsoid (already width-scaled)
    double truncation = 0.0;   // Gamma, the observation truncation threshold
    double width_scale = 1.0;

    void validate() const
    {
        if (!(delta > 0 && delta < 1))
            throw std::invalid_argument("delta must lie in (0, 1)");
        if (!(width_scale >= 0))
            throw std::invalid_argument("width_scale must be nonnegative");
        if (!(gamma >= 0) || !(truncation > 0))
            throw std::invalid_argument("gamma must be nonnegative and truncation positive");
    }

    /// Theory constants for horizon T, with optional overrides.
    static ConfidenceConfig theory(const Bounds& bounds, double T, double delta, double width_scale,
                                   std::optional<double> gamma_override = std::nullopt,
                                   std::optional<double> truncation_override = std::nullopt)
    {
        ConfidenceConfig c;
        c.delta = delta;
        c.width_scale = width_scale;
        c.gamma = gamma_override ? *gamma_override * width_scale : theta_gamma(bounds, T, delta, width_scale);
        c.truncation = truncation_override ? *truncation_override : truncation_threshold(bounds, T, delta);
        return c;
    }
};

// ---------------------------------------------------------------------------
// Theta: truncated online Newton step with a V-metric projection
// ---------------------------------------------------------------------------

/// argmin_{||theta|| <= radius} (theta - target)^T V (theta - target).
///
/// Interior targets are returned unchanged. Otherwise theta(lambda) =
/// (V + lambda I)^{-1} V target and lambda is bisected until the bracket is
/// narrower than 1e-10; the feasible end of the bracket is returned.
inline Vector project_to_ball(const Vector& target, const Matrix& V, double radius)
{
    if (target.norm() <= radius)
        return target;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(V);
    const Vector& lam = eig.eigenvalues();
    const Matrix& Q = eig.eigenvectors();
    const Vector c = Q.transpose() * target;
    auto at = [&](double mult) {
        Vector w(c.size());
        for (Eigen::Index i = 0; i < c.size(); ++i)
            w(i) = lam(i) / (lam(i) + mult) * c(i);
        return Vector(Q * w);
    };
    double lo = 0.0;
    double hi = lam.maxCoeff() * target.norm() / radius;
    for (int it = 0; it < 400 && hi - lo > 1e-10; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (at(mid).norm() > radius)
            lo = mid;
        else
            hi = mid;
    }
    Vector out = at(hi);
    // the bisection can leave the norm a rounding error above the radius
    const double n = out.norm();
    if (n > radius)
        out *= radius / n;
    return out;
}

class ThetaEstimator
{
public:
    ThetaEstimator() = default;
    ThetaEstimator(ThetaIndex index, int dim)
        : index_(index), V_(Matrix::Identity(dim, dim)), theta_hat_(Vector::Zero(dim))
    {}

    ThetaIndex index() const { return index_; }
    const Matrix& V() const { return V_; }
    const Vector& theta_hat() const { return theta_hat_; }
    long update_count() const { return update_count_; }
    long truncated_count() const { return truncated_count_; }

    /// ||x||_{V^{-1}} under the current V.
    double inverse_norm(const Vector& x) const { return std::sqrt(x.dot(V_.ldlt().solve(x))); }

    /// One observation: V += xx^T/2, truncate y with the updated V, take the
    /// Newton step from the previous estimate and project onto ||theta|| <= radius.
    void update(const Vector& x, double y, double truncation, double radius)
    {
        V_ += 0.5 * x * x.transpose();
        const auto ldlt = V_.ldlt();
        const double xnorm = std::sqrt(x.dot(ldlt.solve(x)));
        double y_used = y;
        if (xnorm * std::abs(y) > truncation) {
            y_used = 0.0;
            ++truncated_count_;
        }
        const Vector grad = (x.dot(theta_hat_) - y_used) * x;
        const Vector step = theta_hat_ - ldlt.solve(grad);
        theta_hat_ = project_to_ball(step, V_, radius);
        ++update_count_;
    }

    /// Restores a serialized state.
    void restore(const Matrix& V, const Vector& theta_hat, long updates, long truncated)
    {
        V_ = V;
        theta_hat_ = theta_hat;
        update_count_ = updates;
        truncated_count_ = truncated;
    }

    /// Replaces the point estimate without touching V (test and injection hook).
    void set_theta_hat(const Vector& theta) { theta_hat_ = theta; }

private:
    ThetaIndex index_ = ThetaIndex::natural_demand();
    Matrix V_;
    Vector theta_hat_;
    long update_count_ = 0;
    long truncated_count_ = 0;
};

inline ThetaEstimator crtm_update(ThetaEstimator est, const Vector& x, double y, const ConfidenceConfig& cfg,
                                  const Bounds& bounds)
{
    est.update(x, y, cfg.truncation, bounds.B_theta);
    return est;
}

/// Maximizer of <x, theta> over {||theta - theta_hat||_V^2 <= gamma}.
inline Vector optimistic_theta(const ThetaEstimator& est, const Vector& x, double gamma)
{
    const Vector z = est.V().ldlt().solve(x);
    const double xnorm = std::sqrt(x.dot(z));
    if (!(xnorm > 0))
        return est.theta_hat();
    return est.theta_hat() + std::sqrt(gamma) * z / xnorm;
}

/// <x, theta_hat> + sqrt(gamma) ||x||_{V^{-1}}, floored at `floor`.
inline double optimistic_mean(const ThetaEstimator& est, const Vector& x, double gamma, double floor)
{
    const double v = x.dot(est.theta_hat()) + std::sqrt(gamma) * est.inverse_norm(x);
    return std::max(v, floor);
}

// ---------------------------------------------------------------------------
// Delay: two-stage ratio estimator
// ---------------------------------------------------------------------------

class DelayEstimator
{
public:
    DelayEstimator() = default;
    explicit DelayEstimator(int lag) : lag_(lag) {}

    int lag() const { return lag_; }
    double numerator() const { return numerator_; }
    double denominator() const { return denominator_; }
    long count() const { return count_; }

    /// Adds one D-bucket round with observed conversions y and the first-stage
    /// mean <theta_hat, x> (floored at `floor` before it enters the sum).
    void add(double y, double first_stage_mean, double floor)
    {
        numerator_ += y;
        denominator_ += std::max(floor, first_stage_mean);
        ++count_;
    }

    std::optional<double> estimate() const
    {
        if (!(denominator_ > 0))
            return std::nullopt;
        return numerator_ / denominator_;
    }

    void restore(double numerator, double denominator, long count)
    {
        numerator_ = numerator;
        denominator_ = denominator;
        count_ = count;
    }

private:
    int lag_ = 1;
    double numerator_ = 0.0;
    double denominator_ = 0.0;
    long count_ = 0;
};

/// Folds one episode's D-bucket for this estimator's lag into the ratio.
/// `theta_bank` must be the theta estimators current as of this customer.
inline DelayEstimator tsmle_update(DelayEstimator est, const EpisodeLog& log, const std::vector<int>& rounds,
                                   const std::vector<ThetaEstimator>& theta_bank, double floor)
{
    for (int h : rounds) {
        const auto& r = log.rounds.at(static_cast<std::size_t>(h - 1));
        if (r.won || r.state.since_last != est.lag())
            throw std::logic_error("delay estimator fed a round outside its D bucket");
        const auto& th = theta_bank.at(static_cast<std::size_t>(lose_index(r.state).slot()));
        est.add(static_cast<double>(r.conversions), log.x.dot(th.theta_hat()), floor);
    }
    return est;
}

// ---------------------------------------------------------------------------
// Auction: ridge regression on log HOB and progressive residual variance
// ---------------------------------------------------------------------------

class RidgeRound
{
public:
    RidgeRound() = default;
    explicit RidgeRound(int dim, double lambda = 1.0)
        : gram_(lambda * Matrix::Identity(dim, dim)), moment_(Vector::Zero(dim)), beta_hat_(Vector::Zero(dim))
    {}

    const Matrix& gram() const { return gram_; }
    const Vector& moment() const { return moment_; }
    const Vector& beta_hat() const { return beta_hat_; }
    double residual_sq_sum() const { return residual_sq_sum_; }
    long count() const { return count_; }

    /// The residual uses the estimate available before this sample arrives.
    void update(const Vector& x, double log_hob)
    {
        if (!std::isfinite(log_hob))
            throw std::invalid_argument("log HOB must be finite");
        const double resid = log_hob - x.dot(beta_hat_);
        residual_sq_sum_ += resid * resid;
        gram_ += x * x.transpose();
        moment_ += x * log_hob;
        beta_hat_ = gram_.ldlt().solve(moment_);
        ++count_;
    }

    std::optional<double> sigma_estimate() const
    {
        if (count_ == 0)
            return std::nullopt;
        return std::sqrt(residual_sq_sum_ / static_cast<double>(count_));
    }

    void restore(const Matrix& gram, const Vector& moment, double residual_sq_sum, long count)
    {
        gram_ = gram;
        moment_ = moment;
        residual_sq_sum_ = residual_sq_sum;
        count_ = count;
        beta_hat_ = gram_.ldlt().solve(moment_);
    }

private:
    Matrix gram_;
    Vector moment_;
    Vector beta_hat_;
    double residual_sq_sum_ = 0.0;
    long count_ = 0;
};

struct AuctionEstimator
{
    std::vector<RidgeRound> rounds;

    AuctionEstimator() = default;
    AuctionEstimator(int H, int dim, double lambda = 1.0) : rounds(static_cast<std::size_t>(H), RidgeRound(dim, lambda)) {}

    RidgeRound& at(int h) { return rounds.at(static_cast<std::size_t>(h - 1)); }
    const RidgeRound& at(int h) const { return rounds.at(static_cast<std::size_t>(h - 1)); }

    /// Estimated HOB model with sigma floored at `sigma_floor` (rounds without
    /// data get sigma = 1).
    AuctionModel estimated_model(double sigma_floor) const
    {
        AuctionModel m;
        for (const auto& r : rounds) {
            m.beta.push_back(r.beta_hat());
            m.sigma.push_back(std::max(sigma_floor, r.sigma_estimate().value_or(1.0)));
        }
        return m;
    }
};

inline AuctionEstimator ridge_update(AuctionEstimator est, int h, const Vector& x, double log_hob)
{
    est.at(h).update(x, log_hob);
    return est;
}

inline std::optional<double> sigma_estimate(const AuctionEstimator& est, int h)
{
    return est.at(h).sigma_estimate();
}

} // namespace adbid
