#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <utility>
#include <variant>
#include <vector>

#include "epiv/common.hpp"
#include "epiv/lifetime.hpp"

namespace epiv {

/// One individual's random infectivity function lambda(t): zero outside
/// [0, eta), bounded by lambda_star, piecewise on its breakpoints.
class InfectivityProfile {
public:
    struct Separable {
        std::shared_ptr<const Curve> lambda_tilde;
    };
    struct ExposedConst {
        double xi;     // exposed window [0, xi)
        double level;  // constant rate on [xi, eta)
    };
    struct Steps {
        std::vector<std::pair<double, double>> ends_levels;  // (segment end, level)
    };

    using Payload = std::variant<Separable, ExposedConst, Steps>;

    InfectivityProfile(double eta, double lambda_star, Payload payload)
        : eta_(eta), lambda_star_(lambda_star), payload_(std::move(payload)) {}

    double eta() const { return eta_; }
    double lambda_star() const { return lambda_star_; }

    /// lambda(t); right-continuous at breakpoints, zero for t < 0 and t >= eta.
    double evaluate(double t) const {
        if (t < 0.0 || t >= eta_) return 0.0;
        if (const auto* s = std::get_if<Separable>(&payload_)) return (*s->lambda_tilde)(t);
        if (const auto* e = std::get_if<ExposedConst>(&payload_))
            return t >= e->xi ? e->level : 0.0;
        const auto& steps = std::get<Steps>(payload_).ends_levels;
        for (const auto& [end, level] : steps)
            if (t < end) return level;
        return 0.0;
    }

    double operator()(double t) const { return evaluate(t); }

private:
    double eta_;
    double lambda_star_;
    Payload payload_;
};

/// The i.i.d. law of the infectivity profiles, plus the mean function
/// lambda_bar(t) = E[lambda(t)] and conditional-on-age sampling for the
/// initially infected.
class InfectivityLaw {
public:
    struct Separable {
        Curve lambda_tilde;
        LifetimeDistribution period;
    };
    struct ExposedThenConstant {
        LifetimeDistribution exposed;   // xi
        double level;
        LifetimeDistribution duration;  // eta - xi, so xi < eta always
    };
    struct SegmentSpec {
        LifetimeDistribution increment;     // zeta^l - zeta^{l-1}
        double level_lo, level_hi;          // level ~ Uniform(lo, hi)
    };
    struct PiecewiseConstantRandom {
        std::vector<SegmentSpec> segments;
    };

    static InfectivityLaw separable(Curve lambda_tilde, LifetimeDistribution period) {
        InfectivityLaw law;
        law.lambda_star_ = lambda_tilde.max_value();
        law.family_ = Separable{std::move(lambda_tilde), std::move(period)};
        law.shared_curve_ = std::make_shared<const Curve>(
            std::get<Separable>(law.family_).lambda_tilde);
        return law;
    }

    static InfectivityLaw exposed_then_constant(LifetimeDistribution exposed, double level,
                                                LifetimeDistribution duration) {
        if (!(level >= 0.0)) throw ConfigInvalid("infectivity level must be >= 0");
        InfectivityLaw law;
        law.lambda_star_ = level;
        law.family_ = ExposedThenConstant{std::move(exposed), level, std::move(duration)};
        return law;
    }

    static InfectivityLaw piecewise_constant_random(std::vector<SegmentSpec> segments) {
        if (segments.empty()) throw ConfigInvalid("need at least one segment");
        InfectivityLaw law;
        double star = 0.0;
        for (const auto& s : segments) {
            if (!(0.0 <= s.level_lo && s.level_lo <= s.level_hi))
                throw ConfigInvalid("segment level range invalid");
            star = std::max(star, s.level_hi);
        }
        law.lambda_star_ = star;
        law.family_ = PiecewiseConstantRandom{std::move(segments)};
        return law;
    }

    double lambda_star() const { return lambda_star_; }

    bool is_separable() const { return std::holds_alternative<Separable>(family_); }

    /// Separable with a constant lambda_tilde; the aggregate infectivity of a
    /// roster is then exactly lambda * |roster|, which the simulator exploits.
    bool is_constant_separable() const {
        const auto* s = std::get_if<Separable>(&family_);
        return s && s->lambda_tilde.is_constant();
    }

    const Curve& lambda_tilde() const { return std::get<Separable>(family_).lambda_tilde; }

    /// The infectious-period distribution F, available when the family carries
    /// it explicitly.
    std::optional<LifetimeDistribution> period_dist() const {
        if (const auto* s = std::get_if<Separable>(&family_)) return s->period;
        return std::nullopt;
    }

    /// P(eta > x) under the law.
    double eta_survival(double x) const {
        if (x < 0.0) return 1.0;
        if (const auto* s = std::get_if<Separable>(&family_)) return s->period.survival(x);
        if (const auto* e = std::get_if<ExposedThenConstant>(&family_)) {
            // eta = xi + D
            return 1.0 - e->exposed.expect([&](double xi) {
                return xi >= x ? 0.0 : e->duration.cdf(x - xi);
            });
        }
        const auto& segs = std::get<PiecewiseConstantRandom>(family_).segments;
        return sum_survival(segs, 0, x);
    }

    double eta_mean() const {
        if (const auto* s = std::get_if<Separable>(&family_)) return s->period.mean();
        if (const auto* e = std::get_if<ExposedThenConstant>(&family_))
            return e->exposed.mean() + e->duration.mean();
        double m = 0.0;
        for (const auto& s : std::get<PiecewiseConstantRandom>(family_).segments)
            m += s.increment.mean();
        return m;
    }

    /// lambda_bar(t) = E[lambda(t)]. Closed form for Separable and
    /// ExposedThenConstant; Monte Carlo (with a cached grid and reported
    /// standard error) for PiecewiseConstantRandom.
    double mean_infectivity(double t) const {
        if (t < 0.0) return 0.0;
        if (const auto* s = std::get_if<Separable>(&family_))
            return s->lambda_tilde(t) * s->period.survival(t);
        if (const auto* e = std::get_if<ExposedThenConstant>(&family_)) {
            // level * P(xi <= t < xi + D)
            double p = e->exposed.expect([&](double xi) {
                return xi > t ? 0.0 : e->duration.survival(t - xi);
            });
            return e->level * p;
        }
        std::lock_guard lock(mc_->mutex);
        ensure_mc_cache(t);
        return mc_interp(mc_->mean, t);
    }

    /// Monte Carlo standard error of mean_infectivity; zero for the closed
    /// form families.
    double mean_infectivity_stderr(double t) const {
        if (!std::holds_alternative<PiecewiseConstantRandom>(family_)) return 0.0;
        std::lock_guard lock(mc_->mutex);
        ensure_mc_cache(t);
        return mc_interp(mc_->se, t);
    }

    /// E[lambda(age + t) | eta > age] = lambda_bar(age + t) / P(eta > age).
    /// (lambda(age + t) vanishes on {eta <= age}, so the numerator needs no
    /// indicator.) Zero convention on a vanishing denominator.
    double mean_infectivity_conditional(double age, double t) const {
        if (age <= 0.0) return mean_infectivity(t);
        return zero_div(mean_infectivity(age + t), eta_survival(age));
    }

    InfectivityProfile sample_profile(Rng& rng) const {
        if (const auto* s = std::get_if<Separable>(&family_)) {
            double eta = s->period.sample(rng);
            return {eta, lambda_star_, InfectivityProfile::Separable{shared_curve_}};
        }
        if (const auto* e = std::get_if<ExposedThenConstant>(&family_)) {
            double xi = e->exposed.sample(rng);
            double eta = xi + e->duration.sample(rng);
            return {eta, lambda_star_, InfectivityProfile::ExposedConst{xi, e->level}};
        }
        const auto& segs = std::get<PiecewiseConstantRandom>(family_).segments;
        std::vector<std::pair<double, double>> ends;
        double zeta = 0.0;
        for (const auto& s : segs) {
            zeta += s.increment.sample(rng);
            double level = s.level_lo + (s.level_hi - s.level_lo) * rng.uniform();
            ends.emplace_back(zeta, level);
        }
        return {zeta, lambda_star_, InfectivityProfile::Steps{std::move(ends)}};
    }

    /// Profile conditioned on {eta > age}: exact via the conditional period
    /// law for Separable, rejection sampling otherwise.
    InfectivityProfile sample_profile_conditional(double age, Rng& rng,
                                                  std::size_t rejection_cap = 1000000) const {
        if (age <= 0.0) return sample_profile(rng);
        if (const auto* s = std::get_if<Separable>(&family_)) {
            double eta = age + s->period.sample_remaining(age, rng);
            return {eta, lambda_star_, InfectivityProfile::Separable{shared_curve_}};
        }
        if (!(eta_survival(age) > 0.0))
            throw DegenerateAge("conditioning on a zero-probability age");
        for (std::size_t i = 0; i < rejection_cap; ++i) {
            InfectivityProfile p = sample_profile(rng);
            if (p.eta() > age) return p;
        }
        throw RejectionBudgetExceeded("conditional profile rejection cap exceeded");
    }

private:
    InfectivityLaw() = default;

    static double sum_survival(const std::vector<SegmentSpec>& segs, std::size_t from,
                               double x) {
        if (x < 0.0) return 1.0;
        if (from + 1 == segs.size()) return segs[from].increment.survival(x);
        return 1.0 - segs[from].increment.expect([&](double d) {
            return d > x ? 0.0 : 1.0 - sum_survival(segs, from + 1, x - d);
        });
    }

    void ensure_mc_cache(double t) const {
        const double dt = 1e-3;
        if (!mc_->mean.empty() && t <= mc_->tmax) return;
        double tmax = std::max(t, mc_->tmax) * 2.0 + 1.0;
        const auto& segs = std::get<PiecewiseConstantRandom>(family_).segments;
        const std::size_t M = 200000;
        std::size_t n = static_cast<std::size_t>(std::ceil(tmax / dt)) + 2;
        std::vector<double> d1(n + 1, 0.0), d2(n + 1, 0.0);
        Rng rng(0x5eedcafe);  // internal, fixed: the cache is deterministic
        for (std::size_t m = 0; m < M; ++m) {
            double zeta = 0.0;
            for (const auto& s : segs) {
                double a = zeta;
                zeta += s.increment.sample(rng);
                double level = s.level_lo + (s.level_hi - s.level_lo) * rng.uniform();
                auto ia = std::min(n, static_cast<std::size_t>(std::ceil(a / dt)));
                auto ib = std::min(n, static_cast<std::size_t>(std::ceil(zeta / dt)));
                d1[ia] += level;
                d1[ib] -= level;
                d2[ia] += level * level;
                d2[ib] -= level * level;
            }
        }
        mc_->mean.assign(n, 0.0);
        mc_->se.assign(n, 0.0);
        double acc1 = 0.0, acc2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            acc1 += d1[i];
            acc2 += d2[i];
            double mean = acc1 / M;
            double var = std::max(0.0, acc2 / M - mean * mean);
            mc_->mean[i] = mean;
            mc_->se[i] = std::sqrt(var / M);
        }
        mc_->dt = dt;
        mc_->tmax = tmax;
    }

    double mc_interp(const std::vector<double>& v, double t) const {
        double u = t / mc_->dt;
        auto i = static_cast<std::size_t>(u);
        if (i + 1 >= v.size()) return v.back();
        double frac = u - static_cast<double>(i);
        return v[i] * (1.0 - frac) + v[i + 1] * frac;
    }

    std::variant<std::monostate, Separable, ExposedThenConstant, PiecewiseConstantRandom> family_;
    double lambda_star_ = 0.0;
    std::shared_ptr<const Curve> shared_curve_;
    struct McCache {
        std::mutex mutex;
        std::vector<double> mean, se;
        double dt = 1e-3, tmax = 0.0;
    };
    std::shared_ptr<McCache> mc_ = std::make_shared<McCache>();  // shared by copies
};

}  // namespace epiv
