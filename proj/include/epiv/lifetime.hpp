#pragma once

#include <algorithm>
#include <memory>
#include <utility>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "epiv/common.hpp"

namespace epiv {

/// Hazard at a point: either an absolutely continuous rate mu(x) = f(x)/F^c(x)
/// or the mass of an atom, nu({x})/G^c(x).
struct Hazard {
    bool is_atom = false;
    double value = 0.0;
};

/// Law of the infectious period eta. Wraps the c.d.f. F together with the
/// survival F^c, its left-continuous version G^c, the hazard, the equilibrium
/// (stationary excess) distribution and conditional-on-age sampling.
///
/// Conventions: F^c = 1 on the negative half-line; any ratio with a vanishing
/// survival denominator is 0.
class LifetimeDistribution {
public:
    enum class Kind { Exponential, Deterministic, Gamma, PiecewiseCdf, Mixture };

    static LifetimeDistribution exponential(double rate) {
        if (!(rate > 0.0)) throw ConfigInvalid("exponential rate must be > 0");
        LifetimeDistribution d(Kind::Exponential);
        d.rate_ = rate;
        return d;
    }

    static LifetimeDistribution deterministic(double t_i) {
        if (!(t_i > 0.0)) throw ConfigInvalid("deterministic period must be > 0");
        LifetimeDistribution d(Kind::Deterministic);
        d.t_i_ = t_i;
        return d;
    }

    static LifetimeDistribution gamma(double shape, double scale) {
        if (!(shape > 0.0) || !(scale > 0.0))
            throw ConfigInvalid("gamma shape and scale must be > 0");
        LifetimeDistribution d(Kind::Gamma);
        d.shape_ = shape;
        d.scale_ = scale;
        return d;
    }

    /// Knots (x, F(x)) with x strictly increasing, F nondecreasing and the
    /// last F equal to 1; F is linearly interpolated, 0 left of the first knot.
    static LifetimeDistribution piecewise_cdf(std::vector<std::pair<double, double>> knots) {
        if (knots.size() < 2) throw ConfigInvalid("piecewise cdf needs >= 2 knots");
        for (std::size_t i = 0; i < knots.size(); ++i) {
            if (knots[i].first < 0.0) throw ConfigInvalid("piecewise cdf knots need x >= 0");
            if (i > 0 && !(knots[i].first > knots[i - 1].first))
                throw ConfigInvalid("piecewise cdf knots must be strictly increasing in x");
            if (i > 0 && knots[i].second < knots[i - 1].second)
                throw ConfigInvalid("piecewise cdf values must be nondecreasing");
        }
        if (knots.front().second != 0.0)
            throw ConfigInvalid("piecewise cdf must start at F = 0");
        if (knots.back().second != 1.0)
            throw ConfigInvalid("piecewise cdf must end at F = 1");
        LifetimeDistribution d(Kind::PiecewiseCdf);
        d.knots_ = std::move(knots);
        return d;
    }

    static LifetimeDistribution mixture(std::vector<double> weights,
                                        std::vector<LifetimeDistribution> components) {
        if (weights.size() != components.size() || weights.empty())
            throw ConfigInvalid("mixture needs matching nonempty weights/components");
        double sum = 0.0;
        for (double w : weights) {
            if (!(w > 0.0)) throw ConfigInvalid("mixture weights must be > 0");
            sum += w;
        }
        LifetimeDistribution d(Kind::Mixture);
        for (double& w : weights) w /= sum;
        d.weights_ = std::move(weights);
        d.components_ = std::make_shared<std::vector<LifetimeDistribution>>(std::move(components));
        return d;
    }

    Kind kind() const { return kind_; }

    /// The (x, F(x)) table of a PiecewiseCdf kind; empty otherwise.
    const std::vector<std::pair<double, double>>& knots() const { return knots_; }

    double cdf(double x) const {
        if (x < 0.0) return 0.0;
        switch (kind_) {
            case Kind::Exponential: return -std::expm1(-rate_ * x);
            case Kind::Deterministic: return x >= t_i_ ? 1.0 : 0.0;
            case Kind::Gamma: return boost::math::gamma_p(shape_, x / scale_);
            case Kind::PiecewiseCdf: return piecewise_F(x);
            case Kind::Mixture: {
                double s = 0.0;
                for (std::size_t k = 0; k < weights_.size(); ++k)
                    s += weights_[k] * (*components_)[k].cdf(x);
                return s;
            }
        }
        return 0.0;
    }

    /// F^c(x) = 1 - F(x), right-continuous; the left-continuous version
    /// G^c(x) = F^c(x^-) is selected by the flag.
    double survival(double x, bool left_continuous = false) const {
        if (x < 0.0) return 1.0;
        if (left_continuous && kind_ == Kind::Deterministic) return x <= t_i_ ? 1.0 : 0.0;
        if (left_continuous && kind_ == Kind::Mixture) {
            double s = 0.0;
            for (std::size_t k = 0; k < weights_.size(); ++k)
                s += weights_[k] * (*components_)[k].survival(x, true);
            return s;
        }
        return 1.0 - cdf(x);
    }

    /// Density f(x) of absolutely continuous kinds.
    double density(double x) const {
        if (x < 0.0) return 0.0;
        switch (kind_) {
            case Kind::Exponential: return rate_ * std::exp(-rate_ * x);
            case Kind::Gamma: return boost::math::gamma_p_derivative(shape_, x / scale_) / scale_;
            case Kind::PiecewiseCdf: return piecewise_slope(x);
            case Kind::Deterministic:
                throw NotAbsolutelyContinuous("deterministic period has no density");
            case Kind::Mixture: {
                double s = 0.0;
                for (std::size_t k = 0; k < weights_.size(); ++k)
                    s += weights_[k] * (*components_)[k].density(x);
                return s;
            }
        }
        return 0.0;
    }

    bool has_atoms() const {
        if (kind_ == Kind::Deterministic) return true;
        if (kind_ == Kind::Mixture)
            for (const auto& c : *components_)
                if (c.has_atoms()) return true;
        return false;
    }

    /// Declared atoms as (location, mass) pairs.
    std::vector<std::pair<double, double>> atoms() const {
        std::vector<std::pair<double, double>> out;
        if (kind_ == Kind::Deterministic) out.emplace_back(t_i_, 1.0);
        if (kind_ == Kind::Mixture)
            for (std::size_t k = 0; k < weights_.size(); ++k)
                for (auto [loc, mass] : (*components_)[k].atoms())
                    out.emplace_back(loc, weights_[k] * mass);
        return out;
    }

    Hazard hazard(double x) const {
        if (x < 0.0) return {false, 0.0};
        double atom_mass = 0.0;
        for (auto [loc, mass] : atoms())
            if (loc == x) atom_mass += mass;
        if (atom_mass > 0.0) return {true, atom_mass / survival(x, true)};
        double sc = survival(x);
        if (sc <= 0.0) throw UndefinedHazard("survival vanished with no atom at x");
        return {false, ac_density(x) / sc};
    }

    /// Mean beta^{-1} = integral of F^c over [0, inf).
    double mean() const {
        switch (kind_) {
            case Kind::Exponential: return 1.0 / rate_;
            case Kind::Deterministic: return t_i_;
            case Kind::Gamma: return shape_ * scale_;
            case Kind::PiecewiseCdf: return integral_survival(knots_.back().first);
            case Kind::Mixture: {
                double s = 0.0;
                for (std::size_t k = 0; k < weights_.size(); ++k)
                    s += weights_[k] * (*components_)[k].mean();
                return s;
            }
        }
        return 0.0;
    }

    /// Integral of F^c over [0, x] (closed form for every kind).
    double integral_survival(double x) const {
        if (x <= 0.0) return 0.0;
        switch (kind_) {
            case Kind::Exponential: return -std::expm1(-rate_ * x) / rate_;
            case Kind::Deterministic: return std::min(x, t_i_);
            case Kind::Gamma:
                // E[min(eta, x)]
                return shape_ * scale_ * boost::math::gamma_p(shape_ + 1.0, x / scale_) +
                       x * boost::math::gamma_q(shape_, x / scale_);
            case Kind::PiecewiseCdf: {
                // F^c piecewise linear: exact trapezoids knot by knot
                double acc = 0.0, prev_x = 0.0, prev_s = 1.0;
                for (const auto& [kx, kf] : knots_) {
                    double cx = std::min(kx, x);
                    if (cx > prev_x) {
                        double cs = survival(cx);
                        acc += 0.5 * (prev_s + cs) * (cx - prev_x);
                        prev_x = cx;
                        prev_s = cs;
                    }
                    if (kx >= x) break;
                }
                if (x > prev_x) acc += 0.5 * (prev_s + survival(x)) * (x - prev_x);
                return acc;
            }
            case Kind::Mixture: {
                double s = 0.0;
                for (std::size_t k = 0; k < weights_.size(); ++k)
                    s += weights_[k] * (*components_)[k].integral_survival(x);
                return s;
            }
        }
        return 0.0;
    }

    /// F_e(x) = beta * integral of F^c over [0, x].
    double equilibrium_cdf(double x) const {
        double m = mean();
        if (!(m > 0.0) || !std::isfinite(m)) throw InfiniteMean("mean period not in (0, inf)");
        if (x <= 0.0) return 0.0;
        return std::min(1.0, integral_survival(x) / m);
    }

    /// sup of the support of F (inf for unbounded kinds).
    double support_upper() const {
        switch (kind_) {
            case Kind::Exponential:
            case Kind::Gamma: return kInf;
            case Kind::Deterministic: return t_i_;
            case Kind::PiecewiseCdf: return knots_.back().first;
            case Kind::Mixture: {
                double s = 0.0;
                for (const auto& c : *components_) s = std::max(s, c.support_upper());
                return s;
            }
        }
        return kInf;
    }

    /// P(eta - age > t | eta > age) = F^c(t + age) / F^c(age), with the zero
    /// convention on a vanishing denominator. Ages strictly beyond the support
    /// leave no conditional law at all.
    double conditional_remaining_survival(double age, double t) const {
        if (age > support_upper()) throw DegenerateAge("age beyond the support of F");
        if (t < 0.0) return 1.0;
        return zero_div(survival(age + t), survival(age));
    }

    /// Generalized inverse of F (left-continuous quantile). Not defined for
    /// mixtures; sampling handles those by component selection.
    double quantile(double p) const {
        p = std::clamp(p, 0.0, 1.0);
        switch (kind_) {
            case Kind::Exponential:
                if (p >= 1.0) p = std::nextafter(1.0, 0.0);
                return -std::log1p(-p) / rate_;
            case Kind::Deterministic: return p > 0.0 ? t_i_ : 0.0;
            case Kind::Gamma:
                if (p >= 1.0) p = std::nextafter(1.0, 0.0);
                return scale_ * boost::math::gamma_p_inv(shape_, p);
            case Kind::PiecewiseCdf: {
                if (p <= knots_.front().second) return knots_.front().first;
                for (std::size_t i = 1; i < knots_.size(); ++i) {
                    if (p <= knots_[i].second) {
                        double f0 = knots_[i - 1].second, f1 = knots_[i].second;
                        double x0 = knots_[i - 1].first, x1 = knots_[i].first;
                        if (f1 == f0) return x0;
                        return x0 + (x1 - x0) * (p - f0) / (f1 - f0);
                    }
                }
                return knots_.back().first;
            }
            case Kind::Mixture:
                throw ConfigInvalid("quantile undefined for mixtures");
        }
        return 0.0;
    }

    double sample(Rng& rng) const {
        if (kind_ == Kind::Mixture) {
            double u = rng.uniform(), acc = 0.0;
            for (std::size_t k = 0; k < weights_.size(); ++k) {
                acc += weights_[k];
                if (u < acc || k + 1 == weights_.size()) return (*components_)[k].sample(rng);
            }
        }
        return quantile(rng.uniform_pos());
    }

    /// Inverse transform on the conditional survival given current age.
    double sample_remaining(double age, Rng& rng) const {
        if (age <= 0.0) return sample(rng);
        double sc_age = survival(age);
        if (!(sc_age > 0.0)) throw DegenerateAge("conditioning on a zero-probability age");
        if (kind_ == Kind::Mixture) {
            // posterior over components given eta > age, then recurse
            double u = rng.uniform() * sc_age, acc = 0.0;
            for (std::size_t k = 0; k < weights_.size(); ++k) {
                acc += weights_[k] * (*components_)[k].survival(age);
                if (u < acc || k + 1 == weights_.size())
                    return (*components_)[k].sample_remaining(age, rng);
            }
        }
        double s = rng.uniform_pos();  // target conditional survival in (0, 1]
        double total = quantile(1.0 - s * sc_age);
        return std::max(0.0, total - age);
    }

    /// E[g(eta)]: atom masses plus quadrature against the density of the
    /// absolutely continuous part. Unbounded supports are cut at the
    /// 1 - 1e-12 quantile.
    template <class F>
    double expect(F&& g) const {
        switch (kind_) {
            case Kind::Deterministic: return g(t_i_);
            case Kind::Mixture: {
                double s = 0.0;
                for (std::size_t k = 0; k < weights_.size(); ++k)
                    s += weights_[k] * (*components_)[k].expect(g);
                return s;
            }
            default: {
                double hi = support_upper();
                if (!std::isfinite(hi)) hi = quantile(1.0 - 1e-12);
                return adaptive_simpson([&](double x) { return g(x) * density(x); }, 0.0, hi,
                                        1e-11);
            }
        }
    }

private:
    explicit LifetimeDistribution(Kind k) : kind_(k) {}

    /// Density of the absolutely continuous part only; atoms contribute 0.
    double ac_density(double x) const {
        if (kind_ == Kind::Deterministic) return 0.0;
        if (kind_ == Kind::Mixture) {
            double s = 0.0;
            for (std::size_t k = 0; k < weights_.size(); ++k)
                s += weights_[k] * (*components_)[k].ac_density(x);
            return s;
        }
        return density(x);
    }

    double piecewise_F(double x) const {
        if (x <= knots_.front().first) return x < knots_.front().first ? 0.0 : knots_.front().second;
        if (x >= knots_.back().first) return 1.0;
        std::size_t lo = 0, hi = knots_.size() - 1;
        while (hi - lo > 1) {
            std::size_t mid = (lo + hi) / 2;
            (knots_[mid].first <= x ? lo : hi) = mid;
        }
        const auto& [x0, f0] = knots_[lo];
        const auto& [x1, f1] = knots_[hi];
        return f0 + (f1 - f0) * (x - x0) / (x1 - x0);
    }

    double piecewise_slope(double x) const {
        if (x < knots_.front().first || x >= knots_.back().first) return 0.0;
        for (std::size_t i = 1; i < knots_.size(); ++i)
            if (x < knots_[i].first)
                return (knots_[i].second - knots_[i - 1].second) /
                       (knots_[i].first - knots_[i - 1].first);
        return 0.0;
    }

    Kind kind_;
    double rate_ = 0.0, t_i_ = 0.0, shape_ = 0.0, scale_ = 0.0;
    std::vector<std::pair<double, double>> knots_;
    std::vector<double> weights_;
    std::shared_ptr<const std::vector<LifetimeDistribution>> components_;
};

}  // namespace epiv
