#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <vector>

#include "epiv/abm.hpp"
#include "epiv/common.hpp"
#include "epiv/infectivity.hpp"
#include "epiv/lifetime.hpp"

namespace epiv {

enum class SolverMode { ForwardStep, Picard };

struct LimitConfig {
    InfectivityLaw law = InfectivityLaw::separable(Curve::constant(0.0),
                                                   LifetimeDistribution::exponential(1.0));
    Curve initial_density = Curve::constant(0.0);  // i_bar(0, .) on [0, x_bar]
    double x_bar = 0.0;
    double horizon = 0.0;
    double dt = 1e-3;
    SolverMode solver = SolverMode::ForwardStep;
    double step_tol = 1e-3;
    double picard_tol = 1e-8;
    int max_iter = 500;
    // Variant: initial remaining periods i.i.d. with this law, replacing the
    // conditional-on-age survival kernel for the initial cohort.
    std::optional<LifetimeDistribution> initial_remaining;

    void validate() const {
        if (!(dt > 0.0)) throw ConfigInvalid("dt must be > 0");
        if (!(horizon > 0.0)) throw ConfigInvalid("horizon must be > 0");
        if (x_bar < 0.0) throw ConfigInvalid("x_bar must be >= 0");
        if (initial_remaining && !law.is_separable())
            throw ConfigInvalid("i.i.d. initial remaining periods need a separable law");
    }
};

class LimitSolution {
public:
    Model model = Model::SIR;
    std::vector<double> times;
    std::vector<double> s_bar, i_bar, r_bar, curly_i, upsilon, cum_upsilon;
    double dt = 0.0;
    double x_bar = 0.0;
    double initial_mass = 0.0;  // I_bar(0)

    std::size_t steps() const { return times.size(); }

    /// frakI_bar(t_i, x): limiting fraction infected at time t_i with infection
    /// age <= x. x is snapped to the shared lattice.
    double frak(std::size_t ti, double x) const {
        auto j = static_cast<std::size_t>(std::llround(std::max(0.0, x) / dt));
        double acc = 0.0;
        if (j > ti) {
            // surviving initial cohort with age at 0 up to min(x_bar, x - t)
            std::size_t kmax = std::min(m_, j - ti);
            std::vector<double> v(kmax + 1);
            for (std::size_t k = 0; k <= kmax; ++k)
                v[k] = init_ratio(k, ti) * i0_[k];
            acc += trapezoid(v, dt);
        }
        std::size_t lo = ti > j ? ti - j : 0;
        std::vector<double> w(ti - lo + 1);
        for (std::size_t s = lo; s <= ti; ++s) w[s - lo] = fc_[ti - s] * upsilon[s];
        acc += trapezoid(w, dt);
        return acc;
    }

    /// i_bar(t_i, x): density of frak in x via the characteristics formulas.
    /// On the lattice diagonal x == t the boundary branch is used.
    double density(std::size_t ti, double x) const {
        auto j = static_cast<std::size_t>(std::llround(std::max(0.0, x) / dt));
        if (j <= ti) return fc_[j] * upsilon[ti - j];
        std::size_t k = j - ti;
        if (k > m_) return 0.0;
        return init_ratio(k, ti) * i0_[k];
    }

    double eta_survival_grid(std::size_t j) const { return fc_[j]; }

    /// frak at one time for many ascending x values, sharing the suffix sums
    /// so the whole profile costs O(t/dt + x_bar/dt) instead of per-point work.
    std::vector<double> frak_profile(std::size_t ti, const std::vector<double>& xs) const {
        // suffix[s] = sum_{u=s}^{ti} F^c(t-u) Upsilon(u)
        std::vector<double> suffix(ti + 2, 0.0), integrand(ti + 1);
        for (std::size_t u = 0; u <= ti; ++u) integrand[u] = fc_[ti - u] * upsilon[u];
        for (std::size_t u = ti + 1; u-- > 0;) suffix[u] = suffix[u + 1] + integrand[u];
        // prefix over initial ages of the surviving cohort density
        std::vector<double> init(m_ + 1), prefix(m_ + 2, 0.0);
        for (std::size_t k = 0; k <= m_; ++k) init[k] = init_ratio(k, ti) * i0_[k];
        for (std::size_t k = 0; k <= m_; ++k) prefix[k + 1] = prefix[k] + init[k];

        std::vector<double> out(xs.size());
        for (std::size_t q = 0; q < xs.size(); ++q) {
            auto j = static_cast<std::size_t>(std::llround(std::max(0.0, xs[q]) / dt));
            double acc = 0.0;
            if (j > ti) {
                std::size_t kmax = std::min(m_, j - ti);
                if (kmax > 0)
                    acc += dt * (prefix[kmax + 1] - 0.5 * init[0] - 0.5 * init[kmax]);
            }
            std::size_t lo = ti > j ? ti - j : 0;
            if (ti > lo)
                acc += dt * (suffix[lo] - 0.5 * integrand[lo] - 0.5 * integrand[ti]);
            out[q] = acc;
        }
        return out;
    }

private:
    friend LimitSolution solve_limit(const LimitConfig&, Model);

    // F^c(age + t) / F^c(age) on lattice indices, or F0^c(t) for the i.i.d.
    // initial-remaining variant.
    double init_ratio(std::size_t age_idx, std::size_t t_idx) const {
        if (!f0_surv_.empty()) return f0_surv_[t_idx];
        return zero_div(fc_[age_idx + t_idx], fc_[age_idx]);
    }

    std::size_t m_ = 0;            // x_bar / dt
    std::vector<double> fc_;       // F^c of eta on the lattice, length steps + m + 1
    std::vector<double> i0_;       // initial density on the x lattice, 0..m
    std::vector<double> f0_surv_;  // F0^c on the t lattice when the variant is on
};

namespace detail {

struct LimitKernels {
    std::size_t nt = 0, m = 0;
    std::vector<double> lam;      // lambda_bar on the lattice, 0 .. nt-1+m
    std::vector<double> fc;       // eta survival, same length
    std::vector<double> i0;       // initial density, 0..m
    std::vector<double> force0;   // initial-cohort infectivity forcing, 0..nt-1
    std::vector<double> decay0;   // initial-cohort surviving mass, 0..nt-1
    std::vector<double> f0_surv;  // only for the i.i.d.-remaining variant
    double initial_mass = 0.0;
    std::size_t lam_cut = 0, fc_cut = 0;
};

inline LimitKernels build_kernels(const LimitConfig& c) {
    LimitKernels k;
    k.nt = static_cast<std::size_t>(std::llround(c.horizon / c.dt)) + 1;
    k.m = static_cast<std::size_t>(std::llround(c.x_bar / c.dt));
    std::size_t ext = k.nt + k.m;
    k.lam.resize(ext);
    k.fc.resize(ext);
    for (std::size_t j = 0; j < ext; ++j) {
        double x = static_cast<double>(j) * c.dt;
        k.lam[j] = c.law.mean_infectivity(x);
        k.fc[j] = c.law.eta_survival(x);
    }
    k.i0.resize(k.m + 1, 0.0);
    for (std::size_t j = 0; j <= k.m; ++j)
        k.i0[j] = c.initial_density(static_cast<double>(j) * c.dt);
    k.initial_mass = trapezoid(k.i0, c.dt);

    double lam_max = *std::max_element(k.lam.begin(), k.lam.end());
    k.lam_cut = ext;
    for (std::size_t j = ext; j-- > 0;)
        if (k.lam[j] > 1e-15 * lam_max) {
            k.lam_cut = j + 1;
            break;
        }
    k.fc_cut = ext;
    for (std::size_t j = ext; j-- > 0;)
        if (k.fc[j] > 1e-15) {
            k.fc_cut = j + 1;
            break;
        }

    // forcing by the initial cohort: integral over initial ages y of
    // E[lambda(y + t) | eta > y] i0(y) dy, one correlation pass
    k.force0.assign(k.nt, 0.0);
    k.decay0.assign(k.nt, 0.0);
    if (c.initial_remaining) {
        k.f0_surv.resize(k.nt);
        std::vector<double> lt(k.m + 1);
        const Curve& tilde = c.law.lambda_tilde();
        for (std::size_t i = 0; i < k.nt; ++i) {
            double t = static_cast<double>(i) * c.dt;
            k.f0_surv[i] = c.initial_remaining->survival(t);
            for (std::size_t j = 0; j <= k.m; ++j)
                lt[j] = tilde(static_cast<double>(j) * c.dt + t) * k.i0[j];
            k.force0[i] = k.f0_surv[i] * trapezoid(lt, c.dt);
            k.decay0[i] = k.f0_surv[i] * k.initial_mass;
        }
    } else {
        std::vector<double> gl(k.m + 1), gf(k.m + 1), row(k.m + 1);
        for (std::size_t j = 0; j <= k.m; ++j) {
            gl[j] = zero_div(k.i0[j], k.fc[j]);
            gf[j] = gl[j];
        }
        for (std::size_t i = 0; i < k.nt; ++i) {
            for (std::size_t j = 0; j <= k.m; ++j) row[j] = k.lam[i + j] * gl[j];
            k.force0[i] = trapezoid(row, c.dt);
            for (std::size_t j = 0; j <= k.m; ++j) row[j] = k.fc[i + j] * gf[j];
            k.decay0[i] = trapezoid(row, c.dt);
        }
    }
    return k;
}

/// trapezoid convolution tail sum_{s=lo}^{i-1} w_s ker[i-s] u[s], with the
/// endpoint half-weight at s = 0 and the kernel truncated at `cut`.
inline double conv_tail(const std::vector<double>& ker, const std::vector<double>& u,
                        std::size_t i, std::size_t cut, double dt) {
    if (i == 0) return 0.0;
    std::size_t lo = i > cut ? i - cut : 0;
    double acc = 0.0;
    for (std::size_t s = lo; s < i; ++s) acc += ker[i - s] * u[s];
    if (lo == 0) acc -= 0.5 * ker[i] * u[0];
    return acc * dt;
}

}  // namespace detail

/// Causal time-stepping (or full Picard) for the limiting force of infection
/// Upsilon_bar, then reconstruction of all series. Shared by the SIR and SIS
/// systems; they differ only in how S_bar is expressed.
inline LimitSolution solve_limit(const LimitConfig& c, Model model) {
    c.validate();
    detail::LimitKernels k = detail::build_kernels(c);
    const double dt = c.dt;
    const std::size_t nt = k.nt;
    const double i0_mass = k.initial_mass;
    if (!(i0_mass >= 0.0) || i0_mass >= 1.0)
        throw ConfigInvalid("initial infected mass must lie in [0, 1)");
    const double s0 = 1.0 - i0_mass;

    std::vector<double> ups(nt, 0.0), cum(nt, 0.0), ibar(nt, 0.0);
    const double lam0 = k.lam[0], fc0 = k.fc[0];

    if (c.solver == SolverMode::ForwardStep) {
        ups[0] = s0 * k.force0[0];
        ibar[0] = i0_mass;
        double max_disc = 0.0;
        for (std::size_t i = 1; i < nt; ++i) {
            double curly_tail = k.force0[i] + detail::conv_tail(k.lam, ups, i, k.lam_cut, dt);
            double s_tail, s_slope;
            if (model == Model::SIR) {
                s_tail = s0 - cum[i - 1] - 0.5 * dt * ups[i - 1];
                s_slope = 0.5 * dt;
            } else {
                double ib_tail =
                    k.decay0[i] + detail::conv_tail(k.fc, ups, i, k.fc_cut, dt);
                s_tail = 1.0 - ib_tail;
                s_slope = 0.5 * dt * fc0;
            }
            auto step = [&](double g) {
                return (s_tail - s_slope * g) * (curly_tail + 0.5 * dt * lam0 * g);
            };
            double pred = step(ups[i - 1]);
            double corr = step(pred);
            max_disc = std::max(max_disc, std::abs(corr - pred));
            ups[i] = corr;
            cum[i] = cum[i - 1] + 0.5 * dt * (ups[i - 1] + ups[i]);
            if (model == Model::SIS)
                ibar[i] = k.decay0[i] + detail::conv_tail(k.fc, ups, i, k.fc_cut, dt) +
                          0.5 * dt * fc0 * ups[i];
        }
        if (max_disc > 10.0 * c.step_tol)
            throw StepTooCoarse("predictor-corrector disagreement " +
                                std::to_string(max_disc) + " exceeds 10 * step_tol");
    } else {
        std::vector<double> next(nt, 0.0);
        bool converged = false;
        for (int it = 0; it < c.max_iter; ++it) {
            double run = 0.0, prev = ups[0], delta = 0.0;
            for (std::size_t i = 0; i < nt; ++i) {
                double curly = k.force0[i] + detail::conv_tail(k.lam, ups, i, k.lam_cut, dt) +
                               (i > 0 ? 0.5 * dt * lam0 * ups[i] : 0.0);
                double s;
                if (model == Model::SIR) {
                    if (i > 0) run += 0.5 * dt * (prev + ups[i]);
                    s = s0 - run;
                } else {
                    double ib = k.decay0[i] + detail::conv_tail(k.fc, ups, i, k.fc_cut, dt) +
                                (i > 0 ? 0.5 * dt * fc0 * ups[i] : 0.0);
                    s = 1.0 - ib;
                }
                prev = ups[i];
                // the solution satisfies 0 <= Upsilon <= lambda_star; clamping
                // keeps stray iterates inside the contraction region
                next[i] = std::clamp(s * curly, 0.0, c.law.lambda_star());
                delta = std::max(delta, std::abs(next[i] - ups[i]));
            }
            ups.swap(next);
            if (delta < c.picard_tol) {
                converged = true;
                break;
            }
        }
        if (!converged) throw NonConvergent("Picard iteration did not reach tolerance");
        for (std::size_t i = 1; i < nt; ++i)
            cum[i] = cum[i - 1] + 0.5 * dt * (ups[i - 1] + ups[i]);
    }

    // I_bar(t) = surviving initial cohort + infections whose period outlasts t
    for (std::size_t i = 0; i < nt; ++i)
        ibar[i] = k.decay0[i] + detail::conv_tail(k.fc, ups, i, k.fc_cut, dt) +
                  (i > 0 ? 0.5 * dt * fc0 * ups[i] : 0.0);

    LimitSolution sol;
    sol.model = model;
    sol.dt = dt;
    sol.x_bar = c.x_bar;
    sol.initial_mass = i0_mass;
    sol.times.resize(nt);
    sol.s_bar.resize(nt);
    sol.i_bar.resize(nt);
    sol.r_bar.resize(nt);
    sol.curly_i.resize(nt);
    sol.upsilon = ups;
    sol.cum_upsilon = cum;
    for (std::size_t i = 0; i < nt; ++i) {
        sol.times[i] = static_cast<double>(i) * dt;
        sol.i_bar[i] = ibar[i];
        if (model == Model::SIR) {
            sol.s_bar[i] = s0 - cum[i];
            // recovered mass balances exactly: everyone infected minus still infected
            sol.r_bar[i] = i0_mass + cum[i] - ibar[i];
        } else {
            sol.s_bar[i] = 1.0 - ibar[i];
            sol.r_bar[i] = 0.0;
        }
        sol.curly_i[i] = zero_div(ups[i], sol.s_bar[i]);
    }
    sol.m_ = k.m;
    sol.fc_ = std::move(k.fc);
    sol.i0_ = std::move(k.i0);
    sol.f0_surv_ = std::move(k.f0_surv);
    return sol;
}

inline LimitSolution solve_sir(const LimitConfig& c) { return solve_limit(c, Model::SIR); }
inline LimitSolution solve_sis(const LimitConfig& c) { return solve_limit(c, Model::SIS); }

/// The boundary integral equation for i_bar(t, 0) solved by Picard iteration
/// from a constant initial guess; must coincide with Upsilon_bar of solve_sir.
inline std::vector<double> solve_boundary(const LimitConfig& c, double initial_guess = 0.0) {
    c.validate();
    detail::LimitKernels k = detail::build_kernels(c);
    const double dt = c.dt;
    const std::size_t nt = k.nt;
    const double s0 = 1.0 - k.initial_mass;
    const double lam0 = k.lam[0];

    std::vector<double> u(nt, initial_guess), next(nt, 0.0);
    for (int it = 0; it < c.max_iter; ++it) {
        double run = 0.0, prev = u[0], delta = 0.0;
        for (std::size_t i = 0; i < nt; ++i) {
            if (i > 0) run += 0.5 * dt * (prev + u[i]);
            prev = u[i];
            double curly = k.force0[i] + detail::conv_tail(k.lam, u, i, k.lam_cut, dt) +
                           (i > 0 ? 0.5 * dt * lam0 * u[i] : 0.0);
            next[i] = std::clamp((s0 - run) * curly, 0.0, c.law.lambda_star());
            delta = std::max(delta, std::abs(next[i] - u[i]));
        }
        u.swap(next);
        if (delta < c.picard_tol) return u;
    }
    throw NonConvergent("boundary Picard iteration did not reach tolerance");
}

struct FinalSize {
    double phi = 0.0;        // total fraction ever infected after time 0
    double tail_bound = 0.0; // crude remaining-mass indicator
};

/// Integral of the boundary series; requires the epidemic to be effectively
/// over at the horizon.
inline FinalSize final_size(const LimitSolution& sol, double cutoff = 1e-6) {
    if (sol.model != Model::SIR) throw ConfigInvalid("final size is an SIR quantity");
    if (sol.upsilon.back() > cutoff)
        throw HorizonTooShort("force of infection still above the cutoff at the horizon");
    FinalSize f;
    f.phi = trapezoid(sol.upsilon, sol.dt);
    f.tail_bound = sol.upsilon.back() * sol.times.back();
    return f;
}

}  // namespace epiv
