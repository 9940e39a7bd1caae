#pragma once

#include <cmath>

#include "epiv/common.hpp"
#include "epiv/infectivity.hpp"
#include "epiv/lifetime.hpp"
#include "epiv/limit_solver.hpp"

namespace epiv {

namespace detail {

/// Upper integration bound for the mean infectivity: smallest lattice point
/// where the period survival is negligible. The threshold sits above the
/// noise floor of quadrature-backed survival evaluations.
inline double infectivity_support_bound(const InfectivityLaw& law) {
    double hi = 1.0;
    while (law.eta_survival(hi) > 1e-9 && hi < 1e6) hi *= 2.0;
    return hi;
}

}  // namespace detail

/// Mean number of infections caused by one case in a fully susceptible
/// population: the integral of lambda_bar.
inline double r0(const InfectivityLaw& law) {
    double hi = detail::infectivity_support_bound(law);
    // dyadic panels so a narrow support inside a wide bound is never missed
    double total = 0.0, lo = 0.0, up = 1.0;
    while (lo < hi) {
        total += adaptive_simpson([&](double t) { return law.mean_infectivity(t); }, lo,
                                  std::min(up, hi), 1e-10);
        lo = up;
        up *= 2.0;
    }
    return total;
}

struct EquilibriumReport {
    double r0 = 0.0;
    double i_star = 0.0;  // endemic infected fraction, 0 when r0 <= 1
    double beta = 0.0;    // 1 / mean infectious period
    InfectivityLaw law = InfectivityLaw::separable(Curve::constant(0.0),
                                                   LifetimeDistribution::exponential(1.0));

    /// frakI*(x): infected-for-at-most-x mass at equilibrium, I* * F_e(x).
    double frak_star(double x) const {
        if (x <= 0.0) return 0.0;
        double integral = adaptive_simpson(
            [&](double y) { return law.eta_survival(y); }, 0.0,
            std::min(x, detail::infectivity_support_bound(law)), 1e-10);
        return i_star * beta * integral;
    }

    /// i*(x) = I* beta F^c(x): the equilibrium age density.
    double density_star(double x) const {
        return x < 0.0 ? 0.0 : i_star * beta * law.eta_survival(x);
    }
};

inline EquilibriumReport sis_equilibrium(const InfectivityLaw& law) {
    EquilibriumReport rep;
    rep.law = law;
    rep.r0 = r0(law);
    double mean = law.eta_mean();
    if (!(mean > 0.0) || !std::isfinite(mean))
        throw InfiniteMean("equilibrium needs a finite positive mean period");
    rep.beta = 1.0 / mean;
    rep.i_star = rep.r0 > 1.0 ? 1.0 - 1.0 / rep.r0 : 0.0;
    return rep;
}

struct EquilibriumComparison {
    double i_error = 0.0;        // |tail-averaged I_bar - I*|
    double density_error = 0.0;  // sup_x |i_bar(T, x) - i*(x)| off atoms
};

/// Distance between the long-horizon SIS solution and the equilibrium
/// formulas. Purely observational: convergence to the equilibrium is not
/// guaranteed, so this reports the measured distance and asserts nothing.
inline EquilibriumComparison verify_equilibrium(const EquilibriumReport& report,
                                                const LimitSolution& solution,
                                                double tail_fraction = 0.1) {
    if (solution.model != Model::SIS)
        throw ConfigInvalid("equilibrium comparison needs an SIS solution");
    double mean = 1.0 / report.beta;
    if (solution.times.back() < 10.0 * mean)
        throw HorizonTooShort("horizon shorter than 10 mean periods");

    std::size_t n = solution.steps();
    auto tail_start = static_cast<std::size_t>(static_cast<double>(n) * (1.0 - tail_fraction));
    double acc = 0.0;
    for (std::size_t i = tail_start; i < n; ++i) acc += solution.i_bar[i];
    EquilibriumComparison cmp;
    cmp.i_error = std::abs(acc / static_cast<double>(n - tail_start) - report.i_star);

    auto atoms = report.law.period_dist() ? report.law.period_dist()->atoms()
                                          : std::vector<std::pair<double, double>>{};
    double x_hi = detail::infectivity_support_bound(report.law);
    std::size_t last = n - 1;
    for (std::size_t j = 0; static_cast<double>(j) * solution.dt <= x_hi; ++j) {
        double x = static_cast<double>(j) * solution.dt;
        bool on_atom = false;
        for (const auto& [a, m] : atoms)
            if (std::abs(x - a) < solution.dt * 1.5) on_atom = true;
        if (on_atom) continue;
        double diff = std::abs(solution.density(last, x) - report.density_star(x));
        cmp.density_error = std::max(cmp.density_error, diff);
    }
    return cmp;
}

}  // namespace epiv
