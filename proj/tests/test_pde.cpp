#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "epiv/pde.hpp"
#include "oracles.hpp"

using namespace epiv;

namespace {

LimitConfig gamma_config(double horizon, double dt) {
    LimitConfig c;
    c.law = InfectivityLaw::separable(Curve::constant(1.5),
                                      LifetimeDistribution::gamma(2.0, 1.0));
    c.initial_density = Curve::constant(0.05);
    c.x_bar = 1.0;
    c.horizon = horizon;
    c.dt = dt;
    return c;
}

DensityGrid grid_for(const LimitConfig& c, const LimitSolution& sol) {
    auto nx = static_cast<std::size_t>(std::llround((c.x_bar + c.horizon) / c.dt)) + 1;
    const auto& period = *c.law.period_dist();
    return density_from_boundary(sol.upsilon, c.initial_density, c.x_bar, period, c.dt, nx,
                                 period.has_atoms());
}

}  // namespace

TEST_CASE("density grid direct substitutions") {
    auto expo = LifetimeDistribution::exponential(0.7);
    std::vector<double> boundary(101, 0.4);

    SUBCASE("no initial mass: pure boundary transport") {
        auto g = density_from_boundary(boundary, Curve::constant(0.0), 0.0, expo, 0.05, 60);
        for (std::size_t i = 0; i < g.nt; ++i)
            for (std::size_t j = 0; j < g.nx; ++j) {
                double expected = j <= i ? 0.4 * std::exp(-0.7 * g.x_of(j)) : 0.0;
                CHECK(g.at(i, j) == doctest::Approx(expected).epsilon(1e-12));
            }
    }

    SUBCASE("no boundary: initial slice decays along characteristics") {
        // dyadic step keeps the x - t <= x_bar comparison exact
        std::vector<double> zero(101, 0.0);
        auto g = density_from_boundary(zero, Curve::constant(0.2), 1.0, expo, 0.0625, 60);
        for (std::size_t i = 0; i < g.nt; ++i)
            for (std::size_t j = 0; j < g.nx; ++j) {
                double x = g.x_of(j), t = g.t_of(i);
                double expected = j > i && x - t <= 1.0
                                      ? 0.2 * expo.survival(x) / expo.survival(x - t)
                                      : 0.0;
                CHECK(g.at(i, j) == doctest::Approx(expected).epsilon(1e-12));
            }
    }

    SUBCASE("deterministic periods vanish at and beyond the support") {
        auto det = LifetimeDistribution::deterministic(2.0);
        auto g = density_from_boundary(boundary, Curve::constant(0.2), 1.0, det, 0.05, 80,
                                       true);
        for (std::size_t i = 0; i < g.nt; ++i)
            for (std::size_t j = 0; j < g.nx; ++j)
                if (g.x_of(j) >= 2.0) CHECK(g.at(i, j) == 0.0);
        // below the support nothing decays
        CHECK(g.at(40, 10) == doctest::Approx(0.4));
    }
}

TEST_CASE("semigroup along characteristics") {
    auto c = gamma_config(3.0, 5e-3);
    auto sol = solve_sir(c);
    auto g = grid_for(c, sol);
    const auto& period = *c.law.period_dist();
    for (std::size_t i : {100ul, 301ul, 477ul})
        for (std::size_t j : {3ul, 57ul, 200ul}) {
            std::size_t u = 40;
            if (i + u >= g.nt || j + u >= g.nx) continue;
            double lhs = g.at(i + u, j + u);
            double factor = zero_div(period.survival(g.x_of(j + u)),
                                     period.survival(g.x_of(j)));
            CHECK(lhs == doctest::Approx(factor * g.at(i, j)).epsilon(1e-10));
        }
}

TEST_CASE("transport residual") {
    SUBCASE("exact construction leaves only hazard interpolation error") {
        for (double dt : {2e-2, 1e-2}) {
            auto c = gamma_config(3.0, dt);
            auto sol = solve_sir(c);
            auto g = grid_for(c, sol);
            auto rep = transport_residual(g);
            // hazard of Gamma(2,1) has slope < 1 and the density is < lambda*
            CHECK(rep.max_residual < 2.0 * c.law.lambda_star() * dt);
        }
    }

    SUBCASE("zero hazard transports constants exactly") {
        // uniform-on-[0,100] periods look hazard-free at small ages
        auto nearly_flat = LifetimeDistribution::piecewise_cdf({{0.0, 0.0}, {100.0, 1.0}});
        std::vector<double> boundary(41, 1.0);
        auto g = density_from_boundary(boundary, Curve::constant(0.0), 0.0, nearly_flat,
                                       0.05, 40);
        auto rep = transport_residual(g);
        CHECK(rep.max_residual < 2e-2);  // only the 1/(100 - x) hazard remains
    }

    SUBCASE("a perturbed interior point is detected at 1/dt scale") {
        auto c = gamma_config(2.0, 1e-2);
        auto sol = solve_sir(c);
        auto g = grid_for(c, sol);
        auto clean = transport_residual(g);
        g.at(100, 50) += 0.1;
        auto dirty = transport_residual(g);
        CHECK(dirty.max_residual > 0.1 / g.dt * 0.9);
        CHECK(dirty.max_residual > 10.0 * clean.max_residual);
    }

    SUBCASE("atomic laws are rejected") {
        auto det = LifetimeDistribution::deterministic(2.0);
        std::vector<double> boundary(11, 0.1);
        auto g = density_from_boundary(boundary, Curve::constant(0.0), 0.0, det, 0.1, 30,
                                       true);
        CHECK_THROWS_AS((void)transport_residual(g), NotAbsolutelyContinuous);
    }
}

TEST_CASE("boundary condition") {
    SUBCASE("all-zero grid") {
        auto expo = LifetimeDistribution::exponential(1.0);
        std::vector<double> zero(21, 0.0);
        auto g = density_from_boundary(zero, Curve::constant(0.0), 0.0, expo, 0.1, 30);
        auto law = InfectivityLaw::separable(Curve::constant(1.0), expo);
        CHECK(boundary_condition_check(g, std::vector<double>(21, 0.9), law) == 0.0);
    }

    SUBCASE("solver output satisfies the condition at O(dt)") {
        auto c = gamma_config(4.0, 5e-3);
        auto sol = solve_sir(c);
        auto g = grid_for(c, sol);
        CHECK(boundary_condition_check(g, sol.s_bar, c.law) < 10.0 * c.dt);
    }

    SUBCASE("zero susceptibles exposes the full boundary") {
        auto c = gamma_config(2.0, 1e-2);
        auto sol = solve_sir(c);
        auto g = grid_for(c, sol);
        double max_boundary = 0.0;
        for (double b : g.boundary) max_boundary = std::max(max_boundary, b);
        double viol =
            boundary_condition_check(g, std::vector<double>(g.nt, 0.0), c.law);
        CHECK(viol == doctest::Approx(max_boundary).epsilon(1e-12));
    }

    SUBCASE("violation halves with the step") {
        auto v = [](double dt) {
            auto c = gamma_config(2.0, dt);
            auto sol = solve_sir(c);
            auto g = grid_for(c, sol);
            return boundary_condition_check(g, sol.s_bar, c.law);
        };
        CHECK(v(2e-2) / v(1e-2) > 1.5);
    }
}

TEST_CASE("aggregate infectivity from the density") {
    SUBCASE("zero grid") {
        auto expo = LifetimeDistribution::exponential(1.0);
        std::vector<double> zero(11, 0.0);
        auto g = density_from_boundary(zero, Curve::constant(0.0), 0.0, expo, 0.1, 20);
        auto law = InfectivityLaw::separable(Curve::constant(1.0), expo);
        for (double v : aggregate_from_density(g, law)) CHECK(v == 0.0);
    }

    SUBCASE("matches the Volterra series") {
        auto c = gamma_config(4.0, 5e-3);
        auto sol = solve_sir(c);
        auto g = grid_for(c, sol);
        auto agg = aggregate_from_density(g, c.law);
        double worst = 0.0;
        for (std::size_t i = 0; i < g.nt; ++i)
            worst = std::max(worst, std::abs(agg[i] - sol.curly_i[i]));
        CHECK(worst < 10.0 * c.dt);
    }
}

TEST_CASE("jump consistency at atoms") {
    SUBCASE("deterministic periods") {
        auto c = gamma_config(4.0, 1e-2);
        c.law = InfectivityLaw::separable(Curve::constant(1.5),
                                          LifetimeDistribution::deterministic(2.0));
        auto sol = solve_sir(c);
        auto g = grid_for(c, sol);
        auto rep = jump_consistency(g);
        CHECK(rep.zero_beyond_support);
        CHECK(rep.max_deviation < 1e-12);
    }

    SUBCASE("interior atom of a mixture") {
        auto mix = LifetimeDistribution::mixture({0.5, 0.5},
                                                 {LifetimeDistribution::deterministic(1.0),
                                                  LifetimeDistribution::exponential(0.5)});
        std::vector<double> boundary(301, 1.0);  // data identically 1
        auto g = density_from_boundary(boundary, Curve::constant(0.0), 0.0, mix, 1e-2, 301,
                                       true);
        auto rep = jump_consistency(g);
        // drop factor across x=1 equals the survival ratio there
        CHECK(rep.max_deviation < 1e-2);
        CHECK(rep.zero_beyond_support);
        double expect = mix.survival(1.0) / mix.survival(1.0 - 1e-2);
        auto i = g.nt - 1;
        CHECK(g.at(i, 100) / g.at(i, 99) == doctest::Approx(expect).epsilon(1e-9));
    }

    SUBCASE("absolutely continuous laws are rejected") {
        auto expo = LifetimeDistribution::exponential(1.0);
        std::vector<double> b(11, 0.1);
        auto g = density_from_boundary(b, Curve::constant(0.0), 0.0, expo, 0.1, 20);
        CHECK_THROWS_AS((void)jump_consistency(g), NoAtoms);
    }
}

TEST_CASE("reconstruction matches the Volterra age mass") {
    auto c = gamma_config(3.0, 5e-3);
    auto sol = solve_sir(c);
    auto g = grid_for(c, sol);
    for (std::size_t i : {0ul, 200ul, 600ul}) {
        for (double x : {0.5, 1.5, 3.5}) {
            auto jx = static_cast<std::size_t>(std::llround(x / c.dt));
            // trapezoid of the density row up to x
            std::vector<double> row(jx + 1);
            for (std::size_t j = 0; j <= jx; ++j) row[j] = g.at(i, j);
            double mass = trapezoid(row, c.dt);
            CHECK(mass == doctest::Approx(sol.frak(i, x)).epsilon(1e-2).scale(0.01));
        }
    }
}
