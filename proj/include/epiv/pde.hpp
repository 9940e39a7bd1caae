#pragma once

#include <cstddef>
#include <vector>

#include "epiv/common.hpp"
#include "epiv/infectivity.hpp"
#include "epiv/lifetime.hpp"
#include "epiv/limit_solver.hpp"

namespace epiv {

/// Density i_bar(t, x) on an aligned (t, x) lattice with shared step dt,
/// filled exactly by the characteristics formulas (no stepping error).
struct DensityGrid {
    double dt = 0.0;
    std::size_t nt = 0, nx = 0;
    std::vector<double> values;    // row-major, nt rows of nx
    std::vector<double> boundary;  // i_bar(t, 0), length nt
    LifetimeDistribution dist = LifetimeDistribution::exponential(1.0);
    bool general_measure = false;

    double at(std::size_t i, std::size_t j) const { return values[i * nx + j]; }
    double& at(std::size_t i, std::size_t j) { return values[i * nx + j]; }
    double t_of(std::size_t i) const { return static_cast<double>(i) * dt; }
    double x_of(std::size_t j) const { return static_cast<double>(j) * dt; }
};

/// Fill the lattice from boundary and initial data:
///   x <  t : i_bar(t, x) = F^c(x) i_bar(t - x, 0)
///   x >= t : i_bar(t, x) = F^c(x) / F^c(x - t) * i_bar(0, x - t)
/// (the lattice diagonal x == t takes the boundary branch). With the
/// general-measure flag the denominator uses the left-continuous survival
/// G^c(x - t), so distributions with atoms are handled; the numerator stays
/// right-continuous, which makes the density vanish at and beyond an
/// exhausted support (deterministic periods give exactly 0 for x >= t_i).
inline DensityGrid density_from_boundary(const std::vector<double>& boundary,
                                         const Curve& initial_density, double x_bar,
                                         const LifetimeDistribution& dist, double dt,
                                         std::size_t nx, bool general_measure = false) {
    if (boundary.empty()) throw ConfigInvalid("boundary series is empty");
    DensityGrid g;
    g.dt = dt;
    g.nt = boundary.size();
    g.nx = nx;
    g.boundary = boundary;
    g.dist = dist;
    g.general_measure = general_measure;
    g.values.assign(g.nt * nx, 0.0);

    std::vector<double> fc(nx), gc(nx), i0(nx);
    for (std::size_t j = 0; j < nx; ++j) {
        double x = static_cast<double>(j) * dt;
        fc[j] = dist.survival(x);
        gc[j] = general_measure ? dist.survival(x, true) : fc[j];
        i0[j] = x <= x_bar ? initial_density(x) : 0.0;
    }
    for (std::size_t i = 0; i < g.nt; ++i)
        for (std::size_t j = 0; j < nx; ++j) {
            if (j <= i)
                g.at(i, j) = fc[j] * boundary[i - j];
            else
                g.at(i, j) = zero_div(fc[j] * i0[j - i], gc[j - i]);
        }
    return g;
}

struct ResidualReport {
    double max_residual = 0.0;
    std::size_t at_t = 0, at_x = 0;
};

/// Directional derivative along characteristics plus the hazard sink:
///   (i(t+dt, x+dt) - i(t, x)) / dt + mu(x_mid) * i_mid
/// evaluated at interior lattice points; the exact construction leaves only
/// the O(dt) hazard-interpolation error.
inline ResidualReport transport_residual(const DensityGrid& g) {
    if (g.dist.has_atoms())
        throw NotAbsolutelyContinuous("transport residual needs a density hazard");
    ResidualReport rep;
    for (std::size_t i = 0; i + 1 < g.nt; ++i)
        for (std::size_t j = 0; j + 1 < g.nx; ++j) {
            double a = g.at(i, j), b = g.at(i + 1, j + 1);
            if (a == 0.0 && b == 0.0) continue;
            double x_mid = (static_cast<double>(j) + 0.5) * g.dt;
            double mu;
            try {
                mu = g.dist.hazard(x_mid).value;
            } catch (const UndefinedHazard&) {
                continue;
            }
            double r = std::abs((b - a) / g.dt + mu * 0.5 * (a + b));
            if (r > rep.max_residual) {
                rep.max_residual = r;
                rep.at_t = i;
                rep.at_x = j;
            }
        }
    return rep;
}

/// Max over the time lattice of | i_bar(t,0) - S_bar(t) * integral of
/// kernel(x) i_bar(t,x) dx | with the age-conditional kernel
/// lambda_bar(x) / F^c(x), which is lambda_tilde(x) for separable laws.
inline double boundary_condition_check(const DensityGrid& g, const std::vector<double>& s_bar,
                                       const InfectivityLaw& law) {
    if (s_bar.size() != g.nt) throw ConfigInvalid("S_bar and grid lattices differ");
    std::vector<double> kernel(g.nx);
    for (std::size_t j = 0; j < g.nx; ++j) {
        double x = static_cast<double>(j) * g.dt;
        if (law.is_separable())
            kernel[j] = law.lambda_tilde()(x);
        else
            kernel[j] = zero_div(law.mean_infectivity(x), law.eta_survival(x));
    }
    double worst = 0.0;
    std::vector<double> row(g.nx);
    for (std::size_t i = 0; i < g.nt; ++i) {
        for (std::size_t j = 0; j < g.nx; ++j) row[j] = kernel[j] * g.at(i, j);
        double rhs = s_bar[i] * trapezoid(row, g.dt);
        worst = std::max(worst, std::abs(g.boundary[i] - rhs));
    }
    return worst;
}

/// curlyI_bar(t) recovered from the density with the same age-conditional
/// kernel; must match the Volterra solver's series.
inline std::vector<double> aggregate_from_density(const DensityGrid& g,
                                                  const InfectivityLaw& law) {
    std::vector<double> kernel(g.nx);
    for (std::size_t j = 0; j < g.nx; ++j) {
        double x = static_cast<double>(j) * g.dt;
        if (law.is_separable())
            kernel[j] = law.lambda_tilde()(x);
        else
            kernel[j] = zero_div(law.mean_infectivity(x), law.eta_survival(x));
    }
    std::vector<double> out(g.nt, 0.0), row(g.nx);
    for (std::size_t i = 0; i < g.nt; ++i) {
        for (std::size_t j = 0; j < g.nx; ++j) row[j] = kernel[j] * g.at(i, j);
        out[i] = trapezoid(row, g.dt);
    }
    return out;
}

struct JumpReport {
    double max_deviation = 0.0;       // observed vs implied drop factor across atoms
    bool zero_beyond_support = true;  // density vanishes wherever F^c does
};

/// At each declared atom a of the period law, the density drops across x = a
/// by the survival jump factor along every characteristic; for a terminal
/// atom (deterministic periods) the density must vanish for x >= a.
/// Consecutive lattice points (i-1, x-dt) and (i, x) lie on one characteristic
/// and carry the same transported data, so the observed ratio isolates the
/// survival drop.
inline JumpReport jump_consistency(const DensityGrid& g) {
    auto atoms = g.dist.atoms();
    if (atoms.empty()) throw NoAtoms("period law has no atoms");
    JumpReport rep;
    for (const auto& [a, mass] : atoms) {
        auto ja = static_cast<std::size_t>(std::llround(a / g.dt));
        if (ja == 0 || ja >= g.nx) continue;
        double expected =
            zero_div(g.dist.survival(a), g.dist.survival(static_cast<double>(ja - 1) * g.dt));
        for (std::size_t i = 1; i < g.nt; ++i) {
            double before = g.at(i - 1, ja - 1);
            if (before <= 1e-14) continue;
            double observed = g.at(i, ja) / before;
            rep.max_deviation = std::max(rep.max_deviation, std::abs(observed - expected));
        }
    }
    for (std::size_t i = 0; i < g.nt; ++i)
        for (std::size_t j = 0; j < g.nx; ++j)
            if (g.dist.survival(g.x_of(j)) == 0.0 && g.at(i, j) != 0.0)
                rep.zero_beyond_support = false;
    return rep;
}

}  // namespace epiv
