// End-to-end acceptance battery: one pass/fail line per criterion, exit 0
// only when every criterion holds.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "epiv/harness.hpp"
#include "oracles.hpp"

using namespace epiv;
namespace fs = std::filesystem;
using clock_t_ = std::chrono::steady_clock;

namespace {

bool g_all_passed = true;

void report(int num, const std::string& name, bool ok, const std::string& detail) {
    std::printf("%s  %d %s (%s)\n", ok ? "PASS" : "FAIL", num, name.c_str(), detail.c_str());
    if (!ok) g_all_passed = false;
}

double elapsed(clock_t_::time_point t0) {
    return std::chrono::duration<double>(clock_t_::now() - t0).count();
}

std::string fmt1(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), f, a);
    return buf;
}

LimitConfig markov_limit(double lambda, double mu, double i0, double horizon, double dt) {
    LimitConfig c;
    c.law = InfectivityLaw::separable(Curve::constant(lambda),
                                      LifetimeDistribution::exponential(mu));
    c.initial_density = Curve::constant(i0);
    c.x_bar = 1.0;
    c.horizon = horizon;
    c.dt = dt;
    return c;
}

std::string config_path(const std::string& name) {
    return (fs::path(EPI_CONFIG_DIR) / name).string();
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// 1. deterministic solver against an independent 4th-order ODE integration of
//    the constant-rate memoryless special case
void criterion_1() {
    auto t0 = clock_t_::now();
    auto c = markov_limit(2.0, 1.0, 0.01, 20.0, 1e-3);
    auto sol = solve_sir(c);
    auto ode = oracle::rk4_sir(2.0, 1.0, 0.99, 0.01, c.horizon, c.dt);
    double worst = 0.0;
    for (std::size_t k = 0; k < sol.steps(); ++k) {
        worst = std::max(worst, std::abs(sol.s_bar[k] - ode.s[k]));
        worst = std::max(worst, std::abs(sol.i_bar[k] - ode.i[k]));
        worst = std::max(worst, std::abs(sol.r_bar[k] - ode.r[k]));
    }
    double secs = elapsed(t0);
    report(1, "constant-rate solver vs ODE oracle", worst < 1e-4 && secs < 10.0,
           fmt1("sup error %.2e, ", worst) + fmt1("%.1f s", secs));
}

// 2. stochastic-to-deterministic convergence at the expected 1/sqrt(N) rate
void criterion_2() {
    auto t0 = clock_t_::now();
    auto app = AppConfig::from_file(config_path("markov_sir.json"));
    auto table = run_convergence(app, 0);
    double m100 = 0.0, m1000 = 0.0, m10000 = 0.0;
    for (const auto& row : table) {
        if (row.metric != "sup_S") continue;
        if (row.population == 100) m100 = row.mean;
        if (row.population == 1000) m1000 = row.mean;
        if (row.population == 10000) m10000 = row.mean;
    }
    double r1 = m1000 / m100, r2 = m10000 / m1000;
    double secs = elapsed(t0);
    bool ok = r1 >= 0.2 && r1 <= 0.6 && r2 >= 0.2 && r2 <= 0.6 && secs < 300.0;
    report(2, "replication ladder error decay",
           ok, fmt1("per-decade ratios %.3f", r1) + fmt1(" / %.3f, ", r2) +
                   fmt1("%.1f s", secs));
}

// 3. the boundary fixed-point equation reproduces the force of infection
void criterion_3() {
    auto c = markov_limit(2.0, 1.0, 0.01, 10.0, 1e-3);
    c.picard_tol = 1e-8;
    auto boundary = solve_boundary(c);
    auto sol = solve_sir(c);
    double worst = 0.0;
    for (std::size_t k = 0; k < boundary.size(); ++k)
        worst = std::max(worst, std::abs(boundary[k] - sol.upsilon[k]));
    report(3, "boundary equation vs full system", worst < 5e-3,
           fmt1("sup difference %.2e", worst));
}

// 4. transport residual, boundary condition and aggregate identity on the
//    gamma-period configuration
void criterion_4() {
    LimitConfig base;
    base.law = InfectivityLaw::separable(Curve::constant(1.5),
                                         LifetimeDistribution::gamma(2.0, 1.0));
    base.initial_density = Curve::constant(0.05);
    base.x_bar = 1.0;
    base.horizon = 4.0;

    std::vector<double> residuals;
    bool bc_ok = true, agg_ok = true;
    for (double dt : {1e-2, 5e-3, 2.5e-3}) {
        auto c = base;
        c.dt = dt;
        auto sol = solve_sir(c);
        auto nx = static_cast<std::size_t>(std::llround((c.x_bar + c.horizon) / dt)) + 1;
        auto grid = density_from_boundary(sol.upsilon, c.initial_density, c.x_bar,
                                          *c.law.period_dist(), dt, nx);
        residuals.push_back(transport_residual(grid).max_residual);
        bc_ok = bc_ok && boundary_condition_check(grid, sol.s_bar, c.law) < 10.0 * dt;
        auto agg = aggregate_from_density(grid, c.law);
        double worst = 0.0;
        for (std::size_t i = 0; i < sol.steps(); ++i)
            worst = std::max(worst, std::abs(agg[i] - sol.curly_i[i]));
        agg_ok = agg_ok && worst < 10.0 * dt;
    }
    double order1 = std::log2(residuals[0] / residuals[1]);
    double order2 = std::log2(residuals[1] / residuals[2]);
    bool ok = order1 >= 1.0 && order2 >= 1.0 && bc_ok && agg_ok;
    report(4, "transport identities on gamma periods", ok,
           fmt1("residual orders %.2f", order1) + fmt1(" / %.2f", order2) +
               (bc_ok ? "" : ", boundary condition violated") +
               (agg_ok ? "" : ", aggregate identity violated"));
}

// 5. fixed-length periods: no mass at or beyond the period length, and the
//    final size equals the susceptible depletion
void criterion_5() {
    LimitConfig c;
    c.law = InfectivityLaw::separable(Curve::constant(1.5),
                                      LifetimeDistribution::deterministic(2.0));
    c.initial_density = Curve::constant(0.01);
    c.x_bar = 1.0;
    c.horizon = 40.0;
    c.dt = 1e-2;
    auto sol = solve_sir(c);
    auto nx = static_cast<std::size_t>(std::llround((c.x_bar + c.horizon) / c.dt)) + 1;
    auto grid = density_from_boundary(sol.upsilon, c.initial_density, c.x_bar,
                                      *c.law.period_dist(), c.dt, nx, true);
    bool zero = true;
    for (std::size_t i = 0; i < grid.nt && zero; ++i)
        for (std::size_t j = 0; j < grid.nx; ++j)
            if (grid.x_of(j) >= 2.0 && grid.at(i, j) != 0.0) {
                zero = false;
                break;
            }
    auto f = final_size(sol);
    double phi_err = std::abs(f.phi - (sol.s_bar.front() - sol.s_bar.back()));
    report(5, "fixed-length periods and final size", zero && phi_err < 1e-6,
           std::string(zero ? "density zero beyond the period" : "mass beyond the period") +
               fmt1(", final-size error %.2e", phi_err));
}

// 6. SIS long-run behaviour: endemic level and age density above threshold,
//    extinction below it
void criterion_6() {
    LimitConfig c;
    c.law = InfectivityLaw::separable(Curve::constant(2.0),
                                      LifetimeDistribution::exponential(1.0));
    c.initial_density = Curve::constant(0.1);
    c.x_bar = 1.0;
    c.horizon = 200.0;
    c.dt = 5e-3;
    auto sol = solve_sis(c);
    double i_err = std::abs(sol.i_bar.back() - 0.5);
    double d_err = 0.0;
    std::size_t last = sol.steps() - 1;
    for (double x = 0.0; x <= 40.0; x += c.dt)
        d_err = std::max(d_err, std::abs(sol.density(last, x) - 0.5 * std::exp(-x)));

    auto sub = c;
    sub.law = InfectivityLaw::separable(Curve::constant(1.0),
                                        LifetimeDistribution::exponential(2.0));
    auto dead = solve_sis(sub);
    bool ok = i_err < 1e-3 && d_err < 5e-3 && dead.i_bar.back() < 1e-3;
    report(6, "SIS endemic level and extinction", ok,
           fmt1("level error %.2e, ", i_err) + fmt1("density error %.2e, ", d_err) +
               fmt1("subcritical I(200)=%.2e", dead.i_bar.back()));
}

// 7. centred counting process behaves like a martingale with the predicted
//    quadratic variation
void criterion_7() {
    auto t0 = clock_t_::now();
    auto app = AppConfig::from_file(config_path("markov_sir.json"));
    auto sc = app.sim_config();
    auto trajs = run_replications(sc, 200, 0);
    auto rep = martingale_diagnostic(trajs, sc.horizon, sc.population);
    double secs = elapsed(t0);
    bool ok = std::abs(rep.z_mean) < 4.0 && std::abs(rep.z_var) < 4.0 && secs < 180.0;
    report(7, "martingale diagnostic at N=1000", ok,
           fmt1("z_mean %.2f, ", rep.z_mean) + fmt1("z_var %.2f, ", rep.z_var) +
               fmt1("%.1f s", secs));
}

// 8. conservation and monotonicity on every shipped configuration
void criterion_8() {
    bool ok = true;
    std::string detail;
    for (const char* name : {"markov_sir.json", "gamma_sir.json", "deterministic_sir.json",
                             "sis_endemic.json"}) {
        auto app = AppConfig::from_file(config_path(name));
        auto lc = app.limit_config();
        auto sol = app.model == Model::SIR ? solve_sir(lc) : solve_sis(lc);

        if (app.model == Model::SIR) {
            double worst = 0.0;
            for (std::size_t i = 0; i < sol.steps(); ++i)
                worst = std::max(worst,
                                 std::abs(sol.s_bar[i] + sol.i_bar[i] + sol.r_bar[i] - 1.0));
            if (worst >= 10.0 * lc.dt * lc.dt) {
                ok = false;
                detail += std::string(name) + ": mass leak; ";
            }
        }

        std::vector<double> xs;
        double span = app.x_bar + lc.horizon;
        for (double x = 0.0; x <= span; x += span / 80.0) xs.push_back(x);
        double dip = 0.0;
        for (std::size_t ti = 0; ti < sol.steps(); ++ti) {
            auto prof = sol.frak_profile(ti, xs);
            for (std::size_t k = 1; k < prof.size(); ++k)
                dip = std::max(dip, prof[k - 1] - prof[k]);
        }
        if (dip > 1e-12) {
            ok = false;
            detail += std::string(name) + ": age mass decreases; ";
        }

        // exact head counts through the event stream of one replication
        auto sc = app.sim_config();
        sc.record_events = true;
        auto tr = simulate(sc);
        std::int64_t infected = sc.initial_ages.empty()
                                    ? sc.initial_count
                                    : static_cast<std::int64_t>(sc.initial_ages.size());
        std::int64_t s = sc.population - infected, i = infected, r = 0;
        bool counts_ok = true;
        for (const auto& ev : tr.events) {
            if (ev.kind == Event::Kind::Infection) {
                --s;
                ++i;
            } else if (app.model == Model::SIR) {
                --i;
                ++r;
            } else {
                --i;
                ++s;
            }
            counts_ok = counts_ok && s >= 0 && i >= 0 && r >= 0 &&
                        s + i + r == sc.population;
        }
        counts_ok = counts_ok &&
                    std::llround(tr.s_bar.back() * static_cast<double>(sc.population)) == s &&
                    std::llround(tr.i_bar.back() * static_cast<double>(sc.population)) == i;
        if (!counts_ok) {
            ok = false;
            detail += std::string(name) + ": head count broken; ";
        }
    }
    report(8, "conservation on all shipped configs", ok,
           ok ? "4 configs clean" : detail);
}

// 9. identical config and seed give byte-identical converge outputs
void criterion_9() {
    fs::path work = fs::temp_directory_path() / "epiv_acceptance";
    fs::remove_all(work);
    fs::create_directories(work);
    fs::path cfg = work / "config.json";
    {
        std::ofstream f(cfg);
        f << R"({
            "model": "sir",
            "law": {"family": "separable", "lambda_tilde": 2.0,
                    "period": {"kind": "exponential", "rate": 1.0}},
            "initial": {"infected_fraction": 0.05,
                        "age_cdf": {"kind": "piecewise_cdf",
                                    "knots": [[0.0, 0.0], [1.0, 1.0]]}},
            "sim": {"N": 500, "horizon": 5.0, "record_dt": 0.1, "age_bin": 0.5},
            "limit": {"T": 5.0, "dt": 0.01},
            "experiment": {"ladder": [100, 200], "replications": 5,
                           "metrics": ["sup_S", "sup_I"]}
        })";
    }
    auto run = [&](const std::string& out) {
        std::string cmd = std::string("\"") + EPI_CLI_PATH + "\" converge --config \"" +
                          cfg.string() + "\" --out \"" + (work / out).string() +
                          "\" --seed 7 --jobs 2 > /dev/null 2>&1";
        return std::system(cmd.c_str());
    };
    int rc_a = run("a"), rc_b = run("b");
    bool ok = rc_a == 0 && rc_b == 0;
    std::string detail;
    if (!ok) detail = "converge exited nonzero";
    for (const char* f : {"convergence.csv", "summary.json"}) {
        std::string a = slurp(work / "a" / f), b = slurp(work / "b" / f);
        if (a.empty() || a != b) {
            ok = false;
            detail += std::string(f) + " differs; ";
        }
    }
    report(9, "byte-identical repeated runs", ok, ok ? "outputs identical" : detail);
}

}  // namespace

int main() {
    try {
        criterion_1();
        criterion_2();
        criterion_3();
        criterion_4();
        criterion_5();
        criterion_6();
        criterion_7();
        criterion_8();
        criterion_9();
    } catch (const std::exception& e) {
        std::printf("FAIL  unexpected exception: %s\n", e.what());
        return 1;
    }
    return g_all_passed ? 0 : 1;
}
