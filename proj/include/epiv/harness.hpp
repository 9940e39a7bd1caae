#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "epiv/abm.hpp"
#include "epiv/analysis.hpp"
#include "epiv/config.hpp"
#include "epiv/limit_solver.hpp"
#include "epiv/pde.hpp"

namespace epiv {

// ---- formatting ------------------------------------------------------------

/// Shortest round-trippable decimal form, locale independent; used for every
/// number written to an output file so runs are byte-identical.
inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    double back = 0.0;
    std::sscanf(buf, "%lg", &back);
    if (back == v) {
        for (int prec = 1; prec < 17; ++prec) {
            char shorter[32];
            std::snprintf(shorter, sizeof(shorter), "%.*g", prec, v);
            std::sscanf(shorter, "%lg", &back);
            if (back == v) return shorter;
        }
    }
    return buf;
}

// ---- replication orchestration ---------------------------------------------

/// Run `count` replications of one SimConfig with up to `jobs` worker threads.
/// Results are ordered by replication index regardless of completion order.
inline std::vector<Trajectory> run_replications(const SimConfig& config, int count,
                                                int jobs) {
    if (jobs < 1) jobs = static_cast<int>(std::thread::hardware_concurrency());
    if (jobs < 1) jobs = 1;
    std::vector<Trajectory> out(static_cast<std::size_t>(count));
    std::atomic<int> next{0};
    auto worker = [&]() {
        for (;;) {
            int r = next.fetch_add(1);
            if (r >= count) return;
            out[static_cast<std::size_t>(r)] =
                simulate(config, static_cast<std::uint64_t>(r));
        }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < std::min(jobs, count); ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    return out;
}

// ---- convergence experiment ------------------------------------------------

struct ConvergenceRow {
    std::int64_t population = 0;
    std::string metric;
    double mean = 0.0, median = 0.0, max = 0.0;
    int replications = 0;
};

namespace detail {

inline double sup_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i)
        m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace detail

/// For every N in the ladder, replicate the stochastic model and report the
/// sup-norm distance of each requested scaled series from the deterministic
/// limit over the record grid.
inline std::vector<ConvergenceRow> run_convergence(const AppConfig& app, int jobs = 0) {
    if (app.ladder.empty()) throw ConfigInvalid("experiment.ladder is empty");
    LimitSolution limit = app.model == Model::SIR ? solve_sir(app.limit_config())
                                                  : solve_sis(app.limit_config());
    SimConfig base = app.sim_config();
    auto n_rec = static_cast<std::size_t>(std::floor(base.horizon / base.record_dt)) + 1;

    // limit series sampled at the record times
    std::vector<std::size_t> rec_idx(n_rec);
    std::vector<double> ls(n_rec), li(n_rec), lr(n_rec), lc(n_rec);
    for (std::size_t i = 0; i < n_rec; ++i) {
        double t = static_cast<double>(i) * base.record_dt;
        auto idx = static_cast<std::size_t>(std::llround(t / limit.dt));
        rec_idx[i] = std::min(idx, limit.steps() - 1);
        ls[i] = limit.s_bar[rec_idx[i]];
        li[i] = limit.i_bar[rec_idx[i]];
        lr[i] = limit.r_bar[rec_idx[i]];
        lc[i] = limit.curly_i[rec_idx[i]];
    }
    bool want_age = std::find(app.metrics.begin(), app.metrics.end(), "sup_age_dist") !=
                    app.metrics.end();
    std::vector<std::vector<double>> lfrak;
    if (want_age) {
        std::vector<double> edges;
        double span = app.x_bar + base.horizon;
        for (double e = base.age_bin; e <= span + 0.5 * base.age_bin; e += base.age_bin)
            edges.push_back(e);
        lfrak.resize(n_rec);
        for (std::size_t i = 0; i < n_rec; ++i)
            lfrak[i] = limit.frak_profile(rec_idx[i], edges);
    }

    std::vector<ConvergenceRow> table;
    for (std::int64_t n : app.ladder) {
        SimConfig c = base;
        c.population = n;
        if (c.initial_ages.empty())
            c.initial_count = static_cast<std::int64_t>(
                std::llround(app.infected_fraction * static_cast<double>(n)));
        auto trajs = run_replications(c, app.replications, jobs);

        for (const std::string& metric : app.metrics) {
            std::vector<double> errs;
            errs.reserve(trajs.size());
            for (const auto& tr : trajs) {
                double e;
                if (metric == "sup_S")
                    e = detail::sup_abs_diff(tr.s_bar, ls);
                else if (metric == "sup_I")
                    e = detail::sup_abs_diff(tr.i_bar, li);
                else if (metric == "sup_R")
                    e = detail::sup_abs_diff(tr.r_bar, lr);
                else if (metric == "sup_curlyI")
                    e = detail::sup_abs_diff(tr.curly_i_bar, lc);
                else if (metric == "sup_age_dist") {
                    e = 0.0;
                    for (std::size_t i = 0; i < std::min(n_rec, tr.age_hist.size()); ++i)
                        e = std::max(e, detail::sup_abs_diff(tr.age_hist[i], lfrak[i]));
                } else {
                    throw ConfigInvalid("unknown metric \"" + metric + "\"");
                }
                errs.push_back(e);
            }
            std::sort(errs.begin(), errs.end());
            double mean = 0.0;
            for (double e : errs) mean += e;
            mean /= static_cast<double>(errs.size());
            std::size_t h = errs.size() / 2;
            double median = errs.size() % 2 ? errs[h] : 0.5 * (errs[h - 1] + errs[h]);
            table.push_back({n, metric, mean, median, errs.back(),
                             static_cast<int>(errs.size())});
        }
    }
    return table;
}

// ---- invariant battery -----------------------------------------------------

struct CheckResult {
    std::string name;
    bool passed = false;
    double measured = 0.0;
    double threshold = 0.0;
    std::string note;
};

/// Every numerical identity the toolkit promises, evaluated on one config.
/// Failures are report entries, never exceptions.
inline std::vector<CheckResult> run_checks(const AppConfig& app, int jobs = 0) {
    std::vector<CheckResult> out;
    auto add = [&](std::string name, double measured, double threshold, std::string note = "") {
        out.push_back({std::move(name), measured <= threshold, measured, threshold,
                       std::move(note)});
    };
    auto fail = [&](std::string name, std::string note) {
        out.push_back({std::move(name), false, 0.0, 0.0, std::move(note)});
    };

    LimitConfig lc = app.limit_config();
    LimitSolution sol;
    try {
        sol = app.model == Model::SIR ? solve_sir(lc) : solve_sis(lc);
    } catch (const std::exception& e) {
        fail("limit_solve", e.what());
        return out;
    }
    const double dt = lc.dt;

    // survival sanity of the period law
    {
        double worst = 0.0, prev = 1.0;
        for (double x = 0.0; x <= 10.0; x += 0.05) {
            double s = app.law.eta_survival(x);
            worst = std::max(worst, s - prev);
            prev = s;
        }
        add("survival_nonincreasing", worst, 0.0);
    }

    if (app.model == Model::SIR) {
        double worst = 0.0;
        for (std::size_t i = 0; i < sol.steps(); ++i)
            worst = std::max(worst,
                             std::abs(sol.s_bar[i] + sol.i_bar[i] + sol.r_bar[i] - 1.0));
        add("mass_conservation", worst, 10.0 * dt * dt);

        double rise = 0.0;
        for (std::size_t i = 1; i < sol.steps(); ++i)
            rise = std::max(rise, sol.s_bar[i] - sol.s_bar[i - 1]);
        add("s_bar_nonincreasing", rise, 1e-12);
    }

    {
        // frak nondecreasing in x at a spread of lattice times
        double worst = 0.0;
        std::vector<double> edges;
        for (double x = 0.0; x <= app.x_bar + lc.horizon; x += 10.0 * dt) edges.push_back(x);
        for (std::size_t pick = 0; pick < 5; ++pick) {
            std::size_t ti = pick * (sol.steps() - 1) / 4;
            auto prof = sol.frak_profile(ti, edges);
            for (std::size_t k = 1; k < prof.size(); ++k)
                worst = std::max(worst, prof[k - 1] - prof[k]);
        }
        add("age_mass_nondecreasing", worst, 1e-12);
    }

    {
        double worst = 0.0;
        double lam_star = app.law.lambda_star();
        for (double u : sol.upsilon) worst = std::max(worst, std::max(-u, u - lam_star));
        add("force_of_infection_bounds", worst, 0.0);
    }

    // PDE identities on the solved boundary
    {
        auto nx = static_cast<std::size_t>(std::llround((app.x_bar + lc.horizon) / dt)) + 1;
        DensityGrid grid =
            density_from_boundary(sol.upsilon, lc.initial_density, app.x_bar,
                                  app.law.period_dist().value_or(
                                      LifetimeDistribution::exponential(1.0)),
                                  dt, nx, app.law.period_dist()
                                              ? app.law.period_dist()->has_atoms()
                                              : false);
        if (app.law.is_separable()) {
            add("boundary_condition", boundary_condition_check(grid, sol.s_bar, app.law),
                10.0 * dt);
            auto agg = aggregate_from_density(grid, app.law);
            double worst = 0.0;
            for (std::size_t i = 0; i < sol.steps(); ++i)
                worst = std::max(worst, std::abs(agg[i] - sol.curly_i[i]));
            add("aggregate_identity", worst, 10.0 * dt);

            const auto& period = *app.law.period_dist();
            if (period.has_atoms()) {
                try {
                    auto rep = jump_consistency(grid);
                    add("atom_jump_consistency", rep.max_deviation, 10.0 * dt,
                        rep.zero_beyond_support ? "" : "density persists past the support");
                    if (!rep.zero_beyond_support) out.back().passed = false;
                } catch (const std::exception& e) {
                    fail("atom_jump_consistency", e.what());
                }
                out.push_back({"transport_residual", true, 0.0, 0.0,
                               "skipped: period law has atoms"});
            } else {
                try {
                    auto rep = transport_residual(grid);
                    double c_bound = 40.0 * (1.0 + app.law.lambda_star());
                    add("transport_residual", rep.max_residual, c_bound * dt);
                } catch (const std::exception& e) {
                    fail("transport_residual", e.what());
                }
            }
        }
    }

    // equilibrium formula self-consistency
    try {
        auto eq = sis_equilibrium(app.law);
        double integral = adaptive_simpson([&](double x) { return eq.density_star(x); }, 0.0,
                                           detail::infectivity_support_bound(app.law), 1e-10);
        add("equilibrium_density_mass", std::abs(integral - eq.i_star), 1e-6);
    } catch (const std::exception& e) {
        fail("equilibrium_density_mass", e.what());
    }

    // martingale statistics on a modest replication batch
    try {
        SimConfig sc = app.sim_config();
        int reps = std::max(30, std::min(100, app.replications));
        auto trajs = run_replications(sc, reps, jobs);
        auto rep = martingale_diagnostic(trajs, sc.horizon, sc.population);
        add("martingale_mean_zero", std::abs(rep.z_mean), 4.0);
        add("martingale_variance_matches_compensator", std::abs(rep.z_var), 4.0);
    } catch (const std::exception& e) {
        fail("martingale_diagnostic", e.what());
    }

    return out;
}

// ---- export ----------------------------------------------------------------

namespace detail {

inline std::ofstream open_out(const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write output file: " + path);
    return f;
}

inline std::string preamble(const AppConfig& app) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "# config_hash=%016llx seed=%llu\n",
                  static_cast<unsigned long long>(app.hash()),
                  static_cast<unsigned long long>(app.seed));
    return buf;
}

}  // namespace detail

inline void write_trajectory_csv(const std::string& path, const AppConfig& app,
                                 const std::vector<double>& t, const std::vector<double>& s,
                                 const std::vector<double>& i, const std::vector<double>& r,
                                 const std::vector<double>& curly,
                                 const std::vector<double>& a,
                                 const std::vector<double>& lambda) {
    auto f = detail::open_out(path);
    f << detail::preamble(app) << "t,S_bar,I_bar,R_bar,curlyI_bar,A_bar,Lambda_bar\n";
    for (std::size_t k = 0; k < t.size(); ++k)
        f << fmt(t[k]) << ',' << fmt(s[k]) << ',' << fmt(i[k]) << ',' << fmt(r[k]) << ','
          << fmt(curly[k]) << ',' << fmt(a[k]) << ',' << fmt(lambda[k]) << '\n';
}

inline void write_trajectory_csv(const std::string& path, const AppConfig& app,
                                 const Trajectory& tr) {
    write_trajectory_csv(path, app, tr.times, tr.s_bar, tr.i_bar, tr.r_bar, tr.curly_i_bar,
                         tr.a_bar, tr.lambda_bar);
}

inline void write_age_hist_csv(const std::string& path, const AppConfig& app,
                               const Trajectory& tr) {
    auto f = detail::open_out(path);
    f << detail::preamble(app) << "t";
    for (double e : tr.age_edges) f << ',' << fmt(e);
    f << '\n';
    for (std::size_t k = 0; k < tr.times.size(); ++k) {
        f << fmt(tr.times[k]);
        for (double v : tr.age_hist[k]) f << ',' << fmt(v);
        f << '\n';
    }
}

inline void write_matrix_csv(const std::string& path, const AppConfig& app,
                             const DensityGrid& g) {
    auto f = detail::open_out(path);
    f << detail::preamble(app) << "t";
    for (std::size_t j = 0; j < g.nx; ++j) f << ',' << fmt(g.x_of(j));
    f << '\n';
    for (std::size_t i = 0; i < g.nt; ++i) {
        f << fmt(g.t_of(i));
        for (std::size_t j = 0; j < g.nx; ++j) f << ',' << fmt(g.at(i, j));
        f << '\n';
    }
}

inline void write_convergence_csv(const std::string& path, const AppConfig& app,
                                  const std::vector<ConvergenceRow>& table) {
    auto f = detail::open_out(path);
    f << detail::preamble(app) << "N,metric,mean,median,max,replications\n";
    for (const auto& row : table)
        f << row.population << ',' << row.metric << ',' << fmt(row.mean) << ','
          << fmt(row.median) << ',' << fmt(row.max) << ',' << row.replications << '\n';
}

inline Json checks_to_json(const std::vector<CheckResult>& checks) {
    Json arr = Json::array();
    for (const auto& c : checks) {
        Json e;
        e["name"] = c.name;
        e["passed"] = c.passed;
        e["measured"] = c.measured;
        e["threshold"] = c.threshold;
        if (!c.note.empty()) e["note"] = c.note;
        arr.push_back(e);
    }
    return arr;
}

}  // namespace epiv
