#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "epiv/analysis.hpp"
#include "epiv/config.hpp"
#include "epiv/harness.hpp"

namespace {

enum class LogLevel { Debug = 0, Info = 1, Warn = 2 };

LogLevel log_level() {
    const char* env = std::getenv("EPI_VOLTERRA_LOG");
    if (!env) return LogLevel::Warn;
    std::string v = env;
    if (v == "debug") return LogLevel::Debug;
    if (v == "info") return LogLevel::Info;
    return LogLevel::Warn;
}

void log(LogLevel lvl, const std::string& msg) {
    static LogLevel threshold = log_level();
    if (lvl >= threshold) std::cerr << "epi-volterra: " << msg << "\n";
}

struct Options {
    std::string config_path;
    std::string out_dir = ".";
    std::uint64_t seed = 0;
    bool seed_set = false;
    int jobs = 0;
};

epiv::AppConfig load(const Options& opt) {
    epiv::AppConfig app = epiv::AppConfig::from_file(opt.config_path);
    if (opt.seed_set) {
        app.seed = opt.seed;
        app.doc["sim"]["seed"] = opt.seed;
    }
    std::filesystem::create_directories(opt.out_dir);
    return app;
}

std::string path_in(const Options& opt, const std::string& name) {
    return (std::filesystem::path(opt.out_dir) / name).string();
}

void write_summary(const Options& opt, const epiv::AppConfig& app, epiv::Json extra) {
    extra["config"] = app.doc;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(app.hash()));
    extra["config_hash"] = buf;
    extra["seed"] = app.seed;
    auto f = epiv::detail::open_out(path_in(opt, "summary.json"));
    f << extra.dump(2) << "\n";
}

int cmd_simulate(const Options& opt) {
    epiv::AppConfig app = load(opt);
    log(LogLevel::Info, "simulating N=" + std::to_string(app.population));
    epiv::Trajectory tr = epiv::simulate(app.sim_config());
    epiv::write_trajectory_csv(path_in(opt, "trajectory.csv"), app, tr);
    epiv::write_age_hist_csv(path_in(opt, "age_histogram.csv"), app, tr);
    write_summary(opt, app,
                  {{"command", "simulate"},
                   {"final_S_bar", tr.s_bar.back()},
                   {"final_I_bar", tr.i_bar.back()},
                   {"total_infections", tr.a_bar.back()}});
    return 0;
}

int cmd_limit(const Options& opt) {
    epiv::AppConfig app = load(opt);
    epiv::LimitConfig lc = app.limit_config();
    epiv::LimitSolution sol =
        app.model == epiv::Model::SIR ? epiv::solve_sir(lc) : epiv::solve_sis(lc);
    epiv::write_trajectory_csv(path_in(opt, "limit_trajectory.csv"), app, sol.times,
                               sol.s_bar, sol.i_bar, sol.r_bar, sol.curly_i,
                               sol.cum_upsilon, sol.cum_upsilon);
    write_summary(opt, app,
                  {{"command", "limit"},
                   {"final_S_bar", sol.s_bar.back()},
                   {"final_I_bar", sol.i_bar.back()}});
    return 0;
}

int cmd_pde(const Options& opt) {
    epiv::AppConfig app = load(opt);
    epiv::LimitConfig lc = app.limit_config();
    epiv::LimitSolution sol =
        app.model == epiv::Model::SIR ? epiv::solve_sir(lc) : epiv::solve_sis(lc);
    auto period = app.law.period_dist();
    if (!period) throw epiv::ConfigInvalid("pde output needs a separable law");
    auto nx = static_cast<std::size_t>(std::llround((app.x_bar + lc.horizon) / lc.dt)) + 1;
    epiv::DensityGrid grid =
        epiv::density_from_boundary(sol.upsilon, lc.initial_density, app.x_bar, *period,
                                    lc.dt, nx, period->has_atoms());
    epiv::write_matrix_csv(path_in(opt, "density.csv"), app, grid);

    epiv::Json report{{"command", "pde"}};
    report["boundary_condition_max_violation"] =
        epiv::boundary_condition_check(grid, sol.s_bar, app.law);
    if (period->has_atoms()) {
        auto jr = epiv::jump_consistency(grid);
        report["jump_max_deviation"] = jr.max_deviation;
        report["zero_beyond_support"] = jr.zero_beyond_support;
    } else {
        auto rr = epiv::transport_residual(grid);
        report["transport_max_residual"] = rr.max_residual;
        report["transport_residual_at"] = {grid.t_of(rr.at_t), grid.x_of(rr.at_x)};
    }
    write_summary(opt, app, std::move(report));
    return 0;
}

int cmd_equilibrium(const Options& opt) {
    epiv::AppConfig app = load(opt);
    epiv::EquilibriumReport eq = epiv::sis_equilibrium(app.law);
    epiv::Json report{{"command", "equilibrium"},
                      {"R0", eq.r0},
                      {"I_star", eq.i_star},
                      {"beta", eq.beta}};
    epiv::Json curve = epiv::Json::array();
    double hi = epiv::detail::infectivity_support_bound(app.law);
    for (double x = 0.0; x <= std::min(hi, 50.0); x += 0.1)
        curve.push_back({x, eq.density_star(x)});
    report["equilibrium_density"] = curve;
    if (app.model == epiv::Model::SIS && app.limit_horizon >= 10.0 / eq.beta) {
        epiv::LimitSolution sol = epiv::solve_sis(app.limit_config());
        auto cmp = epiv::verify_equilibrium(eq, sol);
        report["tail_I_error"] = cmp.i_error;
        report["tail_density_error"] = cmp.density_error;
    }
    write_summary(opt, app, std::move(report));
    return 0;
}

int cmd_converge(const Options& opt) {
    epiv::AppConfig app = load(opt);
    auto table = epiv::run_convergence(app, opt.jobs);
    epiv::write_convergence_csv(path_in(opt, "convergence.csv"), app, table);
    write_summary(opt, app, {{"command", "converge"}, {"rows", table.size()}});
    return 0;
}

int cmd_check(const Options& opt) {
    epiv::AppConfig app = load(opt);
    auto checks = epiv::run_checks(app, opt.jobs);
    bool all_passed = true;
    for (const auto& c : checks) {
        all_passed = all_passed && c.passed;
        std::cout << (c.passed ? "PASS" : "FAIL") << "  " << c.name;
        if (!c.note.empty()) std::cout << "  (" << c.note << ")";
        std::cout << "\n";
    }
    epiv::Json report{{"command", "check"}, {"checks", epiv::checks_to_json(checks)}};
    write_summary(opt, app, std::move(report));
    return all_passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App cli{"simulator and Volterra solver for epidemics with "
                 "infection-age-dependent infectivity"};
    cli.require_subcommand(1);

    Options opt;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opt.config_path, "configuration file (JSON)")
            ->required();
        sub->add_option("--seed", opt.seed, "override sim.seed")
            ->each([&](const std::string&) { opt.seed_set = true; });
        sub->add_option("--jobs", opt.jobs, "max concurrent replications (0 = cores)");
        sub->add_option("--out", opt.out_dir, "output directory");
    };

    std::map<std::string, int (*)(const Options&)> handlers = {
        {"simulate", cmd_simulate}, {"limit", cmd_limit},
        {"pde", cmd_pde},           {"equilibrium", cmd_equilibrium},
        {"converge", cmd_converge}, {"check", cmd_check}};
    std::map<std::string, std::string> briefs = {
        {"simulate", "run one stochastic replication and export its trajectory"},
        {"limit", "solve the deterministic limit system"},
        {"pde", "build the age-density grid and verify its identities"},
        {"equilibrium", "compute R0 and the SIS equilibrium"},
        {"converge", "replication ladder comparing the stochastic model to the limit"},
        {"check", "run the full invariant battery"}};
    for (auto& [name, fn] : handlers) add_common(cli.add_subcommand(name, briefs[name]));

    try {
        cli.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return cli.exit(e) == 0 ? 0 : 2;
    }

    try {
        return handlers[cli.get_subcommands().front()->get_name()](opt);
    } catch (const epiv::ConfigInvalid& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
