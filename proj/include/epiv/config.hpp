#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "epiv/abm.hpp"
#include "epiv/infectivity.hpp"
#include "epiv/lifetime.hpp"
#include "epiv/limit_solver.hpp"

namespace epiv {

using Json = nlohmann::ordered_json;

inline LifetimeDistribution lifetime_from_json(const Json& j) {
    if (!j.is_object() || !j.contains("kind"))
        throw ConfigInvalid("distribution spec needs a \"kind\"");
    std::string kind = j.at("kind");
    try {
        if (kind == "exponential") return LifetimeDistribution::exponential(j.at("rate"));
        if (kind == "deterministic") return LifetimeDistribution::deterministic(j.at("t_i"));
        if (kind == "gamma")
            return LifetimeDistribution::gamma(j.at("shape"), j.at("scale"));
        if (kind == "piecewise_cdf") {
            std::vector<std::pair<double, double>> knots;
            for (const auto& k : j.at("knots"))
                knots.emplace_back(k.at(0).get<double>(), k.at(1).get<double>());
            return LifetimeDistribution::piecewise_cdf(knots);
        }
        if (kind == "mixture") {
            std::vector<double> weights = j.at("weights").get<std::vector<double>>();
            std::vector<LifetimeDistribution> parts;
            for (const auto& c : j.at("components")) parts.push_back(lifetime_from_json(c));
            return LifetimeDistribution::mixture(weights, parts);
        }
    } catch (const Json::exception& e) {
        throw ConfigInvalid(std::string("bad distribution spec: ") + e.what());
    }
    throw ConfigInvalid("unknown distribution kind \"" + kind + "\"");
}

inline Curve curve_from_json(const Json& j) {
    try {
        if (j.is_number()) return Curve::constant(j.get<double>());
        std::vector<std::pair<double, double>> knots;
        for (const auto& k : j.at("knots"))
            knots.emplace_back(k.at(0).get<double>(), k.at(1).get<double>());
        return Curve(knots);
    } catch (const Json::exception& e) {
        throw ConfigInvalid(std::string("bad curve spec: ") + e.what());
    }
}

inline InfectivityLaw law_from_json(const Json& j) {
    if (!j.is_object() || !j.contains("family"))
        throw ConfigInvalid("law spec needs a \"family\"");
    std::string family = j.at("family");
    try {
        if (family == "separable")
            return InfectivityLaw::separable(curve_from_json(j.at("lambda_tilde")),
                                             lifetime_from_json(j.at("period")));
        if (family == "exposed_then_constant")
            return InfectivityLaw::exposed_then_constant(lifetime_from_json(j.at("exposed")),
                                                         j.at("level"),
                                                         lifetime_from_json(j.at("duration")));
        if (family == "piecewise_constant_random") {
            std::vector<InfectivityLaw::SegmentSpec> segments;
            for (const auto& s : j.at("segments"))
                segments.push_back({lifetime_from_json(s.at("increment")), s.at("level_lo"),
                                    s.at("level_hi")});
            return InfectivityLaw::piecewise_constant_random(std::move(segments));
        }
    } catch (const Json::exception& e) {
        throw ConfigInvalid(std::string("bad law spec: ") + e.what());
    }
    throw ConfigInvalid("unknown law family \"" + family + "\"");
}

/// The whole run configuration. The canonical document (defaults filled in)
/// is kept alongside the parsed objects so serialization is stable and
/// parse(serialize(parse(x))) == parse(x).
struct AppConfig {
    Json doc;
    Model model = Model::SIR;
    InfectivityLaw law = InfectivityLaw::separable(Curve::constant(0.0),
                                                   LifetimeDistribution::exponential(1.0));

    double infected_fraction = 0.0;
    std::vector<double> explicit_ages;
    std::optional<LifetimeDistribution> age_cdf;
    double x_bar = 0.0;

    std::int64_t population = 0;
    double sim_horizon = 0.0, record_dt = 0.1, age_bin = 0.1;
    std::uint64_t seed = 0;
    bool event_log = false;

    double limit_horizon = 0.0, dt = 1e-3;
    SolverMode solver = SolverMode::ForwardStep;
    double picard_tol = 1e-8, step_tol = 1e-3;
    int max_iter = 500;

    std::vector<std::int64_t> ladder;
    int replications = 1;
    std::vector<std::string> metrics;

    static AppConfig parse(const Json& in);
    static AppConfig from_file(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw ConfigInvalid("cannot read config file: " + path);
        Json j;
        try {
            f >> j;
        } catch (const Json::exception& e) {
            throw ConfigInvalid(std::string("config is not valid JSON: ") + e.what());
        }
        return parse(j);
    }

    std::string serialize() const { return doc.dump(2) + "\n"; }

    /// FNV-1a over the canonical serialization; embedded in every output file.
    std::uint64_t hash() const {
        std::uint64_t h = 0xcbf29ce484222325ull;
        for (unsigned char c : serialize()) {
            h ^= c;
            h *= 0x100000001b3ull;
        }
        return h;
    }

    SimConfig sim_config() const {
        SimConfig c;
        c.population = population;
        c.horizon = sim_horizon;
        c.model = model;
        c.law = law;
        c.record_dt = record_dt;
        c.age_bin = age_bin;
        c.age_max = x_bar;
        c.seed = seed;
        c.record_events = event_log;
        if (!explicit_ages.empty()) {
            c.initial_ages = explicit_ages;
        } else {
            c.initial_count = static_cast<std::int64_t>(
                std::llround(infected_fraction * static_cast<double>(population)));
            c.initial_age_cdf = age_cdf;
        }
        return c;
    }

    LimitConfig limit_config() const {
        LimitConfig c;
        c.law = law;
        c.initial_density = initial_density_curve();
        c.x_bar = x_bar;
        c.horizon = limit_horizon;
        c.dt = dt;
        c.solver = solver;
        c.picard_tol = picard_tol;
        c.step_tol = step_tol;
        c.max_iter = max_iter;
        return c;
    }

    /// i_bar(0, .) for the limit system: infected_fraction times the density
    /// of the initial-age law. Piecewise-linear c.d.f. knots give piecewise
    /// constant densities, approximated with a narrow ramp at each interior
    /// breakpoint.
    Curve initial_density_curve() const {
        if (doc.contains("initial") && doc["initial"].contains("age_density"))
            return curve_from_json(doc["initial"]["age_density"]);
        if (!age_cdf) throw ConfigInvalid("limit solving needs an initial age density");
        if (age_cdf->kind() != LifetimeDistribution::Kind::PiecewiseCdf)
            throw ConfigInvalid("derive the initial density from a piecewise c.d.f. "
                                "or supply initial.age_density");
        const auto& knots = age_cdf->knots();
        std::vector<std::pair<double, double>> d;
        const double eps = 1e-9;
        for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
            double slope = (knots[i + 1].second - knots[i].second) /
                           (knots[i + 1].first - knots[i].first);
            double lo = knots[i].first, hi = knots[i + 1].first;
            d.emplace_back(i == 0 ? lo : lo + eps, infected_fraction * slope);
            d.emplace_back(hi - eps, infected_fraction * slope);
        }
        // close the support: curves clamp to their last knot beyond it
        d.emplace_back(knots.back().first + eps, 0.0);
        return Curve(d);
    }
};

inline AppConfig AppConfig::parse(const Json& in) {
    AppConfig c;
    Json j = in;
    try {
        std::string model = j.value("model", "sir");
        if (model == "sir")
            c.model = Model::SIR;
        else if (model == "sis")
            c.model = Model::SIS;
        else
            throw ConfigInvalid("model must be \"sir\" or \"sis\"");
        j["model"] = model;

        if (!j.contains("law")) throw ConfigInvalid("config needs a \"law\"");
        c.law = law_from_json(j["law"]);

        Json init = j.value("initial", Json::object());
        c.infected_fraction = init.value("infected_fraction", 0.0);
        if (init.contains("ages"))
            c.explicit_ages = init["ages"].get<std::vector<double>>();
        if (init.contains("age_cdf")) c.age_cdf = lifetime_from_json(init["age_cdf"]);
        c.x_bar = init.value("x_bar", 0.0);
        if (c.x_bar == 0.0) {
            for (double a : c.explicit_ages) c.x_bar = std::max(c.x_bar, a);
            if (c.age_cdf) c.x_bar = std::max(c.x_bar, c.age_cdf->support_upper());
        }
        init["infected_fraction"] = c.infected_fraction;
        init["x_bar"] = c.x_bar;
        j["initial"] = init;

        Json sim = j.value("sim", Json::object());
        c.population = sim.value("N", std::int64_t{1000});
        c.sim_horizon = sim.value("horizon", 10.0);
        c.record_dt = sim.value("record_dt", 0.1);
        c.age_bin = sim.value("age_bin", 0.1);
        c.seed = sim.value("seed", std::uint64_t{0});
        c.event_log = sim.value("event_log", false);
        sim["N"] = c.population;
        sim["horizon"] = c.sim_horizon;
        sim["record_dt"] = c.record_dt;
        sim["age_bin"] = c.age_bin;
        sim["seed"] = c.seed;
        sim["event_log"] = c.event_log;
        j["sim"] = sim;

        Json lim = j.value("limit", Json::object());
        c.limit_horizon = lim.value("T", c.sim_horizon);
        c.dt = lim.value("dt", 1e-3);
        std::string solver = lim.value("solver", "forward");
        if (solver == "forward")
            c.solver = SolverMode::ForwardStep;
        else if (solver == "picard")
            c.solver = SolverMode::Picard;
        else
            throw ConfigInvalid("limit.solver must be \"forward\" or \"picard\"");
        c.picard_tol = lim.value("picard_tol", 1e-8);
        c.step_tol = lim.value("step_tol", 1e-3);
        c.max_iter = lim.value("max_iter", 500);
        lim["T"] = c.limit_horizon;
        lim["dt"] = c.dt;
        lim["solver"] = solver;
        lim["picard_tol"] = c.picard_tol;
        lim["step_tol"] = c.step_tol;
        lim["max_iter"] = c.max_iter;
        j["limit"] = lim;

        Json exp = j.value("experiment", Json::object());
        c.ladder = exp.value("ladder", std::vector<std::int64_t>{});
        c.replications = exp.value("replications", 1);
        c.metrics = exp.value("metrics", std::vector<std::string>{"sup_S"});
        for (std::size_t i = 1; i < c.ladder.size(); ++i)
            if (c.ladder[i] <= c.ladder[i - 1])
                throw ConfigInvalid("experiment.ladder must be strictly increasing");
        if (c.replications < 1) throw ConfigInvalid("experiment.replications must be >= 1");
        exp["ladder"] = c.ladder;
        exp["replications"] = c.replications;
        exp["metrics"] = c.metrics;
        j["experiment"] = exp;
    } catch (const Json::exception& e) {
        throw ConfigInvalid(std::string("bad config: ") + e.what());
    }
    c.doc = std::move(j);
    return c;
}

}  // namespace epiv
