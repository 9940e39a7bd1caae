#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <queue>
#include <vector>

#include "epiv/common.hpp"
#include "epiv/infectivity.hpp"
#include "epiv/lifetime.hpp"

namespace epiv {

enum class Model { SIR, SIS };

struct SimConfig {
    std::int64_t population = 0;
    double horizon = 0.0;
    Model model = Model::SIR;
    InfectivityLaw law = InfectivityLaw::separable(Curve::constant(0.0),
                                                   LifetimeDistribution::exponential(1.0));
    // Initial infected: explicit ages, or a count with an age c.d.f. to sample.
    std::vector<double> initial_ages;
    std::int64_t initial_count = 0;
    std::optional<LifetimeDistribution> initial_age_cdf;
    double record_dt = 0.1;
    double age_bin = 0.1;
    double age_max = 0.0;  // x_bar; 0 means "infer from the initial ages"
    std::uint64_t seed = 0;
    bool record_events = false;

    void validate() const {
        if (population < 1) throw ConfigInvalid("population must be >= 1");
        if (!(horizon > 0.0)) throw ConfigInvalid("horizon must be > 0");
        if (!(record_dt > 0.0)) throw ConfigInvalid("record_dt must be > 0");
        if (!(age_bin > 0.0)) throw ConfigInvalid("age_bin must be > 0");
        std::int64_t i0 = initial_ages.empty() ? initial_count
                                               : static_cast<std::int64_t>(initial_ages.size());
        if (i0 < 1 || i0 >= population)
            throw ConfigInvalid("need 0 < initially infected < N");
        if (initial_ages.empty() && !initial_age_cdf)
            throw ConfigInvalid("initial infected need explicit ages or an age c.d.f.");
        for (double a : initial_ages)
            if (a < 0.0) throw ConfigInvalid("initial ages must be >= 0");
    }
};

struct InfectedRecord {
    double infection_time;  // negative for the initially infected (= -age at 0)
    double recovery_time;
    InfectivityProfile profile;
};

struct PopulationState {
    std::int64_t population = 0;
    Model model = Model::SIR;
    std::int64_t susceptible = 0;
    std::int64_t recovered = 0;
    double clock = 0.0;
    std::vector<InfectedRecord> roster;       // everyone ever infected
    std::vector<std::uint32_t> active;        // roster ids currently infected

    std::int64_t infected() const { return static_cast<std::int64_t>(active.size()); }
};

/// curlyI^N(t): sum of current profile values over the infected roster.
inline double aggregate_infectivity(const PopulationState& state, double t) {
    double sum = 0.0;
    for (std::uint32_t id : state.active) {
        const auto& rec = state.roster[id];
        sum += rec.profile.evaluate(t - rec.infection_time);
    }
    return sum;
}

/// Upsilon^N(t) = (S^N / N) * curlyI^N(t).
inline double infection_rate(const PopulationState& state, double t) {
    return static_cast<double>(state.susceptible) / static_cast<double>(state.population) *
           aggregate_infectivity(state, t);
}

/// frakI^N(t, .)/N at the bin edges k*bin: fraction infected for a duration
/// <= the edge. Terminal value is I^N(t)/N.
inline std::vector<double> age_histogram(const PopulationState& state, double t, double bin,
                                         std::size_t n_edges) {
    std::vector<double> cum(n_edges, 0.0);
    for (std::uint32_t id : state.active) {
        double age = t - state.roster[id].infection_time;
        // first edge (k+1)*bin at or above the age
        auto k = static_cast<std::size_t>(
            std::max(0.0, std::ceil(age / bin - 1e-9) - 1.0));
        if (k < n_edges) cum[k] += 1.0;
    }
    double scale = 1.0 / static_cast<double>(state.population);
    double acc = 0.0;
    for (auto& c : cum) {
        acc += c;
        c = acc * scale;
    }
    return cum;
}

struct Event {
    double time;
    enum class Kind { Infection, Recovery } kind;
    std::uint32_t id;
};

struct Trajectory {
    std::vector<double> times;
    std::vector<double> s_bar, i_bar, r_bar, curly_i_bar, a_bar, lambda_bar;
    std::vector<double> age_edges;
    std::vector<std::vector<double>> age_hist;  // per snapshot, cumulative / N
    std::vector<Event> events;                  // only when record_events
};

/// Exact event-driven simulation of the finite-N model by thinning the
/// dominating Poisson clock at rate B = lambda_star * I * S / N, which is
/// constant between events. Recoveries fire from a priority queue; at equal
/// timestamps recoveries are processed before infection proposals.
/// Deterministic given (seed, config, replication).
inline Trajectory simulate(const SimConfig& config, std::uint64_t replication = 0) {
    config.validate();
    Rng rng = Rng::for_replication(config.seed, replication);

    const auto N = config.population;
    const double n_inv = 1.0 / static_cast<double>(N);
    const double lambda_star = config.law.lambda_star();
    const bool constant_rate = config.law.is_constant_separable();
    const double const_level = constant_rate ? config.law.lambda_tilde()(0.0) : 0.0;

    // initial infected
    std::vector<double> ages = config.initial_ages;
    if (ages.empty()) {
        ages.resize(static_cast<std::size_t>(config.initial_count));
        for (auto& a : ages) a = config.initial_age_cdf->sample(rng);
    }
    double x_bar = config.age_max;
    for (double a : ages) x_bar = std::max(x_bar, a);

    PopulationState state;
    state.population = N;
    state.model = config.model;
    state.susceptible = N - static_cast<std::int64_t>(ages.size());
    state.clock = 0.0;

    using QueueItem = std::pair<double, std::uint32_t>;
    std::priority_queue<QueueItem, std::vector<QueueItem>, std::greater<>> recoveries;

    auto add_infected = [&](double infection_time, InfectivityProfile&& profile) {
        auto id = static_cast<std::uint32_t>(state.roster.size());
        double rec_time = infection_time + profile.eta();
        state.roster.push_back({infection_time, rec_time, std::move(profile)});
        state.active.push_back(id);
        recoveries.emplace(rec_time, id);
    };

    for (double a : ages) {
        // zero-probability conditioning surfaces here, at setup
        if (!(config.law.eta_survival(a) > 0.0))
            throw DegenerateAge("initial age beyond the period support");
        add_infected(-a, config.law.sample_profile_conditional(a, rng));
    }

    auto aggregate = [&](double t) {
        if (constant_rate) return const_level * static_cast<double>(state.infected());
        return aggregate_infectivity(state, t);
    };
    auto upsilon_of = [&](double aggr) {
        return static_cast<double>(state.susceptible) * n_inv * aggr;
    };

    const auto n_edges =
        static_cast<std::size_t>(std::ceil((x_bar + config.horizon) / config.age_bin)) + 1;

    Trajectory traj;
    traj.age_edges.resize(n_edges);
    for (std::size_t k = 0; k < n_edges; ++k)
        traj.age_edges[k] = static_cast<double>(k + 1) * config.age_bin;

    std::int64_t total_infections = 0;
    double lambda_integral = 0.0;  // integral of Upsilon / N
    double last_upsilon = upsilon_of(aggregate(0.0));

    auto record = [&](double t) {
        traj.times.push_back(t);
        traj.s_bar.push_back(static_cast<double>(state.susceptible) * n_inv);
        traj.i_bar.push_back(static_cast<double>(state.infected()) * n_inv);
        traj.r_bar.push_back(static_cast<double>(state.recovered) * n_inv);
        traj.curly_i_bar.push_back(aggregate(t) * n_inv);
        traj.a_bar.push_back(static_cast<double>(total_infections) * n_inv);
        traj.lambda_bar.push_back(lambda_integral * n_inv);
        traj.age_hist.push_back(age_histogram(state, t, config.age_bin, n_edges));
    };
    record(0.0);

    // record times are k * record_dt; a running += sum drifts past the
    // horizon after enough steps and silently drops the final record
    std::int64_t rec_k = 1;
    double next_record = config.record_dt;
    double t = 0.0;
    double proposal = kInf;
    double bound = 0.0;

    auto refresh_bound = [&]() {
        double b = lambda_star * static_cast<double>(state.infected()) *
                   static_cast<double>(state.susceptible) * n_inv;
        if (b != bound || proposal == kInf) {
            bound = b;
            proposal = b > 0.0 ? t + rng.exponential(b) : kInf;
        }
    };
    refresh_bound();

    auto advance_to = [&](double t_next) {
        // Upsilon is evaluated at the left limit t_next^-: state unchanged yet
        double u = upsilon_of(aggregate(t_next));
        lambda_integral += 0.5 * (last_upsilon + u) * (t_next - t);
        last_upsilon = u;
        t = t_next;
        return u;
    };

    while (t < config.horizon) {
        double t_rec = recoveries.empty() ? kInf : recoveries.top().first;
        double t_next = std::min({proposal, t_rec, next_record, config.horizon});

        if (t_rec <= t_next && t_rec <= config.horizon && t_rec <= proposal &&
            t_rec <= next_record) {
            advance_to(t_rec);
            auto [rt, id] = recoveries.top();
            recoveries.pop();
            auto it = std::find(state.active.begin(), state.active.end(), id);
            std::swap(*it, state.active.back());
            state.active.pop_back();
            if (state.model == Model::SIR)
                ++state.recovered;
            else
                ++state.susceptible;
            last_upsilon = upsilon_of(aggregate(t));
            if (config.record_events) traj.events.push_back({t, Event::Kind::Recovery, id});
            refresh_bound();
            continue;
        }
        if (proposal < t_next || (proposal == t_next && t_next < next_record &&
                                  t_next < config.horizon)) {
            double u = advance_to(proposal);
            bool accept = state.susceptible > 0 && rng.uniform() * bound < u;
            if (accept) {
                auto id = static_cast<std::uint32_t>(state.roster.size());
                --state.susceptible;
                ++total_infections;
                add_infected(t, config.law.sample_profile(rng));
                last_upsilon = upsilon_of(aggregate(t));
                if (config.record_events) traj.events.push_back({t, Event::Kind::Infection, id});
                refresh_bound();
            } else {
                proposal = t + rng.exponential(bound);
            }
            continue;
        }
        advance_to(std::min(next_record, config.horizon));
        if (t >= next_record - 1e-9) {
            record(t);
            ++rec_k;
            next_record = static_cast<double>(rec_k) * config.record_dt;
        }
        if (t >= config.horizon) break;
    }
    return traj;
}

/// Mean-zero and variance-equals-compensator statistics for the scaled
/// martingale A_bar - Lambda_bar across replications of one config.
struct MartingaleReport {
    std::size_t replications = 0;
    double mean_d = 0.0;
    double z_mean = 0.0;
    double var_d = 0.0;
    double mean_compensator_over_n = 0.0;
    double z_var = 0.0;
};

inline MartingaleReport martingale_diagnostic(const std::vector<Trajectory>& replications,
                                              double t, std::int64_t population) {
    if (replications.size() < 30)
        throw InsufficientReplications("martingale diagnostic needs >= 30 replications");
    std::size_t idx = 0;
    const auto& times = replications.front().times;
    double best = kInf;
    for (std::size_t i = 0; i < times.size(); ++i)
        if (std::abs(times[i] - t) < best) {
            best = std::abs(times[i] - t);
            idx = i;
        }
    if (best > 1e-9) throw ConfigInvalid("t must lie on the record grid");

    const auto R = replications.size();
    std::vector<double> d(R), comp(R);
    for (std::size_t r = 0; r < R; ++r) {
        d[r] = replications[r].a_bar[idx] - replications[r].lambda_bar[idx];
        comp[r] = replications[r].lambda_bar[idx] / static_cast<double>(population);
    }
    auto mean_of = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    };
    MartingaleReport rep;
    rep.replications = R;
    rep.mean_d = mean_of(d);
    double var = 0.0;
    std::vector<double> d2(R);
    for (std::size_t r = 0; r < R; ++r) {
        var += (d[r] - rep.mean_d) * (d[r] - rep.mean_d);
        d2[r] = d[r] * d[r];
    }
    var /= static_cast<double>(R - 1);
    rep.var_d = var;
    rep.mean_compensator_over_n = mean_of(comp);
    rep.z_mean = var > 0.0 ? rep.mean_d / std::sqrt(var / static_cast<double>(R)) : 0.0;
    double mean_d2 = mean_of(d2);
    double var_d2 = 0.0;
    for (double x : d2) var_d2 += (x - mean_d2) * (x - mean_d2);
    var_d2 /= static_cast<double>(R > 1 ? R - 1 : 1);
    double se_var = std::sqrt(var_d2 / static_cast<double>(R));
    rep.z_var = se_var > 0.0 ? (rep.var_d - rep.mean_compensator_over_n) / se_var : 0.0;
    return rep;
}

}  // namespace epiv
