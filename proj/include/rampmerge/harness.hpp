#pragma once

// Experiment plumbing shared by the command-line tool and the acceptance
// suite: training runs, seeded evaluation with per-episode metrics, summary
// aggregation, best-of-repeats selection, comparison tables and episode
// traces.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "rampmerge/checkpoint.hpp"
#include "rampmerge/config.hpp"
#include "rampmerge/env.hpp"
#include "rampmerge/sac.hpp"

namespace rampmerge::harness {

using fields::json;

/// Scalar type of the trained networks.
using Real = float;

inline constexpr int kSummarySchema = 1;

// ---------------------------------------------------------------- training

/// Exposes MergeEnv through the learner's environment contract, handing the
/// fixed-scale observation mirror to the networks.
class EnvAdapter final : public sac::Environment {
public:
    EnvAdapter(env::EnvConfig cfg, std::uint64_t seed) : env_(std::move(cfg), seed) {}

    std::size_t observation_size() const override { return env_.observation_size(); }
    std::size_t action_size() const override { return env_.action_size(); }

    std::vector<double> reset() override {
        const auto o = env_.reset();
        return {o.net_input().begin(), o.net_input().end()};
    }

    sac::Transition step(std::span<const double> action) override {
        const env::StepResult r = env_.step(action);
        sac::Transition t;
        t.obs.assign(r.obs.net_input().begin(), r.obs.net_input().end());
        t.reward = r.reward.total();
        t.done = r.done;
        t.truncated = r.info.truncated;
        return t;
    }

    const env::MergeEnv& inner() const { return env_; }

private:
    env::MergeEnv env_;
};

inline env::EnvConfig env_config(const config::RunConfig& cfg, env::Approach approach) {
    env::EnvConfig e = cfg.env;
    e.approach = approach;
    return e;
}

inline sac::EnvFactory make_env_factory(env::EnvConfig cfg) {
    return [cfg](std::uint64_t seed) -> std::unique_ptr<sac::Environment> {
        return std::make_unique<EnvAdapter>(cfg, seed);
    };
}

inline sac::TrainResult<Real> train_approach(const config::RunConfig& cfg, env::Approach approach, long steps,
                                             std::uint64_t seed, const sac::TrainCallbacks& cb = {}) {
    return sac::train<Real>(make_env_factory(env_config(cfg, approach)), cfg.sac, steps, seed, cb);
}

inline std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline void write_training_log(std::ostream& os, const std::vector<sac::EpisodeLog>& log) {
    os << "env_step,episode,undiscounted_return,length,critic_loss,actor_loss,alpha,entropy\n";
    for (const auto& e : log)
        os << e.env_step << ',' << e.episode << ',' << format_double(e.undiscounted_return) << ',' << e.length << ','
           << format_double(e.critic_loss) << ',' << format_double(e.actor_loss) << ',' << format_double(e.alpha)
           << ',' << format_double(e.entropy) << '\n';
}

/// Trailing moving average of the undiscounted return with a window of
/// `window` episodes (shorter at the start).
inline std::vector<double> moving_average(const std::vector<sac::EpisodeLog>& log, std::size_t window) {
    std::vector<double> out(log.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < log.size(); ++i) {
        sum += log[i].undiscounted_return;
        if (i >= window) sum -= log[i - window].undiscounted_return;
        out[i] = sum / double(std::min(i + 1, window));
    }
    return out;
}

/// Mean of the moving average over episodes that ended in the first and the
/// last `fraction` of the environment-step budget.
struct LearningProgress {
    double first = 0.0;
    double last = 0.0;
    std::size_t first_count = 0;
    std::size_t last_count = 0;
};

inline LearningProgress learning_progress(const std::vector<sac::EpisodeLog>& log, long total_steps, double fraction,
                                          std::size_t window = 1000) {
    LearningProgress p;
    const std::vector<double> ma = moving_average(log, window);
    const double lo = fraction * double(total_steps), hi = (1.0 - fraction) * double(total_steps);
    for (std::size_t i = 0; i < log.size(); ++i) {
        if (double(log[i].env_step) <= lo) {
            p.first += ma[i];
            ++p.first_count;
        }
        if (double(log[i].env_step) > hi) {
            p.last += ma[i];
            ++p.last_count;
        }
    }
    if (p.first_count) p.first /= double(p.first_count);
    if (p.last_count) p.last /= double(p.last_count);
    return p;
}

// -------------------------------------------------------------- evaluation

struct EpisodeMetrics {
    long episode_id = 0;
    bool saturated = false;
    bool collided = false;
    bool stopped = false;
    bool succeeded = false;
    bool timed_out = false;  // counted as a stop
    double fuel_cost = 0.0;
    double electricity_cost = 0.0;
    double combined_cost = 0.0;
    double mean_abs_jerk = 0.0;
    bool merged_behind = false;
    long episode_steps = 0;
    double undiscounted_return = 0.0;
    long soc_clamps = 0;
};

struct RunSummary {
    std::string approach;
    long n_episodes = 0;
    double saturation_rate = 0.0;
    double collision_rate = 0.0;
    double stop_rate = 0.0;
    double success_rate = 0.0;
    double avg_fuel_cost = 0.0;
    double avg_electricity_cost = 0.0;
    double avg_combined_cost = 0.0;
    double avg_jerk = 0.0;
    double merge_behind_rate = 0.0;
    double avg_return = 0.0;
    double avg_steps = 0.0;
    long negative_electricity_episodes = 0;
    long timeouts = 0;
    std::uint64_t seed = 0;
    std::string config_hash;
    std::string policy;  // checkpoint path or "random"
};

/// Maps an observation to an action in [-1, 1]^n. Must be safe to call
/// concurrently with distinct generators.
using ActionFn = std::function<std::vector<double>(const env::Observation&, std::mt19937_64&)>;

inline ActionFn random_policy(std::size_t act_dim) {
    return [act_dim](const env::Observation&, std::mt19937_64& rng) {
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        std::vector<double> a(act_dim);
        for (auto& x : a) x = u(rng);
        return a;
    };
}

template <class S>
ActionFn policy_fn(std::shared_ptr<const sac::Policy<S>> policy, bool deterministic) {
    return [policy, deterministic](const env::Observation& o, std::mt19937_64& rng) {
        return policy->act(o.net_input(), deterministic, rng);
    };
}

inline std::uint64_t episode_seed(std::uint64_t seed, long episode_id) {
    return sac::splitmix64(sac::splitmix64(seed) ^ (std::uint64_t(episode_id) * 0x9e3779b97f4a7c15ULL + 1));
}

/// Observer of one episode, called after reset (with a null result) and
/// after every step.
using StepObserver = std::function<void(const env::MergeEnv&, const env::Observation&, const env::StepResult*)>;

inline EpisodeMetrics run_episode(const env::EnvConfig& cfg, const ActionFn& act, std::uint64_t seed, long episode_id,
                                  const StepObserver& observe = {}) {
    const std::uint64_t s = episode_seed(seed, episode_id);
    env::MergeEnv world(cfg, s);
    std::mt19937_64 policy_rng(sac::splitmix64(s ^ 0x706f6c696379ULL));
    env::Observation obs = world.reset();
    if (observe) observe(world, obs, nullptr);
    EpisodeMetrics m;
    m.episode_id = episode_id;
    double jerk_sum = 0.0;
    for (;;) {
        const std::vector<double> a = act(obs, policy_rng);
        const env::StepResult r = world.step(a);
        m.saturated = m.saturated || r.info.saturated;
        m.fuel_cost += r.info.fuel_cost;
        m.electricity_cost += r.info.electricity_cost;
        jerk_sum += std::abs(r.info.jerk);
        m.undiscounted_return += r.reward.total();
        ++m.episode_steps;
        obs = r.obs;
        if (observe) observe(world, obs, &r);
        if (r.done) {
            m.collided = r.info.events.collision;
            m.stopped = !m.collided && r.info.events.stop;
            m.timed_out = r.info.truncated;
            m.stopped = m.stopped || m.timed_out;
            m.succeeded = !m.collided && !m.stopped && r.info.events.success;
            m.merged_behind = r.info.events.merged_behind;
            break;
        }
    }
    m.combined_cost = m.fuel_cost + m.electricity_cost;
    m.mean_abs_jerk = jerk_sum / double(m.episode_steps);
    m.soc_clamps = world.soc_clamp_events();
    return m;
}

inline RunSummary summarize(const std::vector<EpisodeMetrics>& eps) {
    RunSummary s;
    s.n_episodes = long(eps.size());
    if (eps.empty()) return s;
    for (const auto& e : eps) {
        s.saturation_rate += e.saturated;
        s.collision_rate += e.collided;
        s.stop_rate += e.stopped;
        s.success_rate += e.succeeded;
        s.avg_fuel_cost += e.fuel_cost;
        s.avg_electricity_cost += e.electricity_cost;
        s.avg_combined_cost += e.combined_cost;
        s.avg_jerk += e.mean_abs_jerk;
        s.merge_behind_rate += e.merged_behind;
        s.avg_return += e.undiscounted_return;
        s.avg_steps += double(e.episode_steps);
        s.negative_electricity_episodes += e.electricity_cost < 0.0;
        s.timeouts += e.timed_out;
    }
    const double n = double(eps.size());
    for (double* f : {&s.saturation_rate, &s.collision_rate, &s.stop_rate, &s.success_rate, &s.avg_fuel_cost,
                      &s.avg_electricity_cost, &s.avg_combined_cost, &s.avg_jerk, &s.merge_behind_rate, &s.avg_return,
                      &s.avg_steps})
        *f /= n;
    return s;
}

/// Runs `n` episodes. Episode i always sees the world seeded from
/// (seed, i), so any two evaluations with the same seed face identical
/// traffic. Results are ordered by episode id regardless of `threads`.
inline std::vector<EpisodeMetrics> evaluate_episodes(const env::EnvConfig& cfg, const ActionFn& act, long n,
                                                     std::uint64_t seed, int threads = 1) {
    std::vector<EpisodeMetrics> out(std::size_t(std::max(0L, n)));
    if (threads <= 1 || n < 2) {
        for (long i = 0; i < n; ++i) out[std::size_t(i)] = run_episode(cfg, act, seed, i);
        return out;
    }
    std::atomic<long> next{0};
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w)
        pool.emplace_back([&, w] {
            try {
                for (long i = next++; i < n; i = next++) out[std::size_t(i)] = run_episode(cfg, act, seed, i);
            } catch (...) {
                errors[std::size_t(w)] = std::current_exception();
                next = n;
            }
        });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

inline void write_episodes_csv(std::ostream& os, const std::vector<EpisodeMetrics>& eps) {
    os << "episode_id,saturated,collided,stopped,succeeded,timed_out,fuel_cost,electricity_cost,combined_cost,"
          "mean_abs_jerk,merged_behind,episode_steps,undiscounted_return,soc_clamps\n";
    for (const auto& e : eps)
        os << e.episode_id << ',' << e.saturated << ',' << e.collided << ',' << e.stopped << ',' << e.succeeded << ','
           << e.timed_out << ',' << format_double(e.fuel_cost) << ',' << format_double(e.electricity_cost) << ','
           << format_double(e.combined_cost) << ',' << format_double(e.mean_abs_jerk) << ',' << e.merged_behind << ','
           << e.episode_steps << ',' << format_double(e.undiscounted_return) << ',' << e.soc_clamps << '\n';
}

inline json summary_to_json(const RunSummary& s) {
    return json{{"schema_version", kSummarySchema},
                {"approach", s.approach},
                {"n_episodes", s.n_episodes},
                {"saturation_rate", s.saturation_rate},
                {"collision_rate", s.collision_rate},
                {"stop_rate", s.stop_rate},
                {"success_rate", s.success_rate},
                {"avg_fuel_cost", s.avg_fuel_cost},
                {"avg_electricity_cost", s.avg_electricity_cost},
                {"avg_combined_cost", s.avg_combined_cost},
                {"avg_jerk", s.avg_jerk},
                {"merge_behind_rate", s.merge_behind_rate},
                {"avg_return", s.avg_return},
                {"avg_steps", s.avg_steps},
                {"negative_electricity_episodes", s.negative_electricity_episodes},
                {"timeouts", s.timeouts},
                {"seed", s.seed},
                {"config_hash", s.config_hash},
                {"policy", s.policy}};
}

inline RunSummary summary_from_json(const json& j) {
    try {
        if (j.at("schema_version").get<int>() != kSummarySchema) throw ConfigError("unsupported summary schema_version");
        RunSummary s;
        s.approach = j.at("approach").get<std::string>();
        s.n_episodes = j.at("n_episodes").get<long>();
        s.saturation_rate = j.at("saturation_rate").get<double>();
        s.collision_rate = j.at("collision_rate").get<double>();
        s.stop_rate = j.at("stop_rate").get<double>();
        s.success_rate = j.at("success_rate").get<double>();
        s.avg_fuel_cost = j.at("avg_fuel_cost").get<double>();
        s.avg_electricity_cost = j.at("avg_electricity_cost").get<double>();
        s.avg_combined_cost = j.at("avg_combined_cost").get<double>();
        s.avg_jerk = j.at("avg_jerk").get<double>();
        s.merge_behind_rate = j.at("merge_behind_rate").get<double>();
        s.avg_return = j.at("avg_return").get<double>();
        s.avg_steps = j.at("avg_steps").get<double>();
        s.negative_electricity_episodes = j.at("negative_electricity_episodes").get<long>();
        s.timeouts = j.at("timeouts").get<long>();
        s.seed = j.at("seed").get<std::uint64_t>();
        s.config_hash = j.at("config_hash").get<std::string>();
        s.policy = j.at("policy").get<std::string>();
        return s;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed summary: ") + e.what());
    }
}

// --------------------------------------------------------------- selection

/// Ordering used to pick the best of several trained repeats: runs free of
/// collisions and stops first, then fewer failures, then lower combined
/// energy cost, then lower jerk.
inline bool better_run(const RunSummary& a, const RunSummary& b) {
    const double fa = a.collision_rate + a.stop_rate, fb = b.collision_rate + b.stop_rate;
    const bool clean_a = fa == 0.0, clean_b = fb == 0.0;
    if (clean_a != clean_b) return clean_a;
    if (fa != fb) return fa < fb;
    if (a.avg_combined_cost != b.avg_combined_cost) return a.avg_combined_cost < b.avg_combined_cost;
    return a.avg_jerk < b.avg_jerk;
}

inline std::size_t select_best(const std::vector<RunSummary>& runs) {
    if (runs.empty()) throw UsageError("select_best needs at least one run");
    std::size_t best = 0;
    for (std::size_t i = 1; i < runs.size(); ++i)
        if (better_run(runs[i], runs[best])) best = i;
    return best;
}

/// Seed of the k-th training repeat.
inline std::uint64_t repeat_seed(std::uint64_t seed, int k) {
    return k == 0 ? seed : sac::splitmix64(seed + std::uint64_t(k));
}

/// Seed of the selection episodes, disjoint from the test seed stream.
inline std::uint64_t selection_seed(std::uint64_t seed) { return sac::splitmix64(seed ^ 0x73656c656374ULL); }

// -------------------------------------------------------------- comparison

struct Comparison {
    std::vector<RunSummary> rows;
    std::size_t baseline = 0;
    bool baseline_is_seq1 = false;
    bool mixed_configs = false;
};

inline Comparison compare_runs(std::vector<RunSummary> rows) {
    if (rows.size() < 2) throw UsageError("compare needs at least two summaries");
    Comparison c;
    c.rows = std::move(rows);
    for (std::size_t i = 0; i < c.rows.size(); ++i)
        if (c.rows[i].approach == "seq1") {
            c.baseline = i;
            c.baseline_is_seq1 = true;
            break;
        }
    for (const auto& r : c.rows) c.mixed_configs = c.mixed_configs || r.config_hash != c.rows.front().config_hash;
    return c;
}

inline double relative_delta(double value, double base) {
    if (base == 0.0) return value == 0.0 ? 0.0 : std::numeric_limits<double>::quiet_NaN();
    return (value - base) / std::abs(base);
}

inline const char* kComparisonHeader =
    "approach,n_episodes,saturation_rate,collision_rate,fuel_cost,electricity_cost,combined_cost,avg_jerk,"
    "merge_behind_rate";

inline void write_comparison_csv(std::ostream& os, const Comparison& c) {
    os << kComparisonHeader << '\n';
    for (const auto& r : c.rows)
        os << r.approach << ',' << r.n_episodes << ',' << format_double(r.saturation_rate) << ','
           << format_double(r.collision_rate) << ',' << format_double(r.avg_fuel_cost) << ','
           << format_double(r.avg_electricity_cost) << ',' << format_double(r.avg_combined_cost) << ','
           << format_double(r.avg_jerk) << ',' << format_double(r.merge_behind_rate) << '\n';
}

inline std::string percent(double x, int digits = 1) {
    if (std::isnan(x)) return "n/a";
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(digits) << (x >= 0.0 ? "+" : "") << 100.0 * x << '%';
    return ss.str();
}

inline void write_comparison_markdown(std::ostream& os, const Comparison& c) {
    const RunSummary& base = c.rows[c.baseline];
    auto fixed = [](double x, int digits) {
        std::ostringstream ss;
        ss << std::fixed << std::setprecision(digits) << x;
        return ss.str();
    };
    auto rate = [&](double x) { return fixed(100.0 * x, 2) + "%"; };
    os << "| Approach | Episodes | Saturation rate | Collision rate | Fuel [USD] | Electricity [USD] | Combined [USD] "
          "| Avg jerk [m/s^3] | Merge-behind rate |\n";
    os << "|---|---|---|---|---|---|---|---|---|\n";
    for (const auto& r : c.rows) {
        os << "| " << r.approach << " | " << r.n_episodes << " | " << rate(r.saturation_rate) << " | "
           << rate(r.collision_rate) << " | " << fixed(r.avg_fuel_cost, 4) << " | " << fixed(r.avg_electricity_cost, 4)
           << " | " << fixed(r.avg_combined_cost, 4) << " (" << percent(relative_delta(r.avg_combined_cost, base.avg_combined_cost), 0)
           << ") | " << fixed(r.avg_jerk, 2) << " (" << percent(relative_delta(r.avg_jerk, base.avg_jerk), 0) << ") | "
           << rate(r.merge_behind_rate) << " |\n";
    }
    os << "\nPercentages in parentheses are relative to " << base.approach
       << (c.baseline_is_seq1 ? "." : " (no seq1 run was supplied; the first run is the baseline).") << '\n';
    double stops = 0.0;
    for (const auto& r : c.rows) stops = std::max(stops, r.stop_rate);
    os << "Maximum stop rate across runs: " << rate(stops) << ".\n";
    if (c.mixed_configs) os << "\nWARNING: the runs were produced with different world configurations.\n";
}

// ------------------------------------------------------------------- trace

inline const char* kTraceHeader =
    "step,t,d_p2,d_p1,d,d_f1,d_f2,v_p2,v_p1,v,v_f1,v_f2,a,a_f1,j,p_d,p_eng,p_mg,p_fbk,p_b,soc,cost,fuel_cost,"
    "electricity_cost,saturated,reward";

/// Writes one row per step (plus the initial state) of a single episode.
inline StepObserver trace_writer(std::ostream& os, double dt, traffic::TrajectoryLog* traffic_log = nullptr) {
    os << kTraceHeader << '\n';
    return [&os, dt, traffic_log](const env::MergeEnv& w, const env::Observation&, const env::StepResult* r) {
        const auto& nb = w.neighbors();
        const auto& m = w.merger();
        const long step = w.steps();
        const env::StepInfo info = r ? r->info : env::StepInfo{};
        const double reward = r ? r->reward.total() : 0.0;
        os << step << ',' << format_double(double(step) * dt);
        for (double x : {nb.p2.d, nb.p1.d, m.d, nb.f1.d, nb.f2.d, nb.p2.v, nb.p1.v, m.v, nb.f1.v, nb.f2.v, m.a, nb.f1.a,
                         info.jerk, info.split.p_d, info.split.p_eng, info.split.p_mg, info.split.p_fbk,
                         info.split.p_b, w.soc(), info.cost, info.fuel_cost, info.electricity_cost})
            os << ',' << format_double(x);
        os << ',' << info.saturated << ',' << format_double(reward) << '\n';
        if (traffic_log) traffic_log->record(step, w.traffic_state(), &m);
    };
}

// --------------------------------------------------------------- file I/O

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
    os << text;
}

inline json read_json(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open '" + path.string() + "'");
    const json j = json::parse(is, nullptr, false);
    if (j.is_discarded()) throw ConfigError("'" + path.string() + "' is not valid JSON");
    return j;
}

}  // namespace rampmerge::harness
