#pragma once

// Reinforcement-learning environment for on-ramp merging of a plug-in
// hybrid. One environment instance owns a traffic world, the merging
// vehicle's kinematic and battery state, and its own RNG.

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rampmerge/errors.hpp"
#include "rampmerge/fields.hpp"
#include "rampmerge/phev.hpp"
#include "rampmerge/powersplit.hpp"
#include "rampmerge/traffic.hpp"

namespace rampmerge::env {

using phev::PhevParams;
using traffic::RoadConfig;
using traffic::VehicleRecord;

enum class Approach { coop, seq_power, seq_accel };

inline std::string to_string(Approach a) {
    switch (a) {
        case Approach::coop: return "coop";
        case Approach::seq_power: return "seq1";
        case Approach::seq_accel: return "seq2";
    }
    return "?";
}

inline Approach parse_approach(const std::string& s) {
    if (s == "coop") return Approach::coop;
    if (s == "seq1" || s == "seq_power") return Approach::seq_power;
    if (s == "seq2" || s == "seq_accel") return Approach::seq_accel;
    throw ConfigError("unknown approach '" + s + "' (expected coop, seq1 or seq2)");
}

inline std::size_t obs_dim(Approach a) { return a == Approach::coop ? 12 : 11; }
inline std::size_t action_dim(Approach a) { return a == Approach::coop ? 2 : 1; }

struct RewardWeights {
    double w_m = 0.015;
    double w_b = 0.015;
    double w_j = 0.1;
    double w_c = 0.005;
    double dv_max = 5.0;
    double j0 = 3.0;
    double r_stop = -1.0;
    double r_collision = -1.0;
    double r_success = 1.0;
    std::string r_m_gate = "junction";  // or "merge_point"

    template <class V>
    void visit_fields(V&& v) {
        v("w_m", w_m);
        v("w_b", w_b);
        v("w_j", w_j);
        v("w_c", w_c);
        v("dv_max", dv_max);
        v("j0", j0);
        v("r_stop", r_stop);
        v("r_collision", r_collision);
        v("r_success", r_success);
        v("r_m_gate", r_m_gate);
    }

    void validate() const {
        if (w_m < 0 || w_b < 0 || w_j < 0 || w_c < 0) throw ConfigError("reward weights must be non-negative");
        if (!(dv_max > 0.0)) throw ConfigError("reward.dv_max must be positive");
        if (j0 < 0.0) throw ConfigError("reward.j0 must be non-negative");
        if (r_m_gate != "junction" && r_m_gate != "merge_point")
            throw ConfigError("reward.r_m_gate must be 'junction' or 'merge_point'");
    }
};

struct EpisodeConfig {
    double v0_min = 22.35;
    double v0_max = 26.82;
    double soc_min = 0.3;
    double soc_max = 0.9;
    double warmup_s = 10.0;
    double max_episode_s = 60.0;

    template <class V>
    void visit_fields(V&& v) {
        v("v0_min", v0_min);
        v("v0_max", v0_max);
        v("soc_min", soc_min);
        v("soc_max", soc_max);
        v("warmup_s", warmup_s);
        v("max_episode_s", max_episode_s);
    }

    void validate() const {
        if (!(0.0 < v0_min && v0_min <= v0_max)) throw ConfigError("episode: require 0 < v0_min <= v0_max");
        if (!(0.0 <= soc_min && soc_min <= soc_max && soc_max <= 1.0))
            throw ConfigError("episode: require 0 <= soc_min <= soc_max <= 1");
        if (warmup_s < 0.0) throw ConfigError("episode.warmup_s must be non-negative");
        if (!(max_episode_s > 0.0)) throw ConfigError("episode.max_episode_s must be positive");
    }
};

struct EnvConfig {
    Approach approach = Approach::coop;
    RoadConfig road;
    PhevParams phev;
    RewardWeights reward;
    EpisodeConfig episode;

    void validate() const {
        road.validate();
        phev.validate();
        reward.validate();
        episode.validate();
    }
};

// ---------------------------------------------------------------- actions

struct ActionBounds {
    std::vector<double> lo, hi;
};

/// Power bounds use the motor-generator limits after intersecting them with
/// the battery limits, so every action in the box is deliverable.
inline ActionBounds action_space(Approach a, const PhevParams& p, const RoadConfig& road) {
    const double brake = p.effective_generator_min() + p.p_brk_min;
    switch (a) {
        case Approach::coop: return {{0.0, brake}, {p.p_eng_max, p.effective_motor_max()}};
        case Approach::seq_power: return {{brake}, {p.effective_motor_max() + p.p_eng_max}};
        case Approach::seq_accel: return {{road.a_min}, {road.a_max}};
    }
    throw UsageError("bad approach");
}

/// Affine map of a policy output in [-1, 1]^n onto the action box.
inline std::vector<double> scale_action(std::span<const double> unit, const ActionBounds& b) {
    if (unit.size() != b.lo.size()) throw UsageError("action dimension mismatch");
    std::vector<double> out(unit.size());
    for (std::size_t i = 0; i < unit.size(); ++i) {
        const double u = std::clamp(unit[i], -1.0, 1.0);
        out[i] = b.lo[i] + 0.5 * (u + 1.0) * (b.hi[i] - b.lo[i]);
    }
    return out;
}

// ---------------------------------------------------------------- rewards

inline double midway_ratio(double dd_p1, double dd_f1) {
    const double sum = dd_p1 + dd_f1;
    if (!(sum > 0.0)) return 1.0;
    return std::abs(dd_p1 - dd_f1) / sum;
}

/// Penalty for merging off-centre or off the leader's speed. The speed term
/// saturates at dv_max so the component stays within [-2 w_m, 0].
inline double reward_merge(double v, double v_p1, double lambda, const RewardWeights& w, bool merged) {
    if (!merged) return 0.0;
    const double speed_term = std::min(std::abs(v_p1 - v) / w.dv_max, 1.0);
    return -w.w_m * (std::clamp(lambda, 0.0, 1.0) + speed_term);
}

inline double reward_follower_brake(double a_f1, const RewardWeights& w, double a_min, double a_max) {
    if (a_f1 >= 0.0) return 0.0;
    return -w.w_b * std::abs(a_f1) / std::max(std::abs(a_min), a_max);
}

inline double jerk_max(const RoadConfig& road) { return (road.a_max - road.a_min) / road.dt; }

/// Comfort penalty, linear between j0 and j_max and saturated beyond j_max.
inline double reward_jerk(double j, const RewardWeights& w, double j_max) {
    const double mag = std::abs(j);
    if (mag <= w.j0) return 0.0;
    return -w.w_j * std::min((mag - w.j0) / (j_max - w.j0), 1.0);
}

inline double reward_energy(double cost, double c_max, const RewardWeights& w) { return -w.w_c * cost / c_max; }

/// Energy surrogate for the sequential approaches, where the policy emits a
/// demand (power or acceleration) rather than a split.
inline double reward_energy_seq(Approach a, double demand, const PhevParams& p, const RoadConfig& road,
                                const RewardWeights& w) {
    if (a == Approach::seq_power)
        return -w.w_c * demand / std::max(std::abs(p.p_g_min + p.p_brk_min), p.p_m_max + p.p_eng_max);
    if (a == Approach::seq_accel) return -w.w_c * demand / std::max(std::abs(road.a_min), road.a_max);
    throw UsageError("reward_energy_seq needs a sequential approach");
}

struct RewardBreakdown {
    double r_m = 0.0, r_b = 0.0, r_j = 0.0, r_c = 0.0, r_terminal = 0.0;
    double total() const { return r_m + r_b + r_j + r_c + r_terminal; }
};

// ------------------------------------------------------------ observation

struct Observation {
    std::array<double, 12> raw{};
    std::array<double, 12> normalized{};
    std::size_t size = 12;

    std::span<const double> values() const { return {raw.data(), size}; }
    std::span<const double> net_input() const { return {normalized.data(), size}; }
};

/// Fixed input scaling: distances by the sensing radius, speeds by the
/// fastest desired speed, accelerations by |a_min|; SOC is passed through.
struct ObsScale {
    double distance = 200.0;
    double speed = 29.06 * 1.15;
    double accel = 4.5;

    static ObsScale from(const RoadConfig& r) {
        return {r.sensing_radius, r.max_desired_speed(), std::max(std::abs(r.a_min), r.a_max)};
    }
};

inline Observation make_observation(Approach a, const traffic::Neighbors& nb, const VehicleRecord& m, double soc,
                                    const ObsScale& sc) {
    Observation o;
    const bool with_soc = a == Approach::coop;
    o.size = with_soc ? 12 : 11;
    std::size_t i = 0;
    auto put = [&](double value, double scale) {
        o.raw[i] = value;
        o.normalized[i] = scale > 0.0 ? std::clamp(value / scale, -1.0, 1.0) : value;
        ++i;
    };
    put(nb.p2.d, sc.distance);
    put(nb.p2.v, sc.speed);
    put(nb.p1.d, sc.distance);
    put(nb.p1.v, sc.speed);
    put(m.d, sc.distance);
    put(m.v, sc.speed);
    put(m.a, sc.accel);
    if (with_soc) put(soc, 0.0);
    put(nb.f1.d, sc.distance);
    put(nb.f1.v, sc.speed);
    put(nb.f2.d, sc.distance);
    put(nb.f2.v, sc.speed);
    return o;
}

// ------------------------------------------------------------------ step

struct StepInfo {
    phev::PowerSplit split;
    bool saturated = false;
    double requested_p_d = 0.0;
    double demand = 0.0;  // raw policy demand: P_d for seq1, a_d for seq2, P_eng+P_cb for coop
    double fuel_cost = 0.0;
    double electricity_cost = 0.0;
    double cost = 0.0;
    double jerk = 0.0;
    double accel = 0.0;
    double lambda = 0.0;
    double v_p1 = 0.0;
    double a_f1 = 0.0;
    bool merged = false;
    bool soc_clamped = false;
    traffic::Events events;
    bool truncated = false;
    long step = 0;
};

struct StepResult {
    Observation obs;
    RewardBreakdown reward;
    bool done = false;
    StepInfo info;
};

class MergeEnv {
public:
    MergeEnv(EnvConfig cfg, std::uint64_t seed)
        : cfg_(std::move(cfg)), rng_(seed), traffic_(0), bounds_(action_space(cfg_.approach, cfg_.phev, cfg_.road)),
          scale_(ObsScale::from(cfg_.road)), c_max_(phev::max_cost_per_step(cfg_.phev, cfg_.road.dt)) {
        cfg_.validate();
    }

    const EnvConfig& config() const { return cfg_; }
    Approach approach() const { return cfg_.approach; }
    std::size_t observation_size() const { return obs_dim(cfg_.approach); }
    std::size_t action_size() const { return action_dim(cfg_.approach); }
    const ActionBounds& bounds() const { return bounds_; }
    double c_max() const { return c_max_; }

    const traffic::TrafficState& traffic_state() const { return traffic_; }
    const VehicleRecord& merger() const { return merger_; }
    double soc() const { return battery_.soc; }
    bool done() const { return done_; }
    long steps() const { return steps_; }
    const traffic::Neighbors& neighbors() const { return nb_; }
    long soc_clamp_events() const { return soc_clamps_; }

    /// Fresh main-road traffic warmed up without the merger, then the merger
    /// placed at the bottom of the control zone.
    Observation reset() {
        traffic_ = traffic::TrafficState(rng_());
        const long warm = std::lround(cfg_.episode.warmup_s / cfg_.road.dt);
        for (long i = 0; i < warm; ++i) traffic::step_traffic(traffic_, nullptr, cfg_.road);

        std::uniform_real_distribution<double> v0(cfg_.episode.v0_min, cfg_.episode.v0_max);
        std::uniform_real_distribution<double> soc0(cfg_.episode.soc_min, cfg_.episode.soc_max);
        merger_ = VehicleRecord{};
        merger_.id = 0;
        merger_.lane = traffic::Lane::ramp;
        merger_.d = -cfg_.road.control_zone_len;
        merger_.v = v0(rng_);
        merger_.a = 0.0;
        merger_.desired_speed = cfg_.road.v_limit;
        battery_.soc = soc0(rng_);

        tracker_ = traffic::MergeTracker{};
        nb_ = traffic::neighbors(traffic_, merger_, cfg_.road);
        tracker_.initial_f1_id = nb_.f1.id;
        prev_accel_ = 0.0;
        steps_ = 0;
        done_ = false;
        return make_observation(cfg_.approach, nb_, merger_, battery_.soc, scale_);
    }

    StepResult step(std::span<const double> unit_action) {
        if (done_) throw UsageError("step() called on a finished episode; call reset()");
        const RoadConfig& road = cfg_.road;
        const PhevParams& p = cfg_.phev;
        const std::vector<double> act = scale_action(unit_action, bounds_);

        StepResult out;
        StepInfo& info = out.info;
        powersplit::SplitResolution res;
        switch (cfg_.approach) {
            case Approach::coop:
                res = powersplit::resolve_coop(act[0], act[1], merger_.v, p);
                info.demand = act[0] + act[1];
                break;
            case Approach::seq_power:
                res = powersplit::blended_cd(act[0], merger_.v, p);
                info.demand = act[0];
                break;
            case Approach::seq_accel:
                res = powersplit::resolve_accel(act[0], merger_.v, p);
                info.demand = act[0];
                break;
        }
        info.split = res.split;
        info.saturated = res.saturated;
        info.requested_p_d = res.requested_p_d;

        const phev::PowertrainStep pt = phev::step_powertrain(battery_, res.split, merger_.v, road.dt, p);
        if (pt.soc_clamped) ++soc_clamps_;
        info.soc_clamped = pt.soc_clamped;

        const VehicleRecord before = merger_;
        battery_ = pt.battery;
        merger_.v = pt.v;
        merger_.a = pt.a;
        merger_.d += pt.v * road.dt;
        if (merger_.d >= 0.0) merger_.lane = traffic::Lane::main;
        traffic::step_traffic(traffic_, &before, road);
        ++steps_;

        info.events = traffic::detect_events(traffic_, merger_, tracker_, road);
        nb_ = traffic::neighbors(traffic_, merger_, road);

        info.accel = merger_.a;
        info.jerk = (merger_.a - prev_accel_) / road.dt;
        prev_accel_ = merger_.a;
        info.fuel_cost = pt.cost.fuel;
        info.electricity_cost = pt.cost.electricity;
        info.cost = pt.cost.total();
        info.merged = cfg_.reward.r_m_gate == "junction" ? merger_.d >= -road.junction_half_len : merger_.d >= 0.0;
        info.lambda = midway_ratio(nb_.p1.d - merger_.d, merger_.d - nb_.f1.d);
        info.v_p1 = nb_.p1.v;
        info.a_f1 = nb_.f1.a;
        info.step = steps_;

        RewardBreakdown& r = out.reward;
        const RewardWeights& w = cfg_.reward;
        r.r_m = reward_merge(merger_.v, info.v_p1, info.lambda, w, info.merged);
        r.r_b = reward_follower_brake(info.a_f1, w, road.a_min, road.a_max);
        r.r_j = reward_jerk(info.jerk, w, jerk_max(road));
        r.r_c = cfg_.approach == Approach::coop ? reward_energy(info.cost, c_max_, w)
                                                : reward_energy_seq(cfg_.approach, info.demand, p, road, w);
        if (info.events.collision) {
            r.r_terminal = w.r_collision;
            done_ = true;
        } else if (info.events.stop) {
            r.r_terminal = w.r_stop;
            done_ = true;
        } else if (info.events.success) {
            r.r_terminal = w.r_success;
            done_ = true;
        } else if (steps_ >= std::lround(cfg_.episode.max_episode_s / road.dt)) {
            info.truncated = true;
            done_ = true;
        }
        out.done = done_;
        out.obs = make_observation(cfg_.approach, nb_, merger_, battery_.soc, scale_);
        return out;
    }

private:
    EnvConfig cfg_;
    std::mt19937_64 rng_;
    traffic::TrafficState traffic_;
    ActionBounds bounds_;
    ObsScale scale_;
    double c_max_;

    VehicleRecord merger_;
    phev::BatteryState battery_;
    traffic::MergeTracker tracker_;
    traffic::Neighbors nb_;
    double prev_accel_ = 0.0;
    long steps_ = 0;
    long soc_clamps_ = 0;
    bool done_ = true;
};

}  // namespace rampmerge::env
