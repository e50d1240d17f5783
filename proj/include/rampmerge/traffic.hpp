#pragma once

// Single-lane main road with a single-lane on-ramp. Positions are signed
// distances to the merge point along each lane (negative upstream). Main-road
// vehicles follow the Intelligent Driver Model; the ramp vehicle is invisible
// to them until it enters the junction, where its projection (same distance
// to the merge point) becomes a car-following target.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "rampmerge/errors.hpp"

namespace rampmerge::traffic {

struct RoadConfig {
    double v_limit = 29.06;
    double control_zone_len = 100.0;
    double junction_half_len = 15.0;
    double sensing_radius = 200.0;
    double spawn_prob_per_s = 0.5;
    double dt = 0.1;
    double main_spawn_offset = 400.0;  // spawn point sits this far upstream of the merge point
    double exit_distance = 300.0;      // vehicles despawn past this point
    double ramp_angle_deg = 15.0;
    double collision_gap = 2.5;
    double a_min = -4.5;
    double a_max = 2.6;
    double a_emergency = -9.0;
    double alpha_mean = 1.0;
    double alpha_std = 0.1;
    double alpha_lo = 0.85;
    double alpha_hi = 1.15;
    double headway_min = 1.0;
    double headway_max = 1.6;
    double idm_s0 = 2.0;
    double idm_delta = 4.0;
    double idm_comfortable_decel = 2.5;
    double stop_speed = 0.1;
    int stop_steps = 5;

    template <class V>
    void visit_fields(V&& v) {
        v("v_limit", v_limit);
        v("control_zone_len", control_zone_len);
        v("junction_half_len", junction_half_len);
        v("sensing_radius", sensing_radius);
        v("spawn_prob_per_s", spawn_prob_per_s);
        v("dt", dt);
        v("main_spawn_offset", main_spawn_offset);
        v("exit_distance", exit_distance);
        v("ramp_angle_deg", ramp_angle_deg);
        v("collision_gap", collision_gap);
        v("a_min", a_min);
        v("a_max", a_max);
        v("a_emergency", a_emergency);
        v("alpha_mean", alpha_mean);
        v("alpha_std", alpha_std);
        v("alpha_lo", alpha_lo);
        v("alpha_hi", alpha_hi);
        v("headway_min", headway_min);
        v("headway_max", headway_max);
        v("idm_s0", idm_s0);
        v("idm_delta", idm_delta);
        v("idm_comfortable_decel", idm_comfortable_decel);
        v("stop_speed", stop_speed);
        v("stop_steps", stop_steps);
    }

    void validate() const {
        auto pos = [](double x, const char* n) {
            if (!(x > 0.0) || !std::isfinite(x)) throw ConfigError(std::string("road.") + n + " must be positive");
        };
        pos(v_limit, "v_limit");
        pos(control_zone_len, "control_zone_len");
        pos(junction_half_len, "junction_half_len");
        pos(sensing_radius, "sensing_radius");
        pos(dt, "dt");
        pos(main_spawn_offset, "main_spawn_offset");
        pos(exit_distance, "exit_distance");
        pos(collision_gap, "collision_gap");
        pos(a_max, "a_max");
        pos(idm_s0, "idm_s0");
        pos(idm_delta, "idm_delta");
        pos(idm_comfortable_decel, "idm_comfortable_decel");
        pos(headway_min, "headway_min");
        if (spawn_prob_per_s < 0.0 || spawn_prob_per_s * dt > 1.0)
            throw ConfigError("road.spawn_prob_per_s * dt must lie in [0, 1]");
        if (!(a_min < 0.0) || !(a_emergency <= a_min)) throw ConfigError("road: require a_emergency <= a_min < 0");
        if (!(alpha_lo <= alpha_mean && alpha_mean <= alpha_hi)) throw ConfigError("road: alpha range must contain alpha_mean");
        if (alpha_std < 0.0) throw ConfigError("road.alpha_std must be non-negative");
        if (headway_max < headway_min) throw ConfigError("road: headway_max < headway_min");
        if (!(ramp_angle_deg > 0.0 && ramp_angle_deg < 90.0)) throw ConfigError("road.ramp_angle_deg must lie in (0, 90)");
        if (stop_steps < 1) throw ConfigError("road.stop_steps must be >= 1");
        if (sensing_radius < junction_half_len) throw ConfigError("road: sensing radius smaller than junction");
    }

    double spawn_d() const { return -main_spawn_offset; }
    double max_desired_speed() const { return alpha_hi * v_limit; }
};

enum class Lane { main, ramp };

struct IdmParams {
    double min_gap = 2.0;
    double time_headway = 1.3;
    double accel_exponent = 4.0;
    double comfortable_decel = 2.5;
    double max_accel = 2.6;
};

struct VehicleRecord {
    int id = -1;  // -1 marks a virtual vehicle
    Lane lane = Lane::main;
    double d = 0.0;
    double v = 0.0;
    double a = 0.0;
    double desired_speed = 0.0;
    IdmParams idm;

    bool is_virtual() const { return id < 0; }
};

struct Leader {
    double gap;
    double v;
};

/// IDM acceleration, clipped to [a_emergency, a_max]. Demands beyond the
/// normal floor a_min engage emergency braking down to a_emergency.
inline double idm_accel(const VehicleRecord& f, std::optional<Leader> leader, const RoadConfig& cfg) {
    const IdmParams& k = f.idm;
    const double v0 = std::max(f.desired_speed, 1e-6);
    double a = k.max_accel * (1.0 - std::pow(f.v / v0, k.accel_exponent));
    if (leader) {
        if (!(leader->gap > 0.0)) return cfg.a_emergency;
        const double dv = f.v - leader->v;
        const double s_star =
            k.min_gap + std::max(0.0, f.v * k.time_headway + f.v * dv / (2.0 * std::sqrt(k.max_accel * k.comfortable_decel)));
        const double ratio = s_star / leader->gap;
        a -= k.max_accel * ratio * ratio;
    }
    return std::clamp(a, cfg.a_emergency, cfg.a_max);
}

struct TrafficState {
    std::vector<VehicleRecord> main;  // ordered front (largest d) to back
    std::mt19937_64 rng;
    int next_id = 1;
    long step = 0;
    long spawned = 0;

    explicit TrafficState(std::uint64_t seed = 0) : rng(seed) {}
};

/// Draws one per-step spawn decision. `upstream` is the vehicle closest to
/// the spawn point, if any; the spawn is dropped when its gap is unsafe.
inline std::optional<VehicleRecord> spawn_main_vehicle(std::mt19937_64& rng, const RoadConfig& cfg,
                                                       const VehicleRecord* upstream, int id) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    if (unit(rng) >= cfg.spawn_prob_per_s * cfg.dt) return std::nullopt;
    std::normal_distribution<double> alpha_dist(cfg.alpha_mean, cfg.alpha_std);
    const double alpha = std::clamp(alpha_dist(rng), cfg.alpha_lo, cfg.alpha_hi);
    std::uniform_real_distribution<double> headway(cfg.headway_min, cfg.headway_max);

    VehicleRecord veh;
    veh.id = id;
    veh.lane = Lane::main;
    veh.d = cfg.spawn_d();
    veh.desired_speed = alpha * cfg.v_limit;
    veh.idm.min_gap = cfg.idm_s0;
    veh.idm.time_headway = headway(rng);
    veh.idm.accel_exponent = cfg.idm_delta;
    veh.idm.comfortable_decel = cfg.idm_comfortable_decel;
    veh.idm.max_accel = cfg.a_max;
    veh.v = veh.desired_speed;
    if (upstream) {
        veh.v = std::min(veh.v, upstream->v);
        const double gap = upstream->d - veh.d;
        if (gap < veh.idm.min_gap + veh.v * veh.idm.time_headway) return std::nullopt;
    }
    return veh;
}

/// Phantom main-lane image of a ramp vehicle inside the junction.
inline std::optional<VehicleRecord> project_ramp_vehicle(const VehicleRecord& merger, const RoadConfig& cfg) {
    if (merger.lane != Lane::ramp || merger.d >= 0.0 || merger.d < -cfg.junction_half_len) return std::nullopt;
    VehicleRecord proj = merger;
    proj.lane = Lane::main;
    return proj;
}

/// True when main-road vehicles must account for the merger: it is either
/// inside the junction on the ramp or already on the main lane.
inline bool merger_visible(const VehicleRecord& merger, const RoadConfig& cfg) {
    return merger.lane == Lane::main || merger.d >= -cfg.junction_half_len;
}

/// Advances main-road traffic by one step. `merger` may be null.
inline void step_traffic(TrafficState& st, const VehicleRecord* merger, const RoadConfig& cfg) {
    const bool visible = merger && merger_visible(*merger, cfg);
    const std::size_t n = st.main.size();
    for (std::size_t i = 0; i < n; ++i) {
        VehicleRecord& veh = st.main[i];
        std::optional<Leader> leader;
        if (i > 0) leader = Leader{st.main[i - 1].d - veh.d, st.main[i - 1].v};
        if (visible && merger->d > veh.d && (!leader || merger->d - veh.d < leader->gap))
            leader = Leader{merger->d - veh.d, merger->v};
        veh.a = idm_accel(veh, leader, cfg);
    }
    for (auto& veh : st.main) {
        const double v_new = std::max(0.0, veh.v + veh.a * cfg.dt);
        veh.d += v_new * cfg.dt;
        veh.v = v_new;
    }
    while (!st.main.empty() && st.main.front().d > cfg.exit_distance) st.main.erase(st.main.begin());

    const VehicleRecord* upstream = st.main.empty() ? nullptr : &st.main.back();
    if (auto veh = spawn_main_vehicle(st.rng, cfg, upstream, st.next_id)) {
        ++st.next_id;
        ++st.spawned;
        st.main.push_back(*veh);
    }
    ++st.step;
}

/// Smallest bumper-free gap between consecutive main-lane vehicles.
inline double min_main_gap(const TrafficState& st) {
    double g = INFINITY;
    for (std::size_t i = 1; i < st.main.size(); ++i) g = std::min(g, st.main[i - 1].d - st.main[i].d);
    return g;
}

struct Point2 {
    double x, y;
};

/// Planar position of a vehicle; the main lane is the x axis and the ramp
/// approaches the merge point (origin) at `ramp_angle_deg`.
inline Point2 planar_position(const VehicleRecord& veh, const RoadConfig& cfg) {
    if (veh.lane == Lane::main || veh.d >= 0.0) return {veh.d, 0.0};
    const double th = cfg.ramp_angle_deg * std::numbers::pi / 180.0;
    return {veh.d * std::cos(th), veh.d * std::sin(th)};
}

struct Neighbors {
    VehicleRecord p2, p1, f1, f2;
};

inline VehicleRecord virtual_vehicle(double d, const RoadConfig& cfg) {
    VehicleRecord v;
    v.id = -1;
    v.lane = Lane::main;
    v.d = d;
    v.v = cfg.v_limit;
    v.a = 0.0;
    v.desired_speed = cfg.v_limit;
    return v;
}

/// Two nearest main-lane vehicles ahead of and behind the merger's
/// (projected) position inside the sensing circle; empty slots hold virtual
/// vehicles at the circle/main-lane intersections.
inline Neighbors neighbors(const TrafficState& st, const VehicleRecord& merger, const RoadConfig& cfg) {
    const Point2 pm = planar_position(merger, cfg);
    const double r2 = cfg.sensing_radius * cfg.sensing_radius;
    const double half_chord = std::sqrt(std::max(0.0, r2 - pm.y * pm.y));
    const double lo = pm.x - half_chord, hi = pm.x + half_chord;

    const VehicleRecord* ahead[2] = {nullptr, nullptr};   // p1, p2
    const VehicleRecord* behind[2] = {nullptr, nullptr};  // f1, f2
    // main is ordered front to back: scan backwards for leaders, forwards for followers.
    for (auto it = st.main.rbegin(); it != st.main.rend(); ++it) {
        if (it->d <= merger.d) continue;
        if (it->d > hi) break;
        if (!ahead[0]) ahead[0] = &*it;
        else if (!ahead[1]) { ahead[1] = &*it; break; }
    }
    for (const auto& veh : st.main) {
        if (veh.d > merger.d) continue;
        if (veh.d < lo) break;
        if (!behind[0]) behind[0] = &veh;
        else if (!behind[1]) { behind[1] = &veh; break; }
    }
    Neighbors nb;
    nb.p1 = ahead[0] ? *ahead[0] : virtual_vehicle(hi, cfg);
    nb.p2 = ahead[1] ? *ahead[1] : virtual_vehicle(hi, cfg);
    nb.f1 = behind[0] ? *behind[0] : virtual_vehicle(lo, cfg);
    nb.f2 = behind[1] ? *behind[1] : virtual_vehicle(lo, cfg);
    return nb;
}

struct Events {
    bool collision = false;
    bool stop = false;
    bool success = false;
    bool merged_behind = false;
};

/// Episode-scoped bookkeeping needed by `detect_events`: stop hysteresis and
/// the identity of the first follower seen when the merger entered the zone.
struct MergeTracker {
    int slow_steps = 0;
    int initial_f1_id = -1;
    bool merge_assessed = false;
    bool merged_behind = false;
};

inline bool collides(const TrafficState& st, const VehicleRecord& merger, const RoadConfig& cfg) {
    if (!merger_visible(merger, cfg)) return false;
    for (const auto& veh : st.main)
        if (std::abs(veh.d - merger.d) < cfg.collision_gap) return true;
    return false;
}

inline Events detect_events(const TrafficState& st, const VehicleRecord& merger, MergeTracker& tr,
                            const RoadConfig& cfg) {
    Events ev;
    ev.collision = collides(st, merger, cfg);
    tr.slow_steps = merger.v < cfg.stop_speed ? tr.slow_steps + 1 : 0;
    ev.stop = tr.slow_steps >= cfg.stop_steps;
    ev.success = merger.d >= cfg.control_zone_len;
    if (!tr.merge_assessed && merger.d >= cfg.junction_half_len) {
        tr.merge_assessed = true;
        if (tr.initial_f1_id >= 0) {
            auto it = std::find_if(st.main.begin(), st.main.end(),
                                   [&](const VehicleRecord& v) { return v.id == tr.initial_f1_id; });
            // Vehicles only leave the road at the downstream exit, so a missing f1 is ahead.
            tr.merged_behind = it == st.main.end() || it->d > merger.d;
        }
    }
    ev.merged_behind = tr.merged_behind;
    return ev;
}

/// Per-step trajectory rows: step, vehicle_id, lane, d, v, a.
class TrajectoryLog {
public:
    explicit TrajectoryLog(std::ostream& os) : os_(os) { os_ << "step,vehicle_id,lane,d,v,a\n"; }

    void record(long step, const VehicleRecord& v) {
        os_ << step << ',' << v.id << ',' << (v.lane == Lane::main ? "main" : "ramp") << ',' << v.d << ','
            << v.v << ',' << v.a << '\n';
    }
    void record(long step, const TrafficState& st, const VehicleRecord* merger) {
        if (merger) record(step, *merger);
        for (const auto& v : st.main) record(step, v);
    }

private:
    std::ostream& os_;
};

}  // namespace rampmerge::traffic
