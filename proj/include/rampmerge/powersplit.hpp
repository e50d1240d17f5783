#pragma once

// Turns a high-level command (a direct power split, a power demand or an
// acceleration demand) into a PowerSplit that respects every component and
// battery limit.

#include <algorithm>
#include <cmath>
#include <string>
#include <variant>

#include "rampmerge/phev.hpp"

namespace rampmerge::powersplit {

using phev::PhevParams;
using phev::PowerSplit;

/// Direct split from the co-optimizing policy: engine power plus the
/// combined motor-generator/friction-brake channel.
struct CoopCommand {
    double p_eng = 0.0;
    double p_cb = 0.0;
};
struct PowerDemand {
    double p_d = 0.0;
};
struct AccelDemand {
    double a_d = 0.0;
};

struct SplitRequest {
    std::variant<CoopCommand, PowerDemand, AccelDemand> kind;
    double v = 0.0;
    double soc = 0.5;
};

struct SplitResolution {
    PowerSplit split;
    bool saturated = false;
    double requested_p_d = 0.0;
    double achieved_accel = 0.0;
};

namespace detail {

inline PowerSplit finish(double p_eng, double p_mg, double p_fbk, const PhevParams& p) {
    PowerSplit s;
    s.p_eng = p_eng;
    s.p_mg = p_mg;
    s.p_fbk = p_fbk;
    s.p_d = p_eng + p_mg + p_fbk;
    s.p_b = phev::battery_power(p_mg, p);
    return s;
}

/// Regeneration first, friction brake for the remainder. Returns true when
/// the request exceeds the combined braking capability.
inline bool split_braking(double p_brake, const PhevParams& p, double& p_mg, double& p_fbk) {
    p_mg = std::max(p_brake, p.effective_generator_min());
    p_fbk = p_brake - p_mg;
    if (p_fbk < p.p_brk_min) {
        p_fbk = p.p_brk_min;
        return true;
    }
    return false;
}

}  // namespace detail

/// Co-optimization arbitration. The action box is the limit box, so the
/// result is never flagged as saturated.
inline SplitResolution resolve_coop(double p_eng, double p_cb, double v, const PhevParams& p) {
    p_eng = std::clamp(p_eng, 0.0, p.p_eng_max);
    double p_mg = 0.0, p_fbk = 0.0;
    if (p_cb >= 0.0) {
        p_mg = std::min(p_cb, p.effective_motor_max());
    } else {
        detail::split_braking(std::max(p_cb, p.p_g_min + p.p_brk_min), p, p_mg, p_fbk);
    }
    SplitResolution r;
    r.split = detail::finish(p_eng, p_mg, p_fbk, p);
    r.requested_p_d = r.split.p_d;
    r.achieved_accel = phev::longitudinal_accel(v, r.split.p_d, 0.0, p);
    return r;
}

/// Blended charge-depleting rule: electric drive whenever the battery alone
/// can cover the demand; otherwise the engine takes as much as it can and
/// the motor covers the rest.
inline SplitResolution blended_cd(double p_d, double v, const PhevParams& p) {
    SplitResolution r;
    r.requested_p_d = p_d;
    double p_eng = 0.0, p_mg = 0.0, p_fbk = 0.0;
    const double battery_only = p.effective_motor_max();
    if (p_d <= 0.0) {
        r.saturated = detail::split_braking(p_d, p, p_mg, p_fbk);
    } else if (p_d <= battery_only) {
        p_mg = p_d;
    } else {
        p_eng = std::min(p_d, p.p_eng_max);
        const double residual = p_d - p_eng;
        p_mg = std::min(residual, battery_only);
        r.saturated = residual > battery_only;
    }
    r.split = detail::finish(p_eng, p_mg, p_fbk, p);
    r.achieved_accel = phev::longitudinal_accel(v, r.split.p_d, 0.0, p);
    return r;
}

inline SplitResolution resolve_accel(double a_d, double v, const PhevParams& p) {
    return blended_cd(phev::demand_for_accel(v, a_d, 0.0, p), v, p);
}

inline SplitResolution resolve(const SplitRequest& req, const PhevParams& p) {
    return std::visit(
        [&](const auto& k) -> SplitResolution {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, CoopCommand>) return resolve_coop(k.p_eng, k.p_cb, req.v, p);
            else if constexpr (std::is_same_v<K, PowerDemand>) return blended_cd(k.p_d, req.v, p);
            else return resolve_accel(k.a_d, req.v, p);
        },
        req.kind);
}

/// Independent check of every limit on a resolved split; returns an empty
/// string when the split is admissible, otherwise the first violated rule.
inline std::string check_split(const PowerSplit& s, const PhevParams& p, double tol = 1e-9) {
    const double scale = tol * std::max(1.0, std::abs(s.p_d) + std::abs(s.p_eng) + std::abs(s.p_mg) + std::abs(s.p_fbk));
    if (s.p_eng + s.p_mg + s.p_fbk - s.p_d != 0.0) return "power balance";
    if (s.p_eng < 0.0 || s.p_eng > p.p_eng_max + scale) return "engine limits";
    if (s.p_fbk > 0.0 || s.p_fbk < p.p_brk_min - scale) return "friction brake limits";
    if (s.p_mg < p.p_g_min - scale || s.p_mg > p.p_m_max + scale) return "motor-generator limits";
    if (s.p_b < p.p_b_min - scale || s.p_b > p.p_b_max + scale) return "battery limits";
    const double expected_pb = s.p_mg >= 0.0 ? s.p_mg / p.eta_m + p.p_aux : s.p_mg * p.eta_g + p.p_aux;
    if (std::abs(expected_pb - s.p_b) > scale) return "battery coupling";
    return {};
}

}  // namespace rampmerge::powersplit
