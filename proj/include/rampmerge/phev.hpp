#pragma once

// Power-domain model of a power-split plug-in hybrid: component power
// balance, battery SOC dynamics, fuel rate, longitudinal dynamics and the
// monetary energy cost of one time step.

#include <algorithm>
#include <cmath>
#include <string>

#include "rampmerge/errors.hpp"
#include "rampmerge/fields.hpp"

namespace rampmerge::phev {

inline constexpr double kJoulesPerKwh = 3.6e6;
inline constexpr double kVelocityFloor = 0.1;  // m/s, guards the P/v term

/// Powertrain, battery and body constants. Units are SI except `k_e`,
/// which is configured in USD/kWh and converted through `k_e_per_joule()`.
///
/// Defaults come from public 2015 Prius Plug-In figures (1530 kg curb mass,
/// 73 kW engine, 60 kW MG2, 4.4 kWh / 207 V pack) with an SOC-independent
/// battery polynomial; they are substitutes, not identified values.
struct PhevParams {
    double eta_m = 0.90;
    double eta_g = 0.90;
    double eta_t = 0.95;
    double eta_b = 0.95;
    double eta_chr = 0.90;
    double p_aux = 300.0;

    double a1 = 6.4e-8;  // kg/s per W (~230 g/kWh)
    double a2 = 1.0e-4;  // kg/s

    double b1 = 0.0, b2 = 0.0, b3 = 207.0;  // V
    double c1 = 0.0, c2 = 0.0, c3 = 0.25;   // ohm
    double q_max = 4400.0 * 3600.0 / 207.0;  // C

    double mass = 1530.0;
    double cd = 0.25;
    double rho = 1.2;
    double area = 2.2;
    double mu = 0.0085;
    double mu2 = 1.0e-4;
    double gravity = 9.81;

    double p_eng_max = 73000.0;
    double p_brk_min = -120000.0;
    double p_g_min = -30000.0;
    double p_m_max = 60000.0;
    double p_b_min = -36000.0;
    double p_b_max = 36000.0;

    double k_f = 0.93;  // USD/kg
    double k_e = 0.13;  // USD/kWh

    template <class V>
    void visit_fields(V&& v) {
        v("eta_m", eta_m);
        v("eta_g", eta_g);
        v("eta_t", eta_t);
        v("eta_b", eta_b);
        v("eta_chr", eta_chr);
        v("p_aux", p_aux);
        v("a1", a1);
        v("a2", a2);
        v("b1", b1);
        v("b2", b2);
        v("b3", b3);
        v("c1", c1);
        v("c2", c2);
        v("c3", c3);
        v("q_max", q_max);
        v("mass", mass);
        v("cd", cd);
        v("rho", rho);
        v("area", area);
        v("mu", mu);
        v("mu2", mu2);
        v("gravity", gravity);
        v("p_eng_max", p_eng_max);
        v("p_brk_min", p_brk_min);
        v("p_g_min", p_g_min);
        v("p_m_max", p_m_max);
        v("p_b_min", p_b_min);
        v("p_b_max", p_b_max);
        v("k_f", k_f);
        v("k_e", k_e);
    }

    double k_e_per_joule() const { return k_e / kJoulesPerKwh; }

    double open_circuit_voltage(double soc) const { return (b1 * soc + b2) * soc + b3; }
    double internal_resistance(double soc) const { return (c1 * soc + c2) * soc + c3; }

    /// Largest p_mg the battery discharge limit admits (motoring branch).
    double motor_limit_from_battery() const { return (p_b_max - p_aux) * eta_m; }
    /// Most negative p_mg the battery charge limit admits (generating branch).
    double generator_limit_from_battery() const { return (p_b_min - p_aux) / eta_g; }

    double effective_motor_max() const { return std::min(p_m_max, motor_limit_from_battery()); }
    double effective_generator_min() const {
        return std::min(0.0, std::max(p_g_min, generator_limit_from_battery()));
    }

    void validate() const {
        auto eff = [](double x, const char* name) {
            if (!(x > 0.0 && x <= 1.0)) throw ConfigError(std::string(name) + " must lie in (0, 1]");
        };
        eff(eta_m, "eta_m");
        eff(eta_g, "eta_g");
        eff(eta_t, "eta_t");
        eff(eta_b, "eta_b");
        eff(eta_chr, "eta_chr");
        double all[] = {eta_m, eta_g, eta_t, eta_b, eta_chr, p_aux, a1, a2, b1, b2, b3, c1, c2, c3,
                        q_max, mass, cd, rho, area, mu, mu2, gravity, p_eng_max, p_brk_min,
                        p_g_min, p_m_max, p_b_min, p_b_max, k_f, k_e};
        for (double x : all)
            if (!std::isfinite(x)) throw ConfigError("phev parameters must be finite");
        if (!(q_max > 0.0)) throw ConfigError("q_max must be positive");
        if (!(mass > 0.0)) throw ConfigError("mass must be positive");
        if (!(gravity > 0.0)) throw ConfigError("gravity must be positive");
        if (p_eng_max < 0.0 || p_brk_min > 0.0) throw ConfigError("require p_eng_max >= 0 >= p_brk_min");
        if (p_m_max < 0.0 || p_g_min > 0.0) throw ConfigError("require p_m_max >= 0 >= p_g_min");
        if (p_b_max < 0.0 || p_b_min > 0.0) throw ConfigError("require p_b_max >= 0 >= p_b_min");
        if (p_aux < 0.0 || p_aux > p_b_max) throw ConfigError("p_aux must lie in [0, p_b_max]");
        if (a1 < 0.0 || a2 < 0.0) throw ConfigError("fuel map coefficients must be non-negative");
        if (k_f < 0.0 || k_e < 0.0) throw ConfigError("prices must be non-negative");
        if (!(quadratic_min_on_unit(b1, b2, b3) > 0.0))
            throw ConfigError("open-circuit voltage polynomial must stay positive on [0, 1]");
        if (!(quadratic_min_on_unit(c1, c2, c3) > 0.0))
            throw ConfigError("internal resistance polynomial must stay positive on [0, 1]");
    }

    static double quadratic_min_on_unit(double k2, double k1, double k0) {
        auto f = [&](double x) { return (k2 * x + k1) * x + k0; };
        double m = std::min(f(0.0), f(1.0));
        if (k2 > 0.0) {
            const double vertex = -k1 / (2.0 * k2);
            if (vertex > 0.0 && vertex < 1.0) m = std::min(m, f(vertex));
        }
        return m;
    }
};

inline PhevParams params_from_json(const fields::json& j) {
    PhevParams p;
    fields::merge(p, j, "phev", /*require_all=*/true);
    p.validate();
    return p;
}

inline fields::json params_to_json(const PhevParams& p) { return fields::dump(p); }

/// Resolved component powers of one step. p_d = p_eng + p_mg + p_fbk.
struct PowerSplit {
    double p_d = 0.0;
    double p_eng = 0.0;
    double p_mg = 0.0;
    double p_fbk = 0.0;
    double p_b = 0.0;
};

struct BatteryState {
    double soc = 0.5;
};

inline double battery_power(double p_mg, const PhevParams& p) {
    if (p_mg > p.p_m_max)
        throw ConstraintViolation("p_mg " + std::to_string(p_mg) + " W exceeds p_m_max");
    if (p_mg < p.p_g_min)
        throw ConstraintViolation("p_mg " + std::to_string(p_mg) + " W below p_g_min");
    return p_mg >= 0.0 ? p_mg / p.eta_m + p.p_aux : p_mg * p.eta_g + p.p_aux;
}

inline double fuel_rate(double p_eng, const PhevParams& p) {
    if (p_eng < 0.0) throw ConstraintViolation("p_eng must be non-negative (below 0)");
    if (p_eng > p.p_eng_max) throw ConstraintViolation("p_eng exceeds p_eng_max");
    return p_eng > 0.0 ? p.a1 * p_eng + p.a2 : 0.0;
}

/// dSOC/dt from the equivalent-circuit battery: the smaller current root of
/// R I^2 - V I + P = 0 divided by the capacity.
inline double soc_derivative(double soc, double p_b, const PhevParams& p) {
    if (!(soc >= 0.0 && soc <= 1.0)) throw ConstraintViolation("soc outside [0, 1]");
    const double voc = p.open_circuit_voltage(soc);
    const double rb = p.internal_resistance(soc);
    const double disc = voc * voc - 4.0 * rb * p_b;
    if (disc < 0.0) {
        const double pmax = voc * voc / (4.0 * rb);
        throw BatterySaturation("battery cannot deliver " + std::to_string(p_b) + " W (max " +
                                    std::to_string(pmax) + " W)",
                                pmax);
    }
    // V - sqrt(V^2 - 4RP) == 4RP / (V + sqrt(...)); the second form keeps precision near P = 0.
    const double current = 2.0 * p_b / (voc + std::sqrt(disc));
    return -current / p.q_max;
}

inline double resistance_force(double v, double theta, const PhevParams& p) {
    return 0.5 * p.cd * p.rho * p.area * v * v + (p.mu + p.mu2 * v) * p.mass * p.gravity * std::cos(theta) +
           p.mass * p.gravity * std::sin(theta);
}

inline double longitudinal_accel(double v, double p_d, double theta, const PhevParams& p) {
    const double vf = std::max(v, kVelocityFloor);
    const double traction = p_d >= 0.0 ? p_d * p.eta_t / vf : p_d / (p.eta_t * vf);
    return (traction - resistance_force(v, theta, p)) / p.mass;
}

inline double demand_for_accel(double v, double a_d, double theta, const PhevParams& p) {
    const double vf = std::max(v, kVelocityFloor);
    const double raw = (p.mass * a_d + resistance_force(v, theta, p)) * vf;
    return raw >= 0.0 ? raw / p.eta_t : raw * p.eta_t;
}

struct EnergyCost {
    double fuel = 0.0;         // USD
    double electricity = 0.0;  // USD
    double total() const { return fuel + electricity; }
};

inline EnergyCost step_cost(double fuel_rate_kg_s, double p_b, double dt, const PhevParams& p) {
    return {p.k_f * fuel_rate_kg_s * dt, p.k_e_per_joule() * p_b / (p.eta_b * p.eta_chr) * dt};
}

inline double max_cost_per_step(const PhevParams& p, double dt) {
    return step_cost(fuel_rate(p.p_eng_max, p), p.p_b_max, dt, p).total();
}

struct PowertrainStep {
    BatteryState battery;
    double v = 0.0;
    double a = 0.0;     // acceleration actually realized over the step
    double fuel = 0.0;  // kg
    EnergyCost cost;
    bool soc_clamped = false;
};

/// Explicit Euler update of SOC and speed over `dt`; speed is clamped at standstill.
inline PowertrainStep step_powertrain(const BatteryState& state, const PowerSplit& split, double v,
                                      double dt, const PhevParams& p, double theta = 0.0) {
    if (!(dt >= 0.0)) throw UsageError("dt must be non-negative");
    PowertrainStep out;
    const double mdot = fuel_rate(split.p_eng, p);
    const double dsoc = soc_derivative(state.soc, split.p_b, p);
    double soc = state.soc + dsoc * dt;
    if (soc < 0.0 || soc > 1.0) {
        soc = std::clamp(soc, 0.0, 1.0);
        out.soc_clamped = true;
    }
    out.battery.soc = soc;
    const double a = longitudinal_accel(v, split.p_d, theta, p);
    out.v = std::max(0.0, v + a * dt);
    out.a = (out.v > 0.0 || dt == 0.0) ? a : (out.v - v) / dt;
    out.fuel = mdot * dt;
    out.cost = step_cost(mdot, split.p_b, dt, p);
    return out;
}

}  // namespace rampmerge::phev
