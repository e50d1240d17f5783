#pragma once

// Policy checkpoints: magic, version, a JSON header describing the policy
// and the world it was trained in, then the actor parameters and the frozen
// observation statistics (mean, squared-deviation sums, count) as
// little-endian float64.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "rampmerge/config.hpp"
#include "rampmerge/env.hpp"
#include "rampmerge/errors.hpp"
#include "rampmerge/sac.hpp"

namespace rampmerge::checkpoint {

using fields::json;

inline constexpr char kMagic[8] = {'R', 'M', 'P', 'O', 'L', 'I', 'C', 'Y'};
inline constexpr std::uint32_t kVersion = 1;

struct Header {
    env::Approach approach = env::Approach::coop;
    std::size_t obs_dim = 0;
    std::size_t act_dim = 0;
    int hidden = 64;
    env::ActionBounds bounds;
    env::ObsScale scale;
    std::uint64_t seed = 0;
    std::string config_hash;
    json config;  // resolved run configuration
    bool obs_norm = true;
    double log_std_min = -20.0;
    double log_std_max = 2.0;
    std::string scalar;  // "float32" or "float64"
    std::size_t n_params = 0;
};

template <class S>
struct LoadedPolicy {
    Header header;
    sac::Policy<S> policy;
};

template <class S>
constexpr const char* scalar_name() {
    return sizeof(S) == 4 ? "float32" : "float64";
}

inline Header make_header(env::Approach approach, const config::RunConfig& cfg, std::uint64_t seed) {
    Header h;
    h.approach = approach;
    h.obs_dim = env::obs_dim(approach);
    h.act_dim = env::action_dim(approach);
    h.hidden = cfg.sac.hidden;
    h.bounds = env::action_space(approach, cfg.env.phev, cfg.env.road);
    h.scale = env::ObsScale::from(cfg.env.road);
    h.seed = seed;
    h.config_hash = config::config_hash(cfg);
    h.config = config::to_json(cfg);
    h.obs_norm = cfg.sac.obs_norm;
    h.log_std_min = cfg.sac.log_std_min;
    h.log_std_max = cfg.sac.log_std_max;
    return h;
}

inline json header_to_json(const Header& h) {
    return json{{"approach", env::to_string(h.approach)},
                {"obs_dim", h.obs_dim},
                {"act_dim", h.act_dim},
                {"hidden", h.hidden},
                {"action_lo", h.bounds.lo},
                {"action_hi", h.bounds.hi},
                {"obs_scale", {h.scale.distance, h.scale.speed, h.scale.accel}},
                {"seed", h.seed},
                {"config_hash", h.config_hash},
                {"config", h.config},
                {"obs_norm", h.obs_norm},
                {"log_std_min", h.log_std_min},
                {"log_std_max", h.log_std_max},
                {"scalar", h.scalar},
                {"n_params", h.n_params}};
}

inline Header header_from_json(const json& j) {
    try {
        Header h;
        h.approach = env::parse_approach(j.at("approach").get<std::string>());
        h.obs_dim = j.at("obs_dim").get<std::size_t>();
        h.act_dim = j.at("act_dim").get<std::size_t>();
        h.hidden = j.at("hidden").get<int>();
        h.bounds.lo = j.at("action_lo").get<std::vector<double>>();
        h.bounds.hi = j.at("action_hi").get<std::vector<double>>();
        const auto sc = j.at("obs_scale").get<std::vector<double>>();
        if (sc.size() != 3) throw CheckpointError("obs_scale must have 3 entries");
        h.scale = {sc[0], sc[1], sc[2]};
        h.seed = j.at("seed").get<std::uint64_t>();
        h.config_hash = j.at("config_hash").get<std::string>();
        h.config = j.at("config");
        h.obs_norm = j.at("obs_norm").get<bool>();
        h.log_std_min = j.at("log_std_min").get<double>();
        h.log_std_max = j.at("log_std_max").get<double>();
        h.scalar = j.at("scalar").get<std::string>();
        h.n_params = j.at("n_params").get<std::size_t>();
        return h;
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("malformed checkpoint header: ") + e.what());
    } catch (const ConfigError& e) {
        throw CheckpointError(std::string("malformed checkpoint header: ") + e.what());
    }
}

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t get_u(std::istream& is, int bytes) {
    unsigned char b[8] = {};
    if (!is.read(reinterpret_cast<char*>(b), bytes)) throw CheckpointError("truncated checkpoint");
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= std::uint64_t(b[i]) << (8 * i);
    return v;
}

}  // namespace detail

template <class S>
void save_policy(const std::string& path, const sac::Policy<S>& policy, Header header) {
    if (policy.obs_dim() != header.obs_dim || policy.act_dim() != header.act_dim)
        throw UsageError("checkpoint header does not match the policy shape");
    std::vector<double> values;
    const auto& params = policy.actor().params();
    for (Eigen::Index i = 0; i < params.size(); ++i) values.push_back(double(params(i)));
    header.n_params = std::size_t(params.size());
    header.scalar = scalar_name<S>();
    const auto& norm = policy.norm();
    values.insert(values.end(), norm.mean().begin(), norm.mean().end());
    values.insert(values.end(), norm.m2().begin(), norm.m2().end());
    values.push_back(norm.count());

    std::ofstream os(path, std::ios::binary);
    if (!os) throw CheckpointError("cannot write checkpoint '" + path + "'");
    const std::string text = header_to_json(header).dump();
    os.write(kMagic, sizeof kMagic);
    detail::put_u32(os, kVersion);
    detail::put_u32(os, std::uint32_t(text.size()));
    os.write(text.data(), std::streamsize(text.size()));
    detail::put_u64(os, values.size());
    for (double v : values) detail::put_u64(os, std::bit_cast<std::uint64_t>(v));
    if (!os) throw CheckpointError("failed writing checkpoint '" + path + "'");
}

template <class S>
LoadedPolicy<S> load_policy(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("cannot open checkpoint '" + path + "'");
    char magic[sizeof kMagic];
    if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw CheckpointError("'" + path + "' is not a policy checkpoint");
    const auto version = detail::get_u(is, 4);
    if (version != kVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    const auto len = detail::get_u(is, 4);
    if (len > (1u << 26)) throw CheckpointError("checkpoint header too large");
    std::string text(len, '\0');
    if (!is.read(text.data(), std::streamsize(len))) throw CheckpointError("truncated checkpoint header");
    const json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw CheckpointError("checkpoint header is not valid JSON");

    LoadedPolicy<S> out;
    Header& h = out.header;
    h = header_from_json(j);
    if (h.obs_dim != env::obs_dim(h.approach) || h.act_dim != env::action_dim(h.approach))
        throw CheckpointError("checkpoint dimensions do not match approach " + env::to_string(h.approach));
    if (h.scalar != scalar_name<S>())
        throw CheckpointError("checkpoint stores " + h.scalar + " parameters, evaluator expects " + scalar_name<S>());
    if (h.hidden < 1 || h.bounds.lo.size() != h.act_dim || h.bounds.hi.size() != h.act_dim)
        throw CheckpointError("checkpoint header is inconsistent");

    out.policy = sac::Policy<S>(h.obs_dim, h.act_dim, h.hidden, h.log_std_min, h.log_std_max);
    out.policy.use_norm = h.obs_norm;
    auto& params = out.policy.actor().params();
    if (std::size_t(params.size()) != h.n_params) throw CheckpointError("checkpoint parameter count mismatch");
    const std::size_t expected = h.n_params + 2 * h.obs_dim + 1;
    const auto count = detail::get_u(is, 8);
    if (count != expected) throw CheckpointError("checkpoint payload size mismatch");
    std::vector<double> values(expected);
    for (auto& v : values) v = std::bit_cast<double>(detail::get_u(is, 8));
    for (std::size_t i = 0; i < h.n_params; ++i) params(Eigen::Index(i)) = S(values[i]);
    std::vector<double> mean(values.begin() + long(h.n_params), values.begin() + long(h.n_params + h.obs_dim));
    std::vector<double> m2(values.begin() + long(h.n_params + h.obs_dim),
                            values.begin() + long(h.n_params + 2 * h.obs_dim));
    out.policy.norm().set_state(values.back(), std::move(mean), std::move(m2));
    return out;
}

/// Loads a checkpoint and refuses it unless it was trained for `expected`.
template <class S>
LoadedPolicy<S> load_policy_for(const std::string& path, env::Approach expected) {
    LoadedPolicy<S> lp = load_policy<S>(path);
    if (lp.header.approach != expected)
        throw CheckpointError("checkpoint was trained for " + env::to_string(lp.header.approach) + ", evaluator expects " +
                              env::to_string(expected));
    return lp;
}

}  // namespace rampmerge::checkpoint
