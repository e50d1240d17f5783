#pragma once

// Run configuration: every environment block plus the learner settings,
// resolved as built-in defaults <- JSON file <- command-line assignments.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "rampmerge/env.hpp"
#include "rampmerge/errors.hpp"
#include "rampmerge/fields.hpp"
#include "rampmerge/sac.hpp"

namespace rampmerge::config {

using fields::json;

inline constexpr int kSchemaVersion = 1;

struct RunConfig {
    env::EnvConfig env;
    sac::SacConfig sac;

    void validate() const {
        env.validate();
        sac.validate();
    }
};

namespace detail {

template <class F>
void for_each_section(RunConfig& c, F&& f) {
    f("phev", c.env.phev);
    f("road", c.env.road);
    f("reward", c.env.reward);
    f("episode", c.env.episode);
    f("sac", c.sac);
}

}  // namespace detail

inline json to_json(const RunConfig& c) {
    json j = json::object();
    j["schema_version"] = kSchemaVersion;
    detail::for_each_section(const_cast<RunConfig&>(c), [&](const char* name, auto& block) { j[name] = fields::dump(block); });
    return j;
}

/// Overlays a configuration document. Sections are optional; unknown
/// sections or keys and type mismatches are rejected with the key path.
inline void apply_json(RunConfig& c, const json& j) {
    if (!j.is_object()) throw ConfigError("configuration root must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (it.key() == "schema_version") {
            if (!it->is_number_integer() || it->get<int>() != kSchemaVersion)
                throw ConfigError("schema_version: unsupported value " + it->dump());
            continue;
        }
        bool found = false;
        detail::for_each_section(c, [&](const char* name, auto& block) {
            if (it.key() != name) return;
            found = true;
            fields::merge(block, *it, name, false);
        });
        if (!found) throw ConfigError(it.key() + ": unknown section");
    }
}

/// Applies one `key=value` assignment. The key is either `section.field` or
/// a bare field name that exists in exactly one section. The value is read
/// as JSON when it parses, otherwise as a string.
inline void apply_assignment(RunConfig& c, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "': expected key=value");
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;

    std::string section, field;
    if (const auto dot = key.find('.'); dot != std::string::npos) {
        section = key.substr(0, dot);
        field = key.substr(dot + 1);
    } else {
        field = key;
        const json all = to_json(c);
        for (auto it = all.begin(); it != all.end(); ++it) {
            if (!it->is_object() || !it->contains(field)) continue;
            if (!section.empty()) throw ConfigError("override '" + key + "' is ambiguous; qualify it with a section");
            section = it.key();
        }
        if (section.empty()) throw ConfigError(key + ": unknown key");
    }
    apply_json(c, json{{section, json{{field, value}}}});
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open configuration file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    if (text.find_first_not_of(" \t\r\n") == std::string::npos) return json::object();
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("'" + path + "': " + e.what());
    }
}

/// Defaults <- file (optional, empty path means none) <- overrides, then
/// validated.
inline RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
    RunConfig c;
    if (!path.empty()) apply_json(c, read_json_file(path));
    for (const auto& o : overrides) apply_assignment(c, o);
    c.validate();
    return c;
}

inline RunConfig from_json(const json& j) {
    RunConfig c;
    apply_json(c, j);
    c.validate();
    return c;
}

/// FNV-1a over the canonical dump of the world definition (powertrain,
/// road, rewards, episode). Learner settings are excluded so policies
/// trained with different hyperparameters remain comparable.
inline std::string config_hash(const RunConfig& c) {
    json j = to_json(c);
    j.erase("sac");
    j.erase("schema_version");
    const std::string text = j.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace rampmerge::config
