#pragma once

// Strict JSON <-> struct mapping for flat parameter blocks. A block exposes
// `template <class V> void visit_fields(V&& v)` calling v(name, member) for
// every field; the helpers below reject unknown keys and type mismatches.

#include <nlohmann/json.hpp>

#include <set>
#include <string>
#include <type_traits>

#include "rampmerge/errors.hpp"

namespace rampmerge::fields {

using json = nlohmann::json;

template <class T>
void read_value(const json& j, const std::string& path, T& out) {
    if constexpr (std::is_same_v<T, bool>) {
        if (!j.is_boolean()) throw ConfigError(path + ": expected boolean");
        out = j.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
        if (!j.is_number_integer()) throw ConfigError(path + ": expected integer");
        if constexpr (std::is_unsigned_v<T>) {
            if (j.is_number_integer() && !j.is_number_unsigned() && j.get<long long>() < 0)
                throw ConfigError(path + ": expected non-negative integer");
        }
        out = j.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
        if (!j.is_number()) throw ConfigError(path + ": expected number");
        out = j.get<T>();
    } else if constexpr (std::is_same_v<T, std::string>) {
        if (!j.is_string()) throw ConfigError(path + ": expected string");
        out = j.get<std::string>();
    } else {
        static_assert(sizeof(T) == 0, "unsupported field type");
    }
}

/// Overlays `j` onto `block`. Unknown keys always fail; when `require_all`
/// is set every field must be present as well.
template <class Block>
void merge(Block& block, const json& j, const std::string& prefix, bool require_all) {
    if (!j.is_object()) throw ConfigError(prefix + ": expected an object");
    std::set<std::string> known;
    block.visit_fields([&](const char* name, auto& member) {
        known.insert(name);
        const std::string path = prefix.empty() ? std::string(name) : prefix + "." + name;
        auto it = j.find(name);
        if (it == j.end()) {
            if (require_all) throw ConfigError(path + ": missing key");
            return;
        }
        read_value(*it, path, member);
    });
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!known.count(it.key())) {
            const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
            throw ConfigError(path + ": unknown key");
        }
    }
}

template <class Block>
json dump(const Block& block) {
    json j = json::object();
    const_cast<Block&>(block).visit_fields([&](const char* name, auto& member) { j[name] = member; });
    return j;
}

}  // namespace rampmerge::fields
