#pragma once

// Flat `key = value` text files for tracker configurations and search spaces.
// Blank lines and lines starting with '#' are skipped.
//
// Tracker config keys are prefixed by the class name:
//   car.mechanism = embedding
//   car.gamma = 0.8
//   car.beta = 5
//   car.delta = 2.5
//
// Search space keys: mechanism, iterations, seed, objective, beta_min, beta_max,
// gamma_min, gamma_max, gamma_step, delta_min, delta_max, delta_step.

#include <mots/association.hpp>
#include <mots/errors.hpp>
#include <mots/sequence.hpp>
#include <mots/tracker.hpp>
#include <mots/tuner.hpp>

#include <array>
#include <charconv>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace mots {

inline std::map<std::string, std::string> parse_key_values(const std::string& text) {
    auto trim = [](std::string_view s) {
        while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
        while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
        return std::string(s);
    };
    std::map<std::string, std::string> out;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped.front() == '#') continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos) throw FormatError("line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(std::string_view(stripped).substr(0, eq));
        const std::string value = trim(std::string_view(stripped).substr(eq + 1));
        if (key.empty()) throw FormatError("line " + std::to_string(line_no) + ": empty key");
        if (!out.emplace(key, value).second) throw FormatError("line " + std::to_string(line_no) + ": duplicate key " + key);
    }
    return out;
}

namespace detail {

template <class T>
T config_number(const std::map<std::string, std::string>& kv, const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw FormatError("missing key " + key);
    T value{};
    const auto& s = it->second;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw FormatError("invalid value for " + key + ": '" + s + "'");
    return value;
}

template <class T>
T config_number_or(const std::map<std::string, std::string>& kv, const std::string& key, T fallback) {
    return kv.count(key) ? config_number<T>(kv, key) : fallback;
}

inline Mechanism config_mechanism(const std::map<std::string, std::string>& kv, const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw FormatError("missing key " + key);
    const auto m = mechanism_from_name(it->second);
    if (!m) throw FormatError("unknown mechanism '" + it->second + "' for " + key);
    return *m;
}

inline std::string config_double(double v) {
    std::array<char, 64> buf{};
    const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

} // namespace detail

inline std::vector<TrackerConfig> parse_tracker_configs(const std::string& text) {
    const auto kv = parse_key_values(text);
    std::set<std::string> classes;
    for (const auto& [key, value] : kv) {
        const auto dot = key.find('.');
        const std::string field = dot == std::string::npos ? "" : key.substr(dot + 1);
        if (dot == std::string::npos || !class_from_name(key.substr(0, dot)) ||
            (field != "mechanism" && field != "gamma" && field != "beta" && field != "delta")) {
            throw FormatError("unknown config key " + key);
        }
        classes.insert(key.substr(0, dot));
    }
    std::vector<TrackerConfig> out;
    for (const auto& name : classes) {
        TrackerConfig c;
        c.class_id = *class_from_name(name);
        c.mechanism.kind = detail::config_mechanism(kv, name + ".mechanism");
        c.gamma = detail::config_number<double>(kv, name + ".gamma");
        c.beta = detail::config_number_or<int>(kv, name + ".beta", 1);
        c.mechanism.threshold = detail::config_number<double>(kv, name + ".delta");
        c.validate();
        out.push_back(c);
    }
    return out;
}

inline std::string write_tracker_configs(const std::vector<TrackerConfig>& configs) {
    std::ostringstream out;
    for (const auto& c : configs) {
        const std::string p = class_name(c.class_id);
        out << p << ".mechanism = " << mechanism_name(c.mechanism.kind) << '\n'
            << p << ".gamma = " << detail::config_double(c.gamma) << '\n'
            << p << ".beta = " << c.beta << '\n'
            << p << ".delta = " << detail::config_double(c.mechanism.threshold) << '\n';
    }
    return out.str();
}

/// Missing range keys fall back to SearchSpace::defaults for the mechanism.
inline SearchSpace parse_search_space(const std::string& text, double image_diagonal = 0.0) {
    const auto kv = parse_key_values(text);
    static const std::set<std::string> known{"mechanism", "iterations", "seed",      "objective",
                                             "beta_min",  "beta_max",   "gamma_min", "gamma_max",
                                             "gamma_step", "delta_min", "delta_max", "delta_step"};
    for (const auto& [key, value] : kv) {
        if (!known.count(key)) throw FormatError("unknown search space key " + key);
    }
    SearchSpace s = SearchSpace::defaults(detail::config_mechanism(kv, "mechanism"), image_diagonal);
    s.iterations = detail::config_number_or<int>(kv, "iterations", s.iterations);
    s.seed = detail::config_number_or<std::uint64_t>(kv, "seed", s.seed);
    s.beta_min = detail::config_number_or<int>(kv, "beta_min", s.beta_min);
    s.beta_max = detail::config_number_or<int>(kv, "beta_max", s.beta_max);
    s.gamma.lo = detail::config_number_or<double>(kv, "gamma_min", s.gamma.lo);
    s.gamma.hi = detail::config_number_or<double>(kv, "gamma_max", s.gamma.hi);
    s.gamma.step = detail::config_number_or<double>(kv, "gamma_step", s.gamma.step);
    s.delta.lo = detail::config_number_or<double>(kv, "delta_min", s.delta.lo);
    s.delta.hi = detail::config_number_or<double>(kv, "delta_max", s.delta.hi);
    s.delta.step = detail::config_number_or<double>(kv, "delta_step", s.delta.step);
    if (const auto it = kv.find("objective"); it != kv.end()) {
        if (it->second == "smotsa") {
            s.objective = Objective::smotsa;
        } else if (it->second == "motsa") {
            s.objective = Objective::motsa;
        } else {
            throw FormatError("unknown objective '" + it->second + "'");
        }
    }
    s.validate();
    return s;
}

inline std::string write_search_space(const SearchSpace& s) {
    std::ostringstream out;
    out << "mechanism = " << mechanism_name(s.mechanism) << '\n'
        << "iterations = " << s.iterations << '\n'
        << "seed = " << s.seed << '\n'
        << "objective = " << objective_name(s.objective) << '\n'
        << "gamma_min = " << detail::config_double(s.gamma.lo) << '\n'
        << "gamma_max = " << detail::config_double(s.gamma.hi) << '\n'
        << "gamma_step = " << detail::config_double(s.gamma.step) << '\n'
        << "beta_min = " << s.beta_min << '\n'
        << "beta_max = " << s.beta_max << '\n'
        << "delta_min = " << detail::config_double(s.delta.lo) << '\n'
        << "delta_max = " << detail::config_double(s.delta.hi) << '\n'
        << "delta_step = " << detail::config_double(s.delta.step) << '\n';
    return out.str();
}

} // namespace mots
