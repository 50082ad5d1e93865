#include "psi/config.hpp"

#include <charconv>
#include <cmath>
#include <tuple>
#include <fstream>

#include <json.hpp>

#include "psi/error.hpp"

namespace psi {
namespace {

std::size_t parse_count(const std::string& field, std::string_view s) {
    std::size_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError(field, "not a non-negative integer: '" + std::string(s) + "'");
    return v;
}

}  // namespace

std::pair<std::size_t, std::size_t> parse_k_range(const std::string& s) {
    const auto dots = s.find("..");
    if (dots == std::string::npos) {
        const auto k = parse_count("k_range", s);
        return {k, k};
    }
    return {parse_count("k_range", std::string_view(s).substr(0, dots)),
            parse_count("k_range", std::string_view(s).substr(dots + 2))};
}

void RunConfig::validate() const {
    if (top_k < 2) throw ConfigError("k", "must be >= 2");
    if (k_min < 2) throw ConfigError("k_range", "lower bound must be >= 2");
    if (k_max < k_min) throw ConfigError("k_range", "upper bound below lower bound");
    if (k_min > top_k) throw ConfigError("k_range", "lower bound exceeds k");
    if (restarts < 1) throw ConfigError("restarts", "must be >= 1");
    if (m < 2) throw ConfigError("m", "must be >= 2 (null sigma undefined)");
    if (!(eps > 0.0) || !std::isfinite(eps)) throw ConfigError("eps", "must be a positive finite number");
    if (per_image_limit < 1) throw ConfigError("per_image_limit", "must be >= 1");
    if (jobs < 1) throw ConfigError("jobs", "must be >= 1");
    if (repeats < 1) throw ConfigError("repeats", "must be >= 1");
    if (swap_channels < 1) throw ConfigError("swap_channels", "must be >= 1");
    geometry.validate();
}

ScoreConfig RunConfig::score_config() const {
    ScoreConfig s;
    s.partition = {k_min, k_max, restarts};
    s.null_samples = m;
    s.eps = eps;
    s.seed = seed;
    s.s_null = null_mode;
    s.d_null = d_null;
    return s;
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config", "cannot open " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config", path.string() + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config", "top level must be a JSON object");

    // Layer presets first so explicit geometry keys override them.
    if (auto it = j.find("layer"); it != j.end()) {
        if (!it->is_string()) throw ConfigError("layer", "must be a string");
        cfg.layer = it->get<std::string>();
        cfg.geometry = geometry_for_layer(cfg.layer);
    }
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "k") cfg.top_k = value.get<std::size_t>();
            else if (key == "k_range") std::tie(cfg.k_min, cfg.k_max) = parse_k_range(value.get<std::string>());
            else if (key == "restarts") cfg.restarts = value.get<std::size_t>();
            else if (key == "m") cfg.m = value.get<std::size_t>();
            else if (key == "eps") cfg.eps = value.get<double>();
            else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
            else if (key == "per_image_limit") cfg.per_image_limit = value.get<std::size_t>();
            else if (key == "layer") continue;
            else if (key == "stride") cfg.geometry.stride = value.get<std::int64_t>();
            else if (key == "offset") cfg.geometry.offset = value.get<std::int64_t>();
            else if (key == "crop_size") cfg.geometry.crop_size = value.get<std::int64_t>();
            else if (key == "input_size") cfg.geometry.input_size = value.get<std::int64_t>();
            else if (key == "null_mode") cfg.null_mode = parse_s_null_mode(value.get<std::string>());
            else if (key == "d_null") cfg.d_null = parse_d_null_mode(value.get<std::string>());
            else if (key == "jobs") cfg.jobs = value.get<std::size_t>();
            else if (key == "repeats") cfg.repeats = value.get<std::size_t>();
            else if (key == "swap_channels") cfg.swap_channels = value.get<std::size_t>();
            else throw ConfigError(key, "unknown config key");
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(key, std::string("wrong type: ") + e.what());
        }
    }
}

}  // namespace psi
