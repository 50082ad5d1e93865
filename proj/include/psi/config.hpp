#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "psi/calibration.hpp"
#include "psi/interventions.hpp"
#include "psi/mining.hpp"

namespace psi {

// Pipeline configuration. Defaults reproduce the reference operating point:
// K = 50 mined patches, K' searched over 2..5, M = 20 null samples per
// component.
struct RunConfig {
    std::size_t top_k = kDefaultTopK;
    std::size_t k_min = kDefaultKMin;
    std::size_t k_max = kDefaultKMax;
    std::size_t restarts = kDefaultRestarts;
    std::size_t m = kDefaultNullSamples;
    double eps = kDefaultEps;
    std::uint64_t seed = 0;
    std::size_t per_image_limit = kDefaultPerImageLimit;
    std::string layer = "layer4";
    LayerGeometry geometry = layer4_geometry();
    SNullMode null_mode = SNullMode::per_point;
    DNullMode d_null = DNullMode::random_prototypes;
    std::size_t jobs = 1;
    std::size_t repeats = kDefaultSwapRepeats;
    std::size_t swap_channels = 10;

    void validate() const;  // throws ConfigError naming the field
    ScoreConfig score_config() const;
};

// Applies the keys of a JSON object config file on top of `cfg`. Unknown keys
// and type mismatches are ConfigErrors.
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);

// "2..5" or "3" (fixed k).
std::pair<std::size_t, std::size_t> parse_k_range(const std::string& s);

}  // namespace psi
