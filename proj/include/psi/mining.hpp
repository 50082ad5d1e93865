#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "psi/tensorio.hpp"

namespace psi {

// Maps feature-map coordinates to input-image pixels for one layer.
struct LayerGeometry {
    std::int64_t stride = 32;
    std::int64_t offset = 16;      // pixel center of unit (0, 0)
    std::int64_t crop_size = 160;  // receptive-field crop width w_l
    std::int64_t input_size = 224;

    void validate() const;  // throws ConfigError
};

// Defaults for 224-px ResNet-50 inputs.
LayerGeometry layer3_geometry();
LayerGeometry layer4_geometry();
LayerGeometry geometry_for_layer(const std::string& name);  // "layer3" | "layer4"

// Half-open pixel box [x0, x1) x [y0, y1).
struct CropBox {
    std::int64_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    std::int64_t width() const noexcept { return x1 - x0; }
    std::int64_t height() const noexcept { return y1 - y0; }
    bool overlaps(const CropBox& o) const noexcept {
        return x0 < o.x1 && o.x0 < x1 && y0 < o.y1 && o.y0 < y1;
    }
    bool operator==(const CropBox&) const = default;
};

CropBox project_site(const LayerGeometry& geom, std::int64_t u, std::int64_t v);

inline constexpr std::size_t kDefaultTopK = 50;
inline constexpr std::size_t kDefaultPerImageLimit = 1;

// Streaming top-K selector for one channel. Duplicate (image_id, u, v) sites
// keep their maximum activation; at most per_image_limit sites per image are
// kept in the result.
class TopKSelector {
public:
    TopKSelector(std::size_t k, std::size_t per_image_limit);

    void push(const PatchRecord& rec);
    std::vector<PatchRecord> finish() const;

private:
    struct SiteKey {
        std::string image_id;
        std::int64_t u, v;
        auto operator<=>(const SiteKey&) const = default;
    };
    std::size_t k_;
    std::size_t per_image_limit_;
    std::map<SiteKey, PatchRecord> best_;
};

// One-shot form of TopKSelector over a record list (assumed single channel).
std::vector<PatchRecord> topk_sites(const std::vector<PatchRecord>& records, std::size_t k,
                                    std::size_t per_image_limit);

// Groups records by channel and selects top-K for each.
std::map<std::int64_t, std::vector<PatchRecord>> topk_by_channel(const std::vector<PatchRecord>& records,
                                                                 std::size_t k, std::size_t per_image_limit);

}  // namespace psi
