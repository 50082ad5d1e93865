#include "psi/mining.hpp"

#include <algorithm>
#include <unordered_map>

#include "psi/error.hpp"

namespace psi {

void LayerGeometry::validate() const {
    if (stride < 1) throw ConfigError("stride", "must be >= 1");
    if (input_size < 1) throw ConfigError("input_size", "must be >= 1");
    if (crop_size <= 0) throw ConfigError("crop_size", "must be > 0");
    if (crop_size > input_size) throw ConfigError("crop_size", "exceeds input_size");
}

LayerGeometry layer3_geometry() { return {.stride = 16, .offset = 8, .crop_size = 96, .input_size = 224}; }
LayerGeometry layer4_geometry() { return {.stride = 32, .offset = 16, .crop_size = 160, .input_size = 224}; }

LayerGeometry geometry_for_layer(const std::string& name) {
    if (name == "layer3") return layer3_geometry();
    if (name == "layer4") return layer4_geometry();
    throw ConfigError("layer", "unknown layer '" + name + "' (expected layer3 or layer4)");
}

CropBox project_site(const LayerGeometry& geom, std::int64_t u, std::int64_t v) {
    geom.validate();
    if (u < 0 || v < 0) throw DataError("project_site: negative feature-map coordinate");
    // Shift, never shrink: the box keeps crop_size on both axes.
    auto place = [&](std::int64_t coord) {
        const std::int64_t center = coord * geom.stride + geom.offset;
        const std::int64_t lo = std::clamp(center - geom.crop_size / 2, std::int64_t{0},
                                           geom.input_size - geom.crop_size);
        return std::pair{lo, lo + geom.crop_size};
    };
    const auto [x0, x1] = place(u);
    const auto [y0, y1] = place(v);
    return {x0, y0, x1, y1};
}

TopKSelector::TopKSelector(std::size_t k, std::size_t per_image_limit)
    : k_(k), per_image_limit_(per_image_limit) {
    if (k < 1) throw ConfigError("k", "must be >= 1");
    if (per_image_limit < 1) throw ConfigError("per_image_limit", "must be >= 1");
}

void TopKSelector::push(const PatchRecord& rec) {
    check_record(rec);
    SiteKey key{rec.image_id, rec.u, rec.v};
    auto [it, inserted] = best_.try_emplace(std::move(key), rec);
    if (inserted) return;
    const auto& held = it->second;
    // Equal-activation duplicates resolve on class_label so the result does not
    // depend on stream order.
    if (rec.activation > held.activation ||
        (rec.activation == held.activation && rec.class_label < held.class_label))
        it->second = rec;
}

std::vector<PatchRecord> TopKSelector::finish() const {
    std::vector<const PatchRecord*> order;
    order.reserve(best_.size());
    for (const auto& [key, rec] : best_) order.push_back(&rec);
    // best_ iterates in (image_id, u, v) order, so a stable sort on activation
    // gives the lexicographic tie-break.
    std::stable_sort(order.begin(), order.end(),
                     [](const PatchRecord* a, const PatchRecord* b) { return a->activation > b->activation; });

    std::vector<PatchRecord> out;
    std::unordered_map<std::string, std::size_t> per_image;
    for (const PatchRecord* rec : order) {
        if (out.size() == k_) break;
        auto& used = per_image[rec->image_id];
        if (used == per_image_limit_) continue;
        ++used;
        out.push_back(*rec);
    }
    return out;
}

std::vector<PatchRecord> topk_sites(const std::vector<PatchRecord>& records, std::size_t k,
                                    std::size_t per_image_limit) {
    TopKSelector sel(k, per_image_limit);
    for (const auto& r : records) sel.push(r);
    return sel.finish();
}

std::map<std::int64_t, std::vector<PatchRecord>> topk_by_channel(const std::vector<PatchRecord>& records,
                                                                 std::size_t k, std::size_t per_image_limit) {
    std::map<std::int64_t, TopKSelector> selectors;
    for (const auto& r : records)
        selectors.try_emplace(r.channel, k, per_image_limit).first->second.push(r);
    std::map<std::int64_t, std::vector<PatchRecord>> out;
    for (const auto& [channel, sel] : selectors) out.emplace(channel, sel.finish());
    return out;
}

}  // namespace psi
