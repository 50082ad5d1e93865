#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "psi/mining.hpp"
#include "psi/psicore.hpp"
#include "psi/tensorio.hpp"

namespace psi {

enum class SwapCondition { aligned, non_aligned, random, shuffled_position, ablate_elsewhere };
inline constexpr std::array<SwapCondition, 5> kAllConditions = {
    SwapCondition::aligned, SwapCondition::non_aligned, SwapCondition::random, SwapCondition::shuffled_position,
    SwapCondition::ablate_elsewhere};

const char* to_string(SwapCondition c);
SwapCondition parse_swap_condition(const std::string& s);

inline constexpr const char* kNeutralFill = "channel_mean_color";
inline constexpr std::size_t kDefaultSwapRepeats = 5;

struct SwapPlanEntry {
    std::string id;
    std::int64_t channel = 0;
    SwapCondition condition = SwapCondition::aligned;
    std::string target_image;
    CropBox target_box;  // region that gets modified
    CropBox peak_box;    // crop of the peak site being measured
    std::int64_t target_cluster = 0;
    std::optional<PatchRecord> source_patch;  // absent for ablate_elsewhere
    std::int64_t source_cluster = -1;         // -1 when the source is not from this channel
    std::int64_t measure_u = 0, measure_v = 0;
    std::string fill;  // ablate_elsewhere only
    double activation_min = 0.0, activation_max = 0.0;  // normalization range for delta_a

    bool operator==(const SwapPlanEntry&) const = default;
};

// Returns a description of the violated condition invariant, if any.
std::optional<std::string> check_plan_entry(const SwapPlanEntry& e);

struct ChannelSwapInput {
    std::int64_t channel = 0;
    std::vector<PatchRecord> patches;  // row-aligned with assignments
    Labels assignments;
};

struct SwapPlan {
    std::vector<SwapPlanEntry> entries;
    std::vector<std::string> warnings;
};

SwapPlan plan_swaps(const std::vector<ChannelSwapInput>& channels, std::size_t n_per_condition,
                    const LayerGeometry& geom, std::uint64_t seed);

struct SwapResult {
    std::string id;
    double delta_a = 0.0;  // (A_post - A_pre) / (A_max - A_min)
    bool ok = true;
    std::string error;
};

// delta_a normalization shared with the adapter.
double normalized_delta(double a_pre, double a_post, double a_min, double a_max);

struct ConditionSummary {
    SwapCondition condition;
    std::size_t n = 0;
    std::size_t n_channels = 0;
    double mean = 0.0;
    std::optional<double> ci_lo, ci_hi;
};

struct PairedComparison {
    SwapCondition control;
    bool missing = false;
    std::size_t n_channels = 0;
    double mean_difference = 0.0;  // aligned - control, over per-channel means
    std::optional<double> t, p_value;
    std::string error;
};

struct SwapAnalysis {
    std::vector<ConditionSummary> conditions;  // only conditions with data
    std::vector<SwapCondition> missing_conditions;
    std::vector<PairedComparison> comparisons;  // aligned vs each control
    std::size_t failed_results = 0;
    std::size_t unmatched_results = 0;
    std::vector<std::string> warnings;
};

SwapAnalysis analyze_swaps(const std::vector<SwapPlanEntry>& plan, const std::vector<SwapResult>& results);

nlohmann::ordered_json to_json(const SwapPlanEntry& e);
SwapPlanEntry plan_entry_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const SwapResult& r);
SwapResult swap_result_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const SwapAnalysis& a);

void write_swap_plan(const std::filesystem::path& path, const std::vector<SwapPlanEntry>& plan);
std::vector<SwapPlanEntry> load_swap_plan(const std::filesystem::path& path);
void write_swap_results(const std::filesystem::path& path, const std::vector<SwapResult>& results);
std::vector<SwapResult> load_swap_results(const std::filesystem::path& path);

// swap_report.json, swap_conditions.csv and swap_conditions.svg.
void write_swap_report(const SwapAnalysis& a, const std::filesystem::path& out_dir);

}  // namespace psi
