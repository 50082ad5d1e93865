#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "psi/error.hpp"
#include "psi/interventions.hpp"
#include "psi/random.hpp"
#include "psi/synth.hpp"
#include "test_util.hpp"

using namespace psi;
using testutil::TempDir;

namespace {

ChannelSwapInput make_channel(std::int64_t channel, std::size_t n, std::size_t k, std::uint64_t seed) {
    Rng rng(seed);
    ChannelSwapInput in;
    in.channel = channel;
    for (std::size_t i = 0; i < n; ++i) {
        in.patches.push_back({channel, "img-" + std::to_string(channel) + "-" + std::to_string(i),
                              static_cast<std::int64_t>(rng.below(7)), static_cast<std::int64_t>(rng.below(7)),
                              10.0 - 0.1 * static_cast<double>(i), static_cast<std::int64_t>(i % 5), std::nullopt});
        in.assignments.push_back(static_cast<std::int64_t>(i % k));
    }
    return in;
}

std::vector<ChannelSwapInput> channels(std::size_t count) {
    std::vector<ChannelSwapInput> out;
    for (std::size_t c = 0; c < count; ++c) out.push_back(make_channel(static_cast<std::int64_t>(c), 50, 2 + c % 3, c));
    return out;
}

std::vector<SwapResult> results_for(const std::vector<SwapPlanEntry>& plan, std::uint64_t seed) {
    return synthesize_swap_results(plan,
                                   {{SwapCondition::aligned, {0.15, 0.05}},
                                    {SwapCondition::non_aligned, {-0.1, 0.05}},
                                    {SwapCondition::random, {-0.1, 0.05}},
                                    {SwapCondition::shuffled_position, {0.0, 0.02}},
                                    {SwapCondition::ablate_elsewhere, {0.0, 0.05}}},
                                   seed);
}

}  // namespace

TEST_SUITE("interventions") {

TEST_CASE("10 channels x 5 conditions x 1 repeat") {
    const auto plan = plan_swaps(channels(10), 1, layer3_geometry(), 1);
    CHECK(plan.entries.size() == 50);
    std::map<SwapCondition, int> per;
    for (const auto& e : plan.entries) {
        ++per[e.condition];
        CHECK_FALSE(check_plan_entry(e).has_value());
    }
    for (auto c : kAllConditions) CHECK(per[c] == 10);
}

TEST_CASE("condition invariants hold") {
    const auto plan = plan_swaps(channels(6), 5, layer3_geometry(), 2);
    std::set<std::string> ids;
    for (const auto& e : plan.entries) {
        CHECK(ids.insert(e.id).second);
        switch (e.condition) {
            case SwapCondition::aligned:
                REQUIRE(e.source_patch);
                CHECK(e.source_cluster == e.target_cluster);
                CHECK(e.source_patch->image_id != e.target_image);
                break;
            case SwapCondition::non_aligned:
                CHECK(e.source_cluster != e.target_cluster);
                CHECK(e.source_cluster >= 0);
                break;
            case SwapCondition::random:
                REQUIRE(e.source_patch);
                CHECK(e.source_patch->channel != e.channel);
                break;
            case SwapCondition::shuffled_position:
                CHECK(e.source_cluster == e.target_cluster);
                CHECK_FALSE(e.target_box.overlaps(e.peak_box));
                break;
            case SwapCondition::ablate_elsewhere:
                CHECK_FALSE(e.source_patch.has_value());
                CHECK(e.fill == kNeutralFill);
                CHECK_FALSE(e.target_box.overlaps(e.peak_box));
                break;
        }
    }
}

TEST_CASE("single-cluster channel excluded with warning") {
    auto ch = channels(3);
    std::fill(ch[1].assignments.begin(), ch[1].assignments.end(), 0);
    const auto plan = plan_swaps(ch, 1, layer3_geometry(), 3);
    for (const auto& e : plan.entries) CHECK(e.channel != 1);
    REQUIRE_FALSE(plan.warnings.empty());
    CHECK(plan.warnings[0].find("channel 1") != std::string::npos);
}

TEST_CASE("empty random pool is an error") {
    CHECK_THROWS_AS(plan_swaps(channels(1), 1, layer3_geometry(), 3), DataError);
}

TEST_CASE("same seed same plan") {
    const auto a = plan_swaps(channels(5), 3, layer3_geometry(), 9);
    const auto b = plan_swaps(channels(5), 3, layer3_geometry(), 9);
    CHECK(a.entries == b.entries);
    const auto c = plan_swaps(channels(5), 3, layer3_geometry(), 10);
    CHECK_FALSE(a.entries == c.entries);
}

TEST_CASE("layer4 geometry has no room for a disjoint crop") {
    // a 160 px crop inside 224 px cannot avoid the peak crop; the box shrinks
    const auto plan = plan_swaps(channels(3), 2, layer4_geometry(), 1);
    for (const auto& e : plan.entries) {
        if (e.condition != SwapCondition::shuffled_position && e.condition != SwapCondition::ablate_elsewhere) continue;
        CHECK_FALSE(e.target_box.overlaps(e.peak_box));
        CHECK(e.target_box.width() < 160);
    }
}

TEST_CASE("plan and results JSON round trip") {
    TempDir tmp;
    const auto plan = plan_swaps(channels(4), 2, layer3_geometry(), 4);
    write_swap_plan(tmp / "plan.jsonl", plan.entries);
    CHECK(load_swap_plan(tmp / "plan.jsonl") == plan.entries);

    auto results = results_for(plan.entries, 1);
    results[0].ok = false;
    results[0].error = "missing source patch file";
    write_swap_results(tmp / "res.jsonl", results);
    const auto back = load_swap_results(tmp / "res.jsonl");
    REQUIRE(back.size() == results.size());
    CHECK_FALSE(back[0].ok);
    CHECK(back[0].error == results[0].error);
    CHECK(back[1].delta_a == results[1].delta_a);
}

TEST_CASE("normalized delta") {
    CHECK(normalized_delta(2.0, 3.0, 0.0, 4.0) == 0.25);
    CHECK_THROWS_AS(normalized_delta(1, 2, 3, 3), DataError);
}

TEST_CASE("synthetic effects recovered") {
    const auto plan = plan_swaps(channels(10), 5, layer3_geometry(), 5);
    const auto a = analyze_swaps(plan.entries, results_for(plan.entries, 2));
    REQUIRE(a.conditions.size() == 5);
    CHECK(a.missing_conditions.empty());
    for (const auto& c : a.conditions) {
        CHECK(c.n == 50);
        if (c.condition == SwapCondition::aligned) {
            CHECK(c.mean >= 0.10);
            CHECK(c.mean <= 0.20);
        }
        if (c.condition == SwapCondition::shuffled_position) CHECK(std::fabs(c.mean) <= 0.02);
        REQUIRE(c.ci_lo);
        CHECK(*c.ci_lo <= c.mean);
    }
    REQUIRE(a.comparisons.size() == 4);
    for (const auto& c : a.comparisons) {
        REQUIRE(c.p_value);
        CHECK(*c.p_value < 0.05);
    }
}

TEST_CASE("analysis independent of result order") {
    const auto plan = plan_swaps(channels(5), 4, layer3_geometry(), 5);
    auto res = results_for(plan.entries, 3);
    const auto a = to_json(analyze_swaps(plan.entries, res)).dump();
    Rng rng(1);
    rng.shuffle(std::span<SwapResult>(res));
    CHECK(to_json(analyze_swaps(plan.entries, res)).dump() == a);
}

TEST_CASE("missing condition yields partial report") {
    const auto plan = plan_swaps(channels(4), 2, layer3_geometry(), 6);
    auto res = results_for(plan.entries, 4);
    std::vector<SwapResult> kept;
    for (std::size_t i = 0; i < res.size(); ++i)
        if (plan.entries[i].condition != SwapCondition::random) kept.push_back(res[i]);
    const auto a = analyze_swaps(plan.entries, kept);
    CHECK(a.missing_conditions == std::vector<SwapCondition>{SwapCondition::random});
    const auto it = std::find_if(a.comparisons.begin(), a.comparisons.end(),
                                 [](const auto& c) { return c.control == SwapCondition::random; });
    REQUIRE(it != a.comparisons.end());
    CHECK(it->missing);
}

TEST_CASE("identical deltas surface degenerate pairs") {
    const auto plan = plan_swaps(channels(4), 2, layer3_geometry(), 7);
    std::vector<SwapResult> res;
    for (const auto& e : plan.entries) res.push_back({e.id, 0.1, true, ""});
    const auto a = analyze_swaps(plan.entries, res);
    for (const auto& c : a.comparisons) {
        CHECK_FALSE(c.p_value.has_value());
        CHECK(c.error == "degenerate pairs");
    }
}

TEST_CASE("failed and unmatched results counted") {
    const auto plan = plan_swaps(channels(3), 2, layer3_geometry(), 8);
    auto res = results_for(plan.entries, 5);
    res[0].ok = false;
    res.push_back({"nope", 0.0, true, ""});
    const auto a = analyze_swaps(plan.entries, res);
    CHECK(a.failed_results == 1);
    CHECK(a.unmatched_results == 1);
}

TEST_CASE("swap report files") {
    TempDir tmp;
    const auto plan = plan_swaps(channels(3), 2, layer3_geometry(), 8);
    write_swap_report(analyze_swaps(plan.entries, results_for(plan.entries, 6)), tmp.path());
    CHECK(std::filesystem::exists(tmp / "swap_report.json"));
    CHECK(std::filesystem::exists(tmp / "swap_conditions.csv"));
    CHECK(std::filesystem::exists(tmp / "swap_conditions.svg"));
}

}
