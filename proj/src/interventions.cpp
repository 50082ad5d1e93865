#include "psi/interventions.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "psi/error.hpp"
#include "psi/random.hpp"
#include "psi/statseval.hpp"
#include "psi/svg.hpp"

namespace psi {

const char* to_string(SwapCondition c) {
    switch (c) {
        case SwapCondition::aligned: return "aligned";
        case SwapCondition::non_aligned: return "non_aligned";
        case SwapCondition::random: return "random";
        case SwapCondition::shuffled_position: return "shuffled_position";
        case SwapCondition::ablate_elsewhere: return "ablate_elsewhere";
    }
    return "?";
}

SwapCondition parse_swap_condition(const std::string& s) {
    for (auto c : kAllConditions)
        if (s == to_string(c)) return c;
    throw FormatError("unknown swap condition '" + s + "'");
}

std::optional<std::string> check_plan_entry(const SwapPlanEntry& e) {
    const bool has_src = e.source_patch.has_value();
    const bool same_channel = has_src && e.source_patch->channel == e.channel;
    switch (e.condition) {
        case SwapCondition::aligned:
            if (!same_channel || e.source_cluster != e.target_cluster)
                return "aligned source must come from the target's cluster";
            break;
        case SwapCondition::non_aligned:
            if (!same_channel || e.source_cluster < 0 || e.source_cluster == e.target_cluster)
                return "non_aligned source must come from another cluster of the same channel";
            break;
        case SwapCondition::random:
            if (!has_src || e.source_patch->channel == e.channel) return "random source must come from another channel";
            break;
        case SwapCondition::shuffled_position:
            if (!same_channel || e.source_cluster != e.target_cluster)
                return "shuffled_position source must come from the target's cluster";
            if (e.target_box.overlaps(e.peak_box)) return "shuffled_position box overlaps the peak box";
            break;
        case SwapCondition::ablate_elsewhere:
            if (has_src) return "ablate_elsewhere has no source patch";
            if (e.fill.empty()) return "ablate_elsewhere needs a fill";
            if (e.target_box.overlaps(e.peak_box)) return "ablate_elsewhere region overlaps the peak box";
            break;
    }
    return std::nullopt;
}

namespace {

// Draws indices from a pool without replacement; once exhausted, the pool is
// refilled (the draw becomes with-replacement across rounds).
class PoolSampler {
public:
    PoolSampler(std::vector<std::size_t> pool, Rng& rng) : pool_(std::move(pool)), rng_(rng) {}
    bool empty() const { return pool_.empty(); }
    std::size_t draw() {
        if (left_.empty()) {
            left_ = pool_;
            rng_.shuffle(std::span<std::size_t>(left_));
        }
        const std::size_t v = left_.back();
        left_.pop_back();
        return v;
    }

private:
    std::vector<std::size_t> pool_;
    std::vector<std::size_t> left_;
    Rng& rng_;
};

// Uniformly random box disjoint from `peak`. Same size as the crop when such a
// placement exists; otherwise the largest square that fits beside the peak.
std::optional<CropBox> disjoint_box(const CropBox& peak, const LayerGeometry& g, Rng& rng) {
    const std::int64_t n = g.input_size;
    const std::int64_t margin = std::max({peak.x0, n - peak.x1, peak.y0, n - peak.y1});
    const std::int64_t s = std::min(g.crop_size, margin);
    if (s < 1) return std::nullopt;
    std::vector<std::pair<std::int64_t, std::int64_t>> spots;
    for (std::int64_t y = 0; y + s <= n; ++y)
        for (std::int64_t x = 0; x + s <= n; ++x) {
            const CropBox b{x, y, x + s, y + s};
            if (!b.overlaps(peak)) spots.emplace_back(x, y);
        }
    if (spots.empty()) return std::nullopt;
    const auto [x, y] = spots[rng.below(spots.size())];
    return CropBox{x, y, x + s, y + s};
}

}  // namespace

SwapPlan plan_swaps(const std::vector<ChannelSwapInput>& channels, std::size_t n_per_condition,
                    const LayerGeometry& geom, std::uint64_t seed) {
    geom.validate();
    if (n_per_condition < 1) throw ConfigError("repeats", "must be >= 1");
    SwapPlan plan;

    for (std::size_t ci = 0; ci < channels.size(); ++ci) {
        const auto& ch = channels[ci];
        if (ch.patches.size() != ch.assignments.size())
            throw DataError("channel " + std::to_string(ch.channel) + ": patches and assignments differ in length");
        if (ch.patches.empty()) {
            plan.warnings.push_back("channel " + std::to_string(ch.channel) + ": no patches, skipped");
            continue;
        }
        const std::size_t k = count_clusters(ch.assignments);
        std::vector<std::size_t> sizes(k, 0);
        for (auto l : ch.assignments) ++sizes[static_cast<std::size_t>(l)];
        if (std::count_if(sizes.begin(), sizes.end(), [](std::size_t s) { return s > 0; }) < 2) {
            plan.warnings.push_back("channel " + std::to_string(ch.channel) + ": fewer than 2 clusters, skipped");
            continue;
        }

        // Targets: highest-activation sites whose cluster has another member.
        std::vector<std::size_t> order(ch.patches.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return ch.patches[a].activation > ch.patches[b].activation;
        });
        std::vector<std::size_t> targets;
        for (auto i : order)
            if (sizes[static_cast<std::size_t>(ch.assignments[i])] >= 2) targets.push_back(i);
        if (targets.empty()) {
            plan.warnings.push_back("channel " + std::to_string(ch.channel) + ": no cluster with 2+ members, skipped");
            continue;
        }

        std::vector<std::pair<std::size_t, std::size_t>> foreign;  // (channel index, patch index)
        for (std::size_t cj = 0; cj < channels.size(); ++cj)
            if (channels[cj].channel != ch.channel)
                for (std::size_t p = 0; p < channels[cj].patches.size(); ++p) foreign.emplace_back(cj, p);
        if (foreign.empty())
            throw DataError("channel " + std::to_string(ch.channel) + ": empty random pool (no other channels)");

        const auto [amin, amax] = std::minmax_element(ch.patches.begin(), ch.patches.end(),
                                                      [](const auto& a, const auto& b) { return a.activation < b.activation; });

        for (const auto cond : kAllConditions) {
            Rng rng(mix_seed(seed, static_cast<std::uint64_t>(ch.channel), tag(StreamTag::swaps),
                             static_cast<std::uint64_t>(cond)));
            std::map<std::int64_t, PoolSampler> same, other;
            std::vector<std::size_t> foreign_idx(foreign.size());
            std::iota(foreign_idx.begin(), foreign_idx.end(), std::size_t{0});
            PoolSampler foreign_pool(foreign_idx, rng);

            for (std::size_t r = 0; r < n_per_condition; ++r) {
                const std::size_t t = targets[r % targets.size()];
                const auto& peak = ch.patches[t];
                const std::int64_t cluster = ch.assignments[t];

                SwapPlanEntry e;
                e.id = "c" + std::to_string(ch.channel) + "-" + to_string(cond) + "-" + std::to_string(r);
                e.channel = ch.channel;
                e.condition = cond;
                e.target_image = peak.image_id;
                e.peak_box = project_site(geom, peak.u, peak.v);
                e.target_box = e.peak_box;
                e.target_cluster = cluster;
                e.measure_u = peak.u;
                e.measure_v = peak.v;
                e.activation_min = amin->activation;
                e.activation_max = amax->activation;

                auto pool_for = [&](std::map<std::int64_t, PoolSampler>& cache, bool same_cluster) -> PoolSampler& {
                    auto it = cache.find(cluster);
                    if (it == cache.end()) {
                        std::vector<std::size_t> pool;
                        for (std::size_t i = 0; i < ch.patches.size(); ++i)
                            if ((ch.assignments[i] == cluster) == same_cluster) pool.push_back(i);
                        it = cache.emplace(cluster, PoolSampler(std::move(pool), rng)).first;
                    }
                    return it->second;
                };
                // The target never serves as its own source; its cluster has
                // another member, so the redraw terminates.
                auto draw_other = [&](PoolSampler& pool) {
                    std::size_t i = pool.draw();
                    while (i == t) i = pool.draw();
                    return i;
                };
                auto take_local = [&](std::size_t i) {
                    e.source_patch = ch.patches[i];
                    e.source_cluster = ch.assignments[i];
                };

                switch (cond) {
                    case SwapCondition::aligned:
                        take_local(draw_other(pool_for(same, true)));
                        break;
                    case SwapCondition::non_aligned:
                        take_local(draw_other(pool_for(other, false)));
                        break;
                    case SwapCondition::random: {
                        const auto [cj, p] = foreign[foreign_pool.draw()];
                        e.source_patch = channels[cj].patches[p];
                        e.source_cluster = -1;
                        break;
                    }
                    case SwapCondition::shuffled_position:
                    case SwapCondition::ablate_elsewhere: {
                        const auto box = disjoint_box(e.peak_box, geom, rng);
                        if (!box) {
                            plan.warnings.push_back(e.id + ": no region disjoint from the peak box, entry skipped");
                            continue;
                        }
                        e.target_box = *box;
                        if (cond == SwapCondition::shuffled_position)
                            take_local(draw_other(pool_for(same, true)));
                        else
                            e.fill = kNeutralFill;
                        break;
                    }
                }
                plan.entries.push_back(std::move(e));
            }
        }
    }
    return plan;
}

double normalized_delta(double a_pre, double a_post, double a_min, double a_max) {
    const double range = a_max - a_min;
    if (!(range > 0.0)) throw DataError("activation range is empty; delta_a normalization undefined");
    return (a_post - a_pre) / range;
}

SwapAnalysis analyze_swaps(const std::vector<SwapPlanEntry>& plan, const std::vector<SwapResult>& results) {
    std::map<std::string, const SwapPlanEntry*> by_id;
    for (const auto& e : plan) by_id[e.id] = &e;

    SwapAnalysis out;
    // condition -> channel -> deltas
    std::map<SwapCondition, std::map<std::int64_t, std::vector<double>>> groups;
    for (const auto& r : results) {
        if (!r.ok) {
            ++out.failed_results;
            continue;
        }
        auto it = by_id.find(r.id);
        if (it == by_id.end()) {
            ++out.unmatched_results;
            continue;
        }
        if (!std::isfinite(r.delta_a)) throw DataError("swap result " + r.id + ": delta_a not finite");
        groups[it->second->condition][it->second->channel].push_back(r.delta_a);
    }

    // Sorting inside each group makes every sum independent of input order.
    std::map<SwapCondition, std::map<std::int64_t, double>> channel_means;
    for (auto cond : kAllConditions) {
        auto g = groups.find(cond);
        if (g == groups.end()) {
            out.missing_conditions.push_back(cond);
            continue;
        }
        std::vector<double> all;
        for (auto& [channel, deltas] : g->second) {
            std::sort(deltas.begin(), deltas.end());
            if (deltas.size() < 2)
                out.warnings.push_back(std::string(to_string(cond)) + ": channel " + std::to_string(channel) +
                                       " has fewer than 2 results");
            channel_means[cond][channel] =
                std::accumulate(deltas.begin(), deltas.end(), 0.0) / static_cast<double>(deltas.size());
            all.insert(all.end(), deltas.begin(), deltas.end());
        }
        ConditionSummary s{cond, all.size(), g->second.size(), 0.0, std::nullopt, std::nullopt};
        s.mean = std::accumulate(all.begin(), all.end(), 0.0) / static_cast<double>(all.size());
        if (all.size() >= 2) {
            double ss = 0.0;
            for (double x : all) ss += (x - s.mean) * (x - s.mean);
            const double se = std::sqrt(ss / static_cast<double>(all.size() - 1)) / std::sqrt(static_cast<double>(all.size()));
            const double tq = student_t_quantile(0.975, all.size() - 1);
            s.ci_lo = s.mean - tq * se;
            s.ci_hi = s.mean + tq * se;
        }
        out.conditions.push_back(s);
    }

    const auto aligned = channel_means.find(SwapCondition::aligned);
    for (auto cond : kAllConditions) {
        if (cond == SwapCondition::aligned) continue;
        PairedComparison cmp;
        cmp.control = cond;
        const auto control = channel_means.find(cond);
        if (aligned == channel_means.end() || control == channel_means.end()) {
            cmp.missing = true;
            out.comparisons.push_back(cmp);
            continue;
        }
        std::vector<double> x, y;
        for (const auto& [channel, m] : aligned->second)
            if (auto it = control->second.find(channel); it != control->second.end()) {
                x.push_back(m);
                y.push_back(it->second);
            }
        cmp.n_channels = x.size();
        for (std::size_t i = 0; i < x.size(); ++i) cmp.mean_difference += (x[i] - y[i]) / static_cast<double>(x.size());
        try {
            const auto tt = paired_ttest(x, y);
            cmp.t = tt.t;
            cmp.p_value = tt.p_value;
        } catch (const DataError& e) {
            cmp.error = e.what();
        }
        out.comparisons.push_back(cmp);
    }
    return out;
}

nlohmann::ordered_json to_json(const SwapPlanEntry& e) {
    auto box = [](const CropBox& b) { return nlohmann::ordered_json{{"x0", b.x0}, {"y0", b.y0}, {"x1", b.x1}, {"y1", b.y1}}; };
    nlohmann::ordered_json j;
    j["id"] = e.id;
    j["channel"] = e.channel;
    j["condition"] = to_string(e.condition);
    j["target_image"] = e.target_image;
    j["target_box"] = box(e.target_box);
    j["peak_box"] = box(e.peak_box);
    j["target_cluster"] = e.target_cluster;
    j["source_patch"] = e.source_patch ? nlohmann::ordered_json::parse(to_json_line(*e.source_patch))
                                       : nlohmann::ordered_json(nullptr);
    j["source_cluster"] = e.source_cluster;
    j["measure_site"] = {{"u", e.measure_u}, {"v", e.measure_v}};
    j["fill"] = e.fill.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(e.fill);
    j["activation_range"] = {{"min", e.activation_min}, {"max", e.activation_max}};
    return j;
}

SwapPlanEntry plan_entry_from_json(const nlohmann::json& j) {
    auto box = [](const nlohmann::json& b) {
        return CropBox{b.at("x0").get<std::int64_t>(), b.at("y0").get<std::int64_t>(), b.at("x1").get<std::int64_t>(),
                       b.at("y1").get<std::int64_t>()};
    };
    SwapPlanEntry e;
    e.id = j.at("id").get<std::string>();
    e.channel = j.at("channel").get<std::int64_t>();
    e.condition = parse_swap_condition(j.at("condition").get<std::string>());
    e.target_image = j.at("target_image").get<std::string>();
    e.target_box = box(j.at("target_box"));
    e.peak_box = box(j.at("peak_box"));
    e.target_cluster = j.at("target_cluster").get<std::int64_t>();
    if (const auto& src = j.at("source_patch"); !src.is_null()) e.source_patch = parse_patch_record(src.dump(), 0);
    e.source_cluster = j.at("source_cluster").get<std::int64_t>();
    e.measure_u = j.at("measure_site").at("u").get<std::int64_t>();
    e.measure_v = j.at("measure_site").at("v").get<std::int64_t>();
    if (const auto& f = j.at("fill"); !f.is_null()) e.fill = f.get<std::string>();
    e.activation_min = j.at("activation_range").at("min").get<double>();
    e.activation_max = j.at("activation_range").at("max").get<double>();
    return e;
}

nlohmann::ordered_json to_json(const SwapResult& r) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["status"] = r.ok ? "ok" : "error";
    j["delta_a"] = r.ok ? nlohmann::ordered_json(r.delta_a) : nlohmann::ordered_json(nullptr);
    if (!r.ok) j["error"] = r.error;
    return j;
}

SwapResult swap_result_from_json(const nlohmann::json& j) {
    SwapResult r;
    r.id = j.at("id").get<std::string>();
    r.ok = j.value("status", std::string("ok")) == "ok";
    if (r.ok)
        r.delta_a = j.at("delta_a").get<double>();
    else
        r.error = j.value("error", std::string());
    return r;
}

nlohmann::ordered_json to_json(const SwapAnalysis& a) {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr); };
    nlohmann::ordered_json j;
    j["conditions"] = nlohmann::ordered_json::array();
    for (const auto& c : a.conditions)
        j["conditions"].push_back({{"condition", to_string(c.condition)},
                                   {"n", c.n},
                                   {"n_channels", c.n_channels},
                                   {"mean_delta_a", c.mean},
                                   {"ci95_lo", opt(c.ci_lo)},
                                   {"ci95_hi", opt(c.ci_hi)}});
    j["missing_conditions"] = nlohmann::ordered_json::array();
    for (auto c : a.missing_conditions) j["missing_conditions"].push_back(to_string(c));
    j["paired_tests_vs_aligned"] = nlohmann::ordered_json::array();
    for (const auto& c : a.comparisons) {
        nlohmann::ordered_json cj{{"control", to_string(c.control)}, {"missing", c.missing}};
        if (!c.missing) {
            cj["n_channels"] = c.n_channels;
            cj["mean_difference"] = c.mean_difference;
            cj["t"] = opt(c.t);
            cj["p_value"] = opt(c.p_value);
            if (!c.error.empty()) cj["error"] = c.error;
        }
        j["paired_tests_vs_aligned"].push_back(cj);
    }
    j["failed_results"] = a.failed_results;
    j["unmatched_results"] = a.unmatched_results;
    j["warnings"] = a.warnings;
    return j;
}

namespace {

template <typename T, typename Parse>
std::vector<T> load_jsonl(const std::filesystem::path& path, Parse parse) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    std::vector<T> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(parse(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(path.string() + " line " + std::to_string(line_no) + ": " + e.what());
        } catch (const FormatError& e) {
            throw FormatError(path.string() + " line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

template <typename T>
void write_jsonl(const std::filesystem::path& path, const std::vector<T>& items) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    for (const auto& it : items) out << to_json(it).dump() << '\n';
}

}  // namespace

void write_swap_plan(const std::filesystem::path& path, const std::vector<SwapPlanEntry>& plan) {
    write_jsonl(path, plan);
}

std::vector<SwapPlanEntry> load_swap_plan(const std::filesystem::path& path) {
    return load_jsonl<SwapPlanEntry>(path, plan_entry_from_json);
}

void write_swap_results(const std::filesystem::path& path, const std::vector<SwapResult>& results) {
    write_jsonl(path, results);
}

std::vector<SwapResult> load_swap_results(const std::filesystem::path& path) {
    return load_jsonl<SwapResult>(path, swap_result_from_json);
}

void write_swap_report(const SwapAnalysis& a, const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    std::ofstream json(out_dir / "swap_report.json", std::ios::trunc);
    if (!json) throw DataError("cannot write " + (out_dir / "swap_report.json").string());
    json << to_json(a).dump(2) << '\n';

    std::ofstream csv(out_dir / "swap_conditions.csv", std::ios::trunc);
    csv << "condition,n,mean_delta_a,ci95_lo,ci95_hi\n";
    std::vector<svg::Bar> bars;
    for (const auto& c : a.conditions) {
        csv << to_string(c.condition) << ',' << c.n << ',' << format_number(c.mean) << ','
            << (c.ci_lo ? format_number(*c.ci_lo) : "") << ',' << (c.ci_hi ? format_number(*c.ci_hi) : "") << '\n';
        bars.push_back({to_string(c.condition), c.mean, c.ci_lo.value_or(c.mean), c.ci_hi.value_or(c.mean)});
    }
    svg::write_bar_chart(out_dir / "swap_conditions.svg", "Patch-swap interventions", "mean normalized delta A", bars);
}

}  // namespace psi
