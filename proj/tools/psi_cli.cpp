// psi: command-line front end for the polysemanticity scoring pipeline.
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "psi/calibration.hpp"
#include "psi/config.hpp"
#include "psi/corpus.hpp"
#include "psi/error.hpp"
#include "psi/interventions.hpp"
#include "psi/mining.hpp"
#include "psi/statseval.hpp"
#include "psi/synth.hpp"
#include "psi/tensorio.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

struct Overrides {
    std::string config_path;
    std::string out;
    std::optional<std::size_t> jobs, k, m, per_image_limit;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> k_range, null_mode, d_null, layer;
};

void add_common(CLI::App* sub, Overrides& o) {
    sub->add_option("--config", o.config_path, "JSON config file");
    sub->add_option("--out", o.out, "output directory")->required();
    sub->add_option("--jobs", o.jobs, "worker threads");
    sub->add_option("--seed", o.seed, "master seed");
    sub->add_option("--k", o.k, "patches per channel (K)");
    sub->add_option("--m", o.m, "null samples per component (M)");
    sub->add_option("--k-range", o.k_range, "cluster count search range, e.g. 2..5 or 3");
    sub->add_option("--null-mode", o.null_mode, "S-null: per-point | global-rotation");
    sub->add_option("--d-null", o.d_null, "D-null: random-prototypes | shuffled-coordinates");
    sub->add_option("--per-image-limit", o.per_image_limit, "max mined sites per image");
    sub->add_option("--layer", o.layer, "layer geometry preset: layer3 | layer4");
}

// defaults < config file < flags
psi::RunConfig resolve(const Overrides& o) {
    psi::RunConfig cfg;
    if (!o.config_path.empty()) psi::apply_config_file(cfg, o.config_path);
    if (o.layer) {
        cfg.layer = *o.layer;
        cfg.geometry = psi::geometry_for_layer(*o.layer);
    }
    if (o.jobs) cfg.jobs = *o.jobs;
    if (o.seed) cfg.seed = *o.seed;
    if (o.k) cfg.top_k = *o.k;
    if (o.m) cfg.m = *o.m;
    if (o.k_range) std::tie(cfg.k_min, cfg.k_max) = psi::parse_k_range(*o.k_range);
    if (o.null_mode) cfg.null_mode = psi::parse_s_null_mode(*o.null_mode);
    if (o.d_null) cfg.d_null = psi::parse_d_null_mode(*o.d_null);
    if (o.per_image_limit) cfg.per_image_limit = *o.per_image_limit;
    cfg.validate();
    return cfg;
}

void require_file(const std::string& field, const std::string& path) {
    if (path.empty()) throw psi::ConfigError(field, "required");
    if (!fs::is_regular_file(path)) throw psi::DataError(field + ": file not found: " + path);
}

void require_dir(const std::string& field, const std::string& path) {
    if (path.empty()) throw psi::ConfigError(field, "required");
    if (!fs::is_directory(path)) throw psi::DataError(field + ": directory not found: " + path);
}

void warn(const std::string& msg) {
    nlohmann::ordered_json j{{"warning", msg}};
    std::cerr << j.dump() << '\n';
}

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw psi::DataError("cannot write " + path.string());
    for (const auto& l : lines) out << l << '\n';
}

// ---- subcommands ----

struct MineArgs {
    std::string activations;
};

void run_mine(const Overrides& o, const MineArgs& a) {
    const auto cfg = resolve(o);
    require_file("activations", a.activations);
    const auto records = psi::load_patch_records(a.activations);
    const auto by_channel = psi::topk_by_channel(records, cfg.top_k, cfg.per_image_limit);

    const fs::path dir = fs::path(o.out) / "topk";
    fs::create_directories(dir);
    std::vector<std::string> manifest;
    for (const auto& [channel, sites] : by_channel) {
        if (sites.size() < cfg.top_k)
            warn("channel " + std::to_string(channel) + ": only " + std::to_string(sites.size()) + " sites for K=" +
                 std::to_string(cfg.top_k));
        psi::write_patch_records(dir / (std::to_string(channel) + ".jsonl"), sites);
        for (std::size_t rank = 0; rank < sites.size(); ++rank) {
            const auto& s = sites[rank];
            const auto box = psi::project_site(cfg.geometry, s.u, s.v);
            nlohmann::ordered_json j{{"channel", channel}, {"rank", rank},     {"image_id", s.image_id},
                                     {"u", s.u},           {"v", s.v},         {"activation", s.activation},
                                     {"class_label", s.class_label},
                                     {"crop_box", {box.x0, box.y0, box.x1, box.y1}}};
            manifest.push_back(j.dump());
        }
    }
    write_lines(dir / "manifest.jsonl", manifest);
}

struct ScoreArgs {
    std::string corpus;
};

void run_score(const Overrides& o, const ScoreArgs& a) {
    const auto cfg = resolve(o);
    require_dir("corpus", a.corpus);
    const auto corpus = psi::load_corpus(a.corpus, cfg.top_k);
    for (const auto& w : corpus.warnings) warn(w);
    for (const auto& ch : corpus.channels)
        if (ch.embeddings.size() < cfg.top_k)
            warn("channel " + std::to_string(ch.channel) + ": " + std::to_string(ch.embeddings.size()) +
                 " patches, fewer than K=" + std::to_string(cfg.top_k));
    const auto results = psi::score_channels(corpus.channels, corpus.prompts.embeddings, cfg.score_config(), cfg.jobs);
    fs::create_directories(o.out);
    psi::write_scores(fs::path(o.out) / "scores.jsonl", results);
    psi::write_clusters(fs::path(o.out) / "clusters.jsonl", results, corpus.prompts);
}

struct EvaluateArgs {
    std::string scores, null_scores, compare, rerun;
    std::string name = "real", null_name = "null", compare_name = "compare";
};

void run_evaluate(const Overrides& o, const EvaluateArgs& a) {
    resolve(o);
    require_file("scores", a.scores);
    if (!a.null_scores.empty()) require_file("null", a.null_scores);
    if (!a.compare.empty()) require_file("compare", a.compare);
    if (!a.rerun.empty()) require_file("rerun", a.rerun);
    psi::ReportInputs in;
    in.positive_name = a.name;
    in.positive = psi::load_scores(a.scores);
    in.negative_name = a.null_name;
    if (!a.null_scores.empty()) in.negative = psi::load_scores(a.null_scores);
    in.compare_name = a.compare_name;
    if (!a.compare.empty()) in.compare = psi::load_scores(a.compare);
    if (!a.rerun.empty()) in.rerun = psi::load_scores(a.rerun);
    fs::create_directories(o.out);
    psi::emit_report(in, o.out);
}

struct PlanArgs {
    std::string corpus, scores, clusters;
};

void run_plan_swaps(const Overrides& o, const PlanArgs& a) {
    const auto cfg = resolve(o);
    require_dir("corpus", a.corpus);
    require_file("scores", a.scores);
    require_file("clusters", a.clusters);
    const auto corpus = psi::load_corpus(a.corpus, cfg.top_k);
    auto scores = psi::load_scores(a.scores);
    const auto clusters = psi::load_clusters(a.clusters);

    std::sort(scores.begin(), scores.end(), [](const auto& x, const auto& y) {
        return x.psi != y.psi ? x.psi > y.psi : x.channel < y.channel;
    });
    std::map<std::int64_t, const psi::ClusterRecord*> by_channel;
    for (const auto& c : clusters) by_channel[c.channel] = &c;

    std::vector<psi::ChannelSwapInput> inputs;
    for (const auto& s : scores) {
        if (inputs.size() == cfg.swap_channels) break;
        const auto ci = by_channel.find(s.channel);
        const auto pi = corpus.patches.find(s.channel);
        if (ci == by_channel.end() || pi == corpus.patches.end()) {
            warn("channel " + std::to_string(s.channel) + ": missing clusters or patches, skipped");
            continue;
        }
        if (ci->second->assignments.size() != pi->second.size())
            throw psi::DataError("channel " + std::to_string(s.channel) + ": cluster assignments do not match patch count");
        inputs.push_back({s.channel, pi->second, ci->second->assignments});
    }
    std::sort(inputs.begin(), inputs.end(), [](const auto& x, const auto& y) { return x.channel < y.channel; });
    const auto plan = psi::plan_swaps(inputs, cfg.repeats, cfg.geometry, cfg.seed);
    for (const auto& w : plan.warnings) warn(w);
    fs::create_directories(o.out);
    psi::write_swap_plan(fs::path(o.out) / "swap_plan.jsonl", plan.entries);
}

struct AnalyzeArgs {
    std::string plan, results;
};

void run_analyze_swaps(const Overrides& o, const AnalyzeArgs& a) {
    resolve(o);
    require_file("plan", a.plan);
    require_file("results", a.results);
    const auto plan = psi::load_swap_plan(a.plan);
    const auto results = psi::load_swap_results(a.results);
    const auto analysis = psi::analyze_swaps(plan, results);
    for (const auto& w : analysis.warnings) warn(w);
    fs::create_directories(o.out);
    psi::write_swap_report(analysis, o.out);
}

struct SynthArgs {
    std::string kind = "planted";
    std::size_t channels = 20;
    std::size_t dim = 64;
    std::string swap_plan;
};

void run_synth(const Overrides& o, const SynthArgs& a) {
    const auto cfg = resolve(o);
    if (!a.swap_plan.empty()) {
        require_file("swap-plan", a.swap_plan);
        const auto plan = psi::load_swap_plan(a.swap_plan);
        const std::map<psi::SwapCondition, psi::SwapEffect> effects = {
            {psi::SwapCondition::aligned, {0.15, 0.05}},
            {psi::SwapCondition::non_aligned, {-0.10, 0.05}},
            {psi::SwapCondition::random, {-0.10, 0.05}},
            {psi::SwapCondition::shuffled_position, {0.0, 0.02}},
            {psi::SwapCondition::ablate_elsewhere, {0.0, 0.05}},
        };
        const auto results = psi::synthesize_swap_results(plan, effects, cfg.seed);
        fs::create_directories(o.out);
        psi::write_swap_results(fs::path(o.out) / "swap_results.jsonl", results);
        return;
    }
    psi::CorpusSpec spec;
    spec.kind = psi::parse_corpus_kind(a.kind);
    spec.channels = a.channels;
    spec.K = cfg.top_k;
    spec.d = a.dim;
    spec.k_min = cfg.k_min;
    spec.k_max = cfg.k_max;
    spec.seed = cfg.seed;
    spec.validate();
    psi::write_corpus(spec, o.out);
}

void report_error(const char* kind, const std::string& field, const std::string& message) {
    nlohmann::ordered_json j{{"error", kind}};
    if (!field.empty()) j["field"] = field;
    j["message"] = message;
    std::cerr << j.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Polysemanticity scoring pipeline"};
    app.require_subcommand(1);

    Overrides o;
    MineArgs mine;
    ScoreArgs score;
    EvaluateArgs eval;
    PlanArgs plan;
    AnalyzeArgs analyze;
    SynthArgs synth;

    auto* s_mine = app.add_subcommand("mine", "select top-K activation sites per channel");
    add_common(s_mine, o);
    s_mine->add_option("--activations", mine.activations, "activations.jsonl")->required();

    auto* s_score = app.add_subcommand("score", "score every channel of a corpus");
    add_common(s_score, o);
    s_score->add_option("--corpus", score.corpus, "corpus directory")->required();

    auto* s_eval = app.add_subcommand("evaluate", "build the report bundle from score files");
    add_common(s_eval, o);
    s_eval->add_option("--scores", eval.scores, "scores.jsonl of the positive population")->required();
    s_eval->add_option("--null", eval.null_scores, "scores.jsonl of the null population");
    s_eval->add_option("--compare", eval.compare, "scores.jsonl compared by KS");
    s_eval->add_option("--rerun", eval.rerun, "scores.jsonl of a rerun (rank robustness)");
    s_eval->add_option("--name", eval.name, "label of --scores");
    s_eval->add_option("--null-name", eval.null_name, "label of --null");
    s_eval->add_option("--compare-name", eval.compare_name, "label of --compare");

    auto* s_plan = app.add_subcommand("plan-swaps", "plan patch-swap interventions");
    add_common(s_plan, o);
    s_plan->add_option("--corpus", plan.corpus, "corpus directory")->required();
    s_plan->add_option("--scores", plan.scores, "scores.jsonl")->required();
    s_plan->add_option("--clusters", plan.clusters, "clusters.jsonl")->required();

    auto* s_analyze = app.add_subcommand("analyze-swaps", "summarize executed swaps");
    add_common(s_analyze, o);
    s_analyze->add_option("--plan", analyze.plan, "swap_plan.jsonl")->required();
    s_analyze->add_option("--results", analyze.results, "swap_results.jsonl")->required();

    auto* s_synth = app.add_subcommand("synth", "write a synthetic corpus or synthetic swap results");
    add_common(s_synth, o);
    s_synth->add_option("--kind", synth.kind, "planted | null");
    s_synth->add_option("--channels", synth.channels, "number of channels");
    s_synth->add_option("--dim", synth.dim, "embedding dimension");
    s_synth->add_option("--swap-plan", synth.swap_plan, "write swap_results.jsonl for this plan instead");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        report_error("config", "", e.what());
        return kExitConfig;
    }

    try {
        if (*s_mine) run_mine(o, mine);
        else if (*s_score) run_score(o, score);
        else if (*s_eval) run_evaluate(o, eval);
        else if (*s_plan) run_plan_swaps(o, plan);
        else if (*s_analyze) run_analyze_swaps(o, analyze);
        else if (*s_synth) run_synth(o, synth);
    } catch (const psi::ConfigError& e) {
        report_error("config", e.field(), e.what());
        return kExitConfig;
    } catch (const psi::FormatError& e) {
        report_error("data", "", e.what());
        return kExitData;
    } catch (const psi::DataError& e) {
        report_error("data", "", e.what());
        return kExitData;
    } catch (const std::exception& e) {
        report_error("data", "", e.what());
        return kExitData;
    }
    return 0;
}
