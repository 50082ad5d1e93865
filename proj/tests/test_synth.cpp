#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "psi/calibration.hpp"
#include "psi/corpus.hpp"
#include "psi/error.hpp"
#include "psi/statseval.hpp"
#include "psi/synth.hpp"
#include "test_util.hpp"

using namespace psi;
using testutil::TempDir;

TEST_SUITE("synth") {

TEST_CASE("planted spec recovered with NMI 1") {
    PlantedSpec spec{.K = 50, .d = 64, .k_true = 3, .margin_deg = 60, .within_spread_deg = 5, .label_alignment = 1.0};
    for (std::uint64_t s = 0; s < 5; ++s) {
        spec.seed = s;
        const auto p = generate_planted_set(spec);
        const auto r = select_partition(p.embeddings, {}, s);
        CHECK(r.k_hat == 3);
        CHECK(nmi(p.labels, r.assignments) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("centroid margin and spread respected") {
    PlantedSpec spec{.K = 50, .d = 16, .k_true = 5, .margin_deg = 60, .within_spread_deg = 5, .seed = 3};
    const auto p = generate_planted_set(spec);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = i + 1; j < 5; ++j)
            CHECK(dot(p.truth.centroids.row(i), p.truth.centroids.row(j)) <= std::cos(M_PI / 3) + 1e-12);
    double mean_angle = 0;
    for (std::size_t i = 0; i < 50; ++i) {
        const auto c = p.truth.centroids.row(static_cast<std::size_t>(p.truth.clusters[i]));
        mean_angle += std::acos(std::min(1.0, dot(p.embeddings.rows.row(i), c))) / 50.0;
    }
    CHECK(mean_angle * 180 / M_PI < 10.0);
}

TEST_CASE("infeasible margin rejected") {
    PlantedSpec spec{.K = 50, .d = 64, .k_true = 4, .margin_deg = 120};
    CHECK_THROWS_AS(generate_planted_set(spec), ConfigError);
    PlantedSpec tiny{.K = 50, .d = 2, .k_true = 5, .margin_deg = 60};
    CHECK_THROWS_AS(generate_planted_set(tiny), ConfigError);
}

TEST_CASE("uniform labels look like the permutation null") {
    std::vector<double> cal_q;
    for (std::uint64_t s = 0; s < 60; ++s) {
        PlantedSpec spec{.K = 50, .d = 64, .k_true = 3, .label_alignment = 1.0 / 3.0, .seed = s};
        const auto p = generate_planted_set(spec);
        const auto r = select_partition(p.embeddings, {}, s);
        const double raw = nmi(p.labels, r.assignments);
        const auto null = sample_q_null(p.labels, r.assignments, 20, s, 0);
        cal_q.push_back(calibrate_score(raw, null));
    }
    const double med = quantile(cal_q, 0.5);
    CHECK(med == doctest::Approx(0.5).epsilon(0.14));  // 0.5 +- 0.07
}

TEST_CASE("aligned prompts with orthogonal distractors give gap >= 0.5") {
    PlantedSpec spec{.K = 50, .d = 64, .k_true = 4, .prompt_alignment = 0.9, .n_distractors = 30,
                     .distractors = DistractorMode::orthogonal};
    for (std::uint64_t s = 0; s < 5; ++s) {
        spec.seed = s;
        const auto p = generate_planted_set(spec);
        const auto g = purity_gap_score(cluster_prototypes(p.embeddings, p.truth.clusters), p.prompts);
        for (std::size_t j = 0; j < 4; ++j) {
            CHECK(g.gaps[j] >= 0.5);
            CHECK(g.top_prompt_idx[j] == j);
        }
    }
}

TEST_CASE("null set deterministic") {
    const auto a = generate_null_set(50, 64, 5), b = generate_null_set(50, 64, 5);
    CHECK(a.embeddings.rows == b.embeddings.rows);
    CHECK(a.labels == b.labels);
    CHECK_FALSE(generate_null_set(50, 64, 6).embeddings.rows == a.embeddings.rows);
}

TEST_CASE("corpus round trip through the loader") {
    TempDir tmp;
    CorpusSpec spec;
    spec.channels = 4;
    spec.K = 20;
    spec.d = 16;
    spec.seed = 2;
    write_corpus(spec, tmp.path());
    const auto c = load_corpus(tmp.path(), 50);
    REQUIRE(c.channels.size() == 4);
    CHECK(c.prompts.embeddings.cols() == 16);
    CHECK(c.channels[0].embeddings.size() == 20);
    CHECK(c.patches.at(3).size() == 20);
    CHECK(c.warnings.empty());
    const auto acts = load_patch_records(tmp / "activations.jsonl");
    CHECK(acts.size() == 4u * (20u + spec.decoys_per_channel));

    const auto truncated = load_corpus(tmp.path(), 10);
    CHECK(truncated.channels[1].embeddings.size() == 10);
    CHECK(truncated.channels[1].labels.size() == 10);
}

TEST_CASE("mined top-K of the activation stream equals the corpus patches") {
    TempDir tmp;
    CorpusSpec spec;
    spec.channels = 3;
    spec.K = 12;
    spec.d = 8;
    write_corpus(spec, tmp.path());
    const auto mined = topk_by_channel(load_patch_records(tmp / "activations.jsonl"), 12, 1);
    const auto c = load_corpus(tmp.path(), 12);
    for (const auto& [ch, recs] : c.patches) CHECK(mined.at(ch) == recs);
}

TEST_CASE("planted corpus separates from null corpus") {
    std::vector<double> pos, neg;
    Matrix prompts = random_prompts(40, 32, 1);
    ScoreConfig cfg;
    cfg.null_samples = 10;
    for (std::uint64_t s = 0; s < 12; ++s) {
        PlantedSpec ps{.K = 50, .d = 32, .k_true = 2 + s % 4, .label_alignment = 0.8, .prompt_alignment = 0.8,
                       .n_classes = 5, .n_distractors = 20, .seed = s};
        const auto p = generate_planted_set(ps);
        pos.push_back(score_channel({static_cast<std::int64_t>(s), p.embeddings, p.labels}, p.prompts, cfg).score.psi);
        const auto n = generate_null_set(50, 32, s);
        neg.push_back(score_channel({static_cast<std::int64_t>(s), n.embeddings, n.labels}, p.prompts, cfg).score.psi);
    }
    CHECK(auroc({"p", pos}, {"n", neg}) >= 0.95);
}

}
