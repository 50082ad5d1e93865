#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "psi/calibration.hpp"
#include "psi/error.hpp"
#include "psi/synth.hpp"
#include "test_util.hpp"

using namespace psi;

TEST_SUITE("calibration") {

TEST_CASE("Q-null exhaustive permutation average") {
    const Labels y{0, 0, 1, 1}, l{0, 0, 1, 1};
    Labels p = l;
    std::vector<std::size_t> idx{0, 1, 2, 3};
    std::vector<double> lib, ref;
    do {
        for (std::size_t i = 0; i < 4; ++i) p[i] = l[idx[i]];
        lib.push_back(nmi(y, p));
        ref.push_back(oracle::nmi(y, p));
    } while (std::next_permutation(idx.begin(), idx.end()));
    REQUIRE(lib.size() == 24);
    const auto stats = null_from_samples(Component::Q, lib);
    const double ref_mean = std::accumulate(ref.begin(), ref.end(), 0.0) / 24.0;
    CHECK(std::fabs(stats.mu - ref_mean) < 1e-12);
    // 8 of 24 permutations keep the pairing (NMI 1), the rest give 0
    CHECK(ref_mean == doctest::Approx(8.0 / 24.0));

    // random permutations converge to the same mean
    const auto sampled = sample_q_null(y, l, 20000, 3, 0);
    CHECK(sampled.mu == doctest::Approx(ref_mean).epsilon(0.03));
}

TEST_CASE("S-null on a strongly planted set") {
    PlantedSpec spec;
    spec.k_true = 2;
    spec.seed = 4;
    const auto p = generate_planted_set(spec);
    const double observed = select_partition(p.embeddings, {}, 0).raw_silhouette;
    const auto null = sample_s_null(p.embeddings, {}, SNullMode::per_point, 20, 1, 0);
    const auto below = std::count_if(null.samples.begin(), null.samples.end(), [&](double s) { return s < observed; });
    CHECK(below >= 19);
}

TEST_CASE("global rotation null reproduces the silhouette") {
    PlantedSpec spec;
    spec.k_true = 3;
    spec.seed = 5;
    const auto p = generate_planted_set(spec);
    const double observed = select_partition(p.embeddings, {}, 0).raw_silhouette;
    const auto null = sample_s_null(p.embeddings, {}, SNullMode::global_rotation, 5, 1, 0);
    for (double s : null.samples) CHECK(s == doctest::Approx(observed).epsilon(1e-3));
}

TEST_CASE("M below 2 rejected") {
    const Labels y{0, 1, 0, 1};
    CHECK_THROWS_AS(sample_q_null(y, y, 1, 0, 0), ConfigError);
    CHECK_THROWS_AS(null_from_samples(Component::S, {0.5}), ConfigError);
    CHECK(kDefaultNullSamples == 20);
}

TEST_CASE("sample std uses M-1") {
    const auto s = null_from_samples(Component::D, {1.0, 2.0, 3.0, 4.0});
    CHECK(s.mu == 2.5);
    CHECK(s.sigma == doctest::Approx(std::sqrt(5.0 / 3.0)).epsilon(1e-15));
}

TEST_CASE("calibrate_score") {
    NullStats n;
    n.mu = 0.3;
    n.sigma = 0.1;
    CHECK(calibrate_score(0.3, n) == 0.5);
    CHECK(calibrate_score(0.4, n) == doctest::Approx(0.7310585786).epsilon(1e-5));
    n.sigma = 0.0;
    const double c = calibrate_score(0.31, n);
    CHECK(c > 0.5);
    CHECK(std::isfinite(c));
    CHECK(c < 1.0);
    CHECK(calibrate_score(-100, n) > 0.0);
}

TEST_CASE("combine_psi") {
    const auto half = combine_psi(0.5, 0.5, 0.5);
    CHECK(half.psi == 0.125);
    CHECK(half.log_psi == doctest::Approx(-2.0794415417).epsilon(1e-9));
    CHECK(combine_psi(1e-12, 0.9, 0.9).psi < 1e-11);
    const double top = 1.0 - 1e-12;
    CHECK(combine_psi(top, top, top).psi > 1.0 - 1e-11);
    CHECK_THROWS_AS(combine_psi(0.0, 0.5, 0.5), DataError);
    CHECK_THROWS_AS(combine_psi(0.5, 1.0, 0.5), DataError);
}

TEST_CASE("mode parsing") {
    CHECK(parse_s_null_mode("global-rotation") == SNullMode::global_rotation);
    CHECK(parse_d_null_mode("shuffled-coordinates") == DNullMode::shuffled_coordinates);
    CHECK_THROWS_AS(parse_s_null_mode("rotate"), ConfigError);
}

TEST_CASE("D-null modes both centered below a planted gap") {
    PlantedSpec spec;
    spec.k_true = 3;
    spec.seed = 6;
    const auto p = generate_planted_set(spec);
    const auto protos = cluster_prototypes(p.embeddings, p.truth.clusters);
    const double real = purity_gap_score(protos, p.prompts).d_score;
    for (auto mode : {DNullMode::random_prototypes, DNullMode::shuffled_coordinates}) {
        const auto n = sample_d_null(p.prompts, protos, mode, 20, 2, 0);
        CHECK(n.mu < real);
    }
}

TEST_CASE("score_channel deterministic and jobs-independent") {
    std::vector<ChannelInput> inputs;
    Matrix prompts = random_prompts(40, 16, 9);
    for (std::int64_t c = 0; c < 6; ++c) {
        const auto n = generate_null_set(30, 16, static_cast<std::uint64_t>(c), 4);
        inputs.push_back({c, n.embeddings, n.labels});
    }
    ScoreConfig cfg;
    cfg.seed = 12;
    cfg.null_samples = 5;
    const auto a = score_channels(inputs, prompts, cfg, 1);
    const auto b = score_channels(inputs, prompts, cfg, 4);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].score == b[i].score);
        CHECK(a[i].score.channel == static_cast<std::int64_t>(i));
        CHECK(to_json_line(a[i].score) == to_json_line(b[i].score));
    }
}

TEST_CASE("fixed k reports k_hat = k") {
    const auto n = generate_null_set(30, 16, 1, 4);
    ScoreConfig cfg;
    cfg.partition = {3, 3, 5};
    cfg.null_samples = 3;
    const auto r = score_channel({7, n.embeddings, n.labels}, random_prompts(10, 16, 2), cfg);
    CHECK(r.score.k_hat == 3);
}

TEST_CASE("score JSON round trip") {
    ChannelScore s;
    s.channel = 12;
    s.raw_s = 0.1 + 0.2;
    s.mu_q = 1e-300;
    s.cal_d = 0.9999999999999999;
    s.psi = 0.3;
    s.log_psi = std::log(0.3);
    s.k_hat = 4;
    s.no_positive_structure = true;
    CHECK(parse_channel_score(to_json_line(s), 1) == s);
    CHECK_THROWS_AS(parse_channel_score("{\"channel\":1}", 3), FormatError);
}

TEST_CASE("label length mismatch") {
    const auto n = generate_null_set(10, 4, 1, 2);
    Labels short_labels(5, 0);
    CHECK_THROWS_AS(score_channel({0, n.embeddings, short_labels}, random_prompts(4, 4, 1), ScoreConfig{}),
                    DataError);
}

}
