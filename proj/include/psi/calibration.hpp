#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "psi/matrix.hpp"
#include "psi/psicore.hpp"
#include "psi/tensorio.hpp"

namespace psi {

enum class Component { S, Q, D };
const char* to_string(Component c);

// How the S-null destroys geometry. per_point resamples every point uniformly
// on the sphere (an independent rotation per point); global_rotation applies
// one random orthogonal matrix to all points, which preserves every cosine
// distance and therefore reproduces the observed silhouette.
enum class SNullMode { per_point, global_rotation };
// D-null reference: random unit prototypes against the real prompts, or the
// real prototypes against prompts whose coordinates are permuted
// independently across prompt rows.
enum class DNullMode { random_prototypes, shuffled_coordinates };

SNullMode parse_s_null_mode(const std::string& s);
DNullMode parse_d_null_mode(const std::string& s);
const char* to_string(SNullMode m);
const char* to_string(DNullMode m);

inline constexpr std::size_t kDefaultNullSamples = 20;
inline constexpr double kDefaultEps = 1e-8;

struct NullStats {
    Component component = Component::S;
    double mu = 0.0;
    double sigma = 0.0;  // sample standard deviation (M - 1 denominator)
    std::vector<double> samples;
};

NullStats null_from_samples(Component c, std::vector<double> samples);

// Replicate r of a component uses Rng(mix_seed(seed, channel, tag, r)).
NullStats sample_s_null(const EmbeddingSet& z, const PartitionOptions& opts, SNullMode mode, std::size_t m,
                        std::uint64_t seed, std::int64_t channel);
NullStats sample_q_null(std::span<const std::int64_t> y, std::span<const std::int64_t> l, std::size_t m,
                        std::uint64_t seed, std::int64_t channel);
NullStats sample_d_null(const Matrix& prompts, const Matrix& prototypes, DNullMode mode, std::size_t m,
                        std::uint64_t seed, std::int64_t channel);

// sigmoid((raw - mu) / (sigma + eps)), kept strictly inside (0, 1).
double calibrate_score(double raw, const NullStats& null, double eps = kDefaultEps);

struct Psi {
    double psi;
    double log_psi;
};
Psi combine_psi(double cal_s, double cal_q, double cal_d);

struct ChannelScore {
    std::int64_t channel = 0;
    double raw_s = 0, raw_q = 0, raw_d = 0;
    double mu_s = 0, sigma_s = 0, mu_q = 0, sigma_q = 0, mu_d = 0, sigma_d = 0;
    double cal_s = 0.5, cal_q = 0.5, cal_d = 0.5;
    double psi = 0.125;
    double log_psi = 0.0;
    std::size_t k_hat = 0;
    bool no_positive_structure = false;

    bool operator==(const ChannelScore&) const = default;
};

struct ScoreConfig {
    PartitionOptions partition;
    std::size_t null_samples = kDefaultNullSamples;
    double eps = kDefaultEps;
    std::uint64_t seed = 0;
    SNullMode s_null = SNullMode::per_point;
    DNullMode d_null = DNullMode::random_prototypes;

    void validate() const;  // throws ConfigError
};

struct ChannelInput {
    std::int64_t channel = 0;
    EmbeddingSet embeddings;
    Labels labels;
};

struct ChannelAnalysis {
    ChannelScore score;
    ClusterResult clusters;
    DistinctnessResult distinctness;
    NullStats null_s, null_q, null_d;
};

ChannelAnalysis score_channel(const ChannelInput& input, const Matrix& prompts, const ScoreConfig& cfg);

// Scores every channel, spreading work over `jobs` threads. Output order
// matches input order regardless of jobs.
std::vector<ChannelAnalysis> score_channels(const std::vector<ChannelInput>& inputs, const Matrix& prompts,
                                            const ScoreConfig& cfg, std::size_t jobs);

std::string to_json_line(const ChannelScore& s);
ChannelScore parse_channel_score(const std::string& line, std::size_t line_no);
std::vector<ChannelScore> load_scores(const std::string& path);

}  // namespace psi
