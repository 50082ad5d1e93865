#include "psi/calibration.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "psi/error.hpp"
#include "psi/random.hpp"

namespace psi {

const char* to_string(Component c) {
    switch (c) {
        case Component::S: return "S";
        case Component::Q: return "Q";
        case Component::D: return "D";
    }
    return "?";
}

SNullMode parse_s_null_mode(const std::string& s) {
    if (s == "per-point") return SNullMode::per_point;
    if (s == "global-rotation") return SNullMode::global_rotation;
    throw ConfigError("null_mode", "expected per-point or global-rotation, got '" + s + "'");
}

DNullMode parse_d_null_mode(const std::string& s) {
    if (s == "random-prototypes") return DNullMode::random_prototypes;
    if (s == "shuffled-coordinates") return DNullMode::shuffled_coordinates;
    throw ConfigError("d_null", "expected random-prototypes or shuffled-coordinates, got '" + s + "'");
}

const char* to_string(SNullMode m) { return m == SNullMode::per_point ? "per-point" : "global-rotation"; }
const char* to_string(DNullMode m) {
    return m == DNullMode::random_prototypes ? "random-prototypes" : "shuffled-coordinates";
}

NullStats null_from_samples(Component c, std::vector<double> samples) {
    if (samples.size() < 2) throw ConfigError("m", "null needs at least 2 samples (sigma undefined)");
    NullStats s;
    s.component = c;
    const double n = static_cast<double>(samples.size());
    s.mu = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : samples) ss += (x - s.mu) * (x - s.mu);
    s.sigma = std::sqrt(ss / (n - 1.0));
    s.samples = std::move(samples);
    return s;
}

namespace {

void require_m(std::size_t m) {
    if (m < 2) throw ConfigError("m", "null needs at least 2 samples (sigma undefined)");
}

Rng replicate_rng(std::uint64_t seed, std::int64_t channel, StreamTag t, std::size_t r) {
    return Rng(mix_seed(seed, static_cast<std::uint64_t>(channel), tag(t), r));
}

}  // namespace

NullStats sample_s_null(const EmbeddingSet& z, const PartitionOptions& opts, SNullMode mode, std::size_t m,
                        std::uint64_t seed, std::int64_t channel) {
    require_m(m);
    std::vector<double> samples(m);
    for (std::size_t r = 0; r < m; ++r) {
        Rng rng = replicate_rng(seed, channel, StreamTag::null_s, r);
        EmbeddingSet shuffled;
        if (mode == SNullMode::per_point)
            shuffled.rows = uniform_sphere(z.size(), z.dim(), rng);
        else
            shuffled.rows = rotate_rows(z.rows, random_orthogonal(z.dim(), rng));
        samples[r] = select_partition(shuffled, opts, rng.next_u64()).raw_silhouette;
    }
    return null_from_samples(Component::S, std::move(samples));
}

NullStats sample_q_null(std::span<const std::int64_t> y, std::span<const std::int64_t> l, std::size_t m,
                        std::uint64_t seed, std::int64_t channel) {
    require_m(m);
    if (y.size() != l.size()) throw DataError("q-null: label and assignment lengths differ");
    std::vector<double> samples(m);
    Labels permuted(l.begin(), l.end());
    for (std::size_t r = 0; r < m; ++r) {
        Rng rng = replicate_rng(seed, channel, StreamTag::null_q, r);
        std::copy(l.begin(), l.end(), permuted.begin());
        rng.shuffle(std::span<std::int64_t>(permuted));
        samples[r] = nmi(y, permuted);
    }
    return null_from_samples(Component::Q, std::move(samples));
}

NullStats sample_d_null(const Matrix& prompts, const Matrix& prototypes, DNullMode mode, std::size_t m,
                        std::uint64_t seed, std::int64_t channel) {
    require_m(m);
    std::vector<double> samples(m);
    for (std::size_t r = 0; r < m; ++r) {
        Rng rng = replicate_rng(seed, channel, StreamTag::null_d, r);
        if (mode == DNullMode::random_prototypes) {
            samples[r] = purity_gap_score(uniform_sphere(prototypes.rows(), prototypes.cols(), rng), prompts).d_score;
            continue;
        }
        Matrix shuffled = prompts;
        std::vector<std::size_t> perm(prompts.rows());
        for (std::size_t c = 0; c < prompts.cols(); ++c) {
            std::iota(perm.begin(), perm.end(), std::size_t{0});
            rng.shuffle(std::span<std::size_t>(perm));
            for (std::size_t i = 0; i < prompts.rows(); ++i) shuffled(i, c) = prompts(perm[i], c);
        }
        for (std::size_t i = 0; i < shuffled.rows(); ++i)
            if (normalize(shuffled.row(i)) < kZeroNorm) rng.unit_vector(shuffled.row(i));
        samples[r] = purity_gap_score(prototypes, shuffled).d_score;
    }
    return null_from_samples(Component::D, std::move(samples));
}

namespace {
// Calibrated values are clamped into [kCalFloor, kCalCeil] so the product and
// its log stay finite for arbitrarily large |z|.
constexpr double kCalFloor = 1e-100;
constexpr double kCalCeil = 1.0 - 0x1.0p-53;
}  // namespace

double calibrate_score(double raw, const NullStats& null, double eps) {
    const double z = (raw - null.mu) / (null.sigma + eps);
    const double s = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    return std::clamp(s, kCalFloor, kCalCeil);
}

Psi combine_psi(double cal_s, double cal_q, double cal_d) {
    for (double c : {cal_s, cal_q, cal_d})
        if (!(c > 0.0 && c < 1.0)) throw DataError("combine_psi: calibrated component outside (0, 1)");
    return {cal_s * cal_q * cal_d, std::log(cal_s) + std::log(cal_q) + std::log(cal_d)};
}

void ScoreConfig::validate() const {
    if (partition.k_min < 2) throw ConfigError("k_range", "lower bound must be >= 2");
    if (partition.k_max < partition.k_min) throw ConfigError("k_range", "upper bound below lower bound");
    if (partition.restarts < 1) throw ConfigError("restarts", "must be >= 1");
    if (null_samples < 2) throw ConfigError("m", "must be >= 2 (null sigma undefined)");
    if (!(eps > 0.0) || !std::isfinite(eps)) throw ConfigError("eps", "must be a positive finite number");
}

ChannelAnalysis score_channel(const ChannelInput& input, const Matrix& prompts, const ScoreConfig& cfg) {
    const auto& z = input.embeddings;
    if (input.labels.size() != z.size())
        throw DataError("channel " + std::to_string(input.channel) + ": " + std::to_string(input.labels.size()) +
                        " labels for " + std::to_string(z.size()) + " embeddings");

    ChannelAnalysis out;
    out.clusters = select_partition(z, cfg.partition, mix_seed(cfg.seed, static_cast<std::uint64_t>(input.channel),
                                                               tag(StreamTag::kmeans)));
    const auto& l = out.clusters.assignments;
    const double raw_q = nmi(input.labels, l);
    out.distinctness = purity_gap_score(cluster_prototypes(z, l), prompts);

    out.null_s = sample_s_null(z, cfg.partition, cfg.s_null, cfg.null_samples, cfg.seed, input.channel);
    out.null_q = sample_q_null(input.labels, l, cfg.null_samples, cfg.seed, input.channel);
    out.null_d = sample_d_null(prompts, out.distinctness.prototypes, cfg.d_null, cfg.null_samples, cfg.seed,
                               input.channel);

    auto& s = out.score;
    s.channel = input.channel;
    s.k_hat = out.clusters.k_hat;
    s.no_positive_structure = out.clusters.no_positive_structure;
    s.raw_s = out.clusters.raw_silhouette;
    s.raw_q = raw_q;
    s.raw_d = out.distinctness.d_score;
    s.mu_s = out.null_s.mu;
    s.sigma_s = out.null_s.sigma;
    s.mu_q = out.null_q.mu;
    s.sigma_q = out.null_q.sigma;
    s.mu_d = out.null_d.mu;
    s.sigma_d = out.null_d.sigma;
    s.cal_s = calibrate_score(s.raw_s, out.null_s, cfg.eps);
    s.cal_q = calibrate_score(s.raw_q, out.null_q, cfg.eps);
    s.cal_d = calibrate_score(s.raw_d, out.null_d, cfg.eps);
    const auto p = combine_psi(s.cal_s, s.cal_q, s.cal_d);
    s.psi = p.psi;
    s.log_psi = p.log_psi;
    return out;
}

std::vector<ChannelAnalysis> score_channels(const std::vector<ChannelInput>& inputs, const Matrix& prompts,
                                            const ScoreConfig& cfg, std::size_t jobs) {
    cfg.validate();
    std::vector<ChannelAnalysis> out(inputs.size());
    std::vector<std::exception_ptr> errors(inputs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < inputs.size(); i = next++) {
            try {
                out[i] = score_channel(inputs[i], prompts, cfg);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t n_threads = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(inputs.size(), 1));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    }
    // Report the first failure in input order, independent of scheduling.
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

std::string to_json_line(const ChannelScore& s) {
    nlohmann::ordered_json j;
    j["channel"] = s.channel;
    j["k_hat"] = s.k_hat;
    j["raw_s"] = s.raw_s;
    j["raw_q"] = s.raw_q;
    j["raw_d"] = s.raw_d;
    j["mu_s"] = s.mu_s;
    j["sigma_s"] = s.sigma_s;
    j["mu_q"] = s.mu_q;
    j["sigma_q"] = s.sigma_q;
    j["mu_d"] = s.mu_d;
    j["sigma_d"] = s.sigma_d;
    j["cal_s"] = s.cal_s;
    j["cal_q"] = s.cal_q;
    j["cal_d"] = s.cal_d;
    j["psi"] = s.psi;
    j["log_psi"] = s.log_psi;
    j["no_positive_structure"] = s.no_positive_structure;
    return j.dump();
}

ChannelScore parse_channel_score(const std::string& line, std::size_t line_no) {
    ChannelScore s;
    try {
        const auto j = nlohmann::json::parse(line);
        s.channel = j.at("channel").get<std::int64_t>();
        s.k_hat = j.at("k_hat").get<std::size_t>();
        s.raw_s = j.at("raw_s").get<double>();
        s.raw_q = j.at("raw_q").get<double>();
        s.raw_d = j.at("raw_d").get<double>();
        s.mu_s = j.at("mu_s").get<double>();
        s.sigma_s = j.at("sigma_s").get<double>();
        s.mu_q = j.at("mu_q").get<double>();
        s.sigma_q = j.at("sigma_q").get<double>();
        s.mu_d = j.at("mu_d").get<double>();
        s.sigma_d = j.at("sigma_d").get<double>();
        s.cal_s = j.at("cal_s").get<double>();
        s.cal_q = j.at("cal_q").get<double>();
        s.cal_d = j.at("cal_d").get<double>();
        s.psi = j.at("psi").get<double>();
        s.log_psi = j.at("log_psi").get<double>();
        s.no_positive_structure = j.value("no_positive_structure", false);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("scores line " + std::to_string(line_no) + ": " + e.what());
    }
    return s;
}

std::vector<ChannelScore> load_scores(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path);
    std::vector<ChannelScore> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        out.push_back(parse_channel_score(line, line_no));
    }
    return out;
}

}  // namespace psi
