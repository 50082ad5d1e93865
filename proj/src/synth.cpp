#include "psi/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "psi/error.hpp"
#include "psi/random.hpp"

namespace psi {
namespace {

constexpr double kDegToRad = M_PI / 180.0;

// Random unit vector orthogonal to every row of `basis` (rows orthonormal).
void orthogonal_unit(const Matrix& basis, std::size_t basis_rows, std::span<double> out, Rng& rng) {
    for (;;) {
        for (double& x : out) x = rng.normal();
        for (std::size_t b = 0; b < basis_rows; ++b) {
            const double p = dot(out, basis.row(b));
            auto row = basis.row(b);
            for (std::size_t c = 0; c < out.size(); ++c) out[c] -= p * row[c];
        }
        if (normalize(out) > 1e-8) return;
    }
}

Matrix orthonormal_basis(const Matrix& rows) {
    Matrix q(rows.rows(), rows.cols());
    std::size_t r = 0;
    for (std::size_t i = 0; i < rows.rows(); ++i) {
        auto dst = q.row(r);
        auto src = rows.row(i);
        std::copy(src.begin(), src.end(), dst.begin());
        for (std::size_t p = 0; p < r; ++p) {
            const double proj = dot(dst, q.row(p));
            auto prev = q.row(p);
            for (std::size_t c = 0; c < dst.size(); ++c) dst[c] -= proj * prev[c];
        }
        if (normalize(dst) > 1e-10) ++r;
    }
    Matrix out(r, rows.cols());
    std::copy(q.data().begin(), q.data().begin() + static_cast<std::ptrdiff_t>(r * rows.cols()), out.data().begin());
    return out;
}

Matrix planted_centroids(std::size_t k, std::size_t d, double margin_deg, Rng& rng) {
    const double min_cos = std::cos(margin_deg * kDegToRad);
    Matrix c(k, d);
    for (int attempt = 0; attempt < 200; ++attempt) {
        std::size_t placed = 0;
        for (int tries = 0; placed < k && tries < 2000; ++tries) {
            rng.unit_vector(c.row(placed));
            bool ok = true;
            for (std::size_t j = 0; j < placed && ok; ++j) ok = dot(c.row(placed), c.row(j)) <= min_cos;
            if (ok) ++placed;
        }
        if (placed == k) return c;
    }
    throw ConfigError("margin", "could not place " + std::to_string(k) + " centroids " + std::to_string(margin_deg) +
                                    " degrees apart in d=" + std::to_string(d));
}

Labels draw_labels(const Labels& clusters, double alignment, std::size_t n_classes, Rng& rng) {
    Labels y(clusters.size());
    for (std::size_t i = 0; i < clusters.size(); ++i) {
        if (rng.uniform() < alignment || n_classes < 2) {
            y[i] = clusters[i];
        } else {
            // Uniform over the other classes.
            auto other = static_cast<std::int64_t>(rng.below(n_classes - 1));
            if (other >= clusters[i]) ++other;
            y[i] = other;
        }
    }
    return y;
}

}  // namespace

void PlantedSpec::validate() const {
    if (K < 2) throw ConfigError("K", "must be >= 2");
    if (d < 2) throw ConfigError("d", "must be >= 2");
    if (k_true < 2 || k_true > 5) throw ConfigError("k_true", "must be in [2, 5]");
    if (k_true > K) throw ConfigError("k_true", "exceeds K");
    if (!(margin_deg >= 0.0 && margin_deg <= 180.0)) throw ConfigError("margin", "must be in [0, 180] degrees");
    if (!(within_spread_deg >= 0.0)) throw ConfigError("within_spread", "must be >= 0");
    if (!(label_alignment >= 0.0 && label_alignment <= 1.0)) throw ConfigError("label_alignment", "must be in [0, 1]");
    if (!(prompt_alignment >= -1.0 && prompt_alignment <= 1.0))
        throw ConfigError("prompt_alignment", "must be in [-1, 1]");
    if (n_classes != 0 && n_classes < k_true) throw ConfigError("n_classes", "must be >= k_true");
    if (distractors == DistractorMode::orthogonal && k_true + 1 > d)
        throw ConfigError("d", "too small for distractors orthogonal to all centroids");
    // Best achievable minimum angle among k points is the regular simplex.
    if (k_true > d + 1) throw ConfigError("margin", "infeasible: more centroids than d + 1");
    const double simplex = std::acos(-1.0 / static_cast<double>(k_true - 1)) / kDegToRad;
    if (margin_deg > simplex)
        throw ConfigError("margin", "infeasible: " + std::to_string(margin_deg) + " degrees exceeds the simplex bound " +
                                        std::to_string(simplex) + " for k=" + std::to_string(k_true));
}

PlantedSet generate_planted_set(const PlantedSpec& spec) {
    spec.validate();
    Rng rng(mix_seed(spec.seed, tag(StreamTag::planted)));
    const std::size_t k = spec.k_true;
    PlantedSet out;
    out.truth.k_true = k;
    out.truth.centroids = planted_centroids(k, spec.d, spec.margin_deg, rng);

    // Balanced sizes: point i belongs to cluster i mod k.
    const double sigma = spec.within_spread_deg * kDegToRad / std::sqrt(static_cast<double>(spec.d - 1));
    Matrix z(spec.K, spec.d);
    out.truth.clusters.resize(spec.K);
    for (std::size_t i = 0; i < spec.K; ++i) {
        const std::size_t j = i % k;
        out.truth.clusters[i] = static_cast<std::int64_t>(j);
        auto row = z.row(i);
        auto c = out.truth.centroids.row(j);
        for (double& x : row) x = sigma * rng.normal();
        const double along = dot(row, c);
        for (std::size_t t = 0; t < row.size(); ++t) row[t] += c[t] * (1.0 - along);
        normalize(row);
    }
    out.embeddings = validate_embedding_set(std::move(z));

    const std::size_t n_classes = spec.n_classes == 0 ? k : spec.n_classes;
    out.labels = draw_labels(out.truth.clusters, spec.label_alignment, n_classes, rng);

    Matrix prompts(k + spec.n_distractors, spec.d);
    const double a = spec.prompt_alignment;
    const double b = std::sqrt(std::max(0.0, 1.0 - a * a));
    for (std::size_t j = 0; j < k; ++j) {
        Matrix w(1, spec.d);
        Matrix cj(1, spec.d);
        std::copy(out.truth.centroids.row(j).begin(), out.truth.centroids.row(j).end(), cj.row(0).begin());
        orthogonal_unit(cj, 1, w.row(0), rng);
        auto row = prompts.row(j);
        for (std::size_t t = 0; t < spec.d; ++t) row[t] = a * cj(0, t) + b * w(0, t);
        normalize(row);
        out.truth.dedicated_prompt.push_back(j);
    }
    const Matrix basis = orthonormal_basis(out.truth.centroids);
    for (std::size_t m = k; m < prompts.rows(); ++m) {
        if (spec.distractors == DistractorMode::orthogonal)
            orthogonal_unit(basis, basis.rows(), prompts.row(m), rng);
        else
            rng.unit_vector(prompts.row(m));
    }
    out.prompts = std::move(prompts);
    return out;
}

NullSet generate_null_set(std::size_t K, std::size_t d, std::uint64_t seed, std::size_t n_classes) {
    if (K < 4) throw ConfigError("K", "null sets need K >= 4");
    if (d < 2) throw ConfigError("d", "must be >= 2");
    if (n_classes < 1) throw ConfigError("n_classes", "must be >= 1");
    Rng rng(mix_seed(seed, tag(StreamTag::null_set)));
    NullSet out;
    out.embeddings = validate_embedding_set(uniform_sphere(K, d, rng));
    out.labels.resize(K);
    for (auto& y : out.labels) y = static_cast<std::int64_t>(rng.below(n_classes));
    return out;
}

Matrix random_prompts(std::size_t n, std::size_t d, std::uint64_t seed) {
    Rng rng(mix_seed(seed, tag(StreamTag::prompts)));
    return uniform_sphere(n, d, rng);
}

std::vector<SwapResult> synthesize_swap_results(const std::vector<SwapPlanEntry>& plan,
                                                const std::map<SwapCondition, SwapEffect>& effects,
                                                std::uint64_t seed) {
    std::vector<SwapResult> out;
    out.reserve(plan.size());
    for (std::size_t i = 0; i < plan.size(); ++i) {
        const auto& e = plan[i];
        auto it = effects.find(e.condition);
        if (it == effects.end()) continue;
        Rng rng(mix_seed(seed, tag(StreamTag::swaps), i));
        out.push_back({e.id, it->second.mean + it->second.sd * rng.normal(), true, {}});
    }
    return out;
}

CorpusKind parse_corpus_kind(const std::string& s) {
    if (s == "planted") return CorpusKind::planted;
    if (s == "null") return CorpusKind::null;
    throw ConfigError("kind", "expected planted or null, got '" + s + "'");
}

void CorpusSpec::validate() const {
    if (channels < 1) throw ConfigError("channels", "must be >= 1");
    if (K < 4) throw ConfigError("K", "must be >= 4");
    if (d < 2) throw ConfigError("d", "must be >= 2");
    if (k_min < 2 || k_max > 5 || k_min > k_max) throw ConfigError("k_range", "planted k must lie in [2, 5]");
    if (n_classes < k_max) throw ConfigError("n_classes", "must be >= the largest planted k");
    PlantedSpec probe{.K = K, .d = d, .k_true = k_max, .margin_deg = margin_deg, .within_spread_deg = within_spread_deg,
                      .label_alignment = label_alignment, .prompt_alignment = prompt_alignment, .n_classes = n_classes};
    if (kind == CorpusKind::planted) probe.validate();
}

void write_corpus(const CorpusSpec& spec, const std::filesystem::path& dir) {
    spec.validate();
    std::filesystem::create_directories(dir / "channels");

    std::vector<std::string> prompt_names;
    std::vector<std::vector<double>> prompt_rows;
    std::ofstream truth(dir / "truth.jsonl", std::ios::trunc);
    std::ofstream activations(dir / "activations.jsonl", std::ios::trunc);
    if (!truth || !activations) throw DataError("cannot write corpus files in " + dir.string());

    for (std::size_t c = 0; c < spec.channels; ++c) {
        const auto channel = static_cast<std::int64_t>(c);
        const std::uint64_t channel_seed = mix_seed(spec.seed, static_cast<std::uint64_t>(c));
        EmbeddingSet z;
        Labels labels;
        nlohmann::ordered_json t{{"channel", channel}, {"kind", spec.kind == CorpusKind::planted ? "planted" : "null"}};

        if (spec.kind == CorpusKind::planted) {
            const std::size_t k = spec.k_min + c % (spec.k_max - spec.k_min + 1);
            PlantedSpec ps{.K = spec.K, .d = spec.d, .k_true = k, .margin_deg = spec.margin_deg,
                           .within_spread_deg = spec.within_spread_deg, .label_alignment = spec.label_alignment,
                           .prompt_alignment = spec.prompt_alignment, .n_classes = spec.n_classes,
                           .n_distractors = 0, .seed = channel_seed};
            auto set = generate_planted_set(ps);
            for (std::size_t j = 0; j < k; ++j) {
                prompt_names.push_back("concept " + std::to_string(c) + "." + std::to_string(j));
                auto row = set.prompts.row(j);
                prompt_rows.emplace_back(row.begin(), row.end());
            }
            z = std::move(set.embeddings);
            labels = std::move(set.labels);
            t["k_true"] = k;
            t["clusters"] = set.truth.clusters;
        } else {
            auto set = generate_null_set(spec.K, spec.d, channel_seed, spec.n_classes);
            z = std::move(set.embeddings);
            labels = std::move(set.labels);
            t["k_true"] = nullptr;
        }
        truth << t.dump() << '\n';

        Rng rng(mix_seed(channel_seed, tag(StreamTag::null_set), 1));
        std::vector<PatchRecord> patches;
        for (std::size_t i = 0; i < spec.K; ++i) {
            PatchRecord r;
            r.channel = channel;
            r.image_id = "img-" + std::to_string(c) + "-" + std::to_string(i);
            r.u = static_cast<std::int64_t>(rng.below(7));
            r.v = static_cast<std::int64_t>(rng.below(7));
            r.activation = 10.0 - 0.05 * static_cast<double>(i);
            r.class_label = labels[i];
            patches.push_back(r);
        }
        write_patch_records(dir / "channels" / (std::to_string(c) + ".jsonl"), patches);
        write_tensor(dir / "channels" / (std::to_string(c) + ".psit"), to_tensor(z.rows));

        for (auto r : patches) {
            r.patch_path.reset();
            activations << to_json_line(r) << '\n';
        }
        for (std::size_t j = 0; j < spec.decoys_per_channel; ++j) {
            PatchRecord r;
            r.channel = channel;
            r.image_id = "img-" + std::to_string(c) + "-d" + std::to_string(j);
            r.u = static_cast<std::int64_t>(rng.below(7));
            r.v = static_cast<std::int64_t>(rng.below(7));
            r.activation = 5.0 * rng.uniform();
            r.class_label = static_cast<std::int64_t>(rng.below(spec.n_classes));
            activations << to_json_line(r) << '\n';
        }
    }

    const Matrix distractors = random_prompts(spec.n_distractors + (prompt_rows.size() < 2 ? 2 : 0), spec.d, spec.seed);
    for (std::size_t m = 0; m < distractors.rows(); ++m) {
        prompt_names.push_back("distractor " + std::to_string(m));
        auto row = distractors.row(m);
        prompt_rows.emplace_back(row.begin(), row.end());
    }
    PromptSet ps;
    ps.prompts = prompt_names;
    ps.embeddings = Matrix(prompt_rows.size(), spec.d);
    for (std::size_t m = 0; m < prompt_rows.size(); ++m)
        std::copy(prompt_rows[m].begin(), prompt_rows[m].end(), ps.embeddings.row(m).begin());
    write_prompt_set(dir / "prompts.jsonl", dir / "prompts.psit", ps);
}

}  // namespace psi
