#include "psi/psicore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "psi/error.hpp"
#include "psi/random.hpp"

namespace psi {
namespace {

std::size_t nearest_centroid(const Matrix& centroids, std::span<const double> x) {
    std::size_t best = 0;
    double best_sim = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < centroids.rows(); ++j) {
        const double s = dot(centroids.row(j), x);
        if (s > best_sim) {
            best_sim = s;
            best = j;
        }
    }
    return best;
}

// Recomputes centroids as renormalized member means. A cluster whose members
// cancel out keeps its previous centroid.
void update_centroids(const Matrix& z, const Labels& labels, Matrix& centroids) {
    Matrix sums(centroids.rows(), centroids.cols());
    for (std::size_t i = 0; i < z.rows(); ++i) {
        auto dst = sums.row(static_cast<std::size_t>(labels[i]));
        auto src = z.row(i);
        for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
    }
    for (std::size_t j = 0; j < centroids.rows(); ++j) {
        auto s = sums.row(j);
        if (normalize(s) > kZeroNorm) std::copy(s.begin(), s.end(), centroids.row(j).begin());
    }
}

}  // namespace

std::size_t count_clusters(std::span<const std::int64_t> assignments) {
    std::int64_t max_label = -1;
    for (auto l : assignments) {
        if (l < 0) throw DataError("negative cluster assignment");
        max_label = std::max(max_label, l);
    }
    return static_cast<std::size_t>(max_label + 1);
}

Matrix kmeanspp_init(const Matrix& z, std::size_t k, std::uint64_t seed) {
    const std::size_t n = z.rows();
    if (k < 1 || k > n) throw DataError("k-means: k must be in [1, " + std::to_string(n) + "]");
    Rng rng(seed);
    Matrix centroids(k, z.cols());
    std::vector<bool> chosen(n, false);
    std::vector<double> min_dist(n, std::numeric_limits<double>::infinity());

    std::size_t pick = rng.below(n);
    for (std::size_t j = 0;; ++j) {
        chosen[pick] = true;
        auto src = z.row(pick);
        std::copy(src.begin(), src.end(), centroids.row(j).begin());
        if (j + 1 == k) break;

        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = std::max(0.0, 1.0 - dot(src, z.row(i)));
            min_dist[i] = std::min(min_dist[i], d);
            if (!chosen[i]) total += min_dist[i] * min_dist[i];
        }
        if (total > 0.0) {
            double target = rng.uniform() * total;
            pick = n;
            for (std::size_t i = 0; i < n; ++i) {
                if (chosen[i]) continue;
                const double w = min_dist[i] * min_dist[i];
                if (w <= 0.0) continue;
                pick = i;
                target -= w;
                if (target < 0.0) break;
            }
        } else {
            // Remaining points coincide with chosen centroids; pick uniformly
            // among the unchosen ones.
            std::vector<std::size_t> free;
            for (std::size_t i = 0; i < n; ++i)
                if (!chosen[i]) free.push_back(i);
            pick = free[rng.below(free.size())];
        }
    }
    return centroids;
}

KMeansResult spherical_lloyd(const Matrix& z, Matrix centroids) {
    const std::size_t n = z.rows();
    const std::size_t k = centroids.rows();
    KMeansResult res;
    res.assignments.assign(n, -1);
    Labels next(n);
    std::vector<std::size_t> sizes(k);

    for (std::size_t iter = 1; iter <= kMaxLloydIterations; ++iter) {
        std::fill(sizes.begin(), sizes.end(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t j = nearest_centroid(centroids, z.row(i));
            next[i] = static_cast<std::int64_t>(j);
            ++sizes[j];
        }
        // Empty cluster: move in the point farthest from its own centroid,
        // taken from a cluster that can spare it.
        for (std::size_t j = 0; j < k; ++j) {
            if (sizes[j] != 0) continue;
            std::size_t far = n;
            double far_dist = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                const auto owner = static_cast<std::size_t>(next[i]);
                if (sizes[owner] < 2) continue;
                const double d = 1.0 - dot(z.row(i), centroids.row(owner));
                if (d > far_dist) {
                    far_dist = d;
                    far = i;
                }
            }
            if (far == n) break;
            --sizes[static_cast<std::size_t>(next[far])];
            next[far] = static_cast<std::int64_t>(j);
            sizes[j] = 1;
            auto src = z.row(far);
            std::copy(src.begin(), src.end(), centroids.row(j).begin());
        }

        const bool changed = next != res.assignments;
        res.assignments = next;
        res.iterations = iter;
        update_centroids(z, res.assignments, centroids);
        if (!changed) break;
    }
    res.all_clusters_nonempty = std::none_of(sizes.begin(), sizes.end(), [](std::size_t s) { return s == 0; });
    res.centroids = std::move(centroids);
    return res;
}

KMeansResult spherical_kmeans(const EmbeddingSet& z, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw DataError("k-means: k must be >= 2");
    if (k > z.size())
        throw DataError("k-means: k=" + std::to_string(k) + " exceeds point count " + std::to_string(z.size()));
    return spherical_lloyd(z.rows, kmeanspp_init(z.rows, k, seed));
}

double silhouette_from_distances(const Matrix& dist, std::span<const std::int64_t> assignments) {
    const std::size_t n = assignments.size();
    if (dist.rows() != n) throw DataError("silhouette: assignment length does not match point count");
    const std::size_t k = count_clusters(assignments);
    std::vector<std::size_t> sizes(k, 0);
    for (auto l : assignments) ++sizes[static_cast<std::size_t>(l)];
    const auto present = std::count_if(sizes.begin(), sizes.end(), [](std::size_t s) { return s > 0; });
    if (present < 2) throw DataError("silhouette undefined for K'=1");

    std::vector<double> sums(k);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto own = static_cast<std::size_t>(assignments[i]);
        if (sizes[own] == 1) continue;  // singleton: s = 0
        std::fill(sums.begin(), sums.end(), 0.0);
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) sums[static_cast<std::size_t>(assignments[j])] += dist(i, j);
        const double a = sums[own] / static_cast<double>(sizes[own] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c)
            if (c != own && sizes[c] > 0) b = std::min(b, sums[c] / static_cast<double>(sizes[c]));
        const double denom = std::max(a, b);
        if (denom > 0.0) total += (b - a) / denom;
    }
    return total / static_cast<double>(n);
}

double silhouette_score(const EmbeddingSet& z, std::span<const std::int64_t> assignments) {
    if (assignments.size() != z.size()) throw DataError("silhouette: assignment length does not match point count");
    return silhouette_from_distances(cosine_distance_matrix(z.rows), assignments);
}

ClusterResult select_partition(const EmbeddingSet& z, const PartitionOptions& opts, std::uint64_t seed) {
    const std::size_t n = z.size();
    if (opts.k_min < 2) throw ConfigError("k_min", "must be >= 2");
    if (opts.k_max < opts.k_min) throw ConfigError("k_max", "must be >= k_min");
    if (opts.restarts < 1) throw ConfigError("restarts", "must be >= 1");
    if (n < opts.k_min)
        throw DataError("select_partition: " + std::to_string(n) + " points < k_min=" + std::to_string(opts.k_min));
    const std::size_t k_max = std::max(opts.k_min, std::min(opts.k_max, n - 1));

    const Matrix dist = cosine_distance_matrix(z.rows);
    ClusterResult best;
    bool have_best = false;
    for (std::size_t k = opts.k_min; k <= k_max; ++k) {
        for (std::size_t r = 0; r < opts.restarts; ++r) {
            auto km = spherical_lloyd(z.rows, kmeanspp_init(z.rows, k, mix_seed(seed, tag(StreamTag::kmeans), k, r)));
            if (!km.all_clusters_nonempty) continue;
            const double s = silhouette_from_distances(dist, km.assignments);
            if (!have_best || s > best.best_silhouette) {
                have_best = true;
                best.assignments = std::move(km.assignments);
                best.centroids = std::move(km.centroids);
                best.k_hat = k;
                best.best_silhouette = s;
            }
        }
    }
    if (!have_best) throw DataError("select_partition: no candidate produced non-empty clusters");

    if (best.best_silhouette <= 0.0) {
        // No positive structure: report the smallest K' (its best restart).
        best.no_positive_structure = true;
        if (best.k_hat != opts.k_min) {
            double s_min = -std::numeric_limits<double>::infinity();
            for (std::size_t r = 0; r < opts.restarts; ++r) {
                auto km = spherical_lloyd(z.rows, kmeanspp_init(z.rows, opts.k_min,
                                                                 mix_seed(seed, tag(StreamTag::kmeans), opts.k_min, r)));
                if (!km.all_clusters_nonempty) continue;
                const double s = silhouette_from_distances(dist, km.assignments);
                if (s > s_min) {
                    s_min = s;
                    best.assignments = std::move(km.assignments);
                    best.centroids = std::move(km.centroids);
                    best.k_hat = opts.k_min;
                }
            }
        }
    }
    best.raw_silhouette = std::max(0.0, best.best_silhouette);
    return best;
}

double nmi(std::span<const std::int64_t> y, std::span<const std::int64_t> l) {
    if (y.size() != l.size())
        throw DataError("nmi: length mismatch (" + std::to_string(y.size()) + " vs " + std::to_string(l.size()) + ")");
    if (y.size() < 2) throw DataError("nmi: need at least 2 observations");

    std::map<std::int64_t, std::size_t> yi, li;
    for (auto v : y) yi.try_emplace(v, yi.size());
    for (auto v : l) li.try_emplace(v, li.size());
    const std::size_t ry = yi.size(), rl = li.size();
    // Integer counts; probabilities are formed once as count / n.
    std::vector<std::size_t> joint(ry * rl, 0), cy(ry, 0), cl(rl, 0);
    for (std::size_t i = 0; i < y.size(); ++i) {
        const std::size_t a = yi[y[i]], b = li[l[i]];
        ++joint[a * rl + b];
        ++cy[a];
        ++cl[b];
    }
    const double n = static_cast<double>(y.size());
    auto entropy = [n](const std::vector<std::size_t>& counts) {
        double h = 0.0;
        for (auto c : counts)
            if (c > 0) {
                const double p = static_cast<double>(c) / n;
                h -= p * std::log(p);
            }
        return h;
    };
    double mi = 0.0;
    for (std::size_t a = 0; a < ry; ++a)
        for (std::size_t b = 0; b < rl; ++b) {
            const auto c = joint[a * rl + b];
            if (c == 0) continue;
            const double p = static_cast<double>(c) / n;
            mi += p * std::log(static_cast<double>(c) * n / (static_cast<double>(cy[a]) * static_cast<double>(cl[b])));
        }
    if (mi <= 0.0) return 0.0;
    // One-to-one table: exactly 1 rather than 1 +- rounding.
    if (ry == rl && std::count_if(joint.begin(), joint.end(), [](std::size_t c) { return c > 0; }) ==
                        static_cast<std::ptrdiff_t>(ry))
        return 1.0;
    const double denom = entropy(cy) + entropy(cl);
    if (denom <= 0.0) return 0.0;
    return std::clamp(2.0 * mi / denom, 0.0, 1.0);
}

Matrix cluster_prototypes(const EmbeddingSet& z, std::span<const std::int64_t> assignments) {
    if (assignments.size() != z.size()) throw DataError("prototypes: assignment length does not match point count");
    const std::size_t k = count_clusters(assignments);
    Matrix protos(k, z.dim());
    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t i = 0; i < z.size(); ++i) {
        const auto j = static_cast<std::size_t>(assignments[i]);
        ++sizes[j];
        auto dst = protos.row(j);
        auto src = z.rows.row(i);
        for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
    }
    for (std::size_t j = 0; j < k; ++j) {
        if (sizes[j] == 0) throw DataError("prototypes: cluster " + std::to_string(j) + " is empty");
        if (normalize(protos.row(j)) < kZeroNorm)
            throw DataError("prototypes: zero-norm mean for cluster " + std::to_string(j));
    }
    return protos;
}

DistinctnessResult purity_gap_score(const Matrix& prototypes, const Matrix& prompts) {
    if (prompts.rows() < 2) throw DataError("purity gap: need at least 2 prompts");
    if (prototypes.rows() < 1) throw DataError("purity gap: no prototypes");
    if (prompts.cols() != prototypes.cols())
        throw DataError("purity gap: prompt dimension " + std::to_string(prompts.cols()) +
                        " does not match embedding dimension " + std::to_string(prototypes.cols()));
    DistinctnessResult res;
    res.prototypes = prototypes;
    double sum = 0.0;
    for (std::size_t j = 0; j < prototypes.rows(); ++j) {
        auto proto = prototypes.row(j);
        std::size_t top = 0, second = 1;
        double s_top = -std::numeric_limits<double>::infinity(), s_second = s_top;
        for (std::size_t m = 0; m < prompts.rows(); ++m) {
            const double s = dot(proto, prompts.row(m));
            if (s > s_top) {
                second = top;
                s_second = s_top;
                top = m;
                s_top = s;
            } else if (s > s_second) {
                second = m;
                s_second = s;
            }
        }
        res.top_prompt_idx.push_back(top);
        res.second_prompt_idx.push_back(second);
        res.gaps.push_back(s_top - s_second);
        sum += s_top - s_second;
    }
    res.d_score = sum / static_cast<double>(prototypes.rows());
    return res;
}

}  // namespace psi
