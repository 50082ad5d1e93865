#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "psi/matrix.hpp"
#include "psi/tensorio.hpp"

namespace psi {

using Labels = std::vector<std::int64_t>;

inline constexpr std::size_t kMaxLloydIterations = 100;
inline constexpr std::size_t kDefaultRestarts = 5;
inline constexpr std::size_t kDefaultKMin = 2;
inline constexpr std::size_t kDefaultKMax = 5;

struct KMeansResult {
    Labels assignments;  // values in [0, k)
    Matrix centroids;    // k x d, unit norm
    std::size_t iterations = 0;
    bool all_clusters_nonempty = true;
};

// Initial centroids by k-means++ seeding under cosine distance. Rows must be
// unit norm. Exposed so reference implementations can reuse the exact init.
Matrix kmeanspp_init(const Matrix& z, std::size_t k, std::uint64_t seed);

// Spherical Lloyd iterations from the given initial centroids.
KMeansResult spherical_lloyd(const Matrix& z, Matrix centroids);

// kmeanspp_init followed by spherical_lloyd.
KMeansResult spherical_kmeans(const EmbeddingSet& z, std::size_t k, std::uint64_t seed);

// Mean silhouette under cosine distance. Singleton-cluster points score 0.
double silhouette_score(const EmbeddingSet& z, std::span<const std::int64_t> assignments);
// Same, over a precomputed n x n distance matrix.
double silhouette_from_distances(const Matrix& dist, std::span<const std::int64_t> assignments);

struct ClusterResult {
    Labels assignments;
    std::size_t k_hat = 0;
    Matrix centroids;
    double raw_silhouette = 0.0;     // S_c = max(0, best mean silhouette)
    double best_silhouette = 0.0;    // unclipped
    bool no_positive_structure = false;
};

struct PartitionOptions {
    std::size_t k_min = kDefaultKMin;
    std::size_t k_max = kDefaultKMax;
    std::size_t restarts = kDefaultRestarts;
};

ClusterResult select_partition(const EmbeddingSet& z, const PartitionOptions& opts, std::uint64_t seed);

// Normalized mutual information 2 I(y;l) / (H(y) + H(l)), natural logs, 0 when
// I(y;l) = 0.
double nmi(std::span<const std::int64_t> y, std::span<const std::int64_t> l);

// Per-cluster mean of member rows, renormalized.
Matrix cluster_prototypes(const EmbeddingSet& z, std::span<const std::int64_t> assignments);

struct DistinctnessResult {
    Matrix prototypes;
    std::vector<std::size_t> top_prompt_idx;
    std::vector<std::size_t> second_prompt_idx;
    std::vector<double> gaps;
    double d_score = 0.0;
};

DistinctnessResult purity_gap_score(const Matrix& prototypes, const Matrix& prompts);

// Number of distinct cluster ids, i.e. 1 + max label, validating that labels
// are dense in [0, k).
std::size_t count_clusters(std::span<const std::int64_t> assignments);

}  // namespace psi
