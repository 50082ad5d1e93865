#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "psi/interventions.hpp"
#include "psi/matrix.hpp"
#include "psi/psicore.hpp"
#include "psi/tensorio.hpp"

namespace psi {

enum class DistractorMode { uniform, orthogonal };

struct PlantedSpec {
    std::size_t K = 50;
    std::size_t d = 64;
    std::size_t k_true = 3;
    double margin_deg = 60.0;        // minimum pairwise centroid angle
    double within_spread_deg = 5.0;  // angular std-dev of points around their centroid
    double label_alignment = 1.0;    // P(class label == cluster id)
    double prompt_alignment = 0.9;   // cosine of each dedicated prompt to its centroid
    std::size_t n_classes = 0;       // 0 means k_true
    std::size_t n_distractors = 16;
    DistractorMode distractors = DistractorMode::uniform;
    std::uint64_t seed = 0;

    void validate() const;  // throws ConfigError
};

struct PlantedTruth {
    Matrix centroids;
    Labels clusters;  // true cluster of every point
    std::size_t k_true = 0;
    std::vector<std::size_t> dedicated_prompt;  // prompt row of each cluster
};

struct PlantedSet {
    EmbeddingSet embeddings;
    Labels labels;
    Matrix prompts;  // dedicated rows first, then distractors
    PlantedTruth truth;
};

PlantedSet generate_planted_set(const PlantedSpec& spec);

struct NullSet {
    EmbeddingSet embeddings;
    Labels labels;
};

// K i.i.d. uniform points on the unit sphere with uniform labels over n_classes.
NullSet generate_null_set(std::size_t K, std::size_t d, std::uint64_t seed, std::size_t n_classes = 5);

// Unit-norm prompt matrix, rows uniform on the sphere.
Matrix random_prompts(std::size_t n, std::size_t d, std::uint64_t seed);

// Gaussian effect per condition, for synthetic swap results.
struct SwapEffect {
    double mean;
    double sd;
};
std::vector<SwapResult> synthesize_swap_results(const std::vector<SwapPlanEntry>& plan,
                                                const std::map<SwapCondition, SwapEffect>& effects,
                                                std::uint64_t seed);

enum class CorpusKind { planted, null };
CorpusKind parse_corpus_kind(const std::string& s);

struct CorpusSpec {
    CorpusKind kind = CorpusKind::planted;
    std::size_t channels = 20;
    std::size_t K = 50;
    std::size_t d = 64;
    std::size_t k_min = 2, k_max = 5;  // planted k cycles through this range
    double margin_deg = 60.0;
    double within_spread_deg = 5.0;
    double label_alignment = 0.8;
    double prompt_alignment = 0.8;
    std::size_t n_classes = 5;
    std::size_t n_distractors = 32;
    std::size_t decoys_per_channel = 50;  // low-activation extra records in activations.jsonl
    std::uint64_t seed = 0;

    void validate() const;
};

// Writes a corpus in the same layout the extraction adapter produces:
//   prompts.jsonl, prompts.psit
//   channels/<id>.psit     K x d patch embeddings
//   channels/<id>.jsonl    PatchRecords, row-aligned with the tensor
//   activations.jsonl      raw activation records (input to `mine`)
//   truth.jsonl            planted facts per channel
void write_corpus(const CorpusSpec& spec, const std::filesystem::path& dir);

}  // namespace psi
