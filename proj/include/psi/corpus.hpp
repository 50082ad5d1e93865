#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include "psi/calibration.hpp"
#include "psi/interventions.hpp"
#include "psi/tensorio.hpp"

namespace psi {

// An on-disk scoring input: prompts.{jsonl,psit} plus channels/<id>.{psit,jsonl}.
struct Corpus {
    PromptSet prompts;
    std::vector<ChannelInput> channels;                          // ascending channel id
    std::map<std::int64_t, std::vector<PatchRecord>> patches;    // row-aligned with embeddings
    std::vector<std::string> warnings;
};

// Keeps the first top_k rows of each channel (files are written in mined
// order, highest activation first).
Corpus load_corpus(const std::filesystem::path& dir, std::size_t top_k);

struct ClusterRecord {
    std::int64_t channel = 0;
    std::size_t k_hat = 0;
    Labels assignments;
    std::vector<std::size_t> top_prompt_idx;
    std::vector<std::size_t> second_prompt_idx;
    std::vector<double> gaps;
};

ClusterRecord to_cluster_record(const ChannelAnalysis& a);
void write_scores(const std::filesystem::path& path, const std::vector<ChannelAnalysis>& results);
void write_clusters(const std::filesystem::path& path, const std::vector<ChannelAnalysis>& results,
                    const PromptSet& prompts);
std::vector<ClusterRecord> load_clusters(const std::filesystem::path& path);

}  // namespace psi
