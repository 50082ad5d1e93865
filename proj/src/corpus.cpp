#include "psi/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>

#include <json.hpp>

#include "psi/error.hpp"

namespace psi {

Corpus load_corpus(const std::filesystem::path& dir, std::size_t top_k) {
    if (!std::filesystem::is_directory(dir)) throw DataError("corpus directory not found: " + dir.string());
    Corpus c;
    c.prompts = load_prompt_set(dir / "prompts.jsonl", dir / "prompts.psit");

    const auto chan_dir = dir / "channels";
    if (!std::filesystem::is_directory(chan_dir)) throw DataError("missing " + chan_dir.string());
    std::vector<std::int64_t> ids;
    for (const auto& entry : std::filesystem::directory_iterator(chan_dir)) {
        if (entry.path().extension() != ".psit") continue;
        const std::string stem = entry.path().stem().string();
        std::int64_t id = 0;
        const auto [p, ec] = std::from_chars(stem.data(), stem.data() + stem.size(), id);
        if (ec != std::errc() || p != stem.data() + stem.size())
            throw DataError("channel file name is not an integer id: " + entry.path().string());
        ids.push_back(id);
    }
    std::sort(ids.begin(), ids.end());

    for (auto id : ids) {
        const auto base = chan_dir / std::to_string(id);
        Matrix z = to_matrix(read_tensor(base.string() + ".psit"));
        auto records = load_patch_records(base.string() + ".jsonl");
        if (records.size() != z.rows())
            throw DataError("channel " + std::to_string(id) + ": " + std::to_string(records.size()) +
                            " patch records for " + std::to_string(z.rows()) + " embedding rows");
        if (z.cols() != c.prompts.embeddings.cols())
            throw DataError("channel " + std::to_string(id) + ": embedding dimension " + std::to_string(z.cols()) +
                            " does not match prompt dimension " + std::to_string(c.prompts.embeddings.cols()));
        if (z.rows() > top_k) {
            Matrix head(top_k, z.cols());
            std::copy(z.data().begin(), z.data().begin() + static_cast<std::ptrdiff_t>(top_k * z.cols()),
                      head.data().begin());
            z = std::move(head);
            records.resize(top_k);
        }
        ChannelInput in;
        in.channel = id;
        in.embeddings = validate_embedding_set(std::move(z));
        for (auto r : in.embeddings.drifted_rows)
            c.warnings.push_back("channel " + std::to_string(id) + ": row " + std::to_string(r) +
                                 " norm deviated from 1 by more than 1e-2 (renormalized)");
        for (const auto& r : records) {
            if (r.channel != id)
                throw DataError("channel " + std::to_string(id) + ": record belongs to channel " + std::to_string(r.channel));
            in.labels.push_back(r.class_label);
        }
        c.channels.push_back(std::move(in));
        c.patches.emplace(id, std::move(records));
    }
    return c;
}

ClusterRecord to_cluster_record(const ChannelAnalysis& a) {
    return {a.score.channel, a.clusters.k_hat, a.clusters.assignments, a.distinctness.top_prompt_idx,
            a.distinctness.second_prompt_idx, a.distinctness.gaps};
}

void write_scores(const std::filesystem::path& path, const std::vector<ChannelAnalysis>& results) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    for (const auto& r : results) out << to_json_line(r.score) << '\n';
}

void write_clusters(const std::filesystem::path& path, const std::vector<ChannelAnalysis>& results,
                    const PromptSet& prompts) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    for (const auto& r : results) {
        const auto rec = to_cluster_record(r);
        nlohmann::ordered_json j;
        j["channel"] = rec.channel;
        j["k_hat"] = rec.k_hat;
        j["assignments"] = rec.assignments;
        j["top_prompt_idx"] = rec.top_prompt_idx;
        j["second_prompt_idx"] = rec.second_prompt_idx;
        j["gaps"] = rec.gaps;
        if (!prompts.prompts.empty()) {
            std::vector<std::string> names;
            for (auto i : rec.top_prompt_idx) names.push_back(prompts.prompts.at(i));
            j["top_prompts"] = names;
        }
        out << j.dump() << '\n';
    }
}

std::vector<ClusterRecord> load_clusters(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    std::vector<ClusterRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            ClusterRecord r;
            r.channel = j.at("channel").get<std::int64_t>();
            r.k_hat = j.at("k_hat").get<std::size_t>();
            r.assignments = j.at("assignments").get<Labels>();
            r.top_prompt_idx = j.value("top_prompt_idx", std::vector<std::size_t>{});
            r.second_prompt_idx = j.value("second_prompt_idx", std::vector<std::size_t>{});
            r.gaps = j.value("gaps", std::vector<double>{});
            out.push_back(std::move(r));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(path.string() + " line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace psi
