#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "psi/matrix.hpp"

namespace psi {

// .psit container, version 1:
//   "PSIT" | u32 version=1 | u32 dtype (1 = f32 LE) | u32 ndim | ndim x u64 dims | payload
// All integers little-endian, payload row-major.
inline constexpr char kTensorMagic[4] = {'P', 'S', 'I', 'T'};
inline constexpr std::uint32_t kTensorVersion = 1;
inline constexpr std::uint32_t kDtypeF32 = 1;

struct TensorFile {
    std::uint32_t dtype = kDtypeF32;
    std::vector<std::uint64_t> dims;
    std::vector<float> values;

    std::uint64_t element_count() const;
    bool operator==(const TensorFile&) const = default;
};

void write_tensor(const std::filesystem::path& path, const TensorFile& tensor);
TensorFile read_tensor(const std::filesystem::path& path);

TensorFile to_tensor(const Matrix& m);
// Requires a rank-2 tensor.
Matrix to_matrix(const TensorFile& t);

struct PatchRecord {
    std::int64_t channel = 0;
    std::string image_id;
    std::int64_t u = 0;
    std::int64_t v = 0;
    double activation = 0.0;
    std::int64_t class_label = 0;
    std::optional<std::string> patch_path;

    bool operator==(const PatchRecord&) const = default;
};

// Throws FormatError if an invariant is violated.
void check_record(const PatchRecord& rec);

std::string to_json_line(const PatchRecord& rec);
// line_no is only used for error messages.
PatchRecord parse_patch_record(const std::string& line, std::size_t line_no);

std::vector<PatchRecord> load_patch_records(const std::filesystem::path& path);
void write_patch_records(const std::filesystem::path& path, const std::vector<PatchRecord>& records);

struct EmbeddingSet {
    Matrix rows;  // K x d, unit-norm
    std::vector<std::size_t> drifted_rows;  // input norm deviated from 1 by > 1e-2

    std::size_t size() const noexcept { return rows.rows(); }
    std::size_t dim() const noexcept { return rows.cols(); }
};

inline constexpr double kNormWarnTolerance = 1e-2;
inline constexpr double kZeroNorm = 1e-12;

EmbeddingSet validate_embedding_set(Matrix matrix);

struct PromptSet {
    std::vector<std::string> prompts;
    Matrix embeddings;  // n_prompts x d, unit-norm rows
};

// Loads prompts.jsonl (key "prompt") and the paired n_prompts x d tensor.
PromptSet load_prompt_set(const std::filesystem::path& jsonl, const std::filesystem::path& tensor);
void write_prompt_set(const std::filesystem::path& jsonl, const std::filesystem::path& tensor,
                      const PromptSet& prompts);

// Row norms must be within this tolerance of 1 after validation.
inline constexpr double kPromptNormTolerance = 1e-4;
PromptSet validate_prompt_set(PromptSet prompts);

}  // namespace psi
