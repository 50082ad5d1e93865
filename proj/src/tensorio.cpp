#include "psi/tensorio.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <json.hpp>

#include "psi/error.hpp"

namespace psi {
namespace {

static_assert(std::endian::native == std::endian::little,
              "the .psit writer assumes a little-endian host");

template <typename T>
void put(std::string& buf, T value) {
    char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    buf.append(bytes, sizeof(T));
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    template <typename T>
    T take(const char* field) {
        if (bytes_.size() - pos_ < sizeof(T))
            throw FormatError(std::string("truncated header: missing ") + field);
        T value;
        std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }

    std::size_t remaining() const { return bytes_.size() - pos_; }
    const char* cursor() const { return bytes_.data() + pos_; }

private:
    const std::string& bytes_;
    std::size_t pos_ = 0;
};

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void check_dims(const std::vector<std::uint64_t>& dims) {
    if (dims.empty()) throw FormatError("dims: empty");
    for (auto d : dims)
        if (d < 1) throw FormatError("dims: every dimension must be >= 1");
}

}  // namespace

std::uint64_t TensorFile::element_count() const {
    std::uint64_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

void write_tensor(const std::filesystem::path& path, const TensorFile& tensor) {
    if (tensor.dtype != kDtypeF32) throw FormatError("dtype: only f32 (code 1) is supported");
    check_dims(tensor.dims);
    if (tensor.values.size() != tensor.element_count())
        throw FormatError("payload: element count does not match dims");

    std::string buf(kTensorMagic, 4);
    put(buf, kTensorVersion);
    put(buf, tensor.dtype);
    put(buf, static_cast<std::uint32_t>(tensor.dims.size()));
    for (auto d : tensor.dims) put(buf, d);
    buf.append(reinterpret_cast<const char*>(tensor.values.data()), tensor.values.size() * sizeof(float));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + path.string() + " for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw FormatError("write failed: " + path.string());
}

TensorFile read_tensor(const std::filesystem::path& path) {
    const std::string bytes = slurp(path);
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kTensorMagic, 4) != 0)
        throw FormatError("bad magic");
    Reader r(bytes);
    r.take<std::uint32_t>("magic");
    if (r.take<std::uint32_t>("version") != kTensorVersion) throw FormatError("unsupported version");

    TensorFile t;
    t.dtype = r.take<std::uint32_t>("dtype");
    if (t.dtype != kDtypeF32) throw FormatError("unsupported dtype");
    const auto ndim = r.take<std::uint32_t>("ndim");
    if (ndim == 0) throw FormatError("dims: empty");
    for (std::uint32_t i = 0; i < ndim; ++i) t.dims.push_back(r.take<std::uint64_t>("dims"));
    check_dims(t.dims);

    const std::uint64_t count = t.element_count();
    const std::uint64_t expected = count * sizeof(float);
    if (r.remaining() < expected) throw FormatError("truncated payload");
    if (r.remaining() > expected) throw FormatError("payload: trailing bytes after dims x 4");
    t.values.resize(count);
    std::memcpy(t.values.data(), r.cursor(), expected);
    return t;
}

TensorFile to_tensor(const Matrix& m) {
    TensorFile t;
    t.dims = {m.rows(), m.cols()};
    t.values.assign(m.data().begin(), m.data().end());
    return t;
}

Matrix to_matrix(const TensorFile& t) {
    if (t.dims.size() != 2) throw FormatError("dims: expected a rank-2 tensor");
    Matrix m(t.dims[0], t.dims[1]);
    std::copy(t.values.begin(), t.values.end(), m.data().begin());
    return m;
}

void check_record(const PatchRecord& rec) {
    if (!std::isfinite(rec.activation)) throw FormatError("activation: not finite");
    if (rec.u < 0 || rec.v < 0) throw FormatError("u/v: negative coordinate");
    if (rec.class_label < 0) throw FormatError("class_label: negative");
}

std::string to_json_line(const PatchRecord& rec) {
    nlohmann::ordered_json j;
    j["channel"] = rec.channel;
    j["image_id"] = rec.image_id;
    j["u"] = rec.u;
    j["v"] = rec.v;
    j["activation"] = rec.activation;
    j["class_label"] = rec.class_label;
    if (rec.patch_path)
        j["patch_path"] = *rec.patch_path;
    else
        j["patch_path"] = nullptr;
    return j.dump();
}

PatchRecord parse_patch_record(const std::string& line, std::size_t line_no) {
    const std::string where = "line " + std::to_string(line_no) + ": ";
    PatchRecord rec;
    try {
        const auto j = nlohmann::json::parse(line);
        if (!j.is_object()) throw FormatError(where + "expected a JSON object");
        rec.channel = j.at("channel").get<std::int64_t>();
        rec.image_id = j.at("image_id").get<std::string>();
        rec.u = j.at("u").get<std::int64_t>();
        rec.v = j.at("v").get<std::int64_t>();
        const auto& act = j.at("activation");
        if (!act.is_number()) throw FormatError(where + "activation: not a finite number");
        rec.activation = act.get<double>();
        rec.class_label = j.at("class_label").get<std::int64_t>();
        if (auto it = j.find("patch_path"); it != j.end() && !it->is_null())
            rec.patch_path = it->get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(where + e.what());
    }
    try {
        check_record(rec);
    } catch (const FormatError& e) {
        throw FormatError(where + e.what());
    }
    return rec;
}

std::vector<PatchRecord> load_patch_records(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    std::vector<PatchRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        out.push_back(parse_patch_record(line, line_no));
    }
    return out;
}

void write_patch_records(const std::filesystem::path& path, const std::vector<PatchRecord>& records) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("cannot open " + path.string() + " for writing");
    for (const auto& rec : records) {
        check_record(rec);
        out << to_json_line(rec) << '\n';
    }
}

EmbeddingSet validate_embedding_set(Matrix matrix) {
    if (matrix.rows() < 2) throw DataError("embedding set needs at least 2 rows");
    if (matrix.cols() < 2) throw DataError("embedding set needs dimension >= 2");
    EmbeddingSet set;
    for (std::size_t r = 0; r < matrix.rows(); ++r) {
        auto row = matrix.row(r);
        for (double x : row)
            if (!std::isfinite(x)) throw DataError("non-finite embedding at row " + std::to_string(r));
        const double n = norm(row);
        if (n < kZeroNorm) throw DataError("zero embedding at row " + std::to_string(r));
        if (std::abs(n - 1.0) > kNormWarnTolerance) set.drifted_rows.push_back(r);
        if (n != 1.0)
            for (double& x : row) x /= n;
    }
    set.rows = std::move(matrix);
    return set;
}

PromptSet validate_prompt_set(PromptSet prompts) {
    if (prompts.embeddings.rows() < 2) throw DataError("prompt set needs at least 2 prompts");
    if (!prompts.prompts.empty() && prompts.prompts.size() != prompts.embeddings.rows())
        throw DataError("prompt count " + std::to_string(prompts.prompts.size()) +
                        " does not match embedding rows " + std::to_string(prompts.embeddings.rows()));
    for (std::size_t r = 0; r < prompts.embeddings.rows(); ++r) {
        auto row = prompts.embeddings.row(r);
        const double n = norm(row);
        if (!std::isfinite(n) || n < kZeroNorm)
            throw DataError("zero prompt embedding at row " + std::to_string(r));
        for (double& x : row) x /= n;
    }
    return prompts;
}

PromptSet load_prompt_set(const std::filesystem::path& jsonl, const std::filesystem::path& tensor) {
    PromptSet set;
    std::ifstream in(jsonl);
    if (!in) throw FormatError("cannot open " + jsonl.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            set.prompts.push_back(nlohmann::json::parse(line).at("prompt").get<std::string>());
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(jsonl.string() + " line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    set.embeddings = to_matrix(read_tensor(tensor));
    return validate_prompt_set(std::move(set));
}

void write_prompt_set(const std::filesystem::path& jsonl, const std::filesystem::path& tensor,
                      const PromptSet& prompts) {
    std::ofstream out(jsonl, std::ios::trunc);
    if (!out) throw FormatError("cannot open " + jsonl.string() + " for writing");
    for (const auto& p : prompts.prompts) out << nlohmann::ordered_json{{"prompt", p}}.dump() << '\n';
    write_tensor(tensor, to_tensor(prompts.embeddings));
}

}  // namespace psi
