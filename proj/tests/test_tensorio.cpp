#include <doctest.h>

#include <cmath>
#include <limits>

#include "psi/error.hpp"
#include "psi/tensorio.hpp"
#include "test_util.hpp"

using namespace psi;
using testutil::TempDir;

TEST_SUITE("tensorio") {

TEST_CASE("2x3 tensor round trip, 24 byte payload") {
    TempDir tmp;
    TensorFile t;
    t.dims = {2, 3};
    t.values = {1.f, -2.5f, 3.f, 0.f, 1e-7f, 42.f};
    write_tensor(tmp / "a.psit", t);
    const auto back = read_tensor(tmp / "a.psit");
    CHECK(back == t);
    const std::size_t header = 4 + 4 + 4 + 4 + 2 * 8;
    CHECK(std::filesystem::file_size(tmp / "a.psit") == header + 24);
}

TEST_CASE("header layout is little endian") {
    TempDir tmp;
    TensorFile t;
    t.dims = {1, 2};
    t.values = {1.f, 2.f};
    write_tensor(tmp / "h.psit", t);
    const auto bytes = testutil::slurp(tmp / "h.psit");
    CHECK(bytes.substr(0, 4) == "PSIT");
    CHECK(bytes[4] == 1);   // version
    CHECK(bytes[8] == 1);   // dtype
    CHECK(bytes[12] == 2);  // ndim
    CHECK(bytes[16] == 1);
    CHECK(bytes[24] == 2);
}

TEST_CASE("bad magic") {
    TempDir tmp;
    TensorFile t;
    t.dims = {2, 2};
    t.values = {1, 2, 3, 4};
    write_tensor(tmp / "m.psit", t);
    auto bytes = testutil::slurp(tmp / "m.psit");
    bytes[0] = 'X';
    testutil::spit(tmp / "m.psit", bytes);
    CHECK_THROWS_WITH_AS(read_tensor(tmp / "m.psit"), "bad magic", FormatError);
}

TEST_CASE("50x512 accepted, one byte short is truncated") {
    TempDir tmp;
    TensorFile t;
    t.dims = {50, 512};
    t.values.assign(50 * 512, 0.5f);
    write_tensor(tmp / "big.psit", t);
    CHECK(read_tensor(tmp / "big.psit").values.size() == 50u * 512u);
    auto bytes = testutil::slurp(tmp / "big.psit");
    bytes.pop_back();
    testutil::spit(tmp / "big.psit", bytes);
    CHECK_THROWS_WITH_AS(read_tensor(tmp / "big.psit"), "truncated payload", FormatError);
}

TEST_CASE("trailing bytes and bad dims rejected") {
    TempDir tmp;
    TensorFile t;
    t.dims = {2};
    t.values = {1, 2};
    write_tensor(tmp / "t.psit", t);
    testutil::spit(tmp / "t.psit", testutil::slurp(tmp / "t.psit") + "x");
    CHECK_THROWS_AS(read_tensor(tmp / "t.psit"), FormatError);

    TensorFile bad;
    bad.dims = {2, 2};
    bad.values = {1, 2, 3};
    CHECK_THROWS_AS(write_tensor(tmp / "bad.psit", bad), FormatError);
    bad.dims = {};
    CHECK_THROWS_AS(write_tensor(tmp / "bad.psit", bad), FormatError);

    testutil::spit(tmp / "short.psit", "PSI");
    CHECK_THROWS_AS(read_tensor(tmp / "short.psit"), FormatError);
}

TEST_CASE("matrix conversion requires rank 2") {
    TensorFile t;
    t.dims = {4};
    t.values = {1, 2, 3, 4};
    CHECK_THROWS_AS(to_matrix(t), FormatError);
    Matrix m(2, 2);
    m(0, 1) = 3;
    CHECK(to_matrix(to_tensor(m)) == m);
}

TEST_CASE("three well formed lines in order") {
    TempDir tmp;
    testutil::spit(tmp / "r.jsonl",
                   R"({"channel":1,"image_id":"a","u":0,"v":1,"activation":2.5,"class_label":3})"
                   "\n"
                   R"({"channel":1,"image_id":"b","u":2,"v":2,"activation":1.5,"class_label":0,"patch_path":"p/b.png"})"
                   "\n\n"
                   R"({"channel":2,"image_id":"c","u":1,"v":0,"activation":-1,"class_label":7,"patch_path":null})"
                   "\n");
    const auto recs = load_patch_records(tmp / "r.jsonl");
    REQUIRE(recs.size() == 3);
    CHECK(recs[0].image_id == "a");
    CHECK(recs[1].patch_path == std::optional<std::string>("p/b.png"));
    CHECK(recs[2].class_label == 7);
    CHECK_FALSE(recs[2].patch_path.has_value());
}

TEST_CASE("NaN activation is an error at that line") {
    TempDir tmp;
    testutil::spit(tmp / "r.jsonl",
                   R"({"channel":1,"image_id":"a","u":0,"v":1,"activation":2.5,"class_label":3})"
                   "\n"
                   R"({"channel":1,"image_id":"b","u":0,"v":1,"activation":"NaN","class_label":3})"
                   "\n");
    try {
        load_patch_records(tmp / "r.jsonl");
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    testutil::spit(tmp / "g.jsonl", "{not json\n");
    CHECK_THROWS_AS(load_patch_records(tmp / "g.jsonl"), FormatError);
    testutil::spit(tmp / "m.jsonl", R"({"channel":1,"image_id":"a","u":0,"v":1,"activation":2.5})" "\n");
    CHECK_THROWS_AS(load_patch_records(tmp / "m.jsonl"), FormatError);
}

TEST_CASE("empty file gives empty list") {
    TempDir tmp;
    testutil::spit(tmp / "e.jsonl", "");
    CHECK(load_patch_records(tmp / "e.jsonl").empty());
}

TEST_CASE("record round trip") {
    TempDir tmp;
    std::vector<PatchRecord> recs = {{3, "img-1", 2, 5, 0.125, 4, std::nullopt},
                                     {3, "img-2", 0, 0, 1e300, 0, std::string("x.png")}};
    write_patch_records(tmp / "w.jsonl", recs);
    CHECK(load_patch_records(tmp / "w.jsonl") == recs);
    PatchRecord inf = recs[0];
    inf.activation = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(check_record(inf), FormatError);
}

TEST_CASE("unit rows unchanged") {
    const auto z = testutil::unit_set(10, 6, 1);
    const auto again = validate_embedding_set(z.rows);
    for (std::size_t i = 0; i < z.rows.data().size(); ++i)
        CHECK(std::fabs(again.rows.data()[i] - z.rows.data()[i]) < 1e-7);
    CHECK(again.drifted_rows.empty());
}

TEST_CASE("3-4-5 row normalized, drift recorded") {
    Matrix m(2, 4);
    m(0, 0) = 3;
    m(0, 1) = 4;
    m(1, 2) = 1;
    const auto z = validate_embedding_set(m);
    CHECK(z.rows(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(z.rows(0, 1) == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(z.drifted_rows == std::vector<std::size_t>{0});
}

TEST_CASE("zero row at index 7") {
    Matrix m(10, 3, 1.0);
    for (auto& x : m.row(7)) x = 0.0;
    CHECK_THROWS_WITH_AS(validate_embedding_set(m), "zero embedding at row 7", DataError);
}

TEST_CASE("prompt set round trip") {
    TempDir tmp;
    PromptSet p;
    p.prompts = {"a photo of a cat", "a photo of a dog", "a photo of a \"quoted\" thing"};
    p.embeddings = testutil::unit_set(3, 5, 2).rows;
    write_prompt_set(tmp / "p.jsonl", tmp / "p.psit", p);
    const auto back = load_prompt_set(tmp / "p.jsonl", tmp / "p.psit");
    CHECK(back.prompts == p.prompts);
    REQUIRE(back.embeddings.rows() == 3);
    for (std::size_t i = 0; i < 15; ++i) CHECK(back.embeddings.data()[i] == doctest::Approx(p.embeddings.data()[i]).epsilon(1e-6));

    PromptSet one;
    one.prompts = {"x"};
    one.embeddings = Matrix(1, 5, 1.0);
    CHECK_THROWS_AS(validate_prompt_set(one), DataError);
}

}
