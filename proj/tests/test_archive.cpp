#include <cstdio>
#include <filesystem>
#include <limits>

#include "doctest.h"
#include "fq/archive.hpp"
#include "fq/synthetic.hpp"
#include "test_support.hpp"

namespace {

std::filesystem::path temp_file(const char* name) {
    return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("identity matrix round-trips through a file") {
    fq::TensorArchive a;
    a.add("w", fq::Matrix(2, 2, {1, 0, 0, 1}));
    const auto path = temp_file("fq_identity.fqta");
    fq::write_archive(a, path);
    const fq::TensorArchive back = fq::read_archive(path);
    REQUIRE(back.entries.size() == 1);
    CHECK(back.entries[0].name == "w");
    CHECK(back.entries[0].matrix() == fq::Matrix(2, 2, {1, 0, 0, 1}));
    std::filesystem::remove(path);
}

TEST_CASE("random archives round-trip byte-exactly") {
    fq::Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        fq::TensorArchive a;
        a.add("x", fqtest::random_matrix(rng, 3, 5, 10.0));
        a.add("y", fqtest::random_matrix(rng, 1 + rng.index(8), 1 + rng.index(8)));
        fq::IntMatrix q(2, 3, {-7, 0, 7, 127, -127, 1});
        a.add("q", q);

        const auto bytes = fq::encode_archive(a);
        const fq::TensorArchive back = fq::decode_archive(bytes);
        CHECK(fq::encode_archive(back) == bytes);
        REQUIRE(back.entries.size() == 3);
        CHECK(back.entries[0].matrix() == a.entries[0].matrix());
        CHECK(back.entries[1].matrix() == a.entries[1].matrix());
        CHECK(back.entries[2].int_matrix() == q);
    }
}

TEST_CASE("wrong magic is a bad magic error") {
    fq::TensorArchive a;
    a.add("w", fq::Matrix(1, 1, {2.0}));
    auto bytes = fq::encode_archive(a);
    bytes[0] = 'X';
    CHECK_THROWS_WITH_AS(fq::decode_archive(bytes), doctest::Contains("bad magic"),
                         fq::ArchiveError);
}

TEST_CASE("truncated payloads are rejected") {
    fq::TensorArchive a;
    a.add("w", fq::Matrix(4, 4));
    const auto bytes = fq::encode_archive(a);
    for (std::size_t cut : {bytes.size() - 1, bytes.size() - 9, std::size_t{6}}) {
        const std::span<const std::uint8_t> clipped(bytes.data(), cut);
        CHECK_THROWS_WITH_AS(fq::decode_archive(clipped), doctest::Contains("truncated"),
                             fq::ArchiveError);
    }
}

TEST_CASE("duplicate names are rejected on add and on decode") {
    fq::TensorArchive a;
    a.add("w", fq::Matrix(1, 1, {1.0}));
    CHECK_THROWS_WITH_AS(a.add("w", fq::Matrix(1, 1, {2.0})), doctest::Contains("duplicate"),
                         fq::ArchiveError);

    // Rename the second entry to collide with the first ('v' appears exactly
    // once in the encoded bytes).
    fq::TensorArchive two;
    two.add("w", fq::Matrix(1, 1, {1.0}));
    two.add("v", fq::Matrix(1, 1, {2.0}));
    auto bytes = fq::encode_archive(two);
    int renamed = 0;
    for (auto& b : bytes) {
        if (b == 'v') {
            b = 'w';
            ++renamed;
        }
    }
    REQUIRE(renamed == 1);
    CHECK_THROWS_WITH_AS(fq::decode_archive(bytes), doctest::Contains("duplicate"),
                         fq::ArchiveError);
}

TEST_CASE("non-finite values are rejected") {
    fq::TensorArchive a;
    CHECK_THROWS_WITH_AS(
        a.add("bad", fq::Matrix(1, 2, {1.0, std::numeric_limits<double>::quiet_NaN()})),
        doctest::Contains("non-finite"), fq::ArchiveError);
    CHECK_THROWS_WITH_AS(
        a.add("bad", fq::Matrix(1, 2, {1.0, std::numeric_limits<double>::infinity()})),
        doctest::Contains("non-finite"), fq::ArchiveError);
}

TEST_CASE("trailing bytes after the last tensor are rejected") {
    fq::TensorArchive a;
    a.add("w", fq::Matrix(1, 1, {1.0}));
    auto bytes = fq::encode_archive(a);
    bytes.push_back(0);
    CHECK_THROWS_AS(fq::decode_archive(bytes), fq::ArchiveError);
}

TEST_CASE("missing file errors mention the path") {
    CHECK_THROWS_WITH_AS(fq::read_archive("/nonexistent/nope.fqta"), doctest::Contains("nope"),
                         fq::ArchiveError);
}
