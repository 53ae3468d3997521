// archive.hpp - FQTA binary tensor container shared by all CLI commands.
//
// Layout: magic "FQTA", u32 version=1, u32 tensor count; per tensor:
// u32 name length, UTF-8 name, u8 dtype (0=float64 LE, 1=int32 LE),
// u32 ndim (always 2), u64 rows, u64 cols, raw row-major payload.
// All integers little-endian. Round-trips are byte-exact.
#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "fq/matrix.hpp"

namespace fq {

class ArchiveError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ArchiveEntry {
    std::string name;
    std::variant<Matrix, IntMatrix> data;

    bool is_float() const { return std::holds_alternative<Matrix>(data); }
    const Matrix& matrix() const { return std::get<Matrix>(data); }
    const IntMatrix& int_matrix() const { return std::get<IntMatrix>(data); }
};

struct TensorArchive {
    std::vector<ArchiveEntry> entries;

    // Throws ArchiveError on duplicate names or non-finite float data.
    void add(std::string name, Matrix m);
    void add(std::string name, IntMatrix m);

    const ArchiveEntry* find(std::string_view name) const;
    // Entry lookup that throws with the missing name in the message.
    const ArchiveEntry& require(std::string_view name) const;
};

TensorArchive read_archive(const std::filesystem::path& path);
void write_archive(const TensorArchive& archive, const std::filesystem::path& path);

// In-memory codec used by the file functions; exposed for round-trip tests.
std::vector<std::uint8_t> encode_archive(const TensorArchive& archive);
TensorArchive decode_archive(std::span<const std::uint8_t> bytes);

}  // namespace fq
