#include "fq/archive.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_set>

namespace fq {

namespace {

constexpr char kMagic[4] = {'F', 'Q', 'T', 'A'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kDtypeF64 = 0;
constexpr std::uint8_t kDtypeI32 = 1;
// Guard against absurd dims from corrupt headers before allocating.
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 36;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
    put_u64(out, std::bit_cast<std::uint64_t>(v));
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::uint8_t u8() { return take(1)[0]; }

    std::uint32_t u32() {
        auto b = take(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
        return v;
    }

    std::uint64_t u64() {
        auto b = take(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        return v;
    }

    double f64() { return std::bit_cast<double>(u64()); }

    std::string str(std::uint32_t n) {
        auto b = take(n);
        return std::string(reinterpret_cast<const char*>(b.data()), b.size());
    }

    bool exhausted() const { return pos_ == bytes_.size(); }

private:
    std::span<const std::uint8_t> take(std::size_t n) {
        if (bytes_.size() - pos_ < n) {
            throw ArchiveError("truncated payload");
        }
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

std::pair<std::int64_t, std::int64_t> read_dims(Reader& r) {
    const std::uint32_t ndim = r.u32();
    if (ndim != 2) {
        throw ArchiveError("unsupported ndim " + std::to_string(ndim) + " (expected 2)");
    }
    const std::uint64_t rows = r.u64();
    const std::uint64_t cols = r.u64();
    if (rows < 1 || cols < 1 || rows > kMaxElements || cols > kMaxElements ||
        rows * cols > kMaxElements) {
        throw ArchiveError("invalid tensor dims");
    }
    return {static_cast<std::int64_t>(rows), static_cast<std::int64_t>(cols)};
}

}  // namespace

void TensorArchive::add(std::string name, Matrix m) {
    if (find(name) != nullptr) {
        throw ArchiveError("duplicate tensor name: " + name);
    }
    if (!all_finite(m)) {
        throw ArchiveError("non-finite value in tensor: " + name);
    }
    entries.push_back({std::move(name), std::move(m)});
}

void TensorArchive::add(std::string name, IntMatrix m) {
    if (find(name) != nullptr) {
        throw ArchiveError("duplicate tensor name: " + name);
    }
    entries.push_back({std::move(name), std::move(m)});
}

const ArchiveEntry* TensorArchive::find(std::string_view name) const {
    for (const auto& e : entries) {
        if (e.name == name) return &e;
    }
    return nullptr;
}

const ArchiveEntry& TensorArchive::require(std::string_view name) const {
    const ArchiveEntry* e = find(name);
    if (e == nullptr) {
        throw ArchiveError("missing tensor: " + std::string(name));
    }
    return *e;
}

std::vector<std::uint8_t> encode_archive(const TensorArchive& archive) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(archive.entries.size()));
    for (const auto& e : archive.entries) {
        put_u32(out, static_cast<std::uint32_t>(e.name.size()));
        out.insert(out.end(), e.name.begin(), e.name.end());
        if (e.is_float()) {
            const Matrix& m = e.matrix();
            out.push_back(kDtypeF64);
            put_u32(out, 2);
            put_u64(out, static_cast<std::uint64_t>(m.rows));
            put_u64(out, static_cast<std::uint64_t>(m.cols));
            for (double v : m.data) put_f64(out, v);
        } else {
            const IntMatrix& m = e.int_matrix();
            out.push_back(kDtypeI32);
            put_u32(out, 2);
            put_u64(out, static_cast<std::uint64_t>(m.rows));
            put_u64(out, static_cast<std::uint64_t>(m.cols));
            for (std::int32_t v : m.data) put_u32(out, static_cast<std::uint32_t>(v));
        }
    }
    return out;
}

TensorArchive decode_archive(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    const std::string magic = r.str(4);
    if (std::memcmp(magic.data(), kMagic, 4) != 0) {
        throw ArchiveError("bad magic (not an FQTA file)");
    }
    const std::uint32_t version = r.u32();
    if (version != kVersion) {
        throw ArchiveError("unsupported version " + std::to_string(version));
    }
    const std::uint32_t count = r.u32();

    TensorArchive archive;
    std::unordered_set<std::string> seen;
    for (std::uint32_t t = 0; t < count; ++t) {
        const std::uint32_t name_len = r.u32();
        std::string name = r.str(name_len);
        if (!seen.insert(name).second) {
            throw ArchiveError("duplicate tensor name: " + name);
        }
        const std::uint8_t dtype = r.u8();
        if (dtype == kDtypeF64) {
            auto [rows, cols] = read_dims(r);
            Matrix m(rows, cols);
            for (auto& v : m.data) v = r.f64();
            if (!all_finite(m)) {
                throw ArchiveError("non-finite value in tensor: " + name);
            }
            archive.entries.push_back({std::move(name), std::move(m)});
        } else if (dtype == kDtypeI32) {
            auto [rows, cols] = read_dims(r);
            IntMatrix m(rows, cols);
            for (auto& v : m.data) v = static_cast<std::int32_t>(r.u32());
            archive.entries.push_back({std::move(name), std::move(m)});
        } else {
            throw ArchiveError("unknown dtype tag " + std::to_string(dtype));
        }
    }
    if (!r.exhausted()) {
        throw ArchiveError("trailing bytes after last tensor");
    }
    return archive;
}

TensorArchive read_archive(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ArchiveError("cannot open " + path.string());
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return decode_archive(bytes);
}

void write_archive(const TensorArchive& archive, const std::filesystem::path& path) {
    const auto bytes = encode_archive(archive);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw ArchiveError("cannot open " + path.string() + " for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw ArchiveError("write failed: " + path.string());
    }
}

}  // namespace fq
