#include "poselab/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace poselab {

namespace {

constexpr char kMagic[4] = {'P', 'B', 'L', '1'};
constexpr std::uint64_t kMaxNameLen = 1 << 16;
constexpr std::uint64_t kMaxRank = 8;

void write_u64(std::ostream& os, std::uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(buf), 8);
}

void write_f64(std::ostream& os, double v) { write_u64(os, std::bit_cast<std::uint64_t>(v)); }

std::uint64_t read_u64(std::istream& is, const char* what) {
    unsigned char buf[8];
    is.read(reinterpret_cast<char*>(buf), 8);
    if (is.gcount() != 8) {
        throw std::runtime_error(std::string("checkpoint: truncated while reading ") + what);
    }
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
}

double read_f64(std::istream& is, const char* what) {
    return std::bit_cast<double>(read_u64(is, what));
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<CheckpointRecord>& records) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
    os.write(kMagic, 4);
    write_u64(os, records.size());
    for (const auto& rec : records) {
        write_u64(os, rec.name.size());
        os.write(rec.name.data(), static_cast<std::streamsize>(rec.name.size()));
        write_u64(os, rec.value.rank());
        for (int d = 0; d < rec.value.rank(); ++d) {
            write_u64(os, static_cast<std::uint64_t>(rec.value.dim(d)));
        }
        for (double v : rec.value.data) write_f64(os, v);
    }
    if (!os) throw std::runtime_error("checkpoint: write to '" + path + "' failed");
}

std::vector<CheckpointRecord> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    if (is.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
        throw std::runtime_error("checkpoint: '" + path + "' has bad magic");
    }
    const std::uint64_t count = read_u64(is, "record count");
    std::vector<CheckpointRecord> records;
    records.reserve(count);
    for (std::uint64_t r = 0; r < count; ++r) {
        const std::uint64_t name_len = read_u64(is, "name length");
        if (name_len > kMaxNameLen) {
            throw std::runtime_error("checkpoint: record name length " +
                                     std::to_string(name_len) + " exceeds limit");
        }
        std::string name(name_len, '\0');
        is.read(name.data(), static_cast<std::streamsize>(name_len));
        if (static_cast<std::uint64_t>(is.gcount()) != name_len) {
            throw std::runtime_error("checkpoint: truncated while reading record name");
        }
        const std::uint64_t rank = read_u64(is, "rank");
        if (rank > kMaxRank) {
            throw std::runtime_error("checkpoint: record '" + name + "' has rank " +
                                     std::to_string(rank) + ", limit is " +
                                     std::to_string(kMaxRank));
        }
        std::vector<std::int64_t> shape(rank);
        std::uint64_t numel = 1;
        for (std::uint64_t d = 0; d < rank; ++d) {
            const std::uint64_t e = read_u64(is, "extent");
            if (e == 0 || e > (1ull << 32)) {
                throw std::runtime_error("checkpoint: record '" + name +
                                         "' has invalid extent " + std::to_string(e));
            }
            shape[d] = static_cast<std::int64_t>(e);
            numel *= e;
        }
        if (numel > (1ull << 34)) {
            throw std::runtime_error("checkpoint: record '" + name + "' is implausibly large");
        }
        Tensor t(shape);
        for (std::uint64_t i = 0; i < numel; ++i) t.data[i] = read_f64(is, "value");
        records.push_back({std::move(name), std::move(t)});
    }
    return records;
}

}  // namespace poselab
