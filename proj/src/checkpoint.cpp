// SPDX-License-Identifier: Apache-2.0
#include "cud/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstdio>
#include <cstring>
#include <memory>

namespace cud {

std::uint32_t crc32_ieee(const unsigned char* data, std::size_t n, std::uint32_t seed) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1u) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t crc = seed ^ 0xffffffffu;
    for (std::size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
    return crc ^ 0xffffffffu;
}

namespace {

void put_u32(std::vector<unsigned char>& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_u64(std::vector<unsigned char>& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_f64(std::vector<unsigned char>& buf, double v) { put_u64(buf, std::bit_cast<std::uint64_t>(v)); }

struct Reader {
    const unsigned char* p;
    std::size_t n;
    std::size_t pos = 0;

    void need(std::size_t k, const char* what) const {
        if (pos + k > n) throw CheckpointError(CheckpointErrorKind::truncated,
                                               std::string("checkpoint: truncated while reading ") + what);
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[pos + static_cast<std::size_t>(i)]) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[pos + static_cast<std::size_t>(i)]) << (8 * i);
        pos += 8;
        return v;
    }
    double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
    std::string str(std::size_t k, const char* what) {
        need(k, what);
        std::string s(reinterpret_cast<const char*>(p + pos), k);
        pos += k;
        return s;
    }
    unsigned char byte(const char* what) {
        need(1, what);
        return p[pos++];
    }
};

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
    std::vector<unsigned char> buf;
    buf.insert(buf.end(), {'C', 'U', 'C', 'K'});
    put_u32(buf, kCheckpointVersion);
    put_u64(buf, tensors.size());
    for (const auto& t : tensors) {
        if (shape_numel(t.shape) != static_cast<std::int64_t>(t.values.size()))
            throw CheckpointError(CheckpointErrorKind::io, "checkpoint: tensor " + t.name + " shape/value mismatch");
        put_u32(buf, static_cast<std::uint32_t>(t.name.size()));
        buf.insert(buf.end(), t.name.begin(), t.name.end());
        put_u32(buf, static_cast<std::uint32_t>(t.shape.size()));
        for (auto d : t.shape) put_u64(buf, static_cast<std::uint64_t>(d));
        buf.push_back(0);  // dtype: f64
        for (double v : t.values) put_f64(buf, v);
    }
    const std::uint32_t crc = crc32_ieee(buf.data(), buf.size());
    put_u32(buf, crc);

    std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.c_str(), "wb"));
    if (!f) throw CheckpointError(CheckpointErrorKind::io, "checkpoint: cannot open " + path + " for writing");
    if (std::fwrite(buf.data(), 1, buf.size(), f.get()) != buf.size())
        throw CheckpointError(CheckpointErrorKind::io, "checkpoint: short write to " + path);
}

std::vector<NamedTensor> load_checkpoint(const std::string& path) {
    std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.c_str(), "rb"));
    if (!f) throw CheckpointError(CheckpointErrorKind::io, "checkpoint: cannot open " + path);
    std::fseek(f.get(), 0, SEEK_END);
    const long size = std::ftell(f.get());
    std::fseek(f.get(), 0, SEEK_SET);
    if (size < 0) throw CheckpointError(CheckpointErrorKind::io, "checkpoint: cannot stat " + path);
    std::vector<unsigned char> buf(static_cast<std::size_t>(size));
    if (!buf.empty() && std::fread(buf.data(), 1, buf.size(), f.get()) != buf.size())
        throw CheckpointError(CheckpointErrorKind::io, "checkpoint: short read from " + path);

    if (buf.size() < 4 + 4 + 8 + 4)
        throw CheckpointError(CheckpointErrorKind::truncated, "checkpoint: file too small");
    const std::uint32_t stored_crc = static_cast<std::uint32_t>(buf[buf.size() - 4]) |
                                     static_cast<std::uint32_t>(buf[buf.size() - 3]) << 8 |
                                     static_cast<std::uint32_t>(buf[buf.size() - 2]) << 16 |
                                     static_cast<std::uint32_t>(buf[buf.size() - 1]) << 24;
    if (crc32_ieee(buf.data(), buf.size() - 4) != stored_crc)
        throw CheckpointError(CheckpointErrorKind::crc, "checkpoint: CRC mismatch in " + path);

    Reader r{buf.data(), buf.size() - 4};
    if (r.str(4, "magic") != "CUCK")
        throw CheckpointError(CheckpointErrorKind::magic, "checkpoint: bad magic bytes in " + path);
    const std::uint32_t version = r.u32("version");
    if (version != kCheckpointVersion)
        throw CheckpointError(CheckpointErrorKind::version,
                              "checkpoint: version " + std::to_string(version) + " unsupported (expected " +
                                  std::to_string(kCheckpointVersion) + ")");
    const std::uint64_t count = r.u64("tensor count");
    std::vector<NamedTensor> out;
    out.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        NamedTensor t;
        const std::uint32_t name_len = r.u32("name length");
        t.name = r.str(name_len, "name");
        const std::uint32_t rank = r.u32("rank");
        t.shape.resize(rank);
        for (std::uint32_t k = 0; k < rank; ++k) t.shape[k] = static_cast<std::int64_t>(r.u64("dims"));
        const unsigned char dtype = r.byte("dtype");
        if (dtype != 0)
            throw CheckpointError(CheckpointErrorKind::dtype,
                                  "checkpoint: unknown dtype tag " + std::to_string(dtype) + " for " + t.name);
        const std::int64_t numel = shape_numel(t.shape);
        t.values.resize(static_cast<std::size_t>(numel));
        for (std::int64_t k = 0; k < numel; ++k) t.values[static_cast<std::size_t>(k)] = r.f64("payload");
        out.push_back(std::move(t));
    }
    return out;
}

const NamedTensor& find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name) {
    for (const auto& t : tensors)
        if (t.name == name) return t;
    throw CheckpointError(CheckpointErrorKind::io, "checkpoint: missing tensor " + name);
}

bool has_tensor(const std::vector<NamedTensor>& tensors, const std::string& name) {
    for (const auto& t : tensors)
        if (t.name == name) return true;
    return false;
}

}  // namespace cud
