#include "windscale/grd1.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace windscale {

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& os, double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

struct Reader {
    std::ifstream is;
    std::size_t offset = 0;
    std::string path;

    Reader(const std::string& p) : is(p, std::ios::binary), path(p) {
        if (!is) throw FormatError("GRD1: cannot open '" + p + "'");
    }

    void bytes(void* dst, std::size_t n, const char* what) {
        is.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(is.gcount()) != n)
            throw FormatError("GRD1 '" + path + "': truncated " + what + " at byte offset " +
                              std::to_string(offset));
        offset += n;
    }

    std::uint32_t u32(const char* what) {
        unsigned char b[4];
        bytes(b, 4, what);
        return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
               (std::uint32_t(b[3]) << 24);
    }

    double f64(const char* what) {
        unsigned char b[8];
        bytes(b, 8, what);
        std::uint64_t u = 0;
        for (int i = 0; i < 8; ++i) u |= std::uint64_t(b[i]) << (8 * i);
        double v;
        std::memcpy(&v, &u, 8);
        return v;
    }
};

}  // namespace

void write_grd1(const FieldSequence& seq, const std::string& path) {
    seq.validate();
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("GRD1: cannot open '" + path + "' for writing");
    os.write("GRD1", 4);
    put_u32(os, 1);  // version
    put_u32(os, static_cast<std::uint32_t>(seq.data.shape[0]));
    put_u32(os, static_cast<std::uint32_t>(seq.data.shape[1]));
    put_u32(os, static_cast<std::uint32_t>(seq.meta.n_lat));
    put_u32(os, static_cast<std::uint32_t>(seq.meta.n_lon));
    put_u32(os, 0);  // dtype f32
    put_f64(os, seq.meta.d_lat);
    put_f64(os, seq.meta.d_lon);
    put_f64(os, seq.meta.dt);
    std::string names;
    for (std::size_t i = 0; i < seq.meta.channel_names.size(); ++i) {
        if (i) names += '\n';
        names += seq.meta.channel_names[i];
    }
    put_u32(os, static_cast<std::uint32_t>(names.size()));
    os.write(names.data(), static_cast<std::streamsize>(names.size()));
    static_assert(sizeof(float) == 4);
    os.write(reinterpret_cast<const char*>(seq.data.data.data()),
             static_cast<std::streamsize>(seq.data.data.size() * 4));
    if (!os) throw FormatError("GRD1: write failure on '" + path + "'");
}

FieldSequence read_grd1(const std::string& path) {
    Reader r(path);
    char magic[4];
    r.bytes(magic, 4, "magic");
    if (std::memcmp(magic, "GRD1", 4) != 0)
        throw FormatError("GRD1 '" + path + "': bad magic at byte offset 0");
    const std::uint32_t version = r.u32("version");
    if (version != 1)
        throw FormatError("GRD1 '" + path + "': unsupported version " + std::to_string(version) +
                          " at byte offset 4");
    const std::uint32_t T = r.u32("T"), C = r.u32("C");
    const std::uint32_t n_lat = r.u32("n_lat"), n_lon = r.u32("n_lon");
    const std::uint32_t dtype = r.u32("dtype");
    if (dtype > 1)
        throw FormatError("GRD1 '" + path + "': unknown dtype code " + std::to_string(dtype) +
                          " at byte offset 24");
    FieldSequence seq;
    seq.meta.n_lat = n_lat;
    seq.meta.n_lon = n_lon;
    seq.meta.d_lat = r.f64("d_lat");
    seq.meta.d_lon = r.f64("d_lon");
    seq.meta.dt = r.f64("dt");
    const std::uint32_t name_len = r.u32("name block length");
    std::string names(name_len, '\0');
    if (name_len) r.bytes(names.data(), name_len, "name block");
    std::size_t start = 0;
    while (start <= names.size() && !names.empty()) {
        std::size_t end = names.find('\n', start);
        if (end == std::string::npos) {
            seq.meta.channel_names.push_back(names.substr(start));
            break;
        }
        seq.meta.channel_names.push_back(names.substr(start, end - start));
        start = end + 1;
    }
    if (seq.meta.channel_names.size() != C)
        throw FormatError("GRD1 '" + path + "': name block carries " +
                          std::to_string(seq.meta.channel_names.size()) + " names, header says C=" +
                          std::to_string(C) + " (byte offset " + std::to_string(r.offset) + ")");
    const std::size_t n = std::size_t(T) * C * n_lat * n_lon;
    seq.data.shape = {T, C, n_lat, n_lon};
    seq.data.data.resize(n);
    if (dtype == 0) {
        if (n) r.bytes(seq.data.data.data(), n * 4, "f32 payload");
    } else {
        std::vector<double> tmp(n);
        if (n) r.bytes(tmp.data(), n * 8, "f64 payload");
        for (std::size_t i = 0; i < n; ++i) seq.data.data[i] = static_cast<float>(tmp[i]);
    }
    // trailing bytes mean extent/payload mismatch
    char extra;
    r.is.read(&extra, 1);
    if (r.is.gcount() == 1)
        throw FormatError("GRD1 '" + path + "': payload longer than header extents (byte offset " +
                          std::to_string(r.offset) + ")");
    seq.validate();
    return seq;
}

}  // namespace windscale
