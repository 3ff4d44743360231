#include <cstring>
#include <fstream>

#include "windscale/params.hpp"

namespace windscale {

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is, const std::string& path, const char* what) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (is.gcount() != 4) throw FormatError("WTS1 '" + path + "': truncated " + what);
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

}  // namespace

void write_wts1(const ParamStore32& ps, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("WTS1: cannot open '" + path + "' for writing");
    os.write("WTS1", 4);
    put_u32(os, static_cast<std::uint32_t>(ps.names().size()));
    for (const auto& name : ps.names()) {
        const auto& t = ps.value(name);
        put_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(os, static_cast<std::uint32_t>(t.rank()));
        for (auto e : t.shape) put_u32(os, static_cast<std::uint32_t>(e));
        os.write(reinterpret_cast<const char*>(t.data.data()),
                 static_cast<std::streamsize>(t.data.size() * 4));
    }
    if (!os) throw FormatError("WTS1: write failure on '" + path + "'");
}

ParamStore32 read_wts1(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("WTS1: cannot open '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    if (is.gcount() != 4 || std::memcmp(magic, "WTS1", 4) != 0)
        throw FormatError("WTS1 '" + path + "': bad magic");
    const std::uint32_t count = get_u32(is, path, "count");
    ParamStore32 ps;
    for (std::uint32_t p = 0; p < count; ++p) {
        const std::uint32_t nlen = get_u32(is, path, "name length");
        std::string name(nlen, '\0');
        is.read(name.data(), nlen);
        if (static_cast<std::uint32_t>(is.gcount()) != nlen)
            throw FormatError("WTS1 '" + path + "': truncated name");
        const std::uint32_t rank = get_u32(is, path, "rank");
        std::vector<std::size_t> shape(rank);
        std::size_t n = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            shape[i] = get_u32(is, path, "extent");
            n *= shape[i];
        }
        Tensor32 t;
        t.shape = shape;
        t.data.resize(n);
        is.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(n * 4));
        if (static_cast<std::size_t>(is.gcount()) != n * 4)
            throw FormatError("WTS1 '" + path + "': truncated payload for '" + name + "'");
        ps.add(name, std::move(t));
    }
    return ps;
}

}  // namespace windscale
