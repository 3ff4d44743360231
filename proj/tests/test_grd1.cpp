#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "windscale/grd1.hpp"

using namespace windscale;
namespace fs = std::filesystem;

namespace {

FieldSequence random_seq(std::size_t T, std::size_t C, std::size_t H, std::size_t W,
                         std::uint64_t seed) {
    FieldSequence seq;
    seq.meta.n_lat = H;
    seq.meta.n_lon = W;
    for (std::size_t c = 0; c < C; ++c) seq.meta.channel_names.push_back("ch" + std::to_string(c));
    seq.data = Tensor32({T, C, H, W});
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> dist(-10.f, 10.f);
    for (auto& v : seq.data.data) v = dist(rng);
    return seq;
}

std::string tmpfile(const char* tag) {
    return (fs::temp_directory_path() / (std::string("windscale_grd1_") + tag + ".grd")).string();
}

}  // namespace

TEST_CASE("GRD1 roundtrip is byte-identical") {
    const std::string p1 = tmpfile("a"), p2 = tmpfile("b");
    auto seq = random_seq(3, 3, 8, 8, 42);
    write_grd1(seq, p1);
    auto back = read_grd1(p1);
    write_grd1(back, p2);
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
    CHECK(back.data.data == seq.data.data);
    CHECK(back.meta.channel_names == seq.meta.channel_names);
    fs::remove(p1);
    fs::remove(p2);
}

TEST_CASE("GRD1 roundtrip identity over random shapes") {
    std::mt19937_64 rng(1);
    for (int it = 0; it < 12; ++it) {
        const std::size_t T = 1 + rng() % 4, C = 1 + rng() % 3;
        const std::size_t H = 4 + rng() % 5, W = 4 + rng() % 5;
        const std::string p = tmpfile("prop");
        auto seq = random_seq(T, C, H, W, rng());
        seq.meta.d_lat = 0.5;
        seq.meta.dt = 3.0;
        write_grd1(seq, p);
        auto back = read_grd1(p);
        CHECK(back.data.data == seq.data.data);
        CHECK(back.meta.d_lat == seq.meta.d_lat);
        CHECK(back.meta.dt == seq.meta.dt);
        fs::remove(p);
    }
}

TEST_CASE("all-zero sequence payload is header plus 64 zero bytes") {
    FieldSequence seq;
    seq.meta.n_lat = 4;
    seq.meta.n_lon = 4;
    seq.meta.channel_names = {"u"};
    seq.data = Tensor32({1, 1, 4, 4}, 0.f);
    const std::string p = tmpfile("zeros");
    write_grd1(seq, p);
    // header: 4 magic + 4 version + 20 extents + 24 f64 + 4 namelen + 1 name
    CHECK(fs::file_size(p) == 57 + 64);
    std::ifstream is(p, std::ios::binary);
    is.seekg(57);
    char payload[64];
    is.read(payload, 64);
    for (char c : payload) CHECK(c == 0);
    fs::remove(p);
}

TEST_CASE("corrupt magic and truncation are format errors") {
    const std::string p = tmpfile("bad");
    auto seq = random_seq(1, 1, 4, 4, 3);
    write_grd1(seq, p);
    {
        std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
        f.write("GRD9", 4);
    }
    CHECK_THROWS_AS(read_grd1(p), FormatError);
    write_grd1(seq, p);
    fs::resize_file(p, fs::file_size(p) - 10);
    CHECK_THROWS_WITH_AS(read_grd1(p), doctest::Contains("byte offset"), FormatError);
    fs::remove(p);
}
