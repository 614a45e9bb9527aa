#include <catch2/catch.hpp>

#include "skipsr/video.hpp"
#include "skipsr/video_io.hpp"

#include "reference.hpp"
#include "test_helpers.hpp"

using namespace skipsr;

TEST_CASE("y4m constant frame decodes to a uniform near-white tensor")
{
    // Y=235, U=V=128 is nominal white; full-range conversion lands on 235/255.
    auto path = testutil::scratch_file("const.y4m");
    testutil::write_bytes(path, testutil::make_y4m(16, 16, 2, 235, 128, 128));
    VideoTensor v = load_video(path, VideoFormat::y4m);
    REQUIRE(v.frames == 2);
    REQUIRE(v.height == 16);
    REQUIRE(v.width == 16);
    double expected = 235.0 / 255.0;
    for (double x : v.data) {
        REQUIRE(x == Approx(expected).margin(1e-12));
    }
    // Y=255 is full-range white exactly.
    auto wpath = testutil::scratch_file("white.y4m");
    testutil::write_bytes(wpath, testutil::make_y4m(16, 16, 1, 255, 128, 128));
    VideoTensor w = load_video(wpath, VideoFormat::y4m);
    for (double x : w.data)
        REQUIRE(x == Approx(1.0).margin(1e-12));
}

TEST_CASE("y4m 444 uses per-pixel chroma")
{
    auto path = testutil::scratch_file("c444.y4m");
    testutil::write_bytes(path, testutil::make_y4m(16, 16, 1, 128, 128, 200, "444"));
    VideoTensor v = load_video(path, VideoFormat::y4m);
    // Cr=200 pushes red up, green down.
    REQUIRE(v.at(0, 0, 0, 0) > v.at(0, 0, 0, 1));
}

TEST_CASE("raw rgb load is an exact pass-through")
{
    const std::int64_t T = 4, H = 32, W = 32;
    auto path = testutil::scratch_file("vid.raw");
    {
        std::ofstream side(path + ".json");
        side << R"({"t":4,"h":32,"w":32,"c":3})";
    }
    std::vector<float> values(static_cast<std::size_t>(T * H * W * 3));
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<float> dist(0.f, 1.f);
    for (auto& x : values)
        x = dist(rng);
    {
        std::ofstream os(path, std::ios::binary);
        os.write(reinterpret_cast<const char*>(values.data()),
                 static_cast<std::streamsize>(values.size() * sizeof(float)));
    }
    VideoTensor v = load_video(path, VideoFormat::raw_rgb);
    REQUIRE(v.frames == T);
    REQUIRE(v.height == H);
    REQUIRE(v.width == W);
    // planar order: per frame, R plane then G then B
    std::size_t i = 0;
    for (std::int64_t t = 0; t < T; ++t)
        for (int c = 0; c < 3; ++c)
            for (std::int64_t y = 0; y < H; ++y)
                for (std::int64_t x = 0; x < W; ++x)
                    REQUIRE(v.at(t, y, x, c) == static_cast<double>(values[i++]));
}

TEST_CASE("y4m error paths")
{
    SECTION("10-bit colorspace is rejected")
    {
        auto path = testutil::scratch_file("p10.y4m");
        std::string header = "YUV4MPEG2 W16 H16 F25:1 C420p10\nFRAME\n";
        testutil::write_bytes(path, {header.begin(), header.end()});
        REQUIRE_THROWS_AS(load_video(path, VideoFormat::y4m), FormatError);
    }
    SECTION("mono colorspace is rejected")
    {
        auto path = testutil::scratch_file("mono.y4m");
        std::string header = "YUV4MPEG2 W16 H16 Cmono\nFRAME\n";
        testutil::write_bytes(path, {header.begin(), header.end()});
        REQUIRE_THROWS_AS(load_video(path, VideoFormat::y4m), FormatError);
    }
    SECTION("truncated frame payload is rejected")
    {
        auto bytes = testutil::make_y4m(16, 16, 1, 128, 128, 128);
        bytes.resize(bytes.size() - 10);
        auto path = testutil::scratch_file("trunc.y4m");
        testutil::write_bytes(path, bytes);
        REQUIRE_THROWS_AS(load_video(path, VideoFormat::y4m), FormatError);
    }
    SECTION("raw size mismatch vs sidecar is rejected")
    {
        auto path = testutil::scratch_file("bad.raw");
        {
            std::ofstream side(path + ".json");
            side << R"({"t":2,"h":16,"w":16,"c":3})";
        }
        std::vector<std::uint8_t> short_payload(100, 0);
        testutil::write_bytes(path, short_payload);
        REQUIRE_THROWS_AS(load_video(path, VideoFormat::raw_rgb), FormatError);
    }
    SECTION("missing file")
    {
        REQUIRE_THROWS_AS(load_video(testutil::scratch_file("nope.y4m"), VideoFormat::y4m),
                          IoError);
    }
}

TEST_CASE("loader determinism: identical bytes give identical tensors")
{
    auto bytes = testutil::make_y4m(32, 16, 3, 90, 100, 160);
    auto p1 = testutil::scratch_file("det1.y4m");
    auto p2 = testutil::scratch_file("det2.y4m");
    testutil::write_bytes(p1, bytes);
    testutil::write_bytes(p2, bytes);
    VideoTensor a = load_video(p1, VideoFormat::y4m);
    VideoTensor b = load_video(p2, VideoFormat::y4m);
    REQUIRE(a.data == b.data);
}

TEST_CASE("y4m save/load round trip stays within quantization error")
{
    VideoTensor v = ref::random_video(2, 16, 16, 21);
    auto path = testutil::scratch_file("rt.y4m");
    save_y4m(v, path);
    VideoTensor r = load_video(path, VideoFormat::y4m);
    REQUIRE(r.same_dims(v));
    for (std::size_t i = 0; i < v.data.size(); ++i)
        REQUIRE(std::abs(v.data[i] - r.data[i]) < 0.012);
}

TEST_CASE("raw save/load round trip is exact at f32 precision")
{
    VideoTensor v = ref::random_video(3, 20, 24, 22);
    for (double& x : v.data)
        x = static_cast<double>(static_cast<float>(x));
    auto path = testutil::scratch_file("rt.raw");
    save_raw(v, path);
    VideoTensor r = load_video(path, VideoFormat::raw_rgb);
    REQUIRE(r.data == v.data);
}

TEST_CASE("extract_patches: single patch, no padding")
{
    VideoTensor v = ref::random_video(4, 16, 16, 1);
    PatchGrid g = extract_patches(v);
    REQUIRE(g.count() == 1);
    REQUIRE(g.pad_t == 0);
    REQUIRE(g.pad_h == 0);
    REQUIRE(g.pad_w == 0);
    REQUIRE(g.patches[0].data == v.data);
}

TEST_CASE("extract_patches: non-divisible dims reflect-pad")
{
    VideoTensor v = ref::random_video(5, 17, 16, 2);
    PatchGrid g = extract_patches(v);
    REQUIRE(g.gt == 2);
    REQUIRE(g.gh == 2);
    REQUIRE(g.gw == 1);
    REQUIRE(g.pad_t == 3);
    REQUIRE(g.pad_h == 15);
    REQUIRE(g.pad_w == 0);

    // padded content must match the scalar mirror-reflect reference
    VideoTensor padded = ref::pad_reflect(v, 8, 32, 16);
    for (std::int64_t k = 0; k < g.count(); ++k) {
        std::int64_t it = k / (g.gh * g.gw);
        std::int64_t ih = (k / g.gw) % g.gh;
        std::int64_t iw = k % g.gw;
        const VideoTensor& p = g.patches[static_cast<std::size_t>(k)];
        for (std::int64_t t = 0; t < 4; ++t)
            for (std::int64_t y = 0; y < 16; ++y)
                for (std::int64_t x = 0; x < 16; ++x)
                    for (int c = 0; c < 3; ++c)
                        REQUIRE(p.at(t, y, x, c) ==
                                padded.at(it * 4 + t, ih * 16 + y, iw * 16 + x, c));
    }
    // spot check the mirror rule: padded row 17 equals source row 15
    REQUIRE(padded.at(0, 17, 3, 1) == v.at(0, 15, 3, 1));
    REQUIRE(padded.at(5, 2, 3, 0) == v.at(3, 2, 3, 0)); // frame 5 -> frame 3
}

TEST_CASE("compose_patches inverts extract_patches")
{
    SECTION("divisible dims, bit exact")
    {
        VideoTensor v = ref::random_video(8, 32, 48, 3);
        PatchGrid g = extract_patches(v);
        REQUIRE(g.count() == 2 * 2 * 3);
        VideoTensor r = compose_patches(g, v.frames, v.height, v.width);
        REQUIRE(r.data == v.data);
    }
    SECTION("non-divisible dims, bit exact")
    {
        VideoTensor v = ref::random_video(5, 17, 30, 4);
        PatchGrid g = extract_patches(v);
        VideoTensor r = compose_patches(g, v.frames, v.height, v.width);
        REQUIRE(r.data == v.data);
    }
    SECTION("single constant patch composes to a constant clip")
    {
        PatchGrid g;
        g.gt = g.gh = g.gw = 1;
        g.src_t = 4;
        g.src_h = 16;
        g.src_w = 16;
        g.patches.push_back(ref::constant_video(4, 16, 16, 0.25));
        VideoTensor r = compose_patches(g, 4, 16, 16);
        for (double x : r.data)
            REQUIRE(x == 0.25);
    }
    SECTION("dimension mismatch is an error")
    {
        VideoTensor v = ref::random_video(4, 16, 16, 5);
        PatchGrid g = extract_patches(v);
        REQUIRE_THROWS_AS(compose_patches(g, 4, 32, 16), ValidationError);
    }
}

TEST_CASE("patch locality: zeroing one patch only changes its footprint")
{
    VideoTensor v = ref::random_video(8, 32, 32, 6);
    PatchGrid g = extract_patches(v);
    std::int64_t k = g.index(1, 0, 1);
    for (double& x : g.patches[static_cast<std::size_t>(k)].data)
        x = 0.0;
    VideoTensor r = compose_patches(g, v.frames, v.height, v.width);
    for (std::int64_t t = 0; t < v.frames; ++t)
        for (std::int64_t y = 0; y < v.height; ++y)
            for (std::int64_t x = 0; x < v.width; ++x)
                for (int c = 0; c < 3; ++c) {
                    bool inside = (t / 4 == 1) && (y / 16 == 0) && (x / 16 == 1);
                    if (inside)
                        REQUIRE(r.at(t, y, x, c) == 0.0);
                    else
                        REQUIRE(r.at(t, y, x, c) == v.at(t, y, x, c));
                }
}

TEST_CASE("pad_to_multiple matches the scalar reference on random shapes")
{
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 8; ++trial) {
        std::int64_t t = 1 + static_cast<std::int64_t>(rng() % 6);
        std::int64_t h = 1 + static_cast<std::int64_t>(rng() % 40);
        std::int64_t w = 1 + static_cast<std::int64_t>(rng() % 40);
        VideoTensor v = ref::random_video(t, h, w, rng());
        VideoTensor got = pad_to_multiple(v, 4, 16, 16);
        VideoTensor want = ref::pad_reflect(v, ((t + 3) / 4) * 4, ((h + 15) / 16) * 16,
                                            ((w + 15) / 16) * 16);
        REQUIRE(got.data == want.data);
    }
}
