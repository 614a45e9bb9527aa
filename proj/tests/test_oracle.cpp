#include <catch2/catch.hpp>

#include "skipsr/oracle.hpp"

#include "reference.hpp"
#include "test_helpers.hpp"

using namespace skipsr;

TEST_CASE("patch_mse")
{
    SECTION("constant patch reconstructs exactly")
    {
        VideoTensor p = ref::constant_video(4, 16, 16, 0.5);
        REQUIRE(patch_mse(p, 4) == 0.0);
    }
    SECTION("a down-up smooth patch has error far below tau")
    {
        // U(D(.)) is a smoother rather than an exact projection, so zero
        // error is only guaranteed for constants; on low-frequency content
        // the residual sits orders of magnitude under the threshold.
        VideoTensor s = crop(ref::smooth_video(4, 16, 16, 51), 4, 16, 16);
        VideoTensor p = down_up(s, 4);
        double e = patch_mse(p, 4);
        REQUIRE(e < kDefaultTau / 10.0);
        VideoTensor noise = ref::random_video(4, 16, 16, 51);
        REQUIRE(e < patch_mse(noise, 4) / 1000.0);
    }
    SECTION("iid noise patch matches the scalar reference and dwarfs tau")
    {
        VideoTensor p = ref::random_video(4, 16, 16, 52);
        double got = patch_mse(p, 4);
        double want = ref::patch_mse(p, 4);
        REQUIRE(got == Approx(want).margin(1e-9));
        // roughly Var * (1 - 1/16) for uniform noise
        REQUIRE(got > 0.04);
        REQUIRE(got < 0.13);
        REQUIRE(got > 100 * kDefaultTau);
    }
    SECTION("invariant under interior translation by multiples of the factor")
    {
        // Texture confined to an interior coarse cell on a constant
        // background: shifting it by f px relocates the same difference
        // field, so the error is unchanged. (Translations into the boundary
        // cells are excluded; edge clamping breaks the symmetry there.)
        std::mt19937_64 rng(53);
        std::uniform_real_distribution<double> dist(0.0, 1.0);
        double tex[4][4];
        for (auto& row : tex)
            for (double& x : row)
                x = dist(rng);
        auto place = [&](std::int64_t oy, std::int64_t ox) {
            VideoTensor p = ref::constant_video(4, 16, 16, 0.5);
            for (std::int64_t t = 0; t < 4; ++t)
                for (std::int64_t y = 0; y < 4; ++y)
                    for (std::int64_t x = 0; x < 4; ++x)
                        for (int c = 0; c < 3; ++c)
                            p.at(t, oy + y, ox + x, c) = tex[y][x];
            return p;
        };
        double base = patch_mse(place(4, 4), 4);
        REQUIRE(patch_mse(place(4, 8), 4) == Approx(base).margin(1e-12));
        REQUIRE(patch_mse(place(8, 8), 4) == Approx(base).margin(1e-12));
    }
}

TEST_CASE("oracle_mask")
{
    SECTION("a down-up smooth video is fully skippable")
    {
        VideoTensor v = down_up(ref::smooth_video(4, 64, 96, 61), 4);
        SkipMask m = oracle_mask(v, kDefaultTau, 4);
        REQUIRE(m.skipped_fraction() == 1.0);
    }
    SECTION("grid-aligned half constant / half noise splits exactly 0.5")
    {
        VideoTensor v = ref::half_constant_half_noise(4, 32, 64, 62);
        SkipMask m = oracle_mask(v, kDefaultTau, 4);
        REQUIRE(m.skipped_fraction() == 0.5);
        // left-half patches skippable, right-half not
        for (std::int64_t ih = 0; ih < m.gh; ++ih)
            for (std::int64_t iw = 0; iw < m.gw; ++iw)
                REQUIRE(m.at(0, ih, iw) == (iw < m.gw / 2));
    }
    SECTION("tau = 0 keeps only exactly-reconstructed patches")
    {
        VideoTensor v = ref::half_constant_half_noise(4, 32, 64, 63);
        SkipMask m = oracle_mask(v, 0.0, 4);
        REQUIRE(m.skipped_fraction() == 0.5); // constants reconstruct exactly
        VideoTensor n = ref::random_video(4, 32, 64, 64);
        REQUIRE(oracle_mask(n, 0.0, 4).skipped_fraction() == 0.0);
    }
    SECTION("monotonicity: mask(tau1) subset of mask(tau2)")
    {
        VideoTensor v = ref::graded_noise_video(4, 32, 128, 65);
        SkipMask m1 = oracle_mask(v, 1e-5, 4);
        SkipMask m2 = oracle_mask(v, 1e-3, 4);
        for (std::int64_t k = 0; k < m1.count(); ++k)
            if (m1.bits[static_cast<std::size_t>(k)])
                REQUIRE(m2.bits[static_cast<std::size_t>(k)]);
    }
    SECTION("determinism")
    {
        VideoTensor v = ref::random_video(4, 32, 32, 66);
        SkipMask a = oracle_mask(v, kDefaultTau, 4);
        SkipMask b = oracle_mask(v, kDefaultTau, 4);
        REQUIRE(a.bits == b.bits);
    }
}

TEST_CASE("mask_stats per-frame fractions")
{
    VideoTensor v = ref::half_constant_half_noise(8, 32, 64, 67);
    SkipMask m = oracle_mask(v, kDefaultTau, 4);
    MaskStats s = mask_stats(m);
    REQUIRE(s.per_frame_fraction.size() == static_cast<std::size_t>(m.gt));
    double mean = 0.0;
    for (double f : s.per_frame_fraction) {
        REQUIRE(f >= 0.0);
        REQUIRE(f <= 1.0);
        mean += f;
    }
    mean /= static_cast<double>(s.per_frame_fraction.size());
    REQUIRE(mean == Approx(s.skipped_fraction).margin(1e-12));
}

TEST_CASE("threshold_sweep")
{
    SECTION("endpoints")
    {
        VideoTensor v = ref::half_constant_half_noise(4, 32, 64, 71);
        auto rows = threshold_sweep(v, {0.0, 1e9}, 4);
        REQUIRE(rows.size() == 2);
        REQUIRE(rows[0].second == 0.5); // exact-reconstruction fraction
        REQUIRE(rows[1].second == 1.0);
    }
    SECTION("constant video is all-skippable at any positive tau")
    {
        VideoTensor v = ref::constant_video(4, 32, 32, 0.3);
        auto rows = threshold_sweep(v, {1e-8, 1e-4}, 4);
        for (auto& [tau, frac] : rows)
            REQUIRE(frac == 1.0);
    }
    SECTION("nondecreasing fractions crossing 0.5 on the composite video")
    {
        VideoTensor v = ref::half_constant_half_noise(4, 32, 64, 72);
        auto rows = threshold_sweep(v, {1e-5, 2e-4, 1e-2}, 4);
        REQUIRE(rows[0].second <= rows[1].second);
        REQUIRE(rows[1].second <= rows[2].second);
        REQUIRE(rows[0].second <= 0.5);
        REQUIRE(rows[1].second == 0.5);
    }
    SECTION("unsorted taus are an error")
    {
        VideoTensor v = ref::constant_video(4, 16, 16, 0.0);
        REQUIRE_THROWS_AS(threshold_sweep(v, {1e-3, 1e-5}, 4), ValidationError);
    }
}

TEST_CASE("mask file round trip")
{
    VideoTensor v = ref::half_constant_half_noise(4, 32, 64, 73);
    SkipMask m = oracle_mask(v, kDefaultTau, 4);
    auto path = testutil::scratch_file("mask.skpm");
    save_mask(m, path);
    SkipMask r = load_mask(path);
    REQUIRE(r.gt == m.gt);
    REQUIRE(r.gh == m.gh);
    REQUIRE(r.gw == m.gw);
    REQUIRE(r.tau == m.tau);
    REQUIRE(r.factor == m.factor);
    REQUIRE(r.bits == m.bits);

    SECTION("bad magic is rejected")
    {
        auto bad = testutil::scratch_file("bad.skpm");
        testutil::write_bytes(bad, {'N', 'O', 'P', 'E', 0});
        REQUIRE_THROWS_AS(load_mask(bad), FormatError);
    }
}
