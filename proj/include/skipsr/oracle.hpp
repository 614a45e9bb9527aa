#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "skipsr/resample.hpp"
#include "skipsr/video.hpp"

namespace skipsr {

inline constexpr double kDefaultTau = 0.0002;
inline constexpr int kDefaultFactor = 4;

// Binary grid over patches; true = skippable (receives no further computation).
struct SkipMask {
    std::int64_t gt = 0, gh = 0, gw = 0;
    std::vector<bool> bits; // row-major (t, h, w), size gt*gh*gw
    double tau = kDefaultTau;
    int factor = kDefaultFactor;

    std::int64_t count() const { return gt * gh * gw; }
    std::int64_t index(std::int64_t it, std::int64_t ih, std::int64_t iw) const
    {
        return (it * gh + ih) * gw + iw;
    }
    bool at(std::int64_t it, std::int64_t ih, std::int64_t iw) const
    {
        return bits[static_cast<std::size_t>(index(it, ih, iw))];
    }
    std::int64_t popcount() const
    {
        std::int64_t n = 0;
        for (bool b : bits)
            n += b ? 1 : 0;
        return n;
    }
    double skipped_fraction() const
    {
        return count() == 0 ? 0.0 : static_cast<double>(popcount()) / static_cast<double>(count());
    }
};

struct MaskStats {
    double skipped_fraction = 0.0;
    std::vector<double> per_frame_fraction; // one entry per temporal grid slice
    double tau = kDefaultTau;
    int factor = kDefaultFactor;
};

// Mean reconstruction error of a single patch under downsample-then-upsample,
// taken jointly over all 4*16*16*3 values.
inline double patch_mse(const VideoTensor& patch, int f)
{
    require(patch.frames == kPatchT && patch.height == kPatchH && patch.width == kPatchW,
            "patch_mse expects a 4x16x16 patch");
    VideoTensor rec = down_up(patch, f);
    double s = 0.0;
    for (std::size_t i = 0; i < patch.data.size(); ++i) {
        double d = patch.data[i] - rec.data[i];
        s += d * d;
    }
    return s / static_cast<double>(patch.data.size());
}

inline std::vector<double> patch_mse_all(const PatchGrid& g, int f)
{
    std::vector<double> out(static_cast<std::size_t>(g.count()), 0.0);
    parallel_for(g.count(), [&](std::int64_t k) {
        out[static_cast<std::size_t>(k)] = patch_mse(g.patches[static_cast<std::size_t>(k)], f);
    });
    return out;
}

inline SkipMask oracle_mask(const PatchGrid& g, double tau, int f)
{
    require(tau >= 0.0, "tau must be >= 0");
    SkipMask m;
    m.gt = g.gt;
    m.gh = g.gh;
    m.gw = g.gw;
    m.tau = tau;
    m.factor = f;
    m.bits.assign(static_cast<std::size_t>(g.count()), false);
    std::vector<double> errs = patch_mse_all(g, f);
    for (std::int64_t k = 0; k < g.count(); ++k)
        m.bits[static_cast<std::size_t>(k)] = errs[static_cast<std::size_t>(k)] <= tau;
    return m;
}

inline SkipMask oracle_mask(const VideoTensor& v, double tau = kDefaultTau, int f = kDefaultFactor)
{
    return oracle_mask(extract_patches(v), tau, f);
}

inline MaskStats mask_stats(const SkipMask& m)
{
    MaskStats s;
    s.tau = m.tau;
    s.factor = m.factor;
    s.skipped_fraction = m.skipped_fraction();
    s.per_frame_fraction.assign(static_cast<std::size_t>(m.gt), 0.0);
    for (std::int64_t it = 0; it < m.gt; ++it) {
        std::int64_t n = 0;
        for (std::int64_t ih = 0; ih < m.gh; ++ih)
            for (std::int64_t iw = 0; iw < m.gw; ++iw)
                n += m.at(it, ih, iw) ? 1 : 0;
        s.per_frame_fraction[static_cast<std::size_t>(it)] =
            static_cast<double>(n) / static_cast<double>(m.gh * m.gw);
    }
    return s;
}

// Skipped fraction per threshold; fractions are nondecreasing in tau.
inline std::vector<std::pair<double, double>> threshold_sweep(const VideoTensor& v,
                                                              const std::vector<double>& taus,
                                                              int f = kDefaultFactor)
{
    for (std::size_t i = 1; i < taus.size(); ++i)
        require(taus[i - 1] <= taus[i], "taus must be sorted ascending");
    PatchGrid g = extract_patches(v);
    std::vector<double> errs = patch_mse_all(g, f);
    std::vector<std::pair<double, double>> out;
    out.reserve(taus.size());
    for (double tau : taus) {
        std::int64_t n = 0;
        for (double e : errs)
            n += e <= tau ? 1 : 0;
        out.emplace_back(tau, static_cast<double>(n) / static_cast<double>(g.count()));
    }
    return out;
}

// ---- mask file format ----
// magic "SKPM", version u8=1, Gt,Gh,Gw u32 LE, tau f64 LE, factor u32 LE,
// then row-major bits packed LSB-first.

inline void save_mask(const SkipMask& m, const std::string& path)
{
    std::ofstream os = open_out(path);
    os.write("SKPM", 4);
    char version = 1;
    os.write(&version, 1);
    write_u32(os, static_cast<std::uint32_t>(m.gt));
    write_u32(os, static_cast<std::uint32_t>(m.gh));
    write_u32(os, static_cast<std::uint32_t>(m.gw));
    write_f64(os, m.tau);
    write_u32(os, static_cast<std::uint32_t>(m.factor));
    std::vector<std::uint8_t> packed(static_cast<std::size_t>((m.count() + 7) / 8), 0);
    for (std::int64_t k = 0; k < m.count(); ++k)
        if (m.bits[static_cast<std::size_t>(k)])
            packed[static_cast<std::size_t>(k / 8)] |= static_cast<std::uint8_t>(1u << (k % 8));
    os.write(reinterpret_cast<const char*>(packed.data()),
             static_cast<std::streamsize>(packed.size()));
}

inline SkipMask load_mask(const std::string& path)
{
    std::ifstream is = open_in(path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::string(magic, 4) != "SKPM")
        throw FormatError("not a mask file: " + path);
    char version = 0;
    is.read(&version, 1);
    if (version != 1)
        throw FormatError("unsupported mask version: " + path);
    SkipMask m;
    m.gt = read_u32(is);
    m.gh = read_u32(is);
    m.gw = read_u32(is);
    m.tau = read_f64(is);
    m.factor = static_cast<int>(read_u32(is));
    std::vector<std::uint8_t> packed(static_cast<std::size_t>((m.count() + 7) / 8));
    is.read(reinterpret_cast<char*>(packed.data()), static_cast<std::streamsize>(packed.size()));
    if (!is)
        throw FormatError("truncated mask file: " + path);
    m.bits.assign(static_cast<std::size_t>(m.count()), false);
    for (std::int64_t k = 0; k < m.count(); ++k)
        m.bits[static_cast<std::size_t>(k)] =
            (packed[static_cast<std::size_t>(k / 8)] >> (k % 8)) & 1u;
    return m;
}

} // namespace skipsr
