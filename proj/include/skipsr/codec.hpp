#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "skipsr/oracle.hpp"
#include "skipsr/video.hpp"

namespace skipsr {

// Deterministic stand-in for a learned video autoencoder: an orthonormal 3D
// Haar transform on 4x8x8 blocks (8x spatial, 4x temporal compression) with
// the K lowest-frequency coefficients retained per block per color channel.

inline constexpr std::int64_t kBlockT = 4;
inline constexpr std::int64_t kBlockH = 8;
inline constexpr std::int64_t kBlockW = 8;
inline constexpr int kBlockCoeffs = 256; // 4*8*8

struct LatentTensor {
    std::int64_t t = 0, h = 0, w = 0; // latent grid (blocks)
    int keep = 16;                    // K coefficients per block per color
    std::vector<double> coeffs;       // layout (t,h,w,C), C = 3*keep, c = color*keep + rank

    int channels() const { return 3 * keep; }
    std::int64_t cells() const { return t * h * w; }
    std::int64_t size() const { return cells() * channels(); }
    std::int64_t cell_offset(std::int64_t bt, std::int64_t bh, std::int64_t bw) const
    {
        return ((bt * h + bh) * w + bw) * channels();
    }
    bool same_dims(const LatentTensor& o) const
    {
        return t == o.t && h == o.h && w == o.w && keep == o.keep;
    }
};

namespace haar {

inline constexpr double kInvSqrt2 = 0.70710678118654752440;

inline void forward_1d(double* x, int n, double* tmp)
{
    for (int len = n; len > 1; len /= 2) {
        int half = len / 2;
        for (int i = 0; i < half; ++i) {
            tmp[i] = (x[2 * i] + x[2 * i + 1]) * kInvSqrt2;
            tmp[half + i] = (x[2 * i] - x[2 * i + 1]) * kInvSqrt2;
        }
        std::copy(tmp, tmp + len, x);
    }
}

inline void inverse_1d(double* x, int n, double* tmp)
{
    for (int len = 2; len <= n; len *= 2) {
        int half = len / 2;
        for (int i = 0; i < half; ++i) {
            tmp[2 * i] = (x[i] + x[half + i]) * kInvSqrt2;
            tmp[2 * i + 1] = (x[i] - x[half + i]) * kInvSqrt2;
        }
        std::copy(tmp, tmp + len, x);
    }
}

// Subband level of a 1D coefficient index: 0 for DC, else floor(log2(i))+1.
inline int level(int i)
{
    if (i == 0)
        return 0;
    int l = 0;
    while (i > 0) {
        i >>= 1;
        ++l;
    }
    return l;
}

// Fixed retention order over the 4x8x8 coefficient block: ascending sum of
// per-axis subband levels, ties broken by index tuple (t, then h, then w).
inline const std::vector<int>& retention_order()
{
    static const std::vector<int> order = [] {
        struct Entry {
            int key, idx;
        };
        std::vector<Entry> entries;
        entries.reserve(kBlockCoeffs);
        for (int t = 0; t < kBlockT; ++t)
            for (int y = 0; y < kBlockH; ++y)
                for (int x = 0; x < kBlockW; ++x) {
                    int idx = (t * static_cast<int>(kBlockH) + y) * static_cast<int>(kBlockW) + x;
                    entries.push_back({level(t) + level(y) + level(x), idx});
                }
        std::stable_sort(entries.begin(), entries.end(),
                         [](const Entry& a, const Entry& b) { return a.key < b.key; });
        std::vector<int> order;
        order.reserve(kBlockCoeffs);
        for (const Entry& e : entries)
            order.push_back(e.idx);
        return order;
    }();
    return order;
}

inline void forward_3d(double* block)
{
    double tmp[8], line[8];
    // t axis
    for (int y = 0; y < kBlockH; ++y)
        for (int x = 0; x < kBlockW; ++x) {
            for (int t = 0; t < kBlockT; ++t)
                line[t] = block[(t * kBlockH + y) * kBlockW + x];
            forward_1d(line, kBlockT, tmp);
            for (int t = 0; t < kBlockT; ++t)
                block[(t * kBlockH + y) * kBlockW + x] = line[t];
        }
    // h axis
    for (int t = 0; t < kBlockT; ++t)
        for (int x = 0; x < kBlockW; ++x) {
            for (int y = 0; y < kBlockH; ++y)
                line[y] = block[(t * kBlockH + y) * kBlockW + x];
            forward_1d(line, kBlockH, tmp);
            for (int y = 0; y < kBlockH; ++y)
                block[(t * kBlockH + y) * kBlockW + x] = line[y];
        }
    // w axis
    for (int t = 0; t < kBlockT; ++t)
        for (int y = 0; y < kBlockH; ++y)
            forward_1d(block + (t * kBlockH + y) * kBlockW, kBlockW, tmp);
}

inline void inverse_3d(double* block)
{
    double tmp[8], line[8];
    for (int t = 0; t < kBlockT; ++t)
        for (int y = 0; y < kBlockH; ++y)
            inverse_1d(block + (t * kBlockH + y) * kBlockW, kBlockW, tmp);
    for (int t = 0; t < kBlockT; ++t)
        for (int x = 0; x < kBlockW; ++x) {
            for (int y = 0; y < kBlockH; ++y)
                line[y] = block[(t * kBlockH + y) * kBlockW + x];
            inverse_1d(line, kBlockH, tmp);
            for (int y = 0; y < kBlockH; ++y)
                block[(t * kBlockH + y) * kBlockW + x] = line[y];
        }
    for (int y = 0; y < kBlockH; ++y)
        for (int x = 0; x < kBlockW; ++x) {
            for (int t = 0; t < kBlockT; ++t)
                line[t] = block[(t * kBlockH + y) * kBlockW + x];
            inverse_1d(line, kBlockT, tmp);
            for (int t = 0; t < kBlockT; ++t)
                block[(t * kBlockH + y) * kBlockW + x] = line[t];
        }
}

} // namespace haar

inline LatentTensor encode(const VideoTensor& v, int keep)
{
    require(keep >= 1 && keep <= kBlockCoeffs, "keep must be in [1, 256]");
    VideoTensor padded = pad_to_multiple(v, kBlockT, kBlockH, kBlockW);
    LatentTensor l;
    l.t = padded.frames / kBlockT;
    l.h = padded.height / kBlockH;
    l.w = padded.width / kBlockW;
    l.keep = keep;
    l.coeffs.assign(static_cast<std::size_t>(l.size()), 0.0);
    const auto& order = haar::retention_order();

    parallel_for(l.cells(), [&](std::int64_t cell) {
        std::int64_t bt = cell / (l.h * l.w);
        std::int64_t bh = (cell / l.w) % l.h;
        std::int64_t bw = cell % l.w;
        double block[kBlockCoeffs];
        double* out = l.coeffs.data() + l.cell_offset(bt, bh, bw);
        for (int c = 0; c < 3; ++c) {
            for (int t = 0; t < kBlockT; ++t)
                for (int y = 0; y < kBlockH; ++y)
                    for (int x = 0; x < kBlockW; ++x)
                        block[(t * kBlockH + y) * kBlockW + x] =
                            padded.at(bt * kBlockT + t, bh * kBlockH + y, bw * kBlockW + x, c);
            haar::forward_3d(block);
            for (int k = 0; k < keep; ++k)
                out[c * keep + k] = block[order[static_cast<std::size_t>(k)]];
        }
    });
    return l;
}

// Linear inverse with dropped coefficients zero-filled; clamps to [0,1] and
// crops the reflect padding.
inline VideoTensor decode(const LatentTensor& l, std::int64_t frames, std::int64_t height,
                          std::int64_t width, bool clamp_output = true)
{
    require(l.t * kBlockT >= frames && l.t * kBlockT - frames < kBlockT &&
                l.h * kBlockH >= height && l.h * kBlockH - height < kBlockH &&
                l.w * kBlockW >= width && l.w * kBlockW - width < kBlockW,
            "latent grid inconsistent with target dims");
    VideoTensor padded(l.t * kBlockT, l.h * kBlockH, l.w * kBlockW);
    const auto& order = haar::retention_order();

    parallel_for(l.cells(), [&](std::int64_t cell) {
        std::int64_t bt = cell / (l.h * l.w);
        std::int64_t bh = (cell / l.w) % l.h;
        std::int64_t bw = cell % l.w;
        double block[kBlockCoeffs];
        const double* in = l.coeffs.data() + l.cell_offset(bt, bh, bw);
        for (int c = 0; c < 3; ++c) {
            std::fill(block, block + kBlockCoeffs, 0.0);
            for (int k = 0; k < l.keep; ++k)
                block[order[static_cast<std::size_t>(k)]] = in[c * l.keep + k];
            haar::inverse_3d(block);
            for (int t = 0; t < kBlockT; ++t)
                for (int y = 0; y < kBlockH; ++y)
                    for (int x = 0; x < kBlockW; ++x)
                        padded.at(bt * kBlockT + t, bh * kBlockH + y, bw * kBlockW + x, c) =
                            block[(t * kBlockH + y) * kBlockW + x];
        }
    });
    if (clamp_output)
        for (double& x : padded.data)
            x = std::clamp(x, 0.0, 1.0);
    return crop(padded, frames, height, width);
}

// Mask cells map 1:1 onto 1x2x2 latent cells (pixel 4x16x16 <-> latent 1x2x2).
inline LatentTensor latent_swap(const LatentTensor& l_hr, const LatentTensor& l_ud,
                                const SkipMask& m)
{
    require(l_hr.same_dims(l_ud), "latent_swap: latent dims mismatch");
    require(l_hr.t == m.gt && l_hr.h == 2 * m.gh && l_hr.w == 2 * m.gw,
            "latent_swap: mask grid does not map onto the latent grid");
    LatentTensor out = l_hr;
    int ch = l_hr.channels();
    parallel_for(m.count(), [&](std::int64_t k) {
        if (!m.bits[static_cast<std::size_t>(k)])
            return;
        std::int64_t it = k / (m.gh * m.gw);
        std::int64_t ih = (k / m.gw) % m.gh;
        std::int64_t iw = k % m.gw;
        for (std::int64_t dy = 0; dy < 2; ++dy)
            for (std::int64_t dx = 0; dx < 2; ++dx) {
                std::int64_t off = out.cell_offset(it, 2 * ih + dy, 2 * iw + dx);
                std::copy(l_ud.coeffs.begin() + off, l_ud.coeffs.begin() + off + ch,
                          out.coeffs.begin() + off);
            }
    });
    return out;
}

// ---- latent file format ----
// magic "SKPL", dims t,h,w,C u32 LE, K u32 LE, then f32 LE coefficients.

inline void save_latent(const LatentTensor& l, const std::string& path)
{
    std::ofstream os = open_out(path);
    os.write("SKPL", 4);
    write_u32(os, static_cast<std::uint32_t>(l.t));
    write_u32(os, static_cast<std::uint32_t>(l.h));
    write_u32(os, static_cast<std::uint32_t>(l.w));
    write_u32(os, static_cast<std::uint32_t>(l.channels()));
    write_u32(os, static_cast<std::uint32_t>(l.keep));
    write_f32_array(os, l.coeffs);
}

inline LatentTensor load_latent(const std::string& path)
{
    std::ifstream is = open_in(path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::string(magic, 4) != "SKPL")
        throw FormatError("not a latent file: " + path);
    LatentTensor l;
    l.t = read_u32(is);
    l.h = read_u32(is);
    l.w = read_u32(is);
    std::uint32_t channels = read_u32(is);
    l.keep = static_cast<int>(read_u32(is));
    if (channels != static_cast<std::uint32_t>(3 * l.keep))
        throw FormatError("latent channel count does not match K: " + path);
    read_f32_array(is, l.coeffs, static_cast<std::size_t>(l.size()));
    return l;
}

} // namespace skipsr
