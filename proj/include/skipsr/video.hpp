#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "skipsr/common.hpp"

namespace skipsr {

// T x H x W x 3 pixel volume, values in [0,1].
// Layout: frame-major, then row-major, channel-interleaved.
struct VideoTensor {
    std::int64_t frames = 0;
    std::int64_t height = 0;
    std::int64_t width = 0;
    std::vector<double> data; // size = frames*height*width*3

    VideoTensor() = default;
    VideoTensor(std::int64_t t, std::int64_t h, std::int64_t w, double fill = 0.0)
        : frames(t), height(h), width(w), data(static_cast<std::size_t>(t * h * w * 3), fill)
    {
    }

    std::int64_t size() const { return frames * height * width * 3; }

    std::int64_t index(std::int64_t t, std::int64_t y, std::int64_t x, int c) const
    {
        return ((t * height + y) * width + x) * 3 + c;
    }
    double& at(std::int64_t t, std::int64_t y, std::int64_t x, int c)
    {
        return data[static_cast<std::size_t>(index(t, y, x, c))];
    }
    double at(std::int64_t t, std::int64_t y, std::int64_t x, int c) const
    {
        return data[static_cast<std::size_t>(index(t, y, x, c))];
    }

    bool same_dims(const VideoTensor& o) const
    {
        return frames == o.frames && height == o.height && width == o.width;
    }
};

// Fixed spatiotemporal patch size used throughout.
inline constexpr std::int64_t kPatchT = 4;
inline constexpr std::int64_t kPatchH = 16;
inline constexpr std::int64_t kPatchW = 16;

// Non-overlapping 4x16x16x3 patches over the reflect-padded video.
// Each patch is stored as a small VideoTensor in row-major grid order.
struct PatchGrid {
    std::int64_t gt = 0, gh = 0, gw = 0; // grid dims in patches
    std::int64_t pad_t = 0, pad_h = 0, pad_w = 0;
    std::int64_t src_t = 0, src_h = 0, src_w = 0; // unpadded dims
    std::vector<VideoTensor> patches;

    std::int64_t count() const { return gt * gh * gw; }
    std::int64_t index(std::int64_t it, std::int64_t ih, std::int64_t iw) const
    {
        return (it * gh + ih) * gw + iw;
    }
};

// Reflect-pad to the given multiples along (t,h,w). No-op when divisible.
inline VideoTensor pad_to_multiple(const VideoTensor& v, std::int64_t mt, std::int64_t mh,
                                   std::int64_t mw)
{
    std::int64_t pt = (mt - v.frames % mt) % mt;
    std::int64_t ph = (mh - v.height % mh) % mh;
    std::int64_t pw = (mw - v.width % mw) % mw;
    if (pt == 0 && ph == 0 && pw == 0)
        return v;
    VideoTensor out(v.frames + pt, v.height + ph, v.width + pw);
    for (std::int64_t t = 0; t < out.frames; ++t) {
        std::int64_t ts = reflect_index(t, v.frames);
        for (std::int64_t y = 0; y < out.height; ++y) {
            std::int64_t ys = reflect_index(y, v.height);
            for (std::int64_t x = 0; x < out.width; ++x) {
                std::int64_t xs = reflect_index(x, v.width);
                for (int c = 0; c < 3; ++c)
                    out.at(t, y, x, c) = v.at(ts, ys, xs, c);
            }
        }
    }
    return out;
}

inline VideoTensor crop(const VideoTensor& v, std::int64_t t, std::int64_t h, std::int64_t w)
{
    require(t <= v.frames && h <= v.height && w <= v.width, "crop target exceeds source dims");
    if (t == v.frames && h == v.height && w == v.width)
        return v;
    VideoTensor out(t, h, w);
    for (std::int64_t f = 0; f < t; ++f)
        for (std::int64_t y = 0; y < h; ++y)
            for (std::int64_t x = 0; x < w; ++x)
                for (int c = 0; c < 3; ++c)
                    out.at(f, y, x, c) = v.at(f, y, x, c);
    return out;
}

inline PatchGrid extract_patches(const VideoTensor& v)
{
    require(v.frames >= 1 && v.height >= 1 && v.width >= 1, "empty video");
    VideoTensor padded = pad_to_multiple(v, kPatchT, kPatchH, kPatchW);
    PatchGrid g;
    g.src_t = v.frames;
    g.src_h = v.height;
    g.src_w = v.width;
    g.pad_t = padded.frames - v.frames;
    g.pad_h = padded.height - v.height;
    g.pad_w = padded.width - v.width;
    g.gt = padded.frames / kPatchT;
    g.gh = padded.height / kPatchH;
    g.gw = padded.width / kPatchW;
    g.patches.assign(static_cast<std::size_t>(g.count()), VideoTensor());
    parallel_for(g.count(), [&](std::int64_t k) {
        std::int64_t it = k / (g.gh * g.gw);
        std::int64_t ih = (k / g.gw) % g.gh;
        std::int64_t iw = k % g.gw;
        VideoTensor p(kPatchT, kPatchH, kPatchW);
        for (std::int64_t t = 0; t < kPatchT; ++t)
            for (std::int64_t y = 0; y < kPatchH; ++y)
                for (std::int64_t x = 0; x < kPatchW; ++x)
                    for (int c = 0; c < 3; ++c)
                        p.at(t, y, x, c) =
                            padded.at(it * kPatchT + t, ih * kPatchH + y, iw * kPatchW + x, c);
        g.patches[static_cast<std::size_t>(k)] = std::move(p);
    });
    return g;
}

// Exact inverse of extract_patches on the unpadded region.
inline VideoTensor compose_patches(const PatchGrid& g, std::int64_t t, std::int64_t h,
                                   std::int64_t w)
{
    require(g.gt * kPatchT == t + g.pad_t && g.gh * kPatchH == h + g.pad_h &&
                g.gw * kPatchW == w + g.pad_w,
            "patch grid inconsistent with target dims");
    require(static_cast<std::int64_t>(g.patches.size()) == g.count(), "patch count mismatch");
    VideoTensor out(t, h, w);
    for (std::int64_t k = 0; k < g.count(); ++k) {
        std::int64_t it = k / (g.gh * g.gw);
        std::int64_t ih = (k / g.gw) % g.gh;
        std::int64_t iw = k % g.gw;
        const VideoTensor& p = g.patches[static_cast<std::size_t>(k)];
        require(p.frames == kPatchT && p.height == kPatchH && p.width == kPatchW,
                "patch has wrong shape");
        for (std::int64_t pt = 0; pt < kPatchT; ++pt) {
            std::int64_t tt = it * kPatchT + pt;
            if (tt >= t)
                break;
            for (std::int64_t py = 0; py < kPatchH; ++py) {
                std::int64_t yy = ih * kPatchH + py;
                if (yy >= h)
                    break;
                for (std::int64_t px = 0; px < kPatchW; ++px) {
                    std::int64_t xx = iw * kPatchW + px;
                    if (xx >= w)
                        break;
                    for (int c = 0; c < 3; ++c)
                        out.at(tt, yy, xx, c) = p.at(pt, py, px, c);
                }
            }
        }
    }
    return out;
}

} // namespace skipsr
