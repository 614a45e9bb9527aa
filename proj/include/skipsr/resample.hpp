#pragma once

#include <algorithm>
#include <cmath>

#include "skipsr/video.hpp"

namespace skipsr {

// Spatial area downsampling: each output pixel is the mean of its f x f
// source block, per channel and frame. The temporal axis is never resampled.
inline VideoTensor area_downsample(const VideoTensor& v, int f)
{
    require(f >= 1, "downsample factor must be >= 1");
    if (f == 1)
        return v;
    require(v.height % f == 0 && v.width % f == 0,
            "area_downsample requires dims divisible by the factor");
    VideoTensor out(v.frames, v.height / f, v.width / f);
    double inv = 1.0 / (static_cast<double>(f) * f);
    parallel_for(v.frames, [&](std::int64_t t) {
        for (std::int64_t y = 0; y < out.height; ++y)
            for (std::int64_t x = 0; x < out.width; ++x)
                for (int c = 0; c < 3; ++c) {
                    double s = 0.0;
                    for (int dy = 0; dy < f; ++dy)
                        for (int dx = 0; dx < f; ++dx)
                            s += v.at(t, y * f + dy, x * f + dx, c);
                    out.at(t, y, x, c) = s * inv;
                }
    });
    return out;
}

// Separable bilinear upsampling with half-pixel centers and edge clamping:
// source coordinate x_s = (x_d + 0.5)/f - 0.5, clamped to [0, S-1].
inline VideoTensor bilinear_upsample(const VideoTensor& v, int f)
{
    require(f >= 1, "upsample factor must be >= 1");
    if (f == 1)
        return v;
    std::int64_t oh = v.height * f;
    std::int64_t ow = v.width * f;
    VideoTensor out(v.frames, oh, ow);

    struct Tap {
        std::int64_t i0, i1;
        double w1; // weight on i1; weight on i0 is 1-w1
    };
    auto make_taps = [f](std::int64_t out_size, std::int64_t src_size) {
        std::vector<Tap> taps(static_cast<std::size_t>(out_size));
        for (std::int64_t d = 0; d < out_size; ++d) {
            double s = (d + 0.5) / f - 0.5;
            double fl = std::floor(s);
            double frac = s - fl;
            std::int64_t i0 = static_cast<std::int64_t>(fl);
            std::int64_t i1 = i0 + 1;
            i0 = std::clamp<std::int64_t>(i0, 0, src_size - 1);
            i1 = std::clamp<std::int64_t>(i1, 0, src_size - 1);
            taps[static_cast<std::size_t>(d)] = {i0, i1, frac};
        }
        return taps;
    };
    auto ytaps = make_taps(oh, v.height);
    auto xtaps = make_taps(ow, v.width);

    parallel_for(v.frames, [&](std::int64_t t) {
        for (std::int64_t y = 0; y < oh; ++y) {
            const Tap& ty = ytaps[static_cast<std::size_t>(y)];
            for (std::int64_t x = 0; x < ow; ++x) {
                const Tap& tx = xtaps[static_cast<std::size_t>(x)];
                for (int c = 0; c < 3; ++c) {
                    double top = (1.0 - tx.w1) * v.at(t, ty.i0, tx.i0, c) +
                                 tx.w1 * v.at(t, ty.i0, tx.i1, c);
                    double bot = (1.0 - tx.w1) * v.at(t, ty.i1, tx.i0, c) +
                                 tx.w1 * v.at(t, ty.i1, tx.i1, c);
                    out.at(t, y, x, c) = (1.0 - ty.w1) * top + ty.w1 * bot;
                }
            }
        }
    });
    return out;
}

// Downsample-then-upsample round trip used by the skippability criterion.
inline VideoTensor down_up(const VideoTensor& v, int f)
{
    return bilinear_upsample(area_downsample(v, f), f);
}

} // namespace skipsr
