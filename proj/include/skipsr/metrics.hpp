#pragma once

#include <cmath>
#include <vector>

#include "skipsr/video.hpp"

namespace skipsr {

struct QualityReport {
    double psnr = 0.0;
    double ssim = 0.0;
    double mse = 0.0;
};

inline constexpr double kPsnrCap = 99.0;

inline double mse(const VideoTensor& a, const VideoTensor& b)
{
    require(a.same_dims(b), "mse: dimension mismatch");
    // fixed accumulation order so results are identical across thread counts
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        double d = a.data[i] - b.data[i];
        s += d * d;
    }
    return s / static_cast<double>(a.data.size());
}

// 10*log10(1/mse) with peak 1; capped at 99 dB for near-zero error.
inline double psnr(const VideoTensor& a, const VideoTensor& b)
{
    double m = mse(a, b);
    if (m <= 1e-10)
        return kPsnrCap;
    return 10.0 * std::log10(1.0 / m);
}

namespace detail {

// 11x11 Gaussian window, sigma=1.5, normalized to sum 1.
inline const std::vector<double>& ssim_window()
{
    static const std::vector<double> w = [] {
        const int n = 11;
        const double sigma = 1.5;
        std::vector<double> k(n);
        double sum = 0.0;
        for (int i = 0; i < n; ++i) {
            double d = i - (n - 1) / 2.0;
            k[static_cast<std::size_t>(i)] = std::exp(-(d * d) / (2.0 * sigma * sigma));
            sum += k[static_cast<std::size_t>(i)];
        }
        std::vector<double> w2(static_cast<std::size_t>(n * n));
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x)
                w2[static_cast<std::size_t>(y * n + x)] =
                    k[static_cast<std::size_t>(y)] * k[static_cast<std::size_t>(x)] / (sum * sum);
        return w2;
    }();
    return w;
}

} // namespace detail

// Per-frame per-channel SSIM, valid-window averaging, K1=0.01 K2=0.03 L=1.
// The mean over all windows, channels and frames is returned.
inline double ssim(const VideoTensor& a, const VideoTensor& b)
{
    require(a.same_dims(b), "ssim: dimension mismatch");
    require(a.height >= 11 && a.width >= 11, "ssim: frame smaller than 11x11 window");
    const double c1 = 1e-4;  // (K1*L)^2
    const double c2 = 9e-4;  // (K2*L)^2
    const auto& win = detail::ssim_window();
    const int n = 11;

    std::int64_t vh = a.height - n + 1;
    std::int64_t vw = a.width - n + 1;
    std::vector<double> frame_sums(static_cast<std::size_t>(a.frames), 0.0);
    parallel_for(a.frames, [&](std::int64_t t) {
        double acc = 0.0;
        for (int c = 0; c < 3; ++c)
            for (std::int64_t wy = 0; wy < vh; ++wy)
                for (std::int64_t wx = 0; wx < vw; ++wx) {
                    double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
                    for (int y = 0; y < n; ++y)
                        for (int x = 0; x < n; ++x) {
                            double wgt = win[static_cast<std::size_t>(y * n + x)];
                            double va = a.at(t, wy + y, wx + x, c);
                            double vb = b.at(t, wy + y, wx + x, c);
                            mu_a += wgt * va;
                            mu_b += wgt * vb;
                            aa += wgt * va * va;
                            bb += wgt * vb * vb;
                            ab += wgt * va * vb;
                        }
                    double var_a = aa - mu_a * mu_a;
                    double var_b = bb - mu_b * mu_b;
                    double cov = ab - mu_a * mu_b;
                    acc += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
                           ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
                }
        frame_sums[static_cast<std::size_t>(t)] = acc;
    });
    double total = 0.0;
    for (double s : frame_sums)
        total += s;
    return total / (static_cast<double>(a.frames) * 3.0 * static_cast<double>(vh) *
                    static_cast<double>(vw));
}

inline QualityReport quality(const VideoTensor& a, const VideoTensor& b)
{
    QualityReport q;
    q.mse = mse(a, b);
    q.psnr = q.mse <= 1e-10 ? kPsnrCap : 10.0 * std::log10(1.0 / q.mse);
    q.ssim = ssim(a, b);
    return q;
}

} // namespace skipsr
