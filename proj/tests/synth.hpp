#pragma once

// Synthetic separable clips for predictor training: contiguous flat regions
// (skippable) against iid-noise regions (not skippable), mixed with all-flat
// and all-noise clips. Regions are patch-grid aligned.

#include <cstdint>
#include <random>
#include <vector>

#include "skipsr/predictor.hpp"

namespace synth {

struct Clip {
    skipsr::VideoTensor video;
    skipsr::TrainSample sample;
};

inline skipsr::VideoTensor make_clip_video(std::mt19937_64& rng, std::int64_t frames = 8,
                                           std::int64_t size = 48)
{
    std::uniform_real_distribution<double> level(0.05, 0.95);
    std::uniform_real_distribution<double> noise(0.0, 1.0);
    skipsr::VideoTensor v(frames, size, size);
    std::int64_t cols = size / 16;
    int mode = static_cast<int>(rng() % 4); // 0: split w, 1: split h, 2: flat, 3: noise
    std::int64_t split = 1 + static_cast<std::int64_t>(rng() % (cols - 1));
    bool flat_low = rng() % 2 == 0;
    double base = level(rng);
    for (std::int64_t y = 0; y < size; ++y)
        for (std::int64_t x = 0; x < size; ++x) {
            bool flat;
            if (mode == 2)
                flat = true;
            else if (mode == 3)
                flat = false;
            else {
                std::int64_t pos = (mode == 0 ? x : y) / 16;
                flat = flat_low ? (pos < split) : (pos >= split);
            }
            for (std::int64_t t = 0; t < frames; ++t)
                for (int c = 0; c < 3; ++c)
                    v.at(t, y, x, c) = flat ? base : noise(rng);
        }
    return v;
}

inline std::vector<skipsr::TrainSample> make_dataset(int count, std::uint64_t seed,
                                                     int keep = 16)
{
    std::mt19937_64 rng(seed);
    std::vector<skipsr::TrainSample> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i)
        out.push_back(
            skipsr::make_train_sample(make_clip_video(rng), skipsr::kDefaultTau, 4, keep));
    return out;
}

inline double mask_accuracy(const skipsr::SkipMask& got, const std::vector<double>& want)
{
    std::int64_t hits = 0;
    for (std::size_t i = 0; i < want.size(); ++i)
        hits += (got.bits[i] == (want[i] >= 0.5)) ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(want.size());
}

inline double dataset_accuracy(const skipsr::PredictorNet& net,
                               const std::vector<skipsr::TrainSample>& set)
{
    double acc = 0.0;
    for (const auto& s : set)
        acc += mask_accuracy(skipsr::predict_mask(net, s.input, 0.5), s.labels);
    return acc / static_cast<double>(set.size());
}

} // namespace synth
