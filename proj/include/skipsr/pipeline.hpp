#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "skipsr/codec.hpp"
#include "skipsr/metrics.hpp"
#include "skipsr/oracle.hpp"
#include "skipsr/predictor.hpp"
#include "skipsr/resample.hpp"
#include "skipsr/skipdit.hpp"
#include "skipsr/video_io.hpp"

namespace skipsr {

// ---- pipeline cost model ----------------------------------------------------
// Token skipping accelerates the transformer; the codec and the mask
// predictor stay dense. The estimated speedup is the ratio of total
// multiply-accumulates with and without the mask.

inline double predictor_cost_macs(std::int64_t tokens, int c_in, int width = 64)
{
    double n = static_cast<double>(tokens);
    double w = width;
    return n * w * 27.0 * c_in + 2.0 * n * w * 27.0 * w + n * 27.0 * w;
}

inline double codec_cost_macs(std::int64_t pixels)
{
    // three transform passes (two encodes, one decode) at ~5 MACs per value
    // plus the area/bilinear resample taps
    return static_cast<double>(pixels) * 3.0 * (3 * 5.0 + 5.0);
}

struct PipelineCost {
    double dit = 0.0;
    double predictor = 0.0;
    double codec = 0.0;
    double total() const { return dit + predictor + codec; }
};

inline PipelineCost pipeline_cost(std::int64_t gt, std::int64_t gh, std::int64_t gw,
                                  std::int64_t pixels, int latent_channels, const DiTConfig& cfg,
                                  const SkipMask* m)
{
    PipelineCost c;
    c.dit = dit_cost(gt, gh, gw, latent_channels, cfg, m).total();
    c.predictor = predictor_cost_macs(gt * gh * gw, 3 * latent_channels);
    c.codec = codec_cost_macs(pixels);
    return c;
}

inline double estimated_speedup(std::int64_t gt, std::int64_t gh, std::int64_t gw,
                                std::int64_t pixels, int latent_channels, const DiTConfig& cfg,
                                const SkipMask& m)
{
    PipelineCost dense = pipeline_cost(gt, gh, gw, pixels, latent_channels, cfg, nullptr);
    PipelineCost sparse = pipeline_cost(gt, gh, gw, pixels, latent_channels, cfg, &m);
    return dense.total() / sparse.total();
}

// ---- analyze ----------------------------------------------------------------

enum class MaskSource { oracle, predictor };

struct AnalyzeOptions {
    double tau = kDefaultTau;
    int factor = kDefaultFactor;
    int keep = 16;
    MaskSource mask_source = MaskSource::oracle;
    std::string predictor_weights; // required for MaskSource::predictor
    double threshold = 0.5;
    DiTConfig dit; // cost model configuration
    std::string label = "video";
};

struct AnalyzeResult {
    SkipMask mask;
    nlohmann::json report;
};

inline AnalyzeResult analyze_video(const VideoTensor& v, const AnalyzeOptions& opt)
{
    require(opt.tau >= 0.0, "tau must be >= 0");
    VideoTensor padded = pad_to_multiple(v, kPatchT, kPatchH, kPatchW);
    VideoTensor ud = down_up(padded, opt.factor);
    LatentTensor l_hr = encode(padded, opt.keep);
    LatentTensor l_ud = encode(ud, opt.keep);

    SkipMask mask;
    if (opt.mask_source == MaskSource::oracle) {
        mask = oracle_mask(padded, opt.tau, opt.factor);
    } else {
        if (opt.predictor_weights.empty())
            throw UsageError("mask-source=predictor requires predictor weights");
        PredictorNet net = load_predictor(opt.predictor_weights);
        require(net.c_in == l_ud.channels(),
                "predictor expects " + std::to_string(net.c_in) + " channels, latent has " +
                    std::to_string(l_ud.channels()));
        mask = predict_mask(net, l_ud, opt.threshold);
        mask.tau = opt.tau;
        mask.factor = opt.factor;
    }

    LatentTensor swapped = latent_swap(l_hr, l_ud, mask);
    VideoTensor swap_video = decode(swapped, padded.frames, padded.height, padded.width);
    VideoTensor base_video = decode(l_ud, padded.frames, padded.height, padded.width);
    swap_video = crop(swap_video, v.frames, v.height, v.width);
    base_video = crop(base_video, v.frames, v.height, v.width);

    QualityReport swap_q = quality(swap_video, v);
    QualityReport base_q = quality(base_video, v);
    MaskStats stats = mask_stats(mask);

    PipelineCost dense =
        pipeline_cost(mask.gt, mask.gh, mask.gw, padded.size() / 3, l_hr.channels(), opt.dit,
                      nullptr);
    PipelineCost sparse =
        pipeline_cost(mask.gt, mask.gh, mask.gw, padded.size() / 3, l_hr.channels(), opt.dit,
                      &mask);

    nlohmann::json video_entry = {
        {"frames", v.frames},
        {"height", v.height},
        {"width", v.width},
        {"tau", opt.tau},
        {"factor", opt.factor},
        {"keep", opt.keep},
        {"mask_source", opt.mask_source == MaskSource::oracle ? "oracle" : "predictor"},
        {"skipped_fraction", stats.skipped_fraction},
        {"per_frame_fraction", stats.per_frame_fraction},
        {"swap_psnr", swap_q.psnr},
        {"swap_ssim", swap_q.ssim},
        {"swap_mse", swap_q.mse},
        {"baseline_psnr", base_q.psnr},
        {"baseline_ssim", base_q.ssim},
        {"estimated_speedup", dense.total() / sparse.total()},
        {"cost_model",
         {{"dit_dense_macs", dense.dit},
          {"dit_sparse_macs", sparse.dit},
          {"predictor_macs", dense.predictor},
          {"codec_macs", dense.codec}}},
    };
    AnalyzeResult result;
    result.mask = std::move(mask);
    result.report = {{"dataset", opt.label}, {"videos", nlohmann::json::array({video_entry})}};
    return result;
}

// ---- threshold sweep --------------------------------------------------------

struct SweepRow {
    double tau;
    double skipped_pct;
    double swap_psnr;
};

inline std::vector<SweepRow> sweep_video(const VideoTensor& v, const std::vector<double>& taus,
                                         int factor = kDefaultFactor, int keep = 16)
{
    require(taus.size() >= 2, "sweep needs at least two thresholds");
    for (std::size_t i = 1; i < taus.size(); ++i)
        require(taus[i - 1] <= taus[i], "taus must be sorted ascending");

    VideoTensor padded = pad_to_multiple(v, kPatchT, kPatchH, kPatchW);
    PatchGrid grid = extract_patches(padded);
    std::vector<double> errs = patch_mse_all(grid, factor);
    LatentTensor l_hr = encode(padded, keep);
    LatentTensor l_ud = encode(down_up(padded, factor), keep);

    std::vector<SweepRow> rows;
    rows.reserve(taus.size());
    for (double tau : taus) {
        SkipMask m;
        m.gt = grid.gt;
        m.gh = grid.gh;
        m.gw = grid.gw;
        m.tau = tau;
        m.factor = factor;
        m.bits.resize(errs.size());
        for (std::size_t i = 0; i < errs.size(); ++i)
            m.bits[i] = errs[i] <= tau;
        LatentTensor swapped = latent_swap(l_hr, l_ud, m);
        VideoTensor swap_video =
            crop(decode(swapped, padded.frames, padded.height, padded.width), v.frames, v.height,
                 v.width);
        rows.push_back({tau, 100.0 * m.skipped_fraction(), psnr(swap_video, v)});
    }
    return rows;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows)
{
    std::string out = "tau,skipped_pct,swap_psnr\n";
    char buf[128];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%.12g,%.6f,%.6f\n", r.tau, r.skipped_pct, r.swap_psnr);
        out += buf;
    }
    return out;
}

// ---- predictor training over a directory -------------------------------------

struct TrainCommandOptions {
    double tau = kDefaultTau;
    int factor = kDefaultFactor;
    int keep = 16;
    TrainConfig train;
};

struct TrainCommandResult {
    PredictorNet net;
    TrainResult train;
    int clip_count = 0;
};

inline std::vector<std::string> list_video_files(const std::string& dir)
{
    namespace fs = std::filesystem;
    if (!fs::exists(dir) || !fs::is_directory(dir))
        throw IoError("not a directory: " + dir);
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file())
            continue;
        std::string ext = e.path().extension().string();
        if (ext == ".y4m" || ext == ".raw")
            files.push_back(e.path().string());
    }
    std::sort(files.begin(), files.end());
    return files;
}

inline TrainCommandResult train_predictor_on_dir(const std::string& dir,
                                                 const TrainCommandOptions& opt)
{
    std::vector<std::string> files = list_video_files(dir);
    if (files.empty())
        throw ValidationError("no .y4m or .raw videos in " + dir);
    std::vector<TrainSample> samples;
    samples.reserve(files.size());
    for (const auto& f : files)
        samples.push_back(make_train_sample(load_video(f), opt.tau, opt.factor, opt.keep));

    TrainCommandResult result;
    result.clip_count = static_cast<int>(files.size());
    result.net = make_predictor(samples.front().input.channels(), opt.train.seed);
    result.net.label_tau = opt.tau;
    result.net.label_factor = opt.factor;
    result.train = train_predictor(result.net, samples, opt.train);
    return result;
}

inline std::string loss_curve_csv(const TrainResult& r)
{
    std::string out = "step,loss\n";
    char buf[64];
    for (std::size_t i = 0; i < r.loss_curve.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%.9g\n", i + 1, r.loss_curve[i]);
        out += buf;
    }
    return out;
}

// ---- end-to-end super-resolution ---------------------------------------------

struct SrOptions {
    int scale = 4;
    int keep = 256; // full-rank codec so the skip path reproduces the upsample
    double threshold = 0.5;
    DitVariant variant = DitVariant::full_skip;
    int threads = 0;
};

struct SrResult {
    VideoTensor output;
    SkipMask mask;
    nlohmann::json report;
};

inline SrResult super_resolve(const VideoTensor& lr, const PredictorNet& net,
                              const DiTWeights& dw, DiTConfig cfg, const SrOptions& opt)
{
    using clock = std::chrono::steady_clock;
    auto ms_since = [](clock::time_point t0) {
        return std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    };
    cfg.variant = opt.variant;
    cfg.threads = opt.threads;

    auto t0 = clock::now();
    VideoTensor up = bilinear_upsample(lr, opt.scale);
    VideoTensor padded = pad_to_multiple(up, kPatchT, kPatchH, kPatchW);
    double upsample_ms = ms_since(t0);

    t0 = clock::now();
    LatentTensor l = encode(padded, opt.keep);
    double encode_ms = ms_since(t0);

    // The predictor runs on a latent at its own training rank; when that
    // differs from the output-path rank the input is encoded twice.
    t0 = clock::now();
    SkipMask mask;
    if (net.c_in == l.channels()) {
        mask = predict_mask(net, l, opt.threshold);
    } else {
        require(net.c_in % 3 == 0 && net.c_in >= 3,
                "predictor input channels must be 3*keep");
        LatentTensor lp = encode(padded, net.c_in / 3);
        mask = predict_mask(net, lp, opt.threshold);
    }
    double predictor_ms = ms_since(t0);

    t0 = clock::now();
    LatentTensor refined = dit_forward(l, mask, cfg, dw);
    double dit_ms = ms_since(t0);

    t0 = clock::now();
    LatentTensor composed = compose_output(refined, l, mask);
    VideoTensor out = crop(decode(composed, padded.frames, padded.height, padded.width),
                           up.frames, up.height, up.width);
    double decode_ms = ms_since(t0);

    double total_ms = upsample_ms + encode_ms + predictor_ms + dit_ms + decode_ms;
    SrResult result;
    result.output = std::move(out);
    result.mask = std::move(mask);
    result.report = {
        {"input", {{"frames", lr.frames}, {"height", lr.height}, {"width", lr.width}}},
        {"output",
         {{"frames", result.output.frames},
          {"height", result.output.height},
          {"width", result.output.width}}},
        {"scale", opt.scale},
        {"keep", opt.keep},
        {"threshold", opt.threshold},
        {"variant", variant_name(opt.variant)},
        {"skipped_fraction", result.mask.skipped_fraction()},
        {"timing",
         {{"upsample_ms", upsample_ms},
          {"encode_ms", encode_ms},
          {"predictor_ms", predictor_ms},
          {"dit_ms", dit_ms},
          {"decode_ms", decode_ms},
          {"total_ms", total_ms}}},
    };
    return result;
}

// ---- variant profiling --------------------------------------------------------

struct ProfileOptions {
    std::array<std::int64_t, 3> grid{16, 32, 32}; // tokens
    std::vector<double> fractions{0.4};
    std::vector<DitVariant> variants{DitVariant::full_skip, DitVariant::attention_mask_only,
                                     DitVariant::query_mask_only, DitVariant::interleaved_dense,
                                     DitVariant::dense};
    int repeats = 5;
    int keep = 16;
    std::uint64_t seed = 0;
    DiTConfig dit;
};

struct ProfileRow {
    DitVariant variant;
    double skip_fraction;     // requested
    std::int64_t tokens;      // full grid
    std::int64_t unskipped;   // tokens entering the transformer
    double mean_ms;
    double std_ms;
    double min_ms;             // robust to scheduler noise
    std::vector<double> times; // raw samples in round order
};

// Deterministic mask hitting the requested fraction exactly: a seeded shuffle
// of all cells, first round(p*N) skipped.
inline SkipMask fraction_mask(std::int64_t gt, std::int64_t gh, std::int64_t gw, double fraction,
                              std::uint64_t seed)
{
    SkipMask m;
    m.gt = gt;
    m.gh = gh;
    m.gw = gw;
    m.tau = 0.0;
    m.factor = 1;
    std::int64_t n = gt * gh * gw;
    m.bits.assign(static_cast<std::size_t>(n), false);
    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::int64_t count = std::llround(fraction * static_cast<double>(n));
    count = std::clamp<std::int64_t>(count, 0, n);
    for (std::int64_t i = 0; i < count; ++i)
        m.bits[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = true;
    return m;
}

inline std::vector<ProfileRow> profile_variants(const ProfileOptions& opt)
{
    require(opt.repeats >= 5, "profile needs at least 5 repeats");
    DiTConfig cfg = opt.dit;
    cfg.validate();

    // synthetic latent driving the timed forwards
    LatentTensor l;
    l.t = opt.grid[0];
    l.h = 2 * opt.grid[1];
    l.w = 2 * opt.grid[2];
    l.keep = opt.keep;
    l.coeffs.resize(static_cast<std::size_t>(l.size()));
    std::mt19937_64 rng(opt.seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (double& x : l.coeffs)
        x = dist(rng);
    DiTWeights w = make_dit_weights(cfg, l.channels(), opt.seed + 1, false);

    // Repeats are interleaved round-robin across the variants so slow phases
    // of the host (frequency ramps, background load) spread evenly instead of
    // biasing whichever variant ran first.
    using clock = std::chrono::steady_clock;
    struct Combo {
        double fraction;
        SkipMask mask;
        DitVariant variant;
        std::vector<double> times;
    };
    std::vector<Combo> combos;
    for (double fraction : opt.fractions) {
        SkipMask m = fraction_mask(opt.grid[0], opt.grid[1], opt.grid[2], fraction, opt.seed + 2);
        for (DitVariant v : opt.variants)
            combos.push_back({fraction, m, v, {}});
    }
    for (auto& c : combos) {
        cfg.variant = c.variant;
        dit_forward(l, c.mask, cfg, w); // warmup
    }
    std::vector<std::size_t> order(combos.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 order_rng(opt.seed + 3);
    for (int r = 0; r < opt.repeats; ++r) {
        std::shuffle(order.begin(), order.end(), order_rng); // de-alias host noise
        for (std::size_t idx : order) {
            Combo& c = combos[idx];
            cfg.variant = c.variant;
            auto t0 = clock::now();
            dit_forward(l, c.mask, cfg, w);
            c.times.push_back(
                std::chrono::duration<double, std::milli>(clock::now() - t0).count());
        }
    }

    std::vector<ProfileRow> rows;
    for (const auto& c : combos) {
        double mean = std::accumulate(c.times.begin(), c.times.end(), 0.0) /
                      static_cast<double>(c.times.size());
        double var = 0.0;
        for (double t : c.times)
            var += (t - mean) * (t - mean);
        var /= static_cast<double>(c.times.size());
        rows.push_back({c.variant, c.fraction, c.mask.count(),
                        c.mask.count() - c.mask.popcount(), mean, std::sqrt(var),
                        *std::min_element(c.times.begin(), c.times.end()), c.times});
    }
    return rows;
}

inline std::string profile_csv(const std::vector<ProfileRow>& rows)
{
    std::string out = "variant,skip_fraction,tokens,unskipped,mean_ms,std_ms,min_ms\n";
    char buf[192];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%.4f,%lld,%lld,%.3f,%.3f,%.3f\n",
                      variant_name(r.variant), r.skip_fraction, static_cast<long long>(r.tokens),
                      static_cast<long long>(r.unskipped), r.mean_ms, r.std_ms, r.min_ms);
        out += buf;
    }
    return out;
}

inline nlohmann::json profile_report(const ProfileOptions& opt,
                                     const std::vector<ProfileRow>& rows)
{
    nlohmann::json jrows = nlohmann::json::array();
    for (const auto& r : rows)
        jrows.push_back({{"variant", variant_name(r.variant)},
                         {"skip_fraction", r.skip_fraction},
                         {"tokens", r.tokens},
                         {"unskipped", r.unskipped},
                         {"mean_ms", r.mean_ms},
                         {"std_ms", r.std_ms},
                         {"min_ms", r.min_ms}});
    return {{"grid", {opt.grid[0], opt.grid[1], opt.grid[2]}},
            {"dim", opt.dit.dim},
            {"heads", opt.dit.heads},
            {"layers", opt.dit.layers},
            {"repeats", opt.repeats},
            {"rows", jrows}};
}

} // namespace skipsr
