#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "skipsr/codec.hpp"
#include "skipsr/oracle.hpp"

namespace skipsr {

// Dense feature map on the latent grid, channel-interleaved like LatentTensor.
struct FeatureMap {
    std::int64_t t = 0, h = 0, w = 0;
    int channels = 0;
    std::vector<double> data; // (t,h,w,c)

    FeatureMap() = default;
    FeatureMap(std::int64_t t_, std::int64_t h_, std::int64_t w_, int c_)
        : t(t_), h(h_), w(w_), channels(c_),
          data(static_cast<std::size_t>(t_ * h_ * w_ * c_), 0.0)
    {
    }
    std::int64_t cells() const { return t * h * w; }
    std::int64_t offset(std::int64_t tt, std::int64_t yy, std::int64_t xx) const
    {
        return ((tt * h + yy) * w + xx) * channels;
    }
};

// 3x3x3 convolution, zero padding 1, optional spatial stride 2.
// Weight layout: [kernel_offset][in_ch][out_ch]; keeps the output-channel
// axis contiguous in the inner loops.
struct Conv3d {
    int in_ch = 0, out_ch = 0;
    int spatial_stride = 1;
    std::vector<double> w; // 27 * in_ch * out_ch
    std::vector<double> b; // out_ch

    std::size_t weight_count() const { return static_cast<std::size_t>(27 * in_ch * out_ch); }
};

struct PredictorNet {
    int c_in = 48;
    int width = 64;
    std::uint64_t seed = 0;
    double label_tau = kDefaultTau;
    int label_factor = kDefaultFactor;
    // Per-channel input standardization fitted on the training set. The
    // block-transform latent carries DC terms ~16x larger than the detail
    // coefficients; without this the optimizer fixates on DC.
    std::vector<double> in_mean;    // size c_in, default 0
    std::vector<double> in_inv_std; // size c_in, default 1
    std::vector<Conv3d> layers;     // conv-s2, conv, conv, conv->1 logits

    std::size_t param_count() const
    {
        std::size_t n = 0;
        for (const auto& l : layers)
            n += l.weight_count() + l.b.size();
        return n;
    }
};

namespace detail {

inline Conv3d make_conv(int in_ch, int out_ch, int stride, std::mt19937_64& rng)
{
    Conv3d c;
    c.in_ch = in_ch;
    c.out_ch = out_ch;
    c.spatial_stride = stride;
    c.w.resize(c.weight_count());
    c.b.assign(static_cast<std::size_t>(out_ch), 0.0);
    double limit = std::sqrt(6.0 / (27.0 * in_ch)); // He-uniform
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (double& x : c.w)
        x = dist(rng);
    return c;
}

inline std::int64_t conv_out_size(std::int64_t n, int stride)
{
    // kernel 3, pad 1: floor((n - 1) / stride) + 1
    return (n - 1) / stride + 1;
}

inline FeatureMap conv_forward(const Conv3d& c, const FeatureMap& in)
{
    require(in.channels == c.in_ch, "conv input channel mismatch");
    int s = c.spatial_stride;
    FeatureMap out(in.t, conv_out_size(in.h, s), conv_out_size(in.w, s), c.out_ch);
    parallel_for(out.cells(), [&](std::int64_t cell) {
        std::int64_t to = cell / (out.h * out.w);
        std::int64_t yo = (cell / out.w) % out.h;
        std::int64_t xo = cell % out.w;
        double* acc = out.data.data() + out.offset(to, yo, xo);
        for (int o = 0; o < c.out_ch; ++o)
            acc[o] = c.b[static_cast<std::size_t>(o)];
        for (int kt = 0; kt < 3; ++kt) {
            std::int64_t ti = to + kt - 1;
            if (ti < 0 || ti >= in.t)
                continue;
            for (int ky = 0; ky < 3; ++ky) {
                std::int64_t yi = s * yo + ky - 1;
                if (yi < 0 || yi >= in.h)
                    continue;
                for (int kx = 0; kx < 3; ++kx) {
                    std::int64_t xi = s * xo + kx - 1;
                    if (xi < 0 || xi >= in.w)
                        continue;
                    int koff = (kt * 3 + ky) * 3 + kx;
                    const double* src = in.data.data() + in.offset(ti, yi, xi);
                    const double* wk = c.w.data() +
                                       static_cast<std::size_t>(koff) * c.in_ch * c.out_ch;
                    for (int i = 0; i < c.in_ch; ++i) {
                        double v = src[i];
                        if (v == 0.0)
                            continue;
                        const double* wrow = wk + static_cast<std::size_t>(i) * c.out_ch;
                        for (int o = 0; o < c.out_ch; ++o)
                            acc[o] += v * wrow[o];
                    }
                }
            }
        }
    });
    return out;
}

// Gradients of one conv layer given upstream grad; also produces the grad
// w.r.t. the layer input for chaining.
inline void conv_backward(const Conv3d& c, const FeatureMap& in, const FeatureMap& gout,
                          std::vector<double>& gw, std::vector<double>& gb, FeatureMap& gin)
{
    int s = c.spatial_stride;
    gin = FeatureMap(in.t, in.h, in.w, in.channels);
    gw.assign(c.w.size(), 0.0);
    gb.assign(c.b.size(), 0.0);
    for (std::int64_t cell = 0; cell < gout.cells(); ++cell) {
        std::int64_t to = cell / (gout.h * gout.w);
        std::int64_t yo = (cell / gout.w) % gout.h;
        std::int64_t xo = cell % gout.w;
        const double* g = gout.data.data() + gout.offset(to, yo, xo);
        for (int o = 0; o < c.out_ch; ++o)
            gb[static_cast<std::size_t>(o)] += g[o];
        for (int kt = 0; kt < 3; ++kt) {
            std::int64_t ti = to + kt - 1;
            if (ti < 0 || ti >= in.t)
                continue;
            for (int ky = 0; ky < 3; ++ky) {
                std::int64_t yi = s * yo + ky - 1;
                if (yi < 0 || yi >= in.h)
                    continue;
                for (int kx = 0; kx < 3; ++kx) {
                    std::int64_t xi = s * xo + kx - 1;
                    if (xi < 0 || xi >= in.w)
                        continue;
                    int koff = (kt * 3 + ky) * 3 + kx;
                    const double* src = in.data.data() + in.offset(ti, yi, xi);
                    double* gsrc = gin.data.data() + gin.offset(ti, yi, xi);
                    std::size_t base = static_cast<std::size_t>(koff) * c.in_ch * c.out_ch;
                    for (int i = 0; i < c.in_ch; ++i) {
                        const double* wrow = c.w.data() + base + static_cast<std::size_t>(i) * c.out_ch;
                        double* gwrow = gw.data() + base + static_cast<std::size_t>(i) * c.out_ch;
                        double v = src[i];
                        double acc = 0.0;
                        for (int o = 0; o < c.out_ch; ++o) {
                            gwrow[o] += v * g[o];
                            acc += wrow[o] * g[o];
                        }
                        gsrc[i] += acc;
                    }
                }
            }
        }
    }
}

inline double sigmoid(double x)
{
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline double softplus(double x)
{
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

} // namespace detail

inline PredictorNet make_predictor(int c_in, std::uint64_t seed, int width = 64)
{
    require(c_in >= 1 && width >= 1, "bad predictor config");
    PredictorNet net;
    net.c_in = c_in;
    net.width = width;
    net.seed = seed;
    net.in_mean.assign(static_cast<std::size_t>(c_in), 0.0);
    net.in_inv_std.assign(static_cast<std::size_t>(c_in), 1.0);
    std::mt19937_64 rng(seed);
    net.layers.push_back(detail::make_conv(c_in, width, 2, rng));
    net.layers.push_back(detail::make_conv(width, width, 1, rng));
    net.layers.push_back(detail::make_conv(width, width, 1, rng));
    net.layers.push_back(detail::make_conv(width, 1, 1, rng));
    return net;
}

inline FeatureMap latent_as_features(const LatentTensor& l)
{
    FeatureMap f(l.t, l.h, l.w, l.channels());
    f.data = l.coeffs;
    return f;
}

// One logit per 1x2x2 latent patch (= one per 4x16x16 pixel patch).
struct LogitGrid {
    std::int64_t t = 0, h = 0, w = 0;
    std::vector<double> values;

    std::int64_t count() const { return t * h * w; }
};

namespace detail {

struct ForwardCache {
    std::vector<FeatureMap> inputs;   // input to each layer
    std::vector<FeatureMap> preact;   // conv output before ReLU
};

inline FeatureMap standardize(const PredictorNet& net, const FeatureMap& in)
{
    FeatureMap x = in;
    if (!net.in_mean.empty()) {
        require(static_cast<int>(net.in_mean.size()) == x.channels,
                "standardization stats do not match input channels");
        for (std::size_t i = 0; i < x.data.size(); ++i) {
            std::size_t c = i % static_cast<std::size_t>(x.channels);
            x.data[i] = (x.data[i] - net.in_mean[c]) * net.in_inv_std[c];
        }
    }
    return x;
}

inline FeatureMap forward_features(const PredictorNet& net, const FeatureMap& in,
                                   ForwardCache* cache)
{
    FeatureMap x = standardize(net, in);
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        if (cache)
            cache->inputs.push_back(x);
        FeatureMap y = conv_forward(net.layers[li], x);
        if (cache)
            cache->preact.push_back(y);
        if (li + 1 < net.layers.size())
            for (double& v : y.data)
                v = v > 0.0 ? v : 0.0; // ReLU on hidden layers
        x = std::move(y);
    }
    return x;
}

} // namespace detail

inline LogitGrid predictor_forward(const PredictorNet& net, const FeatureMap& in)
{
    require(in.channels == net.c_in, "input channels do not match predictor input");
    FeatureMap out = detail::forward_features(net, in, nullptr);
    LogitGrid g;
    g.t = out.t;
    g.h = out.h;
    g.w = out.w;
    g.values = std::move(out.data);
    return g;
}

inline LogitGrid predictor_forward(const PredictorNet& net, const LatentTensor& l)
{
    require(l.channels() == net.c_in, "latent channels do not match predictor input");
    return predictor_forward(net, latent_as_features(l));
}

struct Gradients {
    std::vector<std::vector<double>> w; // per layer
    std::vector<std::vector<double>> b;
    double loss = 0.0;
};

// Weighted binary cross-entropy with logits, mean over cells; gradients for
// every parameter via hand-rolled backprop.
inline Gradients predictor_backward(const PredictorNet& net, const FeatureMap& in,
                                    const std::vector<double>& targets, double pos_weight = 1.0)
{
    require(in.channels == net.c_in, "input channels do not match predictor input");
    detail::ForwardCache cache;
    FeatureMap logits = detail::forward_features(net, in, &cache);
    require(static_cast<std::size_t>(logits.cells()) == targets.size(),
            "target grid does not match logits");

    double n = static_cast<double>(logits.cells());
    Gradients grads;
    grads.w.resize(net.layers.size());
    grads.b.resize(net.layers.size());

    FeatureMap gout(logits.t, logits.h, logits.w, 1);
    double loss = 0.0;
    for (std::int64_t i = 0; i < logits.cells(); ++i) {
        double x = logits.data[static_cast<std::size_t>(i)];
        double z = targets[static_cast<std::size_t>(i)];
        loss += pos_weight * z * detail::softplus(-x) + (1.0 - z) * detail::softplus(x);
        gout.data[static_cast<std::size_t>(i)] =
            (-pos_weight * z * detail::sigmoid(-x) + (1.0 - z) * detail::sigmoid(x)) / n;
    }
    grads.loss = loss / n;

    FeatureMap g = std::move(gout);
    for (std::size_t li = net.layers.size(); li-- > 0;) {
        if (li + 1 < net.layers.size()) {
            // gate by ReLU of this layer's pre-activation
            const FeatureMap& pre = cache.preact[li];
            for (std::size_t i = 0; i < g.data.size(); ++i)
                if (pre.data[i] <= 0.0)
                    g.data[i] = 0.0;
        }
        FeatureMap gin;
        detail::conv_backward(net.layers[li], cache.inputs[li], g, grads.w[li], grads.b[li], gin);
        g = std::move(gin);
    }
    return grads;
}

inline Gradients predictor_backward(const PredictorNet& net, const LatentTensor& l,
                                    const std::vector<double>& targets, double pos_weight = 1.0)
{
    require(l.channels() == net.c_in, "latent channels do not match predictor input");
    return predictor_backward(net, latent_as_features(l), targets, pos_weight);
}

struct TrainConfig {
    double lr = 1e-3;
    int steps = 500;
    int batch = 4;
    std::uint64_t seed = 0;
    double pos_weight = 1.0;
    bool normalize_input = true; // fit per-channel stats on the dataset
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
};

struct TrainSample {
    LatentTensor input;         // encoded bilinear-upscaled LR clip
    std::vector<double> labels; // oracle skippability per patch, row-major
};

inline TrainSample make_train_sample(const VideoTensor& hr, double tau, int factor, int keep)
{
    VideoTensor padded = pad_to_multiple(hr, kPatchT, kPatchH, kPatchW);
    TrainSample s;
    s.input = encode(down_up(padded, factor), keep);
    SkipMask m = oracle_mask(padded, tau, factor);
    s.labels.assign(m.bits.begin(), m.bits.end());
    return s;
}

struct TrainResult {
    std::vector<double> loss_curve;
};

inline TrainResult train_predictor(PredictorNet& net, const std::vector<TrainSample>& dataset,
                                   const TrainConfig& cfg)
{
    require(!dataset.empty(), "empty training dataset");
    require(cfg.lr >= 0.0 && cfg.steps >= 0 && cfg.batch >= 1, "bad train config");

    if (cfg.normalize_input) {
        std::size_t nc = static_cast<std::size_t>(net.c_in);
        std::vector<double> sum(nc, 0.0), sumsq(nc, 0.0);
        std::int64_t cells = 0;
        for (const TrainSample& s : dataset) {
            require(s.input.channels() == net.c_in, "dataset channel mismatch");
            for (std::size_t i = 0; i < s.input.coeffs.size(); ++i) {
                std::size_t c = i % nc;
                sum[c] += s.input.coeffs[i];
                sumsq[c] += s.input.coeffs[i] * s.input.coeffs[i];
            }
            cells += s.input.cells();
        }
        net.in_mean.resize(nc);
        net.in_inv_std.resize(nc);
        for (std::size_t c = 0; c < nc; ++c) {
            double mean = sum[c] / static_cast<double>(cells);
            double var = sumsq[c] / static_cast<double>(cells) - mean * mean;
            net.in_mean[c] = mean;
            net.in_inv_std[c] = 1.0 / std::sqrt(std::max(var, 1e-12));
        }
    }

    std::size_t nlayers = net.layers.size();
    std::vector<std::vector<double>> mw(nlayers), vw(nlayers), mb(nlayers), vb(nlayers);
    for (std::size_t li = 0; li < nlayers; ++li) {
        mw[li].assign(net.layers[li].w.size(), 0.0);
        vw[li].assign(net.layers[li].w.size(), 0.0);
        mb[li].assign(net.layers[li].b.size(), 0.0);
        vb[li].assign(net.layers[li].b.size(), 0.0);
    }

    std::mt19937_64 rng(cfg.seed);
    std::uniform_int_distribution<std::size_t> pick(0, dataset.size() - 1);
    TrainResult result;
    result.loss_curve.reserve(static_cast<std::size_t>(cfg.steps));

    for (int step = 1; step <= cfg.steps; ++step) {
        std::vector<std::vector<double>> gw(nlayers), gb(nlayers);
        for (std::size_t li = 0; li < nlayers; ++li) {
            gw[li].assign(net.layers[li].w.size(), 0.0);
            gb[li].assign(net.layers[li].b.size(), 0.0);
        }
        double loss = 0.0;
        for (int bi = 0; bi < cfg.batch; ++bi) {
            const TrainSample& s = dataset[pick(rng)];
            Gradients g = predictor_backward(net, s.input, s.labels, cfg.pos_weight);
            loss += g.loss;
            for (std::size_t li = 0; li < nlayers; ++li) {
                for (std::size_t i = 0; i < gw[li].size(); ++i)
                    gw[li][i] += g.w[li][i];
                for (std::size_t i = 0; i < gb[li].size(); ++i)
                    gb[li][i] += g.b[li][i];
            }
        }
        double inv_batch = 1.0 / cfg.batch;
        result.loss_curve.push_back(loss * inv_batch);

        double bc1 = 1.0 - std::pow(cfg.adam_beta1, step);
        double bc2 = 1.0 - std::pow(cfg.adam_beta2, step);
        auto adam_update = [&](std::vector<double>& p, std::vector<double>& g,
                               std::vector<double>& m, std::vector<double>& v) {
            for (std::size_t i = 0; i < p.size(); ++i) {
                double gi = g[i] * inv_batch;
                m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * gi;
                v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * gi * gi;
                p[i] -= cfg.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.adam_eps);
            }
        };
        for (std::size_t li = 0; li < nlayers; ++li) {
            adam_update(net.layers[li].w, gw[li], mw[li], vw[li]);
            adam_update(net.layers[li].b, gb[li], mb[li], vb[li]);
        }
    }
    return result;
}

inline SkipMask predict_mask(const PredictorNet& net, const LatentTensor& l,
                             double threshold = 0.5)
{
    LogitGrid g = predictor_forward(net, l);
    SkipMask m;
    m.gt = g.t;
    m.gh = g.h;
    m.gw = g.w;
    m.tau = net.label_tau;
    m.factor = net.label_factor;
    m.bits.assign(static_cast<std::size_t>(g.count()), false);
    for (std::int64_t i = 0; i < g.count(); ++i)
        m.bits[static_cast<std::size_t>(i)] =
            detail::sigmoid(g.values[static_cast<std::size_t>(i)]) >= threshold;
    return m;
}

// ---- weights file: "SKPW" magic, u32 manifest length, JSON manifest,
// then all parameters as f32 LE (per layer: weights then bias).

inline void save_predictor(const PredictorNet& net, const std::string& path)
{
    nlohmann::json manifest = {
        {"model", "predictor"},
        {"c_in", net.c_in},
        {"width", net.width},
        {"seed", net.seed},
        {"label_tau", net.label_tau},
        {"label_factor", net.label_factor},
        {"w_layout", "koff_in_out"},
        {"in_mean", net.in_mean},
        {"in_inv_std", net.in_inv_std},
    };
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : net.layers)
        layers.push_back({{"in", l.in_ch}, {"out", l.out_ch}, {"stride", l.spatial_stride}});
    manifest["layers"] = layers;

    std::ofstream os = open_out(path);
    os.write("SKPW", 4);
    std::string m = manifest.dump();
    write_u32(os, static_cast<std::uint32_t>(m.size()));
    os.write(m.data(), static_cast<std::streamsize>(m.size()));
    for (const auto& l : net.layers) {
        write_f32_array(os, l.w);
        write_f32_array(os, l.b);
    }
}

inline PredictorNet load_predictor(const std::string& path)
{
    std::ifstream is = open_in(path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::string(magic, 4) != "SKPW")
        throw FormatError("not a weights file: " + path);
    std::uint32_t mlen = read_u32(is);
    std::string mstr(mlen, '\0');
    is.read(mstr.data(), mlen);
    if (!is)
        throw FormatError("truncated weights manifest: " + path);
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(mstr);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad weights manifest: ") + e.what());
    }
    if (manifest.value("model", "") != "predictor")
        throw FormatError("weights file is not a predictor model: " + path);

    PredictorNet net;
    net.c_in = manifest.at("c_in").get<int>();
    net.width = manifest.at("width").get<int>();
    net.seed = manifest.value("seed", 0ULL);
    net.label_tau = manifest.value("label_tau", kDefaultTau);
    net.label_factor = manifest.value("label_factor", kDefaultFactor);
    net.in_mean.assign(static_cast<std::size_t>(net.c_in), 0.0);
    net.in_inv_std.assign(static_cast<std::size_t>(net.c_in), 1.0);
    if (manifest.contains("in_mean"))
        net.in_mean = manifest["in_mean"].get<std::vector<double>>();
    if (manifest.contains("in_inv_std"))
        net.in_inv_std = manifest["in_inv_std"].get<std::vector<double>>();
    for (const auto& lj : manifest.at("layers")) {
        Conv3d c;
        c.in_ch = lj.at("in").get<int>();
        c.out_ch = lj.at("out").get<int>();
        c.spatial_stride = lj.at("stride").get<int>();
        c.w.resize(c.weight_count());
        c.b.resize(static_cast<std::size_t>(c.out_ch));
        read_f32_array(is, c.w, c.w.size());
        read_f32_array(is, c.b, c.b.size());
        net.layers.push_back(std::move(c));
    }
    return net;
}

} // namespace skipsr
