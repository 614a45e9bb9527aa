#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "skipsr/codec.hpp"
#include "skipsr/oracle.hpp"

namespace skipsr {

// Sparsity strategies compared by the profiler. full_skip routes skipped
// tokens around the entire transformer; the others are the baselines it is
// measured against.
enum class DitVariant { full_skip, attention_mask_only, query_mask_only, interleaved_dense, dense };

inline const char* variant_name(DitVariant v)
{
    switch (v) {
    case DitVariant::full_skip: return "full_skip";
    case DitVariant::attention_mask_only: return "attention_mask_only";
    case DitVariant::query_mask_only: return "query_mask_only";
    case DitVariant::interleaved_dense: return "interleaved_dense";
    case DitVariant::dense: return "dense";
    }
    return "?";
}

inline DitVariant variant_from_name(const std::string& s)
{
    for (DitVariant v : {DitVariant::full_skip, DitVariant::attention_mask_only,
                         DitVariant::query_mask_only, DitVariant::interleaved_dense,
                         DitVariant::dense})
        if (s == variant_name(v))
            return v;
    throw UsageError("unknown variant: " + s);
}

struct DiTConfig {
    int dim = 128;
    int heads = 4;
    int layers = 4;
    std::array<std::int64_t, 3> window{4, 8, 8}; // tokens (t, h, w)
    double rope_base = 10000.0;
    DitVariant variant = DitVariant::full_skip;
    std::uint64_t seed = 0;
    int threads = 0;

    int head_dim() const { return dim / heads; }

    // Per-axis rotary sub-dimensions: even, sum to head_dim, temporal axis
    // gets the smallest share.
    std::array<int, 3> rope_dims() const
    {
        int pairs = head_dim() / 2;
        int pt = std::max(1, pairs / 4);
        int ph = (pairs - pt + 1) / 2;
        int pw = pairs - pt - ph;
        return {2 * pt, 2 * ph, 2 * pw};
    }

    // Alternating shifted windows: even layers unshifted, odd layers offset
    // by half a window.
    std::array<std::int64_t, 3> shift_for_layer(int layer) const
    {
        if (layer % 2 == 0)
            return {0, 0, 0};
        return {window[0] / 2, window[1] / 2, window[2] / 2};
    }

    void validate() const
    {
        require(dim >= 1 && heads >= 1 && layers >= 1, "bad transformer config");
        require(dim % heads == 0, "dim must be divisible by heads");
        require(head_dim() % 2 == 0, "head_dim must be even");
        auto rd = rope_dims();
        require(rd[0] >= 2 && rd[1] >= 2 && rd[2] >= 2, "rope sub-dims too small");
        require(window[0] >= 1 && window[1] >= 1 && window[2] >= 1, "bad window");
    }
};

// ---- window tiling --------------------------------------------------------

namespace detail {

inline std::int64_t floor_div(std::int64_t a, std::int64_t b)
{
    return a >= 0 ? a / b : -((-a + b - 1) / b);
}

} // namespace detail

// One axis of the clamped (non-cyclic) shifted tiling. A positive shift
// creates a partial boundary window in front; the tail window may also be
// partial. Nothing wraps around.
struct AxisTiling {
    std::int64_t size = 0, win = 1, shift = 0;

    std::int64_t blocks() const
    {
        std::int64_t base = shift > 0 ? 1 : 0;
        return detail::floor_div(size - 1 - shift, win) + base + 1;
    }
    std::int64_t block_of(std::int64_t i) const
    {
        std::int64_t base = shift > 0 ? 1 : 0;
        return detail::floor_div(i - shift, win) + base;
    }
    // first grid index covered by the block containing i
    std::int64_t start_of(std::int64_t i) const
    {
        std::int64_t b = detail::floor_div(i - shift, win);
        return std::max<std::int64_t>(0, b * win + shift);
    }
};

struct WindowTiling {
    AxisTiling t, h, w;

    std::int64_t count() const { return t.blocks() * h.blocks() * w.blocks(); }
    std::int64_t id_of(std::int64_t it, std::int64_t ih, std::int64_t iw) const
    {
        return (t.block_of(it) * h.blocks() + h.block_of(ih)) * w.blocks() + w.block_of(iw);
    }
};

inline WindowTiling make_tiling(std::int64_t gt, std::int64_t gh, std::int64_t gw,
                                const std::array<std::int64_t, 3>& window,
                                const std::array<std::int64_t, 3>& shift)
{
    return {{gt, window[0], shift[0]}, {gh, window[1], shift[1]}, {gw, window[2], shift[2]}};
}

// Window id for every cell of the full grid, row-major.
inline std::vector<std::int32_t> assign_windows(std::int64_t gt, std::int64_t gh,
                                                std::int64_t gw,
                                                const std::array<std::int64_t, 3>& window,
                                                const std::array<std::int64_t, 3>& shift)
{
    WindowTiling tiling = make_tiling(gt, gh, gw, window, shift);
    std::vector<std::int32_t> ids(static_cast<std::size_t>(gt * gh * gw));
    std::int64_t k = 0;
    for (std::int64_t it = 0; it < gt; ++it)
        for (std::int64_t ih = 0; ih < gh; ++ih)
            for (std::int64_t iw = 0; iw < gw; ++iw)
                ids[static_cast<std::size_t>(k++)] =
                    static_cast<std::int32_t>(tiling.id_of(it, ih, iw));
    return ids;
}

// ---- tokens ----------------------------------------------------------------

// Flattened latent patches. orig_* always refer to coordinates in the FULL
// grid; routing never rewrites them, so window membership and rotary phases
// survive compaction.
struct TokenSet {
    int dim = 0;
    int raw_dim = 0;
    std::int64_t gt = 0, gh = 0, gw = 0; // full token grid
    std::int64_t count = 0;
    std::vector<double> tokens; // count x dim (embedded stream)
    std::vector<double> raw;    // count x raw_dim (1x2x2 latent patch values)
    std::vector<std::int32_t> orig_t, orig_h, orig_w;
    std::vector<std::int32_t> window_id; // unshifted assignment on the full grid
};

struct DiTLayerWeights {
    std::vector<double> ln1_g, ln1_b;
    std::vector<double> w_qkv, b_qkv;   // dim x 3dim
    std::vector<double> w_proj, b_proj; // dim x dim
    std::vector<double> ln2_g, ln2_b;
    std::vector<double> w_ffn1, b_ffn1; // dim x 4dim
    std::vector<double> w_ffn2, b_ffn2; // 4dim x dim
};

struct DiTWeights {
    int dim = 0;
    int raw_dim = 0;                          // 4 * latent channels
    std::vector<double> w_embed, b_embed;     // raw_dim x dim
    std::vector<double> w_unembed, b_unembed; // dim x raw_dim, zero-init default
    std::vector<DiTLayerWeights> layers;
};

// Zero-initialized unembed makes an untrained model an exact pass-through:
// the refined cells equal the input cells.
inline DiTWeights make_dit_weights(const DiTConfig& cfg, int latent_channels,
                                   std::uint64_t seed, bool zero_unembed = true)
{
    cfg.validate();
    DiTWeights w;
    w.dim = cfg.dim;
    w.raw_dim = 4 * latent_channels;
    std::mt19937_64 rng(seed);
    double scale = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
    std::uniform_real_distribution<double> dist(-scale, scale);
    auto fill = [&](std::vector<double>& v, std::size_t n) {
        v.resize(n);
        for (double& x : v)
            x = dist(rng);
    };
    auto zeros = [](std::vector<double>& v, std::size_t n) { v.assign(n, 0.0); };
    auto ones = [](std::vector<double>& v, std::size_t n) { v.assign(n, 1.0); };

    std::size_t d = static_cast<std::size_t>(cfg.dim);
    std::size_t rd = static_cast<std::size_t>(w.raw_dim);
    fill(w.w_embed, rd * d);
    zeros(w.b_embed, d);
    if (zero_unembed) {
        zeros(w.w_unembed, d * rd);
        zeros(w.b_unembed, rd);
    } else {
        fill(w.w_unembed, d * rd);
        zeros(w.b_unembed, rd);
    }
    w.layers.resize(static_cast<std::size_t>(cfg.layers));
    for (auto& l : w.layers) {
        ones(l.ln1_g, d);
        zeros(l.ln1_b, d);
        fill(l.w_qkv, d * 3 * d);
        zeros(l.b_qkv, 3 * d);
        fill(l.w_proj, d * d);
        zeros(l.b_proj, d);
        ones(l.ln2_g, d);
        zeros(l.ln2_b, d);
        fill(l.w_ffn1, d * 4 * d);
        zeros(l.b_ffn1, 4 * d);
        fill(l.w_ffn2, 4 * d * d);
        zeros(l.b_ffn2, d);
    }
    return w;
}

namespace detail {

// C = A * B (+bias per output column), row-major. Rows run in parallel;
// each row accumulates serially so results do not depend on thread count.
inline void matmul(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k,
                   std::int64_t n, const double* bias, int threads)
{
    parallel_for(
        m,
        [&](std::int64_t i) {
            double* crow = c + i * n;
            if (bias)
                for (std::int64_t j = 0; j < n; ++j)
                    crow[j] = bias[j];
            else
                for (std::int64_t j = 0; j < n; ++j)
                    crow[j] = 0.0;
            const double* arow = a + i * k;
            for (std::int64_t kk = 0; kk < k; ++kk) {
                double av = arow[kk];
                const double* brow = b + kk * n;
                for (std::int64_t j = 0; j < n; ++j)
                    crow[j] += av * brow[j];
            }
        },
        threads);
}

inline void layer_norm(const double* x, double* out, std::int64_t rows, int dim,
                       const double* g, const double* b, int threads)
{
    parallel_for(
        rows,
        [&](std::int64_t i) {
            const double* xr = x + i * dim;
            double* orow = out + i * dim;
            double mean = 0.0;
            for (int j = 0; j < dim; ++j)
                mean += xr[j];
            mean /= dim;
            double var = 0.0;
            for (int j = 0; j < dim; ++j) {
                double dlt = xr[j] - mean;
                var += dlt * dlt;
            }
            var /= dim;
            double inv = 1.0 / std::sqrt(var + 1e-6);
            for (int j = 0; j < dim; ++j)
                orow[j] = (xr[j] - mean) * inv * g[j] + b[j];
        },
        threads);
}

inline double gelu(double x)
{
    return 0.5 * x * (1.0 + std::erf(x * 0.70710678118654752440));
}

struct RopeFreqs {
    std::array<int, 3> dims;          // per-axis sub-dims
    std::array<int, 3> offset;        // start of each axis slice in the head
    std::vector<double> freq[3];      // per-axis frequencies, dims[a]/2 each

    explicit RopeFreqs(const DiTConfig& cfg)
    {
        dims = cfg.rope_dims();
        offset = {0, dims[0], dims[0] + dims[1]};
        for (int a = 0; a < 3; ++a) {
            int pairs = dims[a] / 2;
            freq[a].resize(static_cast<std::size_t>(pairs));
            for (int k = 0; k < pairs; ++k)
                freq[a][static_cast<std::size_t>(k)] =
                    std::pow(cfg.rope_base, -2.0 * k / static_cast<double>(dims[a]));
        }
    }
};

} // namespace detail

// Standard rotary rotation of one head vector at a 3-axis position. Pairs
// within each axis slice rotate by pos * base^(-2k/sub_dim).
inline void rope_rotate(double* head_vec, std::int64_t pt, std::int64_t ph, std::int64_t pw,
                        const detail::RopeFreqs& rf)
{
    const std::int64_t pos[3] = {pt, ph, pw};
    for (int a = 0; a < 3; ++a) {
        int pairs = rf.dims[a] / 2;
        double* slice = head_vec + rf.offset[a];
        for (int k = 0; k < pairs; ++k) {
            double ang = static_cast<double>(pos[a]) * rf.freq[a][static_cast<std::size_t>(k)];
            double cs = std::cos(ang), sn = std::sin(ang);
            double x0 = slice[2 * k], x1 = slice[2 * k + 1];
            slice[2 * k] = x0 * cs - x1 * sn;
            slice[2 * k + 1] = x0 * sn + x1 * cs;
        }
    }
}

inline TokenSet tokenize(const LatentTensor& l, const DiTWeights& w, const DiTConfig& cfg)
{
    require(l.h % 2 == 0 && l.w % 2 == 0, "latent spatial dims must be even for 1x2x2 patches");
    require(w.raw_dim == 4 * l.channels(), "weights raw_dim does not match latent channels");
    cfg.validate();

    TokenSet ts;
    ts.dim = cfg.dim;
    ts.raw_dim = w.raw_dim;
    ts.gt = l.t;
    ts.gh = l.h / 2;
    ts.gw = l.w / 2;
    ts.count = ts.gt * ts.gh * ts.gw;
    int ch = l.channels();

    ts.raw.resize(static_cast<std::size_t>(ts.count * ts.raw_dim));
    ts.orig_t.resize(static_cast<std::size_t>(ts.count));
    ts.orig_h.resize(static_cast<std::size_t>(ts.count));
    ts.orig_w.resize(static_cast<std::size_t>(ts.count));
    parallel_for(
        ts.count,
        [&](std::int64_t k) {
            std::int64_t it = k / (ts.gh * ts.gw);
            std::int64_t ih = (k / ts.gw) % ts.gh;
            std::int64_t iw = k % ts.gw;
            ts.orig_t[static_cast<std::size_t>(k)] = static_cast<std::int32_t>(it);
            ts.orig_h[static_cast<std::size_t>(k)] = static_cast<std::int32_t>(ih);
            ts.orig_w[static_cast<std::size_t>(k)] = static_cast<std::int32_t>(iw);
            double* dst = ts.raw.data() + k * ts.raw_dim;
            for (std::int64_t dy = 0; dy < 2; ++dy)
                for (std::int64_t dx = 0; dx < 2; ++dx) {
                    std::int64_t off = l.cell_offset(it, 2 * ih + dy, 2 * iw + dx);
                    for (int c = 0; c < ch; ++c)
                        *dst++ = l.coeffs[static_cast<std::size_t>(off + c)];
                }
        },
        cfg.threads);

    ts.window_id = assign_windows(ts.gt, ts.gh, ts.gw, cfg.window, {0, 0, 0});

    ts.tokens.resize(static_cast<std::size_t>(ts.count * ts.dim));
    detail::matmul(ts.raw.data(), w.w_embed.data(), ts.tokens.data(), ts.count, ts.raw_dim,
                   ts.dim, w.b_embed.data(), cfg.threads);
    return ts;
}

// Drop skipped tokens, keeping original indices and window ids verbatim and
// preserving storage order.
inline TokenSet route(const TokenSet& full, const SkipMask& m)
{
    require(full.gt == m.gt && full.gh == m.gh && full.gw == m.gw,
            "mask grid does not match token grid");
    TokenSet out;
    out.dim = full.dim;
    out.raw_dim = full.raw_dim;
    out.gt = full.gt;
    out.gh = full.gh;
    out.gw = full.gw;
    out.count = full.count - m.popcount();
    out.tokens.resize(static_cast<std::size_t>(out.count * out.dim));
    out.raw.resize(static_cast<std::size_t>(out.count * out.raw_dim));
    out.orig_t.resize(static_cast<std::size_t>(out.count));
    out.orig_h.resize(static_cast<std::size_t>(out.count));
    out.orig_w.resize(static_cast<std::size_t>(out.count));
    out.window_id.resize(static_cast<std::size_t>(out.count));
    std::int64_t r = 0;
    for (std::int64_t k = 0; k < full.count; ++k) {
        if (m.bits[static_cast<std::size_t>(k)])
            continue;
        std::copy_n(full.tokens.begin() + k * full.dim, full.dim, out.tokens.begin() + r * full.dim);
        std::copy_n(full.raw.begin() + k * full.raw_dim, full.raw_dim,
                    out.raw.begin() + r * full.raw_dim);
        out.orig_t[static_cast<std::size_t>(r)] = full.orig_t[static_cast<std::size_t>(k)];
        out.orig_h[static_cast<std::size_t>(r)] = full.orig_h[static_cast<std::size_t>(k)];
        out.orig_w[static_cast<std::size_t>(r)] = full.orig_w[static_cast<std::size_t>(k)];
        out.window_id[static_cast<std::size_t>(r)] = full.window_id[static_cast<std::size_t>(k)];
        ++r;
    }
    return out;
}

namespace detail {

// Per-layer token roles. Empty vectors mean "all rows".
struct LayerRoles {
    const std::vector<std::uint8_t>* query = nullptr; // 1 = acts as query
    const std::vector<std::uint8_t>* kv = nullptr;    // 1 = acts as key/value
    const std::vector<std::uint8_t>* ffn = nullptr;   // 1 = gets LN/FFN updates
};

inline bool row_on(const std::vector<std::uint8_t>* mask, std::int64_t i)
{
    return mask == nullptr || (*mask)[static_cast<std::size_t>(i)] != 0;
}

// Group stream rows by window id under the layer tiling; stable in storage
// order so permutation tests only reorder floating-point sums.
struct WindowGroups {
    std::vector<std::int32_t> ids;     // per row
    std::vector<std::int64_t> offsets; // per window, into members
    std::vector<std::int32_t> members; // row indices grouped by window
};

inline WindowGroups group_by_window(const TokenSet& ts, const WindowTiling& tiling)
{
    WindowGroups g;
    std::int64_t nw = tiling.count();
    g.ids.resize(static_cast<std::size_t>(ts.count));
    std::vector<std::int64_t> counts(static_cast<std::size_t>(nw), 0);
    for (std::int64_t i = 0; i < ts.count; ++i) {
        std::int32_t id = static_cast<std::int32_t>(
            tiling.id_of(ts.orig_t[static_cast<std::size_t>(i)],
                         ts.orig_h[static_cast<std::size_t>(i)],
                         ts.orig_w[static_cast<std::size_t>(i)]));
        g.ids[static_cast<std::size_t>(i)] = id;
        ++counts[static_cast<std::size_t>(id)];
    }
    g.offsets.assign(static_cast<std::size_t>(nw + 1), 0);
    for (std::int64_t wi = 0; wi < nw; ++wi)
        g.offsets[static_cast<std::size_t>(wi + 1)] =
            g.offsets[static_cast<std::size_t>(wi)] + counts[static_cast<std::size_t>(wi)];
    g.members.resize(static_cast<std::size_t>(ts.count));
    std::vector<std::int64_t> cursor(g.offsets.begin(), g.offsets.end() - 1);
    for (std::int64_t i = 0; i < ts.count; ++i) {
        std::int32_t id = g.ids[static_cast<std::size_t>(i)];
        g.members[static_cast<std::size_t>(cursor[static_cast<std::size_t>(id)]++)] =
            static_cast<std::int32_t>(i);
    }
    return g;
}

inline void attention_sublayer(TokenSet& ts, const DiTLayerWeights& lw, const DiTConfig& cfg,
                               int layer, const LayerRoles& roles, const RopeFreqs& rf)
{
    if (ts.count == 0)
        return;
    const int d = cfg.dim;
    const int hd = cfg.head_dim();
    const int heads = cfg.heads;
    const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));
    auto shift = cfg.shift_for_layer(layer);
    WindowTiling tiling = make_tiling(ts.gt, ts.gh, ts.gw, cfg.window, shift);
    WindowGroups groups = group_by_window(ts, tiling);

    std::vector<double> xn(static_cast<std::size_t>(ts.count * d));
    layer_norm(ts.tokens.data(), xn.data(), ts.count, d, lw.ln1_g.data(), lw.ln1_b.data(),
               cfg.threads);
    std::vector<double> qkv(static_cast<std::size_t>(ts.count * 3 * d));
    matmul(xn.data(), lw.w_qkv.data(), qkv.data(), ts.count, d, 3 * d, lw.b_qkv.data(),
           cfg.threads);

    // rotate q and k by the window-local position derived from the original
    // grid coordinates
    parallel_for(
        ts.count,
        [&](std::int64_t i) {
            std::int64_t lt = ts.orig_t[static_cast<std::size_t>(i)] -
                              tiling.t.start_of(ts.orig_t[static_cast<std::size_t>(i)]);
            std::int64_t lh = ts.orig_h[static_cast<std::size_t>(i)] -
                              tiling.h.start_of(ts.orig_h[static_cast<std::size_t>(i)]);
            std::int64_t lx = ts.orig_w[static_cast<std::size_t>(i)] -
                              tiling.w.start_of(ts.orig_w[static_cast<std::size_t>(i)]);
            double* row = qkv.data() + i * 3 * d;
            for (int h = 0; h < heads; ++h) {
                rope_rotate(row + h * hd, lt, lh, lx, rf);         // q
                rope_rotate(row + d + h * hd, lt, lh, lx, rf);     // k
            }
        },
        cfg.threads);

    // attention output per query row, zero for identity rows
    std::vector<double> attn(static_cast<std::size_t>(ts.count * d), 0.0);
    std::int64_t nw = tiling.count();
    parallel_for(
        nw,
        [&](std::int64_t wi) {
            std::int64_t lo = groups.offsets[static_cast<std::size_t>(wi)];
            std::int64_t hi = groups.offsets[static_cast<std::size_t>(wi + 1)];
            if (lo == hi)
                return;
            std::vector<std::int32_t> kv_rows;
            kv_rows.reserve(static_cast<std::size_t>(hi - lo));
            for (std::int64_t p = lo; p < hi; ++p) {
                std::int32_t r = groups.members[static_cast<std::size_t>(p)];
                if (row_on(roles.kv, r))
                    kv_rows.push_back(r);
            }
            if (kv_rows.empty())
                return;
            std::vector<double> scores(kv_rows.size());
            for (std::int64_t p = lo; p < hi; ++p) {
                std::int32_t qr = groups.members[static_cast<std::size_t>(p)];
                if (!row_on(roles.query, qr))
                    continue;
                for (int h = 0; h < heads; ++h) {
                    const double* q = qkv.data() + static_cast<std::int64_t>(qr) * 3 * d + h * hd;
                    double mx = -1e300;
                    for (std::size_t j = 0; j < kv_rows.size(); ++j) {
                        const double* k =
                            qkv.data() + static_cast<std::int64_t>(kv_rows[j]) * 3 * d + d + h * hd;
                        double s = 0.0;
                        for (int e = 0; e < hd; ++e)
                            s += q[e] * k[e];
                        s *= inv_sqrt_hd;
                        scores[j] = s;
                        mx = std::max(mx, s);
                    }
                    double denom = 0.0;
                    for (double& s : scores) {
                        s = std::exp(s - mx);
                        denom += s;
                    }
                    double inv_denom = 1.0 / denom;
                    double* out = attn.data() + static_cast<std::int64_t>(qr) * d + h * hd;
                    for (std::size_t j = 0; j < kv_rows.size(); ++j) {
                        const double* v = qkv.data() +
                                          static_cast<std::int64_t>(kv_rows[j]) * 3 * d + 2 * d +
                                          h * hd;
                        double p_ij = scores[j] * inv_denom;
                        for (int e = 0; e < hd; ++e)
                            out[e] += p_ij * v[e];
                    }
                }
            }
        },
        cfg.threads);

    // output projection + residual for query rows; identity for the rest
    if (roles.query == nullptr) {
        std::vector<double> proj(static_cast<std::size_t>(ts.count * d));
        matmul(attn.data(), lw.w_proj.data(), proj.data(), ts.count, d, d, lw.b_proj.data(),
               cfg.threads);
        parallel_for(
            ts.count,
            [&](std::int64_t i) {
                double* dst = ts.tokens.data() + i * d;
                const double* src = proj.data() + i * d;
                for (int j = 0; j < d; ++j)
                    dst[j] += src[j];
            },
            cfg.threads);
    } else {
        std::vector<std::int32_t> qrows;
        for (std::int64_t i = 0; i < ts.count; ++i)
            if (row_on(roles.query, i))
                qrows.push_back(static_cast<std::int32_t>(i));
        if (qrows.empty())
            return;
        std::vector<double> gathered(qrows.size() * static_cast<std::size_t>(d));
        for (std::size_t r = 0; r < qrows.size(); ++r)
            std::copy_n(attn.begin() + static_cast<std::int64_t>(qrows[r]) * d, d,
                        gathered.begin() + static_cast<std::int64_t>(r) * d);
        std::vector<double> proj(gathered.size());
        matmul(gathered.data(), lw.w_proj.data(), proj.data(),
               static_cast<std::int64_t>(qrows.size()), d, d, lw.b_proj.data(), cfg.threads);
        for (std::size_t r = 0; r < qrows.size(); ++r) {
            double* dst = ts.tokens.data() + static_cast<std::int64_t>(qrows[r]) * d;
            const double* src = proj.data() + static_cast<std::int64_t>(r) * d;
            for (int j = 0; j < d; ++j)
                dst[j] += src[j];
        }
    }
}

inline void ffn_sublayer(TokenSet& ts, const DiTLayerWeights& lw, const DiTConfig& cfg,
                         const LayerRoles& roles)
{
    if (ts.count == 0)
        return;
    const int d = cfg.dim;
    const int dff = 4 * d;

    std::vector<std::int32_t> rows;
    bool all = roles.ffn == nullptr;
    if (!all) {
        for (std::int64_t i = 0; i < ts.count; ++i)
            if (row_on(roles.ffn, i))
                rows.push_back(static_cast<std::int32_t>(i));
        if (rows.empty())
            return;
    }
    std::int64_t m = all ? ts.count : static_cast<std::int64_t>(rows.size());

    std::vector<double> x(static_cast<std::size_t>(m * d));
    if (all)
        x.assign(ts.tokens.begin(), ts.tokens.end());
    else
        for (std::int64_t r = 0; r < m; ++r)
            std::copy_n(ts.tokens.begin() + static_cast<std::int64_t>(rows[static_cast<std::size_t>(r)]) * d,
                        d, x.begin() + r * d);

    std::vector<double> xn(x.size());
    layer_norm(x.data(), xn.data(), m, d, lw.ln2_g.data(), lw.ln2_b.data(), cfg.threads);
    std::vector<double> hidden(static_cast<std::size_t>(m * dff));
    matmul(xn.data(), lw.w_ffn1.data(), hidden.data(), m, d, dff, lw.b_ffn1.data(), cfg.threads);
    parallel_for(
        m,
        [&](std::int64_t i) {
            double* row = hidden.data() + i * dff;
            for (int j = 0; j < dff; ++j)
                row[j] = gelu(row[j]);
        },
        cfg.threads);
    std::vector<double> out(static_cast<std::size_t>(m * d));
    matmul(hidden.data(), lw.w_ffn2.data(), out.data(), m, dff, d, lw.b_ffn2.data(), cfg.threads);

    if (all) {
        parallel_for(
            ts.count,
            [&](std::int64_t i) {
                double* dst = ts.tokens.data() + i * d;
                const double* src = out.data() + i * d;
                for (int j = 0; j < d; ++j)
                    dst[j] += src[j];
            },
            cfg.threads);
    } else {
        for (std::int64_t r = 0; r < m; ++r) {
            double* dst = ts.tokens.data() +
                          static_cast<std::int64_t>(rows[static_cast<std::size_t>(r)]) * d;
            const double* src = out.data() + r * d;
            for (int j = 0; j < d; ++j)
                dst[j] += src[j];
        }
    }
}

} // namespace detail

// Run the transformer stack over a token stream. skipped_rows marks stream
// rows (by storage index) that the variant must treat as skipped; pass an
// empty vector when the stream is already compacted (full_skip) or dense.
inline void transformer_layers(TokenSet& ts, const DiTConfig& cfg, const DiTWeights& w,
                               const std::vector<std::uint8_t>& skipped_rows)
{
    cfg.validate();
    require(static_cast<int>(w.layers.size()) == cfg.layers, "weights do not match layer count");
    detail::RopeFreqs rf(cfg);

    std::vector<std::uint8_t> unskipped;
    if (!skipped_rows.empty()) {
        require(static_cast<std::int64_t>(skipped_rows.size()) == ts.count,
                "skipped_rows size mismatch");
        unskipped.resize(skipped_rows.size());
        for (std::size_t i = 0; i < skipped_rows.size(); ++i)
            unskipped[i] = skipped_rows[i] ? 0 : 1;
    }
    bool have_mask = !unskipped.empty();

    for (int layer = 0; layer < cfg.layers; ++layer) {
        detail::LayerRoles roles; // defaults: everything on
        switch (cfg.variant) {
        case DitVariant::dense:
        case DitVariant::full_skip:
            break;
        case DitVariant::attention_mask_only:
            if (have_mask) {
                roles.query = &unskipped;
                roles.kv = &unskipped;
            }
            break;
        case DitVariant::query_mask_only:
            if (have_mask)
                roles.query = &unskipped;
            break;
        case DitVariant::interleaved_dense:
            if (have_mask && layer % 2 == 1) {
                roles.query = &unskipped;
                roles.kv = &unskipped;
                roles.ffn = &unskipped;
            }
            break;
        }
        detail::attention_sublayer(ts, w.layers[static_cast<std::size_t>(layer)], cfg, layer,
                                   roles, rf);
        detail::ffn_sublayer(ts, w.layers[static_cast<std::size_t>(layer)], cfg, roles);
    }
}

// Refined latent cells for unskipped positions; skipped cells are left zero.
// The unembed output is a residual on top of the input cells.
inline LatentTensor dit_forward(const LatentTensor& l, const SkipMask& m, const DiTConfig& cfg,
                                const DiTWeights& w)
{
    cfg.validate();
    LatentTensor out;
    out.t = l.t;
    out.h = l.h;
    out.w = l.w;
    out.keep = l.keep;
    out.coeffs.assign(static_cast<std::size_t>(out.size()), 0.0);

    // full_skip with nothing to refine does no work at all
    if (cfg.variant == DitVariant::full_skip && m.popcount() == m.count()) {
        require(l.t == m.gt && l.h == 2 * m.gh && l.w == 2 * m.gw,
                "mask grid does not match token grid");
        return out;
    }

    TokenSet full = tokenize(l, w, cfg);
    require(full.gt == m.gt && full.gh == m.gh && full.gw == m.gw,
            "mask grid does not match token grid");

    TokenSet* stream = &full;
    TokenSet compact;
    std::vector<std::uint8_t> skipped_rows;
    bool any_skipped = m.popcount() > 0;
    if (cfg.variant == DitVariant::full_skip && any_skipped) {
        compact = route(full, m);
        stream = &compact;
    } else if (cfg.variant != DitVariant::dense && cfg.variant != DitVariant::full_skip &&
               any_skipped) {
        skipped_rows.resize(static_cast<std::size_t>(full.count));
        for (std::int64_t k = 0; k < full.count; ++k)
            skipped_rows[static_cast<std::size_t>(k)] = m.bits[static_cast<std::size_t>(k)] ? 1 : 0;
    }

    transformer_layers(*stream, cfg, w, skipped_rows);

    // unembed only the unskipped rows; residual on the raw patch values
    std::vector<std::int32_t> rows;
    rows.reserve(static_cast<std::size_t>(stream->count));
    for (std::int64_t i = 0; i < stream->count; ++i) {
        std::int64_t cell = (static_cast<std::int64_t>(stream->orig_t[static_cast<std::size_t>(i)]) * stream->gh +
                             stream->orig_h[static_cast<std::size_t>(i)]) *
                                stream->gw +
                            stream->orig_w[static_cast<std::size_t>(i)];
        if (!m.bits[static_cast<std::size_t>(cell)])
            rows.push_back(static_cast<std::int32_t>(i));
    }
    if (rows.empty())
        return out;

    std::vector<double> gathered(rows.size() * static_cast<std::size_t>(stream->dim));
    for (std::size_t r = 0; r < rows.size(); ++r)
        std::copy_n(stream->tokens.begin() + static_cast<std::int64_t>(rows[r]) * stream->dim,
                    stream->dim, gathered.begin() + static_cast<std::int64_t>(r) * stream->dim);
    std::vector<double> delta(rows.size() * static_cast<std::size_t>(stream->raw_dim));
    detail::matmul(gathered.data(), w.w_unembed.data(), delta.data(),
                   static_cast<std::int64_t>(rows.size()), stream->dim, stream->raw_dim,
                   w.b_unembed.data(), cfg.threads);

    int ch = l.channels();
    for (std::size_t r = 0; r < rows.size(); ++r) {
        std::int64_t i = rows[r];
        std::int64_t it = stream->orig_t[static_cast<std::size_t>(i)];
        std::int64_t ih = stream->orig_h[static_cast<std::size_t>(i)];
        std::int64_t iw = stream->orig_w[static_cast<std::size_t>(i)];
        const double* raw = stream->raw.data() + i * stream->raw_dim;
        const double* dl = delta.data() + static_cast<std::int64_t>(r) * stream->raw_dim;
        const double* src = raw;
        std::int64_t p = 0;
        for (std::int64_t dy = 0; dy < 2; ++dy)
            for (std::int64_t dx = 0; dx < 2; ++dx) {
                std::int64_t off = out.cell_offset(it, 2 * ih + dy, 2 * iw + dx);
                for (int c = 0; c < ch; ++c, ++p)
                    out.coeffs[static_cast<std::size_t>(off + c)] = src[p] + dl[p];
            }
    }
    return out;
}

// Skipped cells come verbatim from the skip source (the encoded upsampled
// input); unskipped cells from the transformer output.
inline LatentTensor compose_output(const LatentTensor& refined, const LatentTensor& skip_source,
                                   const SkipMask& m)
{
    require(refined.same_dims(skip_source), "compose_output: latent dims mismatch");
    require(refined.t == m.gt && refined.h == 2 * m.gh && refined.w == 2 * m.gw,
            "compose_output: mask grid mismatch");
    LatentTensor out = skip_source;
    int ch = out.channels();
    for (std::int64_t k = 0; k < m.count(); ++k) {
        if (m.bits[static_cast<std::size_t>(k)])
            continue;
        std::int64_t it = k / (m.gh * m.gw);
        std::int64_t ih = (k / m.gw) % m.gh;
        std::int64_t iw = k % m.gw;
        for (std::int64_t dy = 0; dy < 2; ++dy)
            for (std::int64_t dx = 0; dx < 2; ++dx) {
                std::int64_t off = out.cell_offset(it, 2 * ih + dy, 2 * iw + dx);
                std::copy(refined.coeffs.begin() + off, refined.coeffs.begin() + off + ch,
                          out.coeffs.begin() + off);
            }
    }
    return out;
}

// ---- cost model -------------------------------------------------------------

// Multiply-accumulate counts for one full forward pass under a mask. The
// attention term is the per-window sum of len^2 the profiler reasons about;
// linear terms scale with the tokens that still flow through the blocks.
struct DitCost {
    double attention_macs = 0.0;
    double linear_macs = 0.0;
    double embed_macs = 0.0;
    double total() const { return attention_macs + linear_macs + embed_macs; }
};

inline DitCost dit_cost(std::int64_t gt, std::int64_t gh, std::int64_t gw, int latent_channels,
                        const DiTConfig& cfg, const SkipMask* m)
{
    cfg.validate();
    std::int64_t n_full = gt * gh * gw;
    std::int64_t n = n_full - (m ? m->popcount() : 0);
    double d = cfg.dim;
    double hd = cfg.head_dim();
    double raw_dim = 4.0 * latent_channels;

    DitCost cost;
    cost.embed_macs = static_cast<double>(n_full) * raw_dim * d + // tokenize embeds the full grid
                      static_cast<double>(n) * d * raw_dim;       // unembed on unskipped only
    for (int layer = 0; layer < cfg.layers; ++layer) {
        WindowTiling tiling = make_tiling(gt, gh, gw, cfg.window, cfg.shift_for_layer(layer));
        std::vector<std::int64_t> len(static_cast<std::size_t>(tiling.count()), 0);
        std::int64_t k = 0;
        for (std::int64_t it = 0; it < gt; ++it)
            for (std::int64_t ih = 0; ih < gh; ++ih)
                for (std::int64_t iw = 0; iw < gw; ++iw, ++k) {
                    if (m && m->bits[static_cast<std::size_t>(k)])
                        continue;
                    ++len[static_cast<std::size_t>(tiling.id_of(it, ih, iw))];
                }
        double sum_sq = 0.0;
        for (std::int64_t l : len)
            sum_sq += static_cast<double>(l) * static_cast<double>(l);
        // scores + weighted values: 2 * len^2 * head_dim per head
        cost.attention_macs += sum_sq * 2.0 * hd * cfg.heads;
        cost.linear_macs += static_cast<double>(n) * (3.0 * d * d + d * d + 8.0 * d * d);
    }
    return cost;
}

// ---- weights file (same manifest+blob scheme as the predictor) -------------

inline void save_dit_weights(const DiTWeights& w, const DiTConfig& cfg, const std::string& path)
{
    nlohmann::json manifest = {
        {"model", "dit"},
        {"dim", w.dim},
        {"raw_dim", w.raw_dim},
        {"heads", cfg.heads},
        {"layers", cfg.layers},
        {"window", {cfg.window[0], cfg.window[1], cfg.window[2]}},
        {"rope_base", cfg.rope_base},
        {"seed", cfg.seed},
    };
    std::ofstream os = open_out(path);
    os.write("SKPW", 4);
    std::string ms = manifest.dump();
    write_u32(os, static_cast<std::uint32_t>(ms.size()));
    os.write(ms.data(), static_cast<std::streamsize>(ms.size()));
    write_f32_array(os, w.w_embed);
    write_f32_array(os, w.b_embed);
    write_f32_array(os, w.w_unembed);
    write_f32_array(os, w.b_unembed);
    for (const auto& l : w.layers) {
        write_f32_array(os, l.ln1_g);
        write_f32_array(os, l.ln1_b);
        write_f32_array(os, l.w_qkv);
        write_f32_array(os, l.b_qkv);
        write_f32_array(os, l.w_proj);
        write_f32_array(os, l.b_proj);
        write_f32_array(os, l.ln2_g);
        write_f32_array(os, l.ln2_b);
        write_f32_array(os, l.w_ffn1);
        write_f32_array(os, l.b_ffn1);
        write_f32_array(os, l.w_ffn2);
        write_f32_array(os, l.b_ffn2);
    }
}

inline std::pair<DiTWeights, DiTConfig> load_dit_weights(const std::string& path)
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
    if (manifest.value("model", "") != "dit")
        throw FormatError("weights file is not a transformer model: " + path);

    DiTConfig cfg;
    cfg.dim = manifest.at("dim").get<int>();
    cfg.heads = manifest.at("heads").get<int>();
    cfg.layers = manifest.at("layers").get<int>();
    auto win = manifest.at("window");
    cfg.window = {win[0].get<std::int64_t>(), win[1].get<std::int64_t>(),
                  win[2].get<std::int64_t>()};
    cfg.rope_base = manifest.value("rope_base", 10000.0);
    cfg.seed = manifest.value("seed", 0ULL);
    cfg.validate();

    DiTWeights w;
    w.dim = cfg.dim;
    w.raw_dim = manifest.at("raw_dim").get<int>();
    std::size_t d = static_cast<std::size_t>(w.dim);
    std::size_t rd = static_cast<std::size_t>(w.raw_dim);
    read_f32_array(is, w.w_embed, rd * d);
    read_f32_array(is, w.b_embed, d);
    read_f32_array(is, w.w_unembed, d * rd);
    read_f32_array(is, w.b_unembed, rd);
    w.layers.resize(static_cast<std::size_t>(cfg.layers));
    for (auto& l : w.layers) {
        read_f32_array(is, l.ln1_g, d);
        read_f32_array(is, l.ln1_b, d);
        read_f32_array(is, l.w_qkv, d * 3 * d);
        read_f32_array(is, l.b_qkv, 3 * d);
        read_f32_array(is, l.w_proj, d * d);
        read_f32_array(is, l.b_proj, d);
        read_f32_array(is, l.ln2_g, d);
        read_f32_array(is, l.ln2_b, d);
        read_f32_array(is, l.w_ffn1, d * 4 * d);
        read_f32_array(is, l.b_ffn1, 4 * d);
        read_f32_array(is, l.w_ffn2, 4 * d * d);
        read_f32_array(is, l.b_ffn2, d);
    }
    return {std::move(w), cfg};
}

} // namespace skipsr
