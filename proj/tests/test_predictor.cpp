#include <catch2/catch.hpp>

#include "skipsr/predictor.hpp"

#include "reference.hpp"
#include "synth.hpp"
#include "test_helpers.hpp"

using namespace skipsr;

namespace {

LatentTensor random_latent(std::int64_t t, std::int64_t h, std::int64_t w, int keep,
                           std::uint64_t seed)
{
    LatentTensor l;
    l.t = t;
    l.h = h;
    l.w = w;
    l.keep = keep;
    l.coeffs.resize(static_cast<std::size_t>(l.size()));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (double& x : l.coeffs)
        x = dist(rng);
    return l;
}

ref::RefConvWeights to_ref(const Conv3d& c)
{
    ref::RefConvWeights r;
    r.in_ch = c.in_ch;
    r.out_ch = c.out_ch;
    r.stride = c.spatial_stride;
    r.b = c.b;
    r.w.resize(c.w.size());
    for (int koff = 0; koff < 27; ++koff)
        for (int i = 0; i < c.in_ch; ++i)
            for (int o = 0; o < c.out_ch; ++o)
                r.w[static_cast<std::size_t>((o * c.in_ch + i) * 27 + koff)] =
                    c.w[static_cast<std::size_t>((koff * c.in_ch + i) * c.out_ch + o)];
    return r;
}

// Independent full-net forward: reference conv chain with ReLU between.
std::vector<double> ref_net_forward(const PredictorNet& net, const LatentTensor& l)
{
    std::vector<double> x = l.coeffs;
    std::int64_t t = l.t, h = l.h, w = l.w;
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        std::int64_t ot, oh, ow;
        x = ref::conv3d_ref(x, t, h, w, to_ref(net.layers[li]), ot, oh, ow);
        t = ot;
        h = oh;
        w = ow;
        if (li + 1 < net.layers.size())
            for (double& v : x)
                v = std::max(v, 0.0);
    }
    return x;
}

} // namespace

TEST_CASE("zero weights give 0.5 everywhere after sigmoid")
{
    PredictorNet net = make_predictor(12, 1);
    for (auto& l : net.layers) {
        std::fill(l.w.begin(), l.w.end(), 0.0);
        std::fill(l.b.begin(), l.b.end(), 0.0);
    }
    LatentTensor l = random_latent(2, 8, 8, 4, 101); // channels = 12
    LogitGrid g = predictor_forward(net, l);
    REQUIRE(g.t == 2);
    REQUIRE(g.h == 4);
    REQUIRE(g.w == 4);
    for (double x : g.values)
        REQUIRE(x == 0.0);
    SkipMask m = predict_mask(net, l, 0.5);
    REQUIRE(m.skipped_fraction() == 1.0); // sigmoid(0) = 0.5 >= 0.5
}

TEST_CASE("forward matches the scalar conv oracle")
{
    SECTION("single strided layer on an impulse")
    {
        PredictorNet net = make_predictor(6, 7, 4);
        LatentTensor l = random_latent(3, 4, 4, 2, 102);
        std::fill(l.coeffs.begin(), l.coeffs.end(), 0.0);
        l.coeffs[static_cast<std::size_t>(((1 * 4 + 2) * 4 + 1) * 6 + 3)] = 1.0; // one-hot cell
        FeatureMap got = detail::conv_forward(net.layers[0], latent_as_features(l));
        std::int64_t ot, oh, ow;
        auto want = ref::conv3d_ref(l.coeffs, 3, 4, 4, to_ref(net.layers[0]), ot, oh, ow);
        REQUIRE(got.t == ot);
        REQUIRE(got.h == oh);
        REQUIRE(got.w == ow);
        REQUIRE(ref::max_abs_diff(got.data, want) <= 1e-12);
    }
    SECTION("full net on random input")
    {
        PredictorNet net = make_predictor(6, 8, 5);
        LatentTensor l = random_latent(3, 6, 6, 2, 103);
        LogitGrid got = predictor_forward(net, l);
        auto want = ref_net_forward(net, l);
        REQUIRE(got.values.size() == want.size());
        REQUIRE(ref::max_abs_diff(got.values, want) <= 1e-10);
    }
}

TEST_CASE("logits shift by one when input shifts by the stride")
{
    const int c_in = 4;
    PredictorNet net = make_predictor(c_in, 9, 6);
    std::int64_t t = 2, h = 24, w = 24;
    FeatureMap fa(t, h, w, c_in), fb(t, h, w, c_in);
    std::mt19937_64 rng(105);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (double& x : fa.data)
        x = dist(rng);
    for (std::int64_t tt = 0; tt < t; ++tt)
        for (std::int64_t y = 2; y < h; ++y)
            for (std::int64_t x = 2; x < w; ++x)
                for (int c = 0; c < c_in; ++c)
                    fb.data[static_cast<std::size_t>(((tt * h + y) * w + x) * c_in + c)] =
                        fa.data[static_cast<std::size_t>(
                            ((tt * h + (y - 2)) * w + (x - 2)) * c_in + c)];

    FeatureMap la = detail::forward_features(net, fa, nullptr);
    FeatureMap lb = detail::forward_features(net, fb, nullptr);

    // interior: receptive field (+-7 input cells) clear of both borders
    for (std::int64_t tt = 0; tt < la.t; ++tt)
        for (std::int64_t yo = 5; yo <= 8; ++yo)
            for (std::int64_t xo = 5; xo <= 8; ++xo) {
                double va = la.data[static_cast<std::size_t>((tt * la.h + (yo - 1)) * la.w +
                                                             (xo - 1))];
                double vb = lb.data[static_cast<std::size_t>((tt * lb.h + yo) * lb.w + xo)];
                REQUIRE(vb == Approx(va).margin(1e-12));
            }
}

TEST_CASE("bce loss and gradients")
{
    SECTION("zero logits and mixed targets give ln 2")
    {
        PredictorNet net = make_predictor(6, 11);
        for (auto& l : net.layers) {
            std::fill(l.w.begin(), l.w.end(), 0.0);
            std::fill(l.b.begin(), l.b.end(), 0.0);
        }
        LatentTensor l = random_latent(2, 6, 6, 2, 106);
        std::vector<double> targets(2 * 3 * 3, 0.0);
        for (std::size_t i = 0; i < targets.size(); i += 2)
            targets[i] = 1.0;
        Gradients g = predictor_backward(net, l, targets, 1.0);
        REQUIRE(g.loss == Approx(std::log(2.0)).margin(1e-12));
    }
    SECTION("pos_weight 0 annihilates gradients from positive cells")
    {
        PredictorNet net = make_predictor(6, 12, 4);
        LatentTensor l = random_latent(2, 6, 6, 2, 107);
        std::vector<double> all_pos(2 * 3 * 3, 1.0);
        Gradients g = predictor_backward(net, l, all_pos, 0.0);
        REQUIRE(g.loss == 0.0);
        for (const auto& gw : g.w)
            for (double x : gw)
                REQUIRE(x == 0.0);
        for (const auto& gb : g.b)
            for (double x : gb)
                REQUIRE(x == 0.0);
    }
    SECTION("shape mismatch is an error")
    {
        PredictorNet net = make_predictor(6, 13, 4);
        LatentTensor l = random_latent(2, 6, 6, 2, 108);
        std::vector<double> bad(5, 0.0);
        REQUIRE_THROWS_AS(predictor_backward(net, l, bad, 1.0), ValidationError);
    }
    SECTION("channel mismatch is an error")
    {
        PredictorNet net = make_predictor(9, 14, 4);
        LatentTensor l = random_latent(2, 6, 6, 2, 109); // 6 channels
        REQUIRE_THROWS_AS(predictor_forward(net, l), ValidationError);
    }
}

TEST_CASE("analytic gradients match central finite differences")
{
    // tiny net: c_in=4 (keep=... latent channels 3*keep; use keep s.t. 3k=12)
    const int c_in = 12;
    PredictorNet net = make_predictor(c_in, 15, 6);
    LatentTensor l = random_latent(2, 6, 6, 4, 110);
    std::mt19937_64 rng(111);
    std::vector<double> targets(2 * 3 * 3);
    for (double& z : targets)
        z = (rng() % 2) ? 1.0 : 0.0;
    const double pw = 1.0;
    Gradients g = predictor_backward(net, l, targets, pw);

    auto loss_at = [&]() {
        LogitGrid lg = predictor_forward(net, l);
        double loss = 0.0;
        for (std::size_t i = 0; i < targets.size(); ++i) {
            double x = lg.values[i];
            double z = targets[i];
            loss += pw * z * detail::softplus(-x) + (1.0 - z) * detail::softplus(x);
        }
        return loss / static_cast<double>(targets.size());
    };

    const double eps = 1e-4;
    double worst = 0.0;
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        auto check_param = [&](double& p, double analytic) {
            double keep = p;
            p = keep + eps;
            double up = loss_at();
            p = keep - eps;
            double dn = loss_at();
            p = keep;
            double fd = (up - dn) / (2 * eps);
            double denom = std::max({std::abs(analytic), std::abs(fd), 1e-6});
            worst = std::max(worst, std::abs(analytic - fd) / denom);
        };
        // spot-check a deterministic stripe of weights plus every bias
        for (std::size_t i = 0; i < net.layers[li].w.size(); i += 7)
            check_param(net.layers[li].w[i], g.w[li][i]);
        for (std::size_t i = 0; i < net.layers[li].b.size(); ++i)
            check_param(net.layers[li].b[i], g.b[li][i]);
    }
    REQUIRE(worst <= 1e-4);
}

TEST_CASE("training on a separable synthetic set")
{
    auto train = synth::make_dataset(128, 200);
    auto held = synth::make_dataset(24, 900);

    PredictorNet net = make_predictor(48, 42);
    TrainConfig cfg;
    cfg.lr = 1e-3;
    cfg.steps = 500;
    cfg.batch = 8;
    cfg.seed = 7;
    TrainResult r = train_predictor(net, train, cfg);
    REQUIRE(r.loss_curve.size() == 500);

    // loss trend decreases
    double head = 0, tail = 0;
    for (int i = 0; i < 50; ++i) {
        head += r.loss_curve[static_cast<std::size_t>(i)];
        tail += r.loss_curve[r.loss_curve.size() - 1 - static_cast<std::size_t>(i)];
    }
    REQUIRE(tail < head);

    REQUIRE(synth::dataset_accuracy(net, held) >= 0.95);
}

TEST_CASE("lr=0 leaves parameters unchanged and the loss flat")
{
    auto train = synth::make_dataset(4, 400);
    PredictorNet net = make_predictor(48, 43);
    PredictorNet before = net;
    TrainConfig cfg;
    cfg.lr = 0.0;
    cfg.steps = 10;
    cfg.batch = 2;
    cfg.seed = 9;
    TrainResult r = train_predictor(net, train, cfg);
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        REQUIRE(net.layers[li].w == before.layers[li].w);
        REQUIRE(net.layers[li].b == before.layers[li].b);
    }
    for (std::size_t i = 1; i < r.loss_curve.size(); ++i)
        REQUIRE(std::abs(r.loss_curve[i] - r.loss_curve[0]) <
                std::abs(r.loss_curve[0]) * 0.5 + 1e-9);
}

TEST_CASE("training is deterministic given the seed")
{
    auto train = synth::make_dataset(6, 500);
    TrainConfig cfg;
    cfg.lr = 1e-3;
    cfg.steps = 25;
    cfg.batch = 2;
    cfg.seed = 77;
    PredictorNet a = make_predictor(48, 44);
    PredictorNet b = make_predictor(48, 44);
    train_predictor(a, train, cfg);
    train_predictor(b, train, cfg);
    for (std::size_t li = 0; li < a.layers.size(); ++li) {
        REQUIRE(a.layers[li].w == b.layers[li].w);
        REQUIRE(a.layers[li].b == b.layers[li].b);
    }
    REQUIRE(a.in_mean == b.in_mean);
    REQUIRE(a.in_inv_std == b.in_inv_std);
}

TEST_CASE("empty dataset is an error")
{
    PredictorNet net = make_predictor(48, 45);
    std::vector<TrainSample> none;
    REQUIRE_THROWS_AS(train_predictor(net, none, TrainConfig{}), ValidationError);
}

TEST_CASE("predict_mask threshold semantics")
{
    PredictorNet net = make_predictor(6, 46, 4);
    LatentTensor l = random_latent(2, 6, 6, 2, 112);
    REQUIRE(predict_mask(net, l, 1.0 + 1e-9).skipped_fraction() == 0.0);
    REQUIRE(predict_mask(net, l, 0.0).skipped_fraction() == 1.0);
    SECTION("raising the threshold never increases the skipped fraction")
    {
        double prev = 1.0;
        for (double th : {0.1, 0.3, 0.5, 0.7, 0.9}) {
            double f = predict_mask(net, l, th).skipped_fraction();
            REQUIRE(f <= prev);
            prev = f;
        }
    }
}

TEST_CASE("predictor weights round trip through the manifest+blob file")
{
    PredictorNet net = make_predictor(48, 47);
    net.label_tau = 3e-4;
    net.label_factor = 2;
    for (std::size_t c = 0; c < net.in_mean.size(); ++c) {
        net.in_mean[c] = 0.01 * static_cast<double>(c);
        net.in_inv_std[c] = 1.0 + 0.1 * static_cast<double>(c);
    }
    auto path = testutil::scratch_file("pred.skpw");
    save_predictor(net, path);
    PredictorNet r = load_predictor(path);
    REQUIRE(r.c_in == net.c_in);
    REQUIRE(r.width == net.width);
    REQUIRE(r.label_tau == net.label_tau);
    REQUIRE(r.label_factor == net.label_factor);
    REQUIRE(r.in_mean == net.in_mean);
    REQUIRE(r.in_inv_std == net.in_inv_std);
    REQUIRE(r.layers.size() == net.layers.size());
    for (std::size_t li = 0; li < net.layers.size(); ++li)
        for (std::size_t i = 0; i < net.layers[li].w.size(); ++i)
            REQUIRE(r.layers[li].w[i] ==
                    static_cast<double>(static_cast<float>(net.layers[li].w[i])));
    SECTION("quantized weights still agree with the original forward pass")
    {
        LatentTensor l = random_latent(2, 8, 8, 16, 113);
        LogitGrid ga = predictor_forward(net, l);
        LogitGrid gb = predictor_forward(r, l);
        REQUIRE(ref::max_abs_diff(ga.values, gb.values) < 1e-4);
    }
}
