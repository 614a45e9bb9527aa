// Command-line surface for the skip-routing super-resolution pipeline:
// oracle analysis, threshold sweeps, predictor training, end-to-end SR and
// variant profiling. Exit codes: 0 ok, 2 usage, 3 I/O, 4 validation.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "skipsr/skipsr.hpp"

namespace {

using namespace skipsr;

void write_text(const std::string& path, const std::string& text)
{
    std::ofstream os = open_out(path, false);
    os << text;
}

void emit(const std::string& text, const std::string& out_path)
{
    if (out_path.empty())
        std::cout << text;
    else
        write_text(out_path, text);
}

std::array<std::int64_t, 3> parse_grid(const std::vector<std::int64_t>& v, const char* what)
{
    if (v.size() != 3)
        throw UsageError(std::string(what) + " needs exactly three values (t h w)");
    return {v[0], v[1], v[2]};
}

int run(int argc, char** argv)
{
    CLI::App app{"SkipSR: selective-patch video super-resolution engine"};
    app.require_subcommand(1);

    // ---- analyze ----
    auto* analyze = app.add_subcommand("analyze", "oracle/predictor mask analysis with latent swap");
    std::string an_video, an_weights, an_mask_source = "oracle", an_out_report, an_out_mask,
                an_label = "video";
    double an_tau = kDefaultTau, an_threshold = 0.5;
    int an_factor = kDefaultFactor, an_keep = 16;
    analyze->add_option("video", an_video, "input video (.y4m or .raw with JSON sidecar)")
        ->required();
    analyze->add_option("--tau", an_tau, "skippability threshold");
    analyze->add_option("--factor", an_factor, "spatial downsampling factor");
    analyze->add_option("--keep", an_keep, "codec coefficients kept per block per channel");
    analyze->add_option("--mask-source", an_mask_source, "oracle|predictor")
        ->check(CLI::IsMember({"oracle", "predictor"}));
    analyze->add_option("--weights", an_weights, "predictor weights (mask-source=predictor)");
    analyze->add_option("--threshold", an_threshold, "predictor decision threshold");
    analyze->add_option("--out-report", an_out_report, "write the JSON report here");
    analyze->add_option("--out-mask", an_out_mask, "write the mask file here");
    analyze->add_option("--label", an_label, "dataset label in the report");

    // ---- sweep ----
    auto* sweep = app.add_subcommand("sweep", "threshold sweep: tau vs skipped% and swap PSNR");
    std::string sw_video, sw_out;
    std::vector<double> sw_taus;
    int sw_factor = kDefaultFactor, sw_keep = 16;
    sweep->add_option("video", sw_video, "input video")->required();
    sweep->add_option("--taus", sw_taus, "ascending thresholds")->required()->expected(2, 64);
    sweep->add_option("--factor", sw_factor, "spatial downsampling factor");
    sweep->add_option("--keep", sw_keep, "codec coefficients kept");
    sweep->add_option("--out", sw_out, "write CSV here (stdout otherwise)");

    // ---- train-predictor ----
    auto* train = app.add_subcommand("train-predictor", "train the skip predictor on a video dir");
    std::string tr_dir, tr_out = "predictor.skpw", tr_curve;
    TrainCommandOptions tr_opt;
    train->add_option("data-dir", tr_dir, "directory of .y4m/.raw clips")->required();
    train->add_option("--tau", tr_opt.tau, "label threshold");
    train->add_option("--factor", tr_opt.factor, "label downsampling factor");
    train->add_option("--keep", tr_opt.keep, "codec coefficients kept");
    train->add_option("--steps", tr_opt.train.steps, "optimizer steps");
    train->add_option("--batch", tr_opt.train.batch, "clips per step");
    train->add_option("--lr", tr_opt.train.lr, "learning rate");
    train->add_option("--seed", tr_opt.train.seed, "rng seed");
    train->add_option("--pos-weight", tr_opt.train.pos_weight, "positive-class loss weight");
    train->add_option("--out", tr_out, "weights output path");
    train->add_option("--loss-curve", tr_curve, "write step,loss CSV here");

    // ---- sr ----
    auto* sr = app.add_subcommand("sr", "super-resolve a low-resolution video");
    std::string sr_video, sr_wpred, sr_wdit, sr_out = "out.y4m", sr_out_mask, sr_out_report,
                sr_variant = "full_skip";
    SrOptions sr_opt;
    sr->add_option("video", sr_video, "low-resolution input video")->required();
    sr->add_option("--weights-predictor", sr_wpred, "predictor weights")->required();
    sr->add_option("--weights-dit", sr_wdit, "transformer weights")->required();
    sr->add_option("--scale", sr_opt.scale, "upsampling factor");
    sr->add_option("--keep", sr_opt.keep, "codec coefficients kept on the output path");
    sr->add_option("--threshold", sr_opt.threshold, "predictor decision threshold");
    sr->add_option("--variant", sr_variant, "sparsity variant")
        ->check(CLI::IsMember({"full_skip", "attention_mask_only", "query_mask_only",
                               "interleaved_dense", "dense"}));
    sr->add_option("--threads", sr_opt.threads, "worker threads (0 = auto)");
    sr->add_option("--out", sr_out, "output video path (.y4m or .raw)");
    sr->add_option("--out-mask", sr_out_mask, "write the predicted mask here");
    sr->add_option("--out-report", sr_out_report, "write the JSON report here");

    // ---- profile ----
    auto* profile = app.add_subcommand("profile", "wall-clock comparison of sparsity variants");
    ProfileOptions pf_opt;
    std::vector<std::int64_t> pf_grid{16, 32, 32};
    std::vector<std::string> pf_variants;
    std::string pf_out, pf_out_json;
    profile->add_option("--grid", pf_grid, "token grid t h w")->expected(3);
    profile->add_option("--skip-fraction", pf_opt.fractions, "requested skip fractions")
        ->expected(1, 16);
    profile->add_option("--variants", pf_variants, "variants to time")->expected(1, 5);
    profile->add_option("--repeats", pf_opt.repeats, "timed repeats per variant");
    profile->add_option("--seed", pf_opt.seed, "rng seed");
    profile->add_option("--dim", pf_opt.dit.dim, "model width");
    profile->add_option("--heads", pf_opt.dit.heads, "attention heads");
    profile->add_option("--layers", pf_opt.dit.layers, "transformer layers");
    std::vector<std::int64_t> pf_window{4, 8, 8};
    profile->add_option("--window", pf_window, "attention window t h w")->expected(3);
    profile->add_option("--threads", pf_opt.dit.threads, "worker threads (0 = auto)");
    profile->add_option("--out", pf_out, "write CSV here (stdout otherwise)");
    profile->add_option("--out-json", pf_out_json, "also write a JSON report here");

    // ---- init-dit ----
    auto* init = app.add_subcommand("init-dit", "write transformer weights for the sr command");
    std::string in_out = "dit.skpw";
    DiTConfig in_cfg;
    int in_keep = 256;
    bool in_random_unembed = false;
    std::vector<std::int64_t> in_window{4, 8, 8};
    init->add_option("--out", in_out, "weights output path");
    init->add_option("--seed", in_cfg.seed, "rng seed");
    init->add_option("--dim", in_cfg.dim, "model width");
    init->add_option("--heads", in_cfg.heads, "attention heads");
    init->add_option("--layers", in_cfg.layers, "transformer layers");
    init->add_option("--window", in_window, "attention window t h w")->expected(3);
    init->add_option("--keep", in_keep, "codec coefficients the weights expect");
    init->add_flag("--random-unembed", in_random_unembed,
                   "random unembed instead of pass-through zeros");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e); // 0
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2; // usage
    }

    if (analyze->parsed()) {
        AnalyzeOptions opt;
        opt.tau = an_tau;
        opt.factor = an_factor;
        opt.keep = an_keep;
        opt.mask_source = an_mask_source == "oracle" ? MaskSource::oracle : MaskSource::predictor;
        opt.predictor_weights = an_weights;
        opt.threshold = an_threshold;
        opt.label = an_label;
        if (opt.mask_source == MaskSource::predictor && an_weights.empty())
            throw UsageError("--mask-source predictor requires --weights");
        VideoTensor v = load_video(an_video);
        AnalyzeResult res = analyze_video(v, opt);
        emit(res.report.dump(2) + "\n", an_out_report);
        if (!an_out_mask.empty())
            save_mask(res.mask, an_out_mask);
        return 0;
    }
    if (sweep->parsed()) {
        VideoTensor v = load_video(sw_video);
        auto rows = sweep_video(v, sw_taus, sw_factor, sw_keep);
        emit(sweep_csv(rows), sw_out);
        return 0;
    }
    if (train->parsed()) {
        TrainCommandResult res = train_predictor_on_dir(tr_dir, tr_opt);
        save_predictor(res.net, tr_out);
        if (!tr_curve.empty())
            write_text(tr_curve, loss_curve_csv(res.train));
        std::cout << "trained on " << res.clip_count << " clips, final loss "
                  << (res.train.loss_curve.empty() ? 0.0 : res.train.loss_curve.back()) << "\n";
        return 0;
    }
    if (sr->parsed()) {
        sr_opt.variant = variant_from_name(sr_variant);
        VideoTensor lr = load_video(sr_video);
        PredictorNet net = load_predictor(sr_wpred);
        auto [dw, dcfg] = load_dit_weights(sr_wdit);
        SrResult res = super_resolve(lr, net, dw, dcfg, sr_opt);
        save_video(res.output, sr_out);
        if (!sr_out_mask.empty())
            save_mask(res.mask, sr_out_mask);
        emit(res.report.dump(2) + "\n", sr_out_report);
        return 0;
    }
    if (profile->parsed()) {
        pf_opt.grid = parse_grid(pf_grid, "--grid");
        pf_opt.dit.window = parse_grid(pf_window, "--window");
        if (!pf_variants.empty()) {
            pf_opt.variants.clear();
            for (const auto& name : pf_variants)
                pf_opt.variants.push_back(variant_from_name(name));
        }
        auto rows = profile_variants(pf_opt);
        emit(profile_csv(rows), pf_out);
        if (!pf_out_json.empty())
            write_text(pf_out_json, profile_report(pf_opt, rows).dump(2) + "\n");
        return 0;
    }
    if (init->parsed()) {
        in_cfg.window = parse_grid(in_window, "--window");
        in_cfg.validate();
        DiTWeights w = make_dit_weights(in_cfg, 3 * in_keep, in_cfg.seed, !in_random_unembed);
        save_dit_weights(w, in_cfg, in_out);
        std::cout << "wrote " << in_out << "\n";
        return 0;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    try {
        return run(argc, argv);
    } catch (const skipsr::UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const skipsr::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 3;
    } catch (const skipsr::ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
