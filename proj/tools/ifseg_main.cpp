#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "ifseg/error.hpp"
#include "ifseg/pipeline.hpp"

namespace {

ifseg::RunConfig load_run_config(const std::string& path, bool seed_set, std::uint64_t seed) {
    ifseg::RunConfig cfg = path.empty() ? ifseg::RunConfig{} : ifseg::load_config(path);
    if (seed_set) cfg.seed = seed;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ifseg: image-free semantic segmentation toolkit"};
    app.require_subcommand(1);

    std::string config_path, data_path, out_path, ckpt_path, image_path;
    std::string probs_path, features_path, unseen_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::uint32_t count = 512, sample_index = 0, classes = 0;
    std::uint32_t out_h = 0, out_w = 0;
    std::uint32_t pp_k = 0, pp_iters = 0;
    bool pp_k_set = false, pp_iters_set = false;
    std::vector<std::string> pred_paths, gt_paths;

    auto add_seed = [&](CLI::App* cmd) {
        cmd->add_option("--seed", seed, "override the config seed")
            ->each([&](const std::string&) { seed_set = true; });
    };

    CLI::App* gen = app.add_subcommand("gen-data", "generate artificial training samples");
    gen->add_option("--config", config_path, "run configuration file");
    gen->add_option("--count", count, "number of samples")->check(CLI::PositiveNumber);
    gen->add_option("--out", out_path, "output container path")->required();
    add_seed(gen);

    CLI::App* train = app.add_subcommand("train", "fine-tune on generated samples");
    train->add_option("--config", config_path, "run configuration file");
    train->add_option("--data", data_path, "gen-data container")->required();
    train->add_option("--out", ckpt_path, "output checkpoint path")->required();
    add_seed(train);

    CLI::App* infer = app.add_subcommand("infer", "segment a stored sample or a raster image");
    infer->add_option("--config", config_path, "run configuration file");
    infer->add_option("--checkpoint", ckpt_path, "trained checkpoint")->required();
    infer->add_option("--data", data_path, "gen-data container (sample input)");
    infer->add_option("--sample", sample_index, "sample index within --data");
    infer->add_option("--image", image_path, "PGM/PPM image input");
    infer->add_option("--out-mask", out_path, "output mask (PGM)")->required();
    infer->add_option("--out-probs", probs_path, "output probability container");
    infer->add_option("--out-features", features_path, "output feature container");
    infer->add_option("--out-h", out_h, "upsample target height");
    infer->add_option("--out-w", out_w, "upsample target width");
    add_seed(infer);

    CLI::App* post = app.add_subcommand("postprocess", "KNN probability smoothing");
    post->add_option("--config", config_path, "run configuration file");
    post->add_option("--probs", probs_path, "probability container")->required();
    post->add_option("--features", features_path, "feature container")->required();
    post->add_option("--out", out_path, "output probability container")->required();
    post->add_option("--k", pp_k, "neighbor count")->each([&](const std::string&) { pp_k_set = true; });
    post->add_option("--iterations", pp_iters, "averaging iterations")
        ->each([&](const std::string&) { pp_iters_set = true; });

    CLI::App* ev = app.add_subcommand("eval", "mIoU of predictions against ground truth");
    ev->add_option("--pred", pred_paths, "prediction mask(s)")->required();
    ev->add_option("--gt", gt_paths, "ground-truth mask(s)")->required();
    ev->add_option("--classes", classes, "number of classes (default: max label + 1)");
    ev->add_option("--unseen", unseen_path, "file listing unseen class indices (for hIoU)");
    ev->add_option("--out", out_path, "write the report here as well");

    CLI::App* pc = app.add_subcommand("print-config", "echo the effective configuration");
    pc->add_option("--config", config_path, "run configuration file");
    add_seed(pc);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            ifseg::RunSetup setup = ifseg::setup_run(load_run_config(config_path, seed_set, seed));
            ifseg::run_gen_data(setup, count, out_path);
            std::printf("samples=%u out=%s\n", count, out_path.c_str());
        } else if (train->parsed()) {
            ifseg::RunSetup setup = ifseg::setup_run(load_run_config(config_path, seed_set, seed));
            const double loss = ifseg::run_train(setup, data_path, ckpt_path);
            std::printf("final_loss=%.6f checkpoint=%s\n", loss, ckpt_path.c_str());
        } else if (infer->parsed()) {
            if (data_path.empty() == image_path.empty())
                ifseg::fail_usage("infer: give exactly one of --data or --image");
            ifseg::RunSetup setup = ifseg::setup_run(load_run_config(config_path, seed_set, seed));
            ifseg::load_checkpoint(setup, ckpt_path);
            ifseg::InferOutputs out{out_path, probs_path, features_path, out_h, out_w};
            if (!data_path.empty())
                ifseg::run_infer_sample(setup, data_path, sample_index, out);
            else
                ifseg::run_infer_image(setup, image_path, out);
            std::printf("mask=%s\n", out_path.c_str());
        } else if (post->parsed()) {
            ifseg::PostprocessConfig pp;
            if (!config_path.empty()) {
                const ifseg::RunConfig cfg = ifseg::load_config(config_path);
                pp.k = cfg.k;
                pp.iterations = cfg.iterations;
            }
            if (pp_k_set) pp.k = pp_k;
            if (pp_iters_set) pp.iterations = pp_iters;
            ifseg::run_postprocess(probs_path, features_path, out_path, pp);
            std::printf("out=%s\n", out_path.c_str());
        } else if (ev->parsed()) {
            const std::string report = ifseg::run_eval(pred_paths, gt_paths, classes, unseen_path);
            std::fputs(report.c_str(), stdout);
            if (!out_path.empty()) {
                std::FILE* f = std::fopen(out_path.c_str(), "w");
                if (!f) ifseg::fail_data("eval: cannot open '" + out_path + "' for writing");
                std::fputs(report.c_str(), f);
                std::fclose(f);
            }
        } else if (pc->parsed()) {
            const ifseg::RunConfig cfg = load_run_config(config_path, seed_set, seed);
            std::fputs(ifseg::render_config(cfg).c_str(), stdout);
        }
    } catch (const ifseg::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        switch (e.kind()) {
            case ifseg::ErrorKind::Usage: return 1;
            case ifseg::ErrorKind::Data: return 2;
            case ifseg::ErrorKind::Numeric: return 3;
        }
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
