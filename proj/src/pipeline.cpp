#include "ifseg/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "ifseg/backbone.hpp"
#include "ifseg/error.hpp"
#include "ifseg/eval.hpp"
#include "ifseg/pnm.hpp"

namespace ifseg {

std::uint64_t seed_for_embeddings(std::uint64_t base) { return derive_seed(base, 1); }
std::uint64_t seed_for_model(std::uint64_t base) { return derive_seed(base, 2); }
std::uint64_t seed_for_data(std::uint64_t base) { return derive_seed(base, 3); }
std::uint64_t seed_for_backbone(std::uint64_t base) { return derive_seed(base, 4); }

namespace {

std::string sample_section(const char* kind, std::uint32_t index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s/%06u", kind, index);
    return buf;
}

// Hierarchy file: one coarse category per line, "coarse: fine1, fine2, ...".
struct HierarchySpec {
    std::vector<std::string> coarse;
    std::vector<std::vector<std::string>> fine;
};

HierarchySpec load_hierarchy_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) fail_data("hierarchy: cannot open '" + path + "'");
    HierarchySpec spec;
    std::string line;
    while (std::getline(f, line)) {
        std::string t = normalize_text(line);
        if (t.empty() || t[0] == '#') continue;
        const std::size_t colon = t.find(':');
        require_data(colon != std::string::npos, "hierarchy: line '" + t + "' lacks ':'");
        std::string coarse = normalize_text(t.substr(0, colon));
        require_data(!coarse.empty(), "hierarchy: empty coarse name");
        std::vector<std::string> fines;
        std::stringstream rest(t.substr(colon + 1));
        std::string item;
        while (std::getline(rest, item, ',')) {
            std::string name = normalize_text(item);
            if (!name.empty()) fines.push_back(name);
        }
        require_data(!fines.empty(), "hierarchy: coarse '" + coarse + "' lists no fine categories");
        spec.coarse.push_back(std::move(coarse));
        spec.fine.push_back(std::move(fines));
    }
    require_data(!spec.coarse.empty(), "hierarchy: '" + path + "' lists no categories");
    return spec;
}

std::vector<std::string> synthesized_names(std::uint32_t m) {
    std::vector<std::string> names;
    names.reserve(m);
    for (std::uint32_t i = 0; i < m; ++i) names.push_back("cat" + std::to_string(i));
    return names;
}

MatD backbone_projection(const RunConfig& cfg, std::size_t in_dim, std::vector<double>& bias) {
    MatD w(in_dim, cfg.dim);
    Rng rng(derive_seed(seed_for_backbone(cfg.seed), in_dim));
    for (double& v : w.data) v = rng.next_trunc_normal(0.02);
    bias.assign(cfg.dim, 0.0);
    return w;
}

void write_probs_container(const ProbabilityMap& p, const std::string& path) {
    TensorContainer c;
    Tensor t = Tensor::from_f64({static_cast<std::uint32_t>(p.h), static_cast<std::uint32_t>(p.w),
                                 static_cast<std::uint32_t>(p.probs.cols)},
                                std::vector<double>(p.probs.data.begin(), p.probs.data.end()));
    c.add("probs", std::move(t));
    write_container(c, path);
}

ProbabilityMap read_probs_container(const std::string& path) {
    const TensorContainer c = read_container(path);
    const Tensor& t = c.get("probs");
    require_data(t.dims.size() == 3, "postprocess: 'probs' must have dims [h, w, m]");
    ProbabilityMap p;
    p.h = t.dims[0];
    p.w = t.dims[1];
    p.probs = t.to_mat(static_cast<std::size_t>(t.dims[0]) * t.dims[1], t.dims[2]);
    return p;
}

void write_features_container(const FeatureMap& fm, const std::string& path) {
    TensorContainer c;
    Tensor t = Tensor::from_f64({static_cast<std::uint32_t>(fm.h), static_cast<std::uint32_t>(fm.w),
                                 static_cast<std::uint32_t>(fm.rows.cols)},
                                std::vector<double>(fm.rows.data.begin(), fm.rows.data.end()));
    c.add("features", std::move(t));
    write_container(c, path);
}

FeatureMap read_features_container(const std::string& path) {
    const TensorContainer c = read_container(path);
    const Tensor& t = c.get("features");
    require_data(t.dims.size() == 3, "postprocess: 'features' must have dims [h, w, c]");
    FeatureMap fm;
    fm.h = t.dims[0];
    fm.w = t.dims[1];
    fm.rows = t.to_mat(static_cast<std::size_t>(t.dims[0]) * t.dims[1], t.dims[2]);
    return fm;
}

}  // namespace

RunSetup setup_run(const RunConfig& cfg) {
    cfg.validate();
    RunSetup s;
    s.cfg = cfg;
    s.vocab = cfg.vocab.empty() ? Vocabulary::builtin() : Vocabulary::from_file(cfg.vocab);
    s.emb = EmbeddingMatrix::random(s.vocab.size(), cfg.dim, seed_for_embeddings(cfg.seed));

    if (!cfg.hierarchy.empty()) {
        require_data(cfg.categories.empty(), "setup: 'hierarchy' and 'categories' are exclusive");
        HierarchySpec spec = load_hierarchy_file(cfg.hierarchy);
        s.cats = register_categories(spec.coarse, s.vocab, s.emb);
        // Fine words are registered once (they may repeat across coarse
        // categories) and referenced by embedding row.
        std::vector<std::string> unique_fine;
        std::map<std::string, std::size_t> fine_index;
        for (const auto& list : spec.fine)
            for (const auto& name : list)
                if (fine_index.emplace(name, 0).second) unique_fine.push_back(name);
        SegCategorySet fine_cats = register_categories(unique_fine, s.vocab, s.emb);
        for (std::size_t i = 0; i < unique_fine.size(); ++i)
            fine_index[unique_fine[i]] = i;
        std::vector<std::vector<TokenId>> mapping(spec.coarse.size());
        for (std::size_t c = 0; c < spec.fine.size(); ++c)
            for (const auto& name : spec.fine[c])
                mapping[c].push_back(fine_cats.merged_ids[fine_index[name]]);
        s.hierarchy = CategoryHierarchy::from_mapping(mapping);
    } else if (!cfg.categories.empty()) {
        s.cats = register_categories(load_category_names(cfg.categories), s.vocab, s.emb);
    } else {
        s.cats = register_categories(synthesized_names(cfg.m), s.vocab, s.emb);
    }
    require_data(s.cats.count() < kIgnoreLabel,
                 "setup: at most 254 categories fit the mask format");

    s.prompt = build_prompt(s.cats, s.vocab);
    s.mcfg.dim = cfg.dim;
    s.mcfg.n_layers_enc = cfg.n_layers_enc;
    s.mcfg.n_layers_dec = cfg.n_layers_dec;
    s.mcfg.n_heads = cfg.n_heads;
    s.mcfg.l_img = static_cast<std::size_t>(cfg.h) * cfg.w;
    s.mcfg.ffn_mult = cfg.ffn_mult;
    if (cfg.l_t_max == 0) {
        s.mcfg.l_txt_max = s.prompt.size();
    } else {
        require_data(cfg.l_t_max >= s.prompt.size(),
                     "setup: l_t_max smaller than the prompt (" +
                         std::to_string(s.prompt.size()) + " tokens)");
        s.mcfg.l_txt_max = cfg.l_t_max;
    }
    s.mcfg.validate();
    s.params = init_params<float>(s.mcfg, seed_for_model(cfg.seed));
    s.emb_train = Mat<float>(s.emb.total(), s.emb.dim());
    for (std::size_t i = 0; i < s.emb.rows.data.size(); ++i)
        s.emb_train.data[i] = static_cast<float>(s.emb.rows.data[i]);
    return s;
}

TrainItem<float> make_train_item(const TrainingPair& pair) {
    TrainItem<float> item;
    item.tokens = Mat<float>(pair.tokens.rows, pair.tokens.cols);
    for (std::size_t i = 0; i < pair.tokens.data.size(); ++i)
        item.tokens.data[i] = static_cast<float>(pair.tokens.data[i]);
    item.targets = pair.targets;
    return item;
}

TrainingPair draw_training_pair(const RunSetup& setup, std::uint64_t data_seed,
                                std::uint64_t sample_index) {
    const std::uint64_t seed = derive_seed(data_seed, sample_index);
    if (setup.hierarchy) {
        HierarchicalSample hs = hierarchical_sample(setup.grid_spec(), *setup.hierarchy, seed);
        return to_training_pair(hs, setup.emb);
    }
    GridSample gs = sample_grid(setup.grid_spec(), static_cast<std::uint32_t>(setup.cats.count()),
                                seed);
    return to_training_pair(gs, setup.emb, setup.cats);
}

void run_gen_data(const RunSetup& setup, std::uint32_t count, const std::string& out_path) {
    require_data(count >= 1, "gen-data: count must be >= 1");
    const std::uint64_t data_seed = seed_for_data(setup.cfg.seed);
    TensorContainer c;
    c.add("meta", Tensor::from_u32({5}, {count, setup.cfg.h, setup.cfg.w, setup.cfg.dim,
                                         static_cast<std::uint32_t>(setup.cats.count())}));
    for (std::uint32_t i = 0; i < count; ++i) {
        TrainingPair pair = draw_training_pair(setup, data_seed, i);
        const std::uint32_t len = static_cast<std::uint32_t>(pair.targets.size());
        c.add(sample_section("tokens", i), Tensor::from_mat_f32(pair.tokens));
        c.add(sample_section("targets", i), Tensor::from_u32({len}, std::move(pair.targets)));
    }
    write_container(c, out_path);
}

Dataset load_dataset(const RunSetup& setup, const std::string& path) {
    const TensorContainer c = read_container(path);
    const auto& meta = c.get("meta").u32();
    require_data(meta.size() == 5, "dataset: malformed meta section");
    Dataset ds;
    ds.count = meta[0];
    require_data(meta[1] == setup.cfg.h && meta[2] == setup.cfg.w,
                 "dataset: grid size does not match config");
    require_data(meta[3] == setup.cfg.dim, "dataset: embedding width does not match config");
    require_data(meta[4] == setup.cats.count(), "dataset: category count does not match config");
    const std::size_t l = setup.mcfg.l_img;
    ds.items.reserve(ds.count);
    for (std::uint32_t i = 0; i < ds.count; ++i) {
        TrainItem<double> item;
        item.tokens = c.get(sample_section("tokens", i)).to_mat(l, setup.cfg.dim);
        item.targets = c.get(sample_section("targets", i)).u32();
        require_data(item.targets.size() == l, "dataset: target length mismatch");
        ds.items.push_back(std::move(item));
    }
    return ds;
}

double run_train(RunSetup& setup, const std::string& data_path, const std::string& ckpt_path,
                 bool quiet) {
    Dataset ds = load_dataset(setup, data_path);
    require_data(ds.count >= 1, "train: empty dataset");
    const RunConfig& cfg = setup.cfg;
    OptimizerConfig oc{cfg.lr, cfg.weight_decay, cfg.beta1, cfg.beta2, cfg.eps};

    const auto t0 = std::chrono::steady_clock::now();
    double loss = 0.0;
    std::size_t cursor = 0;
    std::vector<TrainItem<double>> batch;
    for (std::uint32_t step = 0; step < cfg.steps; ++step) {
        batch.clear();
        for (std::uint32_t b = 0; b < cfg.batch_size; ++b) {
            batch.push_back(ds.items[cursor]);
            cursor = (cursor + 1) % ds.items.size();
        }
        loss = train_step<double>(batch, setup.params, setup.emb.rows, setup.prompt,
                                  setup.cats.merged_ids, oc, setup.opt, setup.mcfg);
        setup.step += 1;
        if (!quiet && cfg.log_every > 0 &&
            ((step + 1) % cfg.log_every == 0 || step + 1 == cfg.steps)) {
            const double secs =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            const double tokens =
                static_cast<double>(step + 1) * cfg.batch_size * setup.mcfg.l_img;
            std::printf("step=%u loss=%.6f tokens_per_s=%.0f\n", step + 1, loss,
                        secs > 0 ? tokens / secs : 0.0);
            std::fflush(stdout);
        }
    }
    if (!ckpt_path.empty()) save_checkpoint(setup, ckpt_path);
    return loss;
}

void save_checkpoint(RunSetup& setup, const std::string& path) {
    TensorContainer c;
    const ModelConfig& m = setup.mcfg;
    c.add("meta", Tensor::from_u32(
                      {14}, {1u, static_cast<std::uint32_t>(m.dim),
                             static_cast<std::uint32_t>(m.n_layers_enc),
                             static_cast<std::uint32_t>(m.n_layers_dec),
                             static_cast<std::uint32_t>(m.n_heads),
                             static_cast<std::uint32_t>(m.ffn_mult),
                             static_cast<std::uint32_t>(m.l_img),
                             static_cast<std::uint32_t>(m.l_txt_max),
                             static_cast<std::uint32_t>(setup.cats.count()),
                             static_cast<std::uint32_t>(setup.emb.total()),
                             static_cast<std::uint32_t>(setup.emb.base_count), setup.cfg.h,
                             setup.cfg.w, setup.step}));
    const auto refs = collect_tensors<double>(setup.params, setup.emb.rows);
    for (const auto& r : refs)
        c.add(r.name, Tensor::from_f64({static_cast<std::uint32_t>(r.size)},
                                       std::vector<double>(r.data, r.data + r.size)));
    c.add("adam.m", Tensor::from_f64({static_cast<std::uint32_t>(setup.opt.m.size())},
                                     std::vector<double>(setup.opt.m)));
    c.add("adam.v", Tensor::from_f64({static_cast<std::uint32_t>(setup.opt.v.size())},
                                     std::vector<double>(setup.opt.v)));
    c.add("adam.t", Tensor::from_u32({1}, {static_cast<std::uint32_t>(setup.opt.t)}));
    c.add("cats.merged_ids", Tensor::from_u32({static_cast<std::uint32_t>(setup.cats.count())},
                                              setup.cats.merged_ids));
    c.add("prompt.ids",
          Tensor::from_u32({static_cast<std::uint32_t>(setup.prompt.size())}, setup.prompt));
    write_container(c, path);
}

void load_checkpoint(RunSetup& setup, const std::string& path) {
    const TensorContainer c = read_container(path);
    const auto& meta = c.get("meta").u32();
    require_data(meta.size() == 14 && meta[0] == 1, "checkpoint: unsupported meta section");
    const ModelConfig& m = setup.mcfg;
    require_data(meta[1] == m.dim && meta[2] == m.n_layers_enc && meta[3] == m.n_layers_dec &&
                     meta[4] == m.n_heads && meta[5] == m.ffn_mult && meta[6] == m.l_img &&
                     meta[7] == m.l_txt_max,
                 "checkpoint: model shape does not match config");
    require_data(meta[8] == setup.cats.count() && meta[9] == setup.emb.total() &&
                     meta[10] == setup.emb.base_count,
                 "checkpoint: category/embedding layout does not match config");
    require_data(meta[11] == setup.cfg.h && meta[12] == setup.cfg.w,
                 "checkpoint: grid size does not match config");
    require_data(c.get("cats.merged_ids").u32() == setup.cats.merged_ids,
                 "checkpoint: merged category ids disagree with config");
    require_data(c.get("prompt.ids").u32() == setup.prompt,
                 "checkpoint: prompt tokens disagree with config");
    setup.step = meta[13];

    const auto refs = collect_tensors<double>(setup.params, setup.emb.rows);
    for (const auto& r : refs) {
        const auto& v = c.get(r.name).f64();
        require_data(v.size() == r.size, "checkpoint: section '" + r.name + "' has wrong size");
        std::copy(v.begin(), v.end(), r.data);
    }
    const auto& am = c.get("adam.m").f64();
    const auto& av = c.get("adam.v").f64();
    setup.opt.m.assign(am.begin(), am.end());
    setup.opt.v.assign(av.begin(), av.end());
    setup.opt.t = c.get("adam.t").u32()[0];
}

ProbabilityMap infer_probs(const RunSetup& setup, const MatD& image_tokens) {
    const Mat<double> e_x =
        build_encoder_input(image_tokens, setup.prompt, setup.emb.rows, setup.params, setup.mcfg);
    const Mat<double> ctx = encode(e_x, setup.params, setup.mcfg);
    const Mat<double> h = decode_spatial(ctx, setup.params, setup.mcfg);
    const Mat<double> logits = output_logits(h, setup.emb.rows);
    return masked_probs(logits, setup.cats, setup.cfg.h, setup.cfg.w);
}

namespace {

void emit_infer_outputs(const RunSetup& setup, const ProbabilityMap& probs,
                        const FeatureMap* features, const InferOutputs& out) {
    const std::size_t oh = out.out_h ? out.out_h : probs.h;
    const std::size_t ow = out.out_w ? out.out_w : probs.w;
    const ProbabilityMap up = bilinear_upsample(probs, oh, ow);
    const SegmentationMask mask = predict(up);
    write_mask(mask, setup.cats.names, out.mask_path);
    if (!out.probs_path.empty()) write_probs_container(up, out.probs_path);
    if (!out.features_path.empty()) {
        require_data(features != nullptr, "infer: no features available for this input");
        write_features_container(*features, out.features_path);
    }
}

}  // namespace

void run_infer_sample(const RunSetup& setup, const std::string& data_path, std::uint32_t index,
                      const InferOutputs& out) {
    const TensorContainer c = read_container(data_path);
    const auto& meta = c.get("meta").u32();
    require_data(meta.size() == 5, "infer: malformed meta section");
    require_data(index < meta[0], "infer: sample index out of range");
    require_data(meta[1] == setup.cfg.h && meta[2] == setup.cfg.w && meta[3] == setup.cfg.dim,
                 "infer: dataset does not match config");
    const MatD tokens = c.get(sample_section("tokens", index)).to_mat(setup.mcfg.l_img,
                                                                      setup.cfg.dim);
    // the artificial tokens double as backbone features for post-processing
    FeatureMap fm;
    fm.h = setup.cfg.h;
    fm.w = setup.cfg.w;
    fm.rows = tokens;
    const ProbabilityMap probs = infer_probs(setup, tokens);
    emit_infer_outputs(setup, probs, &fm, out);
}

void run_infer_image(const RunSetup& setup, const std::string& image_path,
                     const InferOutputs& out) {
    const RasterImage img = read_pnm(image_path);
    const FeatureMap fm = patchify(img, setup.cfg.patch_size);
    require_data(fm.h == setup.cfg.h && fm.w == setup.cfg.w,
                 "infer: image yields a " + std::to_string(fm.h) + "x" + std::to_string(fm.w) +
                     " patch grid but the model expects " + std::to_string(setup.cfg.h) + "x" +
                     std::to_string(setup.cfg.w) + " (resize the image to " +
                     std::to_string(setup.cfg.h * setup.cfg.patch_size) + "x" +
                     std::to_string(setup.cfg.w * setup.cfg.patch_size) + ")");
    std::vector<double> bias;
    const MatD proj = backbone_projection(setup.cfg, fm.rows.cols, bias);
    const MatD tokens = project(fm, proj, bias);
    const ProbabilityMap probs = infer_probs(setup, tokens);
    InferOutputs o = out;
    if (o.out_h == 0) o.out_h = img.height;
    if (o.out_w == 0) o.out_w = img.width;
    emit_infer_outputs(setup, probs, &fm, o);
}

void run_postprocess(const std::string& probs_path, const std::string& features_path,
                     const std::string& out_path, const PostprocessConfig& pp) {
    const ProbabilityMap probs = read_probs_container(probs_path);
    const FeatureMap fm = read_features_container(features_path);
    require_data(fm.rows.rows == probs.probs.rows,
                 "postprocess: probability and feature grids disagree");
    const NeighborGraph g = knn_graph(fm, pp.k);
    const ProbabilityMap smoothed = smooth(probs, g, pp.iterations);
    write_probs_container(smoothed, out_path);
}

std::string run_eval(const std::vector<std::string>& pred_paths,
                     const std::vector<std::string>& gt_paths, std::uint32_t classes,
                     const std::string& unseen_path) {
    require_data(!pred_paths.empty(), "eval: no prediction masks given");
    require_data(pred_paths.size() == gt_paths.size(),
                 "eval: prediction and ground-truth counts disagree");
    std::vector<SegmentationMask> preds, gts;
    std::uint32_t max_label = 0;
    for (std::size_t i = 0; i < pred_paths.size(); ++i) {
        preds.push_back(read_mask(pred_paths[i]));
        gts.push_back(read_mask(gt_paths[i]));
        for (std::uint8_t v : preds.back().labels)
            if (v != kIgnoreLabel) max_label = std::max<std::uint32_t>(max_label, v);
        for (std::uint8_t v : gts.back().labels)
            if (v != kIgnoreLabel) max_label = std::max<std::uint32_t>(max_label, v);
    }
    const std::uint32_t m = classes ? classes : max_label + 1;
    ConfusionMatrix cm(m);
    for (std::size_t i = 0; i < preds.size(); ++i) accumulate(cm, preds[i], gts[i]);

    std::ostringstream out;
    const std::vector<double> ious = per_class_iou(cm);
    for (std::size_t cidx = 0; cidx < ious.size(); ++cidx) {
        out << "class_iou/" << cidx << "=";
        if (ious[cidx] < 0.0) out << "undefined";
        else out << ious[cidx];
        out << "\n";
    }
    out << "pixels=" << cm.total << "\n";
    out << "miou=" << miou(cm) << "\n";
    if (!unseen_path.empty()) {
        std::ifstream f(unseen_path);
        if (!f) fail_data("eval: cannot open '" + unseen_path + "'");
        std::vector<std::uint32_t> unseen;
        std::string line;
        while (std::getline(f, line)) {
            const std::string t = line.substr(0, line.find('#'));
            std::stringstream ss(t);
            std::uint32_t v;
            while (ss >> v) unseen.push_back(v);
        }
        out << "hiou=" << hiou(cm, unseen) << "\n";
    }
    return out.str();
}

}  // namespace ifseg
