#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ifseg/error.hpp"
#include "ifseg/eval.hpp"
#include "ifseg/pipeline.hpp"
#include "ifseg/postproc.hpp"
#include "oracles.hpp"

using namespace ifseg;

namespace {

namespace fs = std::filesystem;

void report(int criterion, const char* name, bool ok) {
    std::printf("[acceptance] criterion %d (%s): %s\n", criterion, name, ok ? "PASS" : "FAIL");
    std::fflush(stdout);
}

struct TempDir {
    fs::path path;
    explicit TempDir(const char* name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const char* f) const { return (path / f).string(); }
};

std::vector<std::uint8_t> file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(f)),
                                     std::istreambuf_iterator<char>());
}

template <typename T>
void fill_uniform(Mat<T>& m, Rng& rng, double scale) {
    for (T& v : m.data) v = T(scale * (2.0 * rng.next_unit() - 1.0));
}

template <typename T>
void randomize_params(ModelParams<T>& p, Mat<T>* emb, std::uint64_t seed, double scale) {
    Rng rng(seed);
    Mat<T> dummy(1, 1);
    auto refs = collect_tensors(p, emb ? *emb : dummy);
    for (auto& r : refs) {
        const bool is_ln_scale = r.name.find(".gamma") != std::string::npos;
        for (std::size_t i = 0; i < r.size; ++i) {
            const double u = 2.0 * rng.next_unit() - 1.0;
            r.data[i] = T(is_ln_scale ? 1.0 + 0.2 * u : scale * u);
        }
    }
}

ProbabilityMap random_simplex(std::size_t n, std::size_t m, Rng& rng) {
    ProbabilityMap p;
    p.h = n;
    p.w = 1;
    p.probs = MatD(n, m);
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (std::size_t c = 0; c < m; ++c) {
            p.probs.at(i, c) = -std::log(rng.next_unit() + 1e-12);
            sum += p.probs.at(i, c);
        }
        for (std::size_t c = 0; c < m; ++c) p.probs.at(i, c) /= sum;
    }
    return p;
}

double max_row_deviation_from_mean(const ProbabilityMap& p) {
    std::vector<double> mean(p.probs.cols, 0.0);
    for (std::size_t i = 0; i < p.probs.rows; ++i)
        for (std::size_t c = 0; c < p.probs.cols; ++c) mean[c] += p.probs.at(i, c);
    for (double& v : mean) v /= static_cast<double>(p.probs.rows);
    double dev = 0.0;
    for (std::size_t i = 0; i < p.probs.rows; ++i)
        for (std::size_t c = 0; c < p.probs.cols; ++c)
            dev = std::max(dev, std::abs(p.probs.at(i, c) - mean[c]));
    return dev;
}

}  // namespace

TEST_CASE("criterion 1: toy end-to-end run") {
    const auto t0 = std::chrono::steady_clock::now();
    TempDir dir("ifseg_accept_e2e");

    RunConfig cfg;
    cfg.seed = 7;
    cfg.grid_s = 8;
    cfg.h = 8;
    cfg.w = 8;
    cfg.m = 8;
    cfg.dim = 64;
    cfg.n_layers_enc = 2;
    cfg.n_layers_dec = 2;
    cfg.n_heads = 4;
    cfg.batch_size = 16;
    cfg.steps = 500;  // well under the 3000-step allowance
    cfg.lr = 2e-3;
    cfg.log_every = 0;

    RunSetup setup = setup_run(cfg);
    const std::string data = dir / "train.ifsg";
    const std::string ckpt = dir / "model.ifsg";
    run_gen_data(setup, 4096, data);
    const double final_loss = run_train(setup, data, ckpt, /*quiet=*/true);

    // held-out evaluation: fresh samples from an independent seed stream
    const std::uint64_t heldout_seed = derive_seed(cfg.seed, 424242);
    std::uint64_t correct = 0, total = 0;
    ConfusionMatrix cm(8);
    for (std::uint32_t i = 0; i < 256; ++i) {
        const TrainingPair pair = draw_training_pair(setup, heldout_seed, i);
        const ProbabilityMap probs = infer_probs(setup, pair.tokens);
        const SegmentationMask pred = predict(probs);
        SegmentationMask gt;
        gt.h = cfg.h;
        gt.w = cfg.w;
        gt.labels.assign(pair.targets.begin(), pair.targets.end());
        accumulate(cm, pred, gt);
        for (std::size_t k = 0; k < pair.targets.size(); ++k) {
            correct += (pred.labels[k] == pair.targets[k]);
            ++total;
        }
    }
    const double accuracy = static_cast<double>(correct) / static_cast<double>(total);
    const double score = miou(cm);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::printf("  e2e: steps=%u final_loss=%.5f token_accuracy=%.5f miou=%.5f elapsed=%.1fs\n",
                cfg.steps, final_loss, accuracy, score, secs);
    const bool ok = accuracy >= 0.99 && score >= 0.97 && secs < 300.0;
    report(1, "toy end-to-end run: accuracy >= 0.99, mIoU >= 0.97, < 5 min", ok);
    CHECK(accuracy >= 0.99);
    CHECK(score >= 0.97);
    CHECK(secs < 300.0);
}

namespace {

// Gradcheck over every parameter tensor of the small configuration.
template <typename T>
double gradcheck_worst(double fd_eps) {
    ModelConfig cfg;
    cfg.dim = 8;
    cfg.n_layers_enc = 1;
    cfg.n_layers_dec = 1;
    cfg.n_heads = 2;
    cfg.l_img = 4;
    cfg.l_txt_max = 4;
    const std::vector<TokenId> prompt = {0, 3, 5};
    const std::vector<TokenId> merged = {2, 7, 9};
    const std::vector<std::uint32_t> targets = {0, 2, 1, 0};

    ModelParams<T> params = init_params<T>(cfg, 1);
    Mat<T> emb(12, cfg.dim);
    Rng rng(2);
    fill_uniform(emb, rng, 0.8);
    randomize_params(params, &emb, 3, 0.4);
    Mat<T> tokens(cfg.l_img, cfg.dim);
    fill_uniform(tokens, rng, 0.8);

    Gradients<T> grads = make_gradients<T>(cfg, emb.rows, emb.cols);
    const SegForward<T> fwd = seg_forward(tokens, prompt, emb, merged, targets, params, cfg);
    seg_backward(fwd, prompt, emb, merged, targets, params, cfg, T(1), grads);

    auto prefs = collect_tensors(params, emb);
    auto grefs = collect_tensors(grads.model, grads.emb);
    double worst = 0.0;
    for (std::size_t t = 0; t < prefs.size(); ++t) {
        for (std::size_t i = 0; i < prefs[t].size; ++i) {
            T& theta = prefs[t].data[i];
            const T saved = theta;
            theta = saved + T(fd_eps);
            const double lp = static_cast<double>(
                seg_forward(tokens, prompt, emb, merged, targets, params, cfg).loss);
            theta = saved - T(fd_eps);
            const double lm = static_cast<double>(
                seg_forward(tokens, prompt, emb, merged, targets, params, cfg).loss);
            theta = saved;
            const double fd = (lp - lm) / (2.0 * fd_eps);
            const double an = static_cast<double>(grefs[t].data[i]);
            worst = std::max(worst,
                             std::abs(an - fd) / std::max({1.0, std::abs(an), std::abs(fd)}));
        }
    }
    return worst;
}

}  // namespace

TEST_CASE("criterion 2: gradient check at both precisions") {
    const double worst32 = gradcheck_worst<float>(5e-3);
    const double worst64 = gradcheck_worst<double>(1e-6);
    std::printf("  gradcheck: worst rel err float=%.3e (tol 1e-3), double=%.3e (tol 1e-5)\n",
                worst32, worst64);
    const bool ok = worst32 <= 1e-3 && worst64 <= 1e-5;
    report(2, "analytic vs central-difference gradients", ok);
    CHECK(worst32 <= 1e-3);
    CHECK(worst64 <= 1e-5);
}

TEST_CASE("criterion 3: parallel and sequential decode agree") {
    Rng meta(0xDEC0DE);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        ModelConfig cfg;
        cfg.n_heads = 1 + meta.next_below(3);
        cfg.dim = cfg.n_heads * (2 + meta.next_below(4));
        cfg.n_layers_enc = 1;
        cfg.n_layers_dec = 1 + meta.next_below(2);
        cfg.l_img = 2 + meta.next_below(6);
        cfg.l_txt_max = 1 + meta.next_below(4);
        cfg.ffn_mult = 2;
        ModelParams<float> p = init_params<float>(cfg, meta.next_u64());
        randomize_params<float>(p, nullptr, meta.next_u64(), 0.3);
        Mat<float> ctx(cfg.l_img + meta.next_below(cfg.l_txt_max + 1), cfg.dim);
        Rng rng(meta.next_u64());
        fill_uniform(ctx, rng, 1.0);
        const Mat<float> fast = decode_spatial(ctx, p, cfg);
        const Mat<float> slow = oracles::reference_decode_spatial(ctx, p, cfg);
        for (std::size_t i = 0; i < fast.data.size(); ++i)
            worst = std::max(worst,
                             std::abs(static_cast<double>(fast.data[i]) - slow.data[i]));
    }
    std::printf("  decode equivalence: max abs diff %.3e over 20 configurations\n", worst);
    const bool ok = worst <= 1e-5;
    report(3, "decode_spatial parallel vs sequential within 1e-5", ok);
    CHECK(worst <= 1e-5);
}

TEST_CASE("criterion 4: post-processing invariants") {
    Rng rng(0x5E550);
    bool simplex_ok = true;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng.next_below(40);
        const std::size_t m = 2 + rng.next_below(8);
        const std::uint32_t k = 1 + static_cast<std::uint32_t>(rng.next_below(n));
        FeatureMap fm;
        fm.h = n;
        fm.w = 1;
        fm.rows = MatD(n, 4);
        fill_uniform(fm.rows, rng, 1.0);
        for (std::size_t i = 0; i < n; ++i) fm.rows.at(i, 0) += 2.0;  // keep norms nonzero
        const ProbabilityMap out = smooth(random_simplex(n, m, rng), knn_graph(fm, k), 25);
        for (std::size_t i = 0; i < out.probs.rows && simplex_ok; ++i) {
            double sum = 0.0;
            for (std::size_t c = 0; c < m; ++c) {
                const double v = out.probs.at(i, c);
                if (v < 0.0 || v > 1.0) simplex_ok = false;
                sum += v;
            }
            if (std::abs(sum - 1.0) > 1e-6) simplex_ok = false;
        }
    }

    bool complete_ok = true;
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t n = 3 + rng.next_below(20);
        FeatureMap fm;
        fm.h = n;
        fm.w = 1;
        fm.rows = MatD(n, 3);
        fill_uniform(fm.rows, rng, 1.0);
        for (std::size_t i = 0; i < n; ++i) fm.rows.at(i, 0) += 2.0;
        const ProbabilityMap p = random_simplex(n, 5, rng);
        const ProbabilityMap one = smooth(p, knn_graph(fm, static_cast<std::uint32_t>(n)), 1);
        std::vector<double> mean(5, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < 5; ++c) mean[c] += p.probs.at(i, c) / n;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < 5; ++c)
                if (std::abs(one.probs.at(i, c) - mean[c]) > 1e-6) complete_ok = false;
    }

    bool monotone_ok = true;
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t n = 4 + rng.next_below(16);
        FeatureMap fm;  // identical rows: every similarity ties at 1
        fm.h = n;
        fm.w = 1;
        fm.rows = MatD(n, 3);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < 3; ++j) fm.rows.at(i, j) = 1.0 + 0.5 * j;
        const NeighborGraph g = knn_graph(fm, 3);
        ProbabilityMap p = random_simplex(n, 4, rng);
        double prev = max_row_deviation_from_mean(p);
        for (int it = 0; it < 25; ++it) {
            p = smooth(p, g, 1);
            const double dev = max_row_deviation_from_mean(p);
            if (dev > prev + 1e-12) monotone_ok = false;
            prev = dev;
        }
    }

    std::printf("  postproc: simplex=%d complete-graph-mean=%d monotone-deviation=%d\n",
                simplex_ok, complete_ok, monotone_ok);
    const bool ok = simplex_ok && complete_ok && monotone_ok;
    report(4, "smoothing simplex/complete-graph/deviation invariants", ok);
    CHECK(simplex_ok);
    CHECK(complete_ok);
    CHECK(monotone_ok);
}

TEST_CASE("criterion 5: oracle equivalences") {
    Rng rng(0x0AC1E5);

    bool upscale_ok = true;
    for (std::uint32_t u = 1; u <= 8 && upscale_ok; ++u)
        for (std::uint32_t v = 1; v <= 8 && upscale_ok; ++v)
            for (std::uint32_t h = 1; h <= 8 && upscale_ok; ++h)
                for (std::uint32_t w = 1; w <= 8 && upscale_ok; ++w) {
                    std::vector<std::uint32_t> coarse(u * v);
                    for (auto& c : coarse) c = static_cast<std::uint32_t>(rng.next_below(64));
                    if (nn_upscale(coarse, u, v, h, w) !=
                        oracles::nn_upscale_bruteforce(coarse, u, v, h, w))
                        upscale_ok = false;
                }

    bool knn_ok = true;
    for (int trial = 0; trial < 50 && knn_ok; ++trial) {
        const std::size_t n = 2 + rng.next_below(30);
        const std::uint32_t k = 1 + static_cast<std::uint32_t>(rng.next_below(n));
        FeatureMap fm;
        fm.h = n;
        fm.w = 1;
        fm.rows = MatD(n, 2 + rng.next_below(6));
        fill_uniform(fm.rows, rng, 1.0);
        for (std::size_t i = 0; i < n; ++i) fm.rows.at(i, 0) += 2.0;
        const NeighborGraph g = knn_graph(fm, k);
        const auto oracle = oracles::knn_bruteforce(fm.rows, k);
        for (std::size_t i = 0; i < n; ++i)
            if (g.neighbors[i] != oracle[i]) knn_ok = false;
    }

    bool miou_ok = true;
    for (int trial = 0; trial < 1000 && miou_ok; ++trial) {
        const std::size_t m = 2 + rng.next_below(5);
        SegmentationMask pred, gt;
        pred.h = gt.h = 8;
        pred.w = gt.w = 8;
        pred.labels.resize(64);
        gt.labels.resize(64);
        for (std::size_t i = 0; i < 64; ++i) {
            pred.labels[i] = static_cast<std::uint8_t>(rng.next_below(m));
            gt.labels[i] = (rng.next_below(8) == 0)
                               ? kIgnoreLabel
                               : static_cast<std::uint8_t>(rng.next_below(m));
        }
        ConfusionMatrix cm(m);
        accumulate(cm, pred, gt);
        // per-pixel counting oracle, integers throughout
        std::vector<std::uint64_t> counts(m * m, 0);
        for (std::size_t i = 0; i < 64; ++i)
            if (gt.labels[i] != kIgnoreLabel) counts[gt.labels[i] * m + pred.labels[i]]++;
        if (cm.counts != counts) miou_ok = false;
        double sum = 0.0;
        std::size_t classes = 0;
        for (std::size_t c = 0; c < m; ++c) {
            std::uint64_t row = 0, col = 0;
            for (std::size_t j = 0; j < m; ++j) {
                row += counts[c * m + j];
                col += counts[j * m + c];
            }
            const std::uint64_t uni = row + col - counts[c * m + c];
            if (uni > 0) {
                sum += static_cast<double>(counts[c * m + c]) / static_cast<double>(uni);
                ++classes;
            }
        }
        if (classes == 0) continue;
        if (miou(cm) != sum / static_cast<double>(classes)) miou_ok = false;
    }

    bool softmax_ok = true;
    for (int trial = 0; trial < 50 && softmax_ok; ++trial) {
        const std::size_t n_cols = 6 + rng.next_below(10);
        const std::size_t m = 2 + rng.next_below(4);
        MatD logits(4, n_cols);
        fill_uniform(logits, rng, 3.0);
        SegCategorySet cats;
        std::vector<TokenId> cols;
        for (std::size_t c = 0; c < m; ++c) {
            cats.names.push_back("c" + std::to_string(c));
            const TokenId id = static_cast<TokenId>((c * 7 + 1) % n_cols);
            if (std::count(cols.begin(), cols.end(), id)) continue;
            cols.push_back(id);
        }
        cats.merged_ids = cols;
        cats.names.resize(cols.size());
        cats.subtoken_ids.assign(cols.size(), {0});
        const ProbabilityMap p = masked_probs(logits, cats, 2, 2);
        for (std::size_t i = 0; i < 4; ++i) {
            std::vector<double> row(logits.row(i), logits.row(i) + n_cols);
            const auto expect = oracles::masked_softmax_row(row, cols);
            for (std::size_t c = 0; c < cols.size(); ++c)
                if (std::abs(p.probs.at(i, c) - expect[c]) > 1e-6) softmax_ok = false;
        }
    }

    std::printf("  oracles: nn_upscale=%d knn=%d miou=%d masked_softmax=%d\n", upscale_ok, knn_ok,
                miou_ok, softmax_ok);
    const bool ok = upscale_ok && knn_ok && miou_ok && softmax_ok;
    report(5, "nn_upscale/KNN/mIoU/masked-softmax oracle equivalences", ok);
    CHECK(upscale_ok);
    CHECK(knn_ok);
    CHECK(miou_ok);
    CHECK(softmax_ok);
}

TEST_CASE("criterion 6: bilinear interpolation correctness") {
    bool constant_ok = true;
    {
        ProbabilityMap p;
        p.h = 3;
        p.w = 4;
        p.probs = MatD(12, 3);
        for (std::size_t i = 0; i < 12; ++i) {
            p.probs.at(i, 0) = 0.625;
            p.probs.at(i, 1) = 0.25;
            p.probs.at(i, 2) = 0.125;
        }
        for (std::size_t oh : {1, 2, 5, 9})
            for (std::size_t ow : {1, 3, 7, 11}) {
                const ProbabilityMap up = bilinear_upsample(p, oh, ow);
                for (std::size_t i = 0; i < up.probs.rows; ++i)
                    if (up.probs.at(i, 0) != 0.625 || up.probs.at(i, 1) != 0.25 ||
                        up.probs.at(i, 2) != 0.125)
                        constant_ok = false;
            }
    }

    bool hand_ok = true;
    {
        ProbabilityMap p;
        p.h = 1;
        p.w = 2;
        p.probs = MatD(2, 2);
        p.probs.at(0, 0) = 1.0;
        p.probs.at(1, 1) = 1.0;
        const ProbabilityMap up = bilinear_upsample(p, 1, 4);
        const double expect[4] = {1.0, 0.75, 0.25, 0.0};
        for (std::size_t d = 0; d < 4; ++d)
            if (std::abs(up.probs.at(d, 0) - expect[d]) > 1e-9) hand_ok = false;
    }

    bool identity_ok = true;
    {
        Rng rng(0xB111);
        const ProbabilityMap p = random_simplex(20, 5, rng);
        ProbabilityMap q = p;
        q.h = 4;
        q.w = 5;
        const ProbabilityMap up = bilinear_upsample(q, 4, 5);
        for (std::size_t i = 0; i < p.probs.data.size(); ++i)
            if (std::abs(up.probs.data[i] - q.probs.data[i]) > 1e-12) identity_ok = false;
    }

    std::printf("  bilinear: constant=%d hand-case=%d identity=%d\n", constant_ok, hand_ok,
                identity_ok);
    const bool ok = constant_ok && hand_ok && identity_ok;
    report(6, "bilinear constant/hand-derived/identity cases", ok);
    CHECK(constant_ok);
    CHECK(hand_ok);
    CHECK(identity_ok);
}

TEST_CASE("criterion 7: sampling statistics") {
    ArtificialGridSpec spec{4, 2, 2};
    std::vector<std::uint64_t> counts(16, 0);
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const GridSample s = sample_grid(spec, 3, derive_seed(0xC0FFEE, i));
        counts[(s.u - 1) * 4 + (s.v - 1)]++;
    }
    const double expect = n / 16.0;
    double chi2 = 0.0;
    for (std::uint64_t c : counts) {
        const double d = static_cast<double>(c) - expect;
        chi2 += d * d / expect;
    }
    // chi-square critical value, 15 degrees of freedom, alpha = 0.001
    const double critical = 37.697;
    const bool chi_ok = chi2 < critical;

    bool member_ok = true;
    const CategoryHierarchy hier =
        CategoryHierarchy::from_mapping({{10, 11, 12}, {20}, {30, 31}, {40, 41, 42, 43}});
    std::size_t cells = 0;
    for (std::uint64_t seed = 0; cells < 10000; ++seed) {
        const HierarchicalSample s = hierarchical_sample({6, 8, 8}, hier, seed);
        for (std::size_t k = 0; k < s.target_map.size(); ++k) {
            const auto& options = hier.fine_rows[s.target_map[k]];
            if (!std::count(options.begin(), options.end(), s.token_rows[k])) member_ok = false;
        }
        cells += s.target_map.size();
    }

    std::printf("  sampling: chi2=%.2f (critical %.3f, df=15) hierarchy-membership=%d\n", chi2,
                critical, member_ok);
    const bool ok = chi_ok && member_ok;
    report(7, "grid-size chi-square and hierarchical membership", ok);
    CHECK(chi_ok);
    CHECK(member_ok);
}

TEST_CASE("criterion 8: pipeline determinism") {
    TempDir dir("ifseg_accept_det");
    RunConfig cfg;
    cfg.seed = 99;
    cfg.grid_s = 4;
    cfg.h = 4;
    cfg.w = 4;
    cfg.m = 4;
    cfg.dim = 32;
    cfg.n_layers_enc = 1;
    cfg.n_layers_dec = 1;
    cfg.n_heads = 4;
    cfg.batch_size = 8;
    cfg.steps = 30;
    cfg.log_every = 0;

    auto run_once = [&](const char* tag) {
        const std::string base = std::string(tag);
        const std::string data = dir / (base + "-data.ifsg").c_str();
        const std::string ckpt = dir / (base + "-ckpt.ifsg").c_str();
        const std::string mask = dir / (base + "-mask.pgm").c_str();
        RunSetup setup = setup_run(cfg);
        run_gen_data(setup, 32, data);
        run_train(setup, data, ckpt, true);
        RunSetup fresh = setup_run(cfg);
        load_checkpoint(fresh, ckpt);
        InferOutputs out{mask, "", "", 0, 0};
        run_infer_sample(fresh, data, 3, out);
        return std::make_tuple(file_bytes(data), file_bytes(ckpt), file_bytes(mask));
    };
    const auto a = run_once("a");
    const auto b = run_once("b");
    const bool data_ok = std::get<0>(a) == std::get<0>(b) && !std::get<0>(a).empty();
    const bool ckpt_ok = std::get<1>(a) == std::get<1>(b) && !std::get<1>(a).empty();
    const bool mask_ok = std::get<2>(a) == std::get<2>(b) && !std::get<2>(a).empty();

    std::printf("  determinism: data=%d checkpoint=%d mask=%d\n", data_ok, ckpt_ok, mask_ok);
    const bool ok = data_ok && ckpt_ok && mask_ok;
    report(8, "byte-identical checkpoints and masks across reruns", ok);
    CHECK(data_ok);
    CHECK(ckpt_ok);
    CHECK(mask_ok);
}

TEST_CASE("criterion 9: container format golden tests") {
    TensorContainer c;
    c.add("t", Tensor::from_f32({2, 2}, {1.0f, 2.0f, 3.0f, 4.0f}));
    const std::vector<std::uint8_t> golden = {
        'I',  'F',  'S',  'G',  0x01, 0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00, 0x01,
        0x00, 0x00, 0x00, 't',  0x00, 0x00, 0x00, 0x00, 0x02, 0x00, 0x00, 0x00, 0x02,
        0x00, 0x00, 0x00, 0x02, 0x00, 0x00, 0x00, 0x00, 0x00, 0x80, 0x3f, 0x00, 0x00,
        0x00, 0x40, 0x00, 0x00, 0x40, 0x40, 0x00, 0x00, 0x80, 0x40,
    };
    const bool golden_ok = serialize_container(c) == golden;

    bool roundtrip_ok = false;
    {
        const TensorContainer back = parse_container(golden);
        roundtrip_ok = back.get("t").f32() == std::vector<float>{1.0f, 2.0f, 3.0f, 4.0f} &&
                       serialize_container(back) == golden;
    }

    auto error_of = [](std::vector<std::uint8_t> bytes) -> std::string {
        try {
            parse_container(bytes);
        } catch (const Error& e) {
            return e.what();
        }
        return "";
    };
    auto corrupted = golden;
    corrupted[0] = 'X';
    const bool magic_ok = error_of(corrupted).find("bad magic") != std::string::npos;
    auto truncated = golden;
    truncated.resize(golden.size() - 5);
    const bool trunc_ok = error_of(truncated).find("truncated") != std::string::npos;
    auto version = golden;
    version[4] = 3;
    const bool version_ok = error_of(version).find("unknown version") != std::string::npos;

    std::printf("  golden: bytes=%d roundtrip=%d bad-magic=%d truncation=%d bad-version=%d\n",
                golden_ok, roundtrip_ok, magic_ok, trunc_ok, version_ok);
    const bool ok = golden_ok && roundtrip_ok && magic_ok && trunc_ok && version_ok;
    report(9, "frozen container fixture and error classes", ok);
    CHECK(golden_ok);
    CHECK(roundtrip_ok);
    CHECK(magic_ok);
    CHECK(trunc_ok);
    CHECK(version_ok);
}
