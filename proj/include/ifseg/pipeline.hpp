#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ifseg/artgen.hpp"
#include "ifseg/config.hpp"
#include "ifseg/container.hpp"
#include "ifseg/model.hpp"
#include "ifseg/postproc.hpp"
#include "ifseg/segpipe.hpp"
#include "ifseg/vocab.hpp"

namespace ifseg {

// Everything a run derives deterministically from its RunConfig: dictionary,
// embeddings, categories, prompt, model weights, optimizer state. The
// registration-time embedding matrix stays in double; training and inference
// run on a float working copy (emb_train) whose rows stay tied between input
// lookup and output projection.
struct RunSetup {
    RunConfig cfg;
    Vocabulary vocab;
    EmbeddingMatrix emb;
    Mat<float> emb_train;
    SegCategorySet cats;
    std::optional<CategoryHierarchy> hierarchy;
    std::vector<TokenId> prompt;
    ModelConfig mcfg;
    ModelParams<float> params;
    AdamWState<float> opt;
    std::uint32_t step = 0;

    ArtificialGridSpec grid_spec() const { return {cfg.grid_s, cfg.h, cfg.w}; }
};

RunSetup setup_run(const RunConfig& cfg);

// Seed stream tags hanging off the config seed.
std::uint64_t seed_for_embeddings(std::uint64_t base);
std::uint64_t seed_for_model(std::uint64_t base);
std::uint64_t seed_for_data(std::uint64_t base);
std::uint64_t seed_for_backbone(std::uint64_t base);

// Draws one training pair from the run's generator stream.
TrainingPair draw_training_pair(const RunSetup& setup, std::uint64_t data_seed,
                                std::uint64_t sample_index);

// Converts a generated pair to the float batch item the model trains on.
TrainItem<float> make_train_item(const TrainingPair& pair);

// gen-data container: "meta" u32 [count, H, W, D, M] plus per-sample
// sections "tokens/NNNNNN" (f32, (H*W) x D) and "targets/NNNNNN" (u32, H*W).
void run_gen_data(const RunSetup& setup, std::uint32_t count, const std::string& out_path);

struct Dataset {
    std::uint32_t count = 0;
    std::vector<TrainItem<float>> items;
};

Dataset load_dataset(const RunSetup& setup, const std::string& path);

// Runs cfg.steps optimizer steps over the dataset (batches cycle in sample
// order) and writes the checkpoint. Logs key=value lines when quiet is false.
double run_train(RunSetup& setup, const std::string& data_path, const std::string& ckpt_path,
                 bool quiet = false);

void save_checkpoint(RunSetup& setup, const std::string& path);
void load_checkpoint(RunSetup& setup, const std::string& path);

// encode -> decode_spatial -> masked softmax at the backbone grid.
ProbabilityMap infer_probs(const RunSetup& setup, const MatD& image_tokens);

struct InferOutputs {
    std::string mask_path;            // required
    std::string probs_path;           // optional: "" skips
    std::string features_path;        // optional: "" skips
    std::size_t out_h = 0, out_w = 0; // 0 = natural size
};

// Inference on a stored artificial sample.
void run_infer_sample(const RunSetup& setup, const std::string& data_path, std::uint32_t index,
                      const InferOutputs& out);

// Inference on a raster image: patchify + seeded projection stand in for the
// image backbone. The patch grid must match the configured H x W.
void run_infer_image(const RunSetup& setup, const std::string& image_path,
                     const InferOutputs& out);

void run_postprocess(const std::string& probs_path, const std::string& features_path,
                     const std::string& out_path, const PostprocessConfig& pp);

// Metrics report as key=value lines (class_iou/N, miou, optional hiou).
std::string run_eval(const std::vector<std::string>& pred_paths,
                     const std::vector<std::string>& gt_paths, std::uint32_t classes,
                     const std::string& unseen_path);

}  // namespace ifseg
