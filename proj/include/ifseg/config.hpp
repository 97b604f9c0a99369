#pragma once

#include <cstdint>
#include <string>

namespace ifseg {

// Run configuration, loaded from `key = value` lines ('#' starts a comment).
// Unknown keys are rejected; missing keys take the defaults below.
struct RunConfig {
    std::uint64_t seed = 42;

    // artificial data
    std::uint32_t grid_s = 8;  // key "S": max initial grid side
    std::uint32_t h = 8;       // key "H": backbone grid rows
    std::uint32_t w = 8;       // key "W": backbone grid cols
    std::uint32_t m = 8;       // key "M": synthesized category count (catN names)
    std::string categories;    // category file path; overrides M
    std::string hierarchy;     // hierarchical sampling file (coarse: fine, fine, ...)
    std::string vocab;         // vocabulary file; built-in lexicon when empty

    // model
    std::uint32_t dim = 64;  // key "D"
    std::uint32_t n_layers_enc = 2;
    std::uint32_t n_layers_dec = 2;
    std::uint32_t n_heads = 4;
    std::uint32_t ffn_mult = 4;
    std::uint32_t l_t_max = 0;  // 0 = exactly the prompt length

    // optimizer
    double lr = 3e-4;
    double weight_decay = 0.1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    // training
    std::uint32_t batch_size = 16;
    std::uint32_t steps = 600;
    std::uint32_t log_every = 50;

    // backbone
    std::uint32_t patch_size = 4;

    // post-processing
    std::uint32_t k = 3;           // key "K"
    std::uint32_t iterations = 25;

    void validate() const;
};

RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::string& path);

// Canonical `key = value` rendering of every key, parseable by load_config.
std::string render_config(const RunConfig& cfg);

}  // namespace ifseg
