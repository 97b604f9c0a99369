#pragma once

#include <cstdint>
#include <vector>

#include "ifseg/mat.hpp"
#include "ifseg/vocab.hpp"

namespace ifseg {

// Per-position distribution over the M segmentation categories, on an h x w
// grid flattened row-major. Rows sum to 1.
struct ProbabilityMap {
    MatD probs;          // (h*w) x M
    std::size_t h = 0;
    std::size_t w = 0;
};

constexpr std::uint8_t kIgnoreLabel = 255;

// Category index per cell; kIgnoreLabel marks pixels excluded from loss and
// evaluation.
struct SegmentationMask {
    std::vector<std::uint8_t> labels;  // h*w, row-major
    std::size_t h = 0;
    std::size_t w = 0;
};

// Softmax restricted to the merged-id columns of the full-dictionary logits;
// output column c corresponds to the c-th registered category.
ProbabilityMap masked_probs(const MatD& logits, const SegCategorySet& cats, std::size_t h,
                            std::size_t w);

// Separable bilinear resampling with half-pixel centers:
// source coord s = (d + 0.5) * src/dst - 0.5, clamped to [0, src-1].
// Rows are renormalized only when their sum drifts from 1 by more than 1e-9.
// Same-size targets return an exact copy.
ProbabilityMap bilinear_upsample(const ProbabilityMap& p, std::size_t out_h, std::size_t out_w);

// Per-cell argmax; ties break toward the lowest category index.
SegmentationMask predict(const ProbabilityMap& p);

// Mean over non-ignored cells of -ln p[cell][gt], with p clamped at 1e-12.
double seg_loss(const ProbabilityMap& p, const SegmentationMask& gt);

// Mask file I/O: P5 PGM of raw labels plus a sidecar "<path>.labels.txt"
// mapping indices to category names.
void write_mask(const SegmentationMask& mask, const std::vector<std::string>& names,
                const std::string& path);
SegmentationMask read_mask(const std::string& path);

}  // namespace ifseg
