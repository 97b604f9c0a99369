#pragma once

#include <cstddef>

#include "ifseg/mat.hpp"
#include "ifseg/pnm.hpp"

namespace ifseg {

// Flattened spatial feature grid: rows of length C in row-major patch order.
struct FeatureMap {
    MatD rows;           // (h*w) x C
    std::size_t h = 0;
    std::size_t w = 0;
};

// Non-overlapping P x P patch extraction. Images whose sides are not
// multiples of P are zero-padded at the bottom/right. Row k concatenates the
// patch's pixels in (y, x, channel) order, so C = P*P*channels.
FeatureMap patchify(const RasterImage& img, std::size_t patch);

// out = fm * weight + bias, bias broadcast per row.
MatD project(const FeatureMap& fm, const MatD& weight, const std::vector<double>& bias);

}  // namespace ifseg
