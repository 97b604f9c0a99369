#pragma once

#include <cstdint>
#include <vector>

#include "ifseg/segpipe.hpp"

namespace ifseg {

// Confusion counts, rows = ground truth, columns = prediction. Integer
// arithmetic until the final division.
struct ConfusionMatrix {
    std::size_t m = 0;
    std::vector<std::uint64_t> counts;  // m*m
    std::uint64_t total = 0;

    explicit ConfusionMatrix(std::size_t classes) : m(classes), counts(classes * classes, 0) {}

    std::uint64_t& at(std::size_t gt, std::size_t pred) { return counts[gt * m + pred]; }
    std::uint64_t at(std::size_t gt, std::size_t pred) const { return counts[gt * m + pred]; }

    void merge(const ConfusionMatrix& other);
};

// Counts per non-ignored pixel. The ignore sentinel is legal in gt only.
void accumulate(ConfusionMatrix& cm, const SegmentationMask& pred, const SegmentationMask& gt);

// Per-class IoU; negative for classes with zero union (excluded from means).
std::vector<double> per_class_iou(const ConfusionMatrix& cm);

// Mean IoU over classes with nonzero union.
double miou(const ConfusionMatrix& cm);

// Harmonic mean of the mean IoU of the unseen and seen class subsets.
double hiou(const ConfusionMatrix& cm, const std::vector<std::uint32_t>& unseen_classes);

}  // namespace ifseg
