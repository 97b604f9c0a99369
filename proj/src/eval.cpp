#include "ifseg/eval.hpp"

#include <algorithm>

#include "ifseg/error.hpp"

namespace ifseg {

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
    require_data(m == other.m, "confusion: class counts disagree");
    for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
    total += other.total;
}

void accumulate(ConfusionMatrix& cm, const SegmentationMask& pred, const SegmentationMask& gt) {
    require_data(pred.h == gt.h && pred.w == gt.w && pred.labels.size() == gt.labels.size(),
                 "accumulate: mask shapes disagree");
    for (std::size_t i = 0; i < gt.labels.size(); ++i) {
        const std::uint8_t g = gt.labels[i];
        if (g == kIgnoreLabel) continue;
        const std::uint8_t p = pred.labels[i];
        require_data(p != kIgnoreLabel, "accumulate: prediction contains the ignore sentinel");
        require_data(g < cm.m, "accumulate: ground-truth label out of range");
        require_data(p < cm.m, "accumulate: prediction label out of range");
        ++cm.at(g, p);
        ++cm.total;
    }
}

std::vector<double> per_class_iou(const ConfusionMatrix& cm) {
    std::vector<double> out(cm.m, -1.0);
    for (std::size_t c = 0; c < cm.m; ++c) {
        std::uint64_t row = 0, col = 0;
        for (std::size_t j = 0; j < cm.m; ++j) {
            row += cm.at(c, j);
            col += cm.at(j, c);
        }
        const std::uint64_t inter = cm.at(c, c);
        const std::uint64_t uni = row + col - inter;
        if (uni > 0) out[c] = static_cast<double>(inter) / static_cast<double>(uni);
    }
    return out;
}

double miou(const ConfusionMatrix& cm) {
    const std::vector<double> ious = per_class_iou(cm);
    double sum = 0.0;
    std::size_t n = 0;
    for (double v : ious) {
        if (v >= 0.0) {
            sum += v;
            ++n;
        }
    }
    require_data(n > 0, "miou: every class has zero union");
    return sum / static_cast<double>(n);
}

double hiou(const ConfusionMatrix& cm, const std::vector<std::uint32_t>& unseen_classes) {
    std::vector<bool> unseen(cm.m, false);
    for (std::uint32_t c : unseen_classes) {
        require_data(c < cm.m, "hiou: unseen class index out of range");
        unseen[c] = true;
    }
    const std::vector<double> ious = per_class_iou(cm);
    double sum_u = 0.0, sum_s = 0.0;
    std::size_t n_u = 0, n_s = 0;
    for (std::size_t c = 0; c < cm.m; ++c) {
        if (ious[c] < 0.0) continue;
        if (unseen[c]) {
            sum_u += ious[c];
            ++n_u;
        } else {
            sum_s += ious[c];
            ++n_s;
        }
    }
    require_data(n_u > 0, "hiou: no unseen class has nonzero union");
    require_data(n_s > 0, "hiou: no seen class has nonzero union");
    const double a = sum_u / static_cast<double>(n_u);
    const double b = sum_s / static_cast<double>(n_s);
    if (a + b == 0.0) return 0.0;
    return 2.0 * a * b / (a + b);
}

}  // namespace ifseg
