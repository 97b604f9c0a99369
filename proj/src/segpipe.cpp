#include "ifseg/segpipe.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "ifseg/error.hpp"
#include "ifseg/pnm.hpp"

namespace ifseg {

ProbabilityMap masked_probs(const MatD& logits, const SegCategorySet& cats, std::size_t h,
                            std::size_t w) {
    const std::size_t m = cats.count();
    require_data(m >= 1, "masked_probs: empty category set");
    require_data(logits.rows == h * w, "masked_probs: row count does not match grid");
    for (TokenId id : cats.merged_ids)
        require_data(id < logits.cols, "masked_probs: merged id outside logit columns");
    ProbabilityMap p;
    p.h = h;
    p.w = w;
    p.probs = MatD(logits.rows, m);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        const double* in = logits.row(i);
        double* out = p.probs.row(i);
        double max = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < m; ++c) max = std::max(max, in[cats.merged_ids[c]]);
        double sum = 0.0;
        for (std::size_t c = 0; c < m; ++c) {
            out[c] = std::exp(in[cats.merged_ids[c]] - max);
            sum += out[c];
        }
        for (std::size_t c = 0; c < m; ++c) out[c] /= sum;
    }
    return p;
}

namespace {

struct AxisSample {
    std::size_t i0, i1;
    double frac;
};

// Half-pixel-center source coordinate for output index d.
AxisSample axis_sample(std::size_t d, std::size_t src, std::size_t dst) {
    double s = (static_cast<double>(d) + 0.5) * (static_cast<double>(src) / static_cast<double>(dst)) - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src - 1));
    const std::size_t i0 = static_cast<std::size_t>(s);
    const std::size_t i1 = std::min(i0 + 1, src - 1);
    return {i0, i1, s - static_cast<double>(i0)};
}

}  // namespace

ProbabilityMap bilinear_upsample(const ProbabilityMap& p, std::size_t out_h, std::size_t out_w) {
    require_data(out_h >= 1 && out_w >= 1, "bilinear_upsample: target sizes must be positive");
    require_data(p.probs.rows == p.h * p.w && p.h >= 1 && p.w >= 1,
                 "bilinear_upsample: malformed probability map");
    if (out_h == p.h && out_w == p.w) return p;  // exact identity

    const std::size_t m = p.probs.cols;
    ProbabilityMap out;
    out.h = out_h;
    out.w = out_w;
    out.probs = MatD(out_h * out_w, m);
    for (std::size_t oy = 0; oy < out_h; ++oy) {
        const AxisSample ys = axis_sample(oy, p.h, out_h);
        for (std::size_t ox = 0; ox < out_w; ++ox) {
            const AxisSample xs = axis_sample(ox, p.w, out_w);
            const double* r00 = p.probs.row(ys.i0 * p.w + xs.i0);
            const double* r01 = p.probs.row(ys.i0 * p.w + xs.i1);
            const double* r10 = p.probs.row(ys.i1 * p.w + xs.i0);
            const double* r11 = p.probs.row(ys.i1 * p.w + xs.i1);
            double* dst = out.probs.row(oy * out_w + ox);
            double sum = 0.0;
            for (std::size_t c = 0; c < m; ++c) {
                // lerp form keeps equal endpoints bit-exact
                const double top = r00[c] + xs.frac * (r01[c] - r00[c]);
                const double bot = r10[c] + xs.frac * (r11[c] - r10[c]);
                double val = top + ys.frac * (bot - top);
                val = std::clamp(val, 0.0, 1.0);
                dst[c] = val;
                sum += val;
            }
            if (std::fabs(sum - 1.0) > 1e-9) {
                for (std::size_t c = 0; c < m; ++c) dst[c] /= sum;
            }
        }
    }
    return out;
}

SegmentationMask predict(const ProbabilityMap& p) {
    require_data(p.probs.rows == p.h * p.w, "predict: malformed probability map");
    require_data(p.probs.cols < kIgnoreLabel, "predict: more categories than label range");
    SegmentationMask mask;
    mask.h = p.h;
    mask.w = p.w;
    mask.labels.resize(p.probs.rows);
    for (std::size_t i = 0; i < p.probs.rows; ++i) {
        const double* row = p.probs.row(i);
        std::size_t best = 0;
        for (std::size_t c = 1; c < p.probs.cols; ++c)
            if (row[c] > row[best]) best = c;
        mask.labels[i] = static_cast<std::uint8_t>(best);
    }
    return mask;
}

double seg_loss(const ProbabilityMap& p, const SegmentationMask& gt) {
    require_data(p.h == gt.h && p.w == gt.w && p.probs.rows == gt.labels.size(),
                 "seg_loss: shapes disagree");
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < gt.labels.size(); ++i) {
        if (gt.labels[i] == kIgnoreLabel) continue;
        require_data(gt.labels[i] < p.probs.cols, "seg_loss: ground-truth label out of range");
        const double prob = std::max(p.probs.at(i, gt.labels[i]), 1e-12);
        sum += -std::log(prob);
        ++n;
    }
    require_data(n > 0, "seg_loss: every position is ignored");
    return sum / static_cast<double>(n);
}

void write_mask(const SegmentationMask& mask, const std::vector<std::string>& names,
                const std::string& path) {
    write_pgm(mask.labels, mask.h, mask.w, path);
    std::filesystem::path sidecar(path + ".labels.txt");
    std::filesystem::path tmp = sidecar;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::trunc);
        if (!f) fail_data("mask: cannot open '" + tmp.string() + "' for writing");
        for (std::size_t i = 0; i < names.size(); ++i) f << i << " " << names[i] << "\n";
    }
    std::error_code ec;
    std::filesystem::rename(tmp, sidecar, ec);
    if (ec) fail_data("mask: cannot rename temporary onto '" + sidecar.string() + "'");
}

SegmentationMask read_mask(const std::string& path) {
    SegmentationMask mask;
    mask.labels = read_pgm_labels(path, mask.h, mask.w);
    return mask;
}

}  // namespace ifseg
