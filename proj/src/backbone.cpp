#include "ifseg/backbone.hpp"

#include "ifseg/error.hpp"

namespace ifseg {

FeatureMap patchify(const RasterImage& img, std::size_t patch) {
    require_data(patch >= 1, "patchify: patch size must be positive");
    require_data(img.height >= 1 && img.width >= 1 && !img.data.empty(), "patchify: empty image");
    require_data(img.channels == 1 || img.channels == 3, "patchify: channels must be 1 or 3");
    const std::size_t ph = (img.height + patch - 1) / patch;
    const std::size_t pw = (img.width + patch - 1) / patch;
    const std::size_t c = patch * patch * img.channels;
    FeatureMap fm;
    fm.h = ph;
    fm.w = pw;
    fm.rows = MatD(ph * pw, c);
    for (std::size_t pi = 0; pi < ph; ++pi) {
        for (std::size_t pj = 0; pj < pw; ++pj) {
            double* row = fm.rows.row(pi * pw + pj);
            std::size_t k = 0;
            for (std::size_t y = 0; y < patch; ++y) {
                for (std::size_t x = 0; x < patch; ++x) {
                    const std::size_t iy = pi * patch + y;
                    const std::size_t ix = pj * patch + x;
                    for (std::size_t ch = 0; ch < img.channels; ++ch, ++k) {
                        row[k] = (iy < img.height && ix < img.width) ? img.at(iy, ix, ch) : 0.0;
                    }
                }
            }
        }
    }
    return fm;
}

MatD project(const FeatureMap& fm, const MatD& weight, const std::vector<double>& bias) {
    require_data(fm.rows.cols == weight.rows, "project: feature width does not match weight rows");
    require_data(bias.size() == weight.cols, "project: bias length does not match weight columns");
    MatD out = matmul(fm.rows, weight);
    for (std::size_t i = 0; i < out.rows; ++i) {
        double* row = out.row(i);
        for (std::size_t j = 0; j < out.cols; ++j) row[j] += bias[j];
    }
    return out;
}

}  // namespace ifseg
