#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ifseg {

// Raster image with values in [0,1], row-major, channel-interleaved.
struct RasterImage {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 1;  // 1 (gray) or 3 (rgb)
    std::vector<double> data;  // height*width*channels

    double& at(std::size_t y, std::size_t x, std::size_t c) {
        return data[(y * width + x) * channels + c];
    }
    double at(std::size_t y, std::size_t x, std::size_t c) const {
        return data[(y * width + x) * channels + c];
    }
};

// Binary PGM (P5) / PPM (P6), maxval up to 255; values scaled to [0,1].
RasterImage read_pnm(const std::string& path);

// Raw 8-bit labels, no scaling (maxval must be 255 so the 255 ignore
// sentinel stays representable).
std::vector<std::uint8_t> read_pgm_labels(const std::string& path, std::size_t& height,
                                          std::size_t& width);

// Writes a P5 PGM with maxval 255 via a temporary file renamed on success.
void write_pgm(const std::vector<std::uint8_t>& pixels, std::size_t height, std::size_t width,
               const std::string& path);

}  // namespace ifseg
