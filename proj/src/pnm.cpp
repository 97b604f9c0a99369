#include "ifseg/pnm.hpp"

#include <cctype>
#include <filesystem>
#include <fstream>

#include "ifseg/error.hpp"

namespace ifseg {

namespace {

// Reads the next header integer, skipping whitespace and '#' comments.
std::size_t read_header_int(std::istream& in, const std::string& path) {
    for (;;) {
        int c = in.peek();
        if (c == EOF) fail_data("pnm: truncated header in '" + path + "'");
        if (std::isspace(c)) {
            in.get();
            continue;
        }
        if (c == '#') {
            std::string comment;
            std::getline(in, comment);
            continue;
        }
        break;
    }
    std::size_t value = 0;
    if (!(in >> value)) fail_data("pnm: malformed header in '" + path + "'");
    return value;
}

struct PnmRaw {
    std::size_t height, width, channels, maxval;
    std::vector<std::uint8_t> bytes;
};

PnmRaw read_raw(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail_data("pnm: cannot open '" + path + "'");
    char m0 = 0, m1 = 0;
    f.get(m0);
    f.get(m1);
    std::size_t channels;
    if (m0 == 'P' && m1 == '5')
        channels = 1;
    else if (m0 == 'P' && m1 == '6')
        channels = 3;
    else
        fail_data("pnm: '" + path + "' is not a binary PGM (P5) or PPM (P6)");
    PnmRaw img;
    img.channels = channels;
    img.width = read_header_int(f, path);
    img.height = read_header_int(f, path);
    img.maxval = read_header_int(f, path);
    if (img.maxval == 0 || img.maxval > 255)
        fail_data("pnm: unsupported maxval " + std::to_string(img.maxval) + " in '" + path + "'");
    f.get();  // single whitespace byte before the raster
    const std::size_t n = img.height * img.width * channels;
    img.bytes.resize(n);
    f.read(reinterpret_cast<char*>(img.bytes.data()), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(f.gcount()) != n)
        fail_data("pnm: truncated pixel data in '" + path + "'");
    return img;
}

}  // namespace

RasterImage read_pnm(const std::string& path) {
    PnmRaw raw = read_raw(path);
    RasterImage img;
    img.height = raw.height;
    img.width = raw.width;
    img.channels = raw.channels;
    img.data.resize(raw.bytes.size());
    const double scale = 1.0 / static_cast<double>(raw.maxval);
    for (std::size_t i = 0; i < raw.bytes.size(); ++i) img.data[i] = raw.bytes[i] * scale;
    return img;
}

std::vector<std::uint8_t> read_pgm_labels(const std::string& path, std::size_t& height,
                                          std::size_t& width) {
    PnmRaw raw = read_raw(path);
    require_data(raw.channels == 1, "pnm: label mask '" + path + "' must be a PGM");
    require_data(raw.maxval == 255, "pnm: label mask '" + path + "' must have maxval 255");
    height = raw.height;
    width = raw.width;
    return raw.bytes;
}

void write_pgm(const std::vector<std::uint8_t>& pixels, std::size_t height, std::size_t width,
               const std::string& path) {
    require_data(pixels.size() == height * width, "pnm: pixel count does not match dimensions");
    std::filesystem::path target(path);
    std::filesystem::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) fail_data("pnm: cannot open '" + tmp.string() + "' for writing");
        f << "P5\n" << width << " " << height << "\n255\n";
        f.write(reinterpret_cast<const char*>(pixels.data()),
                static_cast<std::streamsize>(pixels.size()));
        if (!f) {
            f.close();
            std::filesystem::remove(tmp);
            fail_data("pnm: write failed for '" + tmp.string() + "'");
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, target, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        fail_data("pnm: cannot rename temporary onto '" + path + "': " + ec.message());
    }
}

}  // namespace ifseg
