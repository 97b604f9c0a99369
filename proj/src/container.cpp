#include "ifseg/container.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "ifseg/error.hpp"

namespace ifseg {

namespace {

constexpr char kMagic[4] = {'I', 'F', 'S', 'G'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kMaxNameLen = 4096;
constexpr std::uint32_t kMaxNdim = 8;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 24));
}

template <typename T>
void put_scalar_le(std::vector<std::uint8_t>& out, T v) {
    static_assert(sizeof(T) == 4 || sizeof(T) == 8);
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T); ++i)
        out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = bytes_[pos_] | (bytes_[pos_ + 1] << 8) | (bytes_[pos_ + 2] << 16) |
                          (static_cast<std::uint32_t>(bytes_[pos_ + 3]) << 24);
        pos_ += 4;
        return v;
    }

    std::string str(std::uint32_t len) {
        need(len);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), len);
        pos_ += len;
        return s;
    }

    template <typename T>
    std::vector<T> scalars(std::size_t count) {
        need(count * sizeof(T));
        std::vector<T> out(count);
        for (std::size_t i = 0; i < count; ++i) {
            std::uint64_t bits = 0;
            for (std::size_t b = 0; b < sizeof(T); ++b)
                bits |= static_cast<std::uint64_t>(bytes_[pos_ + i * sizeof(T) + b]) << (8 * b);
            std::memcpy(&out[i], &bits, sizeof(T));
        }
        pos_ += count * sizeof(T);
        return out;
    }

    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size())
            fail_data("container: truncated payload (need " + std::to_string(n) + " bytes at offset " +
                      std::to_string(pos_) + ")");
    }

private:
    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

Tensor Tensor::from_f32(std::vector<std::uint32_t> dims, std::vector<float> v) {
    Tensor t;
    t.dtype = Dtype::F32;
    t.dims = std::move(dims);
    t.values = std::move(v);
    require_data(t.element_count() == t.f32().size(), "tensor: dims do not match value count");
    return t;
}

Tensor Tensor::from_f64(std::vector<std::uint32_t> dims, std::vector<double> v) {
    Tensor t;
    t.dtype = Dtype::F64;
    t.dims = std::move(dims);
    t.values = std::move(v);
    require_data(t.element_count() == t.f64().size(), "tensor: dims do not match value count");
    return t;
}

Tensor Tensor::from_u32(std::vector<std::uint32_t> dims, std::vector<std::uint32_t> v) {
    Tensor t;
    t.dtype = Dtype::U32;
    t.dims = std::move(dims);
    t.values = std::move(v);
    require_data(t.element_count() == t.u32().size(), "tensor: dims do not match value count");
    return t;
}

Tensor Tensor::from_mat_f32(const MatD& m) {
    std::vector<float> v(m.data.begin(), m.data.end());
    return from_f32({static_cast<std::uint32_t>(m.rows), static_cast<std::uint32_t>(m.cols)},
                    std::move(v));
}

Tensor Tensor::from_mat_f64(const MatD& m) {
    return from_f64({static_cast<std::uint32_t>(m.rows), static_cast<std::uint32_t>(m.cols)},
                    std::vector<double>(m.data.begin(), m.data.end()));
}

std::size_t Tensor::element_count() const {
    std::uint64_t n = 1;
    for (std::uint32_t d : dims) n *= d;
    return static_cast<std::size_t>(n);
}

const std::vector<float>& Tensor::f32() const {
    require_data(dtype == Dtype::F32, "tensor: expected f32 section");
    return std::get<std::vector<float>>(values);
}

const std::vector<double>& Tensor::f64() const {
    require_data(dtype == Dtype::F64, "tensor: expected f64 section");
    return std::get<std::vector<double>>(values);
}

const std::vector<std::uint32_t>& Tensor::u32() const {
    require_data(dtype == Dtype::U32, "tensor: expected u32 section");
    return std::get<std::vector<std::uint32_t>>(values);
}

MatD Tensor::to_mat(std::size_t rows, std::size_t cols) const {
    require_data(element_count() == rows * cols, "tensor: shape mismatch reading matrix");
    MatD m(rows, cols);
    if (dtype == Dtype::F32) {
        const auto& v = f32();
        for (std::size_t i = 0; i < v.size(); ++i) m.data[i] = v[i];
    } else {
        const auto& v = f64();
        m.data.assign(v.begin(), v.end());
    }
    return m;
}

void TensorContainer::add(const std::string& name, Tensor t) {
    require_data(!contains(name), "container: duplicate section name '" + name + "'");
    sections_.emplace_back(name, std::move(t));
}

bool TensorContainer::contains(const std::string& name) const {
    for (const auto& [n, t] : sections_)
        if (n == name) return true;
    return false;
}

const Tensor& TensorContainer::get(const std::string& name) const {
    for (const auto& [n, t] : sections_)
        if (n == name) return t;
    fail_data("container: missing section '" + name + "'");
}

std::vector<std::uint8_t> serialize_container(const TensorContainer& c) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(c.section_count()));
    for (const auto& [name, t] : c.sections()) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        put_u32(out, static_cast<std::uint32_t>(t.dtype));
        put_u32(out, static_cast<std::uint32_t>(t.dims.size()));
        for (std::uint32_t d : t.dims) put_u32(out, d);
        switch (t.dtype) {
            case Dtype::F32:
                for (float v : t.f32()) put_scalar_le(out, v);
                break;
            case Dtype::F64:
                for (double v : t.f64()) put_scalar_le(out, v);
                break;
            case Dtype::U32:
                for (std::uint32_t v : t.u32()) put_u32(out, v);
                break;
        }
    }
    return out;
}

TensorContainer parse_container(const std::vector<std::uint8_t>& bytes) {
    Reader r(bytes);
    std::string magic = r.str(4);
    if (std::memcmp(magic.data(), kMagic, 4) != 0)
        fail_data("container: bad magic (expected \"IFSG\")");
    std::uint32_t version = r.u32();
    if (version != kVersion)
        fail_data("container: unknown version " + std::to_string(version));
    std::uint32_t count = r.u32();
    TensorContainer c;
    for (std::uint32_t s = 0; s < count; ++s) {
        std::uint32_t name_len = r.u32();
        if (name_len > kMaxNameLen) fail_data("container: section name too long");
        std::string name = r.str(name_len);
        std::uint32_t dtype_code = r.u32();
        if (dtype_code > 2) fail_data("container: unknown dtype code " + std::to_string(dtype_code));
        Dtype dt = static_cast<Dtype>(dtype_code);
        std::uint32_t ndim = r.u32();
        if (ndim > kMaxNdim) fail_data("container: too many dimensions");
        std::vector<std::uint32_t> dims(ndim);
        std::uint64_t n = 1;
        for (std::uint32_t i = 0; i < ndim; ++i) {
            dims[i] = r.u32();
            n *= dims[i];
        }
        if (n > (1ULL << 40)) fail_data("container: section too large");
        Tensor t;
        switch (dt) {
            case Dtype::F32:
                t = Tensor::from_f32(dims, r.scalars<float>(n));
                break;
            case Dtype::F64:
                t = Tensor::from_f64(dims, r.scalars<double>(n));
                break;
            case Dtype::U32: {
                std::vector<std::uint32_t> v(n);
                for (std::uint64_t i = 0; i < n; ++i) v[i] = r.u32();
                t = Tensor::from_u32(dims, std::move(v));
                break;
            }
        }
        if (c.contains(name)) fail_data("container: duplicate section name '" + name + "'");
        c.add(name, std::move(t));
    }
    return c;
}

void write_container(const TensorContainer& c, const std::string& path) {
    std::vector<std::uint8_t> bytes = serialize_container(c);
    std::filesystem::path target(path);
    std::filesystem::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) fail_data("container: cannot open '" + tmp.string() + "' for writing");
        f.write(reinterpret_cast<const char*>(bytes.data()),
                static_cast<std::streamsize>(bytes.size()));
        if (!f) {
            f.close();
            std::filesystem::remove(tmp);
            fail_data("container: write failed for '" + tmp.string() + "'");
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, target, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        fail_data("container: cannot rename temporary onto '" + path + "': " + ec.message());
    }
}

TensorContainer read_container(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail_data("container: cannot open '" + path + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    return parse_container(bytes);
}

}  // namespace ifseg
