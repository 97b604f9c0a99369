#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "ifseg/mat.hpp"

namespace ifseg {

// Binary tensor container ("IFSG" files). Layout, all integers little-endian
// u32 unless noted:
//
//   magic "IFSG" | version | section_count
//   per section: name_len | name bytes (UTF-8) | dtype | ndim | dims[ndim]
//                | payload (row-major, little-endian)
//
// dtype codes: 0 = f32, 1 = f64, 2 = u32.

enum class Dtype : std::uint32_t { F32 = 0, F64 = 1, U32 = 2 };

inline std::size_t dtype_width(Dtype dt) {
    switch (dt) {
        case Dtype::F32: return 4;
        case Dtype::F64: return 8;
        case Dtype::U32: return 4;
    }
    return 0;
}

struct Tensor {
    Dtype dtype = Dtype::F32;
    std::vector<std::uint32_t> dims;
    std::variant<std::vector<float>, std::vector<double>, std::vector<std::uint32_t>> values;

    static Tensor from_f32(std::vector<std::uint32_t> dims, std::vector<float> v);
    static Tensor from_f64(std::vector<std::uint32_t> dims, std::vector<double> v);
    static Tensor from_u32(std::vector<std::uint32_t> dims, std::vector<std::uint32_t> v);
    static Tensor from_mat_f32(const MatD& m);  // casts to f32 at the file boundary
    static Tensor from_mat_f64(const MatD& m);

    std::size_t element_count() const;
    const std::vector<float>& f32() const;
    const std::vector<double>& f64() const;
    const std::vector<std::uint32_t>& u32() const;

    // Reads an f32 or f64 section into a double matrix of the given shape.
    MatD to_mat(std::size_t rows, std::size_t cols) const;
};

// Named sections in file order; names are unique.
class TensorContainer {
public:
    void add(const std::string& name, Tensor t);
    bool contains(const std::string& name) const;
    const Tensor& get(const std::string& name) const;
    std::size_t section_count() const { return sections_.size(); }
    const std::vector<std::pair<std::string, Tensor>>& sections() const { return sections_; }

private:
    std::vector<std::pair<std::string, Tensor>> sections_;
};

// Serialization. write_container writes to a temporary file in the target
// directory and renames on success, so a failed write leaves no partial file.
std::vector<std::uint8_t> serialize_container(const TensorContainer& c);
TensorContainer parse_container(const std::vector<std::uint8_t>& bytes);
void write_container(const TensorContainer& c, const std::string& path);
TensorContainer read_container(const std::string& path);

}  // namespace ifseg
