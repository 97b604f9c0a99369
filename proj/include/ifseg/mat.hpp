#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <vector>

#include "ifseg/error.hpp"

namespace ifseg {

// Dense row-major matrix over float or double. Owns its storage as a flat
// std::vector so rows can be handed around as plain pointers.
template <typename T>
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<T> data;  // row-major, rows*cols entries

    Mat() = default;
    Mat(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, T(0)) {}

    static Mat zeros(std::size_t r, std::size_t c) { return Mat(r, c); }

    T& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    const T& at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    T* row(std::size_t r) { return data.data() + r * cols; }
    const T* row(std::size_t r) const { return data.data() + r * cols; }

    std::size_t size() const { return data.size(); }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

using MatF = Mat<float>;
using MatD = Mat<double>;

namespace detail {

template <typename T>
using EigenRowMajor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
Eigen::Map<const EigenRowMajor<T>> emap(const Mat<T>& m) {
    return {m.data.data(), static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols)};
}

template <typename T>
Eigen::Map<EigenRowMajor<T>> emap(Mat<T>& m) {
    return {m.data.data(), static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols)};
}

}  // namespace detail

// c = a * b
template <typename T>
Mat<T> matmul(const Mat<T>& a, const Mat<T>& b) {
    require_data(a.cols == b.rows, "matmul: inner dimensions disagree");
    Mat<T> c(a.rows, b.cols);
    detail::emap(c).noalias() = detail::emap(a) * detail::emap(b);
    return c;
}

// c = a * b^T
template <typename T>
Mat<T> matmul_nt(const Mat<T>& a, const Mat<T>& b) {
    require_data(a.cols == b.cols, "matmul_nt: inner dimensions disagree");
    Mat<T> c(a.rows, b.rows);
    detail::emap(c).noalias() = detail::emap(a) * detail::emap(b).transpose();
    return c;
}

// c = a^T * b
template <typename T>
Mat<T> matmul_tn(const Mat<T>& a, const Mat<T>& b) {
    require_data(a.rows == b.rows, "matmul_tn: inner dimensions disagree");
    Mat<T> c(a.cols, b.cols);
    detail::emap(c).noalias() = detail::emap(a).transpose() * detail::emap(b);
    return c;
}

// c += a^T * b
template <typename T>
void matmul_tn_accum(const Mat<T>& a, const Mat<T>& b, Mat<T>& c) {
    require_data(a.rows == b.rows && c.rows == a.cols && c.cols == b.cols,
                 "matmul_tn_accum: shape mismatch");
    detail::emap(c).noalias() += detail::emap(a).transpose() * detail::emap(b);
}

template <typename T>
void add_inplace(Mat<T>& a, const Mat<T>& b) {
    require_data(a.same_shape(b), "add_inplace: shape mismatch");
    for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

template <typename T>
bool all_finite(const Mat<T>& m) {
    for (T v : m.data)
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace ifseg
