#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "vad/error.hpp"

namespace vad {

using Shape = std::vector<int>;

inline long long numel(const Shape& s) {
    long long n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

// Dense row-major tensor, channels-last everywhere: (B,T,H,W,C), (B,N), (H,W,C), ...
template <class S>
struct Tensor {
    Shape shape;
    std::vector<S> data;

    Tensor() = default;
    explicit Tensor(Shape sh) : shape(std::move(sh)), data(static_cast<std::size_t>(numel(shape)), S(0)) {}
    Tensor(Shape sh, std::vector<S> values) : shape(std::move(sh)), data(std::move(values)) {
        if (static_cast<long long>(data.size()) != numel(shape))
            throw ShapeError("tensor data size does not match shape " + shape_str(shape));
    }

    long long size() const { return static_cast<long long>(data.size()); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
    int rank() const { return static_cast<int>(shape.size()); }
    bool empty() const { return data.empty(); }

    S* ptr() { return data.data(); }
    const S* ptr() const { return data.data(); }

    void fill(S v) { std::fill(data.begin(), data.end(), v); }

    Tensor reshaped(Shape sh) const {
        if (numel(sh) != size())
            throw ShapeError("cannot reshape " + shape_str(shape) + " to " + shape_str(sh));
        Tensor out;
        out.shape = std::move(sh);
        out.data = data;
        return out;
    }
};

// C(m,n) = A(m,k) * B(k,n), row-major contiguous buffers.
template <class S>
void gemm(const S* a, const S* b, S* c, int m, int k, int n, bool accumulate) {
    using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const Mat> ma(a, m, k);
    Eigen::Map<const Mat> mb(b, k, n);
    Eigen::Map<Mat> mc(c, m, n);
    if (accumulate)
        mc.noalias() += ma * mb;
    else
        mc.noalias() = ma * mb;
}

// C(m,n) = A^T(k,m) * B(k,n)
template <class S>
void gemm_tn(const S* a, const S* b, S* c, int m, int k, int n, bool accumulate) {
    using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const Mat> ma(a, k, m);
    Eigen::Map<const Mat> mb(b, k, n);
    Eigen::Map<Mat> mc(c, m, n);
    if (accumulate)
        mc.noalias() += ma.transpose() * mb;
    else
        mc.noalias() = ma.transpose() * mb;
}

// C(m,n) = A(m,k) * B^T(n,k)
template <class S>
void gemm_nt(const S* a, const S* b, S* c, int m, int k, int n, bool accumulate) {
    using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const Mat> ma(a, m, k);
    Eigen::Map<const Mat> mb(b, n, k);
    Eigen::Map<Mat> mc(c, m, n);
    if (accumulate)
        mc.noalias() += ma * mb.transpose();
    else
        mc.noalias() = ma * mb.transpose();
}

}  // namespace vad
