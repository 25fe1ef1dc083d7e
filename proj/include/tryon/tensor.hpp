#ifndef TRYON_TENSOR_HPP
#define TRYON_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <vector>

#include "tryon/util.hpp"

namespace tryon {

// Dense row-major nd array. Deliberately minimal: the model code spells out
// its own forward/backward math and only needs storage, shape bookkeeping
// and a BLAS-backed matmul.
template <typename T>
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
        data.assign(size_t(numel_of(shape)), T(0));
    }
    Tensor(std::initializer_list<int64_t> s) : Tensor(std::vector<int64_t>(s)) {}

    static int64_t numel_of(const std::vector<int64_t>& s) {
        int64_t n = 1;
        for (int64_t d : s) {
            if (d < 0) fail(ErrorKind::Shape, "negative dimension");
            n *= d;
        }
        return n;
    }

    int64_t numel() const { return int64_t(data.size()); }
    int64_t dim(size_t i) const { return shape.at(i); }
    size_t rank() const { return shape.size(); }
    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }

    T& at(std::initializer_list<int64_t> idx) {
        return data[size_t(offset(idx))];
    }
    const T& at(std::initializer_list<int64_t> idx) const {
        return data[size_t(offset(idx))];
    }

    int64_t offset(std::initializer_list<int64_t> idx) const {
        int64_t off = 0;
        size_t i = 0;
        for (int64_t v : idx) {
            off = off * shape[i] + v;
            i++;
        }
        for (; i < shape.size(); i++) off *= shape[i];
        return off;
    }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }
    void zero() { fill(T(0)); }

    Tensor reshaped(std::vector<int64_t> s) const {
        if (numel_of(s) != numel()) fail(ErrorKind::Shape, "reshape numel mismatch");
        Tensor out;
        out.shape = std::move(s);
        out.data = data;
        return out;
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    std::string shape_str() const {
        std::ostringstream ss;
        ss << "(";
        for (size_t i = 0; i < shape.size(); i++) ss << (i ? "," : "") << shape[i];
        ss << ")";
        return ss.str();
    }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(double(v))) return false;
        return true;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (size_t i = 0; i < data.size(); i++) out.data[i] = U(data[i]);
        return out;
    }
};

// C[m,n] (+)= A[m,k] x B[k,n], row-major, with optional transposes on the
// logical operands. Dispatches to cblas_sgemm/dgemm.
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
          float alpha, const float* a, int64_t lda, const float* b, int64_t ldb,
          float beta, float* c, int64_t ldc);
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
          double alpha, const double* a, int64_t lda, const double* b, int64_t ldb,
          double beta, double* c, int64_t ldc);

// y[m,n] = x[m,k] @ w[n,k]^T (+ accumulate when beta=1)
template <typename T>
void matmul_nt(const T* x, const T* w, T* y, int64_t m, int64_t n, int64_t k, T beta = T(0)) {
    gemm(false, true, m, n, k, T(1), x, k, w, k, beta, y, n);
}

// y[m,n] = x[m,k] @ w[k,n]
template <typename T>
void matmul_nn(const T* x, const T* w, T* y, int64_t m, int64_t n, int64_t k, T beta = T(0)) {
    gemm(false, false, m, n, k, T(1), x, n, w, n, beta, y, n);
}

// y[m,n] = x[k,m]^T @ w[k,n]
template <typename T>
void matmul_tn(const T* x, const T* w, T* y, int64_t m, int64_t n, int64_t k, T beta = T(0)) {
    gemm(true, false, m, n, k, T(1), x, m, w, n, beta, y, n);
}

void set_blas_threads(int n);

}  // namespace tryon

#endif
