#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "plumeseg/errors.hpp"

namespace plumeseg {

/// 64-byte-aligned storage so vectorized kernels see the same alignment on
/// every allocation; with malloc'd buffers the SIMD prefix peel (and thus
/// the floating-point summation order) would depend on heap history.
template <class T>
struct Aligned64Allocator {
    using value_type = T;
    Aligned64Allocator() = default;
    template <class U>
    Aligned64Allocator(const Aligned64Allocator<U>&) {}
    T* allocate(std::size_t n) {
        if (n == 0) return nullptr;
        void* p = std::aligned_alloc(64, (n * sizeof(T) + 63) / 64 * 64);
        if (!p) throw std::bad_alloc();
        return static_cast<T*>(p);
    }
    void deallocate(T* p, std::size_t) noexcept { std::free(p); }
    template <class U>
    bool operator==(const Aligned64Allocator<U>&) const {
        return true;
    }
    template <class U>
    bool operator!=(const Aligned64Allocator<U>&) const {
        return false;
    }
};

/// Dense NCHW tensor. Scalar is float for training and double in
/// gradient-check mode.
template <class Scalar>
struct Tensor4 {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<Scalar, Aligned64Allocator<Scalar>> v;

    Tensor4() = default;
    Tensor4(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_), v(static_cast<size_t>(n_) * c_ * h_ * w_, Scalar(0)) {}

    static Tensor4 zeros_like(const Tensor4& t) { return Tensor4(t.n, t.c, t.h, t.w); }

    std::int64_t size() const { return static_cast<std::int64_t>(n) * c * h * w; }
    std::int64_t plane() const { return static_cast<std::int64_t>(h) * w; }

    Scalar& at(int in, int ic, int ih, int iw) {
        return v[((static_cast<size_t>(in) * c + ic) * h + ih) * w + iw];
    }
    const Scalar& at(int in, int ic, int ih, int iw) const {
        return v[((static_cast<size_t>(in) * c + ic) * h + ih) * w + iw];
    }

    Scalar* data() { return v.data(); }
    const Scalar* data() const { return v.data(); }

    bool same_shape(const Tensor4& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }

    bool all_finite() const {
        for (const Scalar x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }

    void require_finite(const char* what) const {
        if (!all_finite()) throw NumericsError(std::string("non-finite values in ") + what);
    }

    std::string shape_str() const {
        return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
               std::to_string(w) + ")";
    }

    template <class Other>
    Tensor4<Other> cast() const {
        Tensor4<Other> out(n, c, h, w);
        for (std::int64_t i = 0; i < size(); ++i) out.v[i] = static_cast<Other>(v[i]);
        return out;
    }
};

template <class Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

}  // namespace plumeseg
