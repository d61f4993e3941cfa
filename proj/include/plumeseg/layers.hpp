#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <vector>

#include "plumeseg/tensor.hpp"

namespace plumeseg {

// Layer primitives with analytic backward passes. Convolutions run as
// im2col + gemm; reduction order is fixed, so repeated runs are bit-identical
// on one platform.

namespace detail {

template <class S>
using MatMap = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <class S>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

/// col(r, oh*wo+ow) with r = (ic*kh + ki)*kw + kj holds
/// x(n, ic, oh*stride + ki - pad, ow*stride + kj - pad), zero outside.
template <class S>
void im2col(const Tensor4<S>& x, int sample, int kh, int kw, int pad, int stride, int ho, int wo,
            MatX<S>& col) {
    col.setZero(x.c * kh * kw, ho * wo);
    for (int ic = 0; ic < x.c; ++ic) {
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj) {
                const int r = (ic * kh + ki) * kw + kj;
                S* row = col.data() + static_cast<std::int64_t>(r) * ho * wo;
                for (int oh = 0; oh < ho; ++oh) {
                    const int ih = oh * stride + ki - pad;
                    if (ih < 0 || ih >= x.h) continue;
                    const S* src = &x.at(sample, ic, ih, 0);
                    for (int ow = 0; ow < wo; ++ow) {
                        const int iw = ow * stride + kj - pad;
                        if (iw < 0 || iw >= x.w) continue;
                        row[oh * wo + ow] = src[iw];
                    }
                }
            }
        }
    }
}

/// Adjoint of im2col: scatter-adds col back into the input gradient.
template <class S>
void col2im_add(const MatX<S>& col, Tensor4<S>& dx, int sample, int kh, int kw, int pad,
                int stride, int ho, int wo) {
    for (int ic = 0; ic < dx.c; ++ic) {
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj) {
                const int r = (ic * kh + ki) * kw + kj;
                const S* row = col.data() + static_cast<std::int64_t>(r) * ho * wo;
                for (int oh = 0; oh < ho; ++oh) {
                    const int ih = oh * stride + ki - pad;
                    if (ih < 0 || ih >= dx.h) continue;
                    S* dst = &dx.at(sample, ic, ih, 0);
                    for (int ow = 0; ow < wo; ++ow) {
                        const int iw = ow * stride + kj - pad;
                        if (iw < 0 || iw >= dx.w) continue;
                        dst[iw] += row[oh * wo + ow];
                    }
                }
            }
        }
    }
}

}  // namespace detail

/// Cross-correlation of x (n,cin,h,w) with kernel (cout,cin,kh,kw).
template <class S>
Tensor4<S> conv2d_forward(const Tensor4<S>& x, const Tensor4<S>& kernel, const VecX<S>& bias,
                          int pad, int stride) {
    if (kernel.c != x.c)
        throw ShapeError("conv2d: kernel channels " + std::to_string(kernel.c) +
                         " != input channels " + std::to_string(x.c));
    if (bias.size() != kernel.n) throw ShapeError("conv2d: bias length != output channels");
    if (pad < 0 || stride < 1) throw ShapeError("conv2d: bad pad/stride");
    const int kh = kernel.h, kw = kernel.w;
    if ((x.h + 2 * pad - kh) % stride != 0 || (x.w + 2 * pad - kw) % stride != 0)
        throw ShapeError("conv2d: non-integer output size");
    const int ho = (x.h + 2 * pad - kh) / stride + 1;
    const int wo = (x.w + 2 * pad - kw) / stride + 1;
    if (ho <= 0 || wo <= 0) throw ShapeError("conv2d: empty output");

    Tensor4<S> out(x.n, kernel.n, ho, wo);
    detail::ConstMatMap<S> K(kernel.data(), kernel.n, kernel.c * kh * kw);
    MatX<S> col;
    for (int s = 0; s < x.n; ++s) {
        detail::im2col(x, s, kh, kw, pad, stride, ho, wo, col);
        detail::MatMap<S> O(&out.at(s, 0, 0, 0), kernel.n, ho * wo);
        O.noalias() = K * col;
        O.colwise() += bias;
    }
    return out;
}

template <class S>
void conv2d_backward(const Tensor4<S>& x, const Tensor4<S>& kernel, int pad, int stride,
                     const Tensor4<S>& dout, Tensor4<S>& dx, Tensor4<S>& dkernel,
                     VecX<S>& dbias) {
    const int kh = kernel.h, kw = kernel.w;
    const int ho = dout.h, wo = dout.w;
    dx = Tensor4<S>::zeros_like(x);
    dkernel = Tensor4<S>::zeros_like(kernel);
    dbias = VecX<S>::Zero(kernel.n);

    detail::ConstMatMap<S> K(kernel.data(), kernel.n, kernel.c * kh * kw);
    detail::MatMap<S> dK(dkernel.data(), kernel.n, kernel.c * kh * kw);
    MatX<S> col, dcol;
    for (int s = 0; s < x.n; ++s) {
        detail::ConstMatMap<S> dO(&dout.at(s, 0, 0, 0), kernel.n, ho * wo);
        detail::im2col(x, s, kh, kw, pad, stride, ho, wo, col);
        dK.noalias() += dO * col.transpose();
        dbias += dO.rowwise().sum();
        dcol.noalias() = K.transpose() * dO;
        detail::col2im_add(dcol, dx, s, kh, kw, pad, stride, ho, wo);
    }
}

/// out = x where x > 0, slope[c] * x elsewhere.
template <class S>
Tensor4<S> prelu_forward(const Tensor4<S>& x, const VecX<S>& slope) {
    if (slope.size() != x.c) throw ShapeError("prelu: slope length != channels");
    Tensor4<S> out = x;
    for (int s = 0; s < x.n; ++s)
        for (int ic = 0; ic < x.c; ++ic) {
            S* p = &out.at(s, ic, 0, 0);
            const S a = slope[ic];
            for (std::int64_t i = 0; i < x.plane(); ++i)
                if (p[i] <= S(0)) p[i] *= a;
        }
    return out;
}

template <class S>
void prelu_backward(const Tensor4<S>& x, const VecX<S>& slope, const Tensor4<S>& dout,
                    Tensor4<S>& dx, VecX<S>& dslope) {
    dx = Tensor4<S>::zeros_like(x);
    dslope = VecX<S>::Zero(x.c);
    for (int s = 0; s < x.n; ++s)
        for (int ic = 0; ic < x.c; ++ic) {
            const S* xp = &x.at(s, ic, 0, 0);
            const S* gp = &dout.at(s, ic, 0, 0);
            S* dp = &dx.at(s, ic, 0, 0);
            const S a = slope[ic];
            S acc = S(0);
            for (std::int64_t i = 0; i < x.plane(); ++i) {
                if (xp[i] > S(0)) {
                    dp[i] = gp[i];
                } else {
                    dp[i] = a * gp[i];
                    acc += gp[i] * xp[i];
                }
            }
            dslope[ic] += acc;
        }
}

/// 2x2 max pooling with stride 2; ties route to the first window position in
/// row-major order. argmax records the flat input offset per output element.
template <class S>
Tensor4<S> maxpool2_forward(const Tensor4<S>& x, std::vector<std::int64_t>& argmax) {
    if (x.h % 2 != 0 || x.w % 2 != 0) throw ShapeError("maxpool2: odd spatial dims");
    Tensor4<S> out(x.n, x.c, x.h / 2, x.w / 2);
    argmax.assign(out.size(), 0);
    std::int64_t o = 0;
    for (int s = 0; s < x.n; ++s)
        for (int ic = 0; ic < x.c; ++ic)
            for (int oh = 0; oh < out.h; ++oh)
                for (int ow = 0; ow < out.w; ++ow) {
                    const std::int64_t base =
                        ((static_cast<std::int64_t>(s) * x.c + ic) * x.h + 2 * oh) * x.w + 2 * ow;
                    S best = x.v[base];
                    std::int64_t best_idx = base;
                    const std::int64_t cands[3] = {base + 1, base + x.w, base + x.w + 1};
                    for (const std::int64_t idx : cands)
                        if (x.v[idx] > best) {
                            best = x.v[idx];
                            best_idx = idx;
                        }
                    out.v[o] = best;
                    argmax[o] = best_idx;
                    ++o;
                }
    return out;
}

template <class S>
Tensor4<S> maxpool2_backward(const Tensor4<S>& x, const std::vector<std::int64_t>& argmax,
                             const Tensor4<S>& dout) {
    Tensor4<S> dx = Tensor4<S>::zeros_like(x);
    for (std::int64_t o = 0; o < dout.size(); ++o) dx.v[argmax[o]] += dout.v[o];
    return dx;
}

/// Transposed 2x2 stride-2 convolution. kernel is (cin, cout, 2, 2); output
/// doubles both spatial dims. Adjoint of a stride-2 2x2 cross-correlation.
template <class S>
Tensor4<S> upconv2_forward(const Tensor4<S>& x, const Tensor4<S>& kernel, const VecX<S>& bias) {
    if (kernel.n != x.c) throw ShapeError("upconv2: kernel in-channels != input channels");
    if (kernel.h != 2 || kernel.w != 2) throw ShapeError("upconv2: kernel must be 2x2");
    const int cout = kernel.c;
    if (bias.size() != cout) throw ShapeError("upconv2: bias length != output channels");

    Tensor4<S> out(x.n, cout, 2 * x.h, 2 * x.w);
    // K(:, :, di, dj) as a (cout x cin) matrix per window offset.
    MatX<S> Kd[2][2];
    for (int di = 0; di < 2; ++di)
        for (int dj = 0; dj < 2; ++dj) {
            Kd[di][dj].resize(cout, x.c);
            for (int ci = 0; ci < x.c; ++ci)
                for (int co = 0; co < cout; ++co) Kd[di][dj](co, ci) = kernel.at(ci, co, di, dj);
        }

    MatX<S> prod;
    for (int s = 0; s < x.n; ++s) {
        detail::ConstMatMap<S> X(&x.at(s, 0, 0, 0), x.c, x.h * x.w);
        for (int di = 0; di < 2; ++di)
            for (int dj = 0; dj < 2; ++dj) {
                prod.noalias() = Kd[di][dj] * X;
                for (int co = 0; co < cout; ++co) {
                    const S b = bias[co];
                    for (int ih = 0; ih < x.h; ++ih) {
                        S* dst = &out.at(s, co, 2 * ih + di, dj);
                        const S* src = &prod(co, ih * x.w);
                        for (int iw = 0; iw < x.w; ++iw) dst[2 * iw] = src[iw] + b;
                    }
                }
            }
    }
    return out;
}

template <class S>
void upconv2_backward(const Tensor4<S>& x, const Tensor4<S>& kernel, const Tensor4<S>& dout,
                      Tensor4<S>& dx, Tensor4<S>& dkernel, VecX<S>& dbias) {
    const int cout = kernel.c;
    dx = Tensor4<S>::zeros_like(x);
    dkernel = Tensor4<S>::zeros_like(kernel);
    dbias = VecX<S>::Zero(cout);

    MatX<S> Kd[2][2];
    for (int di = 0; di < 2; ++di)
        for (int dj = 0; dj < 2; ++dj) {
            Kd[di][dj].resize(cout, x.c);
            for (int ci = 0; ci < x.c; ++ci)
                for (int co = 0; co < cout; ++co) Kd[di][dj](co, ci) = kernel.at(ci, co, di, dj);
        }

    MatX<S> dsub(cout, x.h * x.w);
    MatX<S> dXacc, dKd;
    for (int s = 0; s < x.n; ++s) {
        detail::ConstMatMap<S> X(&x.at(s, 0, 0, 0), x.c, x.h * x.w);
        detail::MatMap<S> dX(&dx.at(s, 0, 0, 0), x.c, x.h * x.w);
        for (int di = 0; di < 2; ++di)
            for (int dj = 0; dj < 2; ++dj) {
                for (int co = 0; co < cout; ++co)
                    for (int ih = 0; ih < x.h; ++ih) {
                        const S* src = &dout.at(s, co, 2 * ih + di, dj);
                        S* dst = &dsub(co, ih * x.w);
                        for (int iw = 0; iw < x.w; ++iw) dst[iw] = src[2 * iw];
                    }
                dX.noalias() += Kd[di][dj].transpose() * dsub;
                dKd.noalias() = dsub * X.transpose();  // (cout x cin)
                for (int ci = 0; ci < x.c; ++ci)
                    for (int co = 0; co < cout; ++co) dkernel.at(ci, co, di, dj) += dKd(co, ci);
                dbias += dsub.rowwise().sum();
            }
    }
}

/// Channel concatenation [a; b]; inputs must agree on n, h, w.
template <class S>
Tensor4<S> concat_skip(const Tensor4<S>& a, const Tensor4<S>& b) {
    if (a.n != b.n || a.h != b.h || a.w != b.w)
        throw ShapeError("concat_skip: spatial/batch mismatch " + a.shape_str() + " vs " +
                         b.shape_str());
    Tensor4<S> out(a.n, a.c + b.c, a.h, a.w);
    for (int s = 0; s < a.n; ++s) {
        std::copy(&a.at(s, 0, 0, 0), &a.at(s, 0, 0, 0) + a.c * a.plane(), &out.at(s, 0, 0, 0));
        std::copy(&b.at(s, 0, 0, 0), &b.at(s, 0, 0, 0) + b.c * b.plane(),
                  &out.at(s, a.c, 0, 0));
    }
    return out;
}

template <class S>
void concat_split(const Tensor4<S>& dout, int ca, Tensor4<S>& da, Tensor4<S>& db) {
    da = Tensor4<S>(dout.n, ca, dout.h, dout.w);
    db = Tensor4<S>(dout.n, dout.c - ca, dout.h, dout.w);
    for (int s = 0; s < dout.n; ++s) {
        std::copy(&dout.at(s, 0, 0, 0), &dout.at(s, 0, 0, 0) + ca * dout.plane(),
                  &da.at(s, 0, 0, 0));
        std::copy(&dout.at(s, ca, 0, 0), &dout.at(s, ca, 0, 0) + db.c * dout.plane(),
                  &db.at(s, 0, 0, 0));
    }
}

template <class S>
Tensor4<S> sigmoid(const Tensor4<S>& x) {
    Tensor4<S> out = x;
    for (S& v : out.v) v = S(1) / (S(1) + std::exp(-v));
    return out;
}

/// dL/dx given dL/dy for y = sigmoid(x), using the forward output y.
template <class S>
Tensor4<S> sigmoid_backward(const Tensor4<S>& y, const Tensor4<S>& dout) {
    Tensor4<S> dx = dout;
    for (std::int64_t i = 0; i < y.size(); ++i) dx.v[i] *= y.v[i] * (S(1) - y.v[i]);
    return dx;
}

inline constexpr double kProbClamp = 1e-7;

/// Per-sample binary cross entropy, mean over pixels. prob is clamped to
/// [1e-7, 1 - 1e-7] before the logs.
template <class S>
VecX<S> bce_per_sample(const Tensor4<S>& prob, const Tensor4<S>& target) {
    if (!prob.same_shape(target)) throw ShapeError("bce: prob/target shape mismatch");
    VecX<S> loss(prob.n);
    const std::int64_t m = static_cast<std::int64_t>(prob.c) * prob.plane();
    for (int s = 0; s < prob.n; ++s) {
        S acc = S(0);
        const S* p = prob.data() + static_cast<std::int64_t>(s) * m;
        const S* y = target.data() + static_cast<std::int64_t>(s) * m;
        for (std::int64_t i = 0; i < m; ++i) {
            const S pc = std::clamp(p[i], S(kProbClamp), S(1) - S(kProbClamp));
            acc -= y[i] * std::log(pc) + (S(1) - y[i]) * std::log(S(1) - pc);
        }
        loss[s] = acc / S(m);
    }
    return loss;
}

/// d(sum_s weight[s] * BCE_s)/dprob. The clamp passes gradient through.
template <class S>
Tensor4<S> bce_backward(const Tensor4<S>& prob, const Tensor4<S>& target,
                        const VecX<S>& weights) {
    Tensor4<S> d = Tensor4<S>::zeros_like(prob);
    const std::int64_t m = static_cast<std::int64_t>(prob.c) * prob.plane();
    for (int s = 0; s < prob.n; ++s) {
        const S wgt = weights[s] / S(m);
        const S* p = prob.data() + static_cast<std::int64_t>(s) * m;
        const S* y = target.data() + static_cast<std::int64_t>(s) * m;
        S* g = d.data() + static_cast<std::int64_t>(s) * m;
        for (std::int64_t i = 0; i < m; ++i) {
            const S pc = std::clamp(p[i], S(kProbClamp), S(1) - S(kProbClamp));
            g[i] = wgt * (-y[i] / pc + (S(1) - y[i]) / (S(1) - pc));
        }
    }
    return d;
}

/// Per-sample mean absolute error over pixels.
template <class S>
VecX<S> mae_per_sample(const Tensor4<S>& prob, const Tensor4<S>& target) {
    if (!prob.same_shape(target)) throw ShapeError("mae: prob/target shape mismatch");
    VecX<S> loss(prob.n);
    const std::int64_t m = static_cast<std::int64_t>(prob.c) * prob.plane();
    for (int s = 0; s < prob.n; ++s) {
        S acc = S(0);
        const S* p = prob.data() + static_cast<std::int64_t>(s) * m;
        const S* y = target.data() + static_cast<std::int64_t>(s) * m;
        for (std::int64_t i = 0; i < m; ++i) acc += std::abs(p[i] - y[i]);
        loss[s] = acc / S(m);
    }
    return loss;
}

/// Subgradient at p == y is 0.
template <class S>
Tensor4<S> mae_backward(const Tensor4<S>& prob, const Tensor4<S>& target,
                        const VecX<S>& weights) {
    Tensor4<S> d = Tensor4<S>::zeros_like(prob);
    const std::int64_t m = static_cast<std::int64_t>(prob.c) * prob.plane();
    for (int s = 0; s < prob.n; ++s) {
        const S wgt = weights[s] / S(m);
        const S* p = prob.data() + static_cast<std::int64_t>(s) * m;
        const S* y = target.data() + static_cast<std::int64_t>(s) * m;
        S* g = d.data() + static_cast<std::int64_t>(s) * m;
        for (std::int64_t i = 0; i < m; ++i) {
            const S diff = p[i] - y[i];
            g[i] = diff > S(0) ? wgt : (diff < S(0) ? -wgt : S(0));
        }
    }
    return d;
}

}  // namespace plumeseg
