#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "plumeseg/layers.hpp"
#include "plumeseg/optim.hpp"
#include "plumeseg/rng.hpp"
#include "plumeseg/tensor.hpp"

namespace plumeseg {

enum class UpMode { TransposedConv };

struct UNetConfig {
    int in_channels = 3;
    int depth = 5;
    int base_filters = 16;
    double prelu_init = 0.25;
    UpMode up_mode = UpMode::TransposedConv;

    void validate() const {
        if (depth < 2) throw ConfigError("unet depth must be >= 2");
        if (base_filters < 1) throw ConfigError("unet base_filters must be >= 1");
        if (in_channels < 1) throw ConfigError("unet in_channels must be >= 1");
    }

    /// Input dims must divide this (one maxpool per encoder transition).
    int spatial_divisor() const { return 1 << (depth - 1); }

    int filters_at(int level) const { return base_filters << level; }
};

/// Encoder/decoder segmentation network: per level two padded 3x3 convs with
/// per-channel PReLU, 2x2 maxpool between encoder levels, learned 2x2
/// transposed-conv upsampling with skip concatenation, and a 1x1 conv +
/// sigmoid head producing a single probability plane.
template <class S>
class UNet {
public:
    explicit UNet(const UNetConfig& cfg) : cfg_(cfg) {
        cfg.validate();
        build_blocks();
    }

    const UNetConfig& config() const { return cfg_; }
    ModelState<S>& state() { return state_; }
    const ModelState<S>& state() const { return state_; }

    /// He-style initialization; PReLU slopes start at cfg.prelu_init.
    void init_params(Rng& rng) {
        for (size_t b = 0; b < state_.params.size(); ++b) {
            Tensor4<S>& p = state_.params[b];
            const std::string& name = state_.names[b];
            if (name.ends_with("_w")) {
                const double fan_in = static_cast<double>(p.c) * p.h * p.w;
                const double std = std::sqrt(2.0 / fan_in);
                for (S& v : p.v) v = S(rng.normal() * std);
            } else if (name.ends_with("_slope")) {
                for (S& v : p.v) v = S(cfg_.prelu_init);
            } else {
                for (S& v : p.v) v = S(0);
            }
        }
    }

    /// Forward pass; keeps activations for a following backward() call.
    Tensor4<S> forward(const Tensor4<S>& x) {
        const int div = cfg_.spatial_divisor();
        if (x.c != cfg_.in_channels)
            throw ShapeError("unet: input has " + std::to_string(x.c) + " channels, expected " +
                             std::to_string(cfg_.in_channels));
        if (x.h % div != 0 || x.w % div != 0)
            throw ShapeError("unet: input " + std::to_string(x.h) + "x" + std::to_string(x.w) +
                             " not divisible by " + std::to_string(div));

        const int d = cfg_.depth;
        enc_.assign(d, Level{});
        dec_.assign(d - 1, Level{});
        pool_in_.assign(d - 1, Tensor4<S>{});
        pool_argmax_.assign(d - 1, {});
        up_in_.assign(d - 1, Tensor4<S>{});
        skip_out_.assign(d - 1, Tensor4<S>{});
        cat_in_a_.assign(d - 1, 0);

        Tensor4<S> cur = x;
        input_ = x;
        for (int k = 0; k < d; ++k) {
            if (k > 0) {
                pool_in_[k - 1] = cur;
                cur = maxpool2_forward(cur, pool_argmax_[k - 1]);
            }
            cur = run_block(enc_blocks_[k], cur, enc_[k]);
            if (k < d - 1) skip_out_[k] = cur;
        }
        for (int k = d - 2; k >= 0; --k) {
            up_in_[k] = cur;
            Tensor4<S> up = upconv2_forward(cur, param(up_w_[k]), bias_vec(up_b_[k]));
            cat_in_a_[k] = skip_out_[k].c;
            Tensor4<S> cat = concat_skip(skip_out_[k], up);
            cur = run_block(dec_blocks_[k], cat, dec_[k]);
        }
        head_in_ = cur;
        logits_ = conv2d_forward(cur, param(head_w_), bias_vec(head_b_), 0, 1);
        prob_ = sigmoid(logits_);
        return prob_;
    }

    /// Gradients w.r.t. every parameter block, aligned with state() order.
    /// dprob is dL/d(probability output) from the loss.
    std::vector<Tensor4<S>> backward(const Tensor4<S>& dprob) {
        std::vector<Tensor4<S>> grads;
        grads.reserve(state_.params.size());
        for (const auto& p : state_.params) grads.push_back(Tensor4<S>::zeros_like(p));
        std::vector<VecX<S>> bias_grads(state_.params.size());

        Tensor4<S> dcur = sigmoid_backward(prob_, dprob);
        {
            Tensor4<S> dx, dk;
            VecX<S> db;
            conv2d_backward(head_in_, param(head_w_), 0, 1, dcur, dx, dk, db);
            grads[head_w_] = std::move(dk);
            set_bias_grad(grads[head_b_], db);
            dcur = std::move(dx);
        }

        const int d = cfg_.depth;
        dskip_pending_.assign(d - 1, Tensor4<S>{});
        for (int k = 0; k < d - 1; ++k) {
            dcur = block_backward(dec_blocks_[k], dec_[k], dcur, grads);
            Tensor4<S> dskip, dup;
            concat_split(dcur, cat_in_a_[k], dskip, dup);
            Tensor4<S> dx, dk;
            VecX<S> db;
            upconv2_backward(up_in_[k], param(up_w_[k]), dup, dx, dk, db);
            grads[up_w_[k]] = std::move(dk);
            set_bias_grad(grads[up_b_[k]], db);
            dskip_pending_[k] = std::move(dskip);
            dcur = std::move(dx);
        }
        // dcur now reaches the bottleneck encoder block; walk back up adding
        // each level's skip gradient after its pool backward.
        for (int k = d - 1; k >= 0; --k) {
            if (k < d - 1) {
                // Skip gradient joins the downstream gradient at this level.
                const Tensor4<S>& dskip = dskip_pending_[k];
                for (std::int64_t i = 0; i < dcur.size(); ++i) dcur.v[i] += dskip.v[i];
            }
            dcur = block_backward(enc_blocks_[k], enc_[k], dcur, grads);
            if (k > 0) dcur = maxpool2_backward(pool_in_[k - 1], pool_argmax_[k - 1], dcur);
        }
        dskip_pending_.clear();
        dinput_ = std::move(dcur);
        return grads;
    }

    const Tensor4<S>& input_gradient() const { return dinput_; }

    /// Reflect-pads to the spatial divisor, runs forward, crops back.
    Tensor4<S> forward_padded(const Tensor4<S>& x) {
        const int div = cfg_.spatial_divisor();
        const int ph = (x.h % div == 0) ? x.h : (x.h / div + 1) * div;
        const int pw = (x.w % div == 0) ? x.w : (x.w / div + 1) * div;
        if (ph == x.h && pw == x.w) {
            pad_top_ = pad_left_ = 0;
            return forward(x);
        }
        pad_top_ = (ph - x.h) / 2;
        pad_left_ = (pw - x.w) / 2;
        Tensor4<S> padded = reflect_pad(x, ph, pw, pad_top_, pad_left_);
        Tensor4<S> out = forward(padded);
        return center_crop(out, x.h, x.w, pad_top_, pad_left_);
    }

    /// Backward matching forward_padded: embeds the cropped-output gradient
    /// back into the padded frame. Input gradients are discarded (inputs are
    /// data, not parameters).
    std::vector<Tensor4<S>> backward_padded(const Tensor4<S>& dprob_cropped) {
        if (dprob_cropped.h == prob_.h && dprob_cropped.w == prob_.w)
            return backward(dprob_cropped);
        Tensor4<S> full = Tensor4<S>(dprob_cropped.n, dprob_cropped.c, prob_.h, prob_.w);
        for (int s = 0; s < dprob_cropped.n; ++s)
            for (int ic = 0; ic < dprob_cropped.c; ++ic)
                for (int i = 0; i < dprob_cropped.h; ++i)
                    for (int j = 0; j < dprob_cropped.w; ++j)
                        full.at(s, ic, i + pad_top_, j + pad_left_) =
                            dprob_cropped.at(s, ic, i, j);
        return backward(full);
    }

    static Tensor4<S> reflect_pad(const Tensor4<S>& x, int ph, int pw, int top, int left) {
        Tensor4<S> out(x.n, x.c, ph, pw);
        auto mirror = [](int i, int n) {
            if (i < 0) i = -i;
            if (i >= n) i = 2 * n - 2 - i;
            return i;
        };
        for (int s = 0; s < x.n; ++s)
            for (int ic = 0; ic < x.c; ++ic)
                for (int i = 0; i < ph; ++i) {
                    const int si = mirror(i - top, x.h);
                    for (int j = 0; j < pw; ++j)
                        out.at(s, ic, i, j) = x.at(s, ic, si, mirror(j - left, x.w));
                }
        return out;
    }

    static Tensor4<S> center_crop(const Tensor4<S>& x, int h, int w, int top, int left) {
        Tensor4<S> out(x.n, x.c, h, w);
        for (int s = 0; s < x.n; ++s)
            for (int ic = 0; ic < x.c; ++ic)
                for (int i = 0; i < h; ++i)
                    for (int j = 0; j < w; ++j)
                        out.at(s, ic, i, j) = x.at(s, ic, i + top, j + left);
        return out;
    }

private:
    struct Block {
        int conv1_w, conv1_b, slope1, conv2_w, conv2_b, slope2;
    };
    struct Level {
        Tensor4<S> conv1_in, prelu1_in, conv2_in, prelu2_in;
    };

    const Tensor4<S>& param(int idx) const { return state_.params[idx]; }

    VecX<S> bias_vec(int idx) const {
        const Tensor4<S>& p = state_.params[idx];
        return Eigen::Map<const VecX<S>>(p.data(), p.size());
    }

    static void set_bias_grad(Tensor4<S>& block, const VecX<S>& g) {
        for (std::int64_t i = 0; i < block.size(); ++i) block.v[i] = g[i];
    }

    Tensor4<S> run_block(const Block& b, const Tensor4<S>& in, Level& memo) {
        memo.conv1_in = in;
        Tensor4<S> a1 = conv2d_forward(in, param(b.conv1_w), bias_vec(b.conv1_b), 1, 1);
        memo.prelu1_in = a1;
        Tensor4<S> p1 = prelu_forward(a1, bias_vec(b.slope1));
        memo.conv2_in = p1;
        Tensor4<S> a2 = conv2d_forward(p1, param(b.conv2_w), bias_vec(b.conv2_b), 1, 1);
        memo.prelu2_in = a2;
        return prelu_forward(a2, bias_vec(b.slope2));
    }

    Tensor4<S> block_backward(const Block& b, const Level& memo, const Tensor4<S>& dout,
                              std::vector<Tensor4<S>>& grads) {
        Tensor4<S> dx;
        VecX<S> dvec;
        prelu_backward(memo.prelu2_in, bias_vec(b.slope2), dout, dx, dvec);
        set_bias_grad(grads[b.slope2], dvec);

        Tensor4<S> dk, dconv_in;
        VecX<S> db;
        conv2d_backward(memo.conv2_in, param(b.conv2_w), 1, 1, dx, dconv_in, dk, db);
        grads[b.conv2_w] = std::move(dk);
        set_bias_grad(grads[b.conv2_b], db);

        prelu_backward(memo.prelu1_in, bias_vec(b.slope1), dconv_in, dx, dvec);
        set_bias_grad(grads[b.slope1], dvec);

        conv2d_backward(memo.conv1_in, param(b.conv1_w), 1, 1, dx, dconv_in, dk, db);
        grads[b.conv1_w] = std::move(dk);
        set_bias_grad(grads[b.conv1_b], db);
        return dconv_in;
    }

    int add_param(const std::string& name, Tensor4<S> shape) {
        state_.add(name, std::move(shape));
        return static_cast<int>(state_.params.size()) - 1;
    }

    Block add_block(const std::string& prefix, int cin, int cout) {
        Block b;
        b.conv1_w = add_param(prefix + "_conv1_w", Tensor4<S>(cout, cin, 3, 3));
        b.conv1_b = add_param(prefix + "_conv1_b", Tensor4<S>(cout, 1, 1, 1));
        b.slope1 = add_param(prefix + "_prelu1_slope", Tensor4<S>(cout, 1, 1, 1));
        b.conv2_w = add_param(prefix + "_conv2_w", Tensor4<S>(cout, cout, 3, 3));
        b.conv2_b = add_param(prefix + "_conv2_b", Tensor4<S>(cout, 1, 1, 1));
        b.slope2 = add_param(prefix + "_prelu2_slope", Tensor4<S>(cout, 1, 1, 1));
        return b;
    }

    void build_blocks() {
        const int d = cfg_.depth;
        for (int k = 0; k < d; ++k) {
            const int cin = (k == 0) ? cfg_.in_channels : cfg_.filters_at(k - 1);
            enc_blocks_.push_back(add_block("enc" + std::to_string(k), cin, cfg_.filters_at(k)));
        }
        up_w_.resize(d - 1);
        up_b_.resize(d - 1);
        dec_blocks_.resize(d - 1, Block{});
        for (int k = d - 2; k >= 0; --k) {
            const int cin = cfg_.filters_at(k + 1);
            const int cout = cfg_.filters_at(k);
            const std::string prefix = "dec" + std::to_string(k);
            up_w_[k] = add_param(prefix + "_up_w", Tensor4<S>(cin, cout, 2, 2));
            up_b_[k] = add_param(prefix + "_up_b", Tensor4<S>(cout, 1, 1, 1));
            dec_blocks_[k] = add_block(prefix, 2 * cout, cout);
        }
        head_w_ = add_param("head_w", Tensor4<S>(1, cfg_.base_filters, 1, 1));
        head_b_ = add_param("head_b", Tensor4<S>(1, 1, 1, 1));
    }

    UNetConfig cfg_;
    ModelState<S> state_;
    std::vector<Block> enc_blocks_, dec_blocks_;
    std::vector<int> up_w_, up_b_;
    int head_w_ = -1, head_b_ = -1;

    // Forward memos.
    Tensor4<S> input_, head_in_, logits_, prob_, dinput_;
    std::vector<Level> enc_, dec_;
    std::vector<Tensor4<S>> pool_in_, up_in_, skip_out_;
    std::vector<std::vector<std::int64_t>> pool_argmax_;
    std::vector<int> cat_in_a_;
    std::vector<Tensor4<S>> dskip_pending_;
    int pad_top_ = 0, pad_left_ = 0;
};

}  // namespace plumeseg
