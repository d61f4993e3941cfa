#include <doctest.h>

#include "plumeseg/gradcheck.hpp"
#include "plumeseg/rng.hpp"
#include "plumeseg/unet.hpp"

using namespace plumeseg;

namespace {

template <class S>
Tensor4<S> random_tensor(int n, int c, int h, int w, Rng& rng, double lo = -1.0,
                         double hi = 1.0) {
    Tensor4<S> t(n, c, h, w);
    for (auto& v : t.v) v = S(rng.uniform(lo, hi));
    return t;
}

}  // namespace

TEST_CASE("depth-5 base-16 network maps 304x304 input to 304x304 output") {
    UNetConfig cfg{.in_channels = 3, .depth = 5, .base_filters = 16};
    UNet<float> net(cfg);
    Rng rng(1);
    net.init_params(rng);
    Tensor4<float> x = random_tensor<float>(1, 3, 304, 304, rng, 0.0, 1.0);
    const Tensor4<float> out = net.forward(x);
    CHECK(out.n == 1);
    CHECK(out.c == 1);
    CHECK(out.h == 304);
    CHECK(out.w == 304);
    for (const float v : out.v) {
        CHECK(v > 0.0f);
        CHECK(v < 1.0f);
    }
}

TEST_CASE("parameter count matches closed-form layer bookkeeping") {
    UNetConfig cfg{.in_channels = 3, .depth = 2, .base_filters = 1};
    UNet<double> net(cfg);

    // Per encoder/decoder block with cin inputs and cout outputs:
    //   conv1 cout*cin*9 + cout, prelu cout, conv2 cout*cout*9 + cout, prelu cout
    auto block = [](int cin, int cout) {
        return cout * cin * 9 + cout + cout + cout * cout * 9 + cout + cout;
    };
    std::int64_t expect = 0;
    expect += block(3, 1);              // enc0
    expect += block(1, 2);              // enc1 (bottleneck)
    expect += 2 * 1 * 2 * 2 + 1;        // dec0 upconv (cin=2, cout=1) + bias
    expect += block(2, 1);              // dec0 convs on the concatenated planes
    expect += 1 * 1 + 1;                // 1x1 head
    CHECK(net.state().parameter_count() == expect);
}

TEST_CASE("input not divisible by 2^(depth-1) -> ShapeError") {
    UNetConfig cfg{.in_channels = 3, .depth = 5, .base_filters = 2};
    UNet<float> net(cfg);
    Rng rng(2);
    net.init_params(rng);
    Tensor4<float> x = random_tensor<float>(1, 3, 300, 300, rng);
    CHECK_THROWS_AS(net.forward(x), ShapeError);
}

TEST_CASE("forward_padded reflect-pads 300 to 304 and crops back") {
    UNetConfig cfg{.in_channels = 3, .depth = 5, .base_filters = 2};
    UNet<float> net(cfg);
    Rng rng(3);
    net.init_params(rng);
    Tensor4<float> x = random_tensor<float>(1, 3, 300, 300, rng, 0.0, 1.0);
    const Tensor4<float> out = net.forward_padded(x);
    CHECK(out.h == 300);
    CHECK(out.w == 300);
}

TEST_CASE("forward is deterministic across runs") {
    UNetConfig cfg{.in_channels = 3, .depth = 3, .base_filters = 4};
    UNet<float> net(cfg);
    Rng rng(4);
    net.init_params(rng);
    Tensor4<float> x = random_tensor<float>(2, 3, 32, 32, rng, 0.0, 1.0);
    const Tensor4<float> a = net.forward(x);
    const Tensor4<float> b = net.forward(x);
    CHECK(a.v == b.v);
}

TEST_CASE("tiny full network passes the finite-difference gradient check") {
    UNetConfig cfg{.in_channels = 2, .depth = 2, .base_filters = 2};
    UNet<double> net(cfg);
    Rng rng(5);
    net.init_params(rng);
    Tensor4<double> x = random_tensor<double>(2, 2, 16, 16, rng, 0.0, 1.0);
    Tensor4<double> y(2, 1, 16, 16);
    for (auto& v : y.v) v = rng.uniform() < 0.4 ? 1.0 : 0.0;

    SUBCASE("BCE") {
        const GradCheckReport report = gradient_check_unet(net, x, y, LossKind::BCE);
        for (const auto& e : report.entries) {
            INFO(e.name);
            CHECK(e.max_rel_err < 1e-4);
        }
    }
    SUBCASE("MAE") {
        const GradCheckReport report = gradient_check_unet(net, x, y, LossKind::MAE);
        CHECK(report.max_rel_err < 1e-4);
    }
}

TEST_CASE("linear 1x1 stack has near-exact gradients") {
    // A single 1x1 conv path is linear in its parameters, so FD error is
    // dominated by roundoff only.
    Rng rng(6);
    Tensor4<double> x = random_tensor<double>(1, 2, 4, 4, rng);
    Tensor4<double> k = random_tensor<double>(1, 2, 1, 1, rng);
    VecX<double> b(1);
    b << 0.3;
    Tensor4<double> w = random_tensor<double>(1, 1, 4, 4, rng);
    auto loss = [&]() {
        const Tensor4<double> out = conv2d_forward(x, k, b, 0, 1);
        double acc = 0.0;
        for (std::int64_t i = 0; i < out.size(); ++i) acc += out.v[i] * w.v[i];
        return acc;
    };
    Tensor4<double> dx, dk;
    VecX<double> db;
    conv2d_backward(x, k, 0, 1, w, dx, dk, db);
    CHECK(max_rel_error(finite_difference(loss, k.data(), k.size()), dk.data(), dk.size()) <
          1e-7);
}
