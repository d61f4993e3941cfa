#include <doctest.h>

#include "plumeseg/evaluation.hpp"
#include "plumeseg/rng.hpp"

using namespace plumeseg;

namespace {

ProbMap random_prob(int n, Rng& rng) {
    ProbMap p;
    p.width = p.height = n;
    p.values = PlaneF(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) p.values(i, j) = static_cast<float>(rng.uniform());
    return p;
}

BitMask random_mask(int n, double density, Rng& rng) {
    BitMask m = BitMask::zeros(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m.bits(i, j) = rng.uniform() < density ? 1 : 0;
    return m;
}

RasterScene random_rgb_scene(int n, Rng& rng) {
    RasterScene s;
    s.width = s.height = n;
    s.channels = {ChannelId::Red, ChannelId::GreenSynth, ChannelId::Blue};
    s.transform = {.origin_x = 0.0, .origin_y = static_cast<double>(n),
                   .pixel_w = 1.0, .pixel_h = -1.0};
    for (int c = 0; c < 3; ++c) {
        PlaneF p(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) p(i, j) = static_cast<float>(rng.uniform(0.0, 1.3));
        s.planes.push_back(std::move(p));
    }
    return s;
}

}  // namespace

TEST_CASE("threshold") {
    Rng rng(1);

    SUBCASE("p=0.5 at t=0.5 sets the bit (>= rule)") {
        ProbMap p;
        p.width = p.height = 4;
        p.values = PlaneF::Constant(4, 4, 0.5f);
        CHECK(threshold(p, 0.5).count() == 16);
        CHECK(threshold(p, 0.5f + 1e-4f).count() == 0);
    }

    SUBCASE("random map matches the per-pixel comparison oracle") {
        const ProbMap p = random_prob(23, rng);
        const BitMask m = threshold(p, 0.37);
        for (int i = 0; i < 23; ++i)
            for (int j = 0; j < 23; ++j)
                CHECK(m.bits(i, j) == (p.values(i, j) >= 0.37f ? 1 : 0));
    }

    SUBCASE("monotone in t: higher threshold gives a subset") {
        const ProbMap p = random_prob(31, rng);
        const BitMask lo = threshold(p, 0.3), hi = threshold(p, 0.7);
        for (int i = 0; i < 31; ++i)
            for (int j = 0; j < 31; ++j)
                if (hi.bits(i, j)) CHECK(lo.bits(i, j) == 1);
    }

    SUBCASE("t outside (0,1) -> ConfigError") {
        const ProbMap p = random_prob(3, rng);
        CHECK_THROWS_AS(threshold(p, 0.0), ConfigError);
        CHECK_THROWS_AS(threshold(p, 1.0), ConfigError);
    }
}

TEST_CASE("dice") {
    Rng rng(2);

    SUBCASE("worked examples") {
        BitMask a = BitMask::zeros(4, 4), b = BitMask::zeros(4, 4);
        CHECK(dice(a, b) == 1.0);  // both empty, by convention
        a.bits(0, 0) = a.bits(0, 1) = a.bits(1, 0) = a.bits(1, 1) = 1;
        b.bits(1, 0) = b.bits(1, 1) = b.bits(2, 0) = b.bits(2, 1) = 1;
        CHECK(dice(a, b) == 0.5);  // |A|=|B|=4, |A^B|=2
        CHECK(dice(a, a) == 1.0);
        b.bits.setZero();
        b.bits(3, 3) = 1;
        CHECK(dice(a, b) == 0.0);  // disjoint nonempty
    }

    SUBCASE("symmetry, range, and the confusion identity on random masks") {
        for (int trial = 0; trial < 20; ++trial) {
            const BitMask a = random_mask(17, 0.3, rng);
            const BitMask b = random_mask(17, 0.6, rng);
            const double d = dice(a, b);
            CHECK(d == dice(b, a));
            CHECK(d >= 0.0);
            CHECK(d <= 1.0);
            CHECK(dice(a, a) == 1.0);
            const Confusion c = confusion(a, b);
            if (2 * c.tp + c.fp + c.fn > 0)
                CHECK(d == doctest::Approx(2.0 * c.tp / (2.0 * c.tp + c.fp + c.fn))
                               .epsilon(1e-12));
        }
    }

    SUBCASE("dim mismatch -> ShapeError") {
        CHECK_THROWS_AS(dice(BitMask::zeros(3, 3), BitMask::zeros(3, 4)), ShapeError);
    }
}

TEST_CASE("confusion") {
    SUBCASE("pred == truth -> no errors, absent precision on all-zero masks") {
        const BitMask z = BitMask::zeros(5, 5);
        const Confusion c = confusion(z, z);
        CHECK(c.fp == 0);
        CHECK(c.fn == 0);
        CHECK(c.tn == 25);
        CHECK_FALSE(c.precision.has_value());
        CHECK_FALSE(c.recall.has_value());
    }

    SUBCASE("all-ones prediction over half-ones truth") {
        BitMask pred = BitMask::zeros(4, 4), truth = BitMask::zeros(4, 4);
        pred.bits.setConstant(1);
        truth.bits.topRows(2).setConstant(1);
        const Confusion c = confusion(pred, truth);
        CHECK(c.precision == 0.5);
        CHECK(c.recall == 1.0);
        CHECK(c.tp == 8);
        CHECK(c.fp == 8);
        CHECK(c.tn == 0);
    }
}

TEST_CASE("predict_scene") {
    UNetConfig cfg{.in_channels = 3, .depth = 2, .base_filters = 2};
    UNet<float> net(cfg);
    Rng rng(3);
    net.init_params(rng);
    const NormStats stats = NormStats::defaults();

    SUBCASE("single-tile scene equals direct inference") {
        const RasterScene scene = random_rgb_scene(16, rng);
        const ProbMap p = predict_scene(net, scene, BandMode::OneBand, stats, 16);
        Sample s;
        s.scene = scene;
        s.label = BitMask::zeros(16, 16, scene.transform);
        const Tensor4<float> direct =
            net.forward_padded(input_tensor(normalize(s, stats).scene, BandMode::OneBand));
        for (int i = 0; i < 16; ++i)
            for (int j = 0; j < 16; ++j) CHECK(p.values(i, j) == direct.at(0, 0, i, j));
    }

    SUBCASE("non-divisible scene: flush edge tiles, overlaps averaged") {
        const RasterScene scene = random_rgb_scene(24, rng);
        const ProbMap p = predict_scene(net, scene, BandMode::OneBand, stats, 16);
        p.validate();

        auto tile_out = [&](int r0, int c0) {
            Sample s;
            s.scene = crop_window(scene, r0, c0, 16);
            s.label = BitMask::zeros(16, 16, s.scene.transform);
            return net.forward_padded(input_tensor(normalize(s, stats).scene, BandMode::OneBand));
        };
        const auto t00 = tile_out(0, 0), t08 = tile_out(0, 8), t80 = tile_out(8, 0),
                   t88 = tile_out(8, 8);
        // Corner covered only by the first tile.
        CHECK(p.values(2, 3) == t00.at(0, 0, 2, 3));
        // Pixel (2, 12): columns overlap tiles (0,0) and (0,8).
        CHECK(p.values(2, 12) ==
              doctest::Approx(0.5 * (t00.at(0, 0, 2, 12) + t08.at(0, 0, 2, 4))).epsilon(1e-6));
        // Center pixel (12, 12): all four tiles contribute.
        const double mean4 = 0.25 * (t00.at(0, 0, 12, 12) + t08.at(0, 0, 12, 4) +
                                     t80.at(0, 0, 4, 12) + t88.at(0, 0, 4, 4));
        CHECK(p.values(12, 12) == doctest::Approx(mean4).epsilon(1e-6));
    }

    SUBCASE("missing channels -> ChannelError") {
        RasterScene scene = random_rgb_scene(16, rng);
        scene.channels[2] = ChannelId::C07;  // no Blue anymore
        CHECK_THROWS_AS(predict_scene(net, scene, BandMode::OneBand, stats, 16), ChannelError);
    }
}
