// Acceptance suite: 12 criteria, each printed as a PASS/FAIL line with its
// runtime. Exit code 0 iff every criterion passes. Criterion 11 shells out to
// the CLI binary named by PLUMESEG_BIN.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "plumeseg/checkpoint.hpp"
#include "plumeseg/evaluation.hpp"
#include "plumeseg/gradcheck.hpp"
#include "plumeseg/panelfe.hpp"
#include "plumeseg/training.hpp"

using namespace plumeseg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
    std::uint64_t digest = 0;  // criteria 8-11 feed the determinism check
};

// ---------------------------------------------------------------------------
// Small helpers

class Digest {
public:
    void add(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        add(bits);
    }
    void add(std::uint64_t v) {
        for (int b = 0; b < 8; ++b) {
            h_ ^= (v >> (8 * b)) & 0xff;
            h_ *= 1099511628211ull;
        }
    }
    void add(const std::string& s) {
        for (const unsigned char c : s) {
            h_ ^= c;
            h_ *= 1099511628211ull;
        }
    }
    std::uint64_t value() const { return h_; }

private:
    std::uint64_t h_ = 1469598103934665603ull;
};

template <class S>
Tensor4<S> random_tensor(int n, int c, int h, int w, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor4<S> t(n, c, h, w);
    for (auto& v : t.v) v = S(rng.uniform(lo, hi));
    return t;
}

std::vector<Sample> synth_samples(const SynthConfig& cfg, int n, Rng& rng) {
    std::vector<Sample> out;
    for (int i = 0; i < n; ++i) {
        Sample s;
        auto [scene, label] = generate_synthetic(cfg, rng);
        s.scene = std::move(scene);
        s.label = std::move(label);
        s.base_id = "synth" + std::to_string(i);
        s.id = s.base_id + "_crop0";
        s.positive = s.label.any();
        out.push_back(std::move(s));
    }
    return out;
}

TrainConfig flat_lr_config(std::uint64_t seed, int epochs, int batch, double lr,
                           LossKind loss = LossKind::BCE, bool drop_highest = false) {
    TrainConfig tc;
    tc.hyper.epochs = epochs;
    tc.hyper.batch = batch;
    tc.hyper.lr0 = lr;
    tc.hyper.gamma = 1.0;
    tc.hyper.step_epochs = 1000000;
    tc.seed = seed;
    tc.loss = loss;
    tc.drop_highest = drop_highest;
    return tc;
}

std::string fmt(double v) {
    std::ostringstream ss;
    ss.precision(4);
    ss << v;
    return ss.str();
}

// ---------------------------------------------------------------------------
// Criterion 1: gradient correctness, per layer and full tiny U-Net, < 1e-4.

Outcome criterion1() {
    Rng rng(1001);
    double worst = 0.0;

    {  // conv2d: kernel, bias, and input gradients against central FD
        Tensor4<double> x = random_tensor<double>(2, 3, 7, 7, rng);
        Tensor4<double> k = random_tensor<double>(4, 3, 3, 3, rng);
        VecX<double> b = VecX<double>::Random(4);
        Tensor4<double> w = random_tensor<double>(2, 4, 7, 7, rng);  // fixed cotangent
        auto loss = [&]() {
            const Tensor4<double> out = conv2d_forward(x, k, b, 1, 1);
            double acc = 0.0;
            for (std::int64_t i = 0; i < out.size(); ++i) acc += out.v[i] * w.v[i];
            return acc;
        };
        Tensor4<double> dx, dk;
        VecX<double> db;
        conv2d_backward(x, k, 1, 1, w, dx, dk, db);
        worst = std::max(worst, max_rel_error(finite_difference(loss, k.data(), k.size()),
                                              dk.data(), dk.size()));
        worst = std::max(worst, max_rel_error(finite_difference(loss, b.data(), b.size()),
                                              db.data(), db.size()));
        worst = std::max(worst, max_rel_error(finite_difference(loss, x.data(), x.size()),
                                              dx.data(), dx.size()));
    }
    {  // prelu slopes and input
        Tensor4<double> x = random_tensor<double>(2, 3, 5, 5, rng);
        VecX<double> slope = VecX<double>::Constant(3, 0.25);
        Tensor4<double> w = random_tensor<double>(2, 3, 5, 5, rng);
        auto loss = [&]() {
            const Tensor4<double> out = prelu_forward(x, slope);
            double acc = 0.0;
            for (std::int64_t i = 0; i < out.size(); ++i) acc += out.v[i] * w.v[i];
            return acc;
        };
        Tensor4<double> dx;
        VecX<double> dslope;
        prelu_backward(x, slope, w, dx, dslope);
        worst = std::max(worst, max_rel_error(finite_difference(loss, slope.data(), 3),
                                              dslope.data(), 3));
        worst = std::max(worst, max_rel_error(finite_difference(loss, x.data(), x.size()),
                                              dx.data(), dx.size()));
    }
    {  // maxpool input gradient
        Tensor4<double> x = random_tensor<double>(2, 2, 6, 6, rng);
        Tensor4<double> w = random_tensor<double>(2, 2, 3, 3, rng);
        std::vector<std::int64_t> argmax;
        auto loss = [&]() {
            std::vector<std::int64_t> am;
            const Tensor4<double> out = maxpool2_forward(x, am);
            double acc = 0.0;
            for (std::int64_t i = 0; i < out.size(); ++i) acc += out.v[i] * w.v[i];
            return acc;
        };
        maxpool2_forward(x, argmax);
        const Tensor4<double> dx = maxpool2_backward(x, argmax, w);
        worst = std::max(worst, max_rel_error(finite_difference(loss, x.data(), x.size()),
                                              dx.data(), dx.size()));
    }
    {  // transposed-conv kernel, bias, input
        Tensor4<double> x = random_tensor<double>(1, 3, 4, 4, rng);
        Tensor4<double> k = random_tensor<double>(3, 2, 2, 2, rng);
        VecX<double> b = VecX<double>::Random(2);
        Tensor4<double> w = random_tensor<double>(1, 2, 8, 8, rng);
        auto loss = [&]() {
            const Tensor4<double> out = upconv2_forward(x, k, b);
            double acc = 0.0;
            for (std::int64_t i = 0; i < out.size(); ++i) acc += out.v[i] * w.v[i];
            return acc;
        };
        Tensor4<double> dx, dk;
        VecX<double> db;
        upconv2_backward(x, k, w, dx, dk, db);
        worst = std::max(worst, max_rel_error(finite_difference(loss, k.data(), k.size()),
                                              dk.data(), dk.size()));
        worst = std::max(worst, max_rel_error(finite_difference(loss, b.data(), b.size()),
                                              db.data(), db.size()));
        worst = std::max(worst, max_rel_error(finite_difference(loss, x.data(), x.size()),
                                              dx.data(), dx.size()));
    }
    {  // sigmoid + losses through their backward routines
        Tensor4<double> z = random_tensor<double>(2, 1, 4, 4, rng);
        Tensor4<double> y(2, 1, 4, 4);
        for (auto& v : y.v) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
        const VecX<double> weights = VecX<double>::Constant(2, 0.5);
        for (const bool use_bce : {true, false}) {
            auto loss = [&]() {
                const Tensor4<double> p = sigmoid(z);
                const VecX<double> per = use_bce ? bce_per_sample(p, y) : mae_per_sample(p, y);
                return 0.5 * (per[0] + per[1]);
            };
            const Tensor4<double> p = sigmoid(z);
            const Tensor4<double> dp =
                use_bce ? bce_backward(p, y, weights) : mae_backward(p, y, weights);
            const Tensor4<double> dz = sigmoid_backward(p, dp);
            worst = std::max(worst, max_rel_error(finite_difference(loss, z.data(), z.size()),
                                                  dz.data(), dz.size()));
        }
    }

    // Full tiny network, both losses.
    UNetConfig cfg{.in_channels = 2, .depth = 2, .base_filters = 2};
    UNet<double> net(cfg);
    net.init_params(rng);
    Tensor4<double> x = random_tensor<double>(1, 2, 16, 16, rng, 0.0, 1.0);
    Tensor4<double> y(1, 1, 16, 16);
    for (auto& v : y.v) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
    for (const LossKind loss : {LossKind::BCE, LossKind::MAE}) {
        const GradCheckReport report = gradient_check_unet(net, x, y, loss);
        worst = std::max(worst, report.max_rel_err);
    }

    return {worst < 1e-4, "max relative error " + fmt(worst)};
}

// ---------------------------------------------------------------------------
// Criterion 2: forward passes vs naive loop oracles, 200 random shapes, 1e-6.

Outcome criterion2() {
    Rng rng(1002);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const int n = static_cast<int>(rng.uniform_int(1, 2));
        const int cin = static_cast<int>(rng.uniform_int(1, 3));
        const int cout = static_cast<int>(rng.uniform_int(1, 4));
        const int kh = static_cast<int>(rng.uniform_int(1, 3));
        const int kw = static_cast<int>(rng.uniform_int(1, 3));
        const int pad = static_cast<int>(rng.uniform_int(0, 1));
        const int stride = static_cast<int>(rng.uniform_int(1, 2));
        int h = static_cast<int>(rng.uniform_int(kh + 2, 9));
        int w = static_cast<int>(rng.uniform_int(kw + 2, 9));
        h -= (h + 2 * pad - kh) % stride;  // keep the output size integral
        w -= (w + 2 * pad - kw) % stride;

        Tensor4<double> x = random_tensor<double>(n, cin, h, w, rng);
        Tensor4<double> k = random_tensor<double>(cout, cin, kh, kw, rng);
        VecX<double> b = VecX<double>::Random(cout);
        const Tensor4<double> out = conv2d_forward(x, k, b, pad, stride);
        for (int s = 0; s < n; ++s)
            for (int oc = 0; oc < cout; ++oc)
                for (int i = 0; i < out.h; ++i)
                    for (int j = 0; j < out.w; ++j) {
                        double acc = b[oc];
                        for (int ic = 0; ic < cin; ++ic)
                            for (int di = 0; di < kh; ++di)
                                for (int dj = 0; dj < kw; ++dj) {
                                    const int si = i * stride + di - pad;
                                    const int sj = j * stride + dj - pad;
                                    if (si < 0 || si >= h || sj < 0 || sj >= w) continue;
                                    acc += x.at(s, ic, si, sj) * k.at(oc, ic, di, dj);
                                }
                        worst = std::max(worst, std::abs(acc - out.at(s, oc, i, j)));
                    }

        if (h % 2 == 0 && w % 2 == 0) {  // maxpool oracle on even dims
            std::vector<std::int64_t> argmax;
            const Tensor4<double> pooled = maxpool2_forward(x, argmax);
            for (int s = 0; s < n; ++s)
                for (int ic = 0; ic < cin; ++ic)
                    for (int i = 0; i < h / 2; ++i)
                        for (int j = 0; j < w / 2; ++j) {
                            const double m = std::max(
                                {x.at(s, ic, 2 * i, 2 * j), x.at(s, ic, 2 * i, 2 * j + 1),
                                 x.at(s, ic, 2 * i + 1, 2 * j), x.at(s, ic, 2 * i + 1, 2 * j + 1)});
                            worst = std::max(worst, std::abs(m - pooled.at(s, ic, i, j)));
                        }
        }

        {  // per-sample losses vs scalar loops
            Tensor4<double> prob = random_tensor<double>(n, 1, h, w, rng, 0.001, 0.999);
            Tensor4<double> target(n, 1, h, w);
            for (auto& v : target.v) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
            const VecX<double> bce = bce_per_sample(prob, target);
            const VecX<double> mae = mae_per_sample(prob, target);
            for (int s = 0; s < n; ++s) {
                double acc_b = 0.0, acc_m = 0.0;
                for (int i = 0; i < h; ++i)
                    for (int j = 0; j < w; ++j) {
                        const double p = prob.at(s, 0, i, j), t = target.at(s, 0, i, j);
                        acc_b -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
                        acc_m += std::abs(p - t);
                    }
                worst = std::max(worst, std::abs(acc_b / (h * w) - bce[s]));
                worst = std::max(worst, std::abs(acc_m / (h * w) - mae[s]));
            }
        }
    }
    return {worst < 1e-6, "max deviation from loop oracles " + fmt(worst)};
}

// ---------------------------------------------------------------------------
// Criterion 3: exact lr schedule.

Outcome criterion3() {
    const TrainHyper hyper;  // paper defaults
    bool ok = true;
    for (int e = 0; e <= 8; ++e) ok = ok && lr_at_epoch(hyper, e) == 5e-5;
    for (int e = 9; e <= 17; ++e) ok = ok && lr_at_epoch(hyper, e) == 5e-5 * 0.1;
    for (int e = 18; e <= 20; ++e) ok = ok && lr_at_epoch(hyper, e) == 5e-5 * 0.1 * 0.1;
    return {ok, "5e-5/5e-6/5e-7 at epochs 0-8/9-17/18-20"};
}

// ---------------------------------------------------------------------------
// Criterion 4: Dice properties on 1000 random mask pairs, exact.

Outcome criterion4() {
    Rng rng(1004);
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = static_cast<int>(rng.uniform_int(1, 24));
        BitMask a = BitMask::zeros(n, n), b = BitMask::zeros(n, n);
        const double da = rng.uniform(), db = rng.uniform();
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                a.bits(i, j) = rng.uniform() < da ? 1 : 0;
                b.bits(i, j) = rng.uniform() < db ? 1 : 0;
            }
        const double d = dice(a, b);
        if (d != dice(b, a)) return {false, "symmetry violated"};
        if (d < 0.0 || d > 1.0) return {false, "range violated"};
        if (dice(a, a) != 1.0) return {false, "self-identity violated"};
        const Confusion c = confusion(a, b);
        const double denom = static_cast<double>(2 * c.tp + c.fp + c.fn);
        const double via_confusion = denom == 0.0 ? 1.0 : 2.0 * c.tp / denom;
        if (d != via_confusion) return {false, "2tp/(2tp+fp+fn) identity violated"};
    }
    return {true, "symmetry/range/self-identity/confusion identity on 1000 pairs"};
}

// ---------------------------------------------------------------------------
// Criterion 5: rasterize vs per-pixel-center point_in_polygon, 100 polygons.

Outcome criterion5() {
    Rng rng(1005);
    const GeoTransform t{.origin_x = 0.0, .origin_y = 64.0, .pixel_w = 1.0, .pixel_h = -1.0};
    std::int64_t mismatches = 0;
    for (int trial = 0; trial < 100; ++trial) {
        // Star polygon: random center, radius varying by angle.
        PlumePolygon poly;
        const double cx = rng.uniform(8.0, 56.0), cy = rng.uniform(8.0, 56.0);
        const int verts = static_cast<int>(rng.uniform_int(5, 14));
        std::vector<Eigen::Vector2d> ring;
        for (int k = 0; k < verts; ++k) {
            const double a = 2.0 * M_PI * k / verts;
            const double r = rng.uniform(3.0, 24.0);
            ring.push_back({cx + r * std::cos(a), cy + r * std::sin(a)});
        }
        ring.push_back(ring.front());
        poly.rings.push_back(std::move(ring));
        AnnotationSet set;
        set.polygons.push_back(poly);

        const BitMask mask = rasterize(set, t, 64, 64);
        for (int i = 0; i < 64; ++i)
            for (int j = 0; j < 64; ++j) {
                const bool in = point_in_polygon(t.pixel_center(i, j), poly);
                if (in != (mask.bits(i, j) != 0)) ++mismatches;
            }
    }
    return {mismatches == 0,
            mismatches == 0 ? "100% pixel agreement over 100 polygons"
                            : std::to_string(mismatches) + " disagreeing pixels"};
}

// ---------------------------------------------------------------------------
// Criterion 6: crop sampler counts and leakage-free splits.

Outcome criterion6() {
    {  // 9 positive / 6 negative on an ample scene
        RasterScene scene;
        scene.width = scene.height = 900;
        scene.channels = {ChannelId::Red, ChannelId::GreenSynth, ChannelId::Blue};
        scene.transform = {.origin_x = 0.0, .origin_y = 900.0, .pixel_w = 1.0, .pixel_h = -1.0};
        for (int c = 0; c < 3; ++c) scene.planes.emplace_back(PlaneF::Constant(900, 900, 0.3f));
        BitMask mask = BitMask::zeros(900, 900, scene.transform);
        mask.bits.block(20, 20, 100, 100).setConstant(1);
        Rng rng(1006);
        const auto crops = sample_crops(scene, mask, "scene", rng);
        int pos = 0, neg = 0;
        for (const Sample& s : crops) (s.positive ? pos : neg)++;
        if (pos != 9 || neg != 6)
            return {false, "crop sampler gave " + std::to_string(pos) + "+/" +
                               std::to_string(neg) + "-, wanted 9+/6-"};
    }

    Rng rng(1066);
    for (int corpus = 0; corpus < 500; ++corpus) {
        const int bases = static_cast<int>(rng.uniform_int(2, 60));
        std::vector<Sample> samples;
        for (int g = 0; g < bases; ++g) {
            const int count = static_cast<int>(rng.uniform_int(1, 20));
            for (int k = 0; k < count; ++k) {
                Sample s;
                s.base_id = "b" + std::to_string(g);
                s.id = s.base_id + "_c" + std::to_string(k);
                samples.push_back(std::move(s));
            }
        }
        Rng split_rng(2000 + corpus);
        const SplitManifest m = group_split(samples, {0.70, 0.15, 0.15}, split_rng);

        // Leakage: every sample of a base lands in the split its base was assigned.
        auto contains = [](const std::vector<std::string>& v, const std::string& id) {
            return std::find(v.begin(), v.end(), id) != v.end();
        };
        for (const Sample& s : samples) {
            const std::string& split = m.base_assignment.at(s.base_id);
            const auto& bucket = split == "train" ? m.train : (split == "val" ? m.val : m.test);
            if (!contains(bucket, s.id))
                return {false, "leakage: sample outside its base's split (corpus " +
                                   std::to_string(corpus) + ")"};
        }
        if (m.train.size() + m.val.size() + m.test.size() != samples.size())
            return {false, "split dropped or duplicated samples"};

        if (bases >= 20) {
            const double total = static_cast<double>(samples.size());
            const double shares[3] = {m.train.size() / total, m.val.size() / total,
                                      m.test.size() / total};
            const double targets[3] = {0.70, 0.15, 0.15};
            for (int k = 0; k < 3; ++k)
                if (std::abs(shares[k] - targets[k]) > 0.05)
                    return {false, "share off by " + fmt(std::abs(shares[k] - targets[k])) +
                                       " (corpus " + std::to_string(corpus) + ")"};
        }
    }
    return {true, "9+/6- crops; 500 corpora leak-free, shares within 5pp"};
}

// ---------------------------------------------------------------------------
// Criterion 7: fe_fit vs lsdv_oracle on 100 random panels; absorption 1e-10.

Outcome criterion7() {
    Rng rng(1007);
    double worst = 0.0, worst_absorb = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int stations = static_cast<int>(rng.uniform_int(2, 50));
        std::vector<PanelObservation> panel;
        for (int s = 0; s < stations; ++s) {
            const int days = static_cast<int>(rng.uniform_int(2, 200));
            for (int d = 0; d < days; ++d) {
                const int smoke = rng.uniform() < 0.35 ? 1 : 0;
                const double pm = std::max(0.0, 6.0 + 7.5 * smoke + 2.0 * s + rng.normal() * 2.5);
                panel.push_back({"st" + std::to_string(s), civil_from_days(18000 + d), pm, smoke});
            }
        }
        panel[0].smoke = 0;
        panel[1].smoke = 1;  // guarantee within variation

        const FEResult a = fe_fit(panel);
        const FEResult b = lsdv_oracle(panel);
        worst = std::max(worst, std::abs(a.beta1 - b.beta1));
        double rss_a = 0.0, rss_b = 0.0;
        for (size_t i = 0; i < panel.size(); ++i) {
            worst = std::max(worst, std::abs(a.residuals[i] - b.residuals[i]));
            rss_a += a.residuals[i] * a.residuals[i];
            rss_b += b.residuals[i] * b.residuals[i];
        }
        worst = std::max(worst, std::abs(rss_a - rss_b));

        // Absorption: +c on one station's y moves only that alpha.
        const double c = 12.5;
        auto shifted = panel;
        for (auto& o : shifted)
            if (o.station_id == "st0") o.pm25 += c;
        const FEResult moved = fe_fit(shifted);
        worst_absorb = std::max(worst_absorb, std::abs(moved.beta1 - a.beta1));
        worst_absorb = std::max(
            worst_absorb, std::abs(moved.station_effects.at("st0") -
                                   a.station_effects.at("st0") - c));
    }
    const bool pass = worst < 1e-8 && worst_absorb < 1e-10;
    return {pass, "LSDV deviation " + fmt(worst) + ", absorption deviation " + fmt(worst_absorb)};
}

// ---------------------------------------------------------------------------
// Criterion 8: depth-5 base-16 net overfits 8 synthetic samples in <=200 steps.

Outcome criterion8() {
    SynthConfig sc;  // defaults: 64x64, 1-3 plumes
    Rng rng(42);
    const std::vector<Sample> train_set = synth_samples(sc, 8, rng);
    const std::vector<Sample> val_set = {train_set[0]};

    UNetConfig nc{.in_channels = 3, .depth = 5, .base_filters = 16};
    UNet<float> net(nc);
    Rng init(1);
    net.init_params(init);
    const TrainConfig tc = flat_lr_config(42, 200, 8, 1e-3);
    const auto history = train(net, train_set, val_set, tc, 0.95);

    const double best = history.back().train_dice;
    const std::int64_t steps = net.state().step;
    Digest dig;
    for (const auto& r : history) {
        dig.add(r.train_loss);
        dig.add(r.train_dice);
        dig.add(r.val_loss);
        dig.add(r.val_dice);
    }
    dig.add(static_cast<std::uint64_t>(steps));
    return {best >= 0.95 && steps <= 200,
            "train dice " + fmt(best) + " after " + std::to_string(steps) + " steps",
            dig.value()};
}

// ---------------------------------------------------------------------------
// Criterion 9: MAE collapse vs BCE on a <2% positive corpus, 3 seeds.

Outcome criterion9() {
    SynthConfig sc;
    sc.plumes_min = 1;
    sc.plumes_max = 2;
    sc.plume_intensity_min = 0.6;
    sc.plume_intensity_max = 0.9;
    sc.plume_sigma_min = 2.5;
    sc.plume_sigma_max = 4.0;

    Digest dig;
    double pos_frac_sum = 0.0, mae_rate_sum = 0.0, bce_dice_sum = 0.0;
    const NormStats stats = NormStats::defaults();
    for (const std::uint64_t seed : {101ull, 202ull, 303ull}) {
        Rng rng(seed);
        const std::vector<Sample> all = synth_samples(sc, 16, rng);
        const std::vector<Sample> tr(all.begin(), all.begin() + 12);
        const std::vector<Sample> va(all.begin() + 12, all.end());
        std::int64_t pos = 0, tot = 0;
        for (const Sample& s : all) {
            pos += s.label.count();
            tot += static_cast<std::int64_t>(s.label.width) * s.label.height;
        }
        pos_frac_sum += static_cast<double>(pos) / static_cast<double>(tot);

        for (const LossKind loss : {LossKind::MAE, LossKind::BCE}) {
            UNetConfig nc{.in_channels = 3, .depth = 3, .base_filters = 8};
            UNet<float> net(nc);
            Rng init(seed);
            net.init_params(init);
            const TrainConfig tc = flat_lr_config(seed, 90, 4, 1e-3, loss);
            const auto history = train(net, tr, va, tc);
            if (loss == LossKind::MAE) {
                std::int64_t pred_pos = 0, pred_tot = 0;
                for (const Sample& s : va) {
                    const Sample norm = normalize(s, stats);
                    const Tensor4<float> prob =
                        net.forward_padded(input_tensor(norm.scene, BandMode::OneBand));
                    for (const float v : prob.v) {
                        if (v >= 0.5f) ++pred_pos;
                        ++pred_tot;
                    }
                }
                const double rate = static_cast<double>(pred_pos) / static_cast<double>(pred_tot);
                mae_rate_sum += rate;
                dig.add(rate);
            } else {
                bce_dice_sum += history.back().val_dice;
                dig.add(history.back().val_dice);
            }
        }
    }
    const double pos_frac = pos_frac_sum / 3.0;
    const double mae_rate = mae_rate_sum / 3.0;
    const double bce_dice = bce_dice_sum / 3.0;
    dig.add(pos_frac);
    const bool pass = pos_frac < 0.02 && mae_rate < 0.001 && bce_dice > 0.5;
    return {pass,
            "positives " + fmt(100.0 * pos_frac) + "%, MAE positive rate " +
                fmt(100.0 * mae_rate) + "%, BCE val dice " + fmt(bce_dice),
            dig.value()};
}

// ---------------------------------------------------------------------------
// Criterion 10: drop-highest >= plain BCE under Dilate(6)+DropPlume(0.2).

Outcome criterion10() {
    Digest dig;
    double plain_sum = 0.0, drop_sum = 0.0;
    for (const std::uint64_t seed : {101ull, 202ull, 303ull}) {
        Rng rng(seed);
        const std::vector<Sample> all = synth_samples(SynthConfig{}, 22, rng);
        const std::vector<Sample> clean_eval(all.begin() + 16, all.end());
        std::vector<Sample> noisy_train(all.begin(), all.begin() + 16);
        Rng noise_rng(seed ^ 0x9e3779b97f4a7c15ull);
        for (Sample& s : noisy_train) {
            s.label = inject_label_noise(s.label, NoiseSpec::dilate(6), noise_rng);
            s.label = inject_label_noise(s.label, NoiseSpec::drop_plume(0.2), noise_rng);
        }

        for (const bool drop : {false, true}) {
            UNetConfig nc{.in_channels = 3, .depth = 3, .base_filters = 8};
            UNet<float> net(nc);
            Rng init(seed);
            net.init_params(init);
            const TrainConfig tc = flat_lr_config(seed, 60, 4, 1e-3, LossKind::BCE, drop);
            train(net, noisy_train, clean_eval, tc);
            const auto [loss, clean_dice] = validate(net, clean_eval, tc);
            (drop ? drop_sum : plain_sum) += clean_dice;
            dig.add(clean_dice);
        }
    }
    const double plain = plain_sum / 3.0, dropped = drop_sum / 3.0;
    return {dropped >= plain - 0.01,
            "clean dice: drop-highest " + fmt(dropped) + " vs plain " + fmt(plain),
            dig.value()};
}

// ---------------------------------------------------------------------------
// Criterion 11: full CLI pipeline on a handcrafted scene/annotation corpus.

void write_e2e_scene(const fs::path& path, const std::vector<std::array<int, 4>>& rects) {
    RasterScene s;
    s.width = s.height = 64;
    s.channels = {ChannelId::Blue, ChannelId::Red, ChannelId::Veggie};
    s.transform = {.origin_x = 0.0, .origin_y = 64.0, .pixel_w = 1.0, .pixel_h = -1.0};
    for (int c = 0; c < 3; ++c) {
        PlaneF p(64, 64);
        for (int i = 0; i < 64; ++i)
            for (int j = 0; j < 64; ++j)
                p(i, j) = 0.18f + 0.04f * static_cast<float>(std::sin(0.4 * i + 0.3 * j + c));
        for (const auto& [r0, r1, c0, c1] : rects)
            p.block(r0, c0, r1 - r0, c1 - c0).setConstant(0.9f);
        s.planes.push_back(std::move(p));
    }
    write_scene(s, path.string());
}

void write_e2e_annotations(const fs::path& path, const std::vector<std::array<int, 4>>& rects) {
    nlohmann::json features = nlohmann::json::array();
    for (const auto& [r0, r1, c0, c1] : rects) {
        // Pixel rows r0..r1-1, cols c0..c1-1 -> map rect [c0,c1] x [64-r1,64-r0].
        const double x0 = c0, x1 = c1, y0 = 64.0 - r1, y1 = 64.0 - r0;
        features.push_back(
            {{"type", "Feature"},
             {"properties",
              {{"Start", "2020-07-01T00:00:00Z"}, {"End", "2020-07-01T23:59:59Z"}}},
             {"geometry",
              {{"type", "Polygon"},
               {"coordinates",
                {{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}, {x0, y0}}}}}}});
    }
    std::ofstream out(path);
    out << nlohmann::json{{"type", "FeatureCollection"}, {"features", features}}.dump(1) << '\n';
}

Outcome criterion11() {
    const char* bin = std::getenv("PLUMESEG_BIN");
    if (!bin) return {false, "PLUMESEG_BIN not set"};
    const fs::path dir = fs::temp_directory_path() / "plumeseg_acceptance_e2e";
    fs::remove_all(dir);
    fs::create_directories(dir);

    // 4 scene-days. Station A sits at pixel (16,16) under the day-1/2 plume;
    // station B at pixel (48,48) under the day-1 plume only.
    const std::vector<std::vector<std::array<int, 4>>> days = {
        {{8, 24, 8, 24}, {40, 56, 40, 56}},  // 2020-07-01
        {{8, 24, 8, 24}},                    // 2020-07-02
        {{40, 56, 8, 24}},                   // 2020-07-03
        {},                                  // 2020-07-04
    };
    std::vector<std::string> scene_files, annot_files, dates;
    for (size_t d = 0; d < days.size(); ++d) {
        const std::string date = "2020-07-0" + std::to_string(d + 1);
        const fs::path scene = dir / ("day" + std::to_string(d + 1) + ".grd");
        const fs::path annot = dir / ("day" + std::to_string(d + 1) + ".geojson");
        write_e2e_scene(scene, days[d]);
        write_e2e_annotations(annot, days[d]);
        scene_files.push_back(scene.string());
        annot_files.push_back(annot.string());
        dates.push_back(date);
    }

    // Annotation-source masks: rasterized ground truth written as Mask scenes.
    const GeoTransform t{.origin_x = 0.0, .origin_y = 64.0, .pixel_w = 1.0, .pixel_h = -1.0};
    std::vector<std::string> annot_masks;
    for (size_t d = 0; d < days.size(); ++d) {
        const ParseResult parsed = parse_annotations(annot_files[d]);
        const BitMask mask = rasterize(parsed.set, t, 64, 64);
        RasterScene ms;
        ms.width = ms.height = 64;
        ms.channels = {ChannelId::Mask};
        ms.planes = {mask.bits.cast<float>()};
        ms.transform = t;
        const fs::path path = dir / ("annot_mask" + std::to_string(d + 1) + ".grd");
        write_scene(ms, path.string());
        annot_masks.push_back(path.string());
    }

    // Station panel: pm25 tracks annotation exposure plus station effects.
    {
        std::ofstream st(dir / "stations.csv");
        st << "station_id,x,y,crs\nA,16.5,47.5,synthetic\nB,48.5,15.5,synthetic\n";
        std::ofstream pm(dir / "pm25.csv");
        pm << "station_id,date,pm25\n";
        const int smoke_a[4] = {1, 1, 0, 0}, smoke_b[4] = {1, 0, 0, 0};
        for (int d = 0; d < 4; ++d) {
            pm << "A," << dates[d] << ',' << (8.0 + 12.0 * smoke_a[d] + 0.3 * d) << '\n';
            pm << "B," << dates[d] << ',' << (5.0 + 12.0 * smoke_b[d] + 0.2 * d) << '\n';
        }
    }

    auto json_list = [](const std::vector<std::string>& v) {
        nlohmann::json j = v;
        return j.dump();
    };
    const fs::path out = dir / "out";
    nlohmann::json cfg{
        {"seed", 7},
        {"out", out.string()},
        {"band_mode", "1band"},
        {"synth", {{"count", 2}, {"grid", 32}}},
        {"prepare",
         {{"scenes", scene_files}, {"annotations", annot_files}, {"crop_size", 32},
          {"n_max", 15}, {"pos_frac", 0.6}, {"fractions", {0.70, 0.15, 0.15}}}},
        {"train",
         {{"epochs", 3}, {"batch", 2}, {"lr0", 3e-3}, {"gamma", 1.0}, {"step_epochs", 100},
          {"depth", 2}, {"base_filters", 8}, {"checkpoint_every", 1}}},
        {"predict", {{"checkpoint", (out / "checkpoints" / "ckpt_epoch2.bin").string()},
                     {"scenes", scene_files}, {"tile", 32}}},
    };
    nlohmann::json day_map_model, day_map_annot;
    for (int d = 0; d < 4; ++d) {
        day_map_model[dates[d]] = {(out / ("day" + std::to_string(d + 1) + "_mask.grd")).string()};
        day_map_annot[dates[d]] = {annot_masks[d]};
    }
    cfg["validate"] = {{"stations_csv", (dir / "stations.csv").string()},
                       {"pm25_csv", (dir / "pm25.csv").string()},
                       {"sources", {{{"name", "annotation"}, {"days", day_map_annot}},
                                    {{"name", "model"}, {"days", day_map_model}}}}};
    {
        std::ofstream c(dir / "cfg.json");
        c << cfg.dump(1) << '\n';
    }

    auto run = [&](const std::string& sub) {
        const std::string cmd = std::string(bin) + " " + sub + " --config " +
                                (dir / "cfg.json").string() + " >/dev/null 2>&1";
        return WEXITSTATUS(std::system(cmd.c_str()));
    };
    (void)json_list;
    for (const char* sub : {"synth", "prepare", "train", "predict", "validate"})
        if (const int rc = run(sub); rc != 0)
            return {false, std::string(sub) + " exited with code " + std::to_string(rc)};

    // Parse the comparison table: both sources must be ok with finite R2s.
    std::ifstream table(out / "fe_comparison.csv");
    std::string header, line;
    std::getline(table, header);
    int ok_rows = 0;
    Digest dig;
    std::string detail;
    while (std::getline(table, line)) {
        dig.add(line);
        std::stringstream ss(line);
        std::string name, beta1, r2, adj, wr2, wadj, nobs, nst, status;
        std::getline(ss, name, ',');
        std::getline(ss, beta1, ',');
        std::getline(ss, r2, ',');
        std::getline(ss, adj, ',');
        std::getline(ss, wr2, ',');
        std::getline(ss, wadj, ',');
        std::getline(ss, nobs, ',');
        std::getline(ss, nst, ',');
        std::getline(ss, status, ',');
        if (status != "ok" || !std::isfinite(std::stod(wadj))) continue;
        ++ok_rows;
        detail += (detail.empty() ? "" : ", ") + name + " within_adj_r2=" + fmt(std::stod(wadj));
    }
    // Fold the training history into the digest for the determinism check.
    std::ifstream hist(out / "history.csv");
    std::stringstream hs;
    hs << hist.rdbuf();
    dig.add(hs.str());
    return {ok_rows == 2, ok_rows == 2 ? detail : "only " + std::to_string(ok_rows) +
                                                      " sources produced finite within_adj_r2",
            dig.value()};
}

// ---------------------------------------------------------------------------
// Criterion 12: criteria 8-11 are bit-reproducible (digests match on re-run).

Outcome criterion12(const std::array<std::uint64_t, 4>& first_digests) {
    const std::array<std::pair<const char*, std::function<Outcome()>>, 4> repeats = {{
        {"8", criterion8},
        {"9", criterion9},
        {"10", criterion10},
        {"11", criterion11},
    }};
    std::string detail;
    bool pass = true;
    for (size_t i = 0; i < repeats.size(); ++i) {
        const Outcome second = repeats[i].second();
        const bool same = second.pass && second.digest == first_digests[i];
        pass = pass && same;
        detail += std::string(i ? ", " : "") + "criterion " + repeats[i].first +
                  (same ? " reproduced" : " DIVERGED");
    }
    return {pass, detail};
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<int> only;
    for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
    auto wanted = [&](int id) {
        return only.empty() || std::find(only.begin(), only.end(), id) != only.end();
    };

    const std::array<std::pair<std::string, std::function<Outcome()>>, 11> criteria = {{
        {"gradient correctness (layers + tiny U-Net, FD < 1e-4)", criterion1},
        {"forward passes vs naive oracles (200 shapes, 1e-6)", criterion2},
        {"lr schedule exactness", criterion3},
        {"dice properties (1000 random pairs, exact)", criterion4},
        {"rasterization vs point-in-polygon oracle", criterion5},
        {"crop sampling 9+/6- and leak-free group split", criterion6},
        {"fixed-effects estimator vs LSDV oracle", criterion7},
        {"overfit sanity (depth 5 base 16, dice >= 0.95 in 200 steps)", criterion8},
        {"MAE collapse vs BCE on an imbalanced corpus", criterion9},
        {"drop-highest benefit under label noise", criterion10},
        {"end-to-end CLI pipeline with FE comparison", criterion11},
    }};

    bool all_pass = true;
    std::array<std::uint64_t, 4> digests{};
    for (size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!wanted(id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        const Outcome o = criteria[i].second();
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (id >= 8) digests[id - 8] = o.digest;
        all_pass = all_pass && o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << ": "
                  << criteria[i].first << " — " << o.detail << " (" << fmt(secs) << "s)\n";
        std::cout.flush();
    }

    if (wanted(12)) {
        const auto t0 = std::chrono::steady_clock::now();
        const Outcome o = criterion12(digests);
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        all_pass = all_pass && o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL")
                  << " criterion 12: determinism of criteria 8-11 — " << o.detail << " ("
                  << fmt(secs) << "s)\n";
    }
    return all_pass ? 0 : 1;
}
