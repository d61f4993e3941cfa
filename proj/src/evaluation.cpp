#include "plumeseg/evaluation.hpp"

#include <algorithm>
#include <cmath>

namespace plumeseg {

void ProbMap::validate() const {
    if (width <= 0 || height <= 0 || values.rows() != height || values.cols() != width)
        throw ShapeError("ProbMap dims inconsistent with its value grid");
    for (int i = 0; i < height; ++i)
        for (int j = 0; j < width; ++j) {
            const float v = values(i, j);
            if (!std::isfinite(v) || v < 0.0f || v > 1.0f)
                throw DataError("ProbMap value out of [0,1] at (" + std::to_string(i) + "," +
                                std::to_string(j) + ")");
        }
}

BitMask threshold(const ProbMap& prob, double t) {
    if (!(t > 0.0 && t < 1.0)) throw ConfigError("threshold must lie in (0,1)");
    BitMask out = BitMask::zeros(prob.height, prob.width, prob.transform);
    const float tf = static_cast<float>(t);
    out.bits = (prob.values >= tf).cast<std::uint8_t>();
    return out;
}

double dice(const BitMask& a, const BitMask& b) {
    if (a.width != b.width || a.height != b.height)
        throw ShapeError("dice: mask dims differ");
    const std::int64_t inter = ((a.bits != 0) && (b.bits != 0)).cast<std::int64_t>().sum();
    const std::int64_t total = a.count() + b.count();
    if (total == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(total);
}

Confusion confusion(const BitMask& pred, const BitMask& truth) {
    if (pred.width != truth.width || pred.height != truth.height)
        throw ShapeError("confusion: mask dims differ");
    Confusion c;
    for (int i = 0; i < pred.height; ++i)
        for (int j = 0; j < pred.width; ++j) {
            const bool p = pred.bits(i, j) != 0;
            const bool t = truth.bits(i, j) != 0;
            if (p && t)
                ++c.tp;
            else if (p)
                ++c.fp;
            else if (t)
                ++c.fn;
            else
                ++c.tn;
        }
    if (c.tp + c.fp > 0) c.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    if (c.tp + c.fn > 0) c.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    return c;
}

Tensor4<float> input_tensor(const RasterScene& scene, BandMode mode) {
    const std::vector<ChannelId> order = stack_input(scene, mode);
    Tensor4<float> x(1, static_cast<int>(order.size()), scene.height, scene.width);
    for (size_t c = 0; c < order.size(); ++c) {
        const PlaneF& p = scene.plane(order[c]);
        std::copy(p.data(), p.data() + p.size(),
                  x.v.begin() + static_cast<std::ptrdiff_t>(c) * scene.height * scene.width);
    }
    return x;
}

Tensor4<float> label_tensor(const BitMask& mask) {
    Tensor4<float> y(1, 1, mask.height, mask.width);
    for (int i = 0; i < mask.height; ++i)
        for (int j = 0; j < mask.width; ++j) y.at(0, 0, i, j) = mask.bits(i, j) ? 1.0f : 0.0f;
    return y;
}

ProbMap predict_scene(UNet<float>& model, const RasterScene& scene, BandMode mode,
                      const NormStats& stats, int tile) {
    stack_input(scene, mode);  // fail fast on missing channels
    if (scene.width < tile || scene.height < tile)
        throw BoundsError("predict_scene: scene smaller than the tile size");

    // Tile origins stride by `tile`; the last tile sits flush against the
    // border, producing an averaged overlap band on non-divisible scenes.
    auto origins = [tile](int extent) {
        std::vector<int> out;
        for (int o = 0; o + tile < extent; o += tile) out.push_back(o);
        out.push_back(extent - tile);
        return out;
    };

    PlaneF sum = PlaneF::Zero(scene.height, scene.width);
    PlaneF cnt = PlaneF::Zero(scene.height, scene.width);
    for (const int r0 : origins(scene.height))
        for (const int c0 : origins(scene.width)) {
            Sample s;
            s.scene = crop_window(scene, r0, c0, tile);
            s.label = BitMask::zeros(tile, tile, s.scene.transform);
            const Tensor4<float> x = input_tensor(normalize(s, stats).scene, mode);
            const Tensor4<float> out = model.forward_padded(x);
            for (int i = 0; i < tile; ++i)
                for (int j = 0; j < tile; ++j) {
                    sum(r0 + i, c0 + j) += out.at(0, 0, i, j);
                    cnt(r0 + i, c0 + j) += 1.0f;
                }
        }

    ProbMap prob;
    prob.width = scene.width;
    prob.height = scene.height;
    prob.transform = scene.transform;
    prob.values = sum / cnt;
    prob.validate();
    return prob;
}

void write_prob_map(const ProbMap& prob, const std::string& crs, const std::string& path) {
    RasterScene s;
    s.width = prob.width;
    s.height = prob.height;
    s.channels = {ChannelId::Prob};
    s.planes = {prob.values};
    s.transform = prob.transform;
    s.crs = crs;
    write_scene(s, path);
}

}  // namespace plumeseg
