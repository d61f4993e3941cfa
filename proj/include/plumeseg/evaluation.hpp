#pragma once

#include <optional>

#include "plumeseg/dataset.hpp"
#include "plumeseg/unet.hpp"

namespace plumeseg {

/// Pre-threshold model output on a georeferenced grid.
struct ProbMap {
    int width = 0, height = 0;
    PlaneF values;  // height x width, finite, in [0,1]
    GeoTransform transform;

    void validate() const;  // throws DataError on non-finite / out-of-range
};

/// bit = 1 iff prob >= t.
BitMask threshold(const ProbMap& prob, double t = 0.5);

/// 2|A^B| / (|A|+|B|); both masks empty -> 1.0.
double dice(const BitMask& a, const BitMask& b);

struct Confusion {
    std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
    std::optional<double> precision, recall;  // absent when the denominator is 0
};

Confusion confusion(const BitMask& pred, const BitMask& truth);

/// Stacks the band-mode channels of an already-normalized scene into a
/// 1 x C x H x W tensor.
Tensor4<float> input_tensor(const RasterScene& scene, BandMode mode);

/// 1 x 1 x H x W {0,1} tensor from a mask.
Tensor4<float> label_tensor(const BitMask& mask);

/// Tiled whole-scene inference: each tile is normalized, stacked, run through
/// the model (with the pad/crop wrapper), and placed into the scene grid.
/// Edge tiles sit flush against the border; overlapping pixels are averaged.
ProbMap predict_scene(UNet<float>& model, const RasterScene& scene, BandMode mode,
                      const NormStats& stats, int tile = kCropSize);

/// Persists probabilities as a single-channel "Prob" scene container.
void write_prob_map(const ProbMap& prob, const std::string& crs, const std::string& path);

}  // namespace plumeseg
