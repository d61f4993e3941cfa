#pragma once

#include <map>
#include <string>
#include <vector>

#include "plumeseg/annotations.hpp"
#include "plumeseg/raster.hpp"
#include "plumeseg/rng.hpp"

namespace plumeseg {

/// One training/evaluation unit: a cropped scene with its binary label.
/// positive means the label contains at least one set pixel.
struct Sample {
    RasterScene scene;
    BitMask label;
    std::string base_id;
    std::string id;
    bool positive = false;
};

struct SplitManifest {
    std::vector<std::string> train, val, test;
    std::map<std::string, std::string> base_assignment;  // base_id -> split name

    void save(const std::string& path) const;
    static SplitManifest load(const std::string& path);
};

/// Per-channel (lo, hi) ranges for min-max scaling; physical ranges supplied
/// by config, not corpus statistics.
struct NormStats {
    std::map<ChannelId, std::pair<float, float>> ranges;

    static NormStats defaults();
    void validate() const;  // lo >= hi -> StatsError
};

inline constexpr int kCropSize = 300;

/// Class-balanced window sampling: positives anchor a random labeled pixel,
/// negatives come from rejection sampling of all-zero windows. Shortfalls
/// shrink the output instead of erroring.
std::vector<Sample> sample_crops(const RasterScene& scene, const BitMask& mask,
                                 const std::string& base_id, Rng& rng, int n_max = 15,
                                 double pos_frac = 0.6, int crop_size = kCropSize);

/// Group-aware split: whole base_ids go to one split; greedy largest-deficit
/// assignment, biggest groups first (seeded shuffle breaks size ties).
SplitManifest group_split(const std::vector<Sample>& samples,
                          const std::array<double, 3>& fractions, Rng& rng);

/// Min-max scales every input channel to [0,1]; the label is untouched.
Sample normalize(const Sample& sample, const NormStats& stats);

struct NoiseSpec {
    enum class Kind { None, Dilate, Shift, DropPlume };
    Kind kind = Kind::None;
    int radius = 0;       // Dilate
    int dx = 0, dy = 0;   // Shift (columns, rows)
    double p = 0.0;       // DropPlume

    static NoiseSpec none() { return {}; }
    static NoiseSpec dilate(int r) { return {Kind::Dilate, r, 0, 0, 0.0}; }
    static NoiseSpec shift(int dx, int dy) { return {Kind::Shift, 0, dx, dy, 0.0}; }
    static NoiseSpec drop_plume(double p) { return {Kind::DropPlume, 0, 0, 0, p}; }
};

struct SynthConfig {
    int grid = 64;
    int plumes_min = 1, plumes_max = 3;
    double plume_intensity_min = 0.3, plume_intensity_max = 0.9;
    double plume_sigma_min = 3.0, plume_sigma_max = 10.0;
    int clouds_min = 0, clouds_max = 2;
    std::uint64_t texture_seed = 0;
    NoiseSpec noise;

    void validate() const;
};

/// Label threshold on the analytic plume intensity field.
inline constexpr double kPlumeLabelThreshold = 0.15;

/// Parameters of one generated plume, exposed so tests can re-evaluate the
/// analytic intensity field independently.
struct SynthPlume {
    double row, col;        // center, pixel coordinates
    double sigma_major, sigma_minor;
    double angle;           // radians
    double amplitude;
};

struct SynthDebug {
    std::vector<SynthPlume> plumes;
};

/// Deterministic synthetic scene: low-frequency background, anisotropic
/// Gaussian plumes on the visible channels and C07 (hotspot at the origin),
/// cloud blobs that do not touch the label, and an AOT plane from the blurred
/// label plus haze. Channels: Blue, Red, Veggie, GreenSynth, C07, C11, AOT.
std::pair<RasterScene, BitMask> generate_synthetic(const SynthConfig& cfg, Rng& rng,
                                                   SynthDebug* debug = nullptr);

/// Annotation-noise simulator for desk-scale experiments.
BitMask inject_label_noise(const BitMask& mask, const NoiseSpec& noise, Rng& rng);

/// Persists a sample as a scene container with its Mask channel appended.
void save_sample(const Sample& sample, const std::string& path);
Sample load_sample(const std::string& path, const std::string& base_id, const std::string& id);

}  // namespace plumeseg
