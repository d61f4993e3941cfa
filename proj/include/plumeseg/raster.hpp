#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "plumeseg/errors.hpp"
#include "plumeseg/geo.hpp"
#include "plumeseg/timeutil.hpp"

namespace plumeseg {

/// Row-major float plane, indexed (row, col).
using PlaneF = Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class ChannelId {
    Blue,
    Red,
    Veggie,
    C07,
    C11,
    GreenSynth,
    AOT,
    Mask,
    Prob,
};

std::string channel_name(ChannelId id);
ChannelId channel_from_name(const std::string& name);
bool is_reflectance(ChannelId id);

/// Maximum reflectance kept after ingestion; sun glint can overshoot 1.0.
inline constexpr float kReflectanceCeiling = 1.3f;

/// Georeferenced multi-channel float grid with a timestamp. Immutable by
/// convention: operations return new scenes.
struct RasterScene {
    int width = 0;
    int height = 0;
    std::vector<ChannelId> channels;
    std::vector<PlaneF> planes;  // one height x width plane per channel
    GeoTransform transform;
    std::string crs = "synthetic";
    UtcInstant timestamp = 0;

    /// Populated by read_scene when small NaN patches were median-filled.
    std::vector<std::string> warnings;

    bool has_channel(ChannelId id) const;
    int channel_index(ChannelId id) const;  // -1 when absent
    const PlaneF& plane(ChannelId id) const;
    PlaneF& plane(ChannelId id);

    void validate() const;  // throws FormatError / DataError on broken invariants

    /// Bit-identical planes and equal header fields (warnings excluded).
    bool same_content(const RasterScene& other) const;
};

struct ReadOptions {
    /// Planes with a NaN fraction above this are rejected; below, NaNs are
    /// replaced by the channel median and a warning is recorded.
    double max_nan_fraction = 0.01;
};

RasterScene read_scene(const std::string& path, const ReadOptions& opts = {});
void write_scene(const RasterScene& scene, const std::string& path);

/// Adds GreenSynth = 0.45*Red + 0.10*Veggie + 0.45*Blue, clamped to the
/// reflectance ceiling. Existing channels are untouched.
RasterScene composite_true_color(const RasterScene& scene);

/// size x size window with all channels cropped; map coordinates of retained
/// pixels are unchanged.
RasterScene crop_window(const RasterScene& scene, int row0, int col0, int size);

/// Adds `channel` from src onto target's grid by nearest pixel-center lookup
/// in map coordinates; ties break toward the smaller (row, col).
RasterScene resample_nearest(const RasterScene& src, const RasterScene& target, ChannelId channel);

enum class BandMode { OneBand, ThreeBand, FourBand };

std::string band_mode_name(BandMode m);
BandMode band_mode_from_name(const std::string& name);
int band_mode_plane_count(BandMode m);

/// Fixed input ordering per band mode:
///   OneBand   -> [Red, GreenSynth, Blue]
///   ThreeBand -> [Red, GreenSynth, Blue, C07, C11]
///   FourBand  -> [Red, GreenSynth, Blue, C07, C11, AOT]
std::vector<ChannelId> stack_input(const RasterScene& scene, BandMode mode);

}  // namespace plumeseg
