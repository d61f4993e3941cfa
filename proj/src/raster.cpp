#include "plumeseg/raster.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <set>

namespace plumeseg {

using ordered_json = nlohmann::ordered_json;

std::string channel_name(ChannelId id) {
    switch (id) {
        case ChannelId::Blue: return "Blue";
        case ChannelId::Red: return "Red";
        case ChannelId::Veggie: return "Veggie";
        case ChannelId::C07: return "C07";
        case ChannelId::C11: return "C11";
        case ChannelId::GreenSynth: return "GreenSynth";
        case ChannelId::AOT: return "AOT";
        case ChannelId::Mask: return "Mask";
        case ChannelId::Prob: return "Prob";
    }
    throw FormatError("unknown channel id");
}

ChannelId channel_from_name(const std::string& name) {
    static const std::pair<const char*, ChannelId> table[] = {
        {"Blue", ChannelId::Blue},   {"Red", ChannelId::Red},
        {"Veggie", ChannelId::Veggie}, {"C07", ChannelId::C07},
        {"C11", ChannelId::C11},     {"GreenSynth", ChannelId::GreenSynth},
        {"AOT", ChannelId::AOT},     {"Mask", ChannelId::Mask},
        {"Prob", ChannelId::Prob},
    };
    for (const auto& [n, id] : table)
        if (name == n) return id;
    throw FormatError("unknown channel name: " + name);
}

bool is_reflectance(ChannelId id) {
    return id == ChannelId::Blue || id == ChannelId::Red || id == ChannelId::Veggie ||
           id == ChannelId::GreenSynth;
}

bool RasterScene::has_channel(ChannelId id) const { return channel_index(id) >= 0; }

int RasterScene::channel_index(ChannelId id) const {
    for (size_t i = 0; i < channels.size(); ++i)
        if (channels[i] == id) return static_cast<int>(i);
    return -1;
}

const PlaneF& RasterScene::plane(ChannelId id) const {
    const int i = channel_index(id);
    if (i < 0) throw ChannelError("scene lacks channel " + channel_name(id));
    return planes[i];
}

PlaneF& RasterScene::plane(ChannelId id) {
    const int i = channel_index(id);
    if (i < 0) throw ChannelError("scene lacks channel " + channel_name(id));
    return planes[i];
}

void RasterScene::validate() const {
    if (width <= 0 || height <= 0) throw FormatError("non-positive scene dimensions");
    if (channels.empty()) throw FormatError("scene has no channels");
    if (channels.size() != planes.size()) throw FormatError("channel/plane count mismatch");
    std::set<ChannelId> seen;
    for (const ChannelId c : channels)
        if (!seen.insert(c).second)
            throw FormatError("duplicate channel " + channel_name(c));
    if (!transform.valid()) throw FormatError("degenerate geotransform");
    for (size_t i = 0; i < planes.size(); ++i) {
        if (planes[i].rows() != height || planes[i].cols() != width)
            throw FormatError("plane size mismatch for channel " + channel_name(channels[i]));
        if (!planes[i].isFinite().all())
            throw DataError("non-finite values in channel " + channel_name(channels[i]));
    }
}

bool RasterScene::same_content(const RasterScene& other) const {
    if (width != other.width || height != other.height || channels != other.channels ||
        !(transform == other.transform) || crs != other.crs || timestamp != other.timestamp)
        return false;
    for (size_t i = 0; i < planes.size(); ++i)
        if (std::memcmp(planes[i].data(), other.planes[i].data(),
                        sizeof(float) * planes[i].size()) != 0)
            return false;
    return true;
}

namespace {

constexpr char kMagic[4] = {'G', 'R', 'D', '1'};

float plane_median_ignoring_nan(const PlaneF& p) {
    std::vector<float> vals;
    vals.reserve(p.size());
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        const float v = p.data()[i];
        if (!std::isnan(v)) vals.push_back(v);
    }
    if (vals.empty()) return 0.0f;
    const size_t mid = vals.size() / 2;
    std::nth_element(vals.begin(), vals.begin() + mid, vals.end());
    return vals[mid];
}

}  // namespace

RasterScene read_scene(const std::string& path, const ReadOptions& opts) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);

    char magic[4];
    std::uint32_t header_len = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&header_len), 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError(path + ": not a GRD1 container");

    std::string header(header_len, '\0');
    in.read(header.data(), header_len);
    if (!in) throw FormatError(path + ": truncated header");

    ordered_json j;
    try {
        j = ordered_json::parse(header);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": malformed header JSON: " + e.what());
    }

    RasterScene s;
    try {
        s.width = j.at("width").get<int>();
        s.height = j.at("height").get<int>();
        for (const auto& name : j.at("channels"))
            s.channels.push_back(channel_from_name(name.get<std::string>()));
        const auto& t = j.at("transform");
        if (t.size() != 6) throw FormatError(path + ": transform must have 6 entries");
        s.transform.origin_x = t[0].get<double>();
        s.transform.pixel_w = t[1].get<double>();
        s.transform.col_rot = t[2].get<double>();
        s.transform.origin_y = t[3].get<double>();
        s.transform.row_rot = t[4].get<double>();
        s.transform.pixel_h = t[5].get<double>();
        s.crs = j.at("crs").get<std::string>();
        s.timestamp = parse_iso8601(j.at("timestamp").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": bad header fields: " + e.what());
    }
    if (s.width <= 0 || s.height <= 0) throw FormatError(path + ": non-positive dimensions");
    if (s.channels.empty()) throw FormatError(path + ": no channels");

    const size_t plane_count = static_cast<size_t>(s.width) * s.height;
    for (size_t c = 0; c < s.channels.size(); ++c) {
        PlaneF p(s.height, s.width);
        in.read(reinterpret_cast<char*>(p.data()), sizeof(float) * plane_count);
        if (!in)
            throw FormatError(path + ": truncated plane for channel " +
                              channel_name(s.channels[c]));

        Eigen::Index nan_count = 0;
        for (Eigen::Index i = 0; i < p.size(); ++i)
            if (std::isnan(p.data()[i])) ++nan_count;
        if (nan_count > 0) {
            const double frac = static_cast<double>(nan_count) / static_cast<double>(p.size());
            if (frac > opts.max_nan_fraction)
                throw DataError(path + ": channel " + channel_name(s.channels[c]) + " has " +
                                std::to_string(nan_count) + " NaN pixels (" +
                                std::to_string(frac * 100.0) + "%)");
            const float med = plane_median_ignoring_nan(p);
            for (Eigen::Index i = 0; i < p.size(); ++i)
                if (std::isnan(p.data()[i])) p.data()[i] = med;
            s.warnings.push_back("channel " + channel_name(s.channels[c]) + ": filled " +
                                 std::to_string(nan_count) + " NaN pixels with median " +
                                 std::to_string(med));
        }
        s.planes.push_back(std::move(p));
    }
    // Extra trailing bytes indicate a corrupt or mislabeled file.
    in.peek();
    if (!in.eof()) throw FormatError(path + ": trailing bytes after last plane");

    s.validate();
    return s;
}

void write_scene(const RasterScene& scene, const std::string& path) {
    scene.validate();

    ordered_json j;
    j["width"] = scene.width;
    j["height"] = scene.height;
    std::vector<std::string> names;
    for (const ChannelId c : scene.channels) names.push_back(channel_name(c));
    j["channels"] = names;
    j["transform"] = {scene.transform.origin_x, scene.transform.pixel_w, scene.transform.col_rot,
                      scene.transform.origin_y, scene.transform.row_rot, scene.transform.pixel_h};
    j["crs"] = scene.crs;
    j["timestamp"] = format_iso8601(scene.timestamp);
    const std::string header = j.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    const std::uint32_t header_len = static_cast<std::uint32_t>(header.size());
    out.write(kMagic, 4);
    out.write(reinterpret_cast<const char*>(&header_len), 4);
    out.write(header.data(), header.size());
    for (const PlaneF& p : scene.planes)
        out.write(reinterpret_cast<const char*>(p.data()), sizeof(float) * p.size());
    if (!out) throw IoError("short write to " + path);
}

RasterScene composite_true_color(const RasterScene& scene) {
    if (!scene.has_channel(ChannelId::Red) || !scene.has_channel(ChannelId::Veggie) ||
        !scene.has_channel(ChannelId::Blue))
        throw ChannelError("composite_true_color needs Red, Veggie, Blue");

    RasterScene out = scene;
    PlaneF green = 0.45f * scene.plane(ChannelId::Red) + 0.10f * scene.plane(ChannelId::Veggie) +
                   0.45f * scene.plane(ChannelId::Blue);
    green = green.min(kReflectanceCeiling).max(0.0f);
    if (out.has_channel(ChannelId::GreenSynth)) {
        out.plane(ChannelId::GreenSynth) = std::move(green);
    } else {
        out.channels.push_back(ChannelId::GreenSynth);
        out.planes.push_back(std::move(green));
    }
    return out;
}

RasterScene crop_window(const RasterScene& scene, int row0, int col0, int size) {
    if (row0 < 0 || col0 < 0 || size <= 0 || row0 + size > scene.height ||
        col0 + size > scene.width)
        throw BoundsError("crop window out of bounds");

    RasterScene out;
    out.width = size;
    out.height = size;
    out.channels = scene.channels;
    out.crs = scene.crs;
    out.timestamp = scene.timestamp;
    out.transform = scene.transform.translated(row0, col0);
    for (const PlaneF& p : scene.planes)
        out.planes.emplace_back(p.block(row0, col0, size, size));
    return out;
}

RasterScene resample_nearest(const RasterScene& src, const RasterScene& target,
                             ChannelId channel) {
    if (src.crs != target.crs) throw CrsError("CRS mismatch: " + src.crs + " vs " + target.crs);
    const PlaneF& sp = src.plane(channel);

    RasterScene out = target;
    PlaneF p(target.height, target.width);
    for (int i = 0; i < target.height; ++i) {
        for (int j = 0; j < target.width; ++j) {
            const Eigen::Vector2d m = target.transform.pixel_center(i, j);
            // Fractional source pixel of the target center; the nearest source
            // center is found by rounding, clamped to the grid. Rounding on the
            // .5 boundary goes toward the smaller index.
            const Eigen::Vector2d rc = src.transform.map_to_pixel(m.x(), m.y());
            // Center of source pixel k sits at fractional coordinate k + 0.5;
            // round in pixel space, then refine by true map distance in a
            // small neighborhood so sheared grids resolve correctly. Ties go
            // to the smaller (row, col).
            auto rounded = [](double frac, int n) {
                return std::clamp(static_cast<int>(std::ceil(frac - 1.0)), 0, n - 1);
            };
            const int ri = rounded(rc.x(), src.height);
            const int rj = rounded(rc.y(), src.width);
            int best_i = -1, best_j = -1;
            double best_d = std::numeric_limits<double>::infinity();
            for (int di = -2; di <= 2; ++di) {
                for (int dj = -2; dj <= 2; ++dj) {
                    const int ci = ri + di, cj = rj + dj;
                    if (ci < 0 || cj < 0 || ci >= src.height || cj >= src.width) continue;
                    const double d = (src.transform.pixel_center(ci, cj) - m).squaredNorm();
                    if (d < best_d ||
                        (d == best_d && std::pair(ci, cj) < std::pair(best_i, best_j))) {
                        best_d = d;
                        best_i = ci;
                        best_j = cj;
                    }
                }
            }
            p(i, j) = sp(best_i, best_j);
        }
    }
    if (out.has_channel(channel)) {
        out.plane(channel) = std::move(p);
    } else {
        out.channels.push_back(channel);
        out.planes.push_back(std::move(p));
    }
    return out;
}

std::string band_mode_name(BandMode m) {
    switch (m) {
        case BandMode::OneBand: return "1band";
        case BandMode::ThreeBand: return "3band";
        case BandMode::FourBand: return "4band";
    }
    throw ConfigError("unknown band mode");
}

BandMode band_mode_from_name(const std::string& name) {
    if (name == "1band") return BandMode::OneBand;
    if (name == "3band") return BandMode::ThreeBand;
    if (name == "4band") return BandMode::FourBand;
    throw ConfigError("unknown band mode: " + name);
}

int band_mode_plane_count(BandMode m) {
    switch (m) {
        case BandMode::OneBand: return 3;
        case BandMode::ThreeBand: return 5;
        case BandMode::FourBand: return 6;
    }
    throw ConfigError("unknown band mode");
}

std::vector<ChannelId> stack_input(const RasterScene& scene, BandMode mode) {
    std::vector<ChannelId> order = {ChannelId::Red, ChannelId::GreenSynth, ChannelId::Blue};
    if (mode == BandMode::ThreeBand || mode == BandMode::FourBand) {
        order.push_back(ChannelId::C07);
        order.push_back(ChannelId::C11);
    }
    if (mode == BandMode::FourBand) order.push_back(ChannelId::AOT);
    for (const ChannelId c : order)
        if (!scene.has_channel(c))
            throw ChannelError("band mode " + band_mode_name(mode) + " needs channel " +
                               channel_name(c));
    return order;
}

}  // namespace plumeseg
