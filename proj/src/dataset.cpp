#include "plumeseg/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>

#include "plumeseg/errors.hpp"

namespace plumeseg {

using nlohmann::json;

void SplitManifest::save(const std::string& path) const {
    json j;
    j["train"] = train;
    j["val"] = val;
    j["test"] = test;
    j["base_assignment"] = base_assignment;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << j.dump(2) << "\n";
}

SplitManifest SplitManifest::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
    SplitManifest m;
    m.train = j.at("train").get<std::vector<std::string>>();
    m.val = j.at("val").get<std::vector<std::string>>();
    m.test = j.at("test").get<std::vector<std::string>>();
    m.base_assignment = j.at("base_assignment").get<std::map<std::string, std::string>>();
    return m;
}

NormStats NormStats::defaults() {
    NormStats s;
    s.ranges = {
        {ChannelId::Blue, {0.0f, 1.3f}},      {ChannelId::Red, {0.0f, 1.3f}},
        {ChannelId::Veggie, {0.0f, 1.3f}},    {ChannelId::GreenSynth, {0.0f, 1.3f}},
        {ChannelId::C07, {0.0f, 1.3f}},       {ChannelId::C11, {0.0f, 1.3f}},
        {ChannelId::AOT, {0.0f, 1.0f}},
    };
    return s;
}

void NormStats::validate() const {
    for (const auto& [id, range] : ranges)
        if (range.first >= range.second)
            throw StatsError("normalization lo >= hi for channel " + channel_name(id));
}

std::vector<Sample> sample_crops(const RasterScene& scene, const BitMask& mask,
                                 const std::string& base_id, Rng& rng, int n_max,
                                 double pos_frac, int crop_size) {
    if (scene.height < crop_size || scene.width < crop_size)
        throw BoundsError("scene smaller than the crop size");
    if (mask.height != scene.height || mask.width != scene.width)
        throw BoundsError("mask grid does not match the scene");

    const int pos_target = static_cast<int>(std::lround(pos_frac * n_max));
    const int neg_target = n_max - pos_target;
    constexpr int kMaxAttempts = 200;

    std::vector<std::pair<int, int>> labeled;
    for (int i = 0; i < mask.height; ++i)
        for (int j = 0; j < mask.width; ++j)
            if (mask.bits(i, j)) labeled.emplace_back(i, j);

    std::set<std::pair<int, int>> used_origins;
    std::vector<Sample> out;
    int emitted = 0;

    auto crop_label = [&](int row0, int col0) {
        BitMask lab = BitMask::zeros(crop_size, crop_size, mask.transform.translated(row0, col0));
        lab.bits = mask.bits.block(row0, col0, crop_size, crop_size);
        return lab;
    };
    auto emit = [&](int row0, int col0) {
        Sample s;
        s.scene = crop_window(scene, row0, col0, crop_size);
        s.label = crop_label(row0, col0);
        s.base_id = base_id;
        s.id = base_id + "_crop" + std::to_string(emitted++);
        s.positive = s.label.any();
        out.push_back(std::move(s));
    };

    // Positives: anchor a labeled pixel, then a uniform window containing it.
    for (int k = 0; k < pos_target && !labeled.empty(); ++k) {
        for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
            const auto [pi, pj] = labeled[rng.uniform_int(0, labeled.size() - 1)];
            const int rlo = std::max(0, pi - crop_size + 1);
            const int rhi = std::min(pi, scene.height - crop_size);
            const int clo = std::max(0, pj - crop_size + 1);
            const int chi = std::min(pj, scene.width - crop_size);
            if (rlo > rhi || clo > chi) continue;
            const int row0 = static_cast<int>(rng.uniform_int(rlo, rhi));
            const int col0 = static_cast<int>(rng.uniform_int(clo, chi));
            if (!used_origins.insert({row0, col0}).second) continue;
            emit(row0, col0);
            break;
        }
    }

    // Negatives: rejection sampling of all-zero windows.
    for (int k = 0; k < neg_target; ++k) {
        for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
            const int row0 = static_cast<int>(rng.uniform_int(0, scene.height - crop_size));
            const int col0 = static_cast<int>(rng.uniform_int(0, scene.width - crop_size));
            if (used_origins.contains({row0, col0})) continue;
            if ((mask.bits.block(row0, col0, crop_size, crop_size) != 0).any()) continue;
            used_origins.insert({row0, col0});
            emit(row0, col0);
            break;
        }
    }
    return out;
}

SplitManifest group_split(const std::vector<Sample>& samples,
                          const std::array<double, 3>& fractions, Rng& rng) {
    if (samples.empty()) throw EmptyError("group_split: no samples");
    if (std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9)
        throw ConfigError("group_split: fractions must sum to 1");

    // Base ids in first-appearance order, with their sample counts.
    std::vector<std::string> base_order;
    std::map<std::string, int> counts;
    for (const Sample& s : samples) {
        if (!counts.contains(s.base_id)) base_order.push_back(s.base_id);
        counts[s.base_id] += 1;
    }
    rng.shuffle(base_order.begin(), base_order.end());
    // Place big groups first so the small ones can fine-tune the shares; the
    // shuffle above fixes the (seeded) order among equal-sized groups.
    std::stable_sort(base_order.begin(), base_order.end(),
                     [&](const std::string& a, const std::string& b) {
                         return counts[a] > counts[b];
                     });

    const double total = static_cast<double>(samples.size());
    const char* names[3] = {"train", "val", "test"};
    std::array<double, 3> assigned = {0, 0, 0};
    SplitManifest m;
    for (const std::string& base : base_order) {
        // Largest deficit relative to the target sample count wins; ties go
        // to the earlier split (train > val > test).
        int best = 0;
        double best_deficit = -std::numeric_limits<double>::infinity();
        for (int k = 0; k < 3; ++k) {
            const double deficit = fractions[k] * total - assigned[k];
            if (deficit > best_deficit) {
                best_deficit = deficit;
                best = k;
            }
        }
        m.base_assignment[base] = names[best];
        assigned[best] += counts[base];
    }
    for (const Sample& s : samples) {
        const std::string& split = m.base_assignment[s.base_id];
        if (split == "train") m.train.push_back(s.id);
        else if (split == "val") m.val.push_back(s.id);
        else m.test.push_back(s.id);
    }
    return m;
}

Sample normalize(const Sample& sample, const NormStats& stats) {
    stats.validate();
    Sample out = sample;
    for (size_t c = 0; c < out.scene.channels.size(); ++c) {
        const ChannelId id = out.scene.channels[c];
        if (id == ChannelId::Mask) continue;
        const auto it = stats.ranges.find(id);
        if (it == stats.ranges.end())
            throw StatsError("no normalization range for channel " + channel_name(id));
        const auto [lo, hi] = it->second;
        out.scene.planes[c] = ((out.scene.planes[c] - lo) / (hi - lo)).min(1.0f).max(0.0f);
    }
    return out;
}

void SynthConfig::validate() const {
    if (grid < 8) throw ConfigError("synthetic grid too small");
    if (plumes_min < 0 || plumes_max < plumes_min) throw ConfigError("bad plume count range");
    if (clouds_min < 0 || clouds_max < clouds_min) throw ConfigError("bad cloud count range");
    if (plume_sigma_min <= 0 || plume_sigma_max < plume_sigma_min)
        throw ConfigError("bad plume sigma range");
    if (noise.radius < 0) throw ConfigError("dilation radius must be >= 0");
    if (noise.p < 0.0 || noise.p > 1.0) throw ConfigError("drop probability must be in [0,1]");
}

namespace {

/// Smooth low-frequency texture in [0, amp]: a few random-phase cosines.
PlaneF low_freq_texture(int n, Rng& rng, double amp) {
    PlaneF p(n, n);
    struct Wave {
        double kx, ky, phase, weight;
    };
    std::array<Wave, 3> waves;
    for (auto& w : waves) {
        w.kx = rng.uniform(0.5, 2.0) * 2.0 * M_PI / n;
        w.ky = rng.uniform(0.5, 2.0) * 2.0 * M_PI / n;
        w.phase = rng.uniform(0.0, 2.0 * M_PI);
        w.weight = rng.uniform(0.3, 1.0);
    }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double v = 0.0, wsum = 0.0;
            for (const auto& w : waves) {
                v += w.weight * 0.5 * (1.0 + std::cos(w.kx * j + w.ky * i + w.phase));
                wsum += w.weight;
            }
            p(i, j) = static_cast<float>(amp * v / wsum);
        }
    return p;
}

double plume_field_at(const std::vector<SynthPlume>& plumes, double i, double j) {
    double v = 0.0;
    for (const auto& pl : plumes) {
        const double di = i - pl.row;
        const double dj = j - pl.col;
        const double ca = std::cos(pl.angle), sa = std::sin(pl.angle);
        const double u = ca * dj + sa * di;
        const double w = -sa * dj + ca * di;
        v += pl.amplitude * std::exp(-0.5 * (u * u / (pl.sigma_major * pl.sigma_major) +
                                             w * w / (pl.sigma_minor * pl.sigma_minor)));
    }
    return v;
}

PlaneF box_blur(const PlaneF& p, int r) {
    const int h = static_cast<int>(p.rows()), w = static_cast<int>(p.cols());
    PlaneF out(h, w);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            double acc = 0.0;
            int cnt = 0;
            for (int di = -r; di <= r; ++di)
                for (int dj = -r; dj <= r; ++dj) {
                    const int ii = i + di, jj = j + dj;
                    if (ii < 0 || jj < 0 || ii >= h || jj >= w) continue;
                    acc += p(ii, jj);
                    ++cnt;
                }
            out(i, j) = static_cast<float>(acc / cnt);
        }
    return out;
}

}  // namespace

std::pair<RasterScene, BitMask> generate_synthetic(const SynthConfig& cfg, Rng& rng,
                                                   SynthDebug* debug) {
    cfg.validate();
    const int n = cfg.grid;

    RasterScene scene;
    scene.width = n;
    scene.height = n;
    scene.crs = "synthetic";
    scene.timestamp = parse_iso8601("2019-08-01T18:00:00Z");
    scene.transform = {.origin_x = 0.0, .origin_y = static_cast<double>(n),
                       .pixel_w = 1.0, .pixel_h = -1.0};

    PlaneF bg_blue = low_freq_texture(n, rng, 0.12);
    PlaneF bg_red = low_freq_texture(n, rng, 0.15);
    PlaneF bg_veggie = low_freq_texture(n, rng, 0.20);
    PlaneF bg_c07 = low_freq_texture(n, rng, 0.25);
    PlaneF bg_c11 = low_freq_texture(n, rng, 0.25);
    PlaneF haze = low_freq_texture(n, rng, 0.08);

    const int n_plumes = static_cast<int>(rng.uniform_int(cfg.plumes_min, cfg.plumes_max));
    std::vector<SynthPlume> plumes;
    for (int k = 0; k < n_plumes; ++k) {
        SynthPlume pl;
        pl.row = rng.uniform(0.15 * n, 0.85 * n);
        pl.col = rng.uniform(0.15 * n, 0.85 * n);
        pl.sigma_major = rng.uniform(cfg.plume_sigma_min, cfg.plume_sigma_max);
        pl.sigma_minor = pl.sigma_major * rng.uniform(0.3, 0.7);
        pl.angle = rng.uniform(0.0, M_PI);
        pl.amplitude = rng.uniform(cfg.plume_intensity_min, cfg.plume_intensity_max);
        plumes.push_back(pl);
    }

    PlaneF plume(n, n);
    BitMask label = BitMask::zeros(n, n, scene.transform);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double v = plume_field_at(plumes, i, j);
            plume(i, j) = static_cast<float>(v);
            label.bits(i, j) = v > kPlumeLabelThreshold ? 1 : 0;
        }

    PlaneF blue = bg_blue + 0.9f * plume;
    PlaneF red = bg_red + 0.8f * plume;
    PlaneF veggie = bg_veggie + 0.5f * plume;
    PlaneF c07 = bg_c07 + 0.3f * plume;
    PlaneF c11 = bg_c11;

    // Fire hotspots at plume origins show up in C07 only.
    for (const auto& pl : plumes) {
        const double amp = rng.uniform(0.5, 0.9);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                const double d2 = (i - pl.row) * (i - pl.row) + (j - pl.col) * (j - pl.col);
                c07(i, j) += static_cast<float>(amp * std::exp(-0.5 * d2 / (1.5 * 1.5)));
            }
    }

    // Clouds: bright in the visible channels and C11, absent from the label.
    const int n_clouds = static_cast<int>(rng.uniform_int(cfg.clouds_min, cfg.clouds_max));
    for (int k = 0; k < n_clouds; ++k) {
        const double ci = rng.uniform(0.0, n);
        const double cj = rng.uniform(0.0, n);
        const double sigma = rng.uniform(2.0, 0.12 * n);
        const double amp = rng.uniform(0.5, 0.9);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                const double d2 = (i - ci) * (i - ci) + (j - cj) * (j - cj);
                const float v = static_cast<float>(amp * std::exp(-0.5 * d2 / (sigma * sigma)));
                blue(i, j) += v;
                red(i, j) += v;
                veggie(i, j) += v;
                c11(i, j) += v;
            }
    }

    PlaneF label_f = label.bits.cast<float>();
    PlaneF aot = 0.6f * box_blur(label_f, 3) + 0.05f + haze;

    auto clampc = [](PlaneF& p) { p = p.min(kReflectanceCeiling).max(0.0f); };
    clampc(blue);
    clampc(red);
    clampc(veggie);
    clampc(c07);
    clampc(c11);
    aot = aot.min(1.0f).max(0.0f);

    scene.channels = {ChannelId::Blue, ChannelId::Red, ChannelId::Veggie,
                      ChannelId::C07, ChannelId::C11, ChannelId::AOT};
    scene.planes = {blue, red, veggie, c07, c11, aot};
    scene = composite_true_color(scene);

    if (debug) debug->plumes = plumes;
    return {std::move(scene), std::move(label)};
}

namespace {

BitMask dilate_disk(const BitMask& mask, int r) {
    if (r == 0) return mask;
    BitMask out = mask;
    for (int i = 0; i < mask.height; ++i)
        for (int j = 0; j < mask.width; ++j) {
            if (!mask.bits(i, j)) continue;
            for (int di = -r; di <= r; ++di)
                for (int dj = -r; dj <= r; ++dj) {
                    if (di * di + dj * dj > r * r) continue;
                    const int ii = i + di, jj = j + dj;
                    if (ii < 0 || jj < 0 || ii >= mask.height || jj >= mask.width) continue;
                    out.bits(ii, jj) = 1;
                }
        }
    return out;
}

BitMask shift_mask(const BitMask& mask, int dx, int dy) {
    BitMask out = BitMask::zeros(mask.height, mask.width, mask.transform);
    for (int i = 0; i < mask.height; ++i)
        for (int j = 0; j < mask.width; ++j) {
            const int si = i - dy, sj = j - dx;
            if (si < 0 || sj < 0 || si >= mask.height || sj >= mask.width) continue;
            out.bits(i, j) = mask.bits(si, sj);
        }
    return out;
}

BitMask drop_components(const BitMask& mask, double p, Rng& rng) {
    // 4-connected component labeling in scan order; one draw per component.
    BitMask out = mask;
    Eigen::Array<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> comp(mask.height,
                                                                            mask.width);
    comp.setConstant(-1);
    int next = 0;
    std::vector<std::pair<int, int>> stack;
    std::vector<int> dropped;
    for (int i = 0; i < mask.height; ++i)
        for (int j = 0; j < mask.width; ++j) {
            if (!mask.bits(i, j) || comp(i, j) >= 0) continue;
            const int id = next++;
            const bool drop = rng.uniform() < p;
            dropped.push_back(drop ? 1 : 0);
            stack.push_back({i, j});
            comp(i, j) = id;
            while (!stack.empty()) {
                const auto [ci, cj] = stack.back();
                stack.pop_back();
                if (drop) out.bits(ci, cj) = 0;
                const int ni[4] = {ci - 1, ci + 1, ci, ci};
                const int nj[4] = {cj, cj, cj - 1, cj + 1};
                for (int k = 0; k < 4; ++k) {
                    if (ni[k] < 0 || nj[k] < 0 || ni[k] >= mask.height || nj[k] >= mask.width)
                        continue;
                    if (!mask.bits(ni[k], nj[k]) || comp(ni[k], nj[k]) >= 0) continue;
                    comp(ni[k], nj[k]) = id;
                    stack.push_back({ni[k], nj[k]});
                }
            }
        }
    return out;
}

}  // namespace

BitMask inject_label_noise(const BitMask& mask, const NoiseSpec& noise, Rng& rng) {
    switch (noise.kind) {
        case NoiseSpec::Kind::None: return mask;
        case NoiseSpec::Kind::Dilate: return dilate_disk(mask, noise.radius);
        case NoiseSpec::Kind::Shift: return shift_mask(mask, noise.dx, noise.dy);
        case NoiseSpec::Kind::DropPlume: return drop_components(mask, noise.p, rng);
    }
    throw ConfigError("unknown noise kind");
}

void save_sample(const Sample& sample, const std::string& path) {
    RasterScene s = sample.scene;
    if (s.has_channel(ChannelId::Mask)) throw FormatError("sample scene already has a Mask");
    s.channels.push_back(ChannelId::Mask);
    s.planes.push_back(sample.label.bits.cast<float>());
    write_scene(s, path);
}

Sample load_sample(const std::string& path, const std::string& base_id, const std::string& id) {
    RasterScene s = read_scene(path);
    const int mi = s.channel_index(ChannelId::Mask);
    if (mi < 0) throw FormatError(path + ": sample file lacks a Mask channel");
    Sample sample;
    sample.label = BitMask::zeros(s.height, s.width, s.transform);
    sample.label.bits = (s.planes[mi] > 0.5f).cast<std::uint8_t>();
    s.planes.erase(s.planes.begin() + mi);
    s.channels.erase(s.channels.begin() + mi);
    sample.scene = std::move(s);
    sample.base_id = base_id;
    sample.id = id;
    sample.positive = sample.label.any();
    return sample;
}

}  // namespace plumeseg
