#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "plumeseg/checkpoint.hpp"
#include "plumeseg/evaluation.hpp"
#include "plumeseg/panelfe.hpp"
#include "plumeseg/svg.hpp"
#include "plumeseg/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace plumeseg;

namespace {

// ---------------------------------------------------------------------------
// Logging (PLUMESEG_LOG = error|warn|info|debug; default warn)

enum class LogLevel { Error = 0, Warn, Info, Debug };

LogLevel log_level() {
    static const LogLevel level = [] {
        const char* env = std::getenv("PLUMESEG_LOG");
        const std::string v = env ? env : "warn";
        if (v == "error") return LogLevel::Error;
        if (v == "info") return LogLevel::Info;
        if (v == "debug") return LogLevel::Debug;
        return LogLevel::Warn;
    }();
    return level;
}

void log(LogLevel lvl, const std::string& msg) {
    static const char* names[] = {"error", "warn", "info", "debug"};
    if (lvl <= log_level())
        std::cerr << "[" << names[static_cast<int>(lvl)] << "] " << msg << "\n";
}

// ---------------------------------------------------------------------------
// RunConfig: schema-checked JSON; unknown keys are rejected before any writes.

void require_keys(const json& obj, const std::string& where,
                  const std::vector<std::string>& allowed) {
    if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& [key, value] : obj.items())
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw ConfigError("unknown key \"" + key + "\" in " + where);
}

struct RunConfig {
    json doc;
    std::uint64_t seed = 0;
    std::string out = "plumeseg_out";
    BandMode band_mode = BandMode::OneBand;
    double threshold = 0.5;

    const json& section(const std::string& name) const {
        if (!doc.contains(name))
            throw ConfigError("config is missing the \"" + name + "\" section");
        return doc.at(name);
    }
};

void validate_schema(const json& doc) {
    require_keys(doc, "config",
                 {"seed", "out", "band_mode", "threshold", "synth", "prepare", "train",
                  "predict", "validate"});
    if (doc.contains("synth")) {
        require_keys(doc.at("synth"), "synth",
                     {"count", "grid", "plumes_min", "plumes_max", "plume_intensity_min",
                      "plume_intensity_max", "plume_sigma_min", "plume_sigma_max", "clouds_min",
                      "clouds_max", "noise", "fractions"});
        if (doc.at("synth").contains("noise"))
            require_keys(doc.at("synth").at("noise"), "synth.noise",
                         {"kind", "radius", "dx", "dy", "p"});
    }
    if (doc.contains("prepare"))
        require_keys(doc.at("prepare"), "prepare",
                     {"scenes", "annotations", "crop_size", "n_max", "pos_frac", "fractions"});
    if (doc.contains("train"))
        require_keys(doc.at("train"), "train",
                     {"dataset", "epochs", "batch", "lr0", "gamma", "step_epochs", "loss",
                      "drop_highest", "drop_k", "checkpoint_every", "depth", "base_filters",
                      "resume_from"});
    if (doc.contains("predict"))
        require_keys(doc.at("predict"), "predict", {"checkpoint", "scenes", "tile"});
    if (doc.contains("validate")) {
        require_keys(doc.at("validate"), "validate", {"stations_csv", "pm25_csv", "sources"});
        if (doc.at("validate").contains("sources"))
            for (const auto& src : doc.at("validate").at("sources"))
                require_keys(src, "validate.sources[]", {"name", "days"});
    }
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path);
    RunConfig cfg;
    try {
        in >> cfg.doc;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    validate_schema(cfg.doc);
    cfg.seed = cfg.doc.value("seed", 0ull);
    cfg.out = cfg.doc.value("out", cfg.out);
    if (cfg.doc.contains("band_mode"))
        cfg.band_mode = band_mode_from_name(cfg.doc.at("band_mode").get<std::string>());
    cfg.threshold = cfg.doc.value("threshold", 0.5);
    if (!(cfg.threshold > 0.0 && cfg.threshold < 1.0))
        throw ConfigError("threshold must lie in (0,1)");
    return cfg;
}

NoiseSpec parse_noise(const json& j) {
    const std::string kind = j.value("kind", "none");
    if (kind == "none") return NoiseSpec::none();
    if (kind == "dilate") return NoiseSpec::dilate(j.value("radius", 0));
    if (kind == "shift") return NoiseSpec::shift(j.value("dx", 0), j.value("dy", 0));
    if (kind == "drop_plume") return NoiseSpec::drop_plume(j.value("p", 0.0));
    throw ConfigError("unknown noise kind: " + kind);
}

SynthConfig parse_synth(const json& j) {
    SynthConfig s;
    s.grid = j.value("grid", s.grid);
    s.plumes_min = j.value("plumes_min", s.plumes_min);
    s.plumes_max = j.value("plumes_max", s.plumes_max);
    s.plume_intensity_min = j.value("plume_intensity_min", s.plume_intensity_min);
    s.plume_intensity_max = j.value("plume_intensity_max", s.plume_intensity_max);
    s.plume_sigma_min = j.value("plume_sigma_min", s.plume_sigma_min);
    s.plume_sigma_max = j.value("plume_sigma_max", s.plume_sigma_max);
    s.clouds_min = j.value("clouds_min", s.clouds_min);
    s.clouds_max = j.value("clouds_max", s.clouds_max);
    if (j.contains("noise")) s.noise = parse_noise(j.at("noise"));
    s.validate();
    return s;
}

std::array<double, 3> parse_fractions(const json& j) {
    std::array<double, 3> f{0.70, 0.15, 0.15};
    if (j.contains("fractions")) {
        const auto v = j.at("fractions").get<std::vector<double>>();
        if (v.size() != 3) throw ConfigError("fractions must have 3 entries");
        std::copy(v.begin(), v.end(), f.begin());
    }
    return f;
}

TrainConfig parse_train(const RunConfig& run, const json& j) {
    TrainConfig t;
    t.hyper.epochs = j.value("epochs", t.hyper.epochs);
    t.hyper.batch = j.value("batch", t.hyper.batch);
    t.hyper.lr0 = j.value("lr0", t.hyper.lr0);
    t.hyper.gamma = j.value("gamma", t.hyper.gamma);
    t.hyper.step_epochs = j.value("step_epochs", t.hyper.step_epochs);
    const std::string loss = j.value("loss", "bce");
    if (loss == "bce")
        t.loss = LossKind::BCE;
    else if (loss == "mae")
        t.loss = LossKind::MAE;
    else
        throw ConfigError("loss must be bce or mae");
    t.drop_highest = j.value("drop_highest", false);
    t.drop_k = j.value("drop_k", 1);
    t.checkpoint_every = j.value("checkpoint_every", 7);
    t.band_mode = run.band_mode;
    t.seed = run.seed;
    t.eval_threshold = run.threshold;
    return t;
}

// ---------------------------------------------------------------------------
// Dataset persistence shared by synth/prepare/train.

void save_dataset(const std::vector<Sample>& samples, const SplitManifest& split,
                  const fs::path& dir) {
    fs::create_directories(dir);
    json index = json::array();
    for (const Sample& s : samples) {
        const std::string file = s.id + ".grd";
        save_sample(s, (dir / file).string());
        index.push_back({{"id", s.id}, {"base_id", s.base_id}, {"file", file}});
    }
    std::ofstream out(dir / "samples.json");
    out << index.dump(2) << '\n';
    split.save((dir / "split.json").string());
}

struct Dataset {
    std::vector<Sample> train, val, test;
};

Dataset load_dataset(const fs::path& dir) {
    std::ifstream in(dir / "samples.json");
    if (!in) throw IoError("cannot open dataset index: " + (dir / "samples.json").string());
    json index;
    in >> index;
    const SplitManifest split = SplitManifest::load((dir / "split.json").string());
    std::map<std::string, Sample> by_id;
    for (const auto& e : index) {
        const std::string id = e.at("id").get<std::string>();
        by_id[id] = load_sample((dir / e.at("file").get<std::string>()).string(),
                                e.at("base_id").get<std::string>(), id);
    }
    Dataset d;
    for (const auto& id : split.train) d.train.push_back(by_id.at(id));
    for (const auto& id : split.val) d.val.push_back(by_id.at(id));
    for (const auto& id : split.test) d.test.push_back(by_id.at(id));
    return d;
}

void write_run_manifest(const RunConfig& cfg, const std::string& command) {
    json m{{"command", command},
           {"seed", cfg.seed},
           {"band_mode", band_mode_name(cfg.band_mode)},
           {"threshold", cfg.threshold},
           {"config", cfg.doc},
           {"timestamp", format_iso8601(static_cast<UtcInstant>(std::time(nullptr)))}};
    std::ofstream out(fs::path(cfg.out) / "manifest.json");
    out << m.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Commands

int cmd_synth(const RunConfig& cfg) {
    const json& sj = cfg.section("synth");
    const int count = sj.value("count", 0);
    if (count < 0) throw ConfigError("synth.count must be >= 0");
    const SynthConfig synth = parse_synth(sj);

    fs::create_directories(cfg.out);
    write_run_manifest(cfg, "synth");
    const fs::path dir = fs::path(cfg.out) / "dataset";

    RngFactory factory(cfg.seed);
    std::vector<Sample> samples;
    for (int i = 0; i < count; ++i) {
        Rng rng = factory.make("synth" + std::to_string(i));
        auto [scene, label] = generate_synthetic(synth, rng);
        if (synth.noise.kind != NoiseSpec::Kind::None)
            label = inject_label_noise(label, synth.noise, rng);
        Sample s;
        s.scene = std::move(scene);
        s.label = std::move(label);
        s.base_id = "synth" + std::to_string(i);
        s.id = s.base_id + "_crop0";
        s.positive = s.label.any();
        samples.push_back(std::move(s));
    }
    SplitManifest split;
    if (!samples.empty()) {
        Rng split_rng = factory.make("split");
        split = group_split(samples, parse_fractions(sj), split_rng);
    }
    save_dataset(samples, split, dir);
    log(LogLevel::Info, "synth: wrote " + std::to_string(samples.size()) + " samples");
    return 0;
}

int cmd_prepare(const RunConfig& cfg) {
    const json& pj = cfg.section("prepare");
    const auto scene_paths = pj.at("scenes").get<std::vector<std::string>>();
    const auto annot_paths = pj.at("annotations").get<std::vector<std::string>>();
    if (scene_paths.empty()) throw EmptyError("prepare: no scenes configured");
    if (scene_paths.size() != annot_paths.size())
        throw ConfigError("prepare: scenes and annotations must align");
    const int crop_size = pj.value("crop_size", kCropSize);
    const int n_max = pj.value("n_max", 15);
    const double pos_frac = pj.value("pos_frac", 0.6);

    fs::create_directories(cfg.out);
    write_run_manifest(cfg, "prepare");

    RngFactory factory(cfg.seed);
    std::vector<Sample> samples;
    for (size_t i = 0; i < scene_paths.size(); ++i) {
        RasterScene scene = composite_true_color(read_scene(scene_paths[i]));
        const ParseResult parsed = parse_annotations(annot_paths[i]);
        for (const auto& rej : parsed.rejects)
            log(LogLevel::Warn, "prepare: rejected feature " + std::to_string(rej.feature_index) +
                                    " in " + annot_paths[i] + ": " + rej.reason);
        const BitMask mask = rasterize(parsed.set, scene.transform, scene.width, scene.height);
        const std::string base = fs::path(scene_paths[i]).stem().string();
        Rng rng = factory.make("crops:" + base);
        auto crops = sample_crops(scene, mask, base, rng, n_max, pos_frac, crop_size);
        samples.insert(samples.end(), std::make_move_iterator(crops.begin()),
                       std::make_move_iterator(crops.end()));
    }
    Rng split_rng = factory.make("split");
    const SplitManifest split = group_split(samples, parse_fractions(pj), split_rng);
    save_dataset(samples, split, fs::path(cfg.out) / "dataset");
    log(LogLevel::Info, "prepare: wrote " + std::to_string(samples.size()) + " crops");
    return 0;
}

int cmd_train(const RunConfig& cfg) {
    const json& tj = cfg.section("train");
    const TrainConfig train_cfg0 = parse_train(cfg, tj);
    const fs::path dataset_dir = tj.value("dataset", (fs::path(cfg.out) / "dataset").string());

    const Dataset data = load_dataset(dataset_dir);
    if (data.train.empty() || data.val.empty())
        throw EmptyError("train: dataset has an empty train or val split");

    UNetConfig net_cfg;
    net_cfg.in_channels = band_mode_plane_count(cfg.band_mode);
    net_cfg.depth = tj.value("depth", 5);
    net_cfg.base_filters = tj.value("base_filters", 16);

    fs::create_directories(cfg.out);
    write_run_manifest(cfg, "train");
    TrainConfig train_cfg = train_cfg0;
    train_cfg.checkpoint_dir = (fs::path(cfg.out) / "checkpoints").string();

    UNet<float> model = [&] {
        if (tj.contains("resume_from")) {
            const std::string from = tj.at("resume_from").get<std::string>();
            UNet<float> m = load_checkpoint(from);
            // "ckpt_epoch{N}.bin" resumes at epoch N+1.
            const std::string stem = fs::path(from).stem().string();
            const auto digits = stem.find_last_not_of("0123456789");
            if (digits != std::string::npos && digits + 1 < stem.size())
                train_cfg.start_epoch = std::stoi(stem.substr(digits + 1)) + 1;
            log(LogLevel::Info, "train: resumed from " + from + " at epoch " +
                                    std::to_string(train_cfg.start_epoch));
            return m;
        }
        UNet<float> m(net_cfg);
        Rng rng(cfg.seed);
        m.init_params(rng);
        return m;
    }();

    const auto history = train(model, data.train, data.val, train_cfg);
    write_history_csv(history, (fs::path(cfg.out) / "history.csv").string());

    Series tl{"train_loss", {}}, vl{"val_loss", {}}, td{"train_dice", {}}, vd{"val_dice", {}};
    for (const EpochRecord& r : history) {
        tl.values.push_back(r.train_loss);
        vl.values.push_back(r.val_loss);
        td.values.push_back(r.train_dice);
        vd.values.push_back(r.val_dice);
    }
    write_line_chart((fs::path(cfg.out) / "loss.svg").string(), "Loss vs epoch", "loss", {tl, vl});
    write_line_chart((fs::path(cfg.out) / "dice.svg").string(), "Dice vs epoch", "dice", {td, vd});
    log(LogLevel::Info, "train: " + std::to_string(history.size()) + " epochs");
    return 0;
}

int cmd_predict(const RunConfig& cfg) {
    const json& pj = cfg.section("predict");
    UNet<float> model = load_checkpoint(pj.at("checkpoint").get<std::string>());
    const auto scene_paths = pj.value("scenes", std::vector<std::string>{});
    const int tile = pj.value("tile", kCropSize);

    fs::create_directories(cfg.out);
    write_run_manifest(cfg, "predict");
    const NormStats stats = NormStats::defaults();
    for (const auto& path : scene_paths) {
        RasterScene scene = read_scene(path);
        if (!scene.has_channel(ChannelId::GreenSynth)) scene = composite_true_color(scene);
        const ProbMap prob = predict_scene(model, scene, cfg.band_mode, stats, tile);
        const BitMask mask = threshold(prob, cfg.threshold);
        const std::string stem = fs::path(path).stem().string();
        write_prob_map(prob, scene.crs, (fs::path(cfg.out) / (stem + "_prob.grd")).string());
        RasterScene out;
        out.width = mask.width;
        out.height = mask.height;
        out.channels = {ChannelId::Mask};
        out.planes = {mask.bits.cast<float>()};
        out.transform = mask.transform;
        out.crs = scene.crs;
        write_scene(out, (fs::path(cfg.out) / (stem + "_mask.grd")).string());
        log(LogLevel::Info, "predict: " + stem + " -> " + std::to_string(mask.count()) +
                                " smoke pixels");
    }
    return 0;
}

int cmd_validate(const RunConfig& cfg) {
    const json& vj = cfg.section("validate");
    const auto stations = read_stations_csv(vj.at("stations_csv").get<std::string>());
    const auto pm25 = read_pm25_csv(vj.at("pm25_csv").get<std::string>());

    fs::create_directories(cfg.out);
    write_run_manifest(cfg, "validate");

    std::ofstream table(fs::path(cfg.out) / "fe_comparison.csv");
    table << "source,beta1,r2,adj_r2,within_r2,within_adj_r2,n_obs,n_stations,status\n";
    table.precision(12);
    std::vector<Bar> bars;
    int failures = 0;
    for (const auto& src : vj.at("sources")) {
        const std::string name = src.at("name").get<std::string>();
        std::map<Date, DaySources> exposure;
        for (const auto& [date_str, paths] : src.at("days").items()) {
            std::vector<BitMask> masks;
            for (const auto& p : paths.get<std::vector<std::string>>()) {
                const RasterScene s = read_scene(p);
                const PlaneF& plane = s.plane(ChannelId::Mask);
                BitMask m = BitMask::zeros(s.height, s.width, s.transform);
                m.bits = (plane != 0.0f).cast<std::uint8_t>();
                masks.push_back(std::move(m));
            }
            exposure.emplace(parse_date(date_str), DaySources{std::move(masks)});
        }
        try {
            const auto panel = build_panel(stations, pm25, exposure);
            const FEResult r = fe_fit(panel);
            table << name << ',' << r.beta1 << ',' << r.r2 << ',' << r.adj_r2 << ','
                  << r.within_r2 << ',' << r.within_adj_r2 << ',' << r.n_obs << ','
                  << r.n_stations << ",ok\n";
            bars.push_back({name, r.within_adj_r2});
            write_fe_json(r, (fs::path(cfg.out) / ("fe_" + name + ".json")).string());
            write_residuals_csv(r, panel,
                                (fs::path(cfg.out) / ("residuals_" + name + ".csv")).string());
        } catch (const NoWithinVariationError& e) {
            table << name << ",,,,,,,,no_within_variation\n";
            log(LogLevel::Error, "validate: source " + name + ": " + e.what());
            ++failures;
        }
    }
    write_bar_chart((fs::path(cfg.out) / "fe_comparison.svg").string(),
                    "Within-adjusted R2 by smoke source", "within_adj_r2", bars);
    return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Wildfire smoke plume segmentation pipeline"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out, band_mode, loss;
    std::optional<double> threshold;
    std::optional<bool> drop_highest;

    app.add_option("--config", config_path, "Run config JSON")->required();
    app.add_option("--seed", seed, "Override config seed");
    app.add_option("--out", out, "Override output directory");
    app.add_option("--threshold", threshold, "Override probability threshold");
    app.add_option("--band-mode", band_mode, "Override band mode")
        ->check(CLI::IsMember({"1band", "3band", "4band"}));
    app.add_option("--loss", loss, "Override training loss")->check(CLI::IsMember({"bce", "mae"}));
    app.add_option("--drop-highest", drop_highest, "Override drop-highest strategy");

    for (const char* name : {"synth", "prepare", "train", "predict", "validate"})
        app.add_subcommand(name);

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig cfg = load_config(config_path);
        if (seed) {
            cfg.seed = *seed;
            cfg.doc["seed"] = *seed;
        }
        if (out) {
            cfg.out = *out;
            cfg.doc["out"] = *out;
        }
        if (threshold) {
            if (!(*threshold > 0.0 && *threshold < 1.0))
                throw ConfigError("threshold must lie in (0,1)");
            cfg.threshold = *threshold;
            cfg.doc["threshold"] = *threshold;
        }
        if (band_mode) {
            cfg.band_mode = band_mode_from_name(*band_mode);
            cfg.doc["band_mode"] = *band_mode;
        }
        if (loss) cfg.doc["train"]["loss"] = *loss;
        if (drop_highest) cfg.doc["train"]["drop_highest"] = *drop_highest;

        const std::string cmd = app.get_subcommands().front()->get_name();
        if (cmd == "synth") return cmd_synth(cfg);
        if (cmd == "prepare") return cmd_prepare(cfg);
        if (cmd == "train") return cmd_train(cfg);
        if (cmd == "predict") return cmd_predict(cfg);
        return cmd_validate(cfg);
    } catch (const Error& e) {
        log(LogLevel::Error, e.what());
        return 1;
    } catch (const std::exception& e) {
        log(LogLevel::Error, std::string("unexpected: ") + e.what());
        return 1;
    }
}
