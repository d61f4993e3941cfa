#include "plumeseg/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

namespace plumeseg {

namespace {

using nlohmann::json;

void write_blocks(std::ostream& out, const std::vector<Tensor4<float>>& blocks) {
    for (const auto& b : blocks)
        out.write(reinterpret_cast<const char*>(b.v.data()),
                  static_cast<std::streamsize>(b.size() * sizeof(float)));
}

void read_blocks(std::istream& in, std::vector<Tensor4<float>>& blocks, const std::string& path) {
    for (auto& b : blocks) {
        in.read(reinterpret_cast<char*>(b.v.data()),
                static_cast<std::streamsize>(b.size() * sizeof(float)));
        if (!in) throw FormatError("checkpoint truncated: " + path);
    }
}

}  // namespace

void save_checkpoint(const UNet<float>& model, const std::string& path) {
    const ModelState<float>& state = model.state();
    const UNetConfig& cfg = model.config();

    json manifest;
    manifest["config"] = {{"in_channels", cfg.in_channels},
                          {"depth", cfg.depth},
                          {"base_filters", cfg.base_filters},
                          {"prelu_init", cfg.prelu_init},
                          {"up_mode", "transposed_conv"}};
    manifest["names"] = state.names;
    json shapes = json::array();
    for (const auto& p : state.params) shapes.push_back({p.n, p.c, p.h, p.w});
    manifest["shapes"] = std::move(shapes);
    manifest["step"] = state.step;

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    out << manifest;
    write_blocks(out, state.params);
    write_blocks(out, state.adam_m);
    write_blocks(out, state.adam_v);
    if (!out) throw IoError("short write on checkpoint: " + path);
}

UNet<float> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    json manifest;
    try {
        in >> manifest;  // stops at the end of the JSON value, before the blocks
    } catch (const json::exception& e) {
        throw FormatError("bad checkpoint manifest in " + path + ": " + e.what());
    }

    UNetConfig cfg;
    try {
        const json& c = manifest.at("config");
        cfg.in_channels = c.at("in_channels").get<int>();
        cfg.depth = c.at("depth").get<int>();
        cfg.base_filters = c.at("base_filters").get<int>();
        cfg.prelu_init = c.at("prelu_init").get<double>();
        if (c.at("up_mode").get<std::string>() != "transposed_conv")
            throw FormatError("unknown up_mode in " + path);

        UNet<float> model(cfg);
        ModelState<float>& state = model.state();
        const auto names = manifest.at("names").get<std::vector<std::string>>();
        const json& shapes = manifest.at("shapes");
        if (names != state.names || shapes.size() != state.params.size())
            throw FormatError("checkpoint layout does not match its config: " + path);
        for (size_t i = 0; i < state.params.size(); ++i) {
            const Tensor4<float>& p = state.params[i];
            const json& s = shapes[i];
            if (s[0] != p.n || s[1] != p.c || s[2] != p.h || s[3] != p.w)
                throw FormatError("checkpoint shape mismatch for " + names[i] + ": " + path);
        }
        state.step = manifest.at("step").get<std::int64_t>();
        read_blocks(in, state.params, path);
        read_blocks(in, state.adam_m, path);
        read_blocks(in, state.adam_v, path);
        return model;
    } catch (const json::exception& e) {
        throw FormatError("bad checkpoint manifest in " + path + ": " + e.what());
    }
}

}  // namespace plumeseg
