#pragma once

#include <string>

#include "plumeseg/unet.hpp"

namespace plumeseg {

/// On-disk model snapshot: a JSON manifest {"config", "names", "shapes",
/// "step"} followed by concatenated little-endian float32 parameter blocks in
/// manifest order, then the Adam m and v blocks in the same order.
void save_checkpoint(const UNet<float>& model, const std::string& path);
UNet<float> load_checkpoint(const std::string& path);

}  // namespace plumeseg
