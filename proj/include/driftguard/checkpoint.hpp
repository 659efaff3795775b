#pragma once

#include "driftguard/projector.hpp"

#include <filesystem>
#include <string>

namespace driftguard {

/// NET1 container: magic, u32 header length, JSON header (layer dims,
/// activations, bias flag, center presence), then float32 parameters in
/// declaration order (per layer: weight row-major, bias), then the center.
std::string encode_checkpoint(const ProjectionNetwork<double>& net);
ProjectionNetwork<double> decode_checkpoint(std::string_view bytes);

void save_checkpoint(const ProjectionNetwork<double>& net, const std::filesystem::path& path);
ProjectionNetwork<double> load_checkpoint(const std::filesystem::path& path);

}  // namespace driftguard
