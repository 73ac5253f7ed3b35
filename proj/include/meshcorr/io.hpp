#pragma once

#include <optional>
#include <string>
#include <vector>

#include "meshcorr/image.hpp"
#include "meshcorr/network.hpp"
#include "meshcorr/rasterizer.hpp"

namespace meshcorr {

// Multi-plane float image container ("MCI1"): magic, version, dtype,
// channels, height, width, then row-major little-endian planes. dtype 0
// holds f32 planes, dtype 1 holds u64 planes (triangle ids).
void write_float_image(const std::string& path, const std::vector<const ImageF*>& planes);
void write_float_image(const std::string& path, const ImageF& image);
std::vector<ImageF> read_float_image(const std::string& path);

void write_id_image(const std::string& path, const ImageU64& image);
ImageU64 read_id_image(const std::string& path);

// Feature stack container ("MCS1"): camera + pose metadata followed by the
// seven float channels, triangle ids, and the valid mask.
void write_stack(const std::string& path, const MeshFeatureStack& stack);
MeshFeatureStack read_stack(const std::string& path);

// 8-bit grayscale preview (binary PGM), linearly mapped from [lo, hi]; when
// lo == hi the image min/max is used.
void write_pgm(const std::string& path, const ImageF& image, float lo = 0.0f, float hi = 0.0f);
void write_pgm(const std::string& path, const ImageU8& mask);

// Checkpoint ("MCK1"): refuses to load when the layer-spec digest differs.
struct CheckpointExtras {
  std::optional<std::int64_t> train_step;
};

void save_checkpoint(const std::string& path, const CorrectionNetF& net, const AdamState* adam,
                     std::int64_t train_step);
// Loads parameters into net (must match digest); returns the stored training
// step. Restores Adam state when the file has one and adam != nullptr.
std::int64_t load_checkpoint(const std::string& path, CorrectionNetF& net, AdamState* adam);

std::uint64_t fnv1a_file_digest(const std::string& path);
std::uint64_t fnv1a_bytes(const void* data, std::size_t n, std::uint64_t seed = 1469598103934665603ull);

}  // namespace meshcorr
