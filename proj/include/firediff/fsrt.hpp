#pragma once

// FSRT binary raster files:
//   "FSRT" | version u16 | width u32 | height u32 | channels u16 | dtype u8 |
//   ground_sample_distance f64 | payload
// All integers and floats little-endian. Payload is channel-major, each channel
// row-major. dtype 1 = f32, dtype 2 = u8 (masks, values restricted to {0,1}).
// A clip is stored as one file with one channel per frame.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "firediff/raster.hpp"

namespace firediff::fsrt {

inline constexpr std::uint16_t kVersion = 1;

enum class Dtype : std::uint8_t { F32 = 1, U8 = 2 };

struct Header {
  std::uint16_t version = kVersion;
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint16_t channels = 0;
  Dtype dtype = Dtype::F32;
  double ground_sample_distance = 0.0;
};

void write_raster(const std::filesystem::path& path, const RasterGrid& grid);
void write_clip(const std::filesystem::path& path, const ClipTensor& clip);
void write_masks(const std::filesystem::path& path, std::span<const BinaryMask> masks,
                 double ground_sample_distance);

Header read_header(const std::filesystem::path& path);
RasterGrid read_raster(const std::filesystem::path& path);
ClipTensor read_clip(const std::filesystem::path& path, double frame_interval);
std::vector<BinaryMask> read_masks(const std::filesystem::path& path);

// In-memory codec; the file functions are thin wrappers around these.
std::vector<std::uint8_t> encode(const Header& h, std::span<const float> f32,
                                 std::span<const std::uint8_t> u8);
Header decode(std::span<const std::uint8_t> bytes, std::vector<float>& f32,
              std::vector<std::uint8_t>& u8);

}  // namespace firediff::fsrt
