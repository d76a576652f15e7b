#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace firediff {

struct Pixel {
  int x = 0;
  int y = 0;
  friend bool operator==(const Pixel&, const Pixel&) = default;
};

/// Real-valued raster, channel-major then row-major: values[(c*height + y)*width + x].
class RasterGrid {
 public:
  RasterGrid() = default;
  RasterGrid(int width, int height, double ground_sample_distance = 2.0, int channels = 1,
             float fill = 0.0f);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  double ground_sample_distance() const { return gsd_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }

  float& at(int x, int y, int c = 0) { return values_[index(x, y, c)]; }
  float at(int x, int y, int c = 0) const { return values_[index(x, y, c)]; }

  std::vector<float>& values() { return values_; }
  const std::vector<float>& values() const { return values_; }

  bool same_geometry(const RasterGrid& o) const {
    return width_ == o.width_ && height_ == o.height_ && channels_ == o.channels_;
  }

  std::size_t index(int x, int y, int c = 0) const {
    return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  double gsd_ = 2.0;
  std::vector<float> values_;
};

/// Ordered frames sharing one geometry.
struct ClipTensor {
  std::vector<RasterGrid> frames;
  double frame_interval = 1.0;  // seconds

  int length() const { return static_cast<int>(frames.size()); }
  int width() const { return frames.empty() ? 0 : frames.front().width(); }
  int height() const { return frames.empty() ? 0 : frames.front().height(); }
  int channel_count() const { return frames.empty() ? 0 : frames.front().channels(); }

  /// Throws std::invalid_argument if frames disagree on geometry.
  void validate() const;
};

class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int width, int height, std::uint8_t fill = 0);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t pixel_count() const { return bits_.size(); }

  bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }
  std::uint8_t get(int x, int y) const { return bits_[static_cast<std::size_t>(y) * width_ + x]; }
  void set(int x, int y, bool v = true) {
    bits_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0;
  }

  std::vector<std::uint8_t>& bits() { return bits_; }
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  std::size_t count() const;
  bool any() const { return count() > 0; }
  bool same_size(const BinaryMask& o) const { return width_ == o.width_ && height_ == o.height_; }

  /// True iff every 1-pixel of *this is 1 in `other`.
  bool subset_of(const BinaryMask& other) const;

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

BinaryMask mask_and(const BinaryMask& a, const BinaryMask& b);
BinaryMask mask_or(const BinaryMask& a, const BinaryMask& b);

/// Pixels whose value in channel `channel` is >= threshold.
BinaryMask threshold(const RasterGrid& grid, float level, int channel = 0);

void require_same_size(const BinaryMask& a, const BinaryMask& b, const char* what);

}  // namespace firediff
