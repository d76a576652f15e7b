#include "firediff/raster.hpp"

#include <algorithm>
#include <string>

namespace firediff {

RasterGrid::RasterGrid(int width, int height, double ground_sample_distance, int channels,
                       float fill)
    : width_(width), height_(height), channels_(channels), gsd_(ground_sample_distance) {
  if (width < 1 || height < 1 || channels < 1) {
    throw std::invalid_argument("raster: width, height and channels must be >= 1");
  }
  if (!(ground_sample_distance > 0.0)) {
    throw std::invalid_argument("raster: ground_sample_distance must be > 0");
  }
  values_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

void ClipTensor::validate() const {
  for (const auto& f : frames) {
    if (!f.same_geometry(frames.front())) {
      throw std::invalid_argument("clip: frames disagree on width/height/channels");
    }
  }
}

BinaryMask::BinaryMask(int width, int height, std::uint8_t fill)
    : width_(width), height_(height) {
  if (width < 1 || height < 1) throw std::invalid_argument("mask: width and height must be >= 1");
  bits_.assign(static_cast<std::size_t>(width) * height, fill ? 1 : 0);
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

bool BinaryMask::subset_of(const BinaryMask& other) const {
  require_same_size(*this, other, "subset_of");
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    if (bits_[i] && !other.bits_[i]) return false;
  }
  return true;
}

void require_same_size(const BinaryMask& a, const BinaryMask& b, const char* what) {
  if (!a.same_size(b)) {
    throw std::invalid_argument(std::string(what) + ": mask dimensions differ (" +
                                std::to_string(a.width()) + "x" + std::to_string(a.height()) +
                                " vs " + std::to_string(b.width()) + "x" +
                                std::to_string(b.height()) + ")");
  }
}

BinaryMask mask_and(const BinaryMask& a, const BinaryMask& b) {
  require_same_size(a, b, "mask_and");
  BinaryMask out(a.width(), a.height());
  for (std::size_t i = 0; i < out.bits().size(); ++i) out.bits()[i] = a.bits()[i] & b.bits()[i];
  return out;
}

BinaryMask mask_or(const BinaryMask& a, const BinaryMask& b) {
  require_same_size(a, b, "mask_or");
  BinaryMask out(a.width(), a.height());
  for (std::size_t i = 0; i < out.bits().size(); ++i) out.bits()[i] = a.bits()[i] | b.bits()[i];
  return out;
}

BinaryMask threshold(const RasterGrid& grid, float level, int channel) {
  BinaryMask out(grid.width(), grid.height());
  for (int y = 0; y < grid.height(); ++y) {
    for (int x = 0; x < grid.width(); ++x) {
      if (grid.at(x, y, channel) >= level) out.set(x, y);
    }
  }
  return out;
}

}  // namespace firediff
