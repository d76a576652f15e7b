#pragma once

#include <vector>

#include "firediff/raster.hpp"

namespace firediff {

/// Euclidean disk B_e: offset (dx,dy) is a member iff dx^2 + dy^2 <= e^2.
class StructuringElement {
 public:
  explicit StructuringElement(int radius);

  int radius() const { return radius_; }
  const std::vector<Pixel>& offsets() const { return offsets_; }
  static bool contains(int dx, int dy, int radius) { return dx * dx + dy * dy <= radius * radius; }

 private:
  int radius_;
  std::vector<Pixel> offsets_;
};

/// G (+) B_e, clipped to the grid.
BinaryMask dilate(const BinaryMask& mask, const StructuringElement& se);

/// Erosion; pixels outside the grid count as set, so closing does not eat borders.
BinaryMask erode(const BinaryMask& mask, const StructuringElement& se);

BinaryMask close(const BinaryMask& mask, const StructuringElement& se);

/// Set pixels with at least one 4-neighbour that is unset or off-grid.
BinaryMask boundary(const BinaryMask& mask);

struct Component {
  int label = 0;                // dense from 1
  std::vector<Pixel> pixels;    // raster-scan order
  double centroid_x = 0.0;
  double centroid_y = 0.0;
};

struct ComponentLabels {
  int width = 0;
  int height = 0;
  std::vector<int> labels;  // 0 = background
  std::vector<Component> components;

  int label_at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
};

enum class Connectivity { Four, Eight };

/// Labels ordered by the raster-scan position of each component's first pixel.
ComponentLabels connected_components(const BinaryMask& mask,
                                     Connectivity connectivity = Connectivity::Four);

}  // namespace firediff
