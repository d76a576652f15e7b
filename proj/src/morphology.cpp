#include "firediff/morphology.hpp"

#include <algorithm>
#include <stdexcept>

#include "firediff/kernels.hpp"

namespace firediff {

StructuringElement::StructuringElement(int radius) : radius_(radius) {
  if (radius < 0) throw std::invalid_argument("structuring element: radius must be >= 0");
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      if (contains(dx, dy, radius)) offsets_.push_back({dx, dy});
    }
  }
}

BinaryMask dilate(const BinaryMask& mask, const StructuringElement& se) {
  BinaryMask out(mask.width(), mask.height());
  kernels::dilate(mask, se.offsets(), out);
  return out;
}

BinaryMask erode(const BinaryMask& mask, const StructuringElement& se) {
  BinaryMask out(mask.width(), mask.height());
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      bool all = true;
      for (const auto& o : se.offsets()) {
        const int nx = x + o.x, ny = y + o.y;
        if (mask.in_bounds(nx, ny) && !mask.get(nx, ny)) {
          all = false;
          break;
        }
      }
      if (all) out.set(x, y);
    }
  }
  return out;
}

BinaryMask close(const BinaryMask& mask, const StructuringElement& se) {
  return erode(dilate(mask, se), se);
}

BinaryMask boundary(const BinaryMask& mask) {
  BinaryMask out(mask.width(), mask.height());
  static constexpr int kDx[4] = {1, -1, 0, 0};
  static constexpr int kDy[4] = {0, 0, 1, -1};
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.get(x, y)) continue;
      for (int k = 0; k < 4; ++k) {
        const int nx = x + kDx[k], ny = y + kDy[k];
        if (!mask.in_bounds(nx, ny) || !mask.get(nx, ny)) {
          out.set(x, y);
          break;
        }
      }
    }
  }
  return out;
}

ComponentLabels connected_components(const BinaryMask& mask, Connectivity connectivity) {
  const int reach = connectivity == Connectivity::Eight ? 8 : 4;
  ComponentLabels result;
  result.width = mask.width();
  result.height = mask.height();
  result.labels.assign(mask.pixel_count(), 0);
  std::vector<Pixel> stack;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * mask.width() + x;
      if (!mask.get(x, y) || result.labels[idx] != 0) continue;
      Component comp;
      comp.label = static_cast<int>(result.components.size()) + 1;
      result.labels[idx] = comp.label;
      stack.assign(1, {x, y});
      while (!stack.empty()) {
        const Pixel p = stack.back();
        stack.pop_back();
        comp.pixels.push_back(p);
        const Pixel nbrs[8] = {{p.x + 1, p.y},     {p.x - 1, p.y},     {p.x, p.y + 1},
                               {p.x, p.y - 1},     {p.x + 1, p.y + 1}, {p.x - 1, p.y - 1},
                               {p.x + 1, p.y - 1}, {p.x - 1, p.y + 1}};
        for (int k = 0; k < reach; ++k) {
          const Pixel n = nbrs[k];
          if (!mask.in_bounds(n.x, n.y) || !mask.get(n.x, n.y)) continue;
          int& l = result.labels[static_cast<std::size_t>(n.y) * mask.width() + n.x];
          if (l == 0) {
            l = comp.label;
            stack.push_back(n);
          }
        }
      }
      std::sort(comp.pixels.begin(), comp.pixels.end(), [](const Pixel& a, const Pixel& b) {
        return a.y != b.y ? a.y < b.y : a.x < b.x;
      });
      double sx = 0.0, sy = 0.0;
      for (const auto& p : comp.pixels) {
        sx += p.x;
        sy += p.y;
      }
      comp.centroid_x = sx / static_cast<double>(comp.pixels.size());
      comp.centroid_y = sy / static_cast<double>(comp.pixels.size());
      result.components.push_back(std::move(comp));
    }
  }
  return result;
}

}  // namespace firediff
