#pragma once

#include <cstdint>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "firediff/raster.hpp"
#include "firediff/rng.hpp"

namespace testutil {

inline firediff::BinaryMask random_mask(int w, int h, double density, firediff::Rng& rng) {
  firediff::BinaryMask m(w, h);
  for (auto& b : m.bits()) b = firediff::uniform01(rng) < density ? 1 : 0;
  return m;
}

inline firediff::RasterGrid random_grid(int w, int h, firediff::Rng& rng, int channels = 1) {
  firediff::RasterGrid g(w, h, 2.0, channels);
  for (auto& v : g.values()) v = static_cast<float>(firediff::uniform01(rng));
  return g;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("firediff-test-" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// Brute-force Euclidean dilation: scans every pixel pair.
inline firediff::BinaryMask dilate_oracle(const firediff::BinaryMask& m, int e) {
  firediff::BinaryMask out(m.width(), m.height());
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x)
      for (int v = 0; v < m.height(); ++v)
        for (int u = 0; u < m.width(); ++u)
          if (m.get(u, v) && (u - x) * (u - x) + (v - y) * (v - y) <= e * e) out.set(x, y);
  return out;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// True when both trees hold the same relative file paths with identical bytes.
inline bool same_tree(const std::filesystem::path& a, const std::filesystem::path& b) {
  const auto files = [](const std::filesystem::path& root) {
    std::vector<std::filesystem::path> out;
    for (const auto& e : std::filesystem::recursive_directory_iterator(root))
      if (e.is_regular_file()) out.push_back(std::filesystem::relative(e.path(), root));
    std::sort(out.begin(), out.end());
    return out;
  };
  const auto fa = files(a), fb = files(b);
  if (fa != fb) return false;
  for (const auto& f : fa)
    if (read_file(a / f) != read_file(b / f)) return false;
  return true;
}

}  // namespace testutil
