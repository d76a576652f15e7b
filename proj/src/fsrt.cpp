#include "firediff/fsrt.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "firediff/error.hpp"

namespace firediff::fsrt {

namespace {

static_assert(std::endian::native == std::endian::little, "FSRT codec assumes little-endian host");

template <typename U>
void put(std::vector<std::uint8_t>& out, U v) {
  std::uint8_t buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.insert(out.end(), buf, buf + sizeof(U));
}

template <typename U>
U take(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  if (pos + sizeof(U) > bytes.size()) throw DataError("fsrt: truncated header");
  U v;
  std::memcpy(&v, bytes.data() + pos, sizeof(U));
  pos += sizeof(U);
  return v;
}

constexpr std::size_t kHeaderBytes = 4 + 2 + 4 + 4 + 2 + 1 + 8;

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("fsrt: cannot open for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("fsrt: write failed: " + path.string());
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("fsrt: cannot open: " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

std::vector<std::uint8_t> encode(const Header& h, std::span<const float> f32,
                                 std::span<const std::uint8_t> u8) {
  const std::size_t n = static_cast<std::size_t>(h.width) * h.height * h.channels;
  if ((h.dtype == Dtype::F32 && f32.size() != n) || (h.dtype == Dtype::U8 && u8.size() != n)) {
    throw std::invalid_argument("fsrt: payload size does not match header");
  }
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + n * (h.dtype == Dtype::F32 ? 4 : 1));
  out.insert(out.end(), {'F', 'S', 'R', 'T'});
  put(out, h.version);
  put(out, h.width);
  put(out, h.height);
  put(out, h.channels);
  put(out, static_cast<std::uint8_t>(h.dtype));
  put(out, h.ground_sample_distance);
  if (h.dtype == Dtype::F32) {
    for (float v : f32) put(out, v);
  } else {
    for (std::uint8_t v : u8) {
      if (v > 1) throw std::invalid_argument("fsrt: mask values must be 0 or 1");
      out.push_back(v);
    }
  }
  return out;
}

Header decode(std::span<const std::uint8_t> bytes, std::vector<float>& f32,
              std::vector<std::uint8_t>& u8) {
  if (bytes.size() < kHeaderBytes || std::memcmp(bytes.data(), "FSRT", 4) != 0) {
    throw DataError("fsrt: bad magic");
  }
  std::size_t pos = 4;
  Header h;
  h.version = take<std::uint16_t>(bytes, pos);
  if (h.version != kVersion) throw DataError("fsrt: unsupported version " + std::to_string(h.version));
  h.width = take<std::uint32_t>(bytes, pos);
  h.height = take<std::uint32_t>(bytes, pos);
  h.channels = take<std::uint16_t>(bytes, pos);
  const auto tag = take<std::uint8_t>(bytes, pos);
  if (tag != 1 && tag != 2) throw DataError("fsrt: unknown dtype tag " + std::to_string(tag));
  h.dtype = static_cast<Dtype>(tag);
  h.ground_sample_distance = take<double>(bytes, pos);
  if (h.width == 0 || h.height == 0 || h.channels == 0 || !(h.ground_sample_distance > 0.0)) {
    throw DataError("fsrt: invalid geometry in header");
  }
  const std::size_t n = static_cast<std::size_t>(h.width) * h.height * h.channels;
  const std::size_t elem = h.dtype == Dtype::F32 ? 4 : 1;
  if (bytes.size() - pos != n * elem) throw DataError("fsrt: payload length mismatch");
  if (h.dtype == Dtype::F32) {
    f32.resize(n);
    std::memcpy(f32.data(), bytes.data() + pos, n * 4);
  } else {
    u8.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
    for (auto v : u8) {
      if (v > 1) throw DataError("fsrt: mask payload contains values other than 0/1");
    }
  }
  return h;
}

void write_raster(const std::filesystem::path& path, const RasterGrid& grid) {
  Header h;
  h.width = grid.width();
  h.height = grid.height();
  h.channels = static_cast<std::uint16_t>(grid.channels());
  h.ground_sample_distance = grid.ground_sample_distance();
  write_bytes(path, encode(h, grid.values(), {}));
}

void write_clip(const std::filesystem::path& path, const ClipTensor& clip) {
  if (clip.frames.empty()) throw std::invalid_argument("fsrt: empty clip");
  clip.validate();
  if (clip.channel_count() != 1) throw std::invalid_argument("fsrt: clip frames must be single-channel");
  Header h;
  h.width = clip.width();
  h.height = clip.height();
  h.channels = static_cast<std::uint16_t>(clip.length());
  h.ground_sample_distance = clip.frames.front().ground_sample_distance();
  std::vector<float> payload;
  payload.reserve(clip.frames.size() * clip.frames.front().pixel_count());
  for (const auto& f : clip.frames) payload.insert(payload.end(), f.values().begin(), f.values().end());
  write_bytes(path, encode(h, payload, {}));
}

void write_masks(const std::filesystem::path& path, std::span<const BinaryMask> masks,
                 double ground_sample_distance) {
  if (masks.empty()) throw std::invalid_argument("fsrt: empty mask sequence");
  Header h;
  h.width = masks.front().width();
  h.height = masks.front().height();
  h.channels = static_cast<std::uint16_t>(masks.size());
  h.dtype = Dtype::U8;
  h.ground_sample_distance = ground_sample_distance;
  std::vector<std::uint8_t> payload;
  for (const auto& m : masks) {
    require_same_size(m, masks.front(), "fsrt::write_masks");
    payload.insert(payload.end(), m.bits().begin(), m.bits().end());
  }
  write_bytes(path, encode(h, {}, payload));
}

Header read_header(const std::filesystem::path& path) {
  std::vector<float> f;
  std::vector<std::uint8_t> u;
  return decode(read_bytes(path), f, u);
}

RasterGrid read_raster(const std::filesystem::path& path) {
  std::vector<float> f;
  std::vector<std::uint8_t> u;
  const Header h = decode(read_bytes(path), f, u);
  RasterGrid g(static_cast<int>(h.width), static_cast<int>(h.height), h.ground_sample_distance,
               h.channels);
  if (h.dtype == Dtype::F32) {
    g.values() = std::move(f);
  } else {
    for (std::size_t i = 0; i < u.size(); ++i) g.values()[i] = u[i];
  }
  return g;
}

ClipTensor read_clip(const std::filesystem::path& path, double frame_interval) {
  const RasterGrid all = read_raster(path);
  ClipTensor clip;
  clip.frame_interval = frame_interval;
  const std::size_t plane = all.pixel_count();
  for (int c = 0; c < all.channels(); ++c) {
    RasterGrid f(all.width(), all.height(), all.ground_sample_distance());
    std::copy_n(all.values().begin() + static_cast<std::ptrdiff_t>(c * plane), plane, f.values().begin());
    clip.frames.push_back(std::move(f));
  }
  return clip;
}

std::vector<BinaryMask> read_masks(const std::filesystem::path& path) {
  std::vector<float> f;
  std::vector<std::uint8_t> u;
  const Header h = decode(read_bytes(path), f, u);
  if (h.dtype != Dtype::U8) throw DataError("fsrt: expected u8 mask file: " + path.string());
  std::vector<BinaryMask> masks;
  const std::size_t plane = static_cast<std::size_t>(h.width) * h.height;
  for (std::size_t c = 0; c < h.channels; ++c) {
    BinaryMask m(static_cast<int>(h.width), static_cast<int>(h.height));
    std::copy_n(u.begin() + static_cast<std::ptrdiff_t>(c * plane), plane, m.bits().begin());
    masks.push_back(std::move(m));
  }
  return masks;
}

}  // namespace firediff::fsrt
