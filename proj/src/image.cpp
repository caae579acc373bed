#include "vidsal/image.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

namespace vidsal::image {
namespace {

constexpr std::array<std::uint8_t, 8> kPngSignature{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

void check(const Image& img) {
  if (img.channels != 1 && img.channels != 3) throw ValueError("image: channels must be 1 or 3");
  if (img.pixels.size() != img.width * img.height * img.channels) {
    throw ShapeError("image: pixel buffer does not match " + std::to_string(img.width) + "x" +
                     std::to_string(img.height) + "x" + std::to_string(img.channels));
  }
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(std::uint8_t(v >> s));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return std::uint32_t(p[0]) << 24 | std::uint32_t(p[1]) << 16 | std::uint32_t(p[2]) << 8 | std::uint32_t(p[3]);
}

void chunk(std::vector<std::uint8_t>& out, const char* type, const std::vector<std::uint8_t>& data) {
  put_u32(out, std::uint32_t(data.size()));
  const std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  put_u32(out, std::uint32_t(crc32(0, out.data() + start, uInt(out.size() - start))));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

std::uint8_t to_byte(double v) {
  if (!(v > 0)) return 0;
  if (v >= 1) return 255;
  return std::uint8_t(std::lround(v * 255.0));
}

Image gray_from(std::span<const double> values, std::size_t height, std::size_t width, double scale) {
  if (values.size() != height * width) throw ShapeError("image: map size does not match height x width");
  if (!(scale > 0)) throw ValueError("image: scale must be positive");
  Image img{width, height, 1, std::vector<std::uint8_t>(values.size())};
  for (std::size_t i = 0; i < values.size(); ++i) img.pixels[i] = to_byte(values[i] / scale);
  return img;
}

Image overlay(std::span<const double> frame, std::span<const double> saliency, std::size_t height, std::size_t width,
              double alpha) {
  if (frame.size() != height * width || saliency.size() != height * width) {
    throw ShapeError("overlay: frame and saliency must both be height x width");
  }
  Image img{width, height, 3, std::vector<std::uint8_t>(3 * height * width)};
  for (std::size_t i = 0; i < frame.size(); ++i) {
    const double g = std::clamp(frame[i], 0.0, 1.0);
    const double a = alpha * std::clamp(saliency[i], 0.0, 1.0);
    img.pixels[3 * i] = to_byte((1 - a) * g + a);
    img.pixels[3 * i + 1] = to_byte((1 - a) * g);
    img.pixels[3 * i + 2] = to_byte((1 - a) * g);
  }
  return img;
}

void write_pgm(const std::filesystem::path& path, const Image& img) {
  check(img);
  if (img.channels != 1) throw ValueError("pgm: grayscale only");
  const std::string header = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.insert(bytes.end(), img.pixels.begin(), img.pixels.end());
  write_file(path, bytes);
}

Image read_pgm(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  std::string text(bytes.begin(), bytes.end());
  std::istringstream in(text);
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (!in || magic != "P5" || maxval != 255) throw IoError("pgm: unsupported header in " + path.string());
  const std::size_t offset = std::size_t(in.tellg()) + 1;
  if (bytes.size() != offset + w * h) throw IoError("pgm: truncated " + path.string());
  return {w, h, 1, std::vector<std::uint8_t>(bytes.begin() + std::ptrdiff_t(offset), bytes.end())};
}

void write_png(const std::filesystem::path& path, const Image& img) {
  check(img);
  std::vector<std::uint8_t> raw;
  const std::size_t row = img.width * img.channels;
  raw.reserve(img.height * (row + 1));
  for (std::size_t y = 0; y < img.height; ++y) {
    raw.push_back(0);
    raw.insert(raw.end(), img.pixels.begin() + std::ptrdiff_t(y * row), img.pixels.begin() + std::ptrdiff_t((y + 1) * row));
  }
  uLongf packed_size = compressBound(uLong(raw.size()));
  std::vector<std::uint8_t> packed(packed_size);
  if (compress2(packed.data(), &packed_size, raw.data(), uLong(raw.size()), 9) != Z_OK) {
    throw IoError("png: compression failed for " + path.string());
  }
  packed.resize(packed_size);

  std::vector<std::uint8_t> out(kPngSignature.begin(), kPngSignature.end());
  std::vector<std::uint8_t> ihdr;
  put_u32(ihdr, std::uint32_t(img.width));
  put_u32(ihdr, std::uint32_t(img.height));
  ihdr.insert(ihdr.end(), {8, std::uint8_t(img.channels == 1 ? 0 : 2), 0, 0, 0});
  chunk(out, "IHDR", ihdr);
  chunk(out, "IDAT", packed);
  chunk(out, "IEND", {});
  write_file(path, out);
}

Image read_png(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  if (bytes.size() < 8 || !std::equal(kPngSignature.begin(), kPngSignature.end(), bytes.begin())) {
    throw IoError("png: bad signature in " + path.string());
  }
  Image img;
  std::vector<std::uint8_t> packed;
  std::size_t pos = 8;
  while (pos + 12 <= bytes.size()) {
    const std::uint32_t len = get_u32(&bytes[pos]);
    if (pos + 12 + len > bytes.size()) throw IoError("png: truncated chunk in " + path.string());
    const std::string type(bytes.begin() + std::ptrdiff_t(pos + 4), bytes.begin() + std::ptrdiff_t(pos + 8));
    const std::uint8_t* data = &bytes[pos + 8];
    if (get_u32(data + len) != std::uint32_t(crc32(0, &bytes[pos + 4], uInt(len + 4)))) {
      throw IoError("png: CRC mismatch in " + type + " of " + path.string());
    }
    if (type == "IHDR") {
      img.width = get_u32(data);
      img.height = get_u32(data + 4);
      if (data[8] != 8 || (data[9] != 0 && data[9] != 2) || data[12] != 0) {
        throw IoError("png: only 8-bit gray/RGB non-interlaced images are supported");
      }
      img.channels = data[9] == 0 ? 1 : 3;
    } else if (type == "IDAT") {
      packed.insert(packed.end(), data, data + len);
    } else if (type == "IEND") {
      break;
    }
    pos += 12 + len;
  }
  const std::size_t row = img.width * img.channels;
  std::vector<std::uint8_t> raw(img.height * (row + 1));
  uLongf raw_size = uLongf(raw.size());
  if (uncompress(raw.data(), &raw_size, packed.data(), uLong(packed.size())) != Z_OK || raw_size != raw.size()) {
    throw IoError("png: corrupt image data in " + path.string());
  }
  img.pixels.resize(img.height * row);
  for (std::size_t y = 0; y < img.height; ++y) {
    if (raw[y * (row + 1)] != 0) throw IoError("png: unsupported row filter in " + path.string());
    std::copy_n(raw.begin() + std::ptrdiff_t(y * (row + 1) + 1), row, img.pixels.begin() + std::ptrdiff_t(y * row));
  }
  return img;
}

}  // namespace vidsal::image
