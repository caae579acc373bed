#pragma once

// 8-bit image files: binary PGM (P5) and PNG (grayscale or RGB, no
// interlacing, filter 0 on every row).

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "vidsal/tensor.hpp"

namespace vidsal::image {

struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;  // 1 gray, 3 RGB
  std::vector<std::uint8_t> pixels;  // row-major, interleaved
};

// Values in [0, 1] to bytes; values outside are clamped.
std::uint8_t to_byte(double v);

// A [H, W] map (or one frame of a [T, H, W] volume) scaled by 1 / scale.
Image gray_from(std::span<const double> values, std::size_t height, std::size_t width, double scale = 1.0);

// Grayscale frame blended with a red heat layer: out = (1 - a s) gray + a s red.
Image overlay(std::span<const double> frame, std::span<const double> saliency, std::size_t height,
              std::size_t width, double alpha = 0.6);

void write_pgm(const std::filesystem::path& path, const Image& img);
Image read_pgm(const std::filesystem::path& path);

void write_png(const std::filesystem::path& path, const Image& img);
Image read_png(const std::filesystem::path& path);  // reads what write_png produces

}  // namespace vidsal::image
