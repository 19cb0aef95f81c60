#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace eevg {

struct GrayImage {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

// Quantizes values in [0, 1] to round(255·x). Throws PreconditionError on
// values outside [0, 1] (NaN included) and DimensionError on a size mismatch.
GrayImage quantize_gray(std::span<const double> values, std::size_t rows, std::size_t cols);

// Binary 8-bit PGM ("P5").
void write_pgm(const std::filesystem::path& path, const GrayImage& image);
void write_pgm(const std::filesystem::path& path, std::span<const double> values, std::size_t rows,
               std::size_t cols);
// Reads the files write_pgm produces (maxval 255). Throws FormatError.
GrayImage read_pgm(const std::filesystem::path& path);

}  // namespace eevg
