#include "eevg/numerics/pgm.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "eevg/errors.hpp"

namespace eevg {

GrayImage quantize_gray(std::span<const double> values, std::size_t rows, std::size_t cols) {
  if (values.size() != rows * cols || values.empty()) {
    throw DimensionError("image of " + std::to_string(values.size()) + " values is not " + std::to_string(rows) + "x" +
                         std::to_string(cols));
  }
  GrayImage img{rows, cols, std::vector<std::uint8_t>(values.size())};
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = values[i];
    if (!(v >= 0.0 && v <= 1.0)) {
      throw PreconditionError("pgm value " + std::to_string(v) + " at " + std::to_string(i) + " is outside [0, 1]");
    }
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * v));
  }
  return img;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  out << "P5\n" << image.cols << ' ' << image.rows << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
  if (!out) {
    throw std::runtime_error("write to " + path.string() + " failed");
  }
}

void write_pgm(const std::filesystem::path& path, std::span<const double> values, std::size_t rows,
               std::size_t cols) {
  write_pgm(path, quantize_gray(values, rows, cols));
}

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open " + path.string());
  }
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 2 || bytes.compare(0, 2, "P5") != 0) {
    throw FormatError(FormatErrorKind::bad_magic, 0, "not a binary PGM: " + path.string());
  }
  std::istringstream header(bytes);
  std::string magic;
  std::size_t cols = 0;
  std::size_t rows = 0;
  int maxval = 0;
  if (!(header >> magic >> cols >> rows >> maxval) || maxval != 255 || rows == 0 || cols == 0) {
    throw FormatError(FormatErrorKind::parse, 2, "bad PGM header in " + path.string());
  }
  const auto offset = static_cast<std::size_t>(header.tellg()) + 1;
  if (bytes.size() < offset + rows * cols) {
    throw FormatError(FormatErrorKind::truncated, bytes.size(), "PGM pixel data is truncated in " + path.string());
  }
  GrayImage img{rows, cols, std::vector<std::uint8_t>(rows * cols)};
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(offset), rows * cols, img.pixels.begin());
  return img;
}

}  // namespace eevg
