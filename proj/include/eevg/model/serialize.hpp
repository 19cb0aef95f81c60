#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "eevg/model/model.hpp"

namespace eevg {

// "EEVG", u32 version, u32 tensor count, then per tensor: u16 name length,
// name bytes, u8 rank, u32 extents, little-endian f32 values.
inline constexpr std::uint32_t kWeightFormatVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor<float> value;
};

std::vector<std::uint8_t> encode_tensors(std::span<const NamedTensor> tensors);
// Throws FormatError with the byte offset of the first problem.
std::vector<NamedTensor> decode_tensors(std::span<const std::uint8_t> bytes);

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

template <typename W>
std::vector<NamedTensor> named_tensors(const W& w) {
  std::vector<NamedTensor> out;
  w.visit("", [&](const std::string& name, const Tensor<float>& t) { out.push_back({name, t}); });
  return out;
}

// Copies decoded tensors into a pre-shaped weight struct. Names, order and
// shapes must match the struct exactly (FormatError::schema_mismatch), and so
// must the count (FormatError::count_mismatch).
template <typename W>
void assign_tensors(std::vector<NamedTensor> tensors, W& w) {
  std::size_t i = 0;
  std::size_t expected = 0;
  w.visit("", [&](const std::string&, Tensor<float>&) { ++expected; });
  if (tensors.size() != expected) {
    throw FormatError(FormatErrorKind::count_mismatch, 8,
                      "file holds " + std::to_string(tensors.size()) + " tensors, model expects " +
                          std::to_string(expected));
  }
  w.visit("", [&](const std::string& name, Tensor<float>& t) {
    NamedTensor& src = tensors[i];
    if (src.name != name || src.value.shape() != t.shape()) {
      throw FormatError(FormatErrorKind::schema_mismatch, i,
                        "tensor " + std::to_string(i) + " is '" + src.name + "' " + shape_string(src.value.shape()) +
                            ", expected '" + name + "' " + shape_string(t.shape()));
    }
    t = std::move(src.value);
    ++i;
  });
}

template <typename W>
void save_weights(const W& w, const std::filesystem::path& path) {
  write_file_bytes(path, encode_tensors(named_tensors(w)));
}

// The config fixes every shape; the file must match it.
ModelWeights<float> load_weights(const std::filesystem::path& path, const EEVGConfig& cfg);

}  // namespace eevg
