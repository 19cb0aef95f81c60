#include "eevg/model/serialize.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "eevg/numerics/byte_io.hpp"

namespace eevg {

static_assert(std::numeric_limits<float>::is_iec559);

std::vector<std::uint8_t> encode_tensors(std::span<const NamedTensor> tensors) {
  ByteWriter w;
  w.raw("EEVG");
  w.u32(kWeightFormatVersion);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const NamedTensor& t : tensors) {
    if (t.name.size() > std::numeric_limits<std::uint16_t>::max() || t.value.rank() > 255) {
      throw PreconditionError("tensor '" + t.name.substr(0, 64) + "' cannot be serialized");
    }
    w.u16(static_cast<std::uint16_t>(t.name.size()));
    w.raw(t.name);
    w.u8(static_cast<std::uint8_t>(t.value.rank()));
    for (std::size_t e : t.value.shape()) {
      w.u32(static_cast<std::uint32_t>(e));
    }
    for (float v : t.value.data()) {
      w.f32(v);
    }
  }
  return w.take();
}

std::vector<NamedTensor> decode_tensors(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "EEVG", 4) != 0) {
    throw FormatError(FormatErrorKind::bad_magic, 0, "not an EEVG weight file");
  }
  r.raw(4);
  const std::size_t version_at = r.offset();
  const std::uint32_t version = r.u32();
  if (version != kWeightFormatVersion) {
    throw FormatError(FormatErrorKind::bad_version, version_at,
                      "weight file version " + std::to_string(version) + ", expected " +
                          std::to_string(kWeightFormatVersion));
  }
  const std::uint32_t count = r.u32();
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    if (r.at_end()) {
      throw FormatError(FormatErrorKind::count_mismatch, r.offset(),
                        "header declares " + std::to_string(count) + " tensors, file ends after " + std::to_string(i));
    }
    NamedTensor t;
    t.name = r.raw(r.u16());
    const std::size_t rank_at = r.offset();
    const std::uint8_t rank = r.u8();
    Shape shape;
    std::size_t n = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      shape.push_back(r.u32());
      if (shape.back() == 0) {
        throw FormatError(FormatErrorKind::parse, rank_at, "tensor '" + t.name + "' has a zero extent");
      }
      n *= shape.back();
    }
    if (rank == 0) {
      throw FormatError(FormatErrorKind::parse, rank_at, "tensor '" + t.name + "' has rank 0");
    }
    r.need(4 * n);
    std::vector<float> data(n);
    for (float& v : data) {
      v = r.f32();
    }
    t.value = Tensor<float>(std::move(shape), std::move(data));
    out.push_back(std::move(t));
  }
  if (!r.at_end()) {
    throw FormatError(FormatErrorKind::count_mismatch, r.offset(),
                      "trailing bytes after the " + std::to_string(count) + " declared tensors");
  }
  return out;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw std::runtime_error("write to " + path.string() + " failed");
  }
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open " + path.string());
  }
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ModelWeights<float> load_weights(const std::filesystem::path& path, const EEVGConfig& cfg) {
  Rng rng(0);
  ModelWeights<float> w = ModelWeights<float>::init(cfg, rng);
  assign_tensors(decode_tensors(read_file_bytes(path)), w);
  return w;
}

}  // namespace eevg
