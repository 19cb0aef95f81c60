#include "eevg/synthgen/synthgen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

#include "eevg/model/serialize.hpp"
#include "eevg/numerics/byte_io.hpp"

namespace eevg {

namespace vocab {

std::string_view name(std::uint32_t id) {
  static constexpr std::array<std::string_view, size> names = {
      "<pad>", "red", "green", "blue", "square", "circle", "triangle", "left", "right", "top", "bottom"};
  if (id >= size) {
    throw IndexError("token id " + std::to_string(id) + " is outside the vocabulary");
  }
  return names[id];
}

}  // namespace vocab

SynthConfig SynthConfig::from(const EEVGConfig& cfg) {
  SynthConfig s;
  s.H = cfg.H;
  s.W = cfg.W;
  s.L_max = cfg.L_max;
  s.min_side = std::max<std::size_t>(3, std::min(cfg.H, cfg.W) * 3 / 16);
  s.max_side = std::max(s.min_side, std::min(cfg.H, cfg.W) * 11 / 32);
  return s;
}

std::size_t SynthSample::expression_length() const {
  return static_cast<std::size_t>(std::count(pad_mask.begin(), pad_mask.end(), std::uint8_t{1}));
}

namespace {

constexpr std::array<std::array<float, 3>, 3> kRgb = {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};

bool inside(const PlacedShape& s, std::size_t x, std::size_t y) {
  if (x < s.x0 || y < s.y0 || x >= s.x0 + s.side || y >= s.y0 + s.side) {
    return false;
  }
  const double half = static_cast<double>(s.side) / 2.0;
  const double dx = static_cast<double>(x - s.x0) + 0.5 - half;
  const double dy = static_cast<double>(y - s.y0) + 0.5 - half;
  switch (s.kind) {
    case ShapeKind::square:
      return true;
    case ShapeKind::circle:
      return dx * dx + dy * dy <= half * half;
    case ShapeKind::triangle:
      // Apex up: the half-width grows linearly from 0 at the top edge.
      return std::abs(dx) <= half * (static_cast<double>(y - s.y0) + 0.5) / static_cast<double>(s.side);
  }
  return false;
}

double center_x(const PlacedShape& s) {
  return static_cast<double>(s.x0) + static_cast<double>(s.side) / 2.0;
}
double center_y(const PlacedShape& s) {
  return static_cast<double>(s.y0) + static_cast<double>(s.side) / 2.0;
}

bool overlaps(const PlacedShape& a, const PlacedShape& b, std::size_t gap) {
  return a.x0 < b.x0 + b.side + gap && b.x0 < a.x0 + a.side + gap && a.y0 < b.y0 + b.side + gap &&
         b.y0 < a.y0 + a.side + gap;
}

// Strictly most extreme among `group` in the given direction.
bool is_extreme(const std::vector<PlacedShape>& shapes, const std::vector<std::size_t>& group, std::size_t ref,
                Position p) {
  auto key = [&](std::size_t i) {
    switch (p) {
      case Position::left:
        return -center_x(shapes[i]);
      case Position::right:
        return center_x(shapes[i]);
      case Position::top:
        return -center_y(shapes[i]);
      case Position::bottom:
        return center_y(shapes[i]);
    }
    return 0.0;
  };
  return std::all_of(group.begin(), group.end(), [&](std::size_t i) { return i == ref || key(i) < key(ref); });
}

std::vector<std::vector<std::uint32_t>> candidate_expressions(const std::vector<PlacedShape>& shapes,
                                                              std::size_t ref) {
  const PlacedShape& r = shapes[ref];
  auto count = [&](auto pred) { return std::count_if(shapes.begin(), shapes.end(), pred); };
  const auto same_kind = count([&](const PlacedShape& s) { return s.kind == r.kind; });
  const auto same_color = count([&](const PlacedShape& s) { return s.color == r.color; });
  std::vector<std::size_t> twins;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (shapes[i].kind == r.kind && shapes[i].color == r.color) {
      twins.push_back(i);
    }
  }
  std::vector<std::vector<std::uint32_t>> out;
  if (same_kind == 1) {
    out.push_back({vocab::token(r.kind)});
  }
  if (same_color == 1) {
    out.push_back({vocab::token(r.color)});
  }
  if (!out.empty()) {
    return out;
  }
  if (twins.size() == 1) {
    return {{vocab::token(r.color), vocab::token(r.kind)}};
  }
  for (Position p : {Position::left, Position::right, Position::top, Position::bottom}) {
    if (is_extreme(shapes, twins, ref, p)) {
      out.push_back({vocab::token(r.color), vocab::token(r.kind), vocab::token(p)});
    }
  }
  return out;
}

std::vector<PlacedShape> place_shapes(Rng& rng, const SynthConfig& cfg) {
  const std::size_t count = static_cast<std::size_t>(rng.between(2, 4));
  std::vector<PlacedShape> shapes;
  for (std::size_t n = 0; n < count; ++n) {
    PlacedShape s{};
    s.color = static_cast<Color>(rng.below(3));
    s.kind = static_cast<ShapeKind>(rng.below(3));
    bool placed = false;
    for (std::size_t a = 0; a < cfg.attempts && !placed; ++a) {
      s.side = static_cast<std::size_t>(
          rng.between(static_cast<std::int64_t>(cfg.min_side), static_cast<std::int64_t>(cfg.max_side)));
      // One pixel of margin keeps every box strictly inside the image.
      s.x0 = 1 + static_cast<std::size_t>(rng.below(cfg.W - s.side - 1));
      s.y0 = 1 + static_cast<std::size_t>(rng.below(cfg.H - s.side - 1));
      placed = std::none_of(shapes.begin(), shapes.end(), [&](const PlacedShape& o) { return overlaps(s, o, cfg.gap); });
    }
    if (!placed) {
      return {};
    }
    shapes.push_back(s);
  }
  return shapes;
}

}  // namespace

SynthSample generate_sample(Rng& rng, const SynthConfig& cfg) {
  if (cfg.min_side < 3 || cfg.max_side < cfg.min_side || cfg.L_max < 3 ||
      2 * (cfg.max_side + 1) + cfg.gap > std::min(cfg.H, cfg.W)) {
    throw GenerationError("canvas " + std::to_string(cfg.H) + "x" + std::to_string(cfg.W) +
                          " cannot hold two shapes of side " + std::to_string(cfg.max_side) +
                          " (or L_max < 3)");
  }
  for (std::size_t layout = 0; layout < cfg.layouts; ++layout) {
    std::vector<PlacedShape> shapes = place_shapes(rng, cfg);
    if (shapes.empty()) {
      continue;
    }
    const auto options = candidate_expressions(shapes, 0);
    if (options.empty()) {
      continue;
    }
    const auto& expr = options[rng.below(options.size())];

    SynthSample s;
    s.seed = rng.seed();
    s.height = cfg.H;
    s.width = cfg.W;
    s.image.assign(cfg.H * cfg.W * 3, 0.0f);
    s.gt.rows = cfg.H;
    s.gt.cols = cfg.W;
    s.gt.mask.assign(cfg.H * cfg.W, 0);
    for (std::size_t i = 0; i < shapes.size(); ++i) {
      const PlacedShape& sh = shapes[i];
      const float shade = static_cast<float>(rng.uniform(0.6, 1.0));
      for (std::size_t y = sh.y0; y < sh.y0 + sh.side; ++y) {
        for (std::size_t x = sh.x0; x < sh.x0 + sh.side; ++x) {
          if (!inside(sh, x, y)) {
            continue;
          }
          for (std::size_t ch = 0; ch < 3; ++ch) {
            s.image[(y * cfg.W + x) * 3 + ch] = shade * kRgb[static_cast<std::size_t>(sh.color)][ch];
          }
          if (i == 0) {
            s.gt.mask[y * cfg.W + x] = 1;
          }
        }
      }
    }
    std::size_t x0 = cfg.W, y0 = cfg.H, x1 = 0, y1 = 0;
    for (std::size_t y = 0; y < cfg.H; ++y) {
      for (std::size_t x = 0; x < cfg.W; ++x) {
        if (s.gt.mask[y * cfg.W + x]) {
          x0 = std::min(x0, x);
          y0 = std::min(y0, y);
          x1 = std::max(x1, x + 1);
          y1 = std::max(y1, y + 1);
        }
      }
    }
    const double fw = static_cast<double>(cfg.W);
    const double fh = static_cast<double>(cfg.H);
    s.gt.box = {(x0 + x1) / 2.0 / fw, (y0 + y1) / 2.0 / fh, (x1 - x0) / fw, (y1 - y0) / fh};
    s.tokens.assign(cfg.L_max, vocab::pad);
    s.pad_mask.assign(cfg.L_max, 0);
    std::copy(expr.begin(), expr.end(), s.tokens.begin());
    std::fill_n(s.pad_mask.begin(), expr.size(), std::uint8_t{1});
    s.shapes = std::move(shapes);
    s.referent = 0;
    return s;
  }
  throw GenerationError("no valid layout after " + std::to_string(cfg.layouts) + " attempts (seed " +
                        std::to_string(rng.seed()) + ")");
}

SynthSample generate_sample(std::uint64_t seed, const SynthConfig& cfg) {
  Rng rng(mix_seed(seed));
  SynthSample s = generate_sample(rng, cfg);
  s.seed = seed;
  return s;
}

std::vector<SynthSample> generate_dataset(std::uint64_t first_seed, std::size_t count, const SynthConfig& cfg) {
  std::vector<SynthSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(generate_sample(first_seed + i, cfg));
  }
  return out;
}

std::string expression_text(std::span<const std::uint32_t> tokens) {
  std::string out;
  for (std::uint32_t t : tokens) {
    if (t == vocab::pad) {
      continue;
    }
    if (!out.empty()) {
      out += ' ';
    }
    out += vocab::name(t);
  }
  return out;
}

template <typename T>
Tensor<T> patchify(std::span<const float> image, std::size_t height, std::size_t width, std::size_t patch) {
  if (patch == 0 || height % patch != 0 || width % patch != 0 || image.size() != height * width * 3) {
    throw DimensionError("cannot cut a " + std::to_string(height) + "x" + std::to_string(width) + "x3 image of " +
                         std::to_string(image.size()) + " values into " + std::to_string(patch) + "-pixel patches");
  }
  const std::size_t gc = width / patch;
  Tensor<T> out({(height / patch) * gc, 3 * patch * patch});
  for (std::size_t i = 0; i < out.rows(); ++i) {
    const std::size_t py = (i / gc) * patch;
    const std::size_t px = (i % gc) * patch;
    T* row = out.data().data() + i * out.cols();
    for (std::size_t y = 0; y < patch; ++y) {
      for (std::size_t x = 0; x < patch; ++x) {
        for (std::size_t c = 0; c < 3; ++c) {
          row[(y * patch + x) * 3 + c] = static_cast<T>(image[((py + y) * width + px + x) * 3 + c]);
        }
      }
    }
  }
  return out;
}

template <typename T>
ToyBackbone<T> ToyBackbone<T>::init(const EEVGConfig& cfg, Rng& rng) {
  ToyBackbone b;
  b.patch_w = xavier_uniform<T>(3 * cfg.P * cfg.P, cfg.C_v, rng);
  b.patch_b = Tensor<T>({1, cfg.C_v});
  b.token_table = xavier_uniform<T>(vocab::size, cfg.C_l, rng);
  return b;
}

template <typename T>
Var<T> patch_embed(const Var<T>& patches, const ToyBackbone<T>& b) {
  Tape<T>& tape = patches.tape();
  return ops::linear(patches, tape.parameter(b.patch_w), tape.parameter(b.patch_b));
}

template <typename T>
Var<T> token_embed(Tape<T>& tape, std::span<const std::uint32_t> tokens, const ToyBackbone<T>& b) {
  std::vector<std::size_t> rows(tokens.begin(), tokens.end());
  for (std::size_t r : rows) {
    if (r >= b.token_table.rows()) {
      throw IndexError("token id " + std::to_string(r) + " has no embedding row");
    }
  }
  return ops::gather_rows(tape.parameter(b.token_table), rows);
}

std::vector<std::uint32_t> rle_encode(std::span<const std::uint8_t> mask) {
  std::vector<std::uint32_t> runs;
  std::uint8_t current = 0;
  std::uint32_t length = 0;
  for (std::uint8_t v : mask) {
    const std::uint8_t bit = v ? 1 : 0;
    if (bit != current) {
      runs.push_back(length);
      current = bit;
      length = 0;
    }
    ++length;
  }
  runs.push_back(length);
  return runs;
}

std::vector<std::uint8_t> rle_decode(std::span<const std::uint32_t> runs, std::size_t size) {
  std::vector<std::uint8_t> out;
  out.reserve(size);
  std::uint8_t bit = 0;
  for (std::uint32_t r : runs) {
    if (out.size() + r > size) {
      throw FormatError(FormatErrorKind::parse, out.size(), "mask runs exceed " + std::to_string(size) + " pixels");
    }
    out.insert(out.end(), r, bit);
    bit ^= 1;
  }
  if (out.size() != size) {
    throw FormatError(FormatErrorKind::parse, out.size(), "mask runs cover " + std::to_string(out.size()) + " of " +
                                                              std::to_string(size) + " pixels");
  }
  return out;
}

namespace {

constexpr std::uint32_t kDatasetVersion = 1;

}  // namespace

void write_dataset(const std::filesystem::path& dir, std::span<const SynthSample> samples) {
  std::filesystem::create_directories(dir);
  ByteWriter w;
  w.raw("EVDS");
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(samples.size()));
  const std::size_t H = samples.empty() ? 0 : samples.front().height;
  const std::size_t W = samples.empty() ? 0 : samples.front().width;
  const std::size_t L = samples.empty() ? 0 : samples.front().tokens.size();
  w.u32(static_cast<std::uint32_t>(H));
  w.u32(static_cast<std::uint32_t>(W));
  w.u32(static_cast<std::uint32_t>(L));
  std::ostringstream manifest;
  manifest << "index\tseed\texpression\tcx\tcy\tw\th\tmask_area\n";
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const SynthSample& s = samples[i];
    if (s.height != H || s.width != W || s.tokens.size() != L) {
      throw PreconditionError("dataset samples must share one resolution and expression length");
    }
    w.u64(s.seed);
    for (float v : s.image) {
      w.f32(v);
    }
    for (std::uint32_t t : s.tokens) {
      w.u8(static_cast<std::uint8_t>(t));
    }
    for (double v : {s.gt.box.cx, s.gt.box.cy, s.gt.box.w, s.gt.box.h}) {
      w.f32(static_cast<float>(v));
    }
    const auto runs = rle_encode(s.gt.mask);
    w.u32(static_cast<std::uint32_t>(runs.size()));
    for (std::uint32_t r : runs) {
      w.u32(r);
    }
    std::string box = box_csv_line(s.gt.box);
    std::replace(box.begin(), box.end(), ',', '\t');
    manifest << i << '\t' << s.seed << '\t' << expression_text(s.tokens) << '\t' << box << '\t' << std::count(s.gt.mask.begin(), s.gt.mask.end(), std::uint8_t{1}) << '\n';
  }
  const auto bytes = w.take();
  write_file_bytes(dir / "dataset.bin", bytes);
  std::ofstream(dir / "manifest.tsv") << manifest.str();
}

std::vector<SynthSample> read_dataset(const std::filesystem::path& dir) {
  const auto bytes = read_file_bytes(dir / "dataset.bin");
  ByteReader r(bytes);
  if (bytes.size() < 4 || r.raw(4) != "EVDS") {
    throw FormatError(FormatErrorKind::bad_magic, 0, "not an EEVG dataset: " + dir.string());
  }
  const std::uint32_t version = r.u32();
  if (version != kDatasetVersion) {
    throw FormatError(FormatErrorKind::bad_version, 4, "dataset version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32();
  const std::size_t H = r.u32();
  const std::size_t W = r.u32();
  const std::size_t L = r.u32();
  std::vector<SynthSample> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    SynthSample s;
    s.seed = r.u64();
    s.height = H;
    s.width = W;
    s.image.resize(H * W * 3);
    for (float& v : s.image) {
      v = r.f32();
    }
    s.tokens.resize(L);
    s.pad_mask.resize(L);
    for (std::size_t t = 0; t < L; ++t) {
      s.tokens[t] = r.u8();
      s.pad_mask[t] = s.tokens[t] != vocab::pad;
      if (s.tokens[t] >= vocab::size) {
        throw FormatError(FormatErrorKind::parse, r.offset() - 1, "token id out of vocabulary");
      }
    }
    s.gt.box.cx = r.f32();
    s.gt.box.cy = r.f32();
    s.gt.box.w = r.f32();
    s.gt.box.h = r.f32();
    std::vector<std::uint32_t> runs(r.u32());
    for (std::uint32_t& run : runs) {
      run = r.u32();
    }
    s.gt.rows = H;
    s.gt.cols = W;
    s.gt.mask = rle_decode(runs, H * W);
    out.push_back(std::move(s));
  }
  if (!r.at_end()) {
    throw FormatError(FormatErrorKind::count_mismatch, r.offset(), "trailing bytes after " + std::to_string(count) +
                                                                       " samples");
  }
  return out;
}

#define EEVG_INSTANTIATE(T)                                                                       \
  template Tensor<T> patchify(std::span<const float>, std::size_t, std::size_t, std::size_t);     \
  template struct ToyBackbone<T>;                                                                 \
  template Var<T> patch_embed(const Var<T>&, const ToyBackbone<T>&);                              \
  template Var<T> token_embed(Tape<T>&, std::span<const std::uint32_t>, const ToyBackbone<T>&);

EEVG_INSTANTIATE(float)
EEVG_INSTANTIATE(double)

#undef EEVG_INSTANTIATE

}  // namespace eevg
