#include "eevg/bench/render.hpp"

#include <algorithm>
#include <fstream>

#include "eevg/elimination/elimination.hpp"
#include "eevg/numerics/pgm.hpp"

namespace eevg {

std::vector<std::filesystem::path> render_demo(const EEVGConfig& cfg, const ToyModel& m, const SynthSample& s,
                                               const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  auto emit = [&](const std::string& name, std::span<const double> values, std::size_t rows, std::size_t cols) {
    written.push_back(out_dir / name);
    write_pgm(written.back(), values, rows, cols);
  };

  std::vector<double> gray(s.height * s.width);
  for (std::size_t i = 0; i < gray.size(); ++i) {
    gray[i] = std::max({s.image[3 * i], s.image[3 * i + 1], s.image[3 * i + 2]});
  }
  emit("image.pgm", gray, s.height, s.width);

  const SamplePrediction p = predict(cfg, m, s);
  const PatchGrid grid = cfg.grid();
  for (std::size_t l = 0; l < p.diagnostics.layers.size(); ++l) {
    const LayerDiagnostics& d = p.diagnostics.layers[l];
    emit("layer" + std::to_string(l) + "_scores.pgm", scores_on_grid(d.normalized, d.before), grid.rows, grid.cols);
    emit("layer" + std::to_string(l) + "_keep.pgm", keep_mask_on_grid(d.after), grid.rows, grid.cols);
  }
  const std::vector<double> mask(p.mask.begin(), p.mask.end());
  emit("mask.pgm", mask, cfg.H, cfg.W);
  const std::vector<double> gt(s.gt.mask.begin(), s.gt.mask.end());
  emit("gt_mask.pgm", gt, cfg.H, cfg.W);

  written.push_back(out_dir / "box.csv");
  std::ofstream csv(written.back());
  csv << "which,cx,cy,w,h\npredicted," << box_csv_line(p.box) << "\nground_truth," << box_csv_line(s.gt.box) << '\n';
  if (!csv) {
    throw std::runtime_error("cannot write " + written.back().string());
  }
  return written;
}

}  // namespace eevg
