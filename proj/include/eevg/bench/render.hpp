#pragma once

#include <filesystem>
#include <vector>

#include "eevg/bench/training.hpp"

namespace eevg {

// Writes into out_dir (created if missing):
//   image.pgm                brightest channel of the input
//   layer<l>_scores.pgm      normalized location scores on the patch grid,
//                            0 at cells eliminated before layer l
//   layer<l>_keep.pgm        255 where a token survives layer l
//   mask.pgm, gt_mask.pgm    predicted probabilities and ground truth
//   box.csv                  predicted and ground-truth boxes
// Returns the paths in that order.
std::vector<std::filesystem::path> render_demo(const EEVGConfig& cfg, const ToyModel& m, const SynthSample& s,
                                               const std::filesystem::path& out_dir);

}  // namespace eevg
