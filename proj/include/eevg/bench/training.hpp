#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "eevg/model/model.hpp"
#include "eevg/synthgen/synthgen.hpp"

namespace eevg {

/// Toy backbone plus the grounding model; what `train` writes and `eval`
/// reads. Tensor names are "backbone.*" followed by the model's own.
struct ToyModel {
  ToyBackbone<float> backbone;
  ModelWeights<float> model;

  static ToyModel init(const EEVGConfig& cfg);

  template <typename F>
  void visit(const std::string& p, F&& f) {
    backbone.visit(p + "backbone.", f);
    model.visit(p, f);
  }
  template <typename F>
  void visit(const std::string& p, F&& f) const {
    backbone.visit(p + "backbone.", f);
    model.visit(p, f);
  }
};

void save_toy_model(const ToyModel& m, const std::filesystem::path& path);
// Throws FormatError if the file does not match the config's shapes.
ToyModel load_toy_model(const std::filesystem::path& path, const EEVGConfig& cfg);

struct EpochMetrics {
  std::size_t epoch = 0;
  LossValues loss;                  // means over the epoch's samples
  std::vector<double> mean_keep;    // per decoder layer
  double seconds = 0.0;
};

struct TrainingOptions {
  std::size_t batch = 16;
  // Fraction of the steps spent on linear warmup before cosine decay to 0.
  double warmup_fraction = 0.05;
  std::function<void(const EpochMetrics&)> on_epoch;
};

// AdamW on the joint loss, summed over mini-batches and scaled by 1/batch.
// The sample order of epoch e is a shuffle seeded by (cfg.seed, e), so a
// rerun with the same inputs reproduces every metric exactly.
ToyModel run_training(const EEVGConfig& cfg, std::span<const SynthSample> data, std::size_t epochs,
                      std::vector<EpochMetrics>& log, const TrainingOptions& opt = {});

std::string metrics_csv_header(std::size_t layers);
std::string metrics_csv_line(const EpochMetrics& m);

struct SamplePrediction {
  BBox box;
  std::vector<float> mask;  // H×W probabilities
  ForwardDiagnostics diagnostics;
};

SamplePrediction predict(const EEVGConfig& cfg, const ToyModel& m, const SynthSample& s);

// Intersection over union of the binarized (> 0.5) prediction and the mask.
// An empty prediction against a nonempty mask scores 0; two empty masks
// score 1.
double mask_iou(std::span<const float> pred, std::span<const std::uint8_t> gt);

struct EvalResult {
  double precision_at_05 = 0.0;  // fraction with box IoU > 0.5
  double miou = 0.0;
  std::vector<double> box_iou;
  std::vector<double> mask_iou;
  std::vector<std::size_t> final_keep;  // tokens left after the last layer

  double mean_final_keep() const;
  double final_keep_stddev() const;
};

// Scores predictions[i] against data[i]. Throws PreconditionError on empty
// input and DimensionError on a count mismatch.
EvalResult score_predictions(std::span<const SamplePrediction> predictions, std::span<const SynthSample> data);

EvalResult evaluate(const EEVGConfig& cfg, const ToyModel& m, std::span<const SynthSample> data);

}  // namespace eevg
