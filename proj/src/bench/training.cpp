#include "eevg/bench/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "eevg/model/serialize.hpp"
#include "eevg/numerics/optim.hpp"
#include "eevg/numerics/params.hpp"

namespace eevg {

ToyModel ToyModel::init(const EEVGConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  Rng backbone_rng = rng.fork(1);
  Rng model_rng = rng.fork(2);
  return {ToyBackbone<float>::init(cfg, backbone_rng), ModelWeights<float>::init(cfg, model_rng)};
}

void save_toy_model(const ToyModel& m, const std::filesystem::path& path) {
  write_file_bytes(path, encode_tensors(named_tensors(m)));
}

ToyModel load_toy_model(const std::filesystem::path& path, const EEVGConfig& cfg) {
  ToyModel m = ToyModel::init(cfg);
  assign_tensors(decode_tensors(read_file_bytes(path)), m);
  return m;
}

namespace {

ForwardResult<float> forward_sample(Tape<float>& tape, const EEVGConfig& cfg, const ToyModel& m,
                                    const SynthSample& s) {
  if (s.height != cfg.H || s.width != cfg.W || s.tokens.size() != cfg.L_max) {
    throw DimensionError("sample " + std::to_string(s.seed) + " is " + std::to_string(s.height) + "x" +
                         std::to_string(s.width) + " with " + std::to_string(s.tokens.size()) +
                         " tokens; config expects " + std::to_string(cfg.H) + "x" + std::to_string(cfg.W) + " with " +
                         std::to_string(cfg.L_max));
  }
  const Var<float> visual = patch_embed(tape.constant(patchify<float>(s.image, cfg.H, cfg.W, cfg.P)), m.backbone);
  const Var<float> text = token_embed(tape, s.tokens, m.backbone);
  return eevg_forward(visual, text, s.pad_mask, cfg, m.model);
}

double learning_rate(const EEVGConfig& cfg, const TrainingOptions& opt, std::size_t step, std::size_t total) {
  const std::size_t warm = static_cast<std::size_t>(opt.warmup_fraction * static_cast<double>(total));
  if (step < warm) {
    return cfg.lr * static_cast<double>(step + 1) / static_cast<double>(warm);
  }
  const double progress = static_cast<double>(step - warm) / static_cast<double>(std::max<std::size_t>(1, total - warm));
  return cfg.lr * 0.5 * (1.0 + std::cos(std::acos(-1.0) * progress));
}

}  // namespace

ToyModel run_training(const EEVGConfig& cfg, std::span<const SynthSample> data, std::size_t epochs,
                      std::vector<EpochMetrics>& log, const TrainingOptions& opt) {
  if (data.empty()) {
    throw PreconditionError("training needs at least one sample");
  }
  if (opt.batch == 0) {
    throw ConfigError("batch size must be positive");
  }
  ToyModel m = ToyModel::init(cfg);
  std::vector<Tensor<float>*> params = parameter_list<float>(m);
  for (Tensor<float>* p : params) {
    p->set_requires_grad(true);
  }
  OptimState<float> state(AdamWHyper{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  const std::size_t steps_per_epoch = (data.size() + opt.batch - 1) / opt.batch;
  const std::size_t total_steps = steps_per_epoch * epochs;
  std::vector<std::size_t> order(data.size());
  std::size_t step = 0;
  log.clear();

  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle(mix_seed(cfg.seed) ^ mix_seed(epoch + 1));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle.below(i)]);
    }
    EpochMetrics metrics;
    metrics.epoch = epoch;
    metrics.mean_keep.assign(cfg.D_layers, 0.0);
    for (std::size_t b0 = 0; b0 < order.size(); b0 += opt.batch) {
      const std::size_t b1 = std::min(order.size(), b0 + opt.batch);
      for (Tensor<float>* p : params) {
        p->zero_grad();
      }
      for (std::size_t i = b0; i < b1; ++i) {
        const SynthSample& s = data[order[i]];
        Tape<float> tape;
        const ForwardResult<float> r = forward_sample(tape, cfg, m, s);
        const LossBundle<float> loss = joint_loss(r.prediction.box, r.prediction.mask.mask, s.gt, cfg.loss);
        const LossValues values = loss_values(loss);
        if (!std::isfinite(values.total)) {
          throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", sample " +
                             std::to_string(s.seed));
        }
        tape.backward(ops::scale(loss.total, 1.0f / static_cast<float>(b1 - b0)));
        metrics.loss += values;
        const auto kept = r.diagnostics.keep_counts();
        for (std::size_t l = 0; l < kept.size(); ++l) {
          metrics.mean_keep[l] += static_cast<double>(kept[l]);
        }
      }
      state.hyper.lr = learning_rate(cfg, opt, step++, total_steps);
      adamw_step<float>(params, state);
    }
    const double n = static_cast<double>(data.size());
    metrics.loss = metrics.loss.scaled(1.0 / n);
    for (double& k : metrics.mean_keep) {
      k /= n;
    }
    metrics.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log.push_back(metrics);
    if (opt.on_epoch) {
      opt.on_epoch(metrics);
    }
  }
  for (Tensor<float>* p : params) {
    p->set_requires_grad(false);
  }
  return m;
}

std::string metrics_csv_header(std::size_t layers) {
  std::string h = "epoch,total,det,seg,smooth_l1,giou,focal,dice";
  for (std::size_t l = 0; l < layers; ++l) {
    h += ",keep_layer" + std::to_string(l);
  }
  return h + ",seconds";
}

std::string metrics_csv_line(const EpochMetrics& m) {
  std::ostringstream os;
  os.precision(8);
  os << m.epoch << ',' << m.loss.total << ',' << m.loss.det << ',' << m.loss.seg << ',' << m.loss.smooth << ','
     << m.loss.giou << ',' << m.loss.focal << ',' << m.loss.dice;
  for (double k : m.mean_keep) {
    os << ',' << k;
  }
  os << ',' << m.seconds;
  return os.str();
}

SamplePrediction predict(const EEVGConfig& cfg, const ToyModel& m, const SynthSample& s) {
  Tape<float> tape(false);
  ForwardResult<float> r = forward_sample(tape, cfg, m, s);
  const auto& mask = r.prediction.mask.mask.value().data();
  return {to_bbox(r.prediction.box.value()), std::vector<float>(mask.begin(), mask.end()), std::move(r.diagnostics)};
}

double mask_iou(std::span<const float> pred, std::span<const std::uint8_t> gt) {
  if (pred.size() != gt.size()) {
    throw DimensionError("mask IoU: " + std::to_string(pred.size()) + " predicted pixels vs " +
                         std::to_string(gt.size()) + " ground-truth pixels");
  }
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] > 0.5f;
    const bool g = gt[i] != 0;
    inter += p && g;
    uni += p || g;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double EvalResult::mean_final_keep() const {
  if (final_keep.empty()) {
    return 0.0;
  }
  return std::accumulate(final_keep.begin(), final_keep.end(), 0.0) / static_cast<double>(final_keep.size());
}

double EvalResult::final_keep_stddev() const {
  if (final_keep.empty()) {
    return 0.0;
  }
  const double mean = mean_final_keep();
  double ss = 0.0;
  for (std::size_t k : final_keep) {
    ss += (static_cast<double>(k) - mean) * (static_cast<double>(k) - mean);
  }
  return std::sqrt(ss / static_cast<double>(final_keep.size()));
}

EvalResult score_predictions(std::span<const SamplePrediction> predictions, std::span<const SynthSample> data) {
  if (data.empty()) {
    throw PreconditionError("evaluation needs at least one sample");
  }
  if (predictions.size() != data.size()) {
    throw DimensionError(std::to_string(predictions.size()) + " predictions for " + std::to_string(data.size()) +
                         " samples");
  }
  EvalResult r;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double iou = box_iou(predictions[i].box, data[i].gt.box);
    hits += iou > 0.5;
    r.box_iou.push_back(iou);
    r.mask_iou.push_back(mask_iou(predictions[i].mask, data[i].gt.mask));
    r.final_keep.push_back(predictions[i].diagnostics.final_tokens.size());
  }
  r.precision_at_05 = static_cast<double>(hits) / static_cast<double>(data.size());
  r.miou = std::accumulate(r.mask_iou.begin(), r.mask_iou.end(), 0.0) / static_cast<double>(data.size());
  return r;
}

EvalResult evaluate(const EEVGConfig& cfg, const ToyModel& m, std::span<const SynthSample> data) {
  std::vector<SamplePrediction> predictions;
  predictions.reserve(data.size());
  for (const SynthSample& s : data) {
    predictions.push_back(predict(cfg, m, s));
  }
  return score_predictions(predictions, data);
}

}  // namespace eevg
