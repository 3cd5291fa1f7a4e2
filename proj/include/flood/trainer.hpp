#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flood/checkpoint.hpp"
#include "flood/dataset.hpp"
#include "flood/loss.hpp"
#include "flood/metrics.hpp"
#include "flood/model.hpp"
#include "flood/optim.hpp"
#include "flood/preprocess.hpp"

namespace flood {

struct TrainConfig {
  PlateauConfig schedule;
  std::uint32_t max_epochs = 50;
  std::uint32_t batch_size = 4;
  std::uint64_t seed = 7;
  LossConfig loss;
  ModelConfig model;
  ClipSpec clip;
  float threshold = kDefaultThreshold;
  int threads = 1;
  bool augment = true;

  void validate() const;
};

struct EpochRow {
  std::uint32_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_iou = 0.0;
  double val_f1 = 0.0;
  float lr = 0.0f;
};

inline constexpr const char* kMetricsHeader = "epoch,train_loss,val_loss,val_iou,val_f1,lr";
std::string format_metrics_row(const EpochRow& row);
std::vector<EpochRow> read_metrics_csv(const std::filesystem::path& path);

struct EvalResult {
  double loss = 0.0;  // mean per-tile combined loss over tiles with valid pixels
  ConfusionCounts counts;
  std::size_t tiles = 0;

  double iou() const { return flood::iou(counts); }
  double f1() const { return flood::f1(counts); }
};

/// Stacks one raster per sample into an N x C x H x W tensor.
Tensor stack_rasters(std::span<const Raster* const> rasters);

/// Tile-by-tile evaluation in eval mode; confusion counts are summed over
/// tiles before IoU/F1 are taken.
EvalResult evaluate(ModelParams& params, std::span<const Sample> samples, const LossConfig& loss, float threshold);

/// Water probabilities (1 x H x W raster) for one pre/post pair of 3-band inputs.
Raster predict(ModelParams& params, const Raster& pre, const Raster& post);

struct TrainOptions {
  std::optional<std::filesystem::path> resume;  // a last.bfck to continue from
  std::ostream* log = nullptr;
};

struct TrainResult {
  Checkpoint last;
  std::vector<EpochRow> rows;
};

/// Runs the training loop, writing metrics.csv, best.bfck and last.bfck to
/// `out_dir`. Row 0 evaluates the initial weights.
TrainResult train(const DatasetManifest& manifest, const TrainConfig& cfg, const std::filesystem::path& out_dir,
                  const TrainOptions& options = {});

}  // namespace flood
