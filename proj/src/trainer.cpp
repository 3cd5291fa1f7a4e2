#include "flood/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "flood/errors.hpp"
#include "flood/parallel.hpp"
#include "flood/rng.hpp"

namespace flood {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kAugmentTag = 0x4155474dULL;

std::vector<Sample> prepare_split(const DatasetManifest& manifest, Split split, const TrainConfig& cfg,
                                  std::vector<std::size_t>& manifest_index) {
  std::vector<Sample> samples;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    if (manifest.entries[i].split != split) continue;
    Sample s = prepare_sample(load_tile(manifest.entries[i]), cfg.clip);
    if (s.pre.height != cfg.model.input_size || s.pre.width != cfg.model.input_size) {
      throw DimensionError("tile " + s.id + " is " + std::to_string(s.pre.height) + "x" + std::to_string(s.pre.width) +
                           " but the model input size is " + std::to_string(cfg.model.input_size));
    }
    samples.push_back(std::move(s));
    manifest_index.push_back(i);
  }
  if (samples.empty()) throw UsageError(std::string("split '") + to_string(split) + "' is empty");
  return samples;
}

void write_metrics(const fs::path& path, const std::vector<EpochRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << kMetricsHeader << '\n';
  for (const auto& r : rows) out << format_metrics_row(r) << '\n';
  if (!out) throw Error("failed writing " + path.string());
}

}  // namespace

void TrainConfig::validate() const {
  schedule.validate();
  if (batch_size == 0) throw ValidationError("batch_size must be >= 1");
  if (threads < 1) throw ValidationError("threads must be >= 1");
  if (!(threshold > 0.0f && threshold < 1.0f)) throw ValidationError("threshold must lie in (0, 1)");
  loss.validate();
  model.validate();
  clip.validate();
}

std::string format_metrics_row(const EpochRow& row) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%u,%.6f,%.6f,%.6f,%.6f,%.6f", row.epoch, row.train_loss, row.val_loss, row.val_iou,
                row.val_f1, static_cast<double>(row.lr));
  return buf;
}

std::vector<EpochRow> read_metrics_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != kMetricsHeader) throw FormatError("unexpected metrics header in " + path.string(), 0);
  std::vector<EpochRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    EpochRow r;
    if (std::sscanf(line.c_str(), "%u,%lf,%lf,%lf,%lf,%f", &r.epoch, &r.train_loss, &r.val_loss, &r.val_iou, &r.val_f1,
                    &r.lr) != 6) {
      throw FormatError("malformed metrics row '" + line + "'", 0);
    }
    rows.push_back(r);
  }
  return rows;
}

Tensor stack_rasters(std::span<const Raster* const> rasters) {
  if (rasters.empty()) throw UsageError("cannot stack an empty batch");
  const Raster& first = *rasters.front();
  std::vector<float> values;
  values.reserve(rasters.size() * first.size());
  for (const Raster* r : rasters) {
    if (r->channels != first.channels || !r->same_grid(first)) throw DimensionError("batch rasters differ in shape");
    values.insert(values.end(), r->data.begin(), r->data.end());
  }
  return Tensor::from({rasters.size(), first.channels, first.height, first.width}, std::move(values));
}

EvalResult evaluate(ModelParams& params, std::span<const Sample> samples, const LossConfig& loss, float threshold) {
  NoGradScope no_grad;
  EvalResult result;
  double loss_sum = 0.0;
  std::size_t loss_tiles = 0;
  for (const Sample& s : samples) {
    const Raster* pre[] = {&s.pre};
    const Raster* post[] = {&s.post};
    const Raster* target[] = {&s.target};
    const Raster* mask[] = {&s.mask};
    const Tensor probs = model_forward(stack_rasters(pre), stack_rasters(post), params, ops::NormMode::eval);
    const LossValue lv = combined_loss(probs, stack_rasters(target), stack_rasters(mask), loss);
    if (!lv.empty_mask) {
      loss_sum += lv.value.item();
      ++loss_tiles;
    }
    result.counts += confusion(binarize(probs.data(), threshold), s.target.data, s.mask.data);
    ++result.tiles;
  }
  result.loss = loss_tiles == 0 ? 0.0 : loss_sum / static_cast<double>(loss_tiles);
  return result;
}

Raster predict(ModelParams& params, const Raster& pre, const Raster& post) {
  if (pre.channels != 3 || post.channels != 3) throw DimensionError("predict expects 3-band inputs");
  if (!pre.same_grid(post)) {
    throw DimensionError("pre is " + std::to_string(pre.height) + "x" + std::to_string(pre.width) + " but post is " +
                         std::to_string(post.height) + "x" + std::to_string(post.width));
  }
  NoGradScope no_grad;
  const Raster* a[] = {&pre};
  const Raster* b[] = {&post};
  const Tensor probs = model_forward(stack_rasters(a), stack_rasters(b), params, ops::NormMode::eval);
  Raster out(RasterKind::normalized, 1, pre.height, pre.width);
  std::copy(probs.data().begin(), probs.data().end(), out.data.begin());
  return out;
}

TrainResult train(const DatasetManifest& manifest, const TrainConfig& cfg, const fs::path& out_dir,
                  const TrainOptions& options) {
  cfg.validate();
  set_num_threads(cfg.threads);
  fs::create_directories(out_dir);
  auto log = [&](const std::string& msg) {
    if (options.log != nullptr) *options.log << msg << std::endl;
  };

  std::vector<std::size_t> train_index;
  std::vector<std::size_t> val_index;
  const std::vector<Sample> train_set = prepare_split(manifest, Split::train, cfg, train_index);
  const std::vector<Sample> val_set = prepare_split(manifest, Split::val, cfg, val_index);
  // manifest index -> position in train_set
  std::vector<std::size_t> train_slot(manifest.entries.size(), 0);
  for (std::size_t k = 0; k < train_index.size(); ++k) train_slot[train_index[k]] = k;
  const std::size_t batches_per_epoch = (train_set.size() + cfg.batch_size - 1) / cfg.batch_size;

  std::uint64_t seed = cfg.seed;
  ModelParams params;
  Adam adam;
  SchedulerState sched = SchedulerState::initial(cfg.schedule);
  std::vector<EpochRow> rows;
  std::uint32_t first_epoch = 1;
  const fs::path csv_path = out_dir / "metrics.csv";

  if (options.resume) {
    const Checkpoint ckpt = load_checkpoint(*options.resume);
    params = restore_params(ckpt, cfg.model);
    adam = restore_optimizer(ckpt, params);
    sched = ckpt.scheduler;
    seed = ckpt.seed;
    if (ckpt.step % batches_per_epoch != 0) {
      throw ValidationError("checkpoint step " + std::to_string(ckpt.step) + " is not on an epoch boundary");
    }
    const auto done = static_cast<std::uint32_t>(ckpt.step / batches_per_epoch);
    first_epoch = done + 1;
    if (fs::exists(csv_path)) {
      for (const EpochRow& r : read_metrics_csv(csv_path)) {
        if (r.epoch <= done) rows.push_back(r);
      }
    }
    log("resuming after epoch " + std::to_string(done) + " (step " + std::to_string(ckpt.step) + ")");
  } else {
    params = ModelParams::init(cfg.model, seed);
    adam = Adam(params);
    const EvalResult train_eval = evaluate(params, train_set, cfg.loss, cfg.threshold);
    const EvalResult val_eval = evaluate(params, val_set, cfg.loss, cfg.threshold);
    rows.push_back(EpochRow{0, train_eval.loss, val_eval.loss, val_eval.iou(), val_eval.f1(), sched.lr});
    const Checkpoint ckpt = make_checkpoint(params, adam, sched, seed);
    save_checkpoint(ckpt, out_dir / "best.bfck");
    save_checkpoint(ckpt, out_dir / "last.bfck");
  }
  write_metrics(csv_path, rows);
  {
    std::ostringstream os;
    os << "alpha=" << cfg.loss.alpha << " gamma=" << cfg.loss.gamma << " smooth=" << cfg.loss.smooth
       << " train_tiles=" << train_set.size() << " val_tiles=" << val_set.size()
       << " params=" << params.trainable_count();
    log(os.str());
  }
  if (!rows.empty()) log(format_metrics_row(rows.back()));

  Tape tape;
  for (std::uint32_t epoch = first_epoch; epoch <= cfg.max_epochs; ++epoch) {
    const float lr = sched.lr;
    const std::vector<std::size_t> order = split_order(manifest, Split::train, seed, epoch);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches_per_epoch; ++b) {
      const std::size_t begin = b * cfg.batch_size;
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      std::vector<Sample> batch;
      for (std::size_t k = begin; k < end; ++k) {
        Sample s = train_set[train_slot[order[k]]];
        if (cfg.augment) {
          std::mt19937_64 rng(derive_seed(seed, epoch, kAugmentTag + k));
          flip_augment(s, draw_flip(rng));
        }
        batch.push_back(std::move(s));
      }
      std::vector<const Raster*> pre, post, target, mask;
      for (const Sample& s : batch) {
        pre.push_back(&s.pre);
        post.push_back(&s.post);
        target.push_back(&s.target);
        mask.push_back(&s.mask);
      }

      params.zero_grad();
      tape.clear();
      LossValue lv;
      {
        TapeScope scope(tape);
        const Tensor probs = model_forward(stack_rasters(pre), stack_rasters(post), params, ops::NormMode::train);
        lv = combined_loss(probs, stack_rasters(target), stack_rasters(mask), cfg.loss);
      }
      const float value = lv.value.item();
      if (!std::isfinite(value)) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(b));
      }
      if (!lv.empty_mask) tape.backward(lv.value);
      tape.clear();
      adam.step(params, lr);
      loss_sum += value;
    }

    const EvalResult val = evaluate(params, val_set, cfg.loss, cfg.threshold);
    if (!std::isfinite(val.loss)) throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
    const SchedulerState next = plateau_update(sched, val.loss, cfg.schedule);
    const bool improved = next.since_improvement == 0 && next.best != sched.best;
    sched = next;
    rows.push_back(EpochRow{epoch, loss_sum / static_cast<double>(batches_per_epoch), val.loss, val.iou(), val.f1(), lr});
    write_metrics(csv_path, rows);
    log(format_metrics_row(rows.back()) + (improved ? " *" : ""));

    const Checkpoint ckpt = make_checkpoint(params, adam, sched, seed);
    if (improved) save_checkpoint(ckpt, out_dir / "best.bfck");
    save_checkpoint(ckpt, out_dir / "last.bfck");
  }

  return TrainResult{make_checkpoint(params, adam, sched, seed), rows};
}

}  // namespace flood
