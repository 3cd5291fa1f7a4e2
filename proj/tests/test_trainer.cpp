#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "flood/config.hpp"
#include "flood/errors.hpp"
#include "flood/synth.hpp"
#include "flood/trainer.hpp"
#include "support.hpp"

using namespace flood;
using flood::testing::TempDir;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.model.input_size = 16;
  cfg.model.widths = {4, 4, 8, 8};
  cfg.max_epochs = 3;
  cfg.batch_size = 3;
  return cfg;
}

DatasetManifest small_dataset(const TempDir& dir, std::uint32_t tiles = 10) {
  SynthSpec spec;
  spec.tile_size = 16;
  spec.tile_count = tiles;
  spec.seed = 5;
  return synth_generate(spec, dir / "data");
}

}  // namespace

TEST(MetricsCsv, FormatAndParse) {
  const EpochRow row{3, 0.5, 0.25, 0.75, 0.8571428, 1e-4f};
  EXPECT_EQ(format_metrics_row(row), "3,0.500000,0.250000,0.750000,0.857143,0.000100");
}

TEST(Train, ZeroEpochsWritesInitialRowAndCheckpoint) {
  TempDir dir("train");
  const DatasetManifest m = small_dataset(dir);
  TrainConfig cfg = small_config();
  cfg.max_epochs = 0;
  const TrainResult r = train(m, cfg, dir / "run");
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.rows[0].epoch, 0u);
  const std::string csv = slurp(dir / "run" / "metrics.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kMetricsHeader);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
  const Checkpoint c = load_checkpoint(dir / "run" / "last.bfck");
  EXPECT_EQ(c.step, 0u);
  EXPECT_NO_THROW(restore_params(c, cfg.model));
}

TEST(Train, IdenticalRunsAreByteIdentical) {
  TempDir dir("train");
  const DatasetManifest m = small_dataset(dir);
  const TrainConfig cfg = small_config();
  train(m, cfg, dir / "a");
  train(m, cfg, dir / "b");
  for (const char* f : {"metrics.csv", "last.bfck", "best.bfck"}) {
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
  }
}

TEST(Train, ResumeMatchesUninterruptedRun) {
  TempDir dir("train");
  const DatasetManifest m = small_dataset(dir);
  TrainConfig cfg = small_config();
  cfg.max_epochs = 4;
  const TrainResult full = train(m, cfg, dir / "full");

  TrainConfig first = cfg;
  first.max_epochs = 2;
  train(m, first, dir / "split");
  TrainOptions opts;
  opts.resume = dir / "split" / "last.bfck";
  const TrainResult resumed = train(m, cfg, dir / "split", opts);

  ASSERT_EQ(resumed.rows.size(), full.rows.size());
  for (std::size_t i = 0; i < full.rows.size(); ++i) {
    EXPECT_NEAR(resumed.rows[i].train_loss, full.rows[i].train_loss, 1e-6);
    EXPECT_NEAR(resumed.rows[i].val_loss, full.rows[i].val_loss, 1e-6);
    EXPECT_NEAR(resumed.rows[i].val_iou, full.rows[i].val_iou, 1e-6);
    EXPECT_NEAR(resumed.rows[i].val_f1, full.rows[i].val_f1, 1e-6);
    EXPECT_EQ(resumed.rows[i].lr, full.rows[i].lr);
  }
  EXPECT_EQ(resumed.last.step, full.last.step);
  EXPECT_EQ(slurp(dir / "split" / "metrics.csv"), slurp(dir / "full" / "metrics.csv"));
}

TEST(Train, ThreadedRunAgreesWithSingleThreaded) {
  TempDir dir("train");
  const DatasetManifest m = small_dataset(dir);
  TrainConfig cfg = small_config();
  cfg.max_epochs = 2;
  const TrainResult one = train(m, cfg, dir / "one");
  cfg.threads = 4;
  const TrainResult four = train(m, cfg, dir / "four");
  for (std::size_t i = 0; i < one.rows.size(); ++i) {
    EXPECT_NEAR(four.rows[i].val_loss, one.rows[i].val_loss, 1e-5 * std::abs(one.rows[i].val_loss));
    EXPECT_NEAR(four.rows[i].val_iou, one.rows[i].val_iou, 1e-5);
  }
}

TEST(Train, BestCheckpointReproducesLoggedRow) {
  TempDir dir("train");
  const DatasetManifest m = small_dataset(dir);
  const TrainConfig cfg = small_config();
  const TrainResult r = train(m, cfg, dir / "run");
  const Checkpoint best = load_checkpoint(dir / "run" / "best.bfck");
  const EpochRow* row = nullptr;
  for (const auto& x : r.rows) {
    if (static_cast<float>(x.val_loss) == best.scheduler.best) row = &x;
  }
  ASSERT_NE(row, nullptr);
  ModelParams params = restore_params(best, cfg.model);
  std::vector<Sample> val;
  for (const auto& e : m.entries) {
    if (e.split == Split::val) val.push_back(prepare_sample(load_tile(e), cfg.clip));
  }
  const EvalResult ev = evaluate(params, val, cfg.loss, cfg.threshold);
  EXPECT_NEAR(ev.loss, row->val_loss, 1e-6);
  EXPECT_NEAR(ev.iou(), row->val_iou, 1e-6);
  EXPECT_NEAR(ev.f1(), row->val_f1, 1e-6);
}

TEST(Train, LearningRateStaysInRange) {
  TempDir dir("train");
  const DatasetManifest m = small_dataset(dir);
  TrainConfig cfg = small_config();
  cfg.schedule.patience = 1;
  cfg.max_epochs = 6;
  const TrainResult r = train(m, cfg, dir / "run");
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    EXPECT_GE(r.rows[i].lr, 1e-5f);
    EXPECT_LE(r.rows[i].lr, 1e-3f);
    if (i > 0) {
      EXPECT_LE(r.rows[i].lr, r.rows[i - 1].lr);
    }
  }
}

TEST(Train, RepeatedBatchLossDecreases) {
  std::vector<Sample> batch;
  for (std::uint32_t i = 0; i < 4; ++i) batch.push_back(prepare_sample(synth_tile(SynthSpec{}, i), ClipSpec{}));
  std::vector<const Raster*> pre, post, target, mask;
  for (const auto& s : batch) {
    pre.push_back(&s.pre);
    post.push_back(&s.post);
    target.push_back(&s.target);
    mask.push_back(&s.mask);
  }
  ModelParams params = ModelParams::init(ModelConfig{}, 7);
  Adam adam(params);
  std::vector<float> losses;
  for (int step = 0; step < 20; ++step) {
    params.zero_grad();
    Tape tape;
    LossValue lv;
    {
      TapeScope scope(tape);
      lv = combined_loss(model_forward(stack_rasters(pre), stack_rasters(post), params, ops::NormMode::train),
                         stack_rasters(target), stack_rasters(mask), LossConfig{});
    }
    tape.backward(lv.value);
    adam.step(params, 1e-3f);
    losses.push_back(lv.value.item());
  }
  EXPECT_LT(losses.back(), losses.front());
  const double head = (losses[0] + losses[1] + losses[2] + losses[3] + losses[4]) / 5.0;
  const double tail = (losses[15] + losses[16] + losses[17] + losses[18] + losses[19]) / 5.0;
  EXPECT_LT(tail, head);
}

TEST(Train, InputErrors) {
  TempDir dir("train");
  DatasetManifest m = small_dataset(dir, 4);
  TrainConfig cfg = small_config();
  cfg.model.input_size = 32;
  EXPECT_THROW(train(m, cfg, dir / "run"), DimensionError);
  cfg = small_config();
  for (auto& e : m.entries) e.split = Split::train;
  EXPECT_THROW(train(m, cfg, dir / "run"), UsageError);
}

TEST(RunConfig, ParsesKeysAndResolvesPaths) {
  const RunConfig rc = parse_run_config(
      "# comment\nmanifest = data/manifest.txt\nout_dir=/abs/run\nalpha = 0.25\nwidths = 8,8,16,16\n"
      "clip_vv = -20,-1\nmax_epochs = 7\naugment = false\nlr_floor = 1e-4\n",
      "/base");
  EXPECT_EQ(rc.manifest, std::filesystem::path("/base/data/manifest.txt"));
  EXPECT_EQ(rc.out_dir, std::filesystem::path("/abs/run"));
  EXPECT_FLOAT_EQ(rc.train.loss.alpha, 0.25f);
  EXPECT_EQ(rc.train.model.widths, (std::array<std::uint32_t, 4>{8, 8, 16, 16}));
  EXPECT_EQ(rc.train.clip.vv_lo, -20.0f);
  EXPECT_EQ(rc.train.max_epochs, 7u);
  EXPECT_FALSE(rc.train.augment);
  EXPECT_DOUBLE_EQ(rc.train.schedule.lr_floor, 1e-4);
}

TEST(RunConfig, Errors) {
  auto message = [](const std::string& text) {
    try {
      parse_run_config(text);
    } catch (const ValidationError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(message("out_dir = x\n").find("'manifest'"), std::string::npos);
  EXPECT_NE(message("manifest = m\nout_dir = x\nalpha = 1.5\n").find("alpha"), std::string::npos);
  EXPECT_NE(message("manifest = m\nout_dir = x\nalpha = 1.5\n").find("out of range"), std::string::npos);
  EXPECT_NE(message("manifest = m\nout_dir = x\nlearning_rate = 1\n").find("unknown key"), std::string::npos);
  EXPECT_NE(message("manifest = m\nmanifest = n\nout_dir = x\n").find("duplicate"), std::string::npos);
  EXPECT_NE(message("manifest = m\nout_dir = x\nwidths = 8,8\n").find("widths"), std::string::npos);
  EXPECT_NE(message("manifest = m\nout_dir = x\nbatch_size = 0\n").find("batch_size"), std::string::npos);
  EXPECT_NE(message("manifest = m\nout_dir = x\ninput_size = 40\n").find("16"), std::string::npos);
}
