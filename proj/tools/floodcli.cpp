#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "flood/checkpoint.hpp"
#include "flood/config.hpp"
#include "flood/dataset.hpp"
#include "flood/errors.hpp"
#include "flood/preprocess.hpp"
#include "flood/synth.hpp"
#include "flood/trainer.hpp"

namespace fs = std::filesystem;
using namespace flood;

namespace {

ClipSpec parse_clip(const std::string& vv, const std::string& vh) {
  ClipSpec clip;
  std::tie(clip.vv_lo, clip.vv_hi) = parse_range(vv, "--clip-vv");
  std::tie(clip.vh_lo, clip.vh_hi) = parse_range(vh, "--clip-vh");
  clip.validate();
  return clip;
}

bool non_empty_dir(const fs::path& p) { return fs::is_directory(p) && !fs::is_empty(p); }

ModelParams load_model(const fs::path& path, std::uint32_t input_size) {
  const Checkpoint ckpt = load_checkpoint(path);
  ModelConfig cfg = infer_config(model_shapes(ckpt));
  cfg.input_size = input_size;
  return restore_params(ckpt, cfg);
}

// ---- synth -----------------------------------------------------------------

struct SynthArgs {
  std::string out;
  std::uint32_t tiles = 200;
  std::uint32_t size = 64;
  std::uint64_t seed = 7;
  double frac_lo = SynthSpec{}.water_frac_lo;
  double frac_hi = SynthSpec{}.water_frac_hi;
  bool force = false;
};

int run_synth(const SynthArgs& a) {
  if (a.tiles == 0) throw UsageError("--tiles must be at least 1");
  SynthSpec spec;
  spec.tile_count = a.tiles;
  spec.tile_size = a.size;
  spec.seed = a.seed;
  spec.water_frac_lo = a.frac_lo;
  spec.water_frac_hi = a.frac_hi;
  spec.validate();
  if (non_empty_dir(a.out) && !a.force) {
    throw UsageError("output directory " + a.out + " is not empty (use --force to overwrite)");
  }
  const DatasetManifest m = synth_generate(spec, a.out);
  std::cout << "wrote " << m.entries.size() << " tiles (" << m.count(Split::train) << " train, "
            << m.count(Split::val) << " val) to " << a.out << "\n";
  return 0;
}

// ---- preprocess ------------------------------------------------------------

struct PreprocessArgs {
  std::string in;
  std::string out;
  std::string clip_vv = "-23,0";
  std::string clip_vh = "-28,-5";
  std::string median_stack;
};

Raster median_pre(const fs::path& stack_root, const std::string& id) {
  const fs::path dir = stack_root / id;
  std::vector<fs::path> files;
  if (fs::is_directory(dir)) {
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.is_regular_file() && e.path().extension() == ".bras") files.push_back(e.path());
    }
  }
  if (files.empty()) throw UsageError("median stack for " + id + " is empty: " + dir.string());
  std::sort(files.begin(), files.end());
  std::vector<Raster> stack;
  for (const auto& f : files) {
    Raster r = read_bras(f);
    if (r.kind != RasterKind::backscatter_db) throw ValidationError(f.string() + " is not a backscatter-dB raster");
    stack.push_back(std::move(r));
  }
  std::cout << id << ": median of " << stack.size() << " pre-event images\n";
  return temporal_median(stack);
}

int run_preprocess(const PreprocessArgs& a) {
  const ClipSpec clip = parse_clip(a.clip_vv, a.clip_vh);
  const DatasetManifest in = load_manifest(fs::path(a.in) / "manifest.txt");
  const fs::path out_dir(a.out);
  fs::create_directories(out_dir / "tiles");
  DatasetManifest out;
  out.seed = in.seed;
  for (const ManifestEntry& e : in.entries) {
    TilePair tile = load_tile(e);
    if (!a.median_stack.empty()) {
      tile.pre = median_pre(a.median_stack, e.id);
      tile.validate();
    }
    for (const Raster* r : {&tile.pre, &tile.post}) {
      if (r->kind != RasterKind::backscatter_db) {
        throw ValidationError("tile " + e.id + " is already " + to_string(r->kind) + "; preprocess expects backscatter-dB");
      }
    }
    ManifestEntry o{e.id, e.split, out_dir / "tiles" / (e.id + "_pre.bras"), out_dir / "tiles" / (e.id + "_post.bras"),
                    out_dir / "tiles" / (e.id + "_label.bras")};
    write_bras(condition_tile(tile.pre, clip), o.pre);
    write_bras(condition_tile(tile.post, clip), o.post);
    write_bras(tile.label, o.label);
    out.entries.push_back(std::move(o));
  }
  save_manifest(out, out_dir / "manifest.txt");
  std::cout << "normalized " << out.entries.size() << " tiles into " << a.out << "\n";
  return 0;
}

// ---- train -----------------------------------------------------------------

int run_train(const std::string& config_path) {
  const RunConfig rc = load_run_config(config_path);
  const DatasetManifest manifest = load_manifest(rc.manifest);
  TrainOptions opts;
  opts.resume = rc.resume;
  opts.log = &std::cout;
  const TrainResult result = train(manifest, rc.train, rc.out_dir, opts);
  std::cout << "finished at step " << result.last.step << "; outputs in " << rc.out_dir.string() << "\n";
  return 0;
}

// ---- eval ------------------------------------------------------------------

struct EvalArgs {
  std::string model;
  std::string manifest;
  std::string split = "val";
  std::string config;
  std::string out;
};

int run_eval(const EvalArgs& a) {
  TrainConfig cfg;
  if (!a.config.empty()) cfg = load_run_config(a.config).train;
  const Split split = parse_split(a.split);
  const DatasetManifest manifest = load_manifest(a.manifest);
  if (manifest.count(split) == 0) throw UsageError(std::string("split '") + to_string(split) + "' is empty");
  std::vector<Sample> samples;
  for (const ManifestEntry& e : manifest.entries) {
    if (e.split == split) samples.push_back(prepare_sample(load_tile(e), cfg.clip));
  }
  ModelParams params = load_model(a.model, samples.front().pre.height);
  const EvalResult r = evaluate(params, samples, cfg.loss, cfg.threshold);
  std::printf("split=%s tiles=%zu loss=%.6f iou=%.6f f1=%.6f\n", to_string(split), r.tiles, r.loss, r.iou(), r.f1());
  if (!a.out.empty()) {
    std::ofstream csv(a.out, std::ios::trunc);
    if (!csv) throw Error("cannot open " + a.out + " for writing");
    char row[256];
    std::snprintf(row, sizeof row, "%s,%zu,%.6f,%.6f,%.6f,%llu,%llu,%llu,%llu", to_string(split), r.tiles, r.loss,
                  r.iou(), r.f1(), static_cast<unsigned long long>(r.counts.tp),
                  static_cast<unsigned long long>(r.counts.fp), static_cast<unsigned long long>(r.counts.fn),
                  static_cast<unsigned long long>(r.counts.tn));
    csv << "split,tiles,loss,iou,f1,tp,fp,fn,tn\n" << row << "\n";
  }
  return 0;
}

// ---- predict ---------------------------------------------------------------

struct PredictArgs {
  std::string model;
  std::string pre;
  std::string post;
  std::string out;
  bool prob = false;
  float threshold = kDefaultThreshold;
};

Raster load_normalized(const std::string& path) {
  Raster r = read_bras(path);
  if (r.kind != RasterKind::normalized || r.channels != 2) {
    throw ValidationError(path + " must be a normalized 2-band raster, got " + std::string(to_string(r.kind)) + " with " +
                          std::to_string(r.channels) + " band(s)");
  }
  return assemble_input(r.extract_band(0), r.extract_band(1));
}

int run_predict(const PredictArgs& a) {
  const Raster pre = load_normalized(a.pre);
  const Raster post = load_normalized(a.post);
  if (!pre.same_grid(post)) {
    throw DimensionError("pre is " + std::to_string(pre.height) + "x" + std::to_string(pre.width) + " but post is " +
                         std::to_string(post.height) + "x" + std::to_string(post.width));
  }
  if (pre.height % 16 != 0 || pre.width % 16 != 0) {
    throw DimensionError("tile size " + std::to_string(pre.height) + "x" + std::to_string(pre.width) +
                         " is not divisible by 16");
  }
  ModelParams params = load_model(a.model, pre.height);
  Raster probs = predict(params, pre, post);
  if (!a.prob) {
    probs.kind = RasterKind::label;
    for (float& v : probs.data) v = v >= a.threshold ? 1.0f : 0.0f;
  }
  write_bras(probs, a.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bi-temporal SAR flood segmentation"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic bi-temporal dataset");
  synth_cmd->add_option("--out", synth.out, "output directory")->required();
  synth_cmd->add_option("--tiles", synth.tiles, "number of tiles");
  synth_cmd->add_option("--size", synth.size, "tile side, a multiple of 16");
  synth_cmd->add_option("--seed", synth.seed, "generator seed");
  synth_cmd->add_option("--water-frac-lo", synth.frac_lo, "minimum water fraction per tile");
  synth_cmd->add_option("--water-frac-hi", synth.frac_hi, "maximum water fraction per tile");
  synth_cmd->add_flag("--force", synth.force, "write into a non-empty directory");

  PreprocessArgs prep;
  auto* prep_cmd = app.add_subcommand("preprocess", "clip and normalize backscatter tiles");
  prep_cmd->add_option("--in", prep.in, "dataset directory holding manifest.txt")->required();
  prep_cmd->add_option("--out", prep.out, "output directory")->required();
  prep_cmd->add_option("--clip-vv", prep.clip_vv, "VV clip range in dB, lo,hi")->capture_default_str();
  prep_cmd->add_option("--clip-vh", prep.clip_vh, "VH clip range in dB, lo,hi")->capture_default_str();
  prep_cmd->add_option("--median-stack", prep.median_stack, "directory of <id>/*.bras pre-event stacks");

  std::string train_config;
  auto* train_cmd = app.add_subcommand("train", "train from a run config");
  train_cmd->add_option("--config", train_config, "key=value run config")->required();

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a manifest split");
  eval_cmd->add_option("--model", ev.model, "checkpoint file")->required();
  eval_cmd->add_option("--manifest", ev.manifest, "manifest file")->required();
  eval_cmd->add_option("--split", ev.split, "train or val")->capture_default_str();
  eval_cmd->add_option("--config", ev.config, "run config for clip, loss and threshold settings");
  eval_cmd->add_option("--out", ev.out, "CSV file for the metrics");

  PredictArgs pr;
  auto* predict_cmd = app.add_subcommand("predict", "predict a water map for one tile pair");
  predict_cmd->add_option("--model", pr.model, "checkpoint file")->required();
  predict_cmd->add_option("--pre", pr.pre, "normalized pre-event raster")->required();
  predict_cmd->add_option("--post", pr.post, "normalized post-event raster")->required();
  predict_cmd->add_option("--out", pr.out, "output raster")->required();
  predict_cmd->add_flag("--prob", pr.prob, "write probabilities instead of a {0,1} map");
  predict_cmd->add_option("--threshold", pr.threshold, "binarization threshold")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*synth_cmd) return run_synth(synth);
    if (*prep_cmd) return run_preprocess(prep);
    if (*train_cmd) return run_train(train_config);
    if (*eval_cmd) return run_eval(ev);
    if (*predict_cmd) return run_predict(pr);
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
