// Acceptance report: one PASS/FAIL line per criterion, tolerances pinned.
// Exit status is non-zero when any attainable criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "flood/loss.hpp"
#include "flood/metrics.hpp"
#include "flood/model.hpp"
#include "flood/optim.hpp"
#include "flood/synth.hpp"
#include "flood/trainer.hpp"
#include "support.hpp"

using namespace flood;
using flood::testing::check_gradients;
using flood::testing::random_tensor;
using flood::testing::separated_tensor;
using flood::testing::TempDir;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(bool pass, const std::string& name, const std::string& detail, bool counts = true) {
  std::printf("%s %s: %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass && counts) ++g_failures;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Tensor binary(const Shape& shape, std::mt19937_64& rng, double p_one) {
  std::bernoulli_distribution coin(p_one);
  std::vector<float> v(shape_numel(shape));
  for (float& x : v) x = coin(rng) ? 1.0f : 0.0f;
  return Tensor::from(shape, std::move(v));
}

ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.input_size = 16;
  cfg.widths = {2, 2, 2, 2};
  return cfg;
}

void table1() {
  report(false, "table1_iou_f1",
         "IoU 0.70 / F1 0.83 needs Sen1Floods11, a pretrained ResNet50 and GPU training; not reproducible here, "
         "substituted by the criteria below (not counted in exit status)",
         false);
}

void gradient_suite() {
  const auto t0 = Clock::now();
  std::size_t cases = 0;
  std::size_t bad = 0;
  double worst = 0.0;
  auto record = [&](double err) {
    ++cases;
    worst = std::max(worst, err);
    if (!(err < 1e-3)) ++bad;
  };

  for (std::uint64_t k = 0; k < 10; ++k) {
    std::mt19937_64 rng(1000 + k);
    const std::size_t c = 1 + k % 3;
    const int pad = static_cast<int>(k % 2);
    Tensor x = random_tensor({2, c, 6, 6}, rng, -1, 1, true);
    Tensor w = random_tensor({3, c, 3, 3}, rng, -0.5f, 0.5f, true);
    Tensor b = random_tensor({3}, rng, -0.5f, 0.5f, true);
    record(check_gradients([&](const std::vector<Tensor>& in) { return ops::conv2d(in[0], in[1], in[2], 1, pad); },
                           {x, w, b}, k)
               .rel_err);

    Tensor s = separated_tensor({2, c, 4, 4}, rng, 0.05f, true);
    record(check_gradients([](const std::vector<Tensor>& in) { return ops::maxpool2(in[0]); }, {s}, k).rel_err);
    record(check_gradients([](const std::vector<Tensor>& in) { return ops::global_avg_pool(in[0]); }, {x}, k).rel_err);
    record(check_gradients([](const std::vector<Tensor>& in) { return ops::upsample_nearest2x(in[0]); }, {x}, k)
               .rel_err);

    Tensor g = random_tensor({c}, rng, 0.5f, 1.5f, true);
    Tensor be = random_tensor({c}, rng, -0.5f, 0.5f, true);
    Tensor rm = Tensor::zeros({c});
    Tensor rv = Tensor::full({c}, 1.0f);
    record(check_gradients(
               [&](const std::vector<Tensor>& in) {
                 return ops::batchnorm(in[0], in[1], in[2], rm, rv, ops::NormMode::train);
               },
               {x, g, be}, k)
               .rel_err);

    Tensor a = separated_tensor({2, c, 3, 3}, rng, 0.1f, true);
    record(check_gradients([](const std::vector<Tensor>& in) { return ops::relu(in[0]); }, {a}, k).rel_err);
    record(check_gradients([](const std::vector<Tensor>& in) { return ops::sigmoid(in[0]); }, {a}, k).rel_err);

    const Tensor p = random_tensor({2, 1, 4, 4}, rng, 0.05f, 0.95f, true);
    const Tensor t = binary({2, 1, 4, 4}, rng, 0.4);
    const Tensor m = binary({2, 1, 4, 4}, rng, 0.8);
    LossConfig lc;
    lc.alpha = std::uniform_real_distribution<float>(0.0f, 1.0f)(rng);
    record(check_gradients([&](const std::vector<Tensor>& in) { return dice_loss(in[0], t, m, lc.smooth).value; },
                           {p}, k)
               .rel_err);
    record(check_gradients([&](const std::vector<Tensor>& in) { return focal_loss(in[0], t, m, lc.gamma).value; },
                           {p}, k)
               .rel_err);
    record(check_gradients([&](const std::vector<Tensor>& in) { return combined_loss(in[0], t, m, lc).value; }, {p},
                           k)
               .rel_err);
  }

  double model_worst = 0.0;
  std::size_t model_bad = 0;
  std::size_t kinks = 0;
  std::size_t coords = 0;
  for (std::uint64_t k = 0; k < 4; ++k) {
    ModelParams params = ModelParams::init(tiny_model(), 50 + k);
    std::mt19937_64 rng(60 + k);
    const Tensor pre = random_tensor({2, 3, 16, 16}, rng, 0, 1);
    const Tensor post = random_tensor({2, 3, 16, 16}, rng, 0, 1);
    std::vector<Tensor> inputs;
    for (auto& e : params.entries()) {
      if (!e.trainable) continue;
      e.tensor.set_requires_grad(true);
      inputs.push_back(e.tensor);
    }
    const auto r = check_gradients(
        [&](const std::vector<Tensor>&) { return model_forward(pre, post, params, ops::NormMode::eval); }, inputs,
        70 + k, 1e-3, true);
    ++cases;
    kinks += r.kinks;
    coords += r.kinks + r.checked;
    model_worst = std::max(model_worst, r.rel_err);
    if (!(r.rel_err < 1e-2)) ++model_bad;
  }

  const double secs = seconds_since(t0);
  report(bad == 0 && model_bad == 0 && cases >= 100 && secs < 120.0, "gradient_suite",
         fmt("%zu cases, op max rel err %.2e (< 1e-3), full model max %.2e (< 1e-2, %zu of %zu coordinates on a "
             "relu/max-pool kink skipped), %.1f s (< 120 s)",
             cases, worst, model_worst, kinks, coords, secs));
}

void metric_oracle() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::size_t mismatches = 0;
  std::size_t identity_breaks = 0;
  std::size_t vacuous = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const double water = trial % 10 == 0 ? 0.0 : u(rng);
    const double keep = trial % 25 == 0 ? 0.0 : u(rng);
    std::vector<float> prob(256), label(256), mask(256);
    for (int i = 0; i < 256; ++i) {
      prob[i] = trial % 10 == 0 ? 0.25f * u(rng) : u(rng);
      label[i] = u(rng) < water ? 1.0f : 0.0f;
      mask[i] = u(rng) < keep ? 1.0f : 0.0f;
    }
    std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (int i = 0; i < 256; ++i) {
      if (mask[i] != 1.0f) continue;
      const bool p = prob[i] >= 0.5f;
      const bool l = label[i] == 1.0f;
      tp += p && l;
      fp += p && !l;
      fn += !p && l;
      tn += !p && !l;
    }
    const double want_iou = tp + fp + fn == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
    const double want_f1 =
        tp + fp + fn == 0 ? 1.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
    vacuous += tp + fp + fn == 0;

    const ConfusionCounts c = confusion(binarize(prob), label, mask);
    if (c.tp != tp || c.fp != fp || c.fn != fn || c.tn != tn || iou(c) != want_iou || f1(c) != want_f1) {
      ++mismatches;
    }
    if (std::abs(f1(c) - 2.0 * iou(c) / (1.0 + iou(c))) > 1e-12) ++identity_breaks;
  }
  report(mismatches == 0 && identity_breaks == 0, "metric_oracle",
         fmt("1000 random 16x16 triples (%zu vacuous), %zu mismatches vs brute force, %zu f1=2iou/(1+iou) breaks "
             "(|d| <= 1e-12)",
             vacuous, mismatches, identity_breaks));
}

void loss_identities() {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  double worst_perfect = 0.0;
  double worst_mix = 0.0;
  std::size_t mask_changes = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Shape shape{2, 1, 8, 8};
    const Tensor t = binary(shape, rng, 0.1 + 0.8 * u(rng));
    const Tensor m = binary(shape, rng, 0.5 + 0.5 * u(rng));
    LossConfig cfg;
    cfg.alpha = u(rng);
    cfg.gamma = 4.0f * u(rng);
    worst_perfect = std::max({worst_perfect, std::abs(static_cast<double>(dice_loss(t, t, m, cfg.smooth).value.item())),
                              std::abs(static_cast<double>(focal_loss(t, t, m, cfg.gamma).value.item()))});

    Tensor p = random_tensor(shape, rng, 0.01f, 0.99f);
    const double dice = dice_loss(p, t, m, cfg.smooth).value.item();
    const double focal = focal_loss(p, t, m, cfg.gamma).value.item();
    const double comb = combined_loss(p, t, m, cfg).value.item();
    const double mix = cfg.alpha * dice + (1.0 - cfg.alpha) * focal;
    worst_mix = std::max(worst_mix, std::abs(comb - mix) / std::max(std::abs(mix), 1e-12));

    for (std::size_t i = 0; i < p.numel(); ++i) {
      if (m.data()[i] == 0.0f) p.data()[i] = u(rng);
    }
    if (dice_loss(p, t, m, cfg.smooth).value.item() != static_cast<float>(dice) ||
        focal_loss(p, t, m, cfg.gamma).value.item() != static_cast<float>(focal) ||
        combined_loss(p, t, m, cfg).value.item() != static_cast<float>(comb)) {
      ++mask_changes;
    }
  }
  report(worst_perfect <= 1e-6 && worst_mix <= 1e-6 && mask_changes == 0, "loss_identities",
         fmt("perfect-prediction max |loss| %.2e (<= 1e-6), combined vs mixture max rel %.2e (<= 1e-6) over 100 "
             "draws, %zu draws changed by masked pixels (== 0)",
             worst_perfect, worst_mix, mask_changes));
}

void siamese_contract() {
  ModelConfig cfg = tiny_model();
  cfg.widths = {4, 4, 8, 8};
  ModelParams params = ModelParams::init(cfg, 3);
  std::mt19937_64 rng(3);
  const Tensor x = random_tensor({2, 3, 16, 16}, rng, 0, 1);
  const FeatureMaps a = encoder_forward(x, params, ops::NormMode::train);
  const FeatureMaps b = encoder_forward(x.clone(), params, ops::NormMode::train);
  bool identical = true;
  for (int s = 0; s < 4; ++s) {
    identical = identical && a[s].shape() == b[s].shape() &&
                std::equal(a[s].data().begin(), a[s].data().end(), b[s].data().begin());
  }

  ModelParams shared = ModelParams::init(cfg, 4);
  ModelParams pre_copy = shared.clone();
  ModelParams post_copy = shared.clone();
  for (ModelParams* p : {&shared, &pre_copy, &post_copy}) {
    for (auto& e : p->entries()) e.tensor.set_requires_grad(e.trainable);
  }
  const Tensor pre = random_tensor({2, 3, 16, 16}, rng, 0, 1);
  const Tensor post = random_tensor({2, 3, 16, 16}, rng, 0, 1);
  const Tensor weight = random_tensor({2, 1, 16, 16}, rng, -1, 1);
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    loss = ops::sum(ops::mul(model_forward(pre, post, shared, ops::NormMode::train), weight));
  }
  tape.backward(loss);
  Tape split_tape;
  Tensor split_loss;
  {
    TapeScope scope(split_tape);
    const FeatureMaps fa = encoder_forward(pre, pre_copy, ops::NormMode::train);
    const FeatureMaps fb = encoder_forward(post, post_copy, ops::NormMode::train);
    split_loss = ops::sum(
        ops::mul(ops::sigmoid(decoder_forward(fuse(fa, fb, shared), shared, ops::NormMode::train)), weight));
  }
  split_tape.backward(split_loss);

  double worst = 0.0;
  for (const auto& e : shared.entries()) {
    if (!e.trainable || !e.name.starts_with("enc.")) continue;
    const auto g = e.tensor.grad();
    const auto ga = pre_copy.at(e.name).grad();
    const auto gb = post_copy.at(e.name).grad();
    double diff = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double sum = static_cast<double>(ga[i]) + gb[i];
      diff += (g[i] - sum) * (g[i] - sum);
      norm += sum * sum;
    }
    worst = std::max(worst, std::sqrt(diff) / std::max(std::sqrt(norm), 1e-12));
  }
  report(identical && worst <= 1e-5, "siamese_contract",
         fmt("identical inputs give %s encoder maps, shared grad vs per-stream sum max rel %.2e (<= 1e-5)",
             identical ? "bit-identical" : "DIFFERENT", worst));
}

void scse_identity() {
  std::mt19937_64 rng(5);
  bool exact = true;
  bool shapes = true;
  for (int trial = 0; trial < 8; ++trial) {
    ModelConfig cfg;
    cfg.widths = {8, 16, 16, 32};
    ModelParams params = ModelParams::init(cfg, 100 + trial);
    const int scale = trial % 4 + 1;
    const std::size_t c = cfg.widths[scale - 1];
    const std::size_t hw = 2 + 2 * static_cast<std::size_t>(trial);
    const Tensor f = random_tensor({2, c, hw, hw}, rng, -3, 3);
    shapes = shapes && scse(f, params.scse_block(scale)).shape() == f.shape();
    for (const char* part : {"fc1", "fc2", "spatial"}) {
      for (const char* kind : {"weight", "bias"}) {
        auto d = params.at("scse.s" + std::to_string(scale) + "." + part + "." + kind).data();
        std::fill(d.begin(), d.end(), 0.0f);
      }
    }
    const Tensor out = scse(f, params.scse_block(scale));
    shapes = shapes && out.shape() == f.shape();
    exact = exact && std::equal(out.data().begin(), out.data().end(), f.data().begin());
  }
  report(exact && shapes, "scse_identity",
         fmt("zeroed excitation returns input %s, shapes %s over 8 blocks", exact ? "exactly" : "INEXACTLY",
             shapes ? "preserved" : "CHANGED"));
}

void scheduler_trace() {
  const PlateauConfig cfg;
  std::vector<double> losses = {1.0, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9};
  while (losses.size() < 40) losses.push_back(0.9);
  SchedulerState s = SchedulerState::initial(cfg);
  std::vector<float> lrs;
  for (double l : losses) {
    s = plateau_update(s, l, cfg);
    lrs.push_back(s.lr);
  }
  bool ok = true;
  for (std::size_t i = 0; i < lrs.size(); ++i) {
    const float want = i < 6 ? 1e-3f : i < 11 ? 1e-4f : 1e-5f;
    ok = ok && lrs[i] == want;
  }
  std::vector<float> distinct;
  for (float lr : lrs) {
    if (distinct.empty() || distinct.back() != lr) distinct.push_back(lr);
  }
  std::string seq;
  for (float lr : distinct) seq += (seq.empty() ? "" : " -> ") + fmt("%g", lr);
  report(ok && *std::min_element(lrs.begin(), lrs.end()) >= 1e-5f, "scheduler_trace",
         fmt("lr %s over %zu epochs, drops after epochs 6 and 11, floor 1e-05 held", seq.c_str(), lrs.size()));
}

void learnability() {
  TempDir dir("accept");
  const auto t0 = Clock::now();
  SynthSpec spec;
  spec.tile_count = 200;
  spec.tile_size = 64;
  spec.seed = 7;
  const DatasetManifest manifest = synth_generate(spec, dir / "data");
  TrainConfig cfg;
  cfg.max_epochs = 15;
  cfg.threads = static_cast<int>(std::clamp(std::thread::hardware_concurrency(), 1u, 4u));
  const TrainResult r = train(manifest, cfg, dir / "run");
  const double secs = seconds_since(t0);
  const EpochRow* hit = nullptr;
  const EpochRow* best = &r.rows.front();
  for (const auto& row : r.rows) {
    if (row.val_iou > best->val_iou) best = &row;
    if (hit == nullptr && row.val_iou >= 0.90 && row.val_f1 >= 0.94) hit = &row;
  }
  const EpochRow& shown = hit != nullptr ? *hit : *best;
  report(hit != nullptr && secs <= 900.0, "end_to_end_learnability",
         fmt("200 synthetic 64x64 tiles, seed 7, %u epochs on %d thread(s): val IoU %.4f / F1 %.4f at epoch %u "
             "(>= 0.90 / >= 0.94), final IoU %.4f / F1 %.4f, %.0f s (<= 900 s)",
             cfg.max_epochs, cfg.threads, shown.val_iou, shown.val_f1, shown.epoch, r.rows.back().val_iou,
             r.rows.back().val_f1, secs));
}

void determinism() {
  TempDir dir("accept");
  SynthSpec spec;
  spec.tile_count = 24;
  spec.tile_size = 32;
  spec.seed = 11;
  const DatasetManifest m = synth_generate(spec, dir / "data");
  TrainConfig cfg;
  cfg.model.input_size = 32;
  cfg.model.widths = {8, 8, 16, 16};
  cfg.max_epochs = 4;
  train(m, cfg, dir / "a");
  train(m, cfg, dir / "b");
  bool identical = true;
  for (const char* f : {"metrics.csv", "best.bfck", "last.bfck"}) {
    identical = identical && slurp(dir / "a" / f) == slurp(dir / "b" / f);
  }

  TrainConfig first = cfg;
  first.max_epochs = 2;
  train(m, first, dir / "c");
  TrainOptions opts;
  opts.resume = dir / "c" / "last.bfck";
  train(m, cfg, dir / "c", opts);
  const auto full = read_metrics_csv(dir / "a" / "metrics.csv");
  const auto resumed = read_metrics_csv(dir / "c" / "metrics.csv");
  double worst = full.size() == resumed.size() ? 0.0 : INFINITY;
  for (std::size_t i = 0; i < std::min(full.size(), resumed.size()); ++i) {
    worst = std::max({worst, std::abs(full[i].train_loss - resumed[i].train_loss),
                      std::abs(full[i].val_loss - resumed[i].val_loss), std::abs(full[i].val_iou - resumed[i].val_iou),
                      std::abs(full[i].val_f1 - resumed[i].val_f1),
                      std::abs(static_cast<double>(full[i].lr) - resumed[i].lr)});
  }
  report(identical && worst <= 1e-6, "determinism",
         fmt("two single-threaded runs %s (metrics.csv, best.bfck, last.bfck); resume at epoch 2 of 4 max |d| %.2e "
             "(<= 1e-6)",
             identical ? "byte-identical" : "DIFFER", worst));
}

}  // namespace

int main() {
  table1();
  gradient_suite();
  metric_oracle();
  loss_identities();
  siamese_contract();
  scse_identity();
  scheduler_trace();
  determinism();
  learnability();
  std::printf("%d attainable criteria failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
