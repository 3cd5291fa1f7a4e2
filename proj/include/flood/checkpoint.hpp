#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "flood/model.hpp"
#include "flood/optim.hpp"

namespace flood {

inline constexpr std::uint16_t kCheckpointVersion = 1;

/// Training state as stored on disk. `tensors` keeps file order: model
/// tensors first, then the Adam moments as `<name>.m` / `<name>.v`.
struct Checkpoint {
  std::vector<std::pair<std::string, Tensor>> tensors;
  std::uint64_t step = 0;
  SchedulerState scheduler;
  std::uint64_t seed = 0;
};

Checkpoint make_checkpoint(const ModelParams& params, const Adam& adam, const SchedulerState& scheduler,
                           std::uint64_t seed);

/// Model tensors only (moment entries excluded), for config inference.
std::vector<std::pair<std::string, Shape>> model_shapes(const Checkpoint& ckpt);

/// Rebuilds the parameter set; names and shapes must match `config` exactly.
ModelParams restore_params(const Checkpoint& ckpt, const ModelConfig& config);
Adam restore_optimizer(const Checkpoint& ckpt, const ModelParams& params);

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace flood
