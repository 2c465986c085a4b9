#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "gcagc/checkpoint.hpp"
#include "gcagc/image.hpp"
#include "gcagc/model.hpp"
#include "gcagc/optim.hpp"

namespace gcagc {

struct TrainConfig {
  std::uint64_t seed = 7;
  std::size_t steps = 2000;
  LrSchedule lr{1e-3, 500};
  AdamConfig adam;
  std::size_t checkpoint_every = 500;  // 0 disables periodic checkpoints
  std::filesystem::path out_dir;       // empty: keep everything in memory
};

struct TraceRow {
  std::size_t step;
  double lr, loss, loss_cls, loss_gc;
};

struct TrainResult {
  Model model;
  AdamState state;
  std::vector<TraceRow> trace;
};

using TrainCallback = std::function<void(const TraceRow&)>;

/// Trains on `groups` (each resized to the model input size), one group per
/// step in a seeded per-epoch shuffle. With out_dir set, writes
/// loss_trace.csv, ckpt_<step>.gckpt every checkpoint_every steps and
/// final.gckpt. A non-finite loss throws NumericalError naming the step;
/// checkpoints already written stay in place.
TrainResult train(const std::vector<ImageGroup>& groups, const ModelConfig& model_cfg,
                  const TrainConfig& cfg, const TrainCallback& on_step = {});

/// Predicted maps for one group at the images' own resolution.
std::vector<Image> predict_group(const Model& model, const ImageGroup& group);

}  // namespace gcagc
