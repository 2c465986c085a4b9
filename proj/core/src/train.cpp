#include "gcagc/train.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "gcagc/dataset.hpp"
#include "gcagc/error.hpp"

namespace fs = std::filesystem;

namespace gcagc {

namespace {

std::string step_name(std::size_t step) {
  std::ostringstream os;
  os << "ckpt_" << std::setw(6) << std::setfill('0') << step << ".gckpt";
  return os.str();
}

std::string format_row(const TraceRow& r) {
  std::ostringstream os;
  os << std::setprecision(17) << r.step << ',' << r.lr << ',' << r.loss << ',' << r.loss_cls << ','
     << r.loss_gc << '\n';
  return os.str();
}

}  // namespace

TrainResult train(const std::vector<ImageGroup>& groups, const ModelConfig& model_cfg,
                  const TrainConfig& cfg, const TrainCallback& on_step) {
  if (groups.empty()) throw InputError("training set is empty");
  const std::size_t side = model_cfg.encoder.input_size;
  std::vector<Tensor> images, masks;
  for (const auto& g : groups) {
    if (!g.has_masks()) throw InputError("training group '" + g.id + "' has no masks");
    ImageGroup r = resize_group(g, side);
    images.push_back(images_to_tensor(r));
    masks.push_back(masks_to_tensor(r));
  }

  TrainResult res{Model::create(model_cfg, cfg.seed), {}, {}};
  res.state = AdamState::for_params(res.model.params);

  std::ofstream trace;
  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    trace.open(cfg.out_dir / "loss_trace.csv", std::ios::trunc);
    if (!trace) throw InputError("cannot write " + (cfg.out_dir / "loss_trace.csv").string());
    trace << "step,lr,loss,loss_cls,loss_gc\n";
  }

  Rng order_rng = Rng::derive(cfg.seed, 0x6f72646572ULL);
  std::vector<std::size_t> order(groups.size());
  std::size_t cursor = order.size();
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    if (cursor == order.size()) {
      std::iota(order.begin(), order.end(), 0);
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[order_rng.below(i)]);
      cursor = 0;
    }
    const std::size_t g = order[cursor++];

    res.model.params.zero_grad();
    LossValues loss;
    try {
      ForwardResult fwd = forward(res.model, images[g], {});
      loss = compute_loss(res.model, fwd, masks[g]);
    } catch (const NumericalError& e) {
      throw NumericalError("training step " + std::to_string(step) + " (" + groups[g].id +
                           "): " + e.what());
    }
    const double total = loss.total.item();
    if (!std::isfinite(total)) {
      throw NumericalError("non-finite loss at training step " + std::to_string(step) + " (" +
                           groups[g].id + ")");
    }
    loss.total.backward();
    const double lr = cfg.lr.at(step);
    adam_step(res.model.params, res.state, lr, cfg.adam);

    TraceRow row{step, lr, total, loss.cls, loss.gc};
    res.trace.push_back(row);
    if (trace) trace << format_row(row) << std::flush;
    if (on_step) on_step(row);
    if (!cfg.out_dir.empty() && cfg.checkpoint_every && (step + 1) % cfg.checkpoint_every == 0) {
      save_checkpoint(cfg.out_dir / step_name(step + 1), model_to_table(res.model, &res.state));
    }
  }
  if (!cfg.out_dir.empty()) {
    save_checkpoint(cfg.out_dir / "final.gckpt", model_to_table(res.model, &res.state));
  }
  return res;
}

std::vector<Image> predict_group(const Model& model, const ImageGroup& group) {
  group.validate();
  const std::size_t side = model.config.encoder.input_size;
  ImageGroup resized = group;
  resized.masks.clear();
  resized = resize_group(resized, side);
  ForwardOptions opts;
  opts.with_cluster_loss = false;
  ForwardResult fwd = forward(model, images_to_tensor(resized), opts);
  const auto d = fwd.maps.data();
  std::vector<Image> out;
  for (std::size_t n = 0; n < group.size(); ++n) {
    Image m(side, side, 1);
    std::copy(d.begin() + n * side * side, d.begin() + (n + 1) * side * side, m.pixels.begin());
    out.push_back(resize_bilinear(m, group.images[n].width, group.images[n].height));
  }
  return out;
}

}  // namespace gcagc
