#include "gcagc/model.hpp"

#include "gcagc/error.hpp"
#include "gcagc/ops.hpp"

namespace gcagc {

Ablation parse_ablation(const std::string& name) {
  if (name == "none") return Ablation::none;
  if (name == "no-agcn") return Ablation::no_agcn;
  if (name == "no-agcm") return Ablation::no_agcm;
  if (name == "no-proj") return Ablation::no_proj;
  throw ConfigError("unknown ablation '" + name + "'");
}

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::no_agcn: return "no-agcn";
    case Ablation::no_agcm: return "no-agcm";
    case Ablation::no_proj: return "no-proj";
    default: return "none";
  }
}

void ModelConfig::validate() const {
  encoder.validate();
  if (ablation != Ablation::no_agcn) agcn.validate(encoder.fpn_channels);
  agcm.validate();
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be nonnegative");
}

std::size_t ModelConfig::cluster_dim() const {
  return ablation == Ablation::no_agcn ? 3 * encoder.fpn_channels : 3 * agcn.out;
}

Model Model::create(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Model m;
  m.config = cfg;
  Rng rng(seed);
  m.encoder = EncoderParams::create(m.params, rng, cfg.encoder);
  if (cfg.ablation != Ablation::no_agcn) {
    m.agcn = AgcnParams::create(m.params, rng, cfg.agcn, cfg.encoder.fpn_channels,
                                cfg.ablation != Ablation::no_proj);
  }
  m.decoder = DecoderParams::create(m.params, rng, cfg.cluster_dim() + 1,
                                    cfg.encoder.graph_resolution(), cfg.encoder.input_size);
  return m;
}

ForwardResult forward(const Model& model, const Tensor& images, const ForwardOptions& opts) {
  const ModelConfig& cfg = model.config;
  FeaturePyramid pyr = encode_images(images, cfg.encoder, model.encoder);
  NodeFeatureSet nodes = to_node_features(fpn_fuse(pyr, cfg.encoder, model.encoder), cfg.encoder);
  const std::size_t n = nodes.nodes(), N = nodes.images, h = nodes.height, w = nodes.width;

  std::array<Tensor, 3> z;
  if (cfg.ablation == Ablation::no_agcn) {
    z = nodes.x;
  } else {
    z = agcn_forward(nodes, model.agcn, cfg.agcn, cfg.ablation != Ablation::no_proj).z;
  }
  Tensor z_rows = concat({z[0], z[1], z[2]}, 1);
  const std::size_t d = z_rows.dim(1);
  Tensor z_tensor = reshape(z_rows, {N, h, w, d});

  ForwardResult out;
  if (cfg.ablation == Ablation::no_agcm) {
    out.y_hat.assign(n, 0.5);
    out.coattention = Tensor::full({N, h, w}, 0.5);
  } else {
    AttentionMaps att = attention_correlate(ggap(z_tensor), z_tensor);
    if (opts.fixed_y_hat) {
      if (opts.fixed_y_hat->size() != n) {
        throw DimensionError("fixed indicator has " + std::to_string(opts.fixed_y_hat->size()) +
                             " entries for " + std::to_string(n) + " nodes");
      }
      out.y_hat = *opts.fixed_y_hat;
    } else {
      const auto zd = z_rows.data();
      KernelOperator k(std::vector<double>(zd.begin(), zd.end()), n, d, att.weights.data());
      RelaxedIndicator sol = solve_relaxed_indicator(k, att.weights.data(), cfg.agcm);
      out.y_hat = std::move(sol.y);
      out.solver_steps = sol.accepted_steps;
    }
    if (opts.with_cluster_loss) out.loss_gc = clustering_loss(z_rows, att.weights, out.y_hat);
    out.coattention = make_coattention(out.y_hat, N, h, w);
  }
  out.maps = decode(fuse_features(out.coattention, z_tensor), model.decoder);
  return out;
}

LossValues compute_loss(const Model& model, const ForwardResult& fwd, const Tensor& masks) {
  LossValues v;
  Tensor cls = classification_loss(fwd.maps, masks, model.config.weighting);
  v.cls = cls.item();
  v.gc = fwd.loss_gc.defined() ? fwd.loss_gc.item() : 0.0;
  v.total = total_loss(cls, fwd.loss_gc, model.config.lambda);
  return v;
}

}  // namespace gcagc
