#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <gcagc/checkpoint.hpp>
#include <gcagc/config.hpp>
#include <gcagc/dataset.hpp>
#include <gcagc/error.hpp>
#include <gcagc/gradcheck_suite.hpp>
#include <gcagc/metrics.hpp>
#include <gcagc/netpbm.hpp>
#include <gcagc/train.hpp>

namespace fs = std::filesystem;

namespace gcagc::cli {

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write " + path.string());
  f << text;
  if (!f) throw InputError("write failed for " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw InputError("cannot create directory " + dir.string());
}

struct GenArgs {
  SyntheticConfig cfg;
  std::string out;
};

int gen_data(const GenArgs& a, std::ostream& out) {
  write_synthetic_dataset(a.cfg, a.out);
  out << "wrote " << a.cfg.groups << " groups of " << a.cfg.group_size << " images to " << a.out
      << '\n';
  return kSuccess;
}

struct TrainArgs {
  std::string config, data, out;
  std::vector<std::string> overrides;
  bool no_agcn = false, no_agcm = false, no_proj = false;
  std::size_t log_every = 100;
};

int train_cmd(const TrainArgs& a, std::ostream& out) {
  RunConfig cfg = a.config.empty() ? RunConfig{} : load_run_config(a.config);
  for (const auto& o : a.overrides) apply_override(cfg, o);
  if (a.no_agcn) cfg.model.ablation = Ablation::no_agcn;
  if (a.no_agcm) cfg.model.ablation = Ablation::no_agcm;
  if (a.no_proj) cfg.model.ablation = Ablation::no_proj;
  cfg.model.validate();

  auto groups = make_mini_groups(load_dataset_dir(a.data, true), cfg.group_size);
  if (groups.empty()) throw InputError("no training groups found under " + a.data);
  ensure_dir(a.out);
  write_text(fs::path(a.out) / "config.ini", format_run_config(cfg));
  cfg.train.out_dir = a.out;

  out << "training " << to_string(cfg.model.ablation) << " on " << groups.size()
      << " groups for " << cfg.train.steps << " steps\n";
  const std::size_t every = a.log_every;
  auto log = [&](const TraceRow& r) {
    if (every && ((r.step + 1) % every == 0 || r.step + 1 == cfg.train.steps)) {
      char line[160];
      std::snprintf(line, sizeof line, "step %6zu  lr %.3e  loss %.6f  cls %.6f  gc %.6f\n",
                    r.step + 1, r.lr, r.loss, r.loss_cls, r.loss_gc);
      out << line << std::flush;
    }
  };
  train(groups, cfg.model, cfg.train, log);
  out << "final checkpoint " << (fs::path(a.out) / "final.gckpt").string() << '\n';
  return kSuccess;
}

struct InferArgs {
  std::string checkpoint, data, out;
  std::size_t group_size = 5;
};

int infer_cmd(const InferArgs& a, std::ostream& out) {
  const LoadedModel loaded = model_from_table(load_checkpoint(a.checkpoint));
  const auto groups = load_dataset_dir(a.data, false);
  std::size_t written = 0;
  for (const auto& group : groups) {
    const fs::path dir = fs::path(a.out) / group.id;
    ensure_dir(dir);
    std::set<std::string> done;
    for (const auto& mini : make_mini_groups({group}, a.group_size)) {
      const auto maps = predict_group(loaded.model, mini);
      for (std::size_t i = 0; i < mini.size(); ++i) {
        // Cyclic padding repeats earlier images; the first prediction wins.
        if (!done.insert(mini.names[i]).second) continue;
        write_netpbm(dir / (mini.names[i] + ".pgm"), maps[i]);
        ++written;
      }
    }
  }
  out << "wrote " << written << " maps to " << a.out << '\n';
  return kSuccess;
}

// Key for matching predictions with ground truth: the relative path with any
// "gt" directory dropped, so both a prediction tree and a dataset root work.
std::map<std::string, fs::path> collect_maps(const fs::path& root) {
  if (!fs::is_directory(root)) throw InputError("directory " + root.string() + " not found");
  std::map<std::string, fs::path> found;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file() || e.path().extension() != ".pgm") continue;
    fs::path key;
    for (const auto& part : fs::relative(e.path(), root)) {
      if (part != "gt") key /= part;
    }
    found.emplace(key.generic_string(), e.path());
  }
  return found;
}

struct EvalArgs {
  std::string pred, gt, out;
};

int eval_cmd(const EvalArgs& a, std::ostream& out) {
  const auto preds = collect_maps(a.pred);
  const auto gts = collect_maps(a.gt);
  std::vector<std::string> missing_gt, missing_pred;
  for (const auto& [k, p] : preds)
    if (!gts.count(k)) missing_gt.push_back(k);
  for (const auto& [k, p] : gts)
    if (!preds.count(k)) missing_pred.push_back(k);
  if (!missing_gt.empty() || !missing_pred.empty()) {
    std::ostringstream msg;
    msg << "prediction and ground-truth files do not match";
    for (const auto& k : missing_gt) msg << "\n  no ground truth for " << k;
    for (const auto& k : missing_pred) msg << "\n  no prediction for " << k;
    throw InputError(msg.str());
  }
  if (preds.empty()) throw InputError("no .pgm maps found under " + a.pred);

  std::vector<Image> maps, masks;
  for (const auto& [k, p] : preds) {
    Image m = read_netpbm(p);
    Image g = binarize_mask(read_netpbm(gts.at(k)));
    if (m.channels != 1) throw InputError(p.string() + ": prediction must be a gray PGM");
    if (m.width != g.width || m.height != g.height) {
      throw InputError(k + ": prediction is " + std::to_string(m.width) + "x" +
                       std::to_string(m.height) + ", ground truth " + std::to_string(g.width) +
                       "x" + std::to_string(g.height));
    }
    maps.push_back(std::move(m));
    masks.push_back(std::move(g));
  }
  const EvalResult r = evaluate(maps, masks);
  ensure_dir(a.out);
  write_text(fs::path(a.out) / "metrics.csv", format_metrics_csv(r));
  write_text(fs::path(a.out) / "curves.csv", format_curves_csv(r.curves));
  out << "evaluated " << maps.size() << " maps\n" << format_report(r);
  return kSuccess;
}

struct GradArgs {
  std::uint64_t seed = 7;
  std::string corrupt;
};

int gradcheck_cmd(const GradArgs& a, std::ostream& out, std::ostream& err) {
  if (!a.corrupt.empty()) {
    const auto names = gradcheck_op_names();
    if (std::find(names.begin(), names.end(), a.corrupt) == names.end()) {
      throw UsageError("no gradient check registered for op '" + a.corrupt + "'");
    }
  }
  const GradCheckReport report = run_gradcheck_suite(a.seed, a.corrupt);
  out << report.format();
  if (report.passed()) return kSuccess;
  std::set<std::string> bad;
  for (const auto& e : report.entries)
    if (!e.passed()) bad.insert(e.op);
  err << "gradient check failed for:";
  for (const auto& op : bad) err << ' ' << op;
  err << '\n';
  return kFailure;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"GCAGC co-saliency detection: data generation, training, inference, evaluation"};
  app.name("gcagc");
  app.require_subcommand(1, 1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic co-saliency dataset");
  gen_cmd->add_option("--seed", gen.cfg.seed, "Generator seed")->capture_default_str();
  gen_cmd->add_option("--groups", gen.cfg.groups, "Number of groups")->capture_default_str();
  gen_cmd->add_option("--first-group", gen.cfg.first_group, "Index of the first group")
      ->capture_default_str();
  gen_cmd->add_option("--size", gen.cfg.image_size, "Image side in pixels")->capture_default_str();
  gen_cmd->add_option("--group-size", gen.cfg.group_size, "Images per group")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output dataset root")->required();

  TrainArgs tr;
  auto* train_sc = app.add_subcommand("train", "Train a model on a dataset directory");
  train_sc->add_option("--config", tr.config, "ini-style config file")->check(CLI::ExistingFile);
  train_sc->add_option("--data", tr.data, "Dataset root with masks")->required();
  train_sc->add_option("--out", tr.out, "Output directory for checkpoints and trace")->required();
  train_sc->add_option("--set", tr.overrides, "Override a config key: section.key=value")
      ->allow_extra_args(false);
  train_sc->add_option("--log-every", tr.log_every, "Progress line interval, 0 for none")
      ->capture_default_str();
  auto* f1 = train_sc->add_flag("--no-agcn", tr.no_agcn, "Ablate the graph convolution");
  auto* f2 = train_sc->add_flag("--no-agcm", tr.no_agcm, "Ablate the attention graph clustering");
  auto* f3 = train_sc->add_flag("--no-proj", tr.no_proj, "Ablate the adjacency projections");
  f1->excludes(f2)->excludes(f3);
  f2->excludes(f1)->excludes(f3);
  f3->excludes(f1)->excludes(f2);

  InferArgs inf;
  auto* infer_sc = app.add_subcommand("infer", "Predict co-saliency maps");
  infer_sc->add_option("--checkpoint", inf.checkpoint, "Model checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  infer_sc->add_option("--data", inf.data, "Dataset root")->required();
  infer_sc->add_option("--out", inf.out, "Output directory for PGM maps")->required();
  infer_sc->add_option("--group-size", inf.group_size, "Mini-group size")->capture_default_str();

  EvalArgs ev;
  auto* eval_sc = app.add_subcommand("eval", "Score predicted maps against ground truth");
  eval_sc->add_option("--pred", ev.pred, "Prediction root")->required();
  eval_sc->add_option("--gt", ev.gt, "Ground-truth root (dataset root or mask tree)")->required();
  eval_sc->add_option("--out", ev.out, "Output directory for metrics.csv and curves.csv")
      ->required();

  GradArgs gc;
  auto* grad_sc = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");
  grad_sc->add_option("--seed", gc.seed, "Seed for the random test tensors")->capture_default_str();
  grad_sc->add_option("--corrupt-op", gc.corrupt)->group("");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kSuccess : kUsage;
  }
  try {
    if (*gen_cmd) return gen_data(gen, out);
    if (*train_sc) return train_cmd(tr, out);
    if (*infer_sc) return infer_cmd(inf, out);
    if (*eval_sc) return eval_cmd(ev, out);
    if (*grad_sc) return gradcheck_cmd(gc, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}

}  // namespace gcagc::cli
