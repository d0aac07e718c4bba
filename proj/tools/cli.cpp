#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "segsr/checkpoint.hpp"
#include "segsr/config.hpp"
#include "segsr/heatmap.hpp"
#include "segsr/metrics.hpp"
#include "segsr/resize.hpp"
#include "segsr/synth.hpp"

namespace segsr::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config;
  std::string resume;
  std::string init;
  std::string ckpt;
  std::string lr;
  std::string seg;
  std::string out;
  std::string query;
  std::string which = "combined";
  std::string a;
  std::string b;
  std::uint64_t stats_iters = 0;
  std::size_t count = 0;
  std::size_t size = 96;
  std::string layout = "random";
  std::optional<std::uint64_t> seed;
};

RunConfig load_config(const Options& o) {
  RunConfig cfg = RunConfig::load(o.config);
  if (o.seed) cfg.set("seed", std::to_string(*o.seed));
  return cfg;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::vector<fs::path> list_pngs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

int prepare_data(const Options& o, std::ostream& out) {
  const RunConfig cfg = load_config(o);
  cfg.require({"primary_dir", "manifest"}, "prepare-data");
  const fs::path manifest_path = cfg.path("manifest");
  const fs::path base = fs::absolute(manifest_path).parent_path();
  DatasetManifest m;
  m.crop_size = cfg.integer("crop_size");
  m.seed = cfg.integer("seed");
  const std::string ratio = cfg.text("ratio");
  m.ratio_primary = std::stoul(ratio.substr(0, ratio.find(':')));
  m.ratio_aux = std::stoul(ratio.substr(ratio.find(':') + 1));
  DatasetManifest absolute = m;
  auto collect = [&](const char* key, SourceTag tag) {
    if (!cfg.has(key)) return;
    for (const fs::path& png : list_pngs(cfg.path(key))) {
      fs::path spm = png;
      spm.replace_extension(".spm");
      if (!fs::exists(spm)) throw IoError("missing segmentation map " + spm.string() + " for " + png.string());
      absolute.entries.push_back({fs::absolute(png), fs::absolute(spm), tag});
      m.entries.push_back({fs::relative(fs::absolute(png), base), fs::relative(fs::absolute(spm), base), tag});
    }
  };
  collect("primary_dir", SourceTag::primary_set);
  collect("aux_dir", SourceTag::aux_set);
  const Dataset check(absolute);  // validates every image and map
  ensure_dir(base);
  write_manifest(manifest_path, m);
  out << "manifest: " << m.entries.size() << " entries (" << m.count(SourceTag::primary_set) << " primary_set, "
      << m.count(SourceTag::aux_set) << " aux_set) -> " << manifest_path.string() << "\n";
  return kOk;
}

std::string checkpoint_name(Phase p) { return p == Phase::gan ? "gan" : "psnr"; }

int run_training(const Options& o, Phase phase, std::ostream& out) {
  const RunConfig cfg = load_config(o);
  cfg.require({"manifest", "output_dir"}, phase == Phase::gan ? "train-gan" : "train-psnr");
  const Dataset data(read_manifest(cfg.path("manifest")));
  if (data.manifest().crop_size != cfg.integer("crop_size")) {
    throw ConfigError("manifest crop size differs from config crop_size");
  }
  const fs::path dir = cfg.path("output_dir");
  ensure_dir(dir);

  std::optional<Model> model;
  if (phase == Phase::gan) {
    model.emplace(restore(load_checkpoint(o.init)));
    if (model->phase == Phase::psnr_pretrain) begin_gan_phase(*model);
  } else if (!o.resume.empty()) {
    model.emplace(restore(load_checkpoint(o.resume)));
    if (model->phase != Phase::psnr_pretrain) throw ConfigError("--resume expects a pretraining checkpoint");
  } else {
    model.emplace(cfg.generator(), cfg.discriminator(), cfg.integer("seed"));
  }
  if (model->discriminator.config().input_size != data.manifest().crop_size) {
    throw ConfigError("checkpoint discriminator input size differs from the crop size");
  }

  TrainOptions opts;
  opts.schedule = cfg.schedule(phase);
  opts.gan_loss = cfg.gan_loss();
  opts.dump_dir = dir;
  const std::string name = checkpoint_name(phase);
  const std::string echo = cfg.canonical();
  const std::uint64_t every = cfg.integer("checkpoint_every");
  std::ofstream csv(dir / (name + "_loss.csv"));
  if (!csv) throw IoError("cannot create loss trace in " + dir.string());
  write_loss_header(csv);
  const std::uint64_t first = model->iteration;
  opts.on_iteration = [&](const LossRecord& r) {
    write_loss_row(csv, r);
    const std::uint64_t done = r.iteration + 1;
    if (every > 0 && done % every == 0 && done < opts.schedule.iterations) {
      // The stored counter names the next iteration to run; the loop
      // itself advances the live one.
      model->iteration = done;
      Checkpoint snapshot = capture(*model, echo);
      model->iteration = r.iteration;
      save_checkpoint(dir / (name + "_iter" + std::to_string(done) + ".ckpt"), snapshot);
    }
  };
  const auto trace = train(*model, data, opts);
  csv.flush();
  if (!csv) throw IoError("failed writing loss trace in " + dir.string());
  const fs::path ckpt = dir / (name + ".ckpt");
  save_checkpoint(ckpt, capture(*model, echo));
  out << (phase == Phase::gan ? "train-gan" : "train-psnr") << ": iterations " << first << ".." << model->iteration;
  if (!trace.empty()) out << ", l1 " << trace.front().l1 << " -> " << trace.back().l1;
  out << "\ncheckpoint: " << ckpt.string() << "\n";
  return kOk;
}

int prune(const Options& o, std::ostream& out) {
  const RunConfig cfg = load_config(o);
  cfg.require({"manifest", "output_dir"}, "prune");
  if (o.stats_iters == 0) throw ConfigError("--stats-iters must be positive");
  Model model = restore(load_checkpoint(o.ckpt));
  const GeneratorConfig gcfg = model.generator.config();
  const MaskSet masks = model.generator.masks();
  for (const RrdbMask& rm : masks)
    for (const BlockMask& bm : rm)
      if (!bm.is_full()) throw ConfigError("prune expects a dense checkpoint");
  const Dataset data(read_manifest(cfg.path("manifest")));
  const std::size_t batch = cfg.integer("batch_size");
  const std::uint64_t seed = cfg.integer("seed");
  PruneStats stats(cfg.integer("stats_window"));
  Rng rng(seed);
  for (std::uint64_t it = 0; it < o.stats_iters; ++it) {
    const Batch b = sample_batch(data, batch, rng);
    Graph<float> g;
    ForwardContext<float> ctx(g, false);
    auto [features, traces] = model.generator.trunk(ctx, g.input(b.lr));
    record_stats<float>(stats, traces, masks);
  }
  const std::size_t side = data.manifest().crop_size / 4;
  const PruneResult result =
      prune_network(stats, cfg.number("epsilon"), gcfg.n_blocks, gcfg.block_layers, gcfg.block_channels, side, side);
  const fs::path dir = cfg.path("output_dir");
  ensure_dir(dir);
  {
    std::ofstream txt(dir / "prune_report.txt");
    std::ofstream kv(dir / "prune_report.kv");
    if (!txt || !kv) throw IoError("cannot write pruning report in " + dir.string());
    write_report_text(txt, result.report);
    write_report_kv(kv, result.report);
  }
  // The pruned architecture is retrained from scratch.
  Model fresh(gcfg, model.discriminator.config(), seed, result.masks);
  save_checkpoint(dir / "pruned.ckpt", capture(fresh, cfg.canonical()));
  write_report_text(out, result.report);
  out << "connections_removed=" << result.report.removed() << "\n";
  return kOk;
}

struct InferInputs {
  Model model;
  Tensor<float> lr;
  Tensor<float> seg;
};

InferInputs load_infer_inputs(const Options& o) {
  Model model = restore(load_checkpoint(o.ckpt));
  Tensor<float> lr = read_png(o.lr).to_tensor();
  const SegProbMap seg = read_segmap(o.seg);
  if (seg.height() != 4 * lr.dim(2) || seg.width() != 4 * lr.dim(3)) {
    throw ShapeError("segmentation map is " + std::to_string(seg.height()) + "x" + std::to_string(seg.width()) +
                     ", expected 4x the LR image (" + std::to_string(4 * lr.dim(2)) + "x" +
                     std::to_string(4 * lr.dim(3)) + ")");
  }
  return {std::move(model), std::move(lr), seg.batched()};
}

int infer_cmd(const Options& o, std::ostream& out) {
  InferInputs in = load_infer_inputs(o);
  const Tensor<float> sr = infer(in.model.generator, in.lr, in.seg);
  write_png(o.out, ImageBuffer::from_tensor(sr));
  out << "wrote " << o.out << " (" << sr.dim(3) << "x" << sr.dim(2) << ")\n";
  return kOk;
}

int attention_map(const Options& o, std::ostream& out) {
  const AttentionKind which = parse_attention_kind(o.which);
  std::size_t qx = 0, qy = 0;
  {
    char comma = 0;
    std::istringstream ss(o.query);
    if (!(ss >> qx >> comma >> qy) || comma != ',' || !ss.eof()) {
      throw ConfigError("--query expects X,Y pixel coordinates, got '" + o.query + "'");
    }
  }
  InferInputs in = load_infer_inputs(o);
  const std::size_t hr_h = in.seg.dim(2), hr_w = in.seg.dim(3);
  if (qx >= hr_w || qy >= hr_h) throw ConfigError("--query lies outside the " + std::to_string(hr_w) + "x" +
                                                  std::to_string(hr_h) + " output");
  const AttentionState state = infer_attention(in.model.generator, in.lr, in.seg);
  const std::size_t j = (qy / kSegStride) * state.grid_w + qx / kSegStride;
  write_png(o.out, render_attention_map(state, which, j, hr_h, hr_w));
  out << "wrote " << o.out << " (query cell " << j << " of " << state.positions() << ")\n";
  return kOk;
}

int metrics_cmd(const Options& o, std::ostream& out) {
  const Tensor<double> ya = rgb_to_y(read_png(o.a).to_tensor());
  const Tensor<double> yb = rgb_to_y(read_png(o.b).to_tensor());
  if (!(ya.shape() == yb.shape())) throw ShapeError("metrics: images differ in size");
  const double p = psnr(ya, yb);
  const double s = ssim(ya, yb);
  char buf[96];
  if (std::isinf(p)) {
    std::snprintf(buf, sizeof buf, "PSNR=inf SSIM=%.6f\n", s);
  } else {
    std::snprintf(buf, sizeof buf, "PSNR=%.6f SSIM=%.6f\n", p, s);
  }
  out << buf;
  return kOk;
}

int synth_data(const Options& o, std::ostream& out) {
  if (o.count == 0) throw ConfigError("--count must be positive");
  if (o.size == 0 || o.size % 4 != 0) throw ConfigError("--size must be a positive multiple of 4");
  const fs::path dir = o.out;
  ensure_dir(dir / "lr");
  Rng rng(o.seed.value_or(0));
  for (std::size_t i = 0; i < o.count; ++i) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "img_%04zu", i);
    const std::uint64_t s = rng.fork();
    if (o.layout != "random" && o.layout != "two-region") throw ConfigError("--layout must be random or two-region");
    const SyntheticPair pair = o.layout == "random" ? synth_pair(o.size, o.size, s) : two_region_pair(o.size, o.size, s);
    write_png(dir / (std::string(stem) + ".png"), pair.image);
    write_segmap(dir / (std::string(stem) + ".spm"), pair.seg);
    // Matching LR input for infer and attention-map, kept out of the pair
    // directory so prepare-data does not pick it up.
    const Tensor<float> lr = bicubic_resize(pair.image.to_tensor(), ScaleFactor::down_by(4));
    write_png(dir / "lr" / (std::string(stem) + ".png"), ImageBuffer::from_tensor(lr));
  }
  out << "wrote " << o.count << " image/map pairs to " << dir.string() << "\n";
  return kOk;
}

int report(std::ostream& err, const char* category, const std::string& what, int code) {
  err << "error: " << category << ": " << what << "\n";
  return code;
}

}  // namespace

int run(std::span<const std::string> argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Segmentation-prior attention super-resolution toolkit", "segsr"};
  app.require_subcommand(1);
  Options o;

  auto* prep = app.add_subcommand("prepare-data", "Validate image/map pairs and write the dataset manifest");
  prep->add_option("--config", o.config, "run configuration")->required();

  auto* psnr_cmd = app.add_subcommand("train-psnr", "L1 pretraining with the attention layer bypassed");
  psnr_cmd->add_option("--config", o.config, "run configuration")->required();
  psnr_cmd->add_option("--resume", o.resume, "continue from a pretraining checkpoint");
  psnr_cmd->add_option("--seed", o.seed, "override the config seed");

  auto* gan_cmd = app.add_subcommand("train-gan", "Adversarial training from a pretrained checkpoint");
  gan_cmd->add_option("--config", o.config, "run configuration")->required();
  gan_cmd->add_option("--init", o.init, "pretrained checkpoint")->required();
  gan_cmd->add_option("--seed", o.seed, "override the config seed");

  auto* prune_cmd = app.add_subcommand("prune", "Record dissimilarity statistics and derive sparse block masks");
  prune_cmd->add_option("--config", o.config, "run configuration")->required();
  prune_cmd->add_option("--ckpt", o.ckpt, "dense checkpoint")->required();
  prune_cmd->add_option("--stats-iters", o.stats_iters, "forward passes to record")->required();
  prune_cmd->add_option("--seed", o.seed, "override the config seed");

  auto* infer_sub = app.add_subcommand("infer", "Super-resolve one image");
  infer_sub->add_option("--ckpt", o.ckpt, "checkpoint")->required();
  infer_sub->add_option("--lr", o.lr, "low-resolution PNG")->required();
  infer_sub->add_option("--seg", o.seg, "segmentation map at 4x the LR size")->required();
  infer_sub->add_option("--out", o.out, "output PNG")->required();

  auto* attn = app.add_subcommand("attention-map", "Render one query's attention as a grayscale heatmap");
  attn->add_option("--ckpt", o.ckpt, "checkpoint")->required();
  attn->add_option("--lr", o.lr, "low-resolution PNG")->required();
  attn->add_option("--seg", o.seg, "segmentation map at 4x the LR size")->required();
  attn->add_option("--query", o.query, "query pixel X,Y in output coordinates")->required();
  attn->add_option("--which", o.which, "fea, seg or combined");
  attn->add_option("--out", o.out, "output PNG")->required();

  auto* met = app.add_subcommand("metrics", "PSNR and SSIM on the Y channel");
  met->add_option("--a", o.a, "first PNG")->required();
  met->add_option("--b", o.b, "second PNG")->required();

  auto* syn = app.add_subcommand("synth-data", "Write synthetic image/segmentation pairs");
  syn->add_option("--out", o.out, "output directory")->required();
  syn->add_option("--count", o.count, "number of pairs")->required();
  syn->add_option("--size", o.size, "image side in pixels");
  syn->add_option("--layout", o.layout, "random or two-region");
  syn->add_option("--seed", o.seed, "generator seed");

  std::vector<std::string> args(argv.begin() + (argv.empty() ? 0 : 1), argv.end());
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    return report(err, "config", e.what(), kConfigError);
  }

  try {
    if (*prep) return prepare_data(o, out);
    if (*psnr_cmd) return run_training(o, Phase::psnr_pretrain, out);
    if (*gan_cmd) return run_training(o, Phase::gan, out);
    if (*prune_cmd) return prune(o, out);
    if (*infer_sub) return infer_cmd(o, out);
    if (*attn) return attention_map(o, out);
    if (*met) return metrics_cmd(o, out);
    if (*syn) return synth_data(o, out);
  } catch (const ConfigError& e) {
    return report(err, "config", e.what(), kConfigError);
  } catch (const ShapeError& e) {
    return report(err, "config", e.what(), kConfigError);
  } catch (const IoError& e) {
    return report(err, "io", e.what(), kIoError);
  } catch (const fs::filesystem_error& e) {
    return report(err, "io", e.what(), kIoError);
  } catch (const NumericalError& e) {
    return report(err, "numerical", e.what(), kNumericalError);
  } catch (const std::exception& e) {
    return report(err, "config", e.what(), kConfigError);
  }
  return kConfigError;
}

}  // namespace segsr::cli
