#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "vtamiq/vtamiq.hpp"

namespace fs = std::filesystem;
using namespace vtamiq;

namespace {

constexpr int kOk = 0;
constexpr int kVerificationFailed = 1;
constexpr int kUsageError = 2;
constexpr int kDiverged = 3;

template <typename F>
int with_precision(const std::string& precision, F&& f) {
  if (precision == "float64") return f.template operator()<double>();
  return f.template operator()<float>();
}

fs::path prepare_output(const fs::path& dir) {
  fs::create_directories(dir);
  return dir;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  return out;
}

// Sampler settings given on the command line; unset fields keep the config values.
struct SamplerFlags {
  std::optional<double> alpha, beta, gamma, sigma;
  std::optional<std::string> metric;

  void add_to(CLI::App* app) {
    app->add_option("--alpha", alpha, "uniform weight");
    app->add_option("--beta", beta, "centre-bias weight");
    app->add_option("--gamma", gamma, "difference weight");
    app->add_option("--sigma-center", sigma, "centre-bias spread as a fraction of min(H, W)");
    app->add_option("--diff-metric", metric, "mse or ssim")->check(CLI::IsMember({"mse", "ssim"}));
  }

  void apply(SamplerConfig& s) const {
    if (alpha) s.alpha = *alpha;
    if (beta) s.beta = *beta;
    if (gamma) s.gamma = *gamma;
    if (sigma) s.sigma_center = *sigma;
    if (metric) s.diff_metric = *metric == "ssim" ? DiffMetric::kSsimLocal : DiffMetric::kMse;
  }
};

struct Common {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output;

  void add_to(CLI::App* app) {
    app->add_option("--seed", seed, "master seed (overrides the config)");
    app->add_option("--output", output, "output directory (overrides the config)");
  }

  void apply(RunConfig& c) const {
    if (seed) {
      c.seed = *seed;
      c.train.seed = *seed;
      c.sampler.seed = *seed;
    }
    if (output) c.output_dir = *output;
  }

  fs::path output_dir() const { return output ? fs::path(*output) : default_output_root(); }
};

RunConfig config_or_default(const std::string& path) {
  if (!path.empty()) return load_run_config(path);
  RunConfig c;
  c.output_dir = default_output_root();
  return c;
}

json trained_on_json(const TrainedOn& t) {
  json a = json::array();
  for (const auto& [name, ref] : t) a.push_back({name, ref});
  return a;
}

TrainedOn trained_on_from(const CheckpointHeader& h) {
  TrainedOn out;
  if (h.raw.contains("trained_on"))
    for (const auto& p : h.raw.at("trained_on")) out.emplace(p.at(0).get<std::string>(), p.at(1).get<std::string>());
  return out;
}

// ---- train ------------------------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::optional<std::size_t> epochs;
  Common common;
};

int cmd_train(const TrainArgs& a) {
  auto cfg = load_run_config(a.config);
  a.common.apply(cfg);
  if (a.epochs) {
    cfg.train.epochs = *a.epochs;
    cfg.train.lr_decay_epoch = std::min(cfg.train.lr_decay_epoch, *a.epochs);
  }
  cfg.validate();
  const auto manifest = cfg.load_dataset();
  const auto split = split_by_reference(manifest, cfg.data->split, cfg.seed);
  const auto out = prepare_output(cfg.output_dir);
  write_split(out / "split.txt", split);
  {
    auto f = open_output(out / "run.json");
    f << json{{"model", cfg.model}, {"sampler", cfg.sampler}, {"train", cfg.train}, {"seed", cfg.seed},
              {"precision", cfg.precision}}
             .dump(2)
      << '\n';
  }
  std::cerr << "training on " << records_in(manifest, split, Subset::kTrain).size() << " images ("
            << split.train.size() << " references), validating on " << split.val.size() << " references\n";

  return with_precision(cfg.precision, [&]<typename T>() {
    Model<T> model(cfg.model, cfg.seed);
    ImageCache<T> cache;
    auto on_epoch = [&](const EpochRecord& e, const ParameterStore<T>& store) {
      std::cerr << "epoch " << e.epoch << " loss " << e.train_loss << " val_srocc " << e.val_srocc << " lr " << e.lr
                << '\n';
      if (cfg.train.checkpoint_every > 0 && (e.epoch + 1) % cfg.train.checkpoint_every == 0) {
        char name[32];
        std::snprintf(name, sizeof name, "epoch_%03zu.ckpt", e.epoch);
        save_checkpoint(out / name, cfg.model, store, json{{"epoch", e.epoch}});
      }
    };
    const auto res = train(model, manifest, split, cfg.train, cfg.sampler, cache, on_epoch);
    write_history_csv(out / "history.csv", res.history);
    const json meta{{"dataset", manifest.name}, {"trained_on", trained_on_json(res.trained_on)}};
    auto best_meta = meta;
    best_meta["epoch"] = res.history.best_epoch;
    save_checkpoint(out / "best.ckpt", cfg.model, res.best, best_meta);
    auto final_meta = meta;
    final_meta["epoch"] = res.history.epochs.back().epoch;
    save_checkpoint(out / "final.ckpt", cfg.model, res.final, final_meta);
    std::cout << "best epoch " << res.history.best_epoch << " val_srocc " << res.history.best_val_srocc << '\n';
    return kOk;
  });
}

// ---- eval -------------------------------------------------------------------------------------

struct EvalArgs {
  std::string config;
  std::string checkpoint;
  std::string dataset;
  std::string direction = "higher_is_better";
  bool cross_db = false;
  std::optional<std::size_t> runs, patches;
  Common common;
};

int cmd_eval(const EvalArgs& a) {
  auto cfg = load_run_config(a.config);
  a.common.apply(cfg);
  if (a.runs) cfg.eval.runs = *a.runs;
  if (a.patches) cfg.eval.patches = *a.patches;
  cfg.validate();
  DatasetManifest manifest =
      a.dataset.empty() ? cfg.load_dataset()
                        : load_manifest(a.dataset, json(a.direction).get<ScoreDirection>());
  const auto out = prepare_output(cfg.output_dir);

  return with_precision(cfg.precision, [&]<typename T>() {
    CheckpointHeader header;
    const auto model = load_checkpoint<T>(a.checkpoint, &header, &cfg.model);
    ImageCache<T> cache;
    EvalOptions opt{cfg.eval.patches, cfg.eval.runs, cfg.seed, cfg.sampler};
    CorrelationReport rep;
    if (a.cross_db) {
      rep = cross_database_evaluate(model, manifest, trained_on_from(header), opt, cache);
      if (rep.trained_overlap > 0)
        std::cerr << "warning: " << rep.trained_overlap << " records share a reference with the training data\n";
    } else {
      const auto fractions = cfg.data ? cfg.data->split : DataConfig{}.split;
      const auto split = split_by_reference(manifest, fractions, cfg.seed);
      rep = evaluate(model, manifest, records_in(manifest, split, Subset::kTest), opt, cache);
    }
    auto report = open_output(out / "report.csv");
    write_report_csv(report, std::span(&rep, 1));
    auto per_run = open_output(out / "per_run.csv");
    write_per_run_csv(per_run, rep);
    print_report_table(std::cout, std::span(&rep, 1));
    return kOk;
  });
}

// ---- crossdb ----------------------------------------------------------------------------------

struct CrossArgs {
  std::string config;
  std::vector<std::string> checkpoints;
  std::vector<std::string> datasets;
  std::optional<std::size_t> runs, patches;
  Common common;
};

int cmd_crossdb(const CrossArgs& a) {
  auto cfg = load_run_config(a.config);
  a.common.apply(cfg);
  if (a.runs) cfg.eval.runs = *a.runs;
  if (a.patches) cfg.eval.patches = *a.patches;
  cfg.validate();
  std::vector<DatasetManifest> sets;
  std::vector<std::string> set_names, model_names;
  for (const auto& d : a.datasets) {
    sets.push_back(load_manifest(d));
    set_names.push_back(sets.back().name);
  }
  const auto out = prepare_output(cfg.output_dir);

  return with_precision(cfg.precision, [&]<typename T>() {
    std::vector<std::vector<CorrelationReport>> cells;
    ImageCache<T> cache;
    EvalOptions opt{cfg.eval.patches, cfg.eval.runs, cfg.seed, cfg.sampler};
    for (const auto& c : a.checkpoints) {
      CheckpointHeader header;
      const auto model = load_checkpoint<T>(c, &header, &cfg.model);
      model_names.push_back(fs::path(c).stem().string());
      auto& row = cells.emplace_back();
      for (const auto& m : sets) {
        row.push_back(cross_database_evaluate(model, m, trained_on_from(header), opt, cache));
        if (row.back().trained_overlap > 0)
          std::cerr << "warning: " << model_names.back() << " on " << m.name << ": " << row.back().trained_overlap
                    << " records share a reference with the training data\n";
      }
      std::cout << model_names.back() << '\n';
      print_report_table(std::cout, row);
    }
    auto f = open_output(out / "cross_matrix.csv");
    write_cross_matrix_csv(f, model_names, set_names, cells);
    return kOk;
  });
}

// ---- predict ----------------------------------------------------------------------------------

struct PredictArgs {
  std::string checkpoint, ref, dist, config;
  std::size_t patches = 1024;
  std::uint64_t seed = 0;
  SamplerFlags sampler;
};

int cmd_predict(const PredictArgs& a) {
  auto cfg = config_or_default(a.config);
  a.sampler.apply(cfg.sampler);
  const auto header = read_checkpoint_header(fs::path(a.checkpoint));
  return with_precision(header.precision, [&]<typename T>() {
    const auto model = load_checkpoint<T>(a.checkpoint);
    auto sampler = cfg.sampler;
    sampler.patch_size = model.config().vit.patch_size;
    const auto ref = load_image_normalized<T>(a.ref);
    const auto dist = load_image_normalized<T>(a.dist);
    if (ref.shape() != dist.shape()) {
      throw DimensionError("reference is " + shape_string(ref.shape()) + ", distorted is " + shape_string(dist.shape()));
    }
    const auto map = build_probability_map(ref, dist, sampler);
    const auto [sr, sd] = sample_patches(ref, dist, map, a.patches, derive_seed(a.seed, {0x9E3D}));
    std::cout << std::setprecision(17) << static_cast<double>(model.predict(sr, sd)) << '\n';
    return kOk;
  });
}

// ---- sample-map -------------------------------------------------------------------------------

struct MapArgs {
  std::string ref, dist, config;
  std::optional<std::size_t> patch_size;
  SamplerFlags sampler;
  Common common;
};

int cmd_sample_map(const MapArgs& a) {
  auto cfg = config_or_default(a.config);
  a.common.apply(cfg);
  a.sampler.apply(cfg.sampler);
  if (a.patch_size) cfg.sampler.patch_size = *a.patch_size;
  const auto ref = load_image_normalized<double>(a.ref);
  const auto dist = load_image_normalized<double>(a.dist);
  const auto map = build_probability_map(ref, dist, cfg.sampler);
  const auto out = prepare_output(cfg.output_dir);

  auto csv = open_output(out / "probability_map.csv");
  csv << std::setprecision(17);
  double peak = 0;
  for (std::size_t r = 0; r < map.rows(); ++r) {
    for (std::size_t c = 0; c < map.cols(); ++c) {
      csv << (c ? "," : "") << map.grid(r, c);
      peak = std::max(peak, map.grid(r, c));
    }
    csv << '\n';
  }
  // Scaled so that the most likely origin is white.
  std::vector<std::uint8_t> grey(map.rows() * map.cols());
  for (std::size_t i = 0; i < grey.size(); ++i)
    grey[i] = static_cast<std::uint8_t>(std::lround(255.0 * map.grid[i] / peak));
  write_png(out / "probability_map.png", map.cols(), map.rows(), 1, grey);
  std::cout << "wrote " << map.rows() << "x" << map.cols() << " map to " << out.string() << '\n';
  return kOk;
}

// ---- gradcheck --------------------------------------------------------------------------------

struct GradArgs {
  std::string config;
  double fault = 0;
  std::uint64_t seed = 0;
};

int cmd_gradcheck(const GradArgs& a) {
  ModelConfig mc = a.config.empty() ? ModelConfig::tiny() : load_run_config(a.config).model;
  Model<double> model(mc, a.seed);
  // Redraw all weights so that every path carries gradient signal.
  std::mt19937_64 rng(derive_seed(a.seed, {0x6C}));
  std::normal_distribution<double> nd(0.0, 0.5);
  for (auto& p : model.parameters())
    for (auto& v : p.value.values()) v = nd(rng);

  const std::size_t p = mc.vit.patch_size, batch = 3, patches = 4;
  PatchBatch<double> b;
  b.targets = Tensor<double>(Shape{batch, 1});
  for (std::size_t k = 0; k < batch; ++k) {
    Tensor<double> ref(Shape{2 * p, 2 * p, 3}), dist(Shape{2 * p, 2 * p, 3});
    for (auto& v : ref.values()) v = nd(rng);
    for (auto& v : dist.values()) v = nd(rng);
    const std::vector<PatchOrigin> origins{{0, 0}, {0, p}, {p, 0}, {p / 2, p / 2}};
    b.refs.push_back(extract_patches(ref, p, {origins.begin(), origins.begin() + patches}));
    b.dists.push_back(extract_patches(dist, p, {origins.begin(), origins.begin() + patches}));
    b.targets[k] = 0.25 * static_cast<double>(k + 1);
  }
  GradientCheckOptions opt;
  opt.fault = a.fault;
  const auto rep = gradient_check(model, b, opt);
  for (const auto& g : rep.groups)
    std::cout << std::left << std::setw(44) << g.name << std::right << std::setw(8) << g.count << "  max rel "
              << std::scientific << std::setprecision(3) << g.max_rel_error << std::defaultfloat << '\n';
  std::cout << rep.groups.size() << " parameter groups, max relative error " << rep.max_rel_error << " at "
            << rep.worst << '\n';
  if (!rep.passed()) {
    std::cerr << "gradient check failed: " << rep.worst << " exceeds tolerance " << rep.tolerance << '\n';
    return kVerificationFailed;
  }
  return kOk;
}

// ---- param-count ------------------------------------------------------------------------------

struct CountArgs {
  std::string config;
  std::string preset = "full";
};

int cmd_param_count(const CountArgs& a) {
  ModelConfig mc = !a.config.empty() ? load_run_config(a.config).model
                   : a.preset == "tiny" ? ModelConfig::tiny()
                                        : ModelConfig::vtamiq_16_6_4_4();
  mc.validate();
  const auto c = Model<float>(mc).parameter_counts();
  std::cout << "encoder     " << c.encoder << '\n'
            << "positional  " << c.positional << '\n'
            << "diffnet     " << c.diffnet << '\n'
            << "head        " << c.head << '\n'
            << "total       " << c.total << '\n';
  return kOk;
}

// ---- synth ------------------------------------------------------------------------------------

struct SynthArgs {
  SyntheticSpec spec;
  std::string distortion = "blur";
  std::string name = "synthetic";
  Common common;
};

int cmd_synth(SynthArgs a) {
  a.spec.distortion = a.distortion == "noise" ? SyntheticDistortion::kNoise : SyntheticDistortion::kBlur;
  if (a.common.seed) a.spec.seed = *a.common.seed;
  const auto out = prepare_output(a.common.output_dir());
  const auto m = write_synthetic_dataset(out, a.spec, a.name);
  std::cout << "wrote " << m.records.size() << " pairs to " << (out / "manifest.csv").string() << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transformer-based full-reference image quality assessment"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "train a model from a config file");
  train_cmd->add_option("config", train_args.config, "JSON run config")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--epochs", train_args.epochs, "override train.epochs");
  train_args.common.add_to(train_cmd);

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint (test split, or a whole dataset with --cross-db)");
  eval_cmd->add_option("config", eval_args.config, "JSON run config")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "model checkpoint")->required();
  eval_cmd->add_option("--dataset", eval_args.dataset, "manifest CSV (defaults to the config's dataset)");
  eval_cmd->add_option("--direction", eval_args.direction, "score direction of --dataset")
      ->check(CLI::IsMember({"higher_is_better", "lower_is_better"}));
  eval_cmd->add_flag("--cross-db", eval_args.cross_db, "treat the dataset as unseen and use every record");
  eval_cmd->add_option("--runs", eval_args.runs, "evaluation runs");
  eval_cmd->add_option("--patches", eval_args.patches, "patches per image");
  eval_args.common.add_to(eval_cmd);

  CrossArgs cross_args;
  auto* cross_cmd = app.add_subcommand("crossdb", "cross-database matrix: every checkpoint on every dataset");
  cross_cmd->add_option("config", cross_args.config, "JSON run config")->required()->check(CLI::ExistingFile);
  cross_cmd->add_option("--checkpoint", cross_args.checkpoints, "checkpoints (one matrix row each)")->required();
  cross_cmd->add_option("--dataset", cross_args.datasets, "manifests (one column group each)")->required();
  cross_cmd->add_option("--runs", cross_args.runs, "evaluation runs");
  cross_cmd->add_option("--patches", cross_args.patches, "patches per image");
  cross_args.common.add_to(cross_cmd);

  PredictArgs predict_args;
  auto* predict_cmd = app.add_subcommand("predict", "score one reference/distorted pair");
  predict_cmd->add_option("--checkpoint", predict_args.checkpoint, "model checkpoint")->required();
  predict_cmd->add_option("--ref", predict_args.ref, "reference image")->required();
  predict_cmd->add_option("--dist", predict_args.dist, "distorted image")->required();
  predict_cmd->add_option("--patches", predict_args.patches, "number of sampled patches")->check(CLI::PositiveNumber);
  predict_cmd->add_option("--seed", predict_args.seed, "patch sampling seed");
  predict_cmd->add_option("--config", predict_args.config, "JSON run config for sampler settings");
  predict_args.sampler.add_to(predict_cmd);

  MapArgs map_args;
  auto* map_cmd = app.add_subcommand("sample-map", "write the patch sampling distribution as PNG and CSV");
  map_cmd->add_option("--ref", map_args.ref, "reference image")->required();
  map_cmd->add_option("--dist", map_args.dist, "distorted image")->required();
  map_cmd->add_option("--config", map_args.config, "JSON run config for sampler settings");
  map_cmd->add_option("--patch-size", map_args.patch_size, "patch size")->check(CLI::PositiveNumber);
  map_args.sampler.add_to(map_cmd);
  map_args.common.add_to(map_cmd);

  GradArgs grad_args;
  auto* grad_cmd = app.add_subcommand("gradcheck", "compare backprop against finite differences");
  grad_cmd->add_option("--config", grad_args.config, "JSON run config (defaults to the tiny model)");
  grad_cmd->add_option("--inject-fault", grad_args.fault, "perturb the first analytic gradient by this factor");
  grad_cmd->add_option("--seed", grad_args.seed, "weight and input seed");

  CountArgs count_args;
  auto* count_cmd = app.add_subcommand("param-count", "print parameter counts per component");
  count_cmd->add_option("config", count_args.config, "JSON run config");
  count_cmd->add_option("--preset", count_args.preset, "model when no config is given")
      ->check(CLI::IsMember({"full", "tiny"}));

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic distortion ladder dataset");
  synth_cmd->add_option("--references", synth_args.spec.references, "reference images");
  synth_cmd->add_option("--size", synth_args.spec.height, "image side length");
  synth_cmd->add_option("--distortion", synth_args.distortion, "blur or noise")->check(CLI::IsMember({"blur", "noise"}));
  synth_cmd->add_option("--name", synth_args.name, "dataset name");
  synth_args.common.add_to(synth_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  try {
    if (*train_cmd) return cmd_train(train_args);
    if (*eval_cmd) return cmd_eval(eval_args);
    if (*cross_cmd) return cmd_crossdb(cross_args);
    if (*predict_cmd) return cmd_predict(predict_args);
    if (*map_cmd) return cmd_sample_map(map_args);
    if (*grad_cmd) return cmd_gradcheck(grad_args);
    if (*count_cmd) return cmd_param_count(count_args);
    if (*synth_cmd) {
      synth_args.spec.width = synth_args.spec.height;
      return cmd_synth(synth_args);
    }
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  }
  return kUsageError;
}
