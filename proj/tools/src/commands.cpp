#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>

#include "osteoforge/dataset.hpp"
#include "osteoforge/enhancer.hpp"
#include "osteoforge/error.hpp"
#include "osteoforge/gradcheck_suite.hpp"
#include "osteoforge/parallel.hpp"
#include "osteoforge/phantom.hpp"
#include "osteoforge/projector.hpp"
#include "osteoforge/quality.hpp"
#include "osteoforge/trainer.hpp"
#include "osteoforge/unet.hpp"
#include "osteoforge/volume.hpp"

namespace osteoforge::cli {

namespace fs = std::filesystem;

namespace {

// Weights attribute recording the source preprocessing a model was trained with.
constexpr const char* kPreprocessAttr = "preprocess";

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--seed", c.seed, "Seed for every random draw");
  sub->add_flag("--deterministic", c.deterministic, "Run single-threaded; omit wall times from outputs");
  sub->add_option("--manifest", c.manifest, "Run manifest path (default: next to the primary output)");
  // Consumed before parsing by expand_config(); declared for --help.
  sub->add_option("--config", c.config, "JSON file of option values; explicit flags take precedence");
}

void add_projector(CLI::App* sub, ProjectorConfig& p) {
  sub->add_option("--mu-water", p.mu_water, "Linear attenuation of water (1/cm)");
  sub->add_option("--beta", p.beta, "Exposure factor in the DRR exponent");
  sub->add_option("--clamp-air", p.clamp_air, "Clamp HU + 1000 at zero");
}

struct Window {
  int lo = kBoneWindowLo;
  int hi = kBoneWindowHi;
};

void add_window(CLI::App* sub, Window& w) {
  sub->add_option("--window-lo", w.lo, "Bone window lower bound (HU)");
  sub->add_option("--window-hi", w.hi, "Bone window upper bound (HU)");
}

Hu to_hu(int v, const char* field) {
  if (v < kMinHu || v > kMaxHu) throw ConfigError(field, "outside the HU range");
  return static_cast<Hu>(v);
}

std::string strip_known_suffix(const fs::path& p) {
  std::string s = p.string();
  for (const char* suffix : {".img.json", ".wts.json", ".vol.json", ".jsonl", ".json"}) {
    if (s.ends_with(suffix)) return s.substr(0, s.size() - std::string(suffix).size());
  }
  return s;
}

fs::path image_out(const fs::path& stem) { return image_header_path(stem); }

void maybe_pgm(const RadiographImage& img, const fs::path& pgm, RunRecord& run) {
  if (pgm.empty()) return;
  export_pgm16(img, pgm);
  run.outputs.push_back(pgm);
}

void prepare_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

Preprocess resolve_preprocess(const std::string& flag, const ModelWeights& w) {
  if (flag != "model") return preprocess_from_string(flag);
  const auto it = w.attributes.find(kPreprocessAttr);
  if (it == w.attributes.end()) return Preprocess::standardize;
  return it->second == 1.0 ? Preprocess::he_clahe : Preprocess::standardize;
}

RadiographImage as_unit(RadiographImage img) {
  if (img.tag() == RangeTag::unit) return img;
  return minmax_normalize(img);
}

// ---------------------------------------------------------------------------

Command phantom_command(CLI::App& app, Common& common) {
  struct Args {
    fs::path out;
    fs::path spec;
    std::string kind = "thorax";
    int size = 64;
    int count = 1;
    int nodules = 1;
    std::string name = "phantom";
  };
  auto a = std::make_shared<Args>();
  CLI::App* sub = app.add_subcommand("phantom", "Generate synthetic CT phantoms with nodule annotations");
  sub->add_option("--out", a->out, "Output directory")->required();
  sub->add_option("--spec", a->spec, "Phantom spec JSON (overrides --kind/--size/--nodules)");
  sub->add_option("--kind", a->kind, "Built-in phantom")->check(CLI::IsMember({"thorax", "soft_tissue", "empty"}));
  sub->add_option("--size", a->size, "Cube edge in voxels")->check(CLI::Range(1, 4096));
  sub->add_option("--count", a->count, "Number of phantoms; phantom i uses seed + i")->check(CLI::Range(1, 100000));
  sub->add_option("--nodules", a->nodules, "Random nodules per thorax phantom")->check(CLI::NonNegativeNumber);
  sub->add_option("--name", a->name, "File name prefix");
  add_common(sub, common);

  auto run = [a](const Common& c) {
    RunRecord rec;
    fs::create_directories(a->out);
    std::optional<PhantomSpec> from_file;
    if (!a->spec.empty()) {
      from_file = load_phantom_spec(a->spec);
      rec.inputs.push_back(a->spec);
    }
    for (int i = 0; i < a->count; ++i) {
      const std::uint64_t seed = c.seed + static_cast<std::uint64_t>(i);
      PhantomSpec spec;
      const Dims3 dims{a->size, a->size, a->size};
      if (from_file) {
        spec = *from_file;
        spec.seed = from_file->seed + static_cast<std::uint64_t>(i);
      } else if (a->kind == "thorax") {
        spec = PhantomSpec::thorax(dims, seed, a->nodules);
      } else if (a->kind == "soft_tissue") {
        spec = PhantomSpec::soft_tissue_only(dims, seed);
      } else {
        spec = PhantomSpec::empty(dims);
        spec.seed = seed;
      }
      char suffix[16];
      std::snprintf(suffix, sizeof suffix, "_%03d", i);
      const fs::path stem = a->out / (a->count == 1 ? a->name : a->name + suffix);
      const Phantom p = generate_phantom(spec);
      save_volume(p.volume, stem);
      save_annotations(p.nodules, stem.string() + ".nod.json");
      save_phantom_spec(spec, stem.string() + ".spec.json");
      rec.outputs.push_back(volume_header_path(stem));
      rec.outputs.push_back(stem.string() + ".nod.json");
      rec.outputs.push_back(stem.string() + ".spec.json");
    }
    rec.manifest = a->out / "run.json";
    return rec;
  };
  return {sub, run};
}

Command drr_command(CLI::App& app, Common& common) {
  struct Args {
    fs::path volume;
    fs::path out;
    fs::path raw_out;
    fs::path pgm;
    std::string mode = "source";
    ProjectorConfig proj;
    Window window;
  };
  auto a = std::make_shared<Args>();
  CLI::App* sub = app.add_subcommand("drr", "Project a CT volume to a normalized DRR");
  sub->add_option("--volume", a->volume, "Input volume (.vol.json or stem)")->required();
  sub->add_option("--out", a->out, "Output image stem")->required();
  sub->add_option("--mode", a->mode, "source: whole volume; bone: bone-windowed volume")
      ->check(CLI::IsMember({"source", "bone"}));
  sub->add_option("--raw-out", a->raw_out, "Also write the raw exp(beta * mu) intensity image");
  sub->add_option("--pgm", a->pgm, "Also export the DRR as 16-bit PGM");
  add_projector(sub, a->proj);
  add_window(sub, a->window);
  add_common(sub, common);

  auto run = [a](const Common&) {
    RunRecord rec;
    a->proj.validate();
    const Volume vol = load_volume(a->volume);
    rec.inputs.push_back(volume_header_path(a->volume));
    const Volume src = a->mode == "bone"
                           ? bone_window(vol, to_hu(a->window.lo, "window-lo"), to_hu(a->window.hi, "window-hi"))
                           : vol;
    const RadiographImage img = drr(src, a->proj);
    prepare_parent(a->out);
    save_image(img, a->out);
    rec.outputs.push_back(image_out(a->out));
    if (!a->raw_out.empty()) {
      prepare_parent(a->raw_out);
      save_image(drr_raw(src, a->proj), a->raw_out);
      rec.outputs.push_back(image_out(a->raw_out));
    }
    maybe_pgm(img, a->pgm, rec);
    rec.manifest = manifest_next_to(a->out);
    return rec;
  };
  return {sub, run};
}

Command pairs_command(CLI::App& app, Common& common) {
  struct Args {
    fs::path volumes;
    fs::path out;
    ProjectorConfig proj;
    Window window;
    SplitSpec split;
  };
  auto a = std::make_shared<Args>();
  CLI::App* sub = app.add_subcommand(
      "pairs", "Build source/target/mask pairs from a directory of volumes and split them");
  sub->add_option("--volumes", a->volumes, "Directory of .vol.json volumes (with optional .nod.json)")->required();
  sub->add_option("--out", a->out, "Output directory")->required();
  add_projector(sub, a->proj);
  add_window(sub, a->window);
  sub->add_option("--split-train", a->split.train, "Training fraction");
  sub->add_option("--split-val", a->split.val, "Validation fraction");
  sub->add_option("--split-test", a->split.test, "Test fraction");
  add_common(sub, common);

  auto run = [a](const Common& c) {
    RunRecord rec;
    a->proj.validate();
    a->split.seed = c.seed;
    a->split.validate();
    const Hu lo = to_hu(a->window.lo, "window-lo");
    const Hu hi = to_hu(a->window.hi, "window-hi");
    if (!fs::is_directory(a->volumes)) throw LoadError("volumes", "not a directory: " + a->volumes.string());
    std::vector<fs::path> headers;
    for (const auto& e : fs::directory_iterator(a->volumes)) {
      if (e.path().string().ends_with(".vol.json")) headers.push_back(e.path());
    }
    std::sort(headers.begin(), headers.end());
    if (headers.empty()) throw LoadError("volumes", "no .vol.json files in " + a->volumes.string());

    fs::create_directories(a->out / "pairs");
    std::vector<DatasetEntry> entries;
    for (const auto& h : headers) {
      const std::string stem = strip_known_suffix(h.filename());
      const Volume vol = load_volume(h);
      const fs::path nod = a->volumes / (stem + ".nod.json");
      std::vector<NoduleAnnotation> nodules;
      if (fs::exists(nod)) {
        nodules = load_annotations(nod);
        rec.inputs.push_back(nod);
      }
      rec.inputs.push_back(h);
      entries.push_back(save_pair(make_training_pair(vol, nodules, a->proj, lo, hi), a->out / "pairs" / stem));
    }
    const auto split = split_dataset(entries, a->split);
    save_dataset(entries, a->out / "dataset.json");
    save_dataset(split.train, a->out / "train.json");
    save_dataset(split.val, a->out / "val.json");
    save_dataset(split.test, a->out / "test.json");
    for (const char* f : {"dataset.json", "train.json", "val.json", "test.json"}) rec.outputs.push_back(a->out / f);
    rec.extra = {{"pairs", entries.size()},
                 {"train", split.train.size()},
                 {"val", split.val.size()},
                 {"test", split.test.size()}};
    std::cout << "pairs " << entries.size() << " train " << split.train.size() << " val " << split.val.size()
              << " test " << split.test.size() << "\n";
    rec.manifest = a->out / "run.json";
    return rec;
  };
  return {sub, run};
}

Command train_command(CLI::App& app, Common& common) {
  struct Args {
    fs::path dataset;
    fs::path val;
    fs::path out;
    fs::path history;
    fs::path loss_net;
    std::string loss = "l1";
    std::string preprocess = "standardize";
    long max_steps = 0;
    TrainConfig cfg;
    UNetConfig model;
  };
  auto a = std::make_shared<Args>();
  CLI::App* sub = app.add_subcommand("train", "Train the bone-extraction U-Net");
  sub->add_option("--dataset", a->dataset, "Training dataset.json")->required();
  sub->add_option("--val", a->val, "Validation dataset.json");
  sub->add_option("--out", a->out, "Output weights stem")->required();
  sub->add_option("--history", a->history, "Loss history JSONL (default: <out>.history.jsonl)");
  sub->add_option("--epochs", a->cfg.epochs, "Passes over the training set")->check(CLI::NonNegativeNumber);
  sub->add_option("--batch-size", a->cfg.batch_size, "Minibatch size")->check(CLI::PositiveNumber);
  sub->add_option("--max-steps", a->max_steps, "Stop after this many optimizer steps (0: no limit)")
      ->check(CLI::NonNegativeNumber);
  sub->add_option("--lr", a->cfg.adam.learning_rate, "ADAM learning rate");
  sub->add_option("--beta1", a->cfg.adam.beta1, "ADAM first-moment decay");
  sub->add_option("--beta2", a->cfg.adam.beta2, "ADAM second-moment decay");
  sub->add_option("--adam-eps", a->cfg.adam.epsilon, "ADAM epsilon");
  sub->add_option("--loss", a->loss, "Training loss")->check(CLI::IsMember({"l1", "weighted_l1", "perceptual"}));
  sub->add_option("--nodule-weight", a->cfg.nodule_weight, "Extra weight w on nodule pixels (weighted_l1)");
  sub->add_option("--loss-net", a->loss_net, "Loss-network weights (perceptual; default: random from --seed)");
  sub->add_option("--preprocess", a->preprocess, "Source preprocessing")
      ->check(CLI::IsMember({"standardize", "he_clahe"}));
  sub->add_option("--augment", a->cfg.augment_enabled, "Enable training augmentation");
  sub->add_option("--flip-prob", a->cfg.augment.horizontal_flip, "Horizontal flip probability");
  sub->add_option("--aug-noise", a->cfg.augment.noise_std, "Augmentation noise sigma");
  sub->add_option("--bias-range", a->cfg.augment.bias_range, "Intensity offset range (fraction of image range)");
  sub->add_option("--zoom-range", a->cfg.augment.zoom_range, "Zoom range (fraction)");
  sub->add_option("--sharpen-alpha", a->cfg.augment.sharpen_alpha, "Unsharp-mask strength");
  sub->add_option("--sharpen-prob", a->cfg.augment.sharpen_probability, "Sharpening probability");
  sub->add_option("--rotation", a->cfg.augment.rotation_deg, "Maximum rotation (degrees)");
  sub->add_option("--shift-range", a->cfg.augment.shift_range, "Maximum shift (fraction of size)");
  sub->add_option("--input-size", a->model.input_size, "Model input side; must equal the image size");
  sub->add_option("--base-filters", a->model.base_filters, "Filters in the first level");
  sub->add_option("--depth", a->model.depth, "Encoder levels");
  sub->add_option("--dilation", a->model.bottleneck_dilation, "Bottleneck dilation");
  sub->add_option("--noise-std", a->model.noise_std, "Training-time input noise sigma");
  sub->add_option("--output-scale", a->model.output_scale, "Target scale inside the Tanh range");
  add_common(sub, common);

  auto run = [a](const Common& c) {
    RunRecord rec;
    TrainConfig cfg = a->cfg;
    cfg.loss = loss_kind_from_string(a->loss);
    cfg.preprocess = preprocess_from_string(a->preprocess);
    cfg.seed = c.seed;
    cfg.augment.seed = c.seed;
    if (a->max_steps > 0) cfg.max_steps = a->max_steps;
    cfg.validate();
    UNetConfig mc = a->model;
    mc.init_seed = c.seed;

    const auto train_set = load_pairs(load_dataset(a->dataset));
    rec.inputs.push_back(a->dataset);
    std::vector<TrainingPair> val_set;
    if (!a->val.empty()) {
      val_set = load_pairs(load_dataset(a->val));
      rec.inputs.push_back(a->val);
    }
    if (!train_set.empty() && train_set.front().source.width() != mc.input_size) {
      throw ConfigError("input-size", "model input " + std::to_string(mc.input_size) + " but images are " +
                                          std::to_string(train_set.front().source.width()) + " wide");
    }
    std::optional<LossNetwork<float>> net;
    if (cfg.loss == LossKind::perceptual) {
      if (!a->loss_net.empty()) {
        net = LossNetwork<float>::from_weights(load_weights(a->loss_net));
        rec.inputs.push_back(weights_header_path(a->loss_net));
      } else {
        net = LossNetwork<float>::random(c.seed);
      }
    }
    UNet<float> model(mc);
    std::cout << "training " << model.parameter_count() << " parameters on " << train_set.size() << " pairs\n";
    const auto log = [&](const EpochRecord& e) {
      std::cout << "epoch " << e.epoch << "/" << cfg.epochs << " steps " << e.steps << " train " << e.train_loss;
      if (e.val_loss) std::cout << " val " << *e.val_loss;
      std::cout << "\n" << std::flush;
    };
    const TrainHistory h = train(model, train_set, val_set, cfg, net ? &*net : nullptr, log);

    ModelWeights w = model.to_weights();
    w.attributes[kPreprocessAttr] = cfg.preprocess == Preprocess::he_clahe ? 1.0 : 0.0;
    prepare_parent(a->out);
    save_weights(w, a->out);
    const fs::path history = a->history.empty() ? fs::path(strip_known_suffix(a->out) + ".history.jsonl")
                                                : a->history;
    prepare_parent(history);
    std::ofstream(history) << h.to_jsonl(!c.deterministic);
    rec.outputs.push_back(weights_header_path(a->out));
    rec.outputs.push_back(history);
    rec.extra = {{"steps", h.step_losses.size()},
                 {"final_train_loss", h.epochs.empty() ? json(nullptr) : json(h.epochs.back().train_loss)}};
    rec.manifest = manifest_next_to(a->out);
    return rec;
  };
  return {sub, run};
}

struct ModelArgs {
  fs::path model;
  fs::path image;
  fs::path out;
  fs::path pgm;
  std::string preprocess = "model";
};

void add_model_args(CLI::App* sub, ModelArgs& a) {
  sub->add_option("--model", a.model, "Trained weights")->required();
  sub->add_option("--image", a.image, "Input radiograph (.img.json or stem)")->required();
  sub->add_option("--out", a.out, "Output image stem")->required();
  sub->add_option("--pgm", a.pgm, "Also export the output as 16-bit PGM");
  sub->add_option("--preprocess", a.preprocess, "Source preprocessing (model: as recorded at training)")
      ->check(CLI::IsMember({"model", "standardize", "he_clahe"}));
}

Command predict_command(CLI::App& app, Common& common) {
  auto a = std::make_shared<ModelArgs>();
  CLI::App* sub = app.add_subcommand("predict", "Predict the bone image of a radiograph");
  add_model_args(sub, *a);
  add_common(sub, common);
  auto run = [a](const Common&) {
    RunRecord rec;
    const ModelWeights w = load_weights(a->model);
    const auto model = UNet<float>::from_weights(w);
    const RadiographImage bone = predict_bone(model, load_image(a->image), resolve_preprocess(a->preprocess, w));
    rec.inputs = {weights_header_path(a->model), image_header_path(a->image)};
    prepare_parent(a->out);
    save_image(bone, a->out);
    rec.outputs.push_back(image_out(a->out));
    maybe_pgm(bone, a->pgm, rec);
    rec.manifest = manifest_next_to(a->out);
    return rec;
  };
  return {sub, run};
}

Command enhance_command(CLI::App& app, Common& common) {
  struct Args : ModelArgs {
    FusionConfig fusion;
    fs::path bone_out;
  };
  auto a = std::make_shared<Args>();
  CLI::App* sub = app.add_subcommand("enhance", "Fuse the predicted bone image into the radiograph");
  add_model_args(sub, *a);
  sub->add_option("--weight", a->fusion.weight, "Fusion weight w in cxr + w * bone");
  sub->add_option("--clamp", a->fusion.clamp, "Clamp the fused image to [0, 1]");
  sub->add_option("--bone-out", a->bone_out, "Also write the predicted bone image");
  add_common(sub, common);
  auto run = [a](const Common&) {
    RunRecord rec;
    a->fusion.validate();
    const ModelWeights w = load_weights(a->model);
    const auto model = UNet<float>::from_weights(w);
    const RadiographImage cxr = as_unit(load_image(a->image));
    const RadiographImage bone = predict_bone(model, cxr, resolve_preprocess(a->preprocess, w));
    const RadiographImage fused = fuse(cxr, bone, a->fusion);
    rec.inputs = {weights_header_path(a->model), image_header_path(a->image)};
    prepare_parent(a->out);
    save_image(fused, a->out);
    rec.outputs.push_back(image_out(a->out));
    if (!a->bone_out.empty()) {
      prepare_parent(a->bone_out);
      save_image(bone, a->bone_out);
      rec.outputs.push_back(image_out(a->bone_out));
    }
    maybe_pgm(fused, a->pgm, rec);
    rec.manifest = manifest_next_to(a->out);
    return rec;
  };
  return {sub, run};
}

Command eval_command(CLI::App& app, Common& common) {
  struct Args {
    fs::path dataset;
    fs::path model;
    std::string baseline;
    fs::path out;
    fs::path table;
    std::string label;
    std::string preprocess = "model";
  };
  auto a = std::make_shared<Args>();
  CLI::App* sub = app.add_subcommand("eval", "Score predictions against bone targets (RMSE, PSNR, SSIM, MSSIM)");
  sub->add_option("--dataset", a->dataset, "Evaluation dataset.json")->required();
  auto* model = sub->add_option("--model", a->model, "Trained weights");
  auto* baseline = sub->add_option("--baseline", a->baseline, "Score a fixed predictor instead of a model")
                       ->check(CLI::IsMember({"source", "target"}));
  model->excludes(baseline);
  sub->add_option("--out", a->out, "Metric report JSON")->required();
  sub->add_option("--table", a->table, "Also write the text table here");
  sub->add_option("--label", a->label, "Row label in the table (default: model or baseline name)");
  sub->add_option("--preprocess", a->preprocess, "Source preprocessing (model: as recorded at training)")
      ->check(CLI::IsMember({"model", "standardize", "he_clahe"}));
  add_common(sub, common);
  auto run = [a](const Common&) {
    RunRecord rec;
    if (a->model.empty() && a->baseline.empty()) throw ConfigError("model", "give --model or --baseline");
    const auto pairs = load_pairs(load_dataset(a->dataset));
    rec.inputs.push_back(a->dataset);
    if (pairs.empty()) throw ConfigError("dataset", "no pairs to evaluate");
    const auto& first = pairs.front().source;
    const MetricConfig mc = MetricConfig::for_image_size(std::min(first.width(), first.height()));
    MetricReport report;
    std::string label = a->label;
    if (!a->baseline.empty()) {
      const bool src = a->baseline == "source";
      report = evaluate([src](const TrainingPair& p) { return src ? p.source : p.target; }, pairs, mc);
      if (label.empty()) label = a->baseline;
    } else {
      const ModelWeights w = load_weights(a->model);
      report = evaluate(UNet<float>::from_weights(w), pairs, mc, resolve_preprocess(a->preprocess, w));
      rec.inputs.push_back(weights_header_path(a->model));
      if (label.empty()) label = fs::path(strip_known_suffix(a->model)).filename().string();
    }
    const std::string table = MetricReport::format_table({{label, report}});
    std::cout << table;
    prepare_parent(a->out);
    std::ofstream(a->out) << report.to_json() << "\n";
    rec.outputs.push_back(a->out);
    if (!a->table.empty()) {
      prepare_parent(a->table);
      std::ofstream(a->table) << table;
      rec.outputs.push_back(a->table);
    }
    rec.extra = {{"scales", mc.scales()}, {"pairs", pairs.size()}};
    rec.manifest = manifest_next_to(a->out);
    return rec;
  };
  return {sub, run};
}

Command gradcheck_command(CLI::App& app, Common& common) {
  struct Args {
    fs::path out = "gradcheck.json";
    std::size_t model_coords = 3;
    bool skip_model = false;
    bool failed = false;
  };
  auto a = std::make_shared<Args>();
  CLI::App* sub = app.add_subcommand("gradcheck", "Finite-difference check of every autodiff op and the toy U-Net");
  sub->add_option("--out", a->out, "Report JSON");
  sub->add_option("--model-coords", a->model_coords, "Sampled coordinates per model tensor")
      ->check(CLI::PositiveNumber);
  sub->add_flag("--skip-model", a->skip_model, "Only check the op suite");
  add_common(sub, common);
  auto run = [a](const Common& c) {
    RunRecord rec;
    auto cases = op_gradchecks(c.seed);
    if (!a->skip_model) cases.push_back(model_gradcheck(c.seed, a->model_coords));
    json report = json::array();
    a->failed = false;
    for (const auto& gc : cases) {
      std::printf("%s %-24s max_rel_err %.3e (tol %.0e, %zu coords)\n", gc.passed() ? "PASS" : "FAIL",
                  gc.name.c_str(), gc.result.max_relative_error, gc.tolerance, gc.result.coordinates_checked);
      a->failed = a->failed || !gc.passed();
      report.push_back({{"name", gc.name},
                        {"passed", gc.passed()},
                        {"tolerance", gc.tolerance},
                        {"max_relative_error", gc.result.max_relative_error},
                        {"coordinates", gc.result.coordinates_checked},
                        {"worst_input", gc.result.worst_input},
                        {"worst_index", gc.result.worst_index}});
    }
    prepare_parent(a->out);
    std::ofstream(a->out) << json{{"cases", report}, {"passed", !a->failed}}.dump(2) << "\n";
    rec.outputs.push_back(a->out);
    rec.extra = {{"passed", !a->failed}};
    rec.manifest = manifest_next_to(a->out);
    return rec;
  };
  return {sub, run, [a] { return a->failed ? 1 : 0; }};
}

}  // namespace

fs::path manifest_next_to(const fs::path& output) {
  if (fs::is_directory(output)) return output / "run.json";
  return strip_known_suffix(output) + ".run.json";
}

std::vector<Command> register_commands(CLI::App& app, Common& common) {
  return {phantom_command(app, common), drr_command(app, common),     pairs_command(app, common),
          train_command(app, common),   predict_command(app, common), enhance_command(app, common),
          eval_command(app, common),    gradcheck_command(app, common)};
}

}  // namespace osteoforge::cli
