#include "cli/commands.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cli/config.hpp"
#include "cli/manifest.hpp"
#include "phaseseg/accumulator.hpp"
#include "phaseseg/annotate.hpp"
#include "phaseseg/dataset_io.hpp"
#include "phaseseg/evalmetrics.hpp"
#include "phaseseg/losses.hpp"
#include "phaseseg/mstcn.hpp"
#include "phaseseg/synthgen.hpp"
#include "phaseseg/trainer.hpp"

namespace phaseseg::cli {

namespace fs = std::filesystem;

namespace {

struct Flag {
  const char* name;  ///< e.g. "--seed"
  const char* key;   ///< config key it overrides
  const char* help;
};

constexpr Flag kCommon[] = {
    {"--seed", "seed", "random seed"},
    {"--out", "out", "output directory"},
};

const std::map<std::string, std::vector<Flag>>& command_flags() {
  static const std::map<std::string, std::vector<Flag>> flags = {
      {"gen-synth",
       {{"--profile", "profile", "default | imbalanced | noisy"},
        {"--train-count", "train_count", "training sequences"},
        {"--val-count", "val_count", "validation sequences"},
        {"--test-count", "test_count", "test sequences"},
        {"--dim", "dim", "embedding dimension"},
        {"--noise-sigma", "noise_sigma", "feature noise sigma"},
        {"--label-noise", "label_noise_rate", "adjacent-phase imitation rate"}}},
      {"train",
       {{"--ssl-features", "ssl_features", "dataset directory with train/ and val/"},
        {"--loss", "loss", "bce | focal"},
        {"--lambda", "lambda", "smoothing weight"},
        {"--epochs", "epochs", "maximum epochs"},
        {"--learning-rate", "learning_rate", "base learning rate"},
        {"--sampling", "sampling", "uniform | balanced"},
        {"--precision", "precision", "32 | 64"}}},
      {"eval",
       {{"--ssl-features", "ssl_features", "dataset directory or feature file"},
        {"--model", "model", "model file"},
        {"--gt", "gt", "ground-truth label CSV"},
        {"--pred", "pred", "predicted label CSV (compares two label files)"},
        {"--post", "post", "none | accumulator"},
        {"--threshold", "threshold", "accumulator threshold"},
        {"--split", "split", "dataset split to evaluate"}}},
      {"segment",
       {{"--ssl-features", "ssl_features", "feature file"},
        {"--model", "model", "model file"},
        {"--gt", "gt", "optional ground-truth label CSV for the ribbon"},
        {"--post", "post", "none | accumulator"},
        {"--threshold", "threshold", "accumulator threshold"}}},
      {"parse-notes",
       {{"--notes", "notes", "JSONL notes file"},
        {"--fps", "fps", "frames per second of the label timeline"},
        {"--frames", "frames", "number of frames T"},
        {"--ssl-features", "ssl_features", "feature file whose row count gives T"},
        {"--lexicon", "lexicon", "keyword lexicon file"},
        {"--expanded", "expanded", "write one row per frame"}}},
  };
  return flags;
}

struct Context {
  RunConfig cfg;
  RunManifest manifest;
  fs::path out_dir;
  std::ostream& out;
};

void add_input(Context& ctx, const std::string& role, const fs::path& path) {
  if (!fs::exists(path)) throw IoError(role + " not found: " + path.string());
  ctx.manifest.inputs.push_back({role, path.string(), sha256_tree(path)});
}

void add_artifact(Context& ctx, const std::string& role, const fs::path& path) {
  ctx.manifest.artifacts.push_back({role, path.string(), {}});
}

fs::path required_path(const RunConfig& cfg, const std::string& key, const std::string& flag) {
  if (cfg.empty(key)) throw ValidationError("missing " + flag);
  return cfg.str(key);
}

std::vector<std::string> phase_names(int classes) {
  const auto onto = PhaseOntology::pituitary();
  std::vector<std::string> names;
  for (int c = 0; c < classes; ++c) {
    names.push_back(c < static_cast<int>(onto.size()) ? onto.name(c) : "phase" + std::to_string(c));
  }
  return names;
}

AccumulatorConfig accumulator_config(const RunConfig& cfg) {
  AccumulatorConfig a;
  a.threshold = static_cast<int>(cfg.integer("threshold"));
  a.retroactive = cfg.boolean("retroactive");
  a.allow_skip = cfg.boolean("allow_skip");
  a.validate();
  return a;
}

bool use_accumulator(const RunConfig& cfg) {
  const auto& p = cfg.str("post");
  if (p == "accumulator") return true;
  if (p == "none") return false;
  throw ValidationError("post must be none or accumulator, got '" + p + "'");
}

PhaseTimeline read_labels_for(const fs::path& path, Eigen::Index frames, int classes) {
  auto labels = read_labels(path, frames);
  for (int l : labels) {
    if (l < kIgnoreLabel || l >= classes) {
      throw ValidationError(path.string() + ": phase id " + std::to_string(l) + " outside [0," +
                            std::to_string(classes) + ")");
    }
  }
  return labels;
}

// ---------------------------------------------------------------- gen-synth

SynthConfig synth_config(const RunConfig& cfg) {
  const auto& profile = cfg.str("profile");
  SynthConfig sc;
  if (profile == "default") {
    sc = SynthConfig::default_profile();
  } else if (profile == "imbalanced") {
    sc = SynthConfig::imbalanced_profile();
  } else if (profile == "noisy") {
    sc = SynthConfig::noisy_profile();
  } else {
    throw ValidationError("unknown synthetic profile '" + profile + "'");
  }
  sc.seed = cfg.unsigned_integer("seed");
  if (!cfg.empty("dim")) sc.dim = static_cast<int>(cfg.integer("dim"));
  if (!cfg.empty("noise_sigma")) sc.noise_sigma = cfg.real("noise_sigma");
  if (!cfg.empty("label_noise_rate")) sc.label_noise_rate = cfg.real("label_noise_rate");
  if (!cfg.empty("boundary_blur")) sc.boundary_blur = static_cast<int>(cfg.integer("boundary_blur"));
  sc.include_all_phases = cfg.boolean("include_all_phases");
  sc.validate();
  return sc;
}

void cmd_gen_synth(Context& ctx) {
  const auto sc = synth_config(ctx.cfg);
  const auto n_train = static_cast<std::size_t>(ctx.cfg.unsigned_integer("train_count"));
  const auto n_val = static_cast<std::size_t>(ctx.cfg.unsigned_integer("val_count"));
  const auto n_test = static_cast<std::size_t>(ctx.cfg.unsigned_integer("test_count"));
  const auto splits = generate_splits(sc, n_train, n_val, n_test);
  write_split(ctx.out_dir, "train", splits.train, 0);
  write_split(ctx.out_dir, "val", splits.val, n_train);
  write_split(ctx.out_dir, "test", splits.test, n_train + n_val);
  for (const char* s : {"train", "val", "test"}) add_artifact(ctx, s, ctx.out_dir / s);
  ctx.out << "wrote " << n_train << "/" << n_val << "/" << n_test
          << " train/val/test sequences to " << ctx.out_dir.string() << '\n';
}

// -------------------------------------------------------------------- train

template <typename Scalar>
std::vector<LabeledSequence<Scalar>> load_split(const fs::path& root, const std::string& split,
                                                int classes) {
  std::vector<LabeledSequence<Scalar>> out;
  for (const auto& e : list_split(root, split)) {
    MatrixD x = read_features(e.features);
    auto labels = read_labels_for(e.labels, x.rows(), classes);
    out.push_back({e.id, FeatureSequence<Scalar>(x.template cast<Scalar>()), std::move(labels)});
  }
  return out;
}

StageConfig stage_config(const RunConfig& cfg, int input_dim) {
  StageConfig sc;
  sc.input_dim = input_dim;
  sc.channels = static_cast<int>(cfg.integer("channels"));
  sc.classes = static_cast<int>(cfg.integer("classes"));
  sc.stages = static_cast<int>(cfg.integer("stages"));
  sc.layers = static_cast<int>(cfg.integer("layers"));
  sc.refinement_layers = static_cast<int>(cfg.integer("refinement_layers"));
  sc.kernel_size = static_cast<int>(cfg.integer("kernel_size"));
  const auto& fusion = cfg.str("fusion");
  if (fusion == "sum") {
    sc.fusion = Fusion::kSum;
  } else if (fusion == "concat") {
    sc.fusion = Fusion::kConcat;
  } else {
    throw ValidationError("fusion must be sum or concat, got '" + fusion + "'");
  }
  sc.validate();
  return sc;
}

TrainConfig train_config(const RunConfig& cfg) {
  TrainConfig tc;
  tc.epochs = static_cast<int>(cfg.integer("epochs"));
  tc.learning_rate = cfg.real("learning_rate");
  tc.batch_size = static_cast<int>(cfg.integer("batch_size"));
  tc.patience = static_cast<int>(cfg.integer("patience"));
  tc.seed = cfg.unsigned_integer("seed");
  tc.weight_decay = cfg.real("weight_decay");
  const auto& sampling = cfg.str("sampling");
  if (sampling == "uniform") {
    tc.sampling = SamplingMode::kUniform;
  } else if (sampling == "balanced") {
    tc.sampling = SamplingMode::kClassBalanced;
  } else {
    throw ValidationError("sampling must be uniform or balanced, got '" + sampling + "'");
  }
  const auto& alpha = cfg.str("alpha");
  if (alpha == "uniform") {
    tc.alpha_mode = AlphaMode::kUniform;
  } else if (alpha == "inverse") {
    tc.alpha_mode = AlphaMode::kInverseFrequency;
  } else {
    throw ValidationError("alpha must be uniform or inverse, got '" + alpha + "'");
  }
  const auto& loss = cfg.str("loss");
  if (loss == "focal") {
    tc.objective.loss = ClassificationLoss::kFocal;
  } else if (loss == "bce") {
    tc.objective.loss = ClassificationLoss::kCrossEntropy;
  } else {
    throw ValidationError("loss must be bce or focal, got '" + loss + "'");
  }
  tc.objective.focal.gamma = cfg.real("gamma");
  tc.objective.lambda = cfg.real("lambda");
  if (!cfg.empty("smoothing_clamp")) tc.objective.smoothing.clamp = cfg.real("smoothing_clamp");
  tc.validate();
  return tc;
}

nlohmann::json report_json(const TrainReport& r) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : r.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_total", e.train.total},
                      {"train_focal", e.train.focal},
                      {"train_smooth", e.train.smooth},
                      {"val_loss", e.val_loss},
                      {"val_accuracy", e.val_accuracy},
                      {"learning_rate", e.learning_rate}});
  }
  return {{"epochs", epochs},
          {"stop_epoch", r.stop_epoch},
          {"best_epoch", r.best_epoch},
          {"best_val_loss", r.best_val_loss},
          {"early_stopped", r.early_stopped},
          {"diverged", r.diverged},
          {"message", r.message}};
}

template <typename Scalar>
int train_typed(Context& ctx, const fs::path& data) {
  const int classes = static_cast<int>(ctx.cfg.integer("classes"));
  const auto train = load_split<Scalar>(data, "train", classes);
  const auto val = load_split<Scalar>(data, "val", classes);
  const StageConfig sc = stage_config(ctx.cfg, static_cast<int>(train.front().features.channels()));
  const TrainConfig tc = train_config(ctx.cfg);

  auto model = init_model<Scalar>(sc, tc.seed);
  auto result = fit<Scalar>(std::move(model), train, val, tc);

  fs::create_directories(ctx.out_dir);
  const fs::path model_path = ctx.out_dir / "model.mtpp";
  const fs::path ckpt_path = ctx.out_dir / "last.ckpt";
  const fs::path report_path = ctx.out_dir / "train_report.json";
  {
    std::ofstream rep(report_path, std::ios::trunc);
    if (!rep) throw IoError("cannot open " + report_path.string() + " for writing");
    rep << report_json(result.report).dump(2) << '\n';
  }
  add_artifact(ctx, "train_report", report_path);
  if (result.report.diverged) {
    ctx.out << "training diverged at epoch " << result.report.stop_epoch << ": "
            << result.report.message << '\n';
    throw NumericError("training diverged: " + result.report.message);
  }
  save_model(result.best, model_path.string());
  save_checkpoint(ckpt_path.string(), result.last, result.optimizer);
  add_artifact(ctx, "model", model_path);
  add_artifact(ctx, "checkpoint", ckpt_path);

  const auto& best = result.report.epochs.at(static_cast<std::size_t>(result.report.best_epoch - 1));
  ctx.out << "trained " << result.report.stop_epoch << " epochs"
          << (result.report.early_stopped ? " (early stop)" : "") << "; best epoch "
          << result.report.best_epoch << " val loss " << best.val_loss << " val accuracy "
          << best.val_accuracy << '\n';
  ctx.out << "model: " << model_path.string() << '\n';
  return kExitOk;
}

void cmd_train(Context& ctx) {
  const fs::path data = required_path(ctx.cfg, "ssl_features", "--ssl-features");
  if (!fs::is_directory(data)) {
    throw ValidationError("--ssl-features for train must be a dataset directory");
  }
  add_input(ctx, "ssl_features", data);
  const auto precision = ctx.cfg.integer("precision");
  if (precision == 32) {
    train_typed<float>(ctx, data);
  } else if (precision == 64) {
    train_typed<double>(ctx, data);
  } else {
    throw ValidationError("precision must be 32 or 64");
  }
}

// ------------------------------------------------------------ eval / segment

struct Decoded {
  PhaseTimeline raw;
  PhaseTimeline final;
};

template <typename Scalar>
Decoded decode_typed(const Model<Scalar>& model, const MatrixD& x, const RunConfig& cfg) {
  const auto probs = predict(model, FeatureSequence<Scalar>(x.template cast<Scalar>()));
  Decoded d;
  d.raw = argmax_decode(probs);
  d.final = use_accumulator(cfg) ? smooth_timeline(d.raw, accumulator_config(cfg)) : d.raw;
  return d;
}

/// Loads a model file in whichever width it was stored.
class LoadedModel {
 public:
  explicit LoadedModel(const fs::path& path) {
    const auto info = peek_model(path.string());
    if (info.scalar_bytes == 8) {
      f64_ = load_model<double>(path.string());
    } else {
      f32_ = load_model<float>(path.string());
    }
  }
  const StageConfig& config() const { return f64_ ? f64_->config : f32_->config; }
  Decoded decode(const MatrixD& x, const RunConfig& cfg) const {
    if (x.cols() != config().input_dim) {
      throw ShapeError("features have " + std::to_string(x.cols()) + " channels, model expects " +
                       std::to_string(config().input_dim));
    }
    return f64_ ? decode_typed(*f64_, x, cfg) : decode_typed(*f32_, x, cfg);
  }

 private:
  std::optional<Model<float>> f32_;
  std::optional<Model<double>> f64_;
};

void write_report(Context& ctx, const MetricReport& r, std::span<const std::string> names,
                  nlohmann::json extra) {
  auto j = to_json(r, names);
  for (auto& [k, v] : extra.items()) j[k] = v;
  fs::create_directories(ctx.out_dir);
  const fs::path json_path = ctx.out_dir / "report.json";
  const fs::path txt_path = ctx.out_dir / "report.txt";
  std::ofstream js(json_path, std::ios::trunc);
  std::ofstream txt(txt_path, std::ios::trunc);
  if (!js || !txt) throw IoError("cannot write reports to " + ctx.out_dir.string());
  js << j.dump(2) << '\n';
  const std::string table = to_table(r, names);
  txt << table;
  add_artifact(ctx, "report_json", json_path);
  add_artifact(ctx, "report_table", txt_path);
  ctx.out << table;
}

void cmd_eval(Context& ctx) {
  const auto& cfg = ctx.cfg;
  if (!cfg.empty("pred")) {
    const fs::path pred_path = cfg.str("pred");
    const fs::path gt_path = required_path(cfg, "gt", "--gt");
    add_input(ctx, "pred", pred_path);
    add_input(ctx, "gt", gt_path);
    const int classes = static_cast<int>(cfg.integer("classes"));
    const auto gt = read_labels_for(gt_path, -1, classes);
    const auto rows = read_label_rows(pred_path);
    if (rows.empty() || rows.back().frame >= static_cast<std::int64_t>(gt.size())) {
      throw ShapeError("prediction labels extend beyond the ground-truth timeline");
    }
    const auto pred = read_labels_for(pred_path, static_cast<Eigen::Index>(gt.size()), classes);
    std::vector<std::uint8_t> ignore(gt.size(), 0);
    for (std::size_t t = 0; t < gt.size(); ++t) ignore[t] = pred[t] == kIgnoreLabel;
    auto pred_filled = pred;
    for (auto& p : pred_filled) p = std::max(p, 0);
    const auto names = phase_names(classes);
    write_report(ctx, report(confusion(gt, pred_filled, classes, ignore)), names,
                 {{"segments", segment_count(pred)}});
    return;
  }

  const fs::path model_path = required_path(cfg, "model", "--model");
  const fs::path data = required_path(cfg, "ssl_features", "--ssl-features");
  add_input(ctx, "model", model_path);
  add_input(ctx, "ssl_features", data);
  const LoadedModel model(model_path);
  const int classes = model.config().classes;
  const auto names = phase_names(classes);

  std::vector<DatasetEntry> entries;
  if (fs::is_directory(data)) {
    entries = list_split(data, cfg.str("split"));
  } else {
    const fs::path gt = required_path(cfg, "gt", "--gt");
    add_input(ctx, "gt", gt);
    entries.push_back({data.stem().string(), data, gt});
  }

  ConfusionMatrix total(classes);
  nlohmann::json per_seq = nlohmann::json::array();
  const fs::path pred_dir = ctx.out_dir / "predictions";
  for (const auto& e : entries) {
    const MatrixD x = read_features(e.features);
    const auto gt = read_labels_for(e.labels, x.rows(), classes);
    const auto d = model.decode(x, cfg);
    const auto cm = confusion(gt, d.final, classes);
    for (int a = 0; a < classes; ++a) {
      for (int b = 0; b < classes; ++b) {
        if (cm(a, b)) total.add(a, b, cm(a, b));
      }
    }
    write_label_frames(pred_dir / (e.id + ".labels.csv"), d.final);
    per_seq.push_back({{"id", e.id},
                       {"frames", d.final.size()},
                       {"accuracy", cm.total() ? 100.0 * cm.trace() / cm.total() : 0.0},
                       {"segments", segment_count(d.final)},
                       {"segments_raw", segment_count(d.raw)}});
  }
  add_artifact(ctx, "predictions", pred_dir);
  write_report(ctx, report(total), names,
               {{"post", cfg.str("post")}, {"sequences", per_seq}});
}

void cmd_segment(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const fs::path model_path = required_path(cfg, "model", "--model");
  const fs::path features = required_path(cfg, "ssl_features", "--ssl-features");
  add_input(ctx, "model", model_path);
  add_input(ctx, "ssl_features", features);
  const LoadedModel model(model_path);
  const MatrixD x = read_features(features);
  const auto d = model.decode(x, cfg);
  const auto names = phase_names(model.config().classes);

  fs::create_directories(ctx.out_dir);
  const fs::path labels_path = ctx.out_dir / "segment.labels.csv";
  const fs::path svg_path = ctx.out_dir / "segment.svg";
  write_label_frames(labels_path, d.final);
  if (!cfg.empty("gt")) {
    const fs::path gt_path = cfg.str("gt");
    add_input(ctx, "gt", gt_path);
    const auto gt = read_labels_for(gt_path, x.rows(), model.config().classes);
    export_ribbon(gt, d.final, names, svg_path.string());
  } else {
    export_ribbon(d.raw, d.final, names, svg_path.string(), "argmax",
                  use_accumulator(cfg) ? "accumulator" : "prediction");
  }
  add_artifact(ctx, "labels", labels_path);
  add_artifact(ctx, "ribbon", svg_path);
  add_artifact(ctx, "ribbon_table", ctx.out_dir / "segment.csv");
  ctx.out << "segmented " << d.final.size() << " frames into " << segment_count(d.final)
          << " segments: " << labels_path.string() << '\n';
}

// -------------------------------------------------------------- parse-notes

void cmd_parse_notes(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const fs::path notes_path = required_path(cfg, "notes", "--notes");
  add_input(ctx, "notes", notes_path);
  auto onto = PhaseOntology::pituitary();
  if (!cfg.empty("lexicon")) {
    const fs::path lex = cfg.str("lexicon");
    add_input(ctx, "lexicon", lex);
    std::ifstream in(lex);
    if (!in) throw IoError("cannot open lexicon " + lex.string());
    onto.apply_lexicon(in);
  }
  std::ifstream in(notes_path);
  if (!in) throw IoError("cannot open notes " + notes_path.string());
  const auto notes = read_notes(in);
  const auto marks = extract_boundaries(notes, onto);
  if (marks.empty()) throw ValidationError("no phases found in " + notes_path.string());

  const double fps = cfg.real("fps");
  std::int64_t frames = 0;
  if (!cfg.empty("frames")) {
    frames = cfg.integer("frames");
  } else if (!cfg.empty("ssl_features")) {
    add_input(ctx, "ssl_features", cfg.str("ssl_features"));
    frames = read_features(cfg.str("ssl_features")).rows();
  } else {
    frames = seconds_to_frame(marks.back().seconds, fps) + 1;
  }
  const auto tl = build_timeline(marks, frames, fps);

  fs::create_directories(ctx.out_dir);
  const fs::path labels_path = ctx.out_dir / "labels.csv";
  if (cfg.boolean("expanded")) {
    write_label_frames(labels_path, tl.labels());
  } else {
    write_label_boundaries(labels_path, tl.boundaries);
  }
  add_artifact(ctx, "labels", labels_path);
  for (const auto& b : tl.boundaries) {
    ctx.out << b.frame << ' ' << onto.name(b.phase) << '\n';
  }
  ctx.out << "wrote " << tl.boundaries.size() << " boundaries over " << frames
          << " frames: " << labels_path.string() << '\n';
}

void verify_inputs(const RunManifest& previous, const RunManifest& current) {
  for (const auto& old : previous.inputs) {
    for (const auto& now : current.inputs) {
      if (old.role == now.role && old.path == now.path && old.sha256 != now.sha256) {
        throw ValidationError("input " + old.role + " (" + old.path +
                              ") changed since the manifest was written");
      }
    }
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Surgical phase segmentation toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  std::map<std::string, std::string> flag_values;
  std::map<CLI::App*, std::vector<Flag>> registered;
  std::string config_path;
  std::string manifest_path;
  std::vector<std::string> sets;

  for (const auto& [name, extra] : command_flags()) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "key = value configuration file");
    sub->add_option("--manifest", manifest_path, "re-run from a run_manifest.json");
    sub->add_option("--set", sets, "override any config key: key=value");
    std::vector<Flag> all(std::begin(kCommon), std::end(kCommon));
    all.insert(all.end(), extra.begin(), extra.end());
    for (const auto& f : all) sub->add_option(f.name, flag_values[f.name], f.help);
    registered[sub] = std::move(all);
  }

  std::vector<std::string> argv_store = {"phaseseg"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string command = sub->get_name();
  const auto started = std::chrono::steady_clock::now();

  std::optional<Context> ctx;
  int code = kExitOk;
  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg.load_file(config_path);
    std::optional<RunManifest> previous;
    if (!manifest_path.empty()) {
      previous = read_manifest(manifest_path);
      if (previous->command != command) {
        throw ValidationError("manifest records command '" + previous->command + "', not '" +
                              command + "'");
      }
      for (const auto& [key, s] : previous->config.settings()) cfg.set(key, s.value, Source::kManifest);
    }
    for (const auto& f : registered[sub]) {
      if (sub->count(f.name)) cfg.set(f.key, flag_values[f.name], Source::kFlag);
    }
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + s + "'");
      cfg.set(s.substr(0, eq), s.substr(eq + 1), Source::kFlag);
    }

    ctx.emplace(Context{cfg, {}, fs::path(cfg.str("out")), out});
    ctx->manifest.command = command;
    ctx->manifest.config = cfg;
    ctx->manifest.seed = cfg.unsigned_integer("seed");
    ctx->manifest.started_utc = utc_now();
    if (!config_path.empty()) add_input(*ctx, "config", config_path);

    if (command == "gen-synth") {
      cmd_gen_synth(*ctx);
    } else if (command == "train") {
      if (previous) {
        // Hash first so a changed dataset is refused before training.
        RunManifest probe;
        probe.inputs.push_back({"ssl_features", cfg.str("ssl_features"),
                                sha256_tree(required_path(cfg, "ssl_features", "--ssl-features"))});
        verify_inputs(*previous, probe);
      }
      cmd_train(*ctx);
    } else if (command == "eval") {
      cmd_eval(*ctx);
    } else if (command == "segment") {
      cmd_segment(*ctx);
    } else {
      cmd_parse_notes(*ctx);
    }
    if (previous) verify_inputs(*previous, ctx->manifest);
  } catch (const NumericError& e) {
    err << "error: " << e.what() << '\n';
    code = kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    code = kExitInput;
  }
  if (!ctx) return code;
  ctx->manifest.exit_code = code;

  ctx->manifest.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  const fs::path manifest_out = ctx->out_dir / "run_manifest.json";
  try {
    write_manifest(manifest_out, ctx->manifest);
  } catch (const std::exception& e) {
    err << "warning: could not write " << manifest_out.string() << ": " << e.what() << '\n';
  }
  return code;
}

}  // namespace phaseseg::cli
