#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "capsloc/checkpoint.hpp"
#include "capsloc/config.hpp"
#include "capsloc/core/digest.hpp"
#include "capsloc/core/error.hpp"
#include "capsloc/core/gemm.hpp"
#include "capsloc/data/container.hpp"
#include "capsloc/data/sampling.hpp"
#include "capsloc/data/synth.hpp"
#include "capsloc/eval/ablation.hpp"
#include "capsloc/eval/evaluate.hpp"
#include "capsloc/eval/histogram.hpp"
#include "capsloc/eval/manipulate.hpp"
#include "capsloc/eval/pgm.hpp"
#include "capsloc/model_io.hpp"
#include "capsloc/train.hpp"

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

/// Experiment manifest shared by the subcommands. A config file pins any
/// subset of these; command-line flags override the file.
struct RunConfig {
  std::string model = "capsnet-bias";
  unsigned long long seed = 1;
  int epochs = 150;
  int batch_size = 100;
  int frames_per_sequence = 3;
  std::string profile = "full";
  std::string data_dir;
  json capsnet;    // null -> library defaults
  json benchmark;  // null -> library defaults
  bool epochs_pinned = false;
  bool seed_pinned = false;
  bool fps_pinned = false;
  bool batch_pinned = false;
};

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw capsloc::DataFormatError("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw capsloc::DataFormatError(path + ": " + e.what());
  }
  capsloc::check_known_keys(j, "run config",
                            {"model", "seed", "epochs", "batch_size",
                             "frames_per_sequence", "profile", "data_dir",
                             "capsnet", "benchmark"});
  RunConfig rc;
  if (j.contains("model")) j.at("model").get_to(rc.model);
  if (j.contains("seed")) {
    j.at("seed").get_to(rc.seed);
    rc.seed_pinned = true;
  }
  if (j.contains("epochs")) {
    j.at("epochs").get_to(rc.epochs);
    rc.epochs_pinned = true;
  }
  if (j.contains("batch_size")) {
    j.at("batch_size").get_to(rc.batch_size);
    rc.batch_pinned = true;
  }
  if (j.contains("frames_per_sequence")) {
    j.at("frames_per_sequence").get_to(rc.frames_per_sequence);
    rc.fps_pinned = true;
  }
  if (j.contains("profile")) j.at("profile").get_to(rc.profile);
  if (j.contains("data_dir")) j.at("data_dir").get_to(rc.data_dir);
  if (j.contains("capsnet")) rc.capsnet = j.at("capsnet");
  if (j.contains("benchmark")) rc.benchmark = j.at("benchmark");
  return rc;
}

/// Smoke profile: CI-sized budget for anything the caller left unpinned.
void finalize_run_config(RunConfig& rc) {
  if (rc.profile != "full" && rc.profile != "smoke")
    throw capsloc::ConfigError("profile must be \"full\" or \"smoke\"");
  if (rc.profile == "smoke" && !rc.epochs_pinned) rc.epochs = 3;
  capsloc::parse_model_kind(rc.model);
  if (rc.epochs < 1) throw capsloc::ConfigError("epochs must be positive");
  if (rc.batch_size < 1)
    throw capsloc::ConfigError("batch_size must be positive");
  if (rc.frames_per_sequence < 1)
    throw capsloc::ConfigError("frames_per_sequence must be positive");
}

const json& model_config_of(const RunConfig& rc, capsloc::ModelKind kind) {
  static const json null_cfg;
  switch (kind) {
    case capsloc::ModelKind::kCapsnetBias:
    case capsloc::ModelKind::kCapsnetEven:
      return rc.capsnet;
    case capsloc::ModelKind::kConvEmbedding:
    case capsloc::ModelKind::kConvLogits:
      return rc.benchmark;
    case capsloc::ModelKind::kHeuristic:
      break;
  }
  return null_cfg;
}

std::string resolve_data_dir(const std::string& flag, const RunConfig& rc) {
  if (!flag.empty()) return flag;
  if (!rc.data_dir.empty()) return rc.data_dir;
  if (const char* env = std::getenv("CAPSLOC_DATA_DIR"))
    if (*env) return env;
  throw capsloc::ConfigError(
      "no data directory: pass --data, set data_dir in the config, or export "
      "CAPSLOC_DATA_DIR");
}

/// Frame-sampling stream for training data; streams 0 and 1 of the same seed
/// drive parameter init and batch order inside train_model.
unsigned long long train_data_seed(unsigned long long seed) {
  return capsloc::Rng(seed).fork(2).next_u64();
}

capsloc::ModelBundle<float> bundle_from_flags(const std::string& ck_path,
                                              const std::string& model,
                                              long long* epochs_out) {
  if (!ck_path.empty()) {
    capsloc::Checkpoint ck = capsloc::Checkpoint::load(ck_path);
    if (epochs_out) *epochs_out = ck.epoch;
    return capsloc::model_from_checkpoint<float>(ck);
  }
  capsloc::ModelKind kind = capsloc::parse_model_kind(model);
  if (kind != capsloc::ModelKind::kHeuristic)
    throw capsloc::ConfigError("model \"" + model +
                               "\" needs --checkpoint; only the heuristic "
                               "runs without one");
  capsloc::Rng rng(0);
  if (epochs_out) *epochs_out = 0;
  return capsloc::make_model<float>(kind, json(), rng);
}

capsloc::Tensor<float> frame_tensor(const std::uint8_t* px, int rows,
                                    int cols) {
  capsloc::Tensor<float> t({1, 1, rows, cols});
  auto d = t.data();
  for (std::size_t i = 0; i < d.size(); ++i)
    d[i] = static_cast<float>(px[i]) / 255.0f;
  return t;
}

capsloc::Tensor<float> container_frame(const capsloc::data::MovingDataset& ds,
                                       int sample, int frame) {
  if (sample < 0 || sample >= ds.count)
    throw capsloc::ConfigError("--sample must be in 0.." +
                               std::to_string(ds.count - 1));
  if (frame < 0 || frame >= ds.frames_per_seq)
    throw capsloc::ConfigError("--frame must be in 0.." +
                               std::to_string(ds.frames_per_seq - 1));
  return frame_tensor(ds.frame(sample, frame), ds.canvas, ds.canvas);
}

std::vector<int> parse_class_list(const std::string& csv) {
  std::vector<int> out;
  std::size_t pos = 0;
  while (pos < csv.size()) {
    std::size_t comma = csv.find(',', pos);
    if (comma == std::string::npos) comma = csv.size();
    try {
      out.push_back(std::stoi(csv.substr(pos, comma - pos)));
    } catch (const std::exception&) {
      throw capsloc::ConfigError("bad class list \"" + csv + "\"");
    }
    pos = comma + 1;
  }
  if (out.empty()) throw capsloc::ConfigError("empty class list");
  return out;
}

std::vector<double> parse_value_list(const std::string& csv) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos < csv.size()) {
    std::size_t comma = csv.find(',', pos);
    if (comma == std::string::npos) comma = csv.size();
    try {
      out.push_back(std::stod(csv.substr(pos, comma - pos)));
    } catch (const std::exception&) {
      throw capsloc::ConfigError("bad value list \"" + csv + "\"");
    }
    pos = comma + 1;
  }
  if (out.empty()) throw capsloc::ConfigError("empty value list");
  return out;
}

int top1_class(capsloc::ModelBundle<float>& m,
               const capsloc::Tensor<float>& img) {
  std::vector<float> s;
  if (m.is_capsnet()) {
    auto fwd = m.caps->forward(nullptr, img, nullptr, false);
    auto n = fwd.norms.data();
    s.assign(n.begin(), n.begin() + m.num_classes());
  } else if (m.is_benchmark()) {
    auto fwd = m.bench->forward(nullptr, img, nullptr, false);
    auto n = fwd.scores.data();
    s.assign(n.begin(), n.end());
  } else {
    throw capsloc::ConfigError(
        "the heuristic has no classifier; pass --classes");
  }
  return static_cast<int>(std::max_element(s.begin(), s.end()) - s.begin());
}

int parse_axis(const std::string& axis) {
  if (axis == "x" || axis == "0") return 0;
  if (axis == "y" || axis == "1") return 1;
  throw capsloc::ConfigError("axis must be x (vertical) or y (horizontal)");
}

void append_curve_csv(const fs::path& path, const capsloc::TrainResult& r) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw capsloc::DataFormatError("cannot open " + path.string());
  char buf[160];
  for (const auto& s : r.steps) {
    std::snprintf(buf, sizeof buf, "%lld,%lld,%.9g,%.9g,%.9g\n", s.epoch,
                  s.step, s.total, s.primary, s.recon);
    out << buf;
  }
  if (!out) throw capsloc::DataFormatError("short write to " + path.string());
}

void emit(const json& j) { std::cout << j.dump(2) << "\n"; }

// ---------------------------------------------------------------------------
// Subcommand bodies. All validation happens before any output is written.

void run_gen_data(const RunConfig& rc, const std::string& out_dir,
                  const std::string& mnist_dir, int samples, int digits,
                  int frames, int canvas) {
  if (digits < 1 || digits > 10)
    throw capsloc::ConfigError("--digits must be in 1..10");
  if (samples < 1) throw capsloc::ConfigError("--samples must be positive");
  if (frames < 1) throw capsloc::ConfigError("--frames must be positive");

  capsloc::data::DigitSet source;
  std::string source_name;
  if (mnist_dir.empty()) {
    source = capsloc::data::synthetic_digits(10000, rc.seed);
    source_name = "synthetic";
  } else {
    auto pick = [&](const std::string& base) {
      fs::path gz = fs::path(mnist_dir) / (base + ".gz");
      if (fs::exists(gz)) return gz.string();
      fs::path raw = fs::path(mnist_dir) / base;
      if (fs::exists(raw)) return raw.string();
      throw capsloc::DataFormatError("missing " + base + "(.gz) in " +
                                     mnist_dir);
    };
    source = capsloc::data::load_idx(pick("train-images-idx3-ubyte"),
                                     pick("train-labels-idx1-ubyte"));
    source_name = "mnist";
  }
  if (canvas < source.rows)
    throw capsloc::ConfigError("--canvas smaller than the digit patch");

  capsloc::data::MovingDataset ds = capsloc::data::generate_moving_dataset(
      source, samples, digits, rc.seed, frames, canvas);
  capsloc::data::write_container(out_dir, ds);
  emit(json{{"dir", out_dir},
            {"digest", capsloc::data::container_digest(out_dir)},
            {"count", ds.count},
            {"digits", ds.digits_per_seq},
            {"frames", ds.frames_per_seq},
            {"canvas", ds.canvas},
            {"source", source_name}});
}

void run_train(RunConfig rc, const std::string& data_flag,
               const std::string& out_ck, const std::string& curve_flag,
               const std::string& resume_path) {
  const std::string data_dir = resolve_data_dir(data_flag, rc);
  const bool resumed = !resume_path.empty();

  capsloc::Checkpoint start;
  if (resumed) {
    start = capsloc::Checkpoint::load(resume_path);
    // A checkpoint remembers how its run sampled and batched the data so a
    // resume continues identically unless explicitly overridden.
    if (start.extra.contains("run")) {
      const json& r = start.extra.at("run");
      if (!rc.seed_pinned && r.contains("seed"))
        rc.seed = r.at("seed").get<unsigned long long>();
      if (!rc.fps_pinned && r.contains("frames_per_sequence"))
        rc.frames_per_sequence = r.at("frames_per_sequence").get<int>();
      if (!rc.batch_pinned && r.contains("batch_size"))
        rc.batch_size = r.at("batch_size").get<int>();
    }
  }

  capsloc::data::MovingDataset ds = capsloc::data::read_container(data_dir);
  capsloc::data::SupervisedSet set = capsloc::data::sample_frames(
      ds, rc.frames_per_sequence, train_data_seed(rc.seed));

  capsloc::TrainOptions opts;
  opts.epochs = rc.epochs;
  opts.batch_size = rc.batch_size;

  const fs::path curve =
      curve_flag.empty() ? fs::path(out_ck + ".curve.csv") : fs::path(curve_flag);

  capsloc::TrainRun<float> run;
  if (resumed) {
    run = capsloc::resume_training<float>(start, set, opts);
  } else {
    capsloc::ModelKind kind = capsloc::parse_model_kind(rc.model);
    run = capsloc::train_model<float>(kind, model_config_of(rc, kind), set,
                                      opts, rc.seed);
  }

  run.final_state.extra["run"] =
      json{{"seed", rc.seed},
           {"frames_per_sequence", rc.frames_per_sequence},
           {"batch_size", rc.batch_size}};
  run.final_state.save(out_ck);
  if (resumed && fs::exists(curve))
    append_curve_csv(curve, run.curve);
  else
    capsloc::write_curve_csv(curve, run.curve);

  json final_loss;
  if (!run.curve.epoch_mean_loss.empty())
    final_loss = run.curve.epoch_mean_loss.back();
  emit(json{{"checkpoint", out_ck},
            {"digest", capsloc::sha256_file(out_ck)},
            {"epochs", run.final_state.epoch},
            {"final_loss", final_loss},
            {"curve", curve.string()},
            {"resumed", resumed}});
}

void run_eval(const RunConfig& rc, const std::string& ck_path,
              const std::string& data_flag, const std::string& report_dir,
              int frames) {
  const std::string data_dir = resolve_data_dir(data_flag, rc);
  long long epochs = 0;
  capsloc::ModelBundle<float> m = bundle_from_flags(ck_path, rc.model, &epochs);
  capsloc::data::MovingDataset ds = capsloc::data::read_container(data_dir);
  capsloc::data::SupervisedSet set =
      capsloc::data::sample_frames(ds, frames, rc.seed);
  capsloc::EvalResult res = capsloc::evaluate_model(m, set, rc.batch_size);

  capsloc::LocalizationReport rep;
  rep.model_kind = capsloc::to_string(m.kind);
  rep.config_hash = capsloc::config_hash(m.config_json());
  rep.epochs = epochs;
  rep.seed = rc.seed;
  rep.dataset_digits = set.digits;
  rep.dataset_count = set.count;
  rep.result = res;
  capsloc::write_report_dir(report_dir, rep);
  emit(rep.to_json());
}

void run_localize(const RunConfig& rc, const std::string& ck_path,
                  const std::string& image_path,
                  const std::string& classes_csv) {
  capsloc::ModelBundle<float> m =
      bundle_from_flags(ck_path, rc.model, nullptr);
  capsloc::GrayImage g = capsloc::read_pgm(image_path);
  capsloc::Tensor<float> img = frame_tensor(g.pixels.data(), g.rows, g.cols);

  std::vector<int> classes;
  if (!classes_csv.empty())
    classes = parse_class_list(classes_csv);
  else
    classes = {top1_class(m, img)};

  std::vector<capsloc::CoordPrediction> coords =
      capsloc::localize_image(m, img, classes);
  json arr = json::array();
  for (const auto& c : coords)
    arr.push_back(json{{"class", c.class_id}, {"x", c.x}, {"y", c.y}});
  json omitted = json::array();
  for (int k : classes) {
    bool found = std::any_of(coords.begin(), coords.end(),
                             [&](const auto& c) { return c.class_id == k; });
    if (!found) omitted.push_back(k);
  }
  emit(json{{"image", image_path},
            {"model_kind", capsloc::to_string(m.kind)},
            {"coordinates", arr},
            {"omitted", omitted}});
}

void run_manipulate(const RunConfig& rc, const std::string& ck_path,
                    const std::string& data_flag, int sample, int frame,
                    const std::string& axis_name, int class_id,
                    const std::string& out_dir) {
  const std::string data_dir = resolve_data_dir(data_flag, rc);
  const int axis = parse_axis(axis_name);
  long long epochs = 0;
  capsloc::ModelBundle<float> m = bundle_from_flags(ck_path, "", &epochs);
  if (!m.is_capsnet())
    throw capsloc::ConfigError(
        "manipulate needs a capsule-network checkpoint");
  capsloc::data::MovingDataset ds = capsloc::data::read_container(data_dir);
  capsloc::Tensor<float> img = container_frame(ds, sample, frame);

  capsloc::ManipulationGrid<float> grid =
      capsloc::manipulate_coordinate(*m.caps, img, class_id, axis);

  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  capsloc::write_manipulation_csv(dir / "manipulation.csv", grid);
  capsloc::write_pgm(dir / "montage.pgm", capsloc::manipulation_montage(grid));
  capsloc::GrayImage input(ds.canvas, ds.canvas);
  const std::uint8_t* px = ds.frame(sample, frame);
  input.pixels.assign(px, px + ds.frame_bytes());
  capsloc::write_pgm(dir / "input.pgm", input);

  json rows = json::array();
  for (const auto& r : grid.rows)
    rows.push_back(json{{"offset", r.offset},
                        {"value", r.value},
                        {"out_of_range", r.out_of_range},
                        {"centroid_x", r.centroid_x},
                        {"centroid_y", r.centroid_y}});
  json index{{"class_id", grid.class_id},
             {"axis", axis == 0 ? "x" : "y"},
             {"sample", sample},
             {"frame", frame},
             {"rows", rows},
             {"files", json{{"csv", "manipulation.csv"},
                            {"montage", "montage.pgm"},
                            {"input", "input.pgm"}}}};
  {
    std::ofstream out(dir / "index.json", std::ios::binary);
    if (!out) throw capsloc::DataFormatError("cannot open " + out_dir);
    out << index.dump(2) << "\n";
  }
  emit(index);
}

void run_histogram(const RunConfig& rc, const std::string& ck_path,
                   const std::string& data_flag, int sample, int frame,
                   int class_id, int bins, const std::string& out_dir) {
  const std::string data_dir = resolve_data_dir(data_flag, rc);
  long long epochs = 0;
  capsloc::ModelBundle<float> m = bundle_from_flags(ck_path, "", &epochs);
  if (!m.is_capsnet())
    throw capsloc::ConfigError("histogram needs a capsule-network checkpoint");
  capsloc::data::MovingDataset ds = capsloc::data::read_container(data_dir);
  capsloc::Tensor<float> img = container_frame(ds, sample, frame);
  if (class_id < 0)
    class_id = ds.labels[static_cast<std::size_t>(sample) * ds.digits_per_seq];

  capsloc::RoutingHistogram h =
      capsloc::routing_histogram(*m.caps, img, class_id, bins);

  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  capsloc::write_couplings_csv(dir / "couplings.csv", h);
  capsloc::write_histogram_csv(dir / "histogram.csv", h);
  capsloc::write_pgm(dir / "histogram.pgm", capsloc::histogram_image(h));

  json ratio;
  try {
    ratio = h.max_median_ratio();
  } catch (const capsloc::NumericError&) {
    ratio = nullptr;
  }
  emit(json{{"class_id", h.class_id},
            {"couplings", h.couplings.size()},
            {"max_coupling", h.max_coupling()},
            {"max_median_ratio", ratio},
            {"out", out_dir}});
}

void run_ablate(const RunConfig& rc, const std::string& values_csv,
                int budget, const std::string& data_flag,
                const std::string& test_data, const std::string& out_csv) {
  const std::string data_dir = resolve_data_dir(data_flag, rc);
  std::vector<double> values = parse_value_list(values_csv);
  if (budget < 1) throw capsloc::ConfigError("--budget must be positive");

  capsloc::data::MovingDataset train_ds =
      capsloc::data::read_container(data_dir);
  capsloc::data::MovingDataset test_ds =
      capsloc::data::read_container(test_data);
  capsloc::data::SupervisedSet train_set = capsloc::data::sample_frames(
      train_ds, rc.frames_per_sequence, train_data_seed(rc.seed));
  capsloc::data::SupervisedSet test_set =
      capsloc::data::sample_frames(test_ds, 1, rc.seed);

  capsloc::TrainOptions opts;
  opts.epochs = budget;
  opts.batch_size = rc.batch_size;
  capsloc::AblationResult result = capsloc::ablation_sweep<float>(
      rc.capsnet, values, train_set, test_set, opts, rc.seed, rc.batch_size);
  capsloc::write_ablation_csv(out_csv, result);
  emit(json{{"csv", out_csv},
            {"values", values},
            {"points", result.points.size()}});
}

json error_json(const std::string& type, const std::string& message) {
  return json{{"error", json{{"type", type}, {"message", message}}}};
}

}  // namespace

int main(int argc, char** argv) {
  capsloc::use_single_threaded_blas();
  CLI::App app{"capsule-network localization toolkit"};
  app.require_subcommand(1);

  // Shared flag storage; each subcommand registers the subset it uses.
  std::string config_path, data_dir, out_dir, mnist_dir, checkpoint, model;
  std::string curve_path, resume_path, image_path, classes_csv, axis = "x";
  std::string values_csv, report_dir, out_csv;
  int samples = 10000, digits = 1, gen_frames = 20, canvas = 64;
  int eval_frames = 1, sample_idx = 0, frame_idx = 0, class_id = -1;
  int bins = 50, budget = 0;
  unsigned long long seed = 1;
  int epochs = 150, batch_size = 100, fps = 3;
  std::string profile = "full";

  // Each subcommand keeps its own option handles so flag presence is checked
  // against the subcommand that actually parsed.
  struct CommonOpts {
    CLI::Option* seed = nullptr;
    CLI::Option* profile = nullptr;
    CLI::Option* model = nullptr;
    CLI::Option* epochs = nullptr;
    CLI::Option* batch = nullptr;
    CLI::Option* fps = nullptr;
  };

  auto add_common = [&](CLI::App* sub, bool with_model) {
    CommonOpts o;
    sub->add_option("--config", config_path,
                    "run-config JSON; flags override its values");
    o.seed = sub->add_option("--seed", seed, "master seed");
    o.profile =
        sub->add_option("--profile", profile, "full or smoke (CI-sized)");
    if (with_model)
      o.model = sub->add_option(
          "--model", model,
          "capsnet-bias | capsnet-even | conv-embedding | conv-logits | "
          "heuristic");
    return o;
  };

  auto build_config = [&](const CommonOpts& o) {
    RunConfig rc =
        config_path.empty() ? RunConfig{} : load_run_config(config_path);
    if (o.model && o.model->count()) rc.model = model;
    if (o.seed && o.seed->count()) {
      rc.seed = seed;
      rc.seed_pinned = true;
    }
    if (o.epochs && o.epochs->count()) {
      rc.epochs = epochs;
      rc.epochs_pinned = true;
    }
    if (o.batch && o.batch->count()) {
      rc.batch_size = batch_size;
      rc.batch_pinned = true;
    }
    if (o.fps && o.fps->count()) {
      rc.frames_per_sequence = fps;
      rc.fps_pinned = true;
    }
    if (o.profile && o.profile->count()) rc.profile = profile;
    finalize_run_config(rc);
    return rc;
  };

  // gen-data ---------------------------------------------------------------
  auto* gen = app.add_subcommand(
      "gen-data", "generate a moving-digit sequence dataset");
  CommonOpts gen_o = add_common(gen, false);
  gen->add_option("--out", out_dir, "output container directory")->required();
  gen->add_option("--mnist-dir", mnist_dir,
                  "directory with IDX digit files; omitted -> synthetic "
                  "glyph source");
  CLI::Option* samples_opt = gen->add_option(
      "--samples", samples, "number of sequences (smoke default 1000)");
  gen->add_option("--digits", digits, "digits per sequence (1..10)");
  gen->add_option("--frames", gen_frames, "frames per sequence");
  gen->add_option("--canvas", canvas, "canvas side in pixels");
  gen->callback([&, gen_o] {
    RunConfig rc = build_config(gen_o);
    if (rc.profile == "smoke" && !samples_opt->count()) samples = 1000;
    run_gen_data(rc, out_dir, mnist_dir, samples, digits, gen_frames, canvas);
  });

  // train ------------------------------------------------------------------
  auto* train = app.add_subcommand("train", "train a model on a container");
  CommonOpts train_o = add_common(train, true);
  train->add_option("--data", data_dir,
                    "dataset container (or config data_dir, or "
                    "CAPSLOC_DATA_DIR)");
  train->add_option("--out-checkpoint", checkpoint, "checkpoint to write")
      ->required();
  train->add_option("--curve", curve_path,
                    "training-curve CSV (default <checkpoint>.curve.csv)");
  train->add_option("--resume", resume_path,
                    "continue from this checkpoint up to --epochs");
  train_o.epochs = train->add_option("--epochs", epochs,
                                     "total epochs (smoke default 3)");
  train_o.batch = train->add_option("--batch-size", batch_size, "batch size");
  train_o.fps = train->add_option("--frames", fps,
                                  "training frames sampled per sequence");
  train->callback([&, train_o] {
    run_train(build_config(train_o), data_dir, checkpoint, curve_path,
              resume_path);
  });

  // eval -------------------------------------------------------------------
  auto* ev = app.add_subcommand(
      "eval", "evaluate localization accuracy and coordinate error");
  CommonOpts ev_o = add_common(ev, true);
  ev->add_option("--checkpoint", checkpoint,
                 "trained checkpoint (heuristic needs none)");
  ev->add_option("--data", data_dir, "dataset container");
  ev->add_option("--report-dir", report_dir, "report output directory")
      ->required();
  ev->add_option("--frames", eval_frames, "frames sampled per sequence");
  ev_o.batch = ev->add_option("--batch-size", batch_size, "batch size");
  ev->callback([&, ev_o] {
    run_eval(build_config(ev_o), checkpoint, data_dir, report_dir,
             eval_frames);
  });

  // localize ---------------------------------------------------------------
  auto* loc = app.add_subcommand(
      "localize", "print (x,y) coordinates for classes in one image");
  CommonOpts loc_o = add_common(loc, true);
  loc->add_option("--checkpoint", checkpoint,
                  "trained checkpoint (heuristic needs none)");
  loc->add_option("--image", image_path, "P5 PGM image")->required();
  loc->add_option("--classes", classes_csv,
                  "comma-separated class ids (default: model's top-1)");
  loc->callback([&, loc_o] {
    run_localize(build_config(loc_o), checkpoint, image_path, classes_csv);
  });

  // manipulate -------------------------------------------------------------
  auto* man = app.add_subcommand(
      "manipulate", "sweep one coordinate atom and decode each offset");
  CommonOpts man_o = add_common(man, false);
  man->add_option("--checkpoint", checkpoint, "capsule-network checkpoint")
      ->required();
  man->add_option("--data", data_dir, "dataset container");
  man->add_option("--sample", sample_idx, "sequence index")->required();
  man->add_option("--frame", frame_idx, "frame index within the sequence");
  man->add_option("--axis", axis, "x (vertical) or y (horizontal)")
      ->required();
  man->add_option("--class", class_id, "class id (default: predicted top-1)");
  man->add_option("--out", out_dir, "output directory")->required();
  man->callback([&, man_o] {
    run_manipulate(build_config(man_o), checkpoint, data_dir, sample_idx,
                   frame_idx, axis, class_id, out_dir);
  });

  // histogram --------------------------------------------------------------
  auto* hist = app.add_subcommand(
      "histogram", "export routing couplings for one image and class");
  CommonOpts hist_o = add_common(hist, false);
  hist->add_option("--checkpoint", checkpoint, "capsule-network checkpoint")
      ->required();
  hist->add_option("--data", data_dir, "dataset container");
  hist->add_option("--sample", sample_idx, "sequence index")->required();
  hist->add_option("--frame", frame_idx, "frame index within the sequence");
  hist->add_option("--class", class_id,
                   "class id (default: the sequence's first label)");
  hist->add_option("--bins", bins, "histogram bin count");
  hist->add_option("--out", out_dir, "output directory")->required();
  hist->callback([&, hist_o] {
    run_histogram(build_config(hist_o), checkpoint, data_dir, sample_idx,
                  frame_idx, class_id, bins, out_dir);
  });

  // ablate -----------------------------------------------------------------
  auto* abl = app.add_subcommand(
      "ablate", "train one model per routing-bias value, identical budget");
  CommonOpts abl_o = add_common(abl, false);
  std::string test_data_dir;
  abl->add_option("--values", values_csv,
                  "comma-separated bias logits, e.g. --values=-7,-5,0")
      ->required();
  abl->add_option("--budget", budget, "epochs per value")->required();
  abl->add_option("--data", data_dir, "training container");
  abl->add_option("--test-data", test_data_dir, "test container")->required();
  abl->add_option("--out", out_csv, "sweep CSV path")->required();
  abl_o.batch = abl->add_option("--batch-size", batch_size, "batch size");
  abl_o.fps = abl->add_option("--frames", fps,
                              "training frames sampled per sequence");
  abl->callback([&, abl_o] {
    run_ablate(build_config(abl_o), values_csv, budget, data_dir,
               test_data_dir, out_csv);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << error_json("usage", e.what()).dump() << "\n";
    return 2;
  } catch (const capsloc::ConfigError& e) {
    std::cerr << error_json("usage", e.what()).dump() << "\n";
    return 2;
  } catch (const capsloc::DimensionError& e) {
    std::cerr << error_json("usage", e.what()).dump() << "\n";
    return 2;
  } catch (const capsloc::DataFormatError& e) {
    std::cerr << error_json("data", e.what()).dump() << "\n";
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << error_json("data", e.what()).dump() << "\n";
    return 3;
  } catch (const capsloc::NumericError& e) {
    std::cerr << error_json("numeric", e.what()).dump() << "\n";
    return 4;
  } catch (const capsloc::DegenerateError& e) {
    std::cerr << error_json("numeric", e.what()).dump() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << error_json("internal", e.what()).dump() << "\n";
    return 1;
  }
  return 0;
}
