// Copyright 2026 The Dermseg Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "dermseg/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "dermseg/config.hpp"
#include "dermseg/gradcheck.hpp"
#include "dermseg/metrics.hpp"

namespace fs = std::filesystem;

namespace dermseg {
namespace {

constexpr double kGradCheckTolerance = 1e-4;
constexpr std::size_t kProgressEvery = 50;

struct Options {
  std::string config;
  std::string data;
  std::string out;
  std::string checkpoint;
  std::string ablation;
  std::string input;
  std::string format = "pgm";
  std::uint64_t seed = 0;
  double eps = 1e-5;
};

RunConfig load_config(const Options& o) {
  RunConfig c = o.config.empty() ? RunConfig() : RunConfig::load(o.config);
  if (!o.ablation.empty()) c.model.ablation = Ablation::parse(o.ablation);
  c.validate();
  return c;
}

Split load_data(const RunConfig& c, const Options& o) {
  if (!o.data.empty()) {
    return load_split(o.data, c.synth.size, c.val_fraction, c.split_seed);
  }
  return split_dataset(gen_synthetic(c.synth), c.val_fraction, c.split_seed);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
}

ParamSet train_and_save(const RunConfig& c, const Split& split,
                        const fs::path& out_dir, std::ostream& out) {
  out << "training " << c.model.ablation.name() << " on " << split.train.size()
      << " images for " << c.train.max_iter << " iterations\n";
  TrainResult r = train(split.train, c.model, c.train, nullptr,
                        [&](const LossRecord& rec) {
                          if (rec.iter % kProgressEvery == 0 ||
                              rec.iter + 1 == c.train.max_iter) {
                            char line[96];
                            std::snprintf(line, sizeof(line),
                                          "iter %6zu  lr %.3e  loss %.6f\n",
                                          rec.iter, rec.lr, rec.loss);
                            out << line << std::flush;
                          }
                        });
  fs::create_directories(out_dir);
  write_checkpoint(out_dir / "model.ckpt", {c.to_text(), r.state.params});
  write_loss_log(out_dir / "loss.csv", r.log);
  out << "wrote " << (out_dir / "model.ckpt").string() << " and "
      << (out_dir / "loss.csv").string() << '\n';
  return std::move(r.state.params);
}

int cmd_gen_data(const Options& o, std::ostream& out) {
  const RunConfig c = load_config(o);
  const Split split =
      split_dataset(gen_synthetic(c.synth), c.val_fraction, c.split_seed);
  write_dataset(split, o.out);
  out << "wrote " << split.train.size() << " train and " << split.val.size()
      << " val samples to " << o.out << '\n';
  return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out) {
  const RunConfig c = load_config(o);
  train_and_save(c, load_data(c, o), o.out, out);
  return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
  RunConfig c = load_config(o);
  ParamSet params;
  if (!o.checkpoint.empty()) {
    Checkpoint ckpt = read_checkpoint(o.checkpoint);
    const RunConfig saved = RunConfig::parse(ckpt.config_text);
    if (!o.ablation.empty() && saved.model.ablation != c.model.ablation) {
      throw ValueError("checkpoint was trained as '" + saved.model.ablation.name() +
                       "', not '" + c.model.ablation.name() + "'");
    }
    c.model = saved.model;
    params = std::move(ckpt.params);
  }
  const Split split = load_data(c, o);
  if (split.val.empty()) throw ValueError("eval: validation split is empty");
  fs::create_directories(o.out);
  if (o.checkpoint.empty()) params = train_and_save(c, split, o.out, out);

  std::vector<ImageResult> rows;
  std::vector<Metrics> metrics;
  for (const Sample& s : split.val) {
    const Tensor pred = binarize(predict_lesion_prob(c.model, params, s.image));
    const ConfusionCounts counts = confusion(pred, s.mask);
    rows.push_back({s.id, counts, compute_metrics(counts)});
    metrics.push_back(rows.back().metrics);
  }
  const std::string summary = format_summary(c.model.ablation.name(), aggregate(metrics));
  write_metrics_csv(fs::path(o.out) / "metrics.csv", rows);
  write_ja_histogram(fs::path(o.out) / "ja_histogram.csv", rows);
  write_text(fs::path(o.out) / "summary.txt", summary);
  out << summary;
  return kExitOk;
}

int cmd_predict(const Options& o, std::ostream& out) {
  const Checkpoint ckpt = read_checkpoint(o.checkpoint);
  const RunConfig c = RunConfig::parse(ckpt.config_text);
  fs::path in_dir = o.input;
  if (fs::is_directory(in_dir / "images")) in_dir /= "images";
  if (!fs::is_directory(in_dir)) throw IoError("no such directory: " + in_dir.string());
  if (o.format == "png" && !has_png_support()) {
    throw IoError("this build has no PNG support");
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(in_dir)) {
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (e.is_regular_file() && (ext == ".ppm" || ext == ".pgm" || ext == ".png")) {
      files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  fs::create_directories(o.out);
  for (const fs::path& f : files) {
    Tensor image = read_image(f);
    if (image.dim(0) == 1) {
      const Tensor parts[] = {image, image, image};
      image = concat_channels(parts);
    }
    const Letterbox g = letterbox_geometry(image.dim(1), image.dim(2), c.synth.size);
    const Tensor prob =
        predict_lesion_prob(c.model, ckpt.params, letterbox(image, c.synth.size, false));
    write_mask(unletterbox(binarize(prob), g),
               fs::path(o.out) / (f.stem().string() + "." + o.format));
  }
  out << "wrote " << files.size() << " masks to " << o.out << '\n';
  return kExitOk;
}

int cmd_gradcheck(const Options& o, std::ostream& out) {
  const auto cases = run_gradcheck_suite(o.seed, o.eps);
  bool ok = true;
  for (const GradCheckCase& g : cases) {
    const bool pass = g.result.max_relative_error < kGradCheckTolerance;
    ok = ok && pass;
    char line[160];
    std::snprintf(line, sizeof(line), "%-52s %4zu probes  max rel err %.3e  %s\n",
                  g.name.c_str(), g.result.probes, g.result.max_relative_error,
                  pass ? "ok" : "FAIL");
    out << line;
  }
  out << (ok ? "all ops within " : "some ops exceed ") << kGradCheckTolerance << '\n';
  return ok ? kExitOk : kExitRuntime;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Skin lesion segmentation with bi-directional feature learning "
               "and consistency-weighted fusion",
               "dermseg"};
  app.require_subcommand(1);
  Options o;
  const auto ablation_check = CLI::IsMember({"baseline", "bidfl", "mcdf", "bidfl+mcdf"});

  auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset");
  gen->add_option("--config", o.config, "run config file")->check(CLI::ExistingFile);
  gen->add_option("--out", o.out, "output dataset directory")->required();

  auto* tr = app.add_subcommand("train", "train and write model.ckpt + loss.csv");
  tr->add_option("--config", o.config, "run config file")->check(CLI::ExistingFile);
  tr->add_option("--data", o.data, "dataset directory (default: synthetic)")
      ->check(CLI::ExistingDirectory);
  tr->add_option("--ablation", o.ablation, "baseline|bidfl|mcdf|bidfl+mcdf")
      ->check(ablation_check);
  tr->add_option("--out", o.out, "output directory")->required();

  auto* ev = app.add_subcommand(
      "eval", "evaluate on the val split, training first without --checkpoint");
  ev->add_option("--config", o.config, "run config file")->check(CLI::ExistingFile);
  ev->add_option("--data", o.data, "dataset directory (default: synthetic)")
      ->check(CLI::ExistingDirectory);
  ev->add_option("--checkpoint", o.checkpoint, "trained model")
      ->check(CLI::ExistingFile);
  ev->add_option("--ablation", o.ablation, "baseline|bidfl|mcdf|bidfl+mcdf")
      ->check(ablation_check);
  ev->add_option("--out", o.out, "output directory")->required();

  auto* pr = app.add_subcommand("predict", "write lesion masks for a directory");
  pr->add_option("--checkpoint", o.checkpoint, "trained model")
      ->required()
      ->check(CLI::ExistingFile);
  pr->add_option("--input", o.input, "directory of .ppm/.png images")->required();
  pr->add_option("--out", o.out, "mask output directory")->required();
  pr->add_option("--format", o.format, "pgm or png")
      ->check(CLI::IsMember({"pgm", "png"}));

  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every op");
  gc->add_option("--seed", o.seed, "random seed for the test tensors");
  gc->add_option("--eps", o.eps, "central-difference step");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (code == 0) return kExitOk;
    err << '\n' << app.help();
    return kExitUsage;
  }

  try {
    if (*gen) return cmd_gen_data(o, out);
    if (*tr) return cmd_train(o, out);
    if (*ev) return cmd_eval(o, out);
    if (*pr) return cmd_predict(o, out);
    if (*gc) return cmd_gradcheck(o, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace dermseg
