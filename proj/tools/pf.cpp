// SPDX-FileCopyrightText: 2026 The PointForge Authors
// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "pointforge/harness.hpp"
#include "pointforge/run_config.hpp"
#include "pointforge/stats.hpp"
#include "pointforge/synthetic.hpp"

namespace fs = std::filesystem;
using namespace pf;

namespace {

struct Settings {
  std::string config_file;
  std::vector<std::pair<std::string, std::string>> overrides;  // in command-line order
};

void add_settings(CLI::App* app, Settings& s) {
  app->add_option("--config", s.config_file, "key = value config file")->check(CLI::ExistingFile);
  const std::pair<const char*, const char*> flags[] = {
      {"--seed", "seed"},         {"--out", "out"},           {"--task", "task"},
      {"--beta", "beta"},         {"--epochs", "epochs"},     {"--lr", "lr"},
      {"--voxel-size", "voxel_size"}, {"--sample-size", "sample_size"}, {"--radius", "radius"},
      {"--preset", "preset"},     {"--init", "init"},         {"--strict", "strict"},
      {"--deterministic", "deterministic"}, {"--data", "data"}, {"--loop-factor", "loop_factor"},
      {"--voxel-sizes", "voxel_sizes"},
  };
  for (const auto& [flag, key] : flags) {
    const std::string k = key;
    app->add_option_function<std::string>(flag, [&s, k](const std::string& v) { s.overrides.emplace_back(k, v); },
                                          "sets config key '" + k + "'");
  }
  app->add_option_function<std::vector<std::string>>(
      "--set",
      [&s](const std::vector<std::string>& items) {
        for (const auto& item : items) {
          const auto eq = item.find('=');
          if (eq == std::string::npos) throw ParseError("--set expects key=value, got '" + item + "'");
          s.overrides.emplace_back(item.substr(0, eq), item.substr(eq + 1));
        }
      },
      "any config key as key=value");
}

RunConfig resolve(const Settings& s, const std::map<std::string, std::string>& base = {}) {
  RunConfig rc;
  for (const auto& [k, v] : base) {
    if (k != "embedding_dim") rc.set(k, v);
  }
  if (!s.config_file.empty()) rc.apply_file(s.config_file);
  for (const auto& [k, v] : s.overrides) rc.set(k, v);
  return rc;
}

std::string opt_str(const std::optional<double>& v) { return v ? std::to_string(*v) : std::string("-"); }

void print_row(const HistoryRow& r) {
  std::printf("epoch %d  lr %.6g  loss %.5f  acc %s  piou %s  harmonic %s\n", r.epoch, r.lr, r.train_loss,
              opt_str(r.val_acc).c_str(), opt_str(r.val_piou).c_str(), opt_str(r.harmonic).c_str());
  std::fflush(stdout);
}

void check_run_outputs(const TrainResult& result, const fs::path& out) {
  const auto meta = read_metadata(result.best_checkpoint);
  std::optional<ProjectionHead<float>> proj;
  load_trained_model(result.best_checkpoint, &proj);
  if (read_history(out / "history.csv").size() != result.history.size()) throw FormatError("history file is incomplete");
  std::printf("best checkpoint: %s (epoch %d)\n", result.best_checkpoint.string().c_str(), meta.epoch);
}

std::vector<PointCloud>& pick_split(Dataset& data, const std::string& split) {
  switch (parse_split_name(split)) {
    case SplitName::Train: return data.train;
    case SplitName::Val: return data.val;
    case SplitName::Test: return data.test;
  }
  return data.val;
}

int gen_data(const Settings& s) {
  const RunConfig rc = resolve(s);
  const fs::path root = rc.get("out");
  const GeneratorSpec spec = rc.generator_spec();
  const DatasetInfo info = generate_dataset(spec, rc.split_counts(), root);
  const ClassPrompts prompts = generate_embeddings(spec, rc.embedding_spec(), root);
  // Self-check: everything written must load back.
  const Dataset data = load_dataset(root, spec.up_axis);
  std::size_t clouds = 0;
  for (const auto* split : {&data.train, &data.val, &data.test}) {
    for (const auto& c : *split) {
      c.validate();
      load_embedding(embedding_path(root, c.name)).validate();
      ++clouds;
    }
  }
  if (load_class_prompts(root / "class_prompts.pfcls").vectors != prompts.vectors) {
    throw FormatError("class prompts did not round-trip");
  }
  std::printf("wrote %zu clouds (%zu/%zu/%zu) to %s\n", clouds, info.splits[0].entries.size(),
              info.splits[1].entries.size(), info.splits[2].entries.size(), root.string().c_str());
  return 0;
}

int stats(const Settings& s) {
  const RunConfig rc = resolve(s);
  const Axis up = parse_axis(rc.get("up_axis"));
  const Dataset data = load_dataset(rc.get("data"), up);
  const fs::path out = rc.get("out");
  fs::create_directories(out);
  for (double size : rc.get_float_list("voxel_sizes")) {
    if (!(size > 0.0)) throw ParseError("voxel sizes must be positive");
    std::vector<VoxelStat> all;
    const std::pair<const char*, const std::vector<PointCloud>*> splits[] = {
        {"train", &data.train}, {"val", &data.val}, {"test", &data.test}};
    for (const auto& [name, clouds] : splits) {
      auto st = voxel_stats(*clouds, name, static_cast<float>(size));
      all.insert(all.end(), st.begin(), st.end());
    }
    char file[64];
    std::snprintf(file, sizeof file, "voxels_%g.csv", size);
    write_voxel_stats(out / file, all);
    read_csv(out / file).column("voxels");
    std::printf("%s\n", (out / file).string().c_str());
  }
  std::vector<PointCloud> labeled;
  for (const auto* split : {&data.train, &data.val}) labeled.insert(labeled.end(), split->begin(), split->end());
  const auto parts = LabelVocabulary::building_parts();
  const auto types = LabelVocabulary::building_types();
  write_label_histogram(out / "part_labels.csv", label_histogram(labeled, parts, LabelKind::Segmentation), parts);
  write_label_histogram(out / "type_labels.csv", label_histogram(labeled, types, LabelKind::Classification), types);
  read_csv(out / "part_labels.csv").column("count");
  read_csv(out / "type_labels.csv").column("count");
  return 0;
}

int train_cmd(const Settings& s, bool ulip) {
  RunConfig rc = resolve(s);
  if (ulip && rc.get("task") != "ulip_pretrain") rc.set("task", "ulip_pretrain");
  const TrainConfig config = rc.train_config();
  if (!ulip && config.task == Task::UlipPretrain) throw ParseError("use 'pretrain' for task ulip_pretrain");
  const Dataset data = load_dataset(rc.get("data"), config.augment.up_axis);
  const fs::path out = rc.get("out");
  fs::create_directories(out);
  {
    std::ofstream f(out / "config.txt", std::ios::binary);
    f << rc.emit();
  }
  TrainHooks hooks;
  hooks.on_epoch = print_row;
  TrainResult result;
  try {
    if (ulip) {
      const fs::path emb = rc.is_set("embeddings") ? fs::path(rc.get("embeddings")) : fs::path(rc.get("data"));
      result = pretrain(config, data, emb, out, hooks);
    } else {
      result = train(config, data, out, hooks);
    }
  } catch (const TrainingDiverged& e) {
    std::fprintf(stderr, "training diverged: epoch %d, step %lld: %s\n", e.epoch, e.step, e.what());
    return 3;
  }
  check_run_outputs(result, out);
  return 0;
}

int eval_cmd(const Settings& s, const std::string& checkpoint, const std::string& split) {
  const CheckpointMetadata meta = read_metadata(checkpoint);
  const RunConfig rc = resolve(s, meta.config);
  const TrainConfig config = rc.train_config();
  std::optional<ProjectionHead<float>> proj;
  auto model = load_trained_model(checkpoint, &proj);
  Dataset data = load_dataset(rc.get("data"), config.augment.up_axis);
  const auto& clouds = pick_split(data, split);
  const fs::path out = rc.get("out");
  fs::create_directories(out);
  EvalReport report;
  if (proj) {
    const fs::path emb = rc.is_set("embeddings") ? fs::path(rc.get("embeddings")) : fs::path(rc.get("data"));
    const ClassPrompts prompts = load_class_prompts(emb / "class_prompts.pfcls");
    std::set<int> present;
    for (const auto& c : data.train.empty() ? clouds : data.train) {
      if (c.type_label) present.insert(*c.type_label);
    }
    const std::vector<int> candidates(present.begin(), present.end());
    report.overall_accuracy = zero_shot_accuracy(*model, *proj, clouds, prompts, candidates, config);
  } else {
    report = evaluate(*model, clouds, config);
  }
  write_report(out, report, LabelVocabulary::building_parts());
  std::printf("%s", format_report(report).c_str());
  if (!fs::exists(out / "report.txt")) throw FormatError("report was not written");
  return 0;
}

int predict_cmd(const Settings& s, const std::string& checkpoint, const std::string& split) {
  const CheckpointMetadata meta = read_metadata(checkpoint);
  const RunConfig rc = resolve(s, meta.config);
  const TrainConfig config = rc.train_config();
  auto model = load_trained_model(checkpoint);
  Dataset data = load_dataset(rc.get("data"), config.augment.up_axis);
  const auto& clouds = pick_split(data, split);
  const fs::path out = rc.get("out");
  predict(*model, clouds, out, config);
  for (const auto& c : clouds) {
    std::ifstream f(out / (c.name + ".labels"));
    std::size_t lines = 0;
    for (std::string line; std::getline(f, line);) {
      const int label = std::stoi(line);
      if (label < 1 || label > kNumPartClasses) throw FormatError("label out of range in " + c.name);
      ++lines;
    }
    if (lines != c.size()) throw FormatError("label file for " + c.name + " has the wrong length");
  }
  std::printf("wrote %zu label files to %s\n", clouds.size(), out.string().c_str());
  return 0;
}

int plot_cmd(const std::vector<std::string>& inputs, const std::string& out) {
  fs::create_directories(out);
  for (const auto& in : inputs) {
    const std::string svg = plot_csv(in);
    const fs::path target = fs::path(out) / (fs::path(in).stem().string() + ".svg");
    std::ofstream f(target, std::ios::binary);
    f << svg;
    if (!f) throw Error("cannot write " + target.string());
    std::printf("%s\n", target.string().c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Point-cloud building segmentation toolkit"};
  app.require_subcommand(1);

  Settings s;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic building dataset and embeddings");
  auto* st = app.add_subcommand("stats", "voxel and label histograms as CSV");
  auto* tr = app.add_subcommand("train", "train a model");
  auto* pre = app.add_subcommand("pretrain", "align the encoder with text and image embeddings");
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a labeled split");
  auto* pr = app.add_subcommand("predict", "write per-point label files");
  auto* pl = app.add_subcommand("plot", "SVG charts from history or stats CSV files");
  auto* em = app.add_subcommand("emit-config", "print the effective configuration");
  for (auto* sub : {gen, st, tr, pre, ev, pr, em}) add_settings(sub, s);

  std::string checkpoint, split = "val";
  for (auto* sub : {ev, pr}) {
    sub->add_option("--checkpoint", checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  }
  ev->add_option("--split", split, "train, val or test");
  std::string predict_split = "test";
  pr->add_option("--split", predict_split, "train, val or test");
  std::vector<std::string> plot_inputs;
  std::string plot_out = "plots";
  pl->add_option("inputs", plot_inputs, "CSV files")->required()->check(CLI::ExistingFile);
  pl->add_option("--out", plot_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const ParseError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  }

  try {
    if (*gen) return gen_data(s);
    if (*st) return stats(s);
    if (*tr) return train_cmd(s, false);
    if (*pre) return train_cmd(s, true);
    if (*ev) return eval_cmd(s, checkpoint, split);
    if (*pr) return predict_cmd(s, checkpoint, predict_split);
    if (*pl) return plot_cmd(plot_inputs, plot_out);
    if (*em) {
      std::cout << resolve(s).emit();
      return 0;
    }
  } catch (const ParseError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
