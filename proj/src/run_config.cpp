// SPDX-FileCopyrightText: 2026 The PointForge Authors
// SPDX-License-Identifier: Apache-2.0

#include "pointforge/run_config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace pf {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<ConfigKey> build_keys() {
  using K = KeyType;
  return {
      {"task", K::Enum, "segmentation", {"classification", "segmentation", "multitask", "ulip_pretrain"}, "learning task"},
      {"preset", K::Enum, "s", {"tiny", "s", "xl"}, "model size"},
      {"profile", K::Enum, "seg", {"seg", "cls"}, "downsampling strides (seg: 4, cls: 2)"},
      {"epochs", K::Int, "100", {}, "training epochs"},
      {"loop_factor", K::Int, "12", {}, "passes over the train split per epoch"},
      {"batch_size", K::Int, "8", {}, "clouds per step"},
      {"lr", K::Float, "0.01", {}, "base learning rate"},
      {"min_lr", K::Float, "0", {}, "final learning rate of the cosine schedule"},
      {"schedule", K::Enum, "cosine", {"cosine", "constant"}, "learning-rate schedule"},
      {"optimizer", K::Enum, "sgd", {"sgd", "adam"}, "optimizer"},
      {"momentum", K::Float, "0.9", {}, "SGD momentum"},
      {"weight_decay", K::Float, "0.0001", {}, "weight decay (norm parameters and biases exempt)"},
      {"beta", K::Float, "0.01", {}, "multitask weight of the classification loss"},
      {"voxel_size", K::Float, "0.02", {}, "voxel edge length"},
      {"sample_size", K::Int, "12500", {}, "points per training sub-cloud"},
      {"radius", K::Float, "0.05", {}, "first-stage ball query radius"},
      {"iou_mode", K::Enum, "pooled", {"pooled", "per_building"}, "PartIoU aggregation"},
      {"init", K::Path, "", {}, "checkpoint to start from"},
      {"strict", K::Bool, "false", {}, "require an exact parameter match when loading init"},
      {"seed", K::Int, "0", {}, "seed for every random stream"},
      {"deterministic", K::Bool, "false", {}, "fixed sampling start points"},
      {"up_axis", K::Enum, "y", {"x", "y", "z"}, "vertical axis"},
      {"rotation", K::Bool, "true", {}, "random rotation about the up axis"},
      {"scale_lo", K::Float, "0.9", {}, "lower scaling bound"},
      {"scale_hi", K::Float, "1.1", {}, "upper scaling bound"},
      {"jitter_sigma", K::Float, "0.005", {}, "coordinate jitter std"},
      {"jitter_clip", K::Float, "0.02", {}, "coordinate jitter clip"},
      {"color_drop", K::Float, "0.2", {}, "probability of zeroing colors"},
      {"color_contrast", K::Float, "0.2", {}, "probability of auto contrast"},
      {"contrast_blend", K::Float, "0.5", {}, "auto contrast blend factor"},
      {"data", K::Path, "data", {}, "dataset root"},
      {"out", K::Path, "out", {}, "output directory"},
      {"embeddings", K::Path, "", {}, "embedding root (defaults to the dataset root)"},
      {"gen.train", K::Int, "8", {}, "generated train buildings"},
      {"gen.val", K::Int, "2", {}, "generated validation buildings"},
      {"gen.test", K::Int, "2", {}, "generated test buildings"},
      {"gen.points", K::Int, "4096", {}, "points per generated building"},
      {"gen.noise", K::Float, "0.002", {}, "coordinate noise std"},
      {"gen.color_noise", K::Float, "0.04", {}, "color noise std"},
      {"gen.unspecified", K::Float, "0", {}, "fraction of points relabeled unspecified"},
      {"emb.dim", K::Int, "32", {}, "embedding width"},
      {"emb.separation", K::Float, "4", {}, "class separation of synthetic embeddings"},
      {"emb.jitter", K::Float, "0.3", {}, "per-row embedding jitter"},
      {"emb.text_rows", K::Int, "64", {}, "text rows per building"},
      {"emb.image_rows", K::Int, "16", {}, "image rows per building"},
      {"voxel_sizes", K::FloatList, "0.01,0.02,0.05", {}, "voxel sizes for stats"},
  };
}

const ConfigKey& find_key(const std::string& name) {
  const auto& keys = config_keys();
  const auto it = std::find_if(keys.begin(), keys.end(), [&](const ConfigKey& k) { return k.name == name; });
  if (it == keys.end()) throw ParseError("unknown config key '" + name + "'");
  return *it;
}

bool parse_int(std::string_view s, long long& v) {
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

bool parse_float(std::string_view s, double& v) {
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  return res.ec == std::errc() && res.ptr == s.data() + s.size() && std::isfinite(v);
}

std::vector<double> split_floats(std::string_view s, bool& ok) {
  std::vector<double> out;
  ok = true;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const std::string part = trim(s.substr(start, comma == std::string_view::npos ? s.npos : comma - start));
    double v = 0.0;
    if (!parse_float(part, v)) {
      ok = false;
      return {};
    }
    out.push_back(v);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

bool parse_bool(std::string_view text) {
  std::string t(text);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ParseError("expected a boolean, got '" + std::string(text) + "'");
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = build_keys();
  return keys;
}

RunConfig::RunConfig() {
  for (const auto& k : config_keys()) values_[k.name] = k.default_value;
}

void RunConfig::set(const std::string& key, const std::string& raw) {
  const ConfigKey& k = find_key(key);
  std::string value = trim(raw);
  const auto bad = [&] { return ParseError("invalid value '" + value + "' for key '" + key + "'"); };
  switch (k.type) {
    case KeyType::Int: {
      long long v = 0;
      if (!parse_int(value, v) || v < 0) throw bad();
      break;
    }
    case KeyType::Float: {
      double v = 0.0;
      if (!parse_float(value, v)) throw bad();
      break;
    }
    case KeyType::Bool:
      try {
        value = parse_bool(value) ? "true" : "false";
      } catch (const ParseError&) {
        throw bad();
      }
      break;
    case KeyType::Enum:
      if (std::find(k.choices.begin(), k.choices.end(), value) == k.choices.end()) throw bad();
      break;
    case KeyType::FloatList: {
      bool ok = false;
      split_floats(value, ok);
      if (!ok) throw bad();
      break;
    }
    case KeyType::String:
    case KeyType::Path:
      if (value.find('\n') != std::string::npos) throw bad();
      break;
  }
  values_[key] = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  find_key(key);
  return values_.at(key);
}

void RunConfig::apply_text(std::string_view text, const std::string& origin) {
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    try {
      set(trim(std::string_view(line).substr(0, eq)), line.substr(eq + 1));
    } catch (const ParseError& e) {
      throw ParseError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void RunConfig::apply_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open config file " + path.string());
  std::ostringstream s;
  s << f.rdbuf();
  apply_text(s.str(), path.string());
}

std::string RunConfig::emit() const {
  std::string out;
  for (const auto& k : config_keys()) {
    out += k.name;
    out += " = ";
    out += values_.at(k.name);
    out += '\n';
  }
  return out;
}

int RunConfig::get_int(const std::string& key) const {
  long long v = 0;
  if (!parse_int(get(key), v)) throw ParseError("key '" + key + "' is not an integer");
  return static_cast<int>(v);
}

double RunConfig::get_float(const std::string& key) const {
  double v = 0.0;
  if (!parse_float(get(key), v)) throw ParseError("key '" + key + "' is not a number");
  return v;
}

bool RunConfig::get_bool(const std::string& key) const { return parse_bool(get(key)); }

std::vector<double> RunConfig::get_float_list(const std::string& key) const {
  bool ok = false;
  auto v = split_floats(get(key), ok);
  if (!ok) throw ParseError("key '" + key + "' is not a number list");
  return v;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig c;
  c.task = parse_task(get("task"));
  c.preset = get("preset");
  c.profile = get("profile") == "cls" ? StrideProfile::Cls : StrideProfile::Seg;
  c.epochs = get_int("epochs");
  c.augment.loop_factor = get_int("loop_factor");
  c.batch_size = static_cast<std::size_t>(get_int("batch_size"));
  c.lr = get_float("lr");
  c.min_lr = get_float("min_lr");
  c.schedule = get("schedule") == "cosine" ? nn::ScheduleKind::Cosine : nn::ScheduleKind::Constant;
  c.optimizer = get("optimizer") == "sgd" ? OptimizerKind::Sgd : OptimizerKind::Adam;
  c.momentum = get_float("momentum");
  c.weight_decay = get_float("weight_decay");
  c.beta = get_float("beta");
  c.voxel_size = static_cast<float>(get_float("voxel_size"));
  c.sample_size = static_cast<std::size_t>(get_int("sample_size"));
  c.radius = static_cast<float>(get_float("radius"));
  c.iou_mode = get("iou_mode") == "pooled" ? IouMode::Pooled : IouMode::PerBuildingAverage;
  if (is_set("init")) c.init = get("init");
  c.strict = get_bool("strict");
  c.seed = static_cast<std::uint64_t>(get_int("seed"));
  c.deterministic = get_bool("deterministic");
  c.augment.up_axis = parse_axis(get("up_axis"));
  c.augment.rotation_enabled = get_bool("rotation");
  c.augment.scale_lo = static_cast<float>(get_float("scale_lo"));
  c.augment.scale_hi = static_cast<float>(get_float("scale_hi"));
  c.augment.jitter_sigma = static_cast<float>(get_float("jitter_sigma"));
  c.augment.jitter_clip = static_cast<float>(get_float("jitter_clip"));
  c.augment.color_drop_prob = static_cast<float>(get_float("color_drop"));
  c.augment.color_contrast_prob = static_cast<float>(get_float("color_contrast"));
  c.augment.contrast_blend = static_cast<float>(get_float("contrast_blend"));
  c.validate();
  return c;
}

GeneratorSpec RunConfig::generator_spec() const {
  GeneratorSpec s = GeneratorSpec::default_spec();
  s.points_per_building = static_cast<std::size_t>(get_int("gen.points"));
  s.noise_sigma = static_cast<float>(get_float("gen.noise"));
  s.color_noise = static_cast<float>(get_float("gen.color_noise"));
  s.unspecified_fraction = static_cast<float>(get_float("gen.unspecified"));
  s.up_axis = parse_axis(get("up_axis"));
  s.seed = static_cast<std::uint64_t>(get_int("seed"));
  s.validate();
  return s;
}

SplitCounts RunConfig::split_counts() const {
  return SplitCounts{static_cast<std::size_t>(get_int("gen.train")), static_cast<std::size_t>(get_int("gen.val")),
                     static_cast<std::size_t>(get_int("gen.test"))};
}

EmbeddingSpec RunConfig::embedding_spec() const {
  EmbeddingSpec e;
  e.dim = static_cast<std::size_t>(get_int("emb.dim"));
  e.separation = get_float("emb.separation");
  e.jitter = get_float("emb.jitter");
  e.text_rows = static_cast<std::size_t>(get_int("emb.text_rows"));
  e.image_rows = static_cast<std::size_t>(get_int("emb.image_rows"));
  e.seed = static_cast<std::uint64_t>(get_int("seed"));
  return e;
}

}  // namespace pf
