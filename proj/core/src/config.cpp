#include "dsm/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "dsm/error.hpp"

namespace dsm {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss(s);
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

template <typename T>
bool parse_number(const std::string& text, T& out) {
  const char* b = text.data();
  const char* e = b + text.size();
  const auto [ptr, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && ptr == e;
}

std::array<int, 3> parse_triple(const std::string& text, const std::string& key) {
  const auto parts = split(text, 'x');
  std::array<int, 3> out{};
  if (parts.size() == 1) {
    int v = 0;
    if (!parse_number(parts[0], v)) throw ConfigError(key + ": expected an integer or TxHxW, got '" + text + "'");
    out = {v, v, v};
    return out;
  }
  if (parts.size() != 3) throw ConfigError(key + ": expected TxHxW, got '" + text + "'");
  for (int i = 0; i < 3; ++i) {
    if (!parse_number(parts[static_cast<std::size_t>(i)], out[static_cast<std::size_t>(i)])) {
      throw ConfigError(key + ": expected TxHxW, got '" + text + "'");
    }
  }
  return out;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::istream& in, const std::string& origin) {
  KeyValueConfig cfg;
  cfg.origin_ = origin;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
    if (cfg.values_.count(key)) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
    cfg.values_[key] = {value, line_no};
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::parse_string(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  return parse(in, origin);
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  return parse(in, path.string());
}

std::vector<std::string> KeyValueConfig::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_) out.push_back(k);
  return out;
}

const KeyValueConfig::Value& KeyValueConfig::require(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(origin_ + ": missing required key '" + key + "'");
  return it->second;
}

std::string KeyValueConfig::where(const Value& v) const {
  return origin_ + ":" + std::to_string(v.line);
}

std::string KeyValueConfig::get_string(const std::string& key) const { return require(key).text; }

int KeyValueConfig::get_int(const std::string& key) const {
  const Value& v = require(key);
  int out = 0;
  if (!parse_number(v.text, out)) throw ConfigError(where(v) + ": '" + key + "' expects an integer, got '" + v.text + "'");
  return out;
}

std::uint64_t KeyValueConfig::get_uint64(const std::string& key) const {
  const Value& v = require(key);
  std::uint64_t out = 0;
  if (!parse_number(v.text, out)) {
    throw ConfigError(where(v) + ": '" + key + "' expects a non-negative integer, got '" + v.text + "'");
  }
  return out;
}

double KeyValueConfig::get_double(const std::string& key) const {
  const Value& v = require(key);
  double out = 0.0;
  if (!parse_number(v.text, out) || !std::isfinite(out)) {
    throw ConfigError(where(v) + ": '" + key + "' expects a number, got '" + v.text + "'");
  }
  return out;
}

bool KeyValueConfig::get_bool(const std::string& key) const {
  const Value& v = require(key);
  if (v.text == "true" || v.text == "1" || v.text == "on" || v.text == "yes") return true;
  if (v.text == "false" || v.text == "0" || v.text == "off" || v.text == "no") return false;
  throw ConfigError(where(v) + ": '" + key + "' expects true or false, got '" + v.text + "'");
}

std::vector<std::string> KeyValueConfig::get_string_list(const std::string& key) const {
  const Value& v = require(key);
  if (v.text.empty()) return {};
  return split(v.text, ',');
}

std::vector<int> KeyValueConfig::get_int_list(const std::string& key) const {
  std::vector<int> out;
  for (const std::string& s : get_string_list(key)) {
    int x = 0;
    if (!parse_number(s, x)) throw ConfigError(where(require(key)) + ": '" + key + "' expects integers, got '" + s + "'");
    out.push_back(x);
  }
  return out;
}

std::vector<double> KeyValueConfig::get_double_list(const std::string& key) const {
  std::vector<double> out;
  for (const std::string& s : get_string_list(key)) {
    double x = 0.0;
    if (!parse_number(s, x)) throw ConfigError(where(require(key)) + ": '" + key + "' expects numbers, got '" + s + "'");
    out.push_back(x);
  }
  return out;
}

void KeyValueConfig::reject_unknown(std::span<const std::string> known) const {
  for (const auto& [key, value] : values_) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError(where(value) + ": unknown key '" + key + "'");
    }
  }
}

void TrainConfig::validate() const {
  try {
    encoder.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("encoder: ") + e.what());
  }
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(stride >= 1, "stride must be >= 1");
  require(margin >= 0.0, "margin must be >= 0");
  require(key_momentum >= 0.0 && key_momentum <= 1.0, "key_momentum must lie in [0, 1]");
  require(queue_size >= 1, "queue_size must be >= 1");
  require(temperature > 0.0, "temperature must be > 0");
  require(max_scale >= 0.0, "max_scale must be >= 0");
  require(shift_min >= 0 && shift_min <= shift_max, "shift range must satisfy 0 <= shift_min <= shift_max");
  require(tps_offset >= 0.0 && tps_offset <= 0.2, "tps_offset must lie in [0, 0.2]");
  require(tps_grid >= 2, "tps_grid must be >= 2");
  require(crop_scale_min > 0.0 && crop_scale_min <= crop_scale_max && crop_scale_max <= 1.0,
          "crop scales must satisfy 0 < crop_scale_min <= crop_scale_max <= 1");
  require(flip_prob >= 0.0 && flip_prob <= 1.0, "flip_prob must lie in [0, 1]");
  require(color_jitter >= 0.0, "color_jitter must be >= 0");
  require(lr >= 0.0, "lr must be >= 0");
  require(sgd_momentum >= 0.0 && sgd_momentum < 1.0, "sgd_momentum must lie in [0, 1)");
  require(weight_decay >= 0.0, "weight_decay must be >= 0");
  for (double f : lr_decay_fractions) require(f > 0.0 && f < 1.0, "lr_decay_fractions must lie in (0, 1)");
  require(std::is_sorted(lr_decay_fractions.begin(), lr_decay_fractions.end()), "lr_decay_fractions must be ascending");
  require(epochs >= 1, "epochs must be >= 1");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(flow_options.smoothness > 0.0, "hs_smoothness must be > 0");
  require(flow_options.iterations >= 1, "hs_iterations must be >= 1");
}

bool TrainConfig::uses_intra_negative() const {
  return objective == Objective::kTriplet || temporal_shift || flow_scaling;
}

std::vector<std::string> train_config_keys() {
  return {"objective", "frames", "input_size", "input_channels", "stage_channels", "stage_strides",
          "kernel", "embed_dim", "stride", "margin", "key_momentum", "queue_size", "temperature",
          "max_scale", "shift_min", "shift_max", "tps_offset", "tps_grid", "border_anchors",
          "crop_scale_min", "crop_scale_max", "flip_prob", "color_jitter", "lr", "sgd_momentum",
          "weight_decay", "lr_decay_fractions", "epochs", "batch_size", "seed", "flow_source",
          "hs_smoothness", "hs_iterations", "spatial_warp", "flow_scaling", "temporal_shift",
          "shared_crop"};
}

TrainConfig parse_train_config(const KeyValueConfig& kv) {
  const std::vector<std::string> known = train_config_keys();
  kv.reject_unknown(known);
  if (!kv.has("seed")) throw ConfigError(kv.origin() + ": 'seed' is mandatory");

  TrainConfig c;
  c.seed = kv.get_uint64("seed");
  if (kv.has("objective")) {
    const std::string o = kv.get_string("objective");
    if (o == "triplet") {
      c.objective = Objective::kTriplet;
    } else if (o == "contrastive") {
      c.objective = Objective::kContrastive;
    } else {
      throw ConfigError(kv.origin() + ": objective must be triplet or contrastive, got '" + o + "'");
    }
  }
  if (kv.has("flow_source")) {
    const std::string f = kv.get_string("flow_source");
    if (f == "estimated") {
      c.flow_source = FlowSource::kEstimated;
    } else if (f == "ground_truth" || f == "ground-truth") {
      c.flow_source = FlowSource::kGroundTruth;
    } else {
      throw ConfigError(kv.origin() + ": flow_source must be estimated or ground_truth, got '" + f + "'");
    }
  }

  auto set_int = [&](const char* k, int& v) { if (kv.has(k)) v = kv.get_int(k); };
  auto set_double = [&](const char* k, double& v) { if (kv.has(k)) v = kv.get_double(k); };
  auto set_bool = [&](const char* k, bool& v) { if (kv.has(k)) v = kv.get_bool(k); };

  set_int("frames", c.encoder.frames);
  if (kv.has("input_size")) c.encoder.height = c.encoder.width = kv.get_int("input_size");
  set_int("input_channels", c.encoder.channels);
  set_int("embed_dim", c.encoder.embed_dim);
  if (kv.has("stage_channels") || kv.has("stage_strides") || kv.has("kernel")) {
    std::vector<int> channels;
    for (const ConvStage& s : c.encoder.stages) channels.push_back(s.out_channels);
    if (kv.has("stage_channels")) channels = kv.get_int_list("stage_channels");
    std::vector<std::array<int, 3>> strides;
    if (kv.has("stage_strides")) {
      for (const std::string& s : kv.get_string_list("stage_strides")) strides.push_back(parse_triple(s, "stage_strides"));
    } else {
      for (const ConvStage& s : c.encoder.stages) strides.push_back(s.stride);
    }
    if (strides.size() != channels.size()) {
      throw ConfigError(kv.origin() + ": stage_channels and stage_strides list different stage counts");
    }
    const std::array<int, 3> kernel =
        kv.has("kernel") ? parse_triple(kv.get_string("kernel"), "kernel") : std::array<int, 3>{3, 3, 3};
    c.encoder.stages.clear();
    for (std::size_t i = 0; i < channels.size(); ++i) c.encoder.stages.push_back({channels[i], kernel, strides[i]});
  }

  set_int("stride", c.stride);
  set_double("margin", c.margin);
  set_double("key_momentum", c.key_momentum);
  set_int("queue_size", c.queue_size);
  set_double("temperature", c.temperature);
  set_double("max_scale", c.max_scale);
  set_int("shift_min", c.shift_min);
  set_int("shift_max", c.shift_max);
  set_double("tps_offset", c.tps_offset);
  set_int("tps_grid", c.tps_grid);
  set_bool("border_anchors", c.border_anchors);
  set_double("crop_scale_min", c.crop_scale_min);
  set_double("crop_scale_max", c.crop_scale_max);
  set_double("flip_prob", c.flip_prob);
  set_double("color_jitter", c.color_jitter);
  set_double("lr", c.lr);
  set_double("sgd_momentum", c.sgd_momentum);
  set_double("weight_decay", c.weight_decay);
  if (kv.has("lr_decay_fractions")) c.lr_decay_fractions = kv.get_double_list("lr_decay_fractions");
  set_int("epochs", c.epochs);
  set_int("batch_size", c.batch_size);
  set_double("hs_smoothness", c.flow_options.smoothness);
  set_int("hs_iterations", c.flow_options.iterations);
  set_bool("spatial_warp", c.spatial_warp);
  set_bool("flow_scaling", c.flow_scaling);
  set_bool("temporal_shift", c.temporal_shift);
  set_bool("shared_crop", c.shared_crop);
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  return parse_train_config(KeyValueConfig::load(path));
}

}  // namespace dsm
