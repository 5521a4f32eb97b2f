#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dsm/encoder.hpp"
#include "dsm/optical_flow.hpp"

namespace dsm {

// Line-oriented `key = value` file. `#` starts a comment; blank lines are
// ignored; a repeated key is an error.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in, const std::string& origin = "<stream>");
  static KeyValueConfig parse_string(const std::string& text, const std::string& origin = "<string>");
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::string& origin() const { return origin_; }
  std::vector<std::string> keys() const;

  // Throws ConfigError naming the key when missing or malformed.
  std::string get_string(const std::string& key) const;
  int get_int(const std::string& key) const;
  std::uint64_t get_uint64(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;
  std::vector<double> get_double_list(const std::string& key) const;
  std::vector<std::string> get_string_list(const std::string& key) const;

  // Throws ConfigError for the first key not in `known`.
  void reject_unknown(std::span<const std::string> known) const;

 private:
  struct Value {
    std::string text;
    int line = 0;
  };
  const Value& require(const std::string& key) const;
  std::string where(const Value& v) const;

  std::string origin_;
  std::map<std::string, Value> values_;
};

enum class Objective { kTriplet, kContrastive };
enum class FlowSource { kEstimated, kGroundTruth };

struct TrainConfig {
  Objective objective = Objective::kContrastive;
  EncoderConfig encoder{};
  int stride = 4;  // temporal sampling stride; clip length is encoder.frames

  double margin = 0.5;
  double key_momentum = 0.99;
  int queue_size = 256;
  double temperature = 1.0;

  double max_scale = 5.0;  // M
  int shift_min = 2;       // alpha1
  int shift_max = 20;      // alpha2
  double tps_offset = 0.1;
  int tps_grid = 4;
  bool border_anchors = false;
  double crop_scale_min = 0.6;
  double crop_scale_max = 1.0;
  double flip_prob = 0.5;
  double color_jitter = 0.0;

  double lr = 0.003;
  double sgd_momentum = 0.9;
  double weight_decay = 5e-4;
  std::vector<double> lr_decay_fractions{0.4, 0.6, 0.8};
  int epochs = 30;
  int batch_size = 8;
  std::uint64_t seed = 0;

  FlowSource flow_source = FlowSource::kEstimated;
  HornSchunckOptions flow_options{};

  bool spatial_warp = true;
  bool flow_scaling = true;
  bool temporal_shift = true;
  // Forces the three crops of a triplet onto one window.
  bool shared_crop = false;

  void validate() const;
  // Intra-video negative enters the objective: always for triplet, and in
  // contrastive mode whenever a temporal disturbance is enabled.
  bool uses_intra_negative() const;
};

// Unknown keys and a missing seed are ConfigErrors.
TrainConfig parse_train_config(const KeyValueConfig& kv);
TrainConfig load_train_config(const std::filesystem::path& path);
std::vector<std::string> train_config_keys();

}  // namespace dsm
