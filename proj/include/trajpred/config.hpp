#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "trajpred/data.hpp"

namespace trajpred {

enum class InputMode { kOffset, kPosition, kBoth };

std::string input_mode_name(InputMode m);
InputMode input_mode_from_name(const std::string& name);

// Architecture hyperparameters. Defaults follow the reference configuration:
// 64-wide hidden and embedding dimensions, 8 attention heads, 3 encoder
// blocks, 2 message-passing rounds, 10 m neighborhood.
struct ModelConfig {
  int hidden = 64;
  int heads = 8;
  int blocks = 3;
  int modes = 5;       // mixture components K
  int msg_rounds = 2;  // message passing rounds l
  double d_max = 10.0;
  int t_obs = 8;
  int t_pred = 12;
  int rel_width = 32;  // relative-position embedding width
  int ff_width = 128;  // transformer feed-forward inner width
  InputMode input_mode = InputMode::kOffset;
  bool no_sa = false;
  bool no_gcn = false;
  bool gmm_head = false;
  bool mlp_decoder = false;
  double dropout = 0.0;
};

struct TrainConfig {
  double lr_init = 5e-4;
  double lr_final = 1e-5;
  int batch_size = 32;
  int max_epochs = 100;
  std::uint64_t seed = 1;
  double grad_clip = 10.0;
  double cls_weight = 1.0;
};

struct DataConfig {
  std::string dataset = "junction";  // "junction" | "files"
  int stride = 1;
  bool swap_xy = false;
  double sampling_rate_hz = 2.5;
  data::JunctionParams junction;
  int n_test_scenes = 60;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
};

// Line-oriented `key = value` file; '#' starts a comment line. Unknown keys
// are rejected with the key name.
RunConfig parse_config(std::istream& in);
RunConfig parse_config_file(const std::string& path);
void apply_config_line(RunConfig& cfg, const std::string& key, const std::string& value);

// Canonical text form of the architecture; its FNV-1a hash guards checkpoint
// compatibility.
std::string serialize_model_config(const ModelConfig& cfg);
ModelConfig parse_model_config_text(const std::string& text);
std::uint64_t model_config_hash(const ModelConfig& cfg);

std::uint64_t fnv1a64(const std::string& s);

}  // namespace trajpred
