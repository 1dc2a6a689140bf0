#include "trajpred/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace trajpred {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  const char* begin = v.c_str();
  char* end = nullptr;
  double d = std::strtod(begin, &end);
  if (v.empty() || end != begin + v.size())
    throw std::invalid_argument("config: bad numeric value for key " + key + ": '" + v + "'");
  return d;
}

int to_int(const std::string& key, const std::string& v) {
  double d = to_double(key, v);
  int i = static_cast<int>(d);
  if (static_cast<double>(i) != d)
    throw std::invalid_argument("config: expected integer for key " + key + ": '" + v + "'");
  return i;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config: expected boolean for key " + key + ": '" + v + "'");
}

std::vector<double> to_doubles(const std::string& key, const std::string& v) {
  std::istringstream is(v);
  std::vector<double> out;
  std::string tok;
  while (is >> tok) out.push_back(to_double(key, tok));
  return out;
}

}  // namespace

std::string input_mode_name(InputMode m) {
  switch (m) {
    case InputMode::kOffset: return "offset";
    case InputMode::kPosition: return "position";
    case InputMode::kBoth: return "both";
  }
  return "offset";
}

InputMode input_mode_from_name(const std::string& name) {
  if (name == "offset") return InputMode::kOffset;
  if (name == "position") return InputMode::kPosition;
  if (name == "both") return InputMode::kBoth;
  throw std::invalid_argument("config: unknown input_mode '" + name + "'");
}

void apply_config_line(RunConfig& cfg, const std::string& key, const std::string& value) {
  ModelConfig& m = cfg.model;
  TrainConfig& t = cfg.train;
  DataConfig& d = cfg.data;
  if (key == "hidden") m.hidden = to_int(key, value);
  else if (key == "heads") m.heads = to_int(key, value);
  else if (key == "blocks") m.blocks = to_int(key, value);
  else if (key == "modes") m.modes = to_int(key, value);
  else if (key == "msg_rounds") m.msg_rounds = to_int(key, value);
  else if (key == "d_max") m.d_max = to_double(key, value);
  else if (key == "t_obs") { m.t_obs = to_int(key, value); d.junction.t_obs = m.t_obs; }
  else if (key == "t_pred") { m.t_pred = to_int(key, value); d.junction.t_pred = m.t_pred; }
  else if (key == "rel_width") m.rel_width = to_int(key, value);
  else if (key == "ff_width") m.ff_width = to_int(key, value);
  else if (key == "input_mode") m.input_mode = input_mode_from_name(value);
  else if (key == "no_sa") m.no_sa = to_bool(key, value);
  else if (key == "no_gcn") m.no_gcn = to_bool(key, value);
  else if (key == "gmm_head") m.gmm_head = to_bool(key, value);
  else if (key == "mlp_decoder") m.mlp_decoder = to_bool(key, value);
  else if (key == "dropout") m.dropout = to_double(key, value);
  else if (key == "lr_init") t.lr_init = to_double(key, value);
  else if (key == "lr_final") t.lr_final = to_double(key, value);
  else if (key == "batch_size") t.batch_size = to_int(key, value);
  else if (key == "max_epochs") t.max_epochs = to_int(key, value);
  else if (key == "seed") t.seed = static_cast<std::uint64_t>(to_double(key, value));
  else if (key == "grad_clip") t.grad_clip = to_double(key, value);
  else if (key == "cls_weight") t.cls_weight = to_double(key, value);
  else if (key == "dataset") {
    if (value != "junction" && value != "files")
      throw std::invalid_argument("config: unknown dataset '" + value + "'");
    d.dataset = value;
  } else if (key == "stride") d.stride = to_int(key, value);
  else if (key == "swap_xy") d.swap_xy = to_bool(key, value);
  else if (key == "sampling_rate") d.sampling_rate_hz = to_double(key, value);
  else if (key == "n_scenes") d.junction.n_scenes = to_int(key, value);
  else if (key == "n_test_scenes") d.n_test_scenes = to_int(key, value);
  else if (key == "n_exits") d.junction.n_exits = to_int(key, value);
  else if (key == "branch_probs") d.junction.branch_probs = to_doubles(key, value);
  else if (key == "noise_std") d.junction.noise_std = to_double(key, value);
  else if (key == "synth_seed") d.junction.seed = static_cast<std::uint64_t>(to_double(key, value));
  else if (key == "speed") d.junction.speed = to_double(key, value);
  else if (key == "agents_per_scene") d.junction.agents_per_scene = to_int(key, value);
  else if (key == "agent_spacing") d.junction.agent_spacing = to_double(key, value);
  else if (key == "junction_x") d.junction.junction_x = to_double(key, value);
  else if (key == "junction_y") d.junction.junction_y = to_double(key, value);
  else
    throw std::invalid_argument("config: unknown key '" + key + "'");
}

RunConfig parse_config(std::istream& in) {
  RunConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(line_no) + " is not 'key = value'");
    std::string key = trim(s.substr(0, eq));
    std::string value = trim(s.substr(eq + 1));
    apply_config_line(cfg, key, value);
  }
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  return parse_config(in);
}

std::string serialize_model_config(const ModelConfig& m) {
  std::ostringstream os;
  os << "hidden = " << m.hidden << "\n"
     << "heads = " << m.heads << "\n"
     << "blocks = " << m.blocks << "\n"
     << "modes = " << m.modes << "\n"
     << "msg_rounds = " << m.msg_rounds << "\n"
     << "d_max = " << m.d_max << "\n"
     << "t_obs = " << m.t_obs << "\n"
     << "t_pred = " << m.t_pred << "\n"
     << "rel_width = " << m.rel_width << "\n"
     << "ff_width = " << m.ff_width << "\n"
     << "input_mode = " << input_mode_name(m.input_mode) << "\n"
     << "no_sa = " << (m.no_sa ? "true" : "false") << "\n"
     << "no_gcn = " << (m.no_gcn ? "true" : "false") << "\n"
     << "gmm_head = " << (m.gmm_head ? "true" : "false") << "\n"
     << "mlp_decoder = " << (m.mlp_decoder ? "true" : "false") << "\n"
     << "dropout = " << m.dropout << "\n";
  return os.str();
}

ModelConfig parse_model_config_text(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is).model;
}

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t model_config_hash(const ModelConfig& cfg) {
  return fnv1a64(serialize_model_config(cfg));
}

}  // namespace trajpred
