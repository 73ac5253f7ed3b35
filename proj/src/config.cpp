#include "meshcorr/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace meshcorr {

WeightMapParams weight_map_params(const RunConfig& config) {
  WeightMapParams p;
  p.w_min = config.w_min;
  p.w_max = config.w_max;
  p.canny.sigma = config.canny_sigma;
  p.canny.low_percentile = config.canny_low_pct;
  p.canny.high_percentile = config.canny_high_pct;
  return p;
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const double v = std::strtod(value.c_str(), &end);
  if (end == value.c_str() || *end != '\0')
    throw std::invalid_argument("config: bad number for " + key + ": '" + value + "'");
  return v;
}

std::int64_t parse_int(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const long long v = std::strtoll(value.c_str(), &end, 10);
  if (end == value.c_str() || *end != '\0')
    throw std::invalid_argument("config: bad integer for " + key + ": '" + value + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw std::invalid_argument("config: bad bool for " + key + ": '" + value + "'");
}

struct Entry {
  std::string name;  // section.key
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
};

std::vector<Entry> registry(RunConfig& c) {
  std::vector<Entry> e;
  auto add_d = [&e](const std::string& name, double& ref) {
    e.push_back({name, [&ref] { return fmt_double(ref); },
                 [&ref, name](const std::string& v) { ref = parse_double(name, v); }});
  };
  auto add_i = [&e](const std::string& name, int& ref) {
    e.push_back({name, [&ref] { return std::to_string(ref); },
                 [&ref, name](const std::string& v) { ref = static_cast<int>(parse_int(name, v)); }});
  };
  auto add_i64 = [&e](const std::string& name, std::int64_t& ref) {
    e.push_back({name, [&ref] { return std::to_string(ref); },
                 [&ref, name](const std::string& v) { ref = parse_int(name, v); }});
  };
  auto add_u64 = [&e](const std::string& name, std::uint64_t& ref) {
    e.push_back({name, [&ref] { return std::to_string(ref); },
                 [&ref, name](const std::string& v) {
                   ref = static_cast<std::uint64_t>(parse_int(name, v));
                 }});
  };
  auto add_b = [&e](const std::string& name, bool& ref) {
    e.push_back({name, [&ref] { return std::string(ref ? "true" : "false"); },
                 [&ref, name](const std::string& v) { ref = parse_bool(name, v); }});
  };

  add_d("camera.fx", c.camera.fx);
  add_d("camera.fy", c.camera.fy);
  add_d("camera.cx", c.camera.cx);
  add_d("camera.cy", c.camera.cy);
  add_i("camera.width", c.camera.width);
  add_i("camera.height", c.camera.height);
  add_d("camera.warp_eps", c.warp_eps);

  add_i("model.multiplier", c.multiplier);

  add_d("loss.lambda_data", c.loss_weights.lambda_data);
  add_d("loss.lambda_grad", c.loss_weights.lambda_grad);
  add_d("loss.lambda_gc", c.loss_weights.lambda_gc);
  add_d("loss.lambda_reg", c.loss_weights.lambda_reg);
  add_d("loss.w_min", c.w_min);
  add_d("loss.w_max", c.w_max);
  add_d("loss.berhu_factor", c.berhu_factor);
  add_d("loss.canny_sigma", c.canny_sigma);
  add_d("loss.canny_low_pct", c.canny_low_pct);
  add_d("loss.canny_high_pct", c.canny_high_pct);

  add_d("train.eta_max", c.train.eta_max);
  add_d("train.eta_min", c.train.eta_min);
  add_i64("train.t_max", c.train.t_max);
  add_d("train.clip_norm", c.train.clip_norm);
  add_d("train.beta1", c.train.beta1);
  add_d("train.beta2", c.train.beta2);
  add_d("train.adam_eps", c.train.adam_eps);
  add_i("train.batch_size", c.train.batch_size);
  add_i64("train.steps", c.train.total_steps);
  add_i("train.nearby_views", c.nearby_views);
  add_b("train.grad_to_nearby", c.grad_to_nearby);
  add_i("train.threads", c.threads);
  add_i64("train.checkpoint_every", c.checkpoint_every);
  add_i64("train.log_every", c.log_every);
  add_u64("train.seed", c.seed);

  add_i("scene.scenes", c.scene.scenes);
  add_d("scene.extent", c.scene.extent);
  add_i("scene.boxes", c.scene.boxes);
  add_d("scene.box_min", c.scene.box_min);
  add_d("scene.box_max", c.scene.box_max);
  add_i("scene.walls", c.scene.walls);
  add_d("scene.wall_min", c.scene.wall_min);
  add_d("scene.wall_max", c.scene.wall_max);
  add_d("scene.wall_height_min", c.scene.wall_height_min);
  add_d("scene.wall_height_max", c.scene.wall_height_max);
  add_d("scene.resolution", c.scene.resolution);
  add_d("scene.trajectory_length", c.scene.trajectory_length);
  add_d("scene.spacing", c.scene.spacing);
  add_d("scene.camera_height", c.scene.camera_height);
  add_d("scene.right_offset", c.scene.right_offset);
  add_d("scene.top_height", c.scene.top_height);

  add_d("corruption.noise_sigma", c.corruption.noise_sigma);
  add_d("corruption.hole_rate", c.corruption.hole_rate);
  add_d("corruption.bulge_rate", c.corruption.bulge_rate);
  add_d("corruption.bulge_amplitude", c.corruption.bulge_amplitude);
  add_d("corruption.spurious_rate", c.corruption.spurious_rate);
  add_d("corruption.patch_min_area", c.corruption.patch_min_area);
  return e;
}

}  // namespace

std::string serialize_config(const RunConfig& config) {
  RunConfig copy = config;
  auto entries = registry(copy);
  std::string out;
  std::string section;
  for (const Entry& entry : entries) {
    const std::size_t dot = entry.name.find('.');
    const std::string sec = entry.name.substr(0, dot);
    if (sec != section) {
      if (!out.empty()) out += "\n";
      out += "[" + sec + "]\n";
      section = sec;
    }
    out += entry.name.substr(dot + 1) + " = " + entry.get() + "\n";
  }
  return out;
}

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

void apply_config_override(RunConfig& config, const std::string& key, const std::string& value) {
  auto entries = registry(config);
  for (Entry& entry : entries) {
    if (entry.name == key) {
      entry.set(value);
      return;
    }
  }
  throw std::invalid_argument("config: unknown key '" + key + "'");
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig config;
  std::istringstream in(text);
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[' && t.back() == ']') {
      section = t.substr(1, t.size() - 2);
      continue;
    }
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: expected 'key = value' at line " +
                                  std::to_string(line_no));
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    const std::string full = section.empty() ? key : section + "." + key;
    apply_config_override(config, full, value);
  }
  return config;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& config) {
  RunConfig copy = config;
  auto entries = registry(copy);
  std::vector<std::pair<std::string, std::string>> out;
  out.reserve(entries.size());
  for (const Entry& entry : entries) out.emplace_back(entry.name, entry.get());
  return out;
}

void validate_config(const RunConfig& config) {
  config.camera.validate();
  if (config.warp_eps <= 0.0) throw std::invalid_argument("config: camera.warp_eps must be > 0");
  if (config.multiplier < 1) throw std::invalid_argument("config: model.multiplier must be >= 1");
  if (config.camera.height % 32 != 0 || config.camera.width % 32 != 0)
    throw std::invalid_argument("config: camera size must be divisible by 32");
  const LossWeights& lw = config.loss_weights;
  if (lw.lambda_data < 0 || lw.lambda_grad < 0 || lw.lambda_gc < 0 || lw.lambda_reg < 0)
    throw std::invalid_argument("config: loss weights must be >= 0");
  if (config.w_min <= 0 || config.w_max < config.w_min)
    throw std::invalid_argument("config: loss.w_min/w_max out of range");
  if (config.berhu_factor <= 0) throw std::invalid_argument("config: loss.berhu_factor must be > 0");
  if (!(config.canny_low_pct >= 0 && config.canny_low_pct <= 100) ||
      !(config.canny_high_pct >= 0 && config.canny_high_pct <= 100))
    throw std::invalid_argument("config: canny percentiles must be in [0, 100]");
  const TrainConfig& t = config.train;
  if (t.eta_min > t.eta_max) throw std::invalid_argument("config: train.eta_min > train.eta_max");
  if (t.t_max <= 0) throw std::invalid_argument("config: train.t_max must be > 0");
  if (t.clip_norm <= 0) throw std::invalid_argument("config: train.clip_norm must be > 0");
  if (t.batch_size < 1) throw std::invalid_argument("config: train.batch_size must be >= 1");
  if (t.total_steps < 0) throw std::invalid_argument("config: train.steps must be >= 0");
  if (config.nearby_views < 0 || config.nearby_views > 3)
    throw std::invalid_argument("config: train.nearby_views must be in [0, 3]");
  const SceneConfig& s = config.scene;
  if (s.scenes < 1 || s.extent <= 0 || s.resolution <= 0 || s.spacing <= 0 ||
      s.trajectory_length < s.spacing)
    throw std::invalid_argument("config: scene parameters out of range");
  if (s.boxes < 0 || s.walls < 0 || s.box_min <= 0 || s.box_max < s.box_min)
    throw std::invalid_argument("config: scene box/wall parameters out of range");
  const CorruptionConfig& cc = config.corruption;
  if (cc.noise_sigma < 0 || cc.hole_rate < 0 || cc.hole_rate > 1 || cc.bulge_rate < 0 ||
      cc.bulge_rate > 1 || cc.spurious_rate < 0 || cc.spurious_rate > 1)
    throw std::invalid_argument("config: corruption rates out of range");
}

}  // namespace meshcorr
