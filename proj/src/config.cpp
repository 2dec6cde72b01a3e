#include "pcr/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace pcr {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::string unquote(std::string s) {
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                        (s.front() == '\'' && s.back() == '\''))) {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ParameterError("config key '" + key + "': expected a number, got '" + value + "'");
  }
}

std::int64_t to_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const std::int64_t v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ParameterError("config key '" + key + "': expected an integer, got '" + value + "'");
  }
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ParameterError("config key '" + key + "': expected a boolean, got '" + value + "'");
}

}  // namespace

std::vector<std::pair<std::string, std::string>> parse_flat_config(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path.string());
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = unquote(trim(line.substr(eq + 1)));
    if (key.empty()) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": empty key");
    }
    out.emplace_back(key, value);
  }
  return out;
}

void PipelineConfig::set(const std::string& key, const std::string& value) {
  const auto d = [&] { return to_double(key, value); };
  const auto i = [&] { return static_cast<int>(to_int(key, value)); };
  const auto b = [&] { return to_bool(key, value); };

  if (key == "w_seg") weights.w_seg = d();
  else if (key == "w_motion") weights.w_motion = d();
  else if (key == "w_ground") weights.w_ground = d();
  else if (key == "w_edge") weights.w_edge = d();
  else if (key == "theta_threshold") weights.theta_threshold = d();
  else if (key == "v_max") weights.v_max = d();
  else if (key == "tau_ground") weights.tau_ground = d();
  else if (key == "edge_m0") weights.edge_margin_inner = d();
  else if (key == "edge_m1") weights.edge_margin_outer = d();
  else if (key == "cluster_radius") weights.cluster_radius = d();
  else if (key == "cluster_min_k") weights.cluster_min_k = i();
  else if (key == "cluster_margin") weights.cluster_margin = d();
  else if (key == "vote_window") weights.vote_window = i();
  else if (key == "vote_quota") weights.vote_quota = d();
  else if (key == "theta_conf") theta_conf = d();
  else if (key == "theta_nms") theta_nms = d();
  else if (key == "nms_class_aware") nms_class_aware = b();
  else if (key == "open_radius") open_radius = i();
  else if (key == "close_radius") close_radius = i();
  else if (key == "norm_mean_r") norm_mean[0] = d();
  else if (key == "norm_mean_g") norm_mean[1] = d();
  else if (key == "norm_mean_b") norm_mean[2] = d();
  else if (key == "norm_std_r") norm_std[0] = d();
  else if (key == "norm_std_g") norm_std[1] = d();
  else if (key == "norm_std_b") norm_std[2] = d();
  else if (key == "ransac_iters") ransac_iters = i();
  else if (key == "ransac_tau") ransac_tau = d();
  else if (key == "ground_alpha") ground_alpha = d();
  else if (key == "ground_tau_min") ground_tau_min = d();
  else if (key == "ground_tau_max") ground_tau_max = d();
  else if (key == "huber_delta") huber_delta = d();
  else if (key == "refine_max_iters") refine_max_iters = i();
  else if (key == "keyframe_n_min") keyframe.n_min = i();
  else if (key == "keyframe_rho_max") keyframe.rho_max = d();
  else if (key == "keyframe_dt_min") keyframe.dt_min = d();
  else if (key == "keyframe_q_min") keyframe.q_min = d();
  else if (key == "fx") fx = d();
  else if (key == "fy") fy = d();
  else if (key == "cx") cx = d();
  else if (key == "cy") cy = d();
  else if (key == "image_width") image_width = i();
  else if (key == "image_height") image_height = i();
  else if (key == "frame_period") frame_period = d();
  else if (key == "t_threshold") t_threshold = d();
  else if (key == "hysteresis_frames") hysteresis_frames = i();
  else if (key == "tier") {
    if (value != "high" && value != "medium" && value != "low") {
      throw ParameterError("config key 'tier': expected high|medium|low, got '" + value + "'");
    }
    tier = value;
  } else if (key == "adaptive") adaptive = b();
  else if (key == "threads") threads = i();
  else if (key == "filtering_enabled") filtering_enabled = b();
  else if (key == "seed") seed = static_cast<std::uint64_t>(to_int(key, value));
  else throw ParameterError("unknown config key '" + key + "'");
}

void PipelineConfig::load_file(const std::filesystem::path& path) {
  for (const auto& [key, value] : parse_flat_config(path)) set(key, value);
}

std::string PipelineConfig::snapshot() const {
  std::map<std::string, std::string> kv;
  char buf[64];
  const auto put_d = [&](const char* key, double v) {
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    kv[key] = buf;
  };
  const auto put_i = [&](const char* key, std::int64_t v) { kv[key] = std::to_string(v); };
  const auto put_b = [&](const char* key, bool v) { kv[key] = v ? "true" : "false"; };

  put_d("w_seg", weights.w_seg);
  put_d("w_motion", weights.w_motion);
  put_d("w_ground", weights.w_ground);
  put_d("w_edge", weights.w_edge);
  put_d("theta_threshold", weights.theta_threshold);
  put_d("v_max", weights.v_max);
  put_d("tau_ground", weights.tau_ground);
  put_d("edge_m0", weights.edge_margin_inner);
  put_d("edge_m1", weights.edge_margin_outer);
  put_d("cluster_radius", weights.cluster_radius);
  put_i("cluster_min_k", weights.cluster_min_k);
  put_d("cluster_margin", weights.cluster_margin);
  put_i("vote_window", weights.vote_window);
  put_d("vote_quota", weights.vote_quota);
  put_d("theta_conf", theta_conf);
  put_d("theta_nms", theta_nms);
  put_b("nms_class_aware", nms_class_aware);
  put_i("open_radius", open_radius);
  put_i("close_radius", close_radius);
  put_d("norm_mean_r", norm_mean[0]);
  put_d("norm_mean_g", norm_mean[1]);
  put_d("norm_mean_b", norm_mean[2]);
  put_d("norm_std_r", norm_std[0]);
  put_d("norm_std_g", norm_std[1]);
  put_d("norm_std_b", norm_std[2]);
  put_i("ransac_iters", ransac_iters);
  put_d("ransac_tau", ransac_tau);
  put_d("ground_alpha", ground_alpha);
  put_d("ground_tau_min", ground_tau_min);
  put_d("ground_tau_max", ground_tau_max);
  put_d("huber_delta", huber_delta);
  put_i("refine_max_iters", refine_max_iters);
  put_i("keyframe_n_min", keyframe.n_min);
  put_d("keyframe_rho_max", keyframe.rho_max);
  put_d("keyframe_dt_min", keyframe.dt_min);
  put_d("keyframe_q_min", keyframe.q_min);
  put_d("fx", fx);
  put_d("fy", fy);
  put_d("cx", cx);
  put_d("cy", cy);
  put_i("image_width", image_width);
  put_i("image_height", image_height);
  put_d("frame_period", frame_period);
  put_d("t_threshold", t_threshold);
  put_i("hysteresis_frames", hysteresis_frames);
  kv["tier"] = tier;
  put_b("adaptive", adaptive);
  put_i("threads", threads);
  put_b("filtering_enabled", filtering_enabled);
  put_i("seed", static_cast<std::int64_t>(seed));

  std::string out;
  for (const auto& [key, value] : kv) {
    out += key;
    out += " = ";
    out += value;
    out += '\n';
  }
  return out;
}

}  // namespace pcr
