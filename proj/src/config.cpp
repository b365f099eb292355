#include "latentseq/config.h"

#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>

namespace latentseq::io {

void ConfigMap::set(const std::string& key, const std::string& value) {
  items.emplace_back(key, value);
}

const std::string* ConfigMap::find(const std::string& key) const {
  const std::string* found = nullptr;
  for (const auto& [k, v] : items)
    if (k == key) found = &v;
  return found;
}

ConfigMap parse_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot read " + path);
  ConfigMap map;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    size_t b = line.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    size_t e = line.find_last_not_of(" \t");
    line = line.substr(b, e - b + 1);
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                  " is not key=value: " + line);
    auto trim = [](std::string s) {
      size_t b2 = s.find_first_not_of(" \t");
      if (b2 == std::string::npos) return std::string();
      size_t e2 = s.find_last_not_of(" \t");
      return s.substr(b2, e2 - b2 + 1);
    };
    map.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return map;
}

namespace {

double parse_double(const std::string& key, const std::string& v) {
  size_t used = 0;
  double out;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: " + key + " expects a number, got '" +
                                v + "'");
  }
  if (used != v.size())
    throw std::invalid_argument("config: " + key + " expects a number, got '" +
                                v + "'");
  return out;
}

long parse_long(const std::string& key, const std::string& v) {
  size_t used = 0;
  long out;
  try {
    out = std::stol(v, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: " + key + " expects an integer, got '" +
                                v + "'");
  }
  if (used != v.size())
    throw std::invalid_argument("config: " + key + " expects an integer, got '" +
                                v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw std::invalid_argument("config: " + key + " expects a boolean, got '" +
                              v + "'");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void apply(train::TrainConfig& cfg, const std::string& key,
           const std::string& value) {
  if (key == "lambda") cfg.lambda = parse_double(key, value);
  else if (key == "anneal_epochs") cfg.anneal_epochs = static_cast<int>(parse_long(key, value));
  else if (key == "estimator") cfg.estimator = train::parse_estimator(value);
  else if (key == "objective") cfg.objective = train::parse_objective(value);
  else if (key == "pool_window") cfg.pool_window = static_cast<int>(parse_long(key, value));
  else if (key == "gumbel_temperature") cfg.gumbel_temperature = parse_double(key, value);
  else if (key == "noise_drop") cfg.noise_drop = parse_double(key, value);
  else if (key == "noise_shuffle") cfg.noise_shuffle = static_cast<int>(parse_long(key, value));
  else if (key == "recon_mode") {
    if (value == "greedy") cfg.recon_sample = false;
    else if (value == "sample") cfg.recon_sample = true;
    else throw std::invalid_argument("config: recon_mode must be greedy|sample");
  }
  else if (key == "share_latent_sample") cfg.share_latent_sample = parse_bool(key, value);
  else if (key == "share_params") cfg.share_params = parse_bool(key, value);
  else if (key == "embed_dim") cfg.embed_dim = static_cast<int>(parse_long(key, value));
  else if (key == "hidden_dim") cfg.hidden_dim = static_cast<int>(parse_long(key, value));
  else if (key == "dropout") cfg.dropout = parse_double(key, value);
  else if (key == "lr") cfg.lr = parse_double(key, value);
  else if (key == "beta1") cfg.beta1 = parse_double(key, value);
  else if (key == "beta2") cfg.beta2 = parse_double(key, value);
  else if (key == "clip_norm") cfg.clip_norm = parse_double(key, value);
  else if (key == "seed") cfg.seed = static_cast<uint64_t>(parse_long(key, value));
  else if (key == "epochs") cfg.epochs = static_cast<int>(parse_long(key, value));
  else if (key == "batch_size") cfg.batch_size = static_cast<int>(parse_long(key, value));
  else if (key == "sort_buffer") cfg.sort_buffer = static_cast<int>(parse_long(key, value));
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

}  // namespace

train::TrainConfig make_train_config(const ConfigMap& file,
                                     const ConfigMap& overrides) {
  train::TrainConfig cfg;
  for (const auto& [k, v] : file.items) apply(cfg, k, v);
  for (const auto& [k, v] : overrides.items) apply(cfg, k, v);
  cfg.validate();
  return cfg;
}

ConfigMap config_snapshot(const train::TrainConfig& cfg) {
  ConfigMap m;
  m.set("lambda", fmt(cfg.lambda));
  m.set("anneal_epochs", std::to_string(cfg.anneal_epochs));
  m.set("estimator", train::to_string(cfg.estimator));
  m.set("objective", train::to_string(cfg.objective));
  m.set("pool_window", std::to_string(cfg.pool_window));
  m.set("gumbel_temperature", fmt(cfg.gumbel_temperature));
  m.set("noise_drop", fmt(cfg.noise_drop));
  m.set("noise_shuffle", std::to_string(cfg.noise_shuffle));
  m.set("recon_mode", cfg.recon_sample ? "sample" : "greedy");
  m.set("share_latent_sample", cfg.share_latent_sample ? "1" : "0");
  m.set("share_params", cfg.share_params ? "1" : "0");
  m.set("embed_dim", std::to_string(cfg.embed_dim));
  m.set("hidden_dim", std::to_string(cfg.hidden_dim));
  m.set("dropout", fmt(cfg.dropout));
  m.set("lr", fmt(cfg.lr));
  m.set("beta1", fmt(cfg.beta1));
  m.set("beta2", fmt(cfg.beta2));
  m.set("clip_norm", fmt(cfg.clip_norm));
  m.set("seed", std::to_string(cfg.seed));
  m.set("epochs", std::to_string(cfg.epochs));
  m.set("batch_size", std::to_string(cfg.batch_size));
  m.set("sort_buffer", std::to_string(cfg.sort_buffer));
  return m;
}

}  // namespace latentseq::io
