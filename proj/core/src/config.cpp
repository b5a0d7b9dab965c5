#include "speechface/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "speechface/media.hpp"

namespace speechface {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

struct KeyValues {
  std::map<std::string, std::string> values;  // "section.key" -> value
  bool has(const std::string& k) const { return values.count(k) > 0; }
};

KeyValues parse_ini(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t comment = line.find_first_of("#;");
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("line " + std::to_string(lineno) + ": malformed section header '" +
                          line + "'");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value', got '" +
                        line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    }
    const std::string full = section.empty() ? key : section + "." + key;
    if (kv.values.count(full)) throw ConfigError("duplicate config key '" + full + "'");
    kv.values[full] = value;
  }
  return kv;
}

class Reader {
 public:
  explicit Reader(KeyValues kv) : kv_(std::move(kv)) {}

  std::string str(const std::string& key, const std::string& fallback) {
    mark(key);
    auto it = kv_.values.find(key);
    return it == kv_.values.end() ? fallback : it->second;
  }
  int integer(const std::string& key, int fallback) {
    mark(key);
    auto it = kv_.values.find(key);
    if (it == kv_.values.end()) return fallback;
    try {
      std::size_t pos = 0;
      const int v = std::stoi(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "': expected an integer, got '" + it->second + "'");
    }
  }
  double real(const std::string& key, double fallback) {
    mark(key);
    auto it = kv_.values.find(key);
    if (it == kv_.values.end()) return fallback;
    try {
      std::size_t pos = 0;
      const double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "': expected a number, got '" + it->second + "'");
    }
  }
  bool boolean(const std::string& key, bool fallback) {
    mark(key);
    auto it = kv_.values.find(key);
    if (it == kv_.values.end()) return fallback;
    std::string v = it->second;
    std::transform(v.begin(), v.end(), v.begin(), ::tolower);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("config key '" + key + "': expected a boolean, got '" + it->second + "'");
  }
  std::uint64_t u64(const std::string& key, std::uint64_t fallback) {
    mark(key);
    auto it = kv_.values.find(key);
    if (it == kv_.values.end()) return fallback;
    try {
      return std::stoull(it->second);
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "': expected an unsigned integer, got '" +
                        it->second + "'");
    }
  }

  void reject_unknown() const {
    for (const auto& [key, value] : kv_.values) {
      if (!seen_.count(key)) {
        throw ConfigError("unknown config key '" + key + "'");
      }
    }
  }

 private:
  void mark(const std::string& key) { seen_.insert(key); }
  KeyValues kv_;
  std::set<std::string> seen_;
};

}  // namespace

std::filesystem::path RunConfig::out_path() const {
  std::filesystem::path p(out_dir);
  if (const char* root = std::getenv("SPEECHFACE_OUT_ROOT"); root && *root && p.is_relative()) {
    return std::filesystem::path(root) / p;
  }
  return p;
}

std::filesystem::path RunConfig::data_root() const {
  if (!data.root.empty()) {
    std::filesystem::path p(data.root);
    if (const char* root = std::getenv("SPEECHFACE_OUT_ROOT"); root && *root && p.is_relative()) {
      return std::filesystem::path(root) / p;
    }
    return p;
  }
  return out_path() / "data";
}

RunConfig run_config_from_text(const std::string& text) {
  Reader r(parse_ini(text));
  RunConfig cfg;
  cfg.seed = r.u64("seed", cfg.seed);
  cfg.out_dir = r.str("out_dir", cfg.out_dir);

  cfg.data.root = r.str("data.root", "");
  cfg.data.mode = r.str("data.mode", cfg.data.mode);
  cfg.data.n_utterances = r.integer("data.n_utterances", cfg.data.n_utterances);
  cfg.data.frames = r.integer("data.frames", cfg.data.frames);
  cfg.data.height = r.integer("data.height", cfg.data.height);
  cfg.data.width = r.integer("data.width", cfg.data.width);
  cfg.data.sample_rate = r.real("data.sample_rate", cfg.data.sample_rate);
  cfg.data.fps = r.real("data.fps", cfg.data.fps);
  cfg.data.train_ratio = r.real("data.train_ratio", cfg.data.train_ratio);
  cfg.data.val_ratio = r.real("data.val_ratio", cfg.data.val_ratio);
  cfg.data.test_ratio = r.real("data.test_ratio", cfg.data.test_ratio);

  cfg.cpc.model.window =
      r.integer("cpc.window", default_window(cfg.data.sample_rate, cfg.data.fps));
  cfg.cpc.model.d_z = r.integer("cpc.d_z", cfg.cpc.model.d_z);
  cfg.cpc.model.d_c = r.integer("cpc.d_c", cfg.cpc.model.d_c);
  cfg.cpc.model.k_steps = r.integer("cpc.k_steps", cfg.cpc.model.k_steps);
  cfg.cpc.model.n_negatives = r.integer("cpc.n_negatives", cfg.cpc.model.n_negatives);
  cfg.cpc.model.enc_c1 = r.integer("cpc.enc_c1", cfg.cpc.model.enc_c1);
  cfg.cpc.model.enc_c2 = r.integer("cpc.enc_c2", cfg.cpc.model.enc_c2);
  cfg.cpc.epochs = r.integer("cpc.epochs", cfg.cpc.epochs);
  cfg.cpc.lr = r.real("cpc.lr", cfg.cpc.lr);
  cfg.cpc.random_frozen = r.boolean("cpc.random_frozen", cfg.cpc.random_frozen);

  cfg.distill.hidden = r.integer("distill.hidden", cfg.distill.hidden);
  cfg.distill.d_id = r.integer("distill.d_id", cfg.distill.d_id);
  cfg.distill.d_emo = r.integer("distill.d_emo", cfg.distill.d_emo);
  cfg.distill.k_frames = r.integer("distill.k_frames", cfg.distill.k_frames);
  cfg.distill.lambda = r.real("distill.lambda", cfg.distill.lambda);
  cfg.distill.epochs = r.integer("distill.epochs", cfg.distill.epochs);
  cfg.distill.lr = r.real("distill.lr", cfg.distill.lr);
  cfg.distill.teacher_ckpt = r.str("distill.teacher_ckpt", "");

  ComposerConfig& cc = cfg.composer.model;
  cc.frame_size = r.integer("composer.frame_size", cfg.data.height);
  cc.d_c = cfg.cpc.model.d_c;
  cc.d_emo = cfg.distill.d_emo;
  cc.d_id = cfg.distill.d_id;
  cc.sim_rows = r.integer("composer.sim_rows", cc.sim_rows);
  cc.conventional_gan_targets =
      r.boolean("composer.conventional_gan_targets", cc.conventional_gan_targets);
  cc.w_adv = r.real("composer.w_adv", cc.w_adv);
  cc.w_sim = r.real("composer.w_sim", cc.w_sim);
  cc.w_grad = r.real("composer.w_grad", cc.w_grad);
  cc.lr_gen = r.real("composer.lr_gen", cc.lr_gen);
  cc.lr_d_id = r.real("composer.lr_d_id", cc.lr_d_id);
  cc.lr_d_fr = r.real("composer.lr_d_fr", cc.lr_d_fr);
  cc.lr_d_sync = r.real("composer.lr_d_sync", cc.lr_d_sync);
  cc.frames_per_step = r.integer("composer.frames_per_step", cc.frames_per_step);
  cfg.composer.epochs = r.integer("composer.epochs", cfg.composer.epochs);
  cfg.composer.steps_override = r.integer("composer.steps", cfg.composer.steps_override);

  cfg.eval.use_sync_scorer = r.boolean("eval.use_sync_scorer", cfg.eval.use_sync_scorer);

  r.reject_unknown();

  if (cfg.data.mode != "toy" && cfg.data.mode != "prepared") {
    throw ConfigError("data.mode must be 'toy' or 'prepared', got '" + cfg.data.mode + "'");
  }
  const double ratio_sum = cfg.data.train_ratio + cfg.data.val_ratio + cfg.data.test_ratio;
  if (std::abs(ratio_sum - 1.0) > 1e-9) {
    throw ConfigError("data split ratios must sum to 1, got " + std::to_string(ratio_sum));
  }
  if (cfg.data.height != cfg.data.width) {
    throw ConfigError("data.height must equal data.width (square frames), got " +
                      std::to_string(cfg.data.height) + "x" + std::to_string(cfg.data.width));
  }
  if (cfg.cpc.epochs < 0 || cfg.distill.epochs < 0 || cfg.composer.epochs < 0) {
    throw ConfigError("epoch counts cannot be negative");
  }
  try {
    validate_composer_config(cc);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("composer config: ") + e.what());
  }
  return cfg;
}

RunConfig parse_run_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path.string());
  std::ostringstream buf;
  buf << f.rdbuf();
  return run_config_from_text(buf.str());
}

std::string stage_config_hash(const RunConfig& cfg, const std::string& stage) {
  std::ostringstream s;
  s << "seed=" << cfg.seed << ";";
  if (stage == "prepare-data") {
    const DataConfig& d = cfg.data;
    s << d.mode << ";" << d.n_utterances << ";" << d.frames << ";" << d.height << ";" << d.width
      << ";" << d.sample_rate << ";" << d.fps << ";" << d.train_ratio << ";" << d.val_ratio << ";"
      << d.test_ratio;
  } else if (stage == "train-cpc") {
    const CpcStageConfig& c = cfg.cpc;
    s << c.model.window << ";" << c.model.d_z << ";" << c.model.d_c << ";" << c.model.k_steps
      << ";" << c.model.n_negatives << ";" << c.model.enc_c1 << ";" << c.model.enc_c2 << ";"
      << c.epochs << ";" << c.lr << ";" << c.random_frozen;
  } else if (stage == "train-distill") {
    const DistillStageConfig& d = cfg.distill;
    s << d.hidden << ";" << d.d_id << ";" << d.d_emo << ";" << d.k_frames << ";" << d.lambda
      << ";" << d.epochs << ";" << d.lr << ";" << d.teacher_ckpt;
  } else if (stage == "train-composer") {
    const ComposerConfig& c = cfg.composer.model;
    s << c.frame_size << ";" << c.d_c << ";" << c.d_emo << ";" << c.d_id << ";" << c.sim_rows
      << ";" << c.conventional_gan_targets << ";" << c.w_adv << ";" << c.w_sim << ";" << c.w_grad
      << ";" << c.lr_gen << ";" << c.lr_d_id << ";" << c.lr_d_fr << ";" << c.lr_d_sync << ";"
      << c.frames_per_step << ";" << cfg.composer.epochs << ";" << cfg.composer.steps_override;
  } else {
    s << stage;
  }
  const std::string text = s.str();
  std::uint64_t h = 14695981039346656037ull;
  for (char ch : text) {
    h ^= static_cast<unsigned char>(ch);
    h *= 1099511628211ull;
  }
  std::ostringstream hex;
  hex << std::hex << h;
  return hex.str();
}

}  // namespace speechface
