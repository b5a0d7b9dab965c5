#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "speechface/composer.hpp"
#include "speechface/cpc.hpp"

namespace speechface {

/// Bad or missing configuration; the CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// A required upstream artifact is absent; the CLI maps this to exit
/// code 3.
class MissingDependencyError : public std::runtime_error {
 public:
  explicit MissingDependencyError(const std::string& what) : std::runtime_error(what) {}
};

struct DataConfig {
  std::string root;  // default: <out_dir>/data
  std::string mode = "toy";
  int n_utterances = 12;
  int frames = 8;
  int height = 32;
  int width = 32;
  double sample_rate = 16000;
  double fps = 30;
  double train_ratio = 0.70;
  double val_ratio = 0.15;
  double test_ratio = 0.15;
};

struct CpcStageConfig {
  CpcConfig model;
  int epochs = 100;
  double lr = 1e-3;
  bool random_frozen = false;  // skip training, keep the seeded init
};

struct DistillStageConfig {
  int hidden = 256;
  int d_id = 4096;
  int d_emo = 512;
  int k_frames = 5;
  double lambda = kDistillLambda;
  int epochs = 100;
  double lr = 1e-3;
  std::string teacher_ckpt;  // optional externally trained teachers
};

struct ComposerStageConfig {
  ComposerConfig model;
  int epochs = 100;
  int steps_override = -1;  // -1: epochs * |train split|
};

struct EvalStageConfig {
  bool use_sync_scorer = true;
};

struct RunConfig {
  std::uint64_t seed = 7;
  std::string out_dir = "runs/default";
  DataConfig data;
  CpcStageConfig cpc;
  DistillStageConfig distill;
  ComposerStageConfig composer;
  EvalStageConfig eval;

  std::filesystem::path out_path() const;   // honors SPEECHFACE_OUT_ROOT
  std::filesystem::path data_root() const;  // [data] root or <out>/data
};

/// Plain-text run configuration: `key = value` lines grouped in
/// [sections], `#`/`;` comments. Unknown keys are config errors so typos
/// surface immediately. Window defaults to 2 * hop of the data rates when
/// not given; composer dimensions are derived from the other stages.
RunConfig parse_run_config(const std::filesystem::path& path);
RunConfig run_config_from_text(const std::string& text);

/// Per-stage canonical config fingerprints (FNV-1a hex), used by the run
/// manifest to decide whether a completed stage is reusable.
std::string stage_config_hash(const RunConfig& cfg, const std::string& stage);

}  // namespace speechface
