#pragma once

#include <filesystem>
#include <string>

#include "speechface/config.hpp"
#include "speechface/metrics.hpp"

namespace speechface {

/// Orchestrates the pipeline stages over one run directory. Every stage
/// records its artifacts in <out>/manifest.json; re-running a stage whose
/// config hash already completed is a no-op unless forced.
class Pipeline {
 public:
  explicit Pipeline(RunConfig cfg);

  /// Returns false when the stage was skipped as already complete.
  bool prepare_data(bool force = false);
  bool train_cpc_stage(bool force = false);
  bool train_distill_stage(bool force = false);
  bool train_composer_stage(bool force = false);

  /// Speech in (raw float32 mono file, or a clip directory containing
  /// audio.raw), frame directory out.
  void generate(const std::filesystem::path& audio_path,
                const std::filesystem::path& out_frames) const;

  EvalReport evaluate(const std::filesystem::path& generated_dir,
                      const std::filesystem::path& reference_dir,
                      const std::filesystem::path& report_path) const;

  const RunConfig& config() const { return cfg_; }
  std::filesystem::path out() const { return cfg_.out_path(); }

  /// Point later stages at a CPC checkpoint outside this run directory.
  void override_cpc_checkpoint(std::filesystem::path path) { cpc_override_ = std::move(path); }

  std::filesystem::path cpc_ckpt() const {
    return cpc_override_.empty() ? out() / "cpc" / "cpc.ckpt" : cpc_override_;
  }
  std::filesystem::path teachers_ckpt() const { return out() / "distill" / "teachers.ckpt"; }
  std::filesystem::path students_ckpt() const { return out() / "distill" / "students.ckpt"; }
  std::filesystem::path generator_ckpt() const { return out() / "composer" / "generator.ckpt"; }
  std::filesystem::path d_sync_ckpt() const { return out() / "composer" / "d_sync.ckpt"; }
  std::filesystem::path split_path() const { return cfg_.data_root() / "split.json"; }

 private:
  bool stage_done(const std::string& stage) const;
  void mark_done(const std::string& stage, const std::vector<std::string>& artifacts);
  std::vector<Utterance> load_train_clips() const;

  RunConfig cfg_;
  std::filesystem::path cpc_override_;
};

}  // namespace speechface
