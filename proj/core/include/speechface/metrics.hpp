#pragma once

#include <filesystem>
#include <functional>
#include <vector>

#include "speechface/composer.hpp"
#include "speechface/cpc.hpp"
#include "speechface/tensor.hpp"

namespace speechface {

/// Windowed SSIM, 11x11 Gaussian window (sigma 1.5), C1 = 0.01^2,
/// C2 = 0.03^2 on unit dynamic range, valid windows only, averaged over
/// channels. Symmetric; exactly 1 for identical images.
double ssim(const Tensor& a, const Tensor& b);

/// 10 log10(peak^2 / MSE); returns the 100 dB cap when MSE < 1e-10.
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);

constexpr double kPsnrCap = 100.0;

/// Synchronization-confidence proxy: median over t of the oriented score
/// gap between a mismatched and a matched (context, frame) pair under a
/// trained pairwise scorer. Larger means better synchronization. This is
/// a documented proxy, not the external AV-confidence tool; its scale is
/// not comparable to published confidence numbers.
double sync_confidence(const std::vector<Tensor>& frames, const Tensor& contexts,
                       const PairScorer& scorer, bool conventional_targets = false);

struct EvalReport {
  double ssim = 0;
  double psnr = 0;
  double sync_confidence = 0;
  bool has_sync = false;
  int n_frames = 0;
  std::vector<double> per_frame_ssim;
  std::vector<double> per_frame_psnr;
};

/// Bundles the pieces needed to score synchronization of a generated clip
/// against the reference clip's audio.
struct SyncEvaluator {
  const CpcModel* cpc = nullptr;
  const DiscSync* scorer = nullptr;
  bool conventional_targets = false;
};

/// Frame-directory evaluation: per-frame SSIM/PSNR means plus the sync
/// proxy (contexts come from the reference clip's audio). Throws when the
/// frame counts differ.
EvalReport evaluate_clip(const std::filesystem::path& generated_dir,
                         const std::filesystem::path& reference_dir,
                         const SyncEvaluator* sync = nullptr);

void write_eval_report(const std::filesystem::path& path, const EvalReport& report);

}  // namespace speechface
