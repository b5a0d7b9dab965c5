#include "speechface/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

#include "speechface/image.hpp"
#include "speechface/media.hpp"

namespace speechface {

namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::vector<double> gaussian_kernel() {
  std::vector<double> k(kWin);
  double sum = 0.0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - (kWin - 1) / 2.0;
    k[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    sum += k[static_cast<std::size_t>(i)];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Separable valid-region Gaussian filter of one channel plane.
std::vector<double> filter_valid(const std::vector<double>& img, int h, int w) {
  static const std::vector<double> kernel = gaussian_kernel();
  const int oh = h - kWin + 1, ow = w - kWin + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < ow; ++j) {
      double s = 0.0;
      for (int k = 0; k < kWin; ++k) s += kernel[static_cast<std::size_t>(k)] * img[i * w + j + k];
      tmp[static_cast<std::size_t>(i) * ow + j] = s;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int i = 0; i < oh; ++i) {
    for (int j = 0; j < ow; ++j) {
      double s = 0.0;
      for (int k = 0; k < kWin; ++k) {
        s += kernel[static_cast<std::size_t>(k)] * tmp[static_cast<std::size_t>(i + k) * ow + j];
      }
      out[static_cast<std::size_t>(i) * ow + j] = s;
    }
  }
  return out;
}

struct ImageView {
  int h, w, c;
};

ImageView image_view(const Tensor& a, const Tensor& b, const char* who) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(who) + ": shape mismatch " + a.shape_str() + " vs " +
                                b.shape_str());
  }
  if (a.rank() == 2) return {a.dim(0), a.dim(1), 1};
  if (a.rank() == 3) return {a.dim(0), a.dim(1), a.dim(2)};
  throw std::invalid_argument(std::string(who) + ": expected (H, W) or (H, W, C), got " +
                              a.shape_str());
}

double ssim_channel(const std::vector<double>& a, const std::vector<double>& b, int h, int w) {
  std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const std::vector<double> mu_a = filter_valid(a, h, w);
  const std::vector<double> mu_b = filter_valid(b, h, w);
  const std::vector<double> e_aa = filter_valid(aa, h, w);
  const std::vector<double> e_bb = filter_valid(bb, h, w);
  const std::vector<double> e_ab = filter_valid(ab, h, w);
  double sum = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double va = e_aa[i] - mu_a[i] * mu_a[i];
    const double vb = e_bb[i] - mu_b[i] * mu_b[i];
    const double cov = e_ab[i] - mu_a[i] * mu_b[i];
    const double num = (2.0 * mu_a[i] * mu_b[i] + kC1) * (2.0 * cov + kC2);
    const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + kC1) * (va + vb + kC2);
    sum += num / den;
  }
  return sum / static_cast<double>(mu_a.size());
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b) {
  const ImageView v = image_view(a, b, "ssim");
  if (v.h < kWin || v.w < kWin) {
    throw std::invalid_argument("ssim: image " + a.shape_str() + " smaller than the " +
                                std::to_string(kWin) + "x" + std::to_string(kWin) + " window");
  }
  double total = 0.0;
  std::vector<double> ca(static_cast<std::size_t>(v.h) * v.w), cb(ca.size());
  for (int k = 0; k < v.c; ++k) {
    for (int i = 0; i < v.h; ++i) {
      for (int j = 0; j < v.w; ++j) {
        const std::size_t src = (static_cast<std::size_t>(i) * v.w + j) * v.c + k;
        ca[static_cast<std::size_t>(i) * v.w + j] = a[src];
        cb[static_cast<std::size_t>(i) * v.w + j] = b[src];
      }
    }
    total += ssim_channel(ca, cb, v.h, v.w);
  }
  return total / v.c;
}

double psnr(const Tensor& a, const Tensor& b, double peak) {
  image_view(a, b, "psnr");
  if (peak <= 0) throw std::invalid_argument("psnr: peak must be positive");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.size());
  if (mse < 1e-10) return kPsnrCap;
  return 10.0 * std::log10(peak * peak / mse);
}

double sync_confidence(const std::vector<Tensor>& frames, const Tensor& contexts,
                       const PairScorer& scorer, bool conventional_targets) {
  const int t_count = static_cast<int>(frames.size());
  if (t_count < 2) {
    throw std::invalid_argument("sync_confidence needs at least 2 frames, got " +
                                std::to_string(t_count));
  }
  if (contexts.rank() != 2 || contexts.dim(0) != t_count) {
    throw std::invalid_argument("sync_confidence: contexts " + contexts.shape_str() +
                                " do not match " + std::to_string(t_count) + " frames");
  }
  const int d_c = contexts.dim(1);
  auto row = [&](int t) {
    Tensor c({d_c});
    for (int i = 0; i < d_c; ++i) c.at(i) = contexts.at(t, i);
    return c;
  };
  std::vector<double> gaps;
  gaps.reserve(static_cast<std::size_t>(t_count));
  for (int t = 0; t < t_count; ++t) {
    int other = (t + t_count / 2) % t_count;
    if (other == t) other = (t + 1) % t_count;
    const double matched = scorer(row(t), frames[static_cast<std::size_t>(t)]);
    const double mismatched = scorer(row(other), frames[static_cast<std::size_t>(t)]);
    // Under the as-written orientation mismatched pairs score high, so a
    // positive gap means good sync; flipped training flips the gap.
    gaps.push_back(conventional_targets ? matched - mismatched : mismatched - matched);
  }
  std::sort(gaps.begin(), gaps.end());
  const std::size_t n = gaps.size();
  return n % 2 == 1 ? gaps[n / 2] : 0.5 * (gaps[n / 2 - 1] + gaps[n / 2]);
}

EvalReport evaluate_clip(const std::filesystem::path& generated_dir,
                         const std::filesystem::path& reference_dir, const SyncEvaluator* sync) {
  const std::vector<Tensor> generated = load_frames(generated_dir);
  const std::vector<Tensor> reference = load_frames(reference_dir);
  if (generated.size() != reference.size()) {
    throw std::invalid_argument("evaluate_clip: frame count mismatch, generated " +
                                std::to_string(generated.size()) + " vs reference " +
                                std::to_string(reference.size()));
  }

  EvalReport report;
  report.n_frames = static_cast<int>(generated.size());
  for (std::size_t t = 0; t < generated.size(); ++t) {
    report.per_frame_ssim.push_back(ssim(generated[t], reference[t]));
    report.per_frame_psnr.push_back(psnr(generated[t], reference[t]));
  }
  for (double v : report.per_frame_ssim) report.ssim += v;
  for (double v : report.per_frame_psnr) report.psnr += v;
  report.ssim /= static_cast<double>(report.n_frames);
  report.psnr /= static_cast<double>(report.n_frames);

  if (sync && sync->cpc && sync->scorer && generated.size() >= 2) {
    const Utterance ref_clip = load_utterance(reference_dir);
    AlignedChunks chunks =
        align_audio_to_frames(ref_clip.audio, ref_clip.sample_rate, ref_clip.fps,
                              ref_clip.frame_count(), sync->cpc->config().window);
    const AudioContext ctx = sync->cpc->context(chunks);
    const DiscSync* scorer = sync->scorer;
    report.sync_confidence = sync_confidence(
        generated, ctx.c,
        [scorer](const Tensor& c, const Tensor& f) { return scorer->score(c, f); },
        sync->conventional_targets);
    report.has_sync = true;
  }
  return report;
}

void write_eval_report(const std::filesystem::path& path, const EvalReport& report) {
  nlohmann::json j;
  j["ssim"] = report.ssim;
  j["psnr"] = report.psnr;
  j["sync_confidence"] = report.sync_confidence;
  j["has_sync"] = report.has_sync;
  j["n_frames"] = report.n_frames;
  j["per_frame"] = {{"ssim", report.per_frame_ssim}, {"psnr", report.per_frame_psnr}};
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write report: " + path.string());
  f << j.dump(2) << "\n";
}

}  // namespace speechface
