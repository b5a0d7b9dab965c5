#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "speechface/cpc.hpp"
#include "speechface/distill.hpp"
#include "speechface/media.hpp"
#include "speechface/nn.hpp"

namespace speechface {

struct ComposerConfig {
  int frame_size = 64;  // H == W; multiple of 32
  int d_c = 128;        // context dimension (stage-1 output)
  int d_emo = 512;
  int d_id = 4096;
  /// Channel counts of the reference feature pyramid (deepest first); the
  /// 1x1 alignment convolutions adopt these.
  std::vector<int> ref_channels{32, 24, 16};
  int sim_rows = -1;  // rows covered by the similarity loss; -1 = top H/2
  /// Eq. orientation: false keeps real pairs driven toward 0 and fakes
  /// toward 1 (as the losses are written); true flips every target.
  bool conventional_gan_targets = false;
  double w_adv = 1.0, w_sim = 1.0, w_grad = 1.0;
  double lr_gen = 3e-4;
  double lr_d_id = 3e-4;
  double lr_d_fr = 1e-4;
  double lr_d_sync = 1e-5;
  int frames_per_step = 4;

  int base_size() const { return frame_size / 16; }
};

void validate_composer_config(const ComposerConfig& cfg);

/// The three progressively upsampled identity maps, spatial sizes
/// base_size, 2*base_size, 4*base_size (channel-major).
struct InflatedIdentity {
  std::vector<Tensor> maps;
  int base_size = 0;
};

/// Frozen-backbone features of a static facial image, shape-compatible
/// with InflatedIdentity layer by layer.
struct ReferenceFeatures {
  std::vector<Tensor> maps;
};

/// Throws when the inflated and reference pyramids disagree in any layer
/// shape; the message lists both.
void check_identity_maps_compat(const InflatedIdentity& inflated,
                                const ReferenceFeatures& reference);

struct GeneratorInput {
  Tensor c_t;  // context vector (d_c)
  Tensor nu;   // identity vector (d_id)
  Tensor mu;   // emotion vector (d_emo)
};

/// Frame decoder plus the identity-inflation branch. The decoder seeds a
/// coarse map from [c_t; mu], concatenates each inflated identity map at
/// the matching resolution, upsamples through transposed convolutions and
/// finishes with two 1x1 convolutions and a sigmoid.
class Generator {
 public:
  Generator() = default;
  Generator(const ComposerConfig& cfg, std::uint64_t seed);

  const ComposerConfig& config() const { return cfg_; }

  struct B {
    Dense::B infl_seed;
    ConvT2dLayer::B infl_t1, infl_t2, infl_t3;
    Conv2dLayer::B align1, align2, align3;
    Dense::B seed;
    ConvT2dLayer::B up1, up2, up3, up4;
    Conv2dLayer::B out1, out2;
  };
  B bind(Binder& bd) const;

  /// Identity inflation: three doubling transposed convolutions with 1x1
  /// channel alignment after each. Maps are channel-major.
  std::vector<Var> inflate_graph(Graph& g, const B& p, Var nu) const;
  /// One frame, (H, W, 3) in [0, 1].
  Var frame_graph(Graph& g, const B& p, Var c_t, Var mu, const std::vector<Var>& inflated) const;

  InflatedIdentity inflate_identity(const Tensor& nu) const;
  Tensor generate_frame(const GeneratorInput& input, const InflatedIdentity& inflated) const;

  NamedTensors named_tensors();

 private:
  ComposerConfig cfg_;
  Dense infl_seed_;
  ConvT2dLayer infl_t1_, infl_t2_, infl_t3_;
  Conv2dLayer align1_, align2_, align3_;
  Dense seed_;
  ConvT2dLayer up1_, up2_, up3_, up4_;
  Conv2dLayer out1_, out2_;
};

/// Generate a whole clip from stage-1 outputs (inflation runs once).
std::vector<Tensor> generate_clip(const Generator& gen, const Tensor& contexts, const Tensor& nu,
                                  const Tensor& mu);

/// Scores the inflated-vs-reference identity pyramids.
class DiscIdentity {
 public:
  DiscIdentity() = default;
  DiscIdentity(const ComposerConfig& cfg, std::uint64_t seed);
  struct B {
    Conv2dLayer::B m1, m2, m3;
    Dense::B head;
  };
  B bind(Binder& bd) const;
  Var score_graph(Graph& g, const B& p, const std::vector<Var>& maps) const;
  double score(const std::vector<Tensor>& maps) const;
  NamedTensors named_tensors();

 private:
  Conv2dLayer m1_, m2_, m3_;
  Dense head_;
};

/// Per-frame realism critic.
class DiscFrame {
 public:
  DiscFrame() = default;
  DiscFrame(const ComposerConfig& cfg, std::uint64_t seed);
  struct B {
    Conv2dLayer::B c1, c2, c3;
    Dense::B head;
  };
  B bind(Binder& bd) const;
  Var score_graph(Graph& g, const B& p, Var frame_hwc) const;
  double score(const Tensor& frame_hwc) const;
  NamedTensors named_tensors();

 private:
  Conv2dLayer c1_, c2_, c3_;
  Dense head_;
};

/// Audio-frame synchronization critic: embeds the context vector and the
/// frame separately and scores their concatenation.
class DiscSync {
 public:
  DiscSync() = default;
  DiscSync(const ComposerConfig& cfg, std::uint64_t seed);
  struct B {
    Dense::B ctx;
    Conv2dLayer::B f1, f2, f3;
    Dense::B femb, head;
  };
  B bind(Binder& bd) const;
  Var score_graph(Graph& g, const B& p, Var context, Var frame_hwc) const;
  double score(const Tensor& context, const Tensor& frame_hwc) const;
  NamedTensors named_tensors();

 private:
  Dense ctx_;
  Conv2dLayer f1_, f2_, f3_;
  Dense femb_, head_;
};

// ---- value-level loss operations ----
// Discriminators enter as callables so tests can pin constant outputs.

using MapsScorer = std::function<double(const std::vector<Tensor>&)>;
using FrameScorer = std::function<double(const Tensor&)>;
using PairScorer = std::function<double(const Tensor&, const Tensor&)>;

/// 1/2 (D(inflated) - 1)^2 + 1/2 D(reference)^2.
double adv_loss_id(const MapsScorer& d_id, const InflatedIdentity& inflated,
                   const ReferenceFeatures& reference);

/// 1/2 sum_t [ (D(generated_t) - 1)^2 + D(real_t)^2 ]; sums over t.
double adv_loss_frame(const FrameScorer& d_fr, const std::vector<Tensor>& generated,
                      const std::vector<Tensor>& real);

/// D(c_tau, real_tau)^2 + 1/2 (D(c_tau', real_tau) - 1)^2
///   + 1/2 (D(c_tau, generated_tau) - 1)^2.
/// Synchronized real pairs are driven toward 0, mismatched and generated
/// pairs toward 1. tau and tau_prime are 0-based and must differ.
double adv_loss_sync(const PairScorer& d_sync, const Tensor& contexts,
                     const std::vector<Tensor>& real_frames,
                     const std::vector<Tensor>& generated_frames, int tau, int tau_prime);

/// L1 distance over the stable upper region of the frame: rows
/// [0, region_rows) across all columns and channels. region_rows < 0
/// selects the top half.
double frame_similarity_loss(const Tensor& generated, const Tensor& real, int region_rows = -1);
Var frame_similarity_loss_graph(Graph& g, Var generated, Var real, int region_rows = -1);

/// L1 distance between smoothed image gradients: 3x3 box filter, then
/// central differences along both axes (replicate padding everywhere).
double gradient_loss(const Tensor& generated, const Tensor& real);
Var gradient_loss_graph(Graph& g, Var generated, Var real);

struct LossParts {
  double l_adv_id = 0, l_adv_fr = 0, l_adv_sync = 0, l_sim = 0, l_grad = 0;
};

struct LossReport {
  double l_adv_id = 0, l_adv_fr = 0, l_adv_sync = 0;
  double l_sim = 0, l_grad = 0;
  double l_adv_total = 0, l_total = 0;
};

/// Unit-weight sums; throws naming the offending part when non-finite.
LossReport total_losses(const LossParts& parts);

// ---- stage-2 training ----

struct ComposerModels {
  Generator generator;
  DiscIdentity d_id;
  DiscFrame d_fr;
  DiscSync d_sync;
};

ComposerModels make_composer_models(const ComposerConfig& cfg, std::uint64_t seed);

struct Stage2Clip {
  AudioContext ctx;            // frozen CPC outputs
  Tensor nu, mu;               // frozen student outputs
  ReferenceFeatures reference;  // frozen backbone features of the first frame
  std::vector<Tensor> frames;  // real frames (H, W, 3)
};

Stage2Clip prepare_stage2_clip(const Utterance& utt, const CpcModel& cpc,
                               const StudentNets& students,
                               const SurrogateIdentityTeacher& backbone, int window);

/// Alternating LSGAN updates; discriminators first, then the generator
/// with flipped targets plus the similarity and gradient terms. Returns
/// one LossReport per step (adversarial parts in discriminator form,
/// l_sim/l_grad as per-frame means over the step's batch).
std::vector<LossReport> train_stage2(ComposerModels& models, const std::vector<Stage2Clip>& clips,
                                     int steps, std::uint64_t seed);

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossReport>& steps);

/// Standalone synchronization-critic training on real data only (the two
/// real-pair terms of the sync loss). Used by the evaluation proxy and
/// the acceptance suite.
std::vector<double> train_sync_scorer(DiscSync& d_sync, const std::vector<Stage2Clip>& clips,
                                      int steps, double lr, std::uint64_t seed,
                                      bool conventional_targets = false);

/// Classification accuracy of aligned vs mismatched (context, frame)
/// pairs under a trained critic, threshold 0.5.
double sync_pair_accuracy(const DiscSync& d_sync, const std::vector<Stage2Clip>& clips,
                          bool conventional_targets = false);

void save_generator_checkpoint(const std::filesystem::path& path, Generator& gen);
Generator load_generator_checkpoint(const std::filesystem::path& path);
void save_disc_sync_checkpoint(const std::filesystem::path& path, DiscSync& d,
                               const ComposerConfig& cfg);
DiscSync load_disc_sync_checkpoint(const std::filesystem::path& path, ComposerConfig* cfg_out);
void save_disc_identity_checkpoint(const std::filesystem::path& path, DiscIdentity& d,
                                   const ComposerConfig& cfg, const std::vector<int>& channels);
void save_disc_frame_checkpoint(const std::filesystem::path& path, DiscFrame& d,
                                const ComposerConfig& cfg);

}  // namespace speechface
