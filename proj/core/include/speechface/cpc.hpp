#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "speechface/media.hpp"
#include "speechface/nn.hpp"
#include "speechface/optim.hpp"

namespace speechface {

struct CpcConfig {
  int window = 1066;  // samples per aligned chunk (2 * hop at 16 kHz / 30 fps)
  int d_z = 64;       // latent dimension per frame
  int d_c = 128;      // context dimension
  int k_steps = 4;    // prediction horizon
  int n_negatives = 8;
  int enc_c1 = 16;  // widths of the strided encoder stack
  int enc_c2 = 32;
};

/// Encoder outputs for one utterance: per-frame latents, causal context
/// sequence, and the summary vector (last context row).
struct AudioContext {
  Tensor z;      // (T, d_z)
  Tensor c;      // (T, d_c)
  Tensor omega;  // (d_c,) == last row of c
};

/// Contrastive-predictive-coding audio model: a strided 1-D convolutional
/// chunk encoder, a single-layer GRU aggregator, and one bilinear scorer
/// per prediction horizon.
class CpcModel {
 public:
  CpcModel() = default;
  CpcModel(const CpcConfig& cfg, std::uint64_t seed);

  const CpcConfig& config() const { return cfg_; }

  /// Per-frame latents; throws when the chunk length differs from the
  /// configured window.
  Tensor encode_latents(const AlignedChunks& chunks) const;

  /// Causal GRU pass: row t of C depends only on z rows 0..t. Returns
  /// (C, omega) with omega an exact copy of C's last row.
  std::pair<Tensor, Tensor> aggregate_context(const Tensor& z) const;

  AudioContext context(const AlignedChunks& chunks) const;

  /// InfoNCE value on precomputed (z, C): cross-entropy of picking the true
  /// future latent among 1 + n_negatives candidates, averaged over time
  /// steps and horizons. Negative draws are controlled by neg_seed.
  double infonce_loss(const Tensor& z, const Tensor& c, std::uint64_t neg_seed) const;

  struct B {
    Conv1dLayer::B e1, e2, e3;
    GruCell::B gru;
    std::vector<Var> scorers;
  };
  B bind(Binder& bd) const;

  /// Encoder applied to every chunk row; returns the (T, d_z) latent matrix.
  Var encode_graph(Graph& g, const B& p, Var chunks) const;
  /// GRU over latent rows; returns the (T, d_c) context matrix.
  Var aggregate_graph(Graph& g, const B& p, Var z) const;

  NamedTensors named_tensors();
  std::vector<Tensor>& scorers() { return scorers_; }
  const std::vector<Tensor>& scorers() const { return scorers_; }

 private:
  CpcConfig cfg_;
  Conv1dLayer enc1_, enc2_, enc3_;
  GruCell gru_;
  std::vector<Tensor> scorers_;  // k_steps bilinear maps, each (d_c, d_z)
};

/// InfoNCE over graph variables; scorers[k-1] scores horizon k. Used by the
/// trainer and directly by tests with hand-set scorers.
Var infonce_graph(Graph& g, Var z, Var c, const std::vector<Var>& scorers, int n_negatives,
                  Rng& neg_rng);

struct TrainCurve {
  std::vector<double> epoch_loss;
};

/// Trains encoder, aggregator and scorers jointly with RMSProp; one
/// utterance per step. Throws NumericalError naming the step when the loss
/// stops being finite.
TrainCurve train_cpc(CpcModel& model, const std::vector<AlignedChunks>& data, int epochs,
                     double lr, std::uint64_t seed);

void save_cpc_checkpoint(const std::filesystem::path& path, CpcModel& model);
CpcModel load_cpc_checkpoint(const std::filesystem::path& path);

/// Loss thrown with the failing step index when training diverges.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace speechface
