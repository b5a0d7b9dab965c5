#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "speechface/checkpoint.hpp"
#include "speechface/composer.hpp"

namespace speechface {

namespace {

Tensor context_row(const Tensor& contexts, int t) {
  const int d_c = contexts.dim(1);
  Tensor c({d_c});
  for (int i = 0; i < d_c; ++i) c.at(i) = contexts.at(t, i);
  return c;
}

std::pair<int, int> sample_tau_pair(Rng& rng, int t_count) {
  const int tau = static_cast<int>(rng.below(static_cast<std::uint64_t>(t_count)));
  int tau_prime = static_cast<int>(rng.below(static_cast<std::uint64_t>(t_count - 1)));
  if (tau_prime >= tau) ++tau_prime;
  return {tau, tau_prime};
}

// LSGAN half-square toward a target label.
Var lsgan_term(Graph& g, Var score, double target) {
  return g.scale(g.square(g.add_scalar(score, -target)), 0.5);
}

std::map<std::string, std::string> composer_config_map(const ComposerConfig& c) {
  std::ostringstream refs;
  for (std::size_t i = 0; i < c.ref_channels.size(); ++i) {
    if (i) refs << ",";
    refs << c.ref_channels[i];
  }
  return {{"frame_size", std::to_string(c.frame_size)},
          {"d_c", std::to_string(c.d_c)},
          {"d_emo", std::to_string(c.d_emo)},
          {"d_id", std::to_string(c.d_id)},
          {"ref_channels", refs.str()},
          {"sim_rows", std::to_string(c.sim_rows)},
          {"conventional_gan_targets", c.conventional_gan_targets ? "1" : "0"},
          {"w_adv", std::to_string(c.w_adv)},
          {"w_sim", std::to_string(c.w_sim)},
          {"w_grad", std::to_string(c.w_grad)},
          {"lr_gen", std::to_string(c.lr_gen)},
          {"lr_d_id", std::to_string(c.lr_d_id)},
          {"lr_d_fr", std::to_string(c.lr_d_fr)},
          {"lr_d_sync", std::to_string(c.lr_d_sync)},
          {"frames_per_step", std::to_string(c.frames_per_step)}};
}

ComposerConfig composer_config_from_map(const std::map<std::string, std::string>& m) {
  ComposerConfig c;
  c.frame_size = std::stoi(m.at("frame_size"));
  c.d_c = std::stoi(m.at("d_c"));
  c.d_emo = std::stoi(m.at("d_emo"));
  c.d_id = std::stoi(m.at("d_id"));
  c.ref_channels.clear();
  std::istringstream refs(m.at("ref_channels"));
  std::string tok;
  while (std::getline(refs, tok, ',')) c.ref_channels.push_back(std::stoi(tok));
  c.sim_rows = std::stoi(m.at("sim_rows"));
  c.conventional_gan_targets = m.at("conventional_gan_targets") == "1";
  c.w_adv = std::stod(m.at("w_adv"));
  c.w_sim = std::stod(m.at("w_sim"));
  c.w_grad = std::stod(m.at("w_grad"));
  c.lr_gen = std::stod(m.at("lr_gen"));
  c.lr_d_id = std::stod(m.at("lr_d_id"));
  c.lr_d_fr = std::stod(m.at("lr_d_fr"));
  c.lr_d_sync = std::stod(m.at("lr_d_sync"));
  c.frames_per_step = std::stoi(m.at("frames_per_step"));
  return c;
}

}  // namespace

ComposerModels make_composer_models(const ComposerConfig& cfg, std::uint64_t seed) {
  validate_composer_config(cfg);
  ComposerModels m;
  m.generator = Generator(cfg, derive_seed(seed, "gen"));
  m.d_id = DiscIdentity(cfg, derive_seed(seed, "d_id"));
  m.d_fr = DiscFrame(cfg, derive_seed(seed, "d_fr"));
  m.d_sync = DiscSync(cfg, derive_seed(seed, "d_sync"));
  return m;
}

Stage2Clip prepare_stage2_clip(const Utterance& utt, const CpcModel& cpc,
                               const StudentNets& students,
                               const SurrogateIdentityTeacher& backbone, int window) {
  Stage2Clip clip;
  AlignedChunks chunks =
      align_audio_to_frames(utt.audio, utt.sample_rate, utt.fps, utt.frame_count(), window);
  clip.ctx = cpc.context(chunks);
  auto [nu, mu] = students.forward(clip.ctx.omega);
  clip.nu = std::move(nu);
  clip.mu = std::move(mu);
  clip.reference.maps = backbone.reference_features(utt.frames.front());
  clip.frames = utt.frames;
  return clip;
}

std::vector<LossReport> train_stage2(ComposerModels& models, const std::vector<Stage2Clip>& clips,
                                     int steps, std::uint64_t seed) {
  if (clips.empty()) throw std::invalid_argument("train_stage2: no clips");
  const ComposerConfig& cfg = models.generator.config();
  // Real pairs sit at `real`; fakes at 1 - real. As written the losses put
  // real data at 0.
  const double real = cfg.conventional_gan_targets ? 1.0 : 0.0;
  const double fake = 1.0 - real;

  RmsProp opt_gen({.lr = cfg.lr_gen});
  RmsProp opt_d_id({.lr = cfg.lr_d_id});
  RmsProp opt_d_fr({.lr = cfg.lr_d_fr});
  RmsProp opt_d_sync({.lr = cfg.lr_d_sync});

  std::vector<LossReport> log;
  log.reserve(static_cast<std::size_t>(steps));

  for (int step = 0; step < steps; ++step) {
    const std::size_t ci = static_cast<std::size_t>(
        Rng(derive_seed(seed, "clip", static_cast<std::uint64_t>(step))).below(clips.size()));
    const Stage2Clip& clip = clips[ci];
    const int t_count = static_cast<int>(clip.frames.size());

    Rng tau_rng(derive_seed(seed, "tau", static_cast<std::uint64_t>(step)));
    const auto [tau, tau_prime] = sample_tau_pair(tau_rng, t_count);

    // Frame batch for this step; tau always participates (the sync term
    // needs the generated frame at tau).
    Rng frame_rng(derive_seed(seed, "frames", static_cast<std::uint64_t>(step)));
    const int want = std::min(cfg.frames_per_step, t_count);
    std::vector<int> batch = frame_rng.sample_without_replacement(t_count, want);
    if (std::find(batch.begin(), batch.end(), tau) == batch.end()) batch.push_back(tau);

    // Detached generator outputs for the discriminator phase.
    const InflatedIdentity inflated_detached = models.generator.inflate_identity(clip.nu);
    std::vector<Tensor> gen_detached(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      gen_detached[i] = models.generator.generate_frame(
          {context_row(clip.ctx.c, batch[i]), clip.nu, clip.mu}, inflated_detached);
    }
    auto gen_at = [&](int t) -> const Tensor& {
      for (std::size_t i = 0; i < batch.size(); ++i) {
        if (batch[i] == t) return gen_detached[i];
      }
      throw std::logic_error("frame not in batch");
    };

    LossParts parts;

    {  // identity critic
      Graph g;
      Binder bd(g, true);
      DiscIdentity::B p = models.d_id.bind(bd);
      std::vector<Var> fake_maps, real_maps;
      for (const Tensor& m : inflated_detached.maps) fake_maps.push_back(g.leaf(m));
      for (const Tensor& m : clip.reference.maps) real_maps.push_back(g.leaf(m));
      check_identity_maps_compat(inflated_detached, clip.reference);
      Var loss = g.add(lsgan_term(g, models.d_id.score_graph(g, p, fake_maps), fake),
                       lsgan_term(g, models.d_id.score_graph(g, p, real_maps), real));
      parts.l_adv_id = g.scalar_value(loss);
      g.backward(loss);
      opt_d_id.step(bd.bindings(), g);
    }

    {  // frame critic: sums over the batch frames
      Graph g;
      Binder bd(g, true);
      DiscFrame::B p = models.d_fr.bind(bd);
      Var loss;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        Var term =
            g.add(lsgan_term(g, models.d_fr.score_graph(g, p, g.leaf(gen_detached[i])), fake),
                  lsgan_term(g, models.d_fr.score_graph(
                                    g, p, g.leaf(clip.frames[static_cast<std::size_t>(batch[i])])),
                             real));
        loss = loss.valid() ? g.add(loss, term) : term;
      }
      parts.l_adv_fr = g.scalar_value(loss);
      g.backward(loss);
      opt_d_fr.step(bd.bindings(), g);
    }

    {  // sync critic
      Graph g;
      Binder bd(g, true);
      DiscSync::B p = models.d_sync.bind(bd);
      Var c_tau = g.leaf(context_row(clip.ctx.c, tau));
      Var c_tp = g.leaf(context_row(clip.ctx.c, tau_prime));
      Var real_frame = g.leaf(clip.frames[static_cast<std::size_t>(tau)]);
      Var synced = models.d_sync.score_graph(g, p, c_tau, real_frame);
      Var mismatched = models.d_sync.score_graph(g, p, c_tp, real_frame);
      Var generated = models.d_sync.score_graph(g, p, c_tau, g.leaf(gen_at(tau)));
      Var loss = g.add(g.scale(lsgan_term(g, synced, real), 2.0),
                       g.add(lsgan_term(g, mismatched, fake), lsgan_term(g, generated, fake)));
      parts.l_adv_sync = g.scalar_value(loss);
      g.backward(loss);
      opt_d_sync.step(bd.bindings(), g);
    }

    {  // generator: adversarial terms with flipped targets + similarity + gradient
      Graph g;
      Binder bd_gen(g, true);
      Generator::B pg = models.generator.bind(bd_gen);
      Binder bd_frozen(g, false);
      DiscIdentity::B p_id = models.d_id.bind(bd_frozen);
      DiscFrame::B p_fr = models.d_fr.bind(bd_frozen);
      DiscSync::B p_sync = models.d_sync.bind(bd_frozen);

      std::vector<Var> inflated = models.generator.inflate_graph(g, pg, g.leaf(clip.nu));
      Var mu = g.leaf(clip.mu);

      Var adv = lsgan_term(g, models.d_id.score_graph(g, p_id, inflated), real);
      Var sim, grad;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const int t = batch[i];
        Var frame = models.generator.frame_graph(g, pg, g.leaf(context_row(clip.ctx.c, t)), mu,
                                                 inflated);
        Var real_frame = g.leaf(clip.frames[static_cast<std::size_t>(t)]);
        adv = g.add(adv, lsgan_term(g, models.d_fr.score_graph(g, p_fr, frame), real));
        if (t == tau) {
          Var c_tau = g.leaf(context_row(clip.ctx.c, tau));
          adv = g.add(adv, lsgan_term(g, models.d_sync.score_graph(g, p_sync, c_tau, frame), real));
        }
        Var s = frame_similarity_loss_graph(g, frame, real_frame, cfg.sim_rows);
        Var gr = gradient_loss_graph(g, frame, real_frame);
        sim = sim.valid() ? g.add(sim, s) : s;
        grad = grad.valid() ? g.add(grad, gr) : gr;
      }
      const double inv_batch = 1.0 / static_cast<double>(batch.size());
      sim = g.scale(sim, inv_batch);
      grad = g.scale(grad, inv_batch);
      Var loss = g.add(g.add(g.scale(adv, cfg.w_adv), g.scale(sim, cfg.w_sim)),
                       g.scale(grad, cfg.w_grad));
      parts.l_sim = g.scalar_value(sim);
      parts.l_grad = g.scalar_value(grad);
      const double total = g.scalar_value(loss);
      if (!std::isfinite(total)) {
        throw NumericalError("stage-2 training diverged at step " + std::to_string(step) +
                             ": generator loss is not finite");
      }
      g.backward(loss);
      opt_gen.step(bd_gen.bindings(), g);
    }

    LossReport report;
    try {
      report = total_losses(parts);
    } catch (const std::invalid_argument& e) {
      throw NumericalError("stage-2 training diverged at step " + std::to_string(step) + ": " +
                           e.what());
    }
    log.push_back(report);
  }
  return log;
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossReport>& steps) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write loss curve: " + path.string());
  f << "step,l_adv_id,l_adv_fr,l_adv_sync,l_sim,l_grad,l_total\n";
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const LossReport& r = steps[i];
    f << i << "," << r.l_adv_id << "," << r.l_adv_fr << "," << r.l_adv_sync << "," << r.l_sim
      << "," << r.l_grad << "," << r.l_total << "\n";
  }
}

std::vector<double> train_sync_scorer(DiscSync& d_sync, const std::vector<Stage2Clip>& clips,
                                      int steps, double lr, std::uint64_t seed,
                                      bool conventional_targets) {
  if (clips.empty()) throw std::invalid_argument("train_sync_scorer: no clips");
  const double real = conventional_targets ? 1.0 : 0.0;
  const double fake = 1.0 - real;
  RmsProp opt({.lr = lr});
  std::vector<double> losses;
  losses.reserve(static_cast<std::size_t>(steps));
  // Balanced matched/mismatched weighting keeps the decision boundary at
  // the 0.5 midpoint; several pairs per step cut gradient noise.
  constexpr int kPairsPerStep = 16;
  for (int step = 0; step < steps; ++step) {
    Rng rng(derive_seed(seed, "sync_step", static_cast<std::uint64_t>(step)));
    Graph g;
    Binder bd(g, true);
    DiscSync::B p = d_sync.bind(bd);
    Var loss;
    for (int k = 0; k < kPairsPerStep; ++k) {
      const Stage2Clip& clip = clips[static_cast<std::size_t>(rng.below(clips.size()))];
      const int t_count = static_cast<int>(clip.frames.size());
      const auto [tau, tau_prime] = sample_tau_pair(rng, t_count);
      Var synced = d_sync.score_graph(g, p, g.leaf(context_row(clip.ctx.c, tau)),
                                      g.leaf(clip.frames[static_cast<std::size_t>(tau)]));
      Var mismatched = d_sync.score_graph(g, p, g.leaf(context_row(clip.ctx.c, tau_prime)),
                                          g.leaf(clip.frames[static_cast<std::size_t>(tau)]));
      Var term = g.add(lsgan_term(g, synced, real), lsgan_term(g, mismatched, fake));
      loss = loss.valid() ? g.add(loss, term) : term;
    }
    loss = g.scale(loss, 1.0 / kPairsPerStep);
    const double value = g.scalar_value(loss);
    if (!std::isfinite(value)) {
      throw NumericalError("sync scorer training diverged at step " + std::to_string(step));
    }
    g.backward(loss);
    opt.step(bd.bindings(), g);
    losses.push_back(value);
  }
  return losses;
}

double sync_pair_accuracy(const DiscSync& d_sync, const std::vector<Stage2Clip>& clips,
                          bool conventional_targets) {
  long correct = 0, total = 0;
  for (const Stage2Clip& clip : clips) {
    const int t_count = static_cast<int>(clip.frames.size());
    for (int t = 0; t < t_count; ++t) {
      int other = (t + t_count / 2) % t_count;
      if (other == t) other = (t + 1) % t_count;
      const double matched =
          d_sync.score(context_row(clip.ctx.c, t), clip.frames[static_cast<std::size_t>(t)]);
      const double mismatched =
          d_sync.score(context_row(clip.ctx.c, other), clip.frames[static_cast<std::size_t>(t)]);
      const bool matched_ok = conventional_targets ? matched >= 0.5 : matched < 0.5;
      const bool mismatched_ok = conventional_targets ? mismatched < 0.5 : mismatched >= 0.5;
      correct += matched_ok + mismatched_ok;
      total += 2;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

// ---- checkpoints ----

void save_generator_checkpoint(const std::filesystem::path& path, Generator& gen) {
  save_checkpoint(path, "generator", composer_config_map(gen.config()),
                  to_const(gen.named_tensors()));
}

Generator load_generator_checkpoint(const std::filesystem::path& path) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.kind != "generator") {
    throw std::runtime_error("expected a generator checkpoint, found kind '" + ck.kind + "' in " +
                             path.string());
  }
  Generator gen(composer_config_from_map(ck.config), /*seed=*/0);
  assign_named_tensors(gen.named_tensors(), ck.tensors);
  return gen;
}

void save_disc_sync_checkpoint(const std::filesystem::path& path, DiscSync& d,
                               const ComposerConfig& cfg) {
  save_checkpoint(path, "disc_sync", composer_config_map(cfg), to_const(d.named_tensors()));
}

DiscSync load_disc_sync_checkpoint(const std::filesystem::path& path, ComposerConfig* cfg_out) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.kind != "disc_sync") {
    throw std::runtime_error("expected a disc_sync checkpoint, found kind '" + ck.kind + "' in " +
                             path.string());
  }
  const ComposerConfig cfg = composer_config_from_map(ck.config);
  if (cfg_out) *cfg_out = cfg;
  DiscSync d(cfg, /*seed=*/0);
  assign_named_tensors(d.named_tensors(), ck.tensors);
  return d;
}

void save_disc_identity_checkpoint(const std::filesystem::path& path, DiscIdentity& d,
                                   const ComposerConfig& cfg, const std::vector<int>& channels) {
  (void)channels;
  save_checkpoint(path, "disc_identity", composer_config_map(cfg), to_const(d.named_tensors()));
}

void save_disc_frame_checkpoint(const std::filesystem::path& path, DiscFrame& d,
                                const ComposerConfig& cfg) {
  save_checkpoint(path, "disc_frame", composer_config_map(cfg), to_const(d.named_tensors()));
}

}  // namespace speechface
