#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "speechface/composer.hpp"
#include "speechface/media.hpp"
#include "test_util.hpp"

namespace speechface {
namespace {

using testing::random_tensor;

struct TinyStage2 {
  ComposerConfig cfg;
  CpcModel cpc;
  StudentNets students;
  TeacherPair teachers;
  std::vector<Stage2Clip> clips;
};

TinyStage2 make_tiny_stage2(int n_clips, int frames, std::uint64_t seed) {
  TinyStage2 s;
  s.cfg.frame_size = 32;
  s.cfg.d_c = 12;
  s.cfg.d_emo = 8;
  s.cfg.d_id = 32;
  s.cfg.frames_per_step = 3;

  CpcConfig ccfg;
  ccfg.window = 533;
  ccfg.d_z = 10;
  ccfg.d_c = 12;
  ccfg.k_steps = 2;
  ccfg.n_negatives = 3;
  ccfg.enc_c1 = 6;
  ccfg.enc_c2 = 8;
  s.cpc = CpcModel(ccfg, derive_seed(seed, "cpc"));

  StudentConfig scfg;
  scfg.d_in = 12;
  scfg.hidden = 16;
  scfg.d_id = 32;
  scfg.d_emo = 8;
  s.students = StudentNets(scfg, derive_seed(seed, "students"));

  TeacherConfig tcfg;
  tcfg.height = 32;
  tcfg.width = 32;
  tcfg.d_id = 32;
  tcfg.d_emo = 8;
  s.teachers = make_teachers(tcfg, derive_seed(seed, "teachers"));

  const auto utts = synth_toy_dataset(n_clips, frames, 32, 32, derive_seed(seed, "toy"));
  for (const Utterance& u : utts) {
    s.clips.push_back(prepare_stage2_clip(u, s.cpc, s.students, s.teachers.identity, ccfg.window));
  }
  return s;
}

std::vector<double> snapshot(NamedTensors params) {
  std::vector<double> all;
  for (const auto& [name, t] : params) {
    all.insert(all.end(), t->data(), t->data() + t->size());
  }
  return all;
}

TEST(Stage2Prep, ShapesAreConsistent) {
  TinyStage2 s = make_tiny_stage2(1, 6, 1);
  const Stage2Clip& clip = s.clips[0];
  EXPECT_EQ(clip.ctx.c.shape(), (std::vector<int>{6, 12}));
  EXPECT_EQ(clip.nu.shape(), (std::vector<int>{32}));
  EXPECT_EQ(clip.mu.shape(), (std::vector<int>{8}));
  ASSERT_EQ(clip.reference.maps.size(), 3u);
  EXPECT_EQ(clip.reference.maps[0].shape(), (std::vector<int>{32, 2, 2}));
  EXPECT_EQ(clip.reference.maps[1].shape(), (std::vector<int>{24, 4, 4}));
  EXPECT_EQ(clip.reference.maps[2].shape(), (std::vector<int>{16, 8, 8}));
  // Inflated maps line up with the reference pyramid layer by layer.
  const Generator gen(s.cfg, 2);
  const InflatedIdentity inflated = gen.inflate_identity(clip.nu);
  EXPECT_NO_THROW(check_identity_maps_compat(inflated, clip.reference));
}

TEST(Stage2Training, PhasesTouchOnlyTheirParameterGroups) {
  // lr_gen = 0 freezes the generator phase in place; the critics move.
  {
    TinyStage2 s = make_tiny_stage2(2, 6, 3);
    s.cfg.lr_gen = 0.0;
    ComposerModels models = make_composer_models(s.cfg, 4);
    const auto g_before = snapshot(models.generator.named_tensors());
    const auto d_before = snapshot(models.d_fr.named_tensors());
    train_stage2(models, s.clips, 2, 5);
    EXPECT_EQ(snapshot(models.generator.named_tensors()), g_before);
    EXPECT_NE(snapshot(models.d_fr.named_tensors()), d_before);
  }
  // And the converse: critic rates at zero leave every critic untouched.
  {
    TinyStage2 s = make_tiny_stage2(2, 6, 3);
    s.cfg.lr_d_id = s.cfg.lr_d_fr = s.cfg.lr_d_sync = 0.0;
    ComposerModels models = make_composer_models(s.cfg, 4);
    const auto g_before = snapshot(models.generator.named_tensors());
    const auto id_before = snapshot(models.d_id.named_tensors());
    const auto fr_before = snapshot(models.d_fr.named_tensors());
    const auto sync_before = snapshot(models.d_sync.named_tensors());
    train_stage2(models, s.clips, 2, 5);
    EXPECT_NE(snapshot(models.generator.named_tensors()), g_before);
    EXPECT_EQ(snapshot(models.d_id.named_tensors()), id_before);
    EXPECT_EQ(snapshot(models.d_fr.named_tensors()), fr_before);
    EXPECT_EQ(snapshot(models.d_sync.named_tensors()), sync_before);
  }
}

TEST(Stage2Training, GradientReachesEveryGeneratorBlock) {
  TinyStage2 s = make_tiny_stage2(1, 6, 7);
  ComposerModels models = make_composer_models(s.cfg, 8);
  const Stage2Clip& clip = s.clips[0];

  Graph g;
  Binder bd(g, true);
  Generator::B pg = models.generator.bind(bd);
  Binder frozen(g, false);
  DiscIdentity::B p_id = models.d_id.bind(frozen);
  DiscFrame::B p_fr = models.d_fr.bind(frozen);
  DiscSync::B p_sync = models.d_sync.bind(frozen);

  const std::vector<Var> inflated = models.generator.inflate_graph(g, pg, g.leaf(clip.nu));
  Tensor c0({12});
  for (int i = 0; i < 12; ++i) c0.at(i) = clip.ctx.c.at(0, i);
  Var frame = models.generator.frame_graph(g, pg, g.leaf(c0), g.leaf(clip.mu), inflated);
  Var real = g.leaf(clip.frames[0]);
  Var loss = g.scale(g.square(models.d_id.score_graph(g, p_id, inflated)), 0.5);
  loss = g.add(loss, g.scale(g.square(models.d_fr.score_graph(g, p_fr, frame)), 0.5));
  loss = g.add(loss,
               g.scale(g.square(models.d_sync.score_graph(g, p_sync, g.leaf(c0), frame)), 0.5));
  loss = g.add(loss, frame_similarity_loss_graph(g, frame, real, -1));
  loss = g.add(loss, gradient_loss_graph(g, frame, real));
  g.backward(loss);

  auto block_grad_norm = [&](const std::string& prefix) {
    double norm = 0;
    for (const Binding& b : bd.bindings()) {
      if (b.name.rfind(prefix, 0) != 0) continue;
      const Tensor& grad = g.grad(b.var);
      for (std::size_t i = 0; i < grad.size(); ++i) norm += grad[i] * grad[i];
    }
    return norm;
  };
  EXPECT_GT(block_grad_norm("infl_"), 0.0) << "identity-inflation path";
  EXPECT_GT(block_grad_norm("align"), 0.0) << "alignment convolutions";
  EXPECT_GT(block_grad_norm("up"), 0.0) << "decoder";

  // The seed layer reads [c_t ; mu]: both column blocks must carry
  // gradient (context path and emotion path).
  for (const Binding& b : bd.bindings()) {
    if (b.name != "seed.w") continue;
    const Tensor& grad = g.grad(b.var);
    double ctx_part = 0, emo_part = 0;
    const int rows = b.param->dim(0), cols = b.param->dim(1);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        const double v = grad.at(r, c) * grad.at(r, c);
        if (c < 12) {
          ctx_part += v;
        } else {
          emo_part += v;
        }
      }
    }
    EXPECT_GT(ctx_part, 0.0) << "context path";
    EXPECT_GT(emo_part, 0.0) << "emotion path";
  }
}

TEST(Stage2Training, LossReportsSatisfyInvariantsAndSimFalls) {
  TinyStage2 s = make_tiny_stage2(1, 6, 9);
  ComposerModels models = make_composer_models(s.cfg, 10);
  const std::vector<LossReport> log = train_stage2(models, s.clips, 60, 11);
  ASSERT_EQ(log.size(), 60u);
  for (const LossReport& r : log) {
    EXPECT_NEAR(r.l_adv_total, r.l_adv_id + r.l_adv_fr + r.l_adv_sync, 1e-9);
    EXPECT_NEAR(r.l_total, r.l_adv_total + r.l_sim + r.l_grad, 1e-9);
    EXPECT_TRUE(std::isfinite(r.l_total));
  }
  double early = 0, late = 0;
  for (int i = 0; i < 10; ++i) {
    early += log[static_cast<std::size_t>(i)].l_sim;
    late += log[log.size() - 10 + static_cast<std::size_t>(i)].l_sim;
  }
  EXPECT_LT(late, early);
}

TEST(Stage2Training, CsvHasTheDocumentedColumns) {
  TinyStage2 s = make_tiny_stage2(1, 6, 12);
  ComposerModels models = make_composer_models(s.cfg, 13);
  const auto log = train_stage2(models, s.clips, 3, 14);
  const auto path = std::filesystem::temp_directory_path() / "speechface_curve_test.csv";
  write_loss_csv(path, log);
  std::ifstream f(path);
  std::string header;
  std::getline(f, header);
  EXPECT_EQ(header, "step,l_adv_id,l_adv_fr,l_adv_sync,l_sim,l_grad,l_total");
  int rows = 0;
  std::string line;
  while (std::getline(f, line)) ++rows;
  EXPECT_EQ(rows, 3);
  std::filesystem::remove(path);
}

TEST(SyncScorer, TrainingAndCheckpointRoundTrip) {
  TinyStage2 s = make_tiny_stage2(4, 10, 15);
  DiscSync d_sync(s.cfg, 16);
  const std::vector<double> losses = train_sync_scorer(d_sync, s.clips, 120, 1e-3, 17);
  ASSERT_EQ(losses.size(), 120u);
  double early = 0, late = 0;
  for (int i = 0; i < 20; ++i) {
    early += losses[static_cast<std::size_t>(i)];
    late += losses[losses.size() - 20 + static_cast<std::size_t>(i)];
  }
  EXPECT_LT(late, early);

  const auto path = std::filesystem::temp_directory_path() / "speechface_dsync_test.ckpt";
  save_disc_sync_checkpoint(path, d_sync, s.cfg);
  ComposerConfig cfg_loaded;
  const DiscSync loaded = load_disc_sync_checkpoint(path, &cfg_loaded);
  EXPECT_EQ(cfg_loaded.d_c, s.cfg.d_c);
  Tensor c0({12});
  for (int i = 0; i < 12; ++i) c0.at(i) = s.clips[0].ctx.c.at(0, i);
  EXPECT_EQ(loaded.score(c0, s.clips[0].frames[0]), d_sync.score(c0, s.clips[0].frames[0]));
  std::filesystem::remove(path);
}

TEST(GeneratorCheckpoint, RoundTripPreservesFrames) {
  TinyStage2 s = make_tiny_stage2(1, 4, 18);
  ComposerModels models = make_composer_models(s.cfg, 19);
  train_stage2(models, s.clips, 2, 20);
  const std::vector<Tensor> before =
      generate_clip(models.generator, s.clips[0].ctx.c, s.clips[0].nu, s.clips[0].mu);
  const auto path = std::filesystem::temp_directory_path() / "speechface_gen_test.ckpt";
  save_generator_checkpoint(path, models.generator);
  const Generator loaded = load_generator_checkpoint(path);
  const std::vector<Tensor> after =
      generate_clip(loaded, s.clips[0].ctx.c, s.clips[0].nu, s.clips[0].mu);
  ASSERT_EQ(before.size(), after.size());
  for (std::size_t t = 0; t < before.size(); ++t) EXPECT_EQ(before[t].vec(), after[t].vec());
  std::filesystem::remove(path);
}

TEST(ComposerConfigValidation, RejectsBadGeometry) {
  ComposerConfig cfg;
  cfg.frame_size = 48;  // not a multiple of 32
  EXPECT_THROW(validate_composer_config(cfg), std::invalid_argument);
  cfg.frame_size = 16;
  EXPECT_THROW(validate_composer_config(cfg), std::invalid_argument);
  cfg.frame_size = 64;
  EXPECT_NO_THROW(validate_composer_config(cfg));
}

}  // namespace
}  // namespace speechface
