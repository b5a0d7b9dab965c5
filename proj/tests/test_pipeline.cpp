#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "speechface/pipeline.hpp"

namespace speechface {
namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("speechface_pipe_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Small but complete toy run; dimensions chosen so every stage finishes in
// seconds.
std::string tiny_config_text(const fs::path& out) {
  return "seed = 11\n"
         "out_dir = " + out.string() + "\n"
         "[data]\n"
         "n_utterances = 6\n"
         "frames = 6\n"
         "height = 32\n"
         "width = 32\n"
         "[cpc]\n"
         "window = 533\n"
         "d_z = 10\n"
         "d_c = 12\n"
         "k_steps = 2\n"
         "n_negatives = 3\n"
         "enc_c1 = 6\n"
         "enc_c2 = 8\n"
         "epochs = 2\n"
         "[distill]\n"
         "hidden = 16\n"
         "d_id = 32\n"
         "d_emo = 8\n"
         "k_frames = 3\n"
         "epochs = 2\n"
         "[composer]\n"
         "steps = 4\n"
         "frames_per_step = 2\n";
}

TEST(RunConfig, DefaultsEchoTheTrainingRecipe) {
  const RunConfig cfg = run_config_from_text("");
  EXPECT_EQ(cfg.distill.lambda, 0.025);
  EXPECT_EQ(cfg.cpc.epochs, 100);
  EXPECT_EQ(cfg.distill.epochs, 100);
  EXPECT_EQ(cfg.composer.epochs, 100);
  EXPECT_EQ(cfg.composer.model.lr_gen, 3e-4);
  EXPECT_EQ(cfg.composer.model.lr_d_id, 3e-4);
  EXPECT_EQ(cfg.composer.model.lr_d_fr, 1e-4);
  EXPECT_EQ(cfg.composer.model.lr_d_sync, 1e-5);
  EXPECT_EQ(cfg.data.train_ratio, 0.70);
  EXPECT_EQ(cfg.data.val_ratio, 0.15);
  EXPECT_EQ(cfg.data.test_ratio, 0.15);
  EXPECT_EQ(cfg.distill.d_id, 4096);
  // 16 kHz at 30 fps: hop 533, centered default window 2 * hop.
  EXPECT_EQ(cfg.cpc.model.window, 1066);
}

TEST(RunConfig, FieldLevelErrors) {
  EXPECT_THROW(run_config_from_text("[cpc]\nepochs = soon\n"), ConfigError);
  EXPECT_THROW(run_config_from_text("[data]\nheight = 32\nwidth = 16\n"), ConfigError);
  EXPECT_THROW(run_config_from_text("[data]\ntrain_ratio = 0.9\n"), ConfigError);
  EXPECT_THROW(run_config_from_text("typo_key = 1\n"), ConfigError);
  EXPECT_THROW(run_config_from_text("[cpc]\nnot_a_real_option = 2\n"), ConfigError);
  try {
    run_config_from_text("[cpc]\nepochs = soon\n");
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("cpc.epochs"), std::string::npos);
  }
}

TEST(RunConfig, CommentsSectionsAndWhitespace) {
  const RunConfig cfg = run_config_from_text(
      "# a comment\n"
      "seed = 99   ; trailing comment\n"
      "[data]\n"
      "  n_utterances   =  4\n");
  EXPECT_EQ(cfg.seed, 99u);
  EXPECT_EQ(cfg.data.n_utterances, 4);
}

TEST(Pipeline, DistillWithoutCpcNamesTheMissingStage) {
  const fs::path out = fresh_dir("dep");
  Pipeline p(run_config_from_text(tiny_config_text(out)));
  p.prepare_data();
  try {
    p.train_distill_stage();
    FAIL() << "expected missing dependency";
  } catch (const MissingDependencyError& e) {
    EXPECT_NE(std::string(e.what()).find("train-cpc"), std::string::npos);
  }
  fs::remove_all(out);
}

TEST(Pipeline, StagesSkipWhenManifestSaysDone) {
  const fs::path out = fresh_dir("skip");
  Pipeline p(run_config_from_text(tiny_config_text(out)));
  EXPECT_TRUE(p.prepare_data());
  EXPECT_FALSE(p.prepare_data());       // manifest short-circuits
  EXPECT_TRUE(p.prepare_data(true));    // --force reruns
  EXPECT_TRUE(p.train_cpc_stage());
  EXPECT_FALSE(p.train_cpc_stage());
  fs::remove_all(out);
}

TEST(Pipeline, ConfigChangeInvalidatesCompletedStage) {
  const fs::path out = fresh_dir("rehash");
  Pipeline a(run_config_from_text(tiny_config_text(out)));
  a.prepare_data();
  std::string changed = tiny_config_text(out);
  changed.replace(changed.find("n_utterances = 6"), 16, "n_utterances = 7");
  Pipeline b(run_config_from_text(changed));
  EXPECT_TRUE(b.prepare_data());  // hash differs, stage reruns
  fs::remove_all(out);
}

TEST(Pipeline, EndToEndToyRunProducesEverything) {
  const fs::path out = fresh_dir("e2e");
  const RunConfig cfg = run_config_from_text(tiny_config_text(out));
  Pipeline p(cfg);
  p.prepare_data();
  p.train_cpc_stage();
  p.train_distill_stage();
  p.train_composer_stage();

  EXPECT_TRUE(fs::exists(p.cpc_ckpt()));
  EXPECT_TRUE(fs::exists(p.students_ckpt()));
  EXPECT_TRUE(fs::exists(p.generator_ckpt()));
  EXPECT_TRUE(fs::exists(p.d_sync_ckpt()));
  EXPECT_TRUE(fs::exists(out / "composer" / "curve.csv"));
  EXPECT_TRUE(fs::exists(out / "manifest.json"));

  // Generate from a held-out clip's audio and evaluate against it.
  const DatasetSplit split = load_split(p.split_path());
  ASSERT_FALSE(split.test.empty());
  const fs::path ref = cfg.data_root() / split.test.front();
  const fs::path gen_dir = out / "generated" / split.test.front();
  p.generate(ref, gen_dir);
  EXPECT_TRUE(fs::exists(gen_dir / "frame_00000.png"));
  EXPECT_TRUE(fs::exists(gen_dir / "audio.raw"));

  const EvalReport report = p.evaluate(gen_dir, ref, out / "eval" / "report.json");
  EXPECT_EQ(report.n_frames, 6);
  EXPECT_TRUE(fs::exists(out / "eval" / "report.json"));
  EXPECT_TRUE(report.has_sync);
  fs::remove_all(out);
}

TEST(Pipeline, GenerateBeforeTrainingIsExitThreeTerritory) {
  const fs::path out = fresh_dir("gen_missing");
  Pipeline p(run_config_from_text(tiny_config_text(out)));
  EXPECT_THROW(p.generate(out / "nope.raw", out / "frames"), MissingDependencyError);
  fs::remove_all(out);
}

TEST(Pipeline, OutRootEnvOverride) {
  const fs::path root = fresh_dir("envroot");
  setenv("SPEECHFACE_OUT_ROOT", root.string().c_str(), 1);
  const RunConfig cfg = run_config_from_text("out_dir = sub/run\n");
  EXPECT_EQ(cfg.out_path(), root / "sub/run");
  unsetenv("SPEECHFACE_OUT_ROOT");
  EXPECT_EQ(run_config_from_text("out_dir = sub/run\n").out_path(), fs::path("sub/run"));
  fs::remove_all(root);
}

}  // namespace
}  // namespace speechface
