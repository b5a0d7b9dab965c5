#include <gtest/gtest.h>

#include <cmath>

#include "speechface/composer.hpp"
#include "test_util.hpp"

namespace speechface {
namespace {

using testing::fd_gradient;
using testing::gradient_rel_err;
using testing::random_tensor;
using testing::to_vec;

ComposerConfig tiny_config() {
  ComposerConfig cfg;
  cfg.frame_size = 32;
  cfg.d_c = 12;
  cfg.d_emo = 8;
  cfg.d_id = 32;
  return cfg;
}

InflatedIdentity dummy_pyramid(int s, const std::vector<int>& channels, double fill) {
  InflatedIdentity out;
  out.base_size = s;
  for (int i = 0; i < 3; ++i) {
    out.maps.push_back(Tensor({channels[static_cast<std::size_t>(i)], s << i, s << i}, fill));
  }
  return out;
}

// ---- Eq.-level arithmetic with constant critics ----

TEST(AdvLossId, ConstantHalfCritic) {
  const auto inflated = dummy_pyramid(2, {32, 24, 16}, 0.1);
  ReferenceFeatures ref{dummy_pyramid(2, {32, 24, 16}, 0.2).maps};
  const double v = adv_loss_id([](const std::vector<Tensor>&) { return 0.5; }, inflated, ref);
  EXPECT_NEAR(v, 0.25, 1e-12);
}

TEST(AdvLossId, MinimumAndWorstCase) {
  const auto inflated = dummy_pyramid(2, {32, 24, 16}, 0.1);
  ReferenceFeatures ref{dummy_pyramid(2, {32, 24, 16}, 0.2).maps};
  int call = 0;
  // First call scores the inflated pyramid, second the reference.
  auto critic_min = [&call](const std::vector<Tensor>&) { return call++ == 0 ? 1.0 : 0.0; };
  EXPECT_NEAR(adv_loss_id(critic_min, inflated, ref), 0.0, 1e-12);
  call = 0;
  auto critic_worst = [&call](const std::vector<Tensor>&) { return call++ == 0 ? 0.0 : 1.0; };
  EXPECT_NEAR(adv_loss_id(critic_worst, inflated, ref), 1.0, 1e-12);
}

TEST(AdvLossId, ShapeMismatchListsBothShapes) {
  const auto inflated = dummy_pyramid(2, {32, 24, 16}, 0.1);
  ReferenceFeatures ref{dummy_pyramid(2, {32, 24, 8}, 0.2).maps};
  try {
    adv_loss_id([](const std::vector<Tensor>&) { return 0.0; }, inflated, ref);
    FAIL() << "expected shape error";
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(16, 8, 8)"), std::string::npos);
    EXPECT_NE(msg.find("(8, 8, 8)"), std::string::npos);
  }
}

TEST(AdvLossFrame, ConstantCriticSumsOverT) {
  Rng rng(1);
  auto half = [](const Tensor&) { return 0.5; };
  const std::vector<Tensor> one_g{testing::random_image(8, 8, rng)};
  const std::vector<Tensor> one_r{testing::random_image(8, 8, rng)};
  EXPECT_NEAR(adv_loss_frame(half, one_g, one_r), 0.25, 1e-12);

  std::vector<Tensor> four_g, four_r;
  for (int i = 0; i < 4; ++i) {
    four_g.push_back(testing::random_image(8, 8, rng));
    four_r.push_back(testing::random_image(8, 8, rng));
  }
  // Eq. sums over t rather than averaging: 4 * 0.25.
  EXPECT_NEAR(adv_loss_frame(half, four_g, four_r), 1.0, 1e-12);
}

TEST(AdvLossFrame, MinimumForAnyT) {
  Rng rng(2);
  for (int t_count : {1, 3, 5}) {
    std::vector<Tensor> g, r;
    for (int i = 0; i < t_count; ++i) {
      g.push_back(Tensor({4, 4, 3}, 0.9));  // marker: generated frames are bright
      r.push_back(Tensor({4, 4, 3}, 0.1));
    }
    auto critic = [](const Tensor& f) { return f[0] > 0.5 ? 1.0 : 0.0; };
    EXPECT_NEAR(adv_loss_frame(critic, g, r), 0.0, 1e-12);
  }
}

TEST(AdvLossFrame, LengthMismatchThrows) {
  Rng rng(3);
  const std::vector<Tensor> g{testing::random_image(8, 8, rng)};
  std::vector<Tensor> r;
  EXPECT_THROW(adv_loss_frame([](const Tensor&) { return 0.0; }, g, r), std::invalid_argument);
}

TEST(AdvLossFrame, LinearInTUnderConstantCritic) {
  Rng rng(4);
  auto critic = [](const Tensor&) { return 0.3; };
  std::vector<Tensor> g, r;
  double prev = 0.0;
  for (int t = 1; t <= 6; ++t) {
    g.push_back(testing::random_image(8, 8, rng));
    r.push_back(testing::random_image(8, 8, rng));
    const double v = adv_loss_frame(critic, g, r);
    if (t > 1) EXPECT_NEAR(v, prev / (t - 1) * t, 1e-9);
    prev = v;
  }
}

TEST(AdvLossSync, ConstantCritics) {
  Rng rng(5);
  const Tensor contexts = random_tensor({6, 4}, rng);
  std::vector<Tensor> real, gen;
  for (int i = 0; i < 6; ++i) {
    real.push_back(testing::random_image(8, 8, rng));
    gen.push_back(testing::random_image(8, 8, rng));
  }
  auto zero = [](const Tensor&, const Tensor&) { return 0.0; };
  EXPECT_NEAR(adv_loss_sync(zero, contexts, real, gen, 1, 4), 1.0, 1e-12);
  auto half = [](const Tensor&, const Tensor&) { return 0.5; };
  EXPECT_NEAR(adv_loss_sync(half, contexts, real, gen, 2, 0), 0.5, 1e-12);
}

TEST(AdvLossSync, MinimumUnderTargets) {
  // Real synchronized pairs at 0, mismatched and generated pairs at 1.
  Rng rng(6);
  const int d_c = 4;
  Tensor contexts({6, d_c});
  for (int t = 0; t < 6; ++t) contexts.at(t, 0) = t;  // identify by first coord
  std::vector<Tensor> real, gen;
  for (int i = 0; i < 6; ++i) {
    real.push_back(Tensor({4, 4, 3}, 0.25));
    gen.push_back(Tensor({4, 4, 3}, 0.75));  // generated frames marked bright
  }
  const int tau = 2;
  auto critic = [&](const Tensor& c, const Tensor& f) {
    const bool is_generated = f[0] > 0.5;
    const bool matched = static_cast<int>(c[0]) == tau;
    if (is_generated) return 1.0;
    return matched ? 0.0 : 1.0;
  };
  EXPECT_NEAR(adv_loss_sync(critic, contexts, real, gen, tau, 5), 0.0, 1e-12);
}

TEST(AdvLossSync, EqualTauThrows) {
  Rng rng(7);
  const Tensor contexts = random_tensor({4, 3}, rng);
  std::vector<Tensor> real(4, Tensor({4, 4, 3}, 0.5)), gen(4, Tensor({4, 4, 3}, 0.5));
  EXPECT_THROW(
      adv_loss_sync([](const Tensor&, const Tensor&) { return 0.0; }, contexts, real, gen, 2, 2),
      std::invalid_argument);
}

// ---- similarity loss ----

TEST(FrameSimilarity, IdenticalFramesare_zero) {
  Rng rng(10);
  const Tensor f = testing::random_image(8, 8, rng);
  EXPECT_EQ(frame_similarity_loss(f, f), 0.0);
}

TEST(FrameSimilarity, RegionSizeArithmetic) {
  // 2x2 single channel, +0.1 everywhere: the top half holds 2 pixels.
  Tensor a({2, 2}, 0.3);
  Tensor b({2, 2}, 0.4);
  EXPECT_NEAR(frame_similarity_loss(a, b), 0.2, 1e-12);
}

TEST(FrameSimilarity, BottomHalfExcluded) {
  Rng rng(11);
  const Tensor a = testing::random_image(8, 8, rng);
  Tensor b = a;
  for (int i = 4; i < 8; ++i) {
    for (int j = 0; j < 8; ++j) {
      for (int k = 0; k < 3; ++k) b.at(i, j, k) = rng.uniform();
    }
  }
  EXPECT_EQ(frame_similarity_loss(a, b), 0.0);
  // And arbitrary changes confined to the excluded region keep it zero
  // while the included region registers.
  b.at(0, 0, 0) = a.at(0, 0, 0) + 0.25;
  EXPECT_NEAR(frame_similarity_loss(a, b), 0.25, 1e-9);
}

TEST(FrameSimilarity, ShapeMismatchThrows) {
  EXPECT_THROW(frame_similarity_loss(Tensor({4, 4}), Tensor({4, 5})), std::invalid_argument);
}

TEST(FrameSimilarity, ConfigurableRegionBoundary) {
  Tensor a({4, 2}, 0.0);
  Tensor b({4, 2}, 1.0);
  EXPECT_NEAR(frame_similarity_loss(a, b, 1), 2.0, 1e-12);
  EXPECT_NEAR(frame_similarity_loss(a, b, 4), 8.0, 1e-12);
  EXPECT_EQ(frame_similarity_loss(a, b, 0), 0.0);
}

TEST(FrameSimilarity, GradientMatchesFiniteDifferences) {
  Rng rng(12);
  Tensor gen = testing::random_image(4, 4, rng);
  const Tensor real = testing::random_image(4, 4, rng);
  auto eval = [&]() { return frame_similarity_loss(gen, real); };
  Graph g;
  Var gv = g.leaf(gen, true);
  Var loss = frame_similarity_loss_graph(g, gv, g.leaf(real), -1);
  g.backward(loss);
  EXPECT_LT(gradient_rel_err(to_vec(g.grad(gv)), fd_gradient(eval, &gen)), 1e-4);
}

// ---- gradient loss ----

TEST(GradientLoss, IdenticalFramesZero) {
  Rng rng(20);
  const Tensor f = testing::random_image(6, 6, rng);
  EXPECT_EQ(gradient_loss(f, f), 0.0);
}

TEST(GradientLoss, ConstantOffsetsVanish) {
  Rng rng(21);
  const Tensor a = testing::random_image(6, 6, rng);
  Tensor both = a;
  for (std::size_t i = 0; i < both.size(); ++i) both[i] += 0.17;
  // Offset on both images...
  EXPECT_NEAR(gradient_loss(a, a), gradient_loss(both, both), 1e-12);
  // ...and on either image alone: the gradient filter kills constants.
  EXPECT_NEAR(gradient_loss(both, a), 0.0, 1e-12);
  EXPECT_NEAR(gradient_loss(a, both), 0.0, 1e-12);
}

TEST(GradientLoss, RampVsConstantExplicitOracle) {
  // Generated: horizontal ramp p(x) = x / W on 4x4; real: constant.
  const int n = 4;
  Tensor gen({n, n});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) gen.at(i, j) = static_cast<double>(j) / n;
  }
  Tensor real({n, n}, 0.5);

  // Independent oracle: apply the 3x3 box filter then central differences
  // explicitly, with replicate padding, and L1 the difference.
  auto clampi = [&](int v) { return v < 0 ? 0 : (v >= n ? n - 1 : v); };
  auto smooth = [&](const Tensor& img) {
    Tensor out({n, n});
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        double s = 0;
        for (int di = -1; di <= 1; ++di) {
          for (int dj = -1; dj <= 1; ++dj) s += img.at(clampi(i + di), clampi(j + dj));
        }
        out.at(i, j) = s / 9.0;
      }
    }
    return out;
  };
  auto oracle = [&](const Tensor& a, const Tensor& b) {
    const Tensor sa = smooth(a), sb = smooth(b);
    double total = 0;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const double ax = 0.5 * (sa.at(i, clampi(j + 1)) - sa.at(i, clampi(j - 1)));
        const double bx = 0.5 * (sb.at(i, clampi(j + 1)) - sb.at(i, clampi(j - 1)));
        const double ay = 0.5 * (sa.at(clampi(i + 1), j) - sa.at(clampi(i - 1), j));
        const double by = 0.5 * (sb.at(clampi(i + 1), j) - sb.at(clampi(i - 1), j));
        total += std::abs(ax - bx) + std::abs(ay - by);
      }
    }
    return total;
  };
  EXPECT_NEAR(gradient_loss(gen, real), oracle(gen, real), 1e-6);
  EXPECT_GT(gradient_loss(gen, real), 0.0);
}

TEST(GradientLoss, GradientMatchesFiniteDifferences) {
  Rng rng(22);
  Tensor gen = testing::random_image(4, 4, rng);
  const Tensor real = testing::random_image(4, 4, rng);
  auto eval = [&]() { return gradient_loss(gen, real); };
  Graph g;
  Var gv = g.leaf(gen, true);
  Var loss = gradient_loss_graph(g, gv, g.leaf(real));
  g.backward(loss);
  EXPECT_LT(gradient_rel_err(to_vec(g.grad(gv)), fd_gradient(eval, &gen)), 1e-4);
}

// ---- report assembly ----

TEST(TotalLosses, SumsAndZeroCase) {
  const LossReport r = total_losses({0.25, 1.0, 0.5, 0.0, 0.0});
  EXPECT_NEAR(r.l_adv_total, 1.75, 1e-12);
  EXPECT_NEAR(r.l_total, 1.75, 1e-12);
  const LossReport z = total_losses({0, 0, 0, 0, 0});
  EXPECT_EQ(z.l_adv_total, 0.0);
  EXPECT_EQ(z.l_total, 0.0);
}

TEST(TotalLosses, RandomizedPartsSatisfyInvariants) {
  Rng rng(30);
  for (int trial = 0; trial < 100; ++trial) {
    LossParts p{rng.uniform(0, 5), rng.uniform(0, 5), rng.uniform(0, 5), rng.uniform(0, 50),
                rng.uniform(0, 50)};
    const LossReport r = total_losses(p);
    EXPECT_NEAR(r.l_adv_total, r.l_adv_id + r.l_adv_fr + r.l_adv_sync, 1e-12);
    EXPECT_NEAR(r.l_total, r.l_adv_total + r.l_sim + r.l_grad, 1e-12);
  }
}

TEST(TotalLosses, NonFinitePartIsNamed) {
  try {
    total_losses({0, std::numeric_limits<double>::quiet_NaN(), 0, 0, 0});
    FAIL() << "expected error";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("l_adv_fr"), std::string::npos);
  }
}

TEST(LossOps, AllNonNegativeOnRandomInputs) {
  Rng rng(31);
  const Tensor contexts = random_tensor({4, 3}, rng);
  std::vector<Tensor> real, gen;
  for (int i = 0; i < 4; ++i) {
    real.push_back(testing::random_image(8, 8, rng));
    gen.push_back(testing::random_image(8, 8, rng));
  }
  const auto inflated = dummy_pyramid(2, {32, 24, 16}, 0.3);
  ReferenceFeatures ref{dummy_pyramid(2, {32, 24, 16}, 0.6).maps};
  for (int trial = 0; trial < 10; ++trial) {
    const double c = rng.uniform(-2, 2);
    auto maps_critic = [c](const std::vector<Tensor>&) { return c; };
    auto frame_critic = [c](const Tensor&) { return c; };
    auto pair_critic = [c](const Tensor&, const Tensor&) { return c; };
    EXPECT_GE(adv_loss_id(maps_critic, inflated, ref), 0.0);
    EXPECT_GE(adv_loss_frame(frame_critic, gen, real), 0.0);
    EXPECT_GE(adv_loss_sync(pair_critic, contexts, real, gen, 0, 3), 0.0);
    EXPECT_GE(frame_similarity_loss(gen[0], real[0]), 0.0);
    EXPECT_GE(gradient_loss(gen[0], real[0]), 0.0);
  }
}

// ---- identity inflation and the frame decoder ----

TEST(InflateIdentity, DoublingSizesAndChannels) {
  ComposerConfig cfg = tiny_config();
  cfg.frame_size = 64;  // base s = 4 -> 4, 8, 16
  const Generator gen(cfg, 40);
  Rng rng(41);
  const InflatedIdentity inflated = gen.inflate_identity(random_tensor({32}, rng));
  ASSERT_EQ(inflated.maps.size(), 3u);
  EXPECT_EQ(inflated.base_size, 4);
  EXPECT_EQ(inflated.maps[0].shape(), (std::vector<int>{32, 4, 4}));
  EXPECT_EQ(inflated.maps[1].shape(), (std::vector<int>{24, 8, 8}));
  EXPECT_EQ(inflated.maps[2].shape(), (std::vector<int>{16, 16, 16}));
  // Each map doubles its predecessor.
  for (int i = 1; i < 3; ++i) {
    EXPECT_EQ(inflated.maps[i].dim(1), 2 * inflated.maps[i - 1].dim(1));
    EXPECT_EQ(inflated.maps[i].dim(2), 2 * inflated.maps[i - 1].dim(2));
  }
}

TEST(InflateIdentity, WrongNuDimensionThrows) {
  const Generator gen(tiny_config(), 42);
  EXPECT_THROW(gen.inflate_identity(Tensor({16})), std::invalid_argument);
}

TEST(InflateIdentity, GradientMatchesFiniteDifferences) {
  const Generator gen(tiny_config(), 43);
  Rng rng(44);
  Tensor nu = random_tensor({32}, rng);
  auto eval = [&]() {
    const InflatedIdentity inflated = gen.inflate_identity(nu);
    double s = 0;
    for (std::size_t i = 0; i < inflated.maps[2].size(); ++i) s += inflated.maps[2][i];
    return s;
  };
  Graph g;
  Binder bd(g, false);
  Generator::B p = gen.bind(bd);
  Var nv = g.leaf(nu, true);
  const std::vector<Var> maps = gen.inflate_graph(g, p, nv);
  Var loss = g.sum(maps[2]);
  g.backward(loss);
  EXPECT_LT(gradient_rel_err(to_vec(g.grad(nv)), fd_gradient(eval, &nu)), 1e-4);
}

TEST(GenerateFrame, RangeShapeDeterminism) {
  const ComposerConfig cfg = tiny_config();
  const Generator gen(cfg, 50);
  Rng rng(51);
  const GeneratorInput input{random_tensor({12}, rng), random_tensor({32}, rng),
                             random_tensor({8}, rng)};
  const InflatedIdentity inflated = gen.inflate_identity(input.nu);
  const Tensor a = gen.generate_frame(input, inflated);
  const Tensor b = gen.generate_frame(input, inflated);
  EXPECT_EQ(a.shape(), (std::vector<int>{32, 32, 3}));
  EXPECT_GE(a.min(), 0.0);
  EXPECT_LE(a.max(), 1.0);
  EXPECT_EQ(a.vec(), b.vec());
}

TEST(GenerateFrame, EmotionVectorChangesOutput) {
  const ComposerConfig cfg = tiny_config();
  const Generator gen(cfg, 52);
  Rng rng(53);
  const Tensor c_t = random_tensor({12}, rng);
  const Tensor nu = random_tensor({32}, rng);
  const InflatedIdentity inflated = gen.inflate_identity(nu);
  const Tensor f1 = gen.generate_frame({c_t, nu, random_tensor({8}, rng)}, inflated);
  const Tensor f2 = gen.generate_frame({c_t, nu, random_tensor({8}, rng)}, inflated);
  double diff = 0;
  for (std::size_t i = 0; i < f1.size(); ++i) diff += std::abs(f1[i] - f2[i]);
  EXPECT_GT(diff / f1.size(), 0.0);
}

TEST(GenerateFrame, DimensionMismatchesThrow) {
  const Generator gen(tiny_config(), 54);
  Rng rng(55);
  const Tensor nu = random_tensor({32}, rng);
  const InflatedIdentity inflated = gen.inflate_identity(nu);
  EXPECT_THROW(gen.generate_frame({random_tensor({5}, rng), nu, random_tensor({8}, rng)}, inflated),
               std::invalid_argument);
  EXPECT_THROW(
      gen.generate_frame({random_tensor({12}, rng), nu, random_tensor({3}, rng)}, inflated),
      std::invalid_argument);
  InflatedIdentity wrong = inflated;
  wrong.maps[1] = Tensor({24, 2, 2});
  EXPECT_THROW(
      gen.generate_frame({random_tensor({12}, rng), nu, random_tensor({8}, rng)}, wrong),
      std::invalid_argument);
}

}  // namespace
}  // namespace speechface
