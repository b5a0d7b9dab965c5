#include "speechface/composer.hpp"

#include <cmath>
#include <stdexcept>

#include "speechface/image.hpp"

namespace speechface {

void validate_composer_config(const ComposerConfig& cfg) {
  if (cfg.frame_size < 32 || cfg.frame_size % 32 != 0) {
    throw std::invalid_argument("frame_size must be a positive multiple of 32, got " +
                                std::to_string(cfg.frame_size));
  }
  if (cfg.d_c < 1 || cfg.d_emo < 1 || cfg.d_id < 1) {
    throw std::invalid_argument("composer dimensions must be positive");
  }
  if (cfg.ref_channels.size() != 3) {
    throw std::invalid_argument("expected exactly three reference channel counts");
  }
  const int rows = cfg.sim_rows < 0 ? cfg.frame_size / 2 : cfg.sim_rows;
  if (rows < 0 || rows > cfg.frame_size) {
    throw std::invalid_argument("sim_rows " + std::to_string(cfg.sim_rows) +
                                " outside frame height " + std::to_string(cfg.frame_size));
  }
}

void check_identity_maps_compat(const InflatedIdentity& inflated,
                                const ReferenceFeatures& reference) {
  if (inflated.maps.size() != reference.maps.size()) {
    throw std::invalid_argument("identity pyramids differ in depth: " +
                                std::to_string(inflated.maps.size()) + " vs " +
                                std::to_string(reference.maps.size()));
  }
  for (std::size_t i = 0; i < inflated.maps.size(); ++i) {
    if (!inflated.maps[i].same_shape(reference.maps[i])) {
      throw std::invalid_argument("identity map " + std::to_string(i + 1) +
                                  " shape mismatch: inflated " + inflated.maps[i].shape_str() +
                                  " vs reference " + reference.maps[i].shape_str());
    }
  }
}

// ---- Generator ----

Generator::Generator(const ComposerConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  validate_composer_config(cfg);
  Rng rng(derive_seed(seed, "generator_init"));
  const int s = cfg.base_size();
  const int r1 = cfg.ref_channels[0], r2 = cfg.ref_channels[1], r3 = cfg.ref_channels[2];

  infl_seed_.init(cfg.d_id, 48 * (s / 2) * (s / 2), rng);
  infl_t1_.init(48, 40, 4, 2, 1, rng);
  align1_.init(40, r1, 1, 1, 0, rng);
  infl_t2_.init(40, 32, 4, 2, 1, rng);
  align2_.init(32, r2, 1, 1, 0, rng);
  infl_t3_.init(32, 24, 4, 2, 1, rng);
  align3_.init(24, r3, 1, 1, 0, rng);

  seed_.init(cfg.d_c + cfg.d_emo, 48 * s * s, rng);
  up1_.init(48 + r1, 40, 4, 2, 1, rng);
  up2_.init(40 + r2, 32, 4, 2, 1, rng);
  up3_.init(32 + r3, 20, 4, 2, 1, rng);
  up4_.init(20, 14, 4, 2, 1, rng);
  out1_.init(14, 10, 1, 1, 0, rng);
  out2_.init(10, 3, 1, 1, 0, rng);
}

Generator::B Generator::bind(Binder& bd) const {
  B b;
  b.infl_seed = infl_seed_.bind(bd, "infl_seed");
  b.infl_t1 = infl_t1_.bind(bd, "infl_t1");
  b.infl_t2 = infl_t2_.bind(bd, "infl_t2");
  b.infl_t3 = infl_t3_.bind(bd, "infl_t3");
  b.align1 = align1_.bind(bd, "align1");
  b.align2 = align2_.bind(bd, "align2");
  b.align3 = align3_.bind(bd, "align3");
  b.seed = seed_.bind(bd, "seed");
  b.up1 = up1_.bind(bd, "up1");
  b.up2 = up2_.bind(bd, "up2");
  b.up3 = up3_.bind(bd, "up3");
  b.up4 = up4_.bind(bd, "up4");
  b.out1 = out1_.bind(bd, "out1");
  b.out2 = out2_.bind(bd, "out2");
  return b;
}

std::vector<Var> Generator::inflate_graph(Graph& g, const B& p, Var nu) const {
  const Tensor& tn = g.value(nu);
  if (tn.rank() != 1 || tn.dim(0) != cfg_.d_id) {
    throw std::invalid_argument("inflate_identity: nu " + tn.shape_str() +
                                " does not match configured identity dim " +
                                std::to_string(cfg_.d_id));
  }
  const int s = cfg_.base_size();
  // tanh keeps this branch smooth end to end; its gradient is checked
  // against finite differences.
  Var h = g.tanh_(Dense::apply(g, p.infl_seed, nu));
  h = g.reshape(h, {48, s / 2, s / 2});
  Var m1 = g.tanh_(infl_t1_.apply(g, p.infl_t1, h));       // (40, s, s)
  Var v1 = align1_.apply(g, p.align1, m1);                 // (r1, s, s)
  Var m2 = g.tanh_(infl_t2_.apply(g, p.infl_t2, m1));      // (32, 2s, 2s)
  Var v2 = align2_.apply(g, p.align2, m2);                 // (r2, 2s, 2s)
  Var m3 = g.tanh_(infl_t3_.apply(g, p.infl_t3, m2));      // (24, 4s, 4s)
  Var v3 = align3_.apply(g, p.align3, m3);                 // (r3, 4s, 4s)
  return {v1, v2, v3};
}

Var Generator::frame_graph(Graph& g, const B& p, Var c_t, Var mu,
                           const std::vector<Var>& inflated) const {
  const Tensor& tc = g.value(c_t);
  const Tensor& tm = g.value(mu);
  if (tc.rank() != 1 || tc.dim(0) != cfg_.d_c) {
    throw std::invalid_argument("generate_frame: context " + tc.shape_str() +
                                " does not match d_c " + std::to_string(cfg_.d_c));
  }
  if (tm.rank() != 1 || tm.dim(0) != cfg_.d_emo) {
    throw std::invalid_argument("generate_frame: emotion vector " + tm.shape_str() +
                                " does not match d_emo " + std::to_string(cfg_.d_emo));
  }
  if (inflated.size() != 3) {
    throw std::invalid_argument("generate_frame: expected three inflated identity maps");
  }
  const int s = cfg_.base_size();
  for (int i = 0; i < 3; ++i) {
    const Tensor& tv = g.value(inflated[static_cast<std::size_t>(i)]);
    const int want = s << i;
    if (tv.rank() != 3 || tv.dim(1) != want || tv.dim(2) != want) {
      throw std::invalid_argument("generate_frame: inflated map " + std::to_string(i + 1) +
                                  " is " + tv.shape_str() + ", expected spatial size " +
                                  std::to_string(want));
    }
  }

  // The emotion vector rides along with every context frame.
  Var zc = g.concat0({c_t, mu});
  Var h = g.leaky_relu(Dense::apply(g, p.seed, zc), 0.1);
  h = g.reshape(h, {48, s, s});
  h = g.concat0({h, inflated[0]});
  h = g.leaky_relu(up1_.apply(g, p.up1, h), 0.1);
  h = g.concat0({h, inflated[1]});
  h = g.leaky_relu(up2_.apply(g, p.up2, h), 0.1);
  h = g.concat0({h, inflated[2]});
  h = g.leaky_relu(up3_.apply(g, p.up3, h), 0.1);
  h = g.leaky_relu(up4_.apply(g, p.up4, h), 0.1);
  h = g.leaky_relu(out1_.apply(g, p.out1, h), 0.1);
  h = g.sigmoid_(out2_.apply(g, p.out2, h));
  return g.chw_to_hwc_op(h);
}

InflatedIdentity Generator::inflate_identity(const Tensor& nu) const {
  Graph g;
  Binder bd(g, false);
  B p = bind(bd);
  std::vector<Var> maps = inflate_graph(g, p, g.leaf(nu));
  InflatedIdentity out;
  out.base_size = cfg_.base_size();
  for (Var m : maps) out.maps.push_back(g.value(m));
  return out;
}

Tensor Generator::generate_frame(const GeneratorInput& input,
                                 const InflatedIdentity& inflated) const {
  Graph g;
  Binder bd(g, false);
  B p = bind(bd);
  std::vector<Var> maps;
  for (const Tensor& m : inflated.maps) maps.push_back(g.leaf(m));
  Var f = frame_graph(g, p, g.leaf(input.c_t), g.leaf(input.mu), maps);
  return g.value(f);
}

NamedTensors Generator::named_tensors() {
  NamedTensors out;
  infl_seed_.collect("infl_seed", out);
  infl_t1_.collect("infl_t1", out);
  infl_t2_.collect("infl_t2", out);
  infl_t3_.collect("infl_t3", out);
  align1_.collect("align1", out);
  align2_.collect("align2", out);
  align3_.collect("align3", out);
  seed_.collect("seed", out);
  up1_.collect("up1", out);
  up2_.collect("up2", out);
  up3_.collect("up3", out);
  up4_.collect("up4", out);
  out1_.collect("out1", out);
  out2_.collect("out2", out);
  return out;
}

std::vector<Tensor> generate_clip(const Generator& gen, const Tensor& contexts, const Tensor& nu,
                                  const Tensor& mu) {
  if (contexts.rank() != 2) {
    throw std::invalid_argument("generate_clip: contexts must be (T, d_c), got " +
                                contexts.shape_str());
  }
  const InflatedIdentity inflated = gen.inflate_identity(nu);
  const int t_count = contexts.dim(0);
  const int d_c = contexts.dim(1);
  std::vector<Tensor> frames;
  frames.reserve(static_cast<std::size_t>(t_count));
  for (int t = 0; t < t_count; ++t) {
    Tensor c_t({d_c});
    for (int i = 0; i < d_c; ++i) c_t.at(i) = contexts.at(t, i);
    frames.push_back(gen.generate_frame({c_t, nu, mu}, inflated));
  }
  return frames;
}

// ---- discriminators ----

DiscIdentity::DiscIdentity(const ComposerConfig& cfg, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "disc_identity_init"));
  m1_.init(cfg.ref_channels[0], 16, 3, 1, 1, rng);
  m2_.init(cfg.ref_channels[1], 16, 3, 1, 1, rng);
  m3_.init(cfg.ref_channels[2], 16, 3, 1, 1, rng);
  head_.init(48, 1, rng);
}

DiscIdentity::B DiscIdentity::bind(Binder& bd) const {
  return {m1_.bind(bd, "m1"), m2_.bind(bd, "m2"), m3_.bind(bd, "m3"), head_.bind(bd, "head")};
}

Var DiscIdentity::score_graph(Graph& g, const B& p, const std::vector<Var>& maps) const {
  if (maps.size() != 3) {
    throw std::invalid_argument("identity critic expects three feature maps");
  }
  Var e1 = g.global_avg_pool(g.leaky_relu(m1_.apply(g, p.m1, maps[0]), 0.2));
  Var e2 = g.global_avg_pool(g.leaky_relu(m2_.apply(g, p.m2, maps[1]), 0.2));
  Var e3 = g.global_avg_pool(g.leaky_relu(m3_.apply(g, p.m3, maps[2]), 0.2));
  return Dense::apply(g, p.head, g.concat0({e1, e2, e3}));
}

double DiscIdentity::score(const std::vector<Tensor>& maps) const {
  Graph g;
  Binder bd(g, false);
  B p = bind(bd);
  std::vector<Var> vars;
  for (const Tensor& m : maps) vars.push_back(g.leaf(m));
  return g.value(score_graph(g, p, vars))[0];
}

NamedTensors DiscIdentity::named_tensors() {
  NamedTensors out;
  m1_.collect("m1", out);
  m2_.collect("m2", out);
  m3_.collect("m3", out);
  head_.collect("head", out);
  return out;
}

DiscFrame::DiscFrame(const ComposerConfig& cfg, std::uint64_t seed) {
  (void)cfg;
  Rng rng(derive_seed(seed, "disc_frame_init"));
  c1_.init(3, 12, 4, 2, 1, rng);
  c2_.init(12, 24, 4, 2, 1, rng);
  c3_.init(24, 32, 4, 2, 1, rng);
  head_.init(32, 1, rng);
}

DiscFrame::B DiscFrame::bind(Binder& bd) const {
  return {c1_.bind(bd, "c1"), c2_.bind(bd, "c2"), c3_.bind(bd, "c3"), head_.bind(bd, "head")};
}

Var DiscFrame::score_graph(Graph& g, const B& p, Var frame_hwc) const {
  Var x = g.hwc_to_chw_op(frame_hwc);
  x = g.leaky_relu(c1_.apply(g, p.c1, x), 0.2);
  x = g.leaky_relu(c2_.apply(g, p.c2, x), 0.2);
  x = g.leaky_relu(c3_.apply(g, p.c3, x), 0.2);
  return Dense::apply(g, p.head, g.global_avg_pool(x));
}

double DiscFrame::score(const Tensor& frame_hwc) const {
  Graph g;
  Binder bd(g, false);
  B p = bind(bd);
  return g.value(score_graph(g, p, g.leaf(frame_hwc)))[0];
}

NamedTensors DiscFrame::named_tensors() {
  NamedTensors out;
  c1_.collect("c1", out);
  c2_.collect("c2", out);
  c3_.collect("c3", out);
  head_.collect("head", out);
  return out;
}

DiscSync::DiscSync(const ComposerConfig& cfg, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "disc_sync_init"));
  ctx_.init(cfg.d_c, 48, rng);
  f1_.init(3, 12, 4, 2, 1, rng);
  f2_.init(12, 24, 4, 2, 1, rng);
  f3_.init(24, 32, 4, 2, 1, rng);
  femb_.init(32, 48, rng);
  head_.init(48, 1, rng);
}

DiscSync::B DiscSync::bind(Binder& bd) const {
  return {ctx_.bind(bd, "ctx"), f1_.bind(bd, "f1"), f2_.bind(bd, "f2"), f3_.bind(bd, "f3"),
          femb_.bind(bd, "femb"), head_.bind(bd, "head")};
}

Var DiscSync::score_graph(Graph& g, const B& p, Var context, Var frame_hwc) const {
  Var ec = g.tanh_(Dense::apply(g, p.ctx, context));
  Var x = g.hwc_to_chw_op(frame_hwc);
  x = g.leaky_relu(f1_.apply(g, p.f1, x), 0.2);
  x = g.leaky_relu(f2_.apply(g, p.f2, x), 0.2);
  x = g.leaky_relu(f3_.apply(g, p.f3, x), 0.2);
  Var ef = g.tanh_(Dense::apply(g, p.femb, g.global_avg_pool(x)));
  // Scored on the elementwise product of the two embeddings: the score is
  // multiplicative in (context, frame), which is what lets it measure
  // agreement rather than each stream separately.
  return Dense::apply(g, p.head, g.mul(ec, ef));
}

double DiscSync::score(const Tensor& context, const Tensor& frame_hwc) const {
  Graph g;
  Binder bd(g, false);
  B p = bind(bd);
  return g.value(score_graph(g, p, g.leaf(context), g.leaf(frame_hwc)))[0];
}

NamedTensors DiscSync::named_tensors() {
  NamedTensors out;
  ctx_.collect("ctx", out);
  f1_.collect("f1", out);
  f2_.collect("f2", out);
  f3_.collect("f3", out);
  femb_.collect("femb", out);
  head_.collect("head", out);
  return out;
}

// ---- value-level losses ----

double adv_loss_id(const MapsScorer& d_id, const InflatedIdentity& inflated,
                   const ReferenceFeatures& reference) {
  check_identity_maps_compat(inflated, reference);
  const double fake = d_id(inflated.maps);
  const double real = d_id(reference.maps);
  return 0.5 * (fake - 1.0) * (fake - 1.0) + 0.5 * real * real;
}

double adv_loss_frame(const FrameScorer& d_fr, const std::vector<Tensor>& generated,
                      const std::vector<Tensor>& real) {
  if (generated.size() != real.size()) {
    throw std::invalid_argument("adv_loss_frame: " + std::to_string(generated.size()) +
                                " generated vs " + std::to_string(real.size()) + " real frames");
  }
  double total = 0.0;
  for (std::size_t t = 0; t < generated.size(); ++t) {
    const double f = d_fr(generated[t]);
    const double r = d_fr(real[t]);
    total += (f - 1.0) * (f - 1.0) + r * r;
  }
  return 0.5 * total;
}

double adv_loss_sync(const PairScorer& d_sync, const Tensor& contexts,
                     const std::vector<Tensor>& real_frames,
                     const std::vector<Tensor>& generated_frames, int tau, int tau_prime) {
  if (contexts.rank() != 2) {
    throw std::invalid_argument("adv_loss_sync: contexts must be (T, d_c)");
  }
  const int t_count = contexts.dim(0);
  if (tau == tau_prime) {
    throw std::invalid_argument("adv_loss_sync: tau and tau_prime must differ, both are " +
                                std::to_string(tau));
  }
  if (tau < 0 || tau >= t_count || tau_prime < 0 || tau_prime >= t_count) {
    throw std::invalid_argument("adv_loss_sync: tau indices out of range [0, " +
                                std::to_string(t_count) + ")");
  }
  const int d_c = contexts.dim(1);
  auto context_row = [&](int t) {
    Tensor c({d_c});
    for (int i = 0; i < d_c; ++i) c.at(i) = contexts.at(t, i);
    return c;
  };
  const Tensor c_tau = context_row(tau);
  const Tensor c_tau_prime = context_row(tau_prime);
  const double synced = d_sync(c_tau, real_frames.at(static_cast<std::size_t>(tau)));
  const double mismatched = d_sync(c_tau_prime, real_frames.at(static_cast<std::size_t>(tau)));
  const double generated = d_sync(c_tau, generated_frames.at(static_cast<std::size_t>(tau)));
  return synced * synced + 0.5 * (mismatched - 1.0) * (mismatched - 1.0) +
         0.5 * (generated - 1.0) * (generated - 1.0);
}

namespace {

void check_same_image(const Tensor& a, const Tensor& b, const char* who) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(who) + ": shape mismatch " + a.shape_str() + " vs " +
                                b.shape_str());
  }
  if (a.rank() != 2 && a.rank() != 3) {
    throw std::invalid_argument(std::string(who) + ": expected (H, W) or (H, W, C), got " +
                                a.shape_str());
  }
}

}  // namespace

Var frame_similarity_loss_graph(Graph& g, Var generated, Var real, int region_rows) {
  const Tensor& ta = g.value(generated);
  const Tensor& tb = g.value(real);
  check_same_image(ta, tb, "frame_similarity_loss");
  const int h = ta.dim(0);
  const int rows = region_rows < 0 ? h / 2 : region_rows;
  if (rows > h) {
    throw std::invalid_argument("frame_similarity_loss: region rows " + std::to_string(rows) +
                                " exceed image height " + std::to_string(h));
  }
  if (rows == 0) return g.constant(0.0);
  Var diff = g.sub(g.slice0(generated, 0, rows), g.slice0(real, 0, rows));
  return g.sum(g.abs_(diff));
}

double frame_similarity_loss(const Tensor& generated, const Tensor& real, int region_rows) {
  Graph g;
  return g.scalar_value(
      frame_similarity_loss_graph(g, g.leaf(generated), g.leaf(real), region_rows));
}

Var gradient_loss_graph(Graph& g, Var generated, Var real) {
  check_same_image(g.value(generated), g.value(real), "gradient_loss");
  Var sa = g.box3_smooth(generated);
  Var sb = g.box3_smooth(real);
  Var dx = g.sum(g.abs_(g.sub(g.central_diff(sa, 1), g.central_diff(sb, 1))));
  Var dy = g.sum(g.abs_(g.sub(g.central_diff(sa, 0), g.central_diff(sb, 0))));
  return g.add(dx, dy);
}

double gradient_loss(const Tensor& generated, const Tensor& real) {
  Graph g;
  return g.scalar_value(gradient_loss_graph(g, g.leaf(generated), g.leaf(real)));
}

LossReport total_losses(const LossParts& parts) {
  auto check = [](double v, const char* name) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument(std::string("total_losses: ") + name + " is not finite");
    }
  };
  check(parts.l_adv_id, "l_adv_id");
  check(parts.l_adv_fr, "l_adv_fr");
  check(parts.l_adv_sync, "l_adv_sync");
  check(parts.l_sim, "l_sim");
  check(parts.l_grad, "l_grad");
  LossReport r;
  r.l_adv_id = parts.l_adv_id;
  r.l_adv_fr = parts.l_adv_fr;
  r.l_adv_sync = parts.l_adv_sync;
  r.l_sim = parts.l_sim;
  r.l_grad = parts.l_grad;
  r.l_adv_total = parts.l_adv_id + parts.l_adv_fr + parts.l_adv_sync;
  r.l_total = r.l_adv_total + parts.l_sim + parts.l_grad;
  return r;
}

}  // namespace speechface
