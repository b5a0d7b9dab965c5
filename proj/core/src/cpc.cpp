#include "speechface/cpc.hpp"

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

#include "speechface/checkpoint.hpp"

namespace speechface {

CpcModel::CpcModel(const CpcConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  // The three strided convolutions need at least 105 input samples to emit
  // one latent; round up to a saner floor.
  if (cfg.window < 128) {
    throw std::invalid_argument("cpc window too short for the encoder stack: " +
                                std::to_string(cfg.window) + " < 128");
  }
  if (cfg.d_z < 1 || cfg.d_c < 1 || cfg.k_steps < 1 || cfg.n_negatives < 1) {
    throw std::invalid_argument("cpc config values must be positive");
  }
  Rng rng(derive_seed(seed, "cpc_init"));
  enc1_.init(1, cfg.enc_c1, 10, 5, 0, rng);
  enc2_.init(cfg.enc_c1, cfg.enc_c2, 8, 4, 0, rng);
  enc3_.init(cfg.enc_c2, cfg.d_z, 4, 2, 0, rng);
  gru_.init(cfg.d_z, cfg.d_c, rng);
  scorers_.resize(static_cast<std::size_t>(cfg.k_steps));
  for (Tensor& s : scorers_) {
    s = Tensor({cfg.d_c, cfg.d_z});
    // Small init keeps initial scores near zero, so the first-batch loss
    // sits near the uniform value ln(1 + n_negatives).
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = 0.02 * rng.normal();
  }
}

CpcModel::B CpcModel::bind(Binder& bd) const {
  B b;
  b.e1 = enc1_.bind(bd, "enc1");
  b.e2 = enc2_.bind(bd, "enc2");
  b.e3 = enc3_.bind(bd, "enc3");
  b.gru = gru_.bind(bd, "gru");
  for (std::size_t k = 0; k < scorers_.size(); ++k) {
    b.scorers.push_back(bd(scorers_[k], "scorer" + std::to_string(k + 1)));
  }
  return b;
}

Var CpcModel::encode_graph(Graph& g, const B& p, Var chunks) const {
  const Tensor& tc = g.value(chunks);
  if (tc.rank() != 2 || tc.dim(1) != cfg_.window) {
    throw std::invalid_argument("chunk length " +
                                (tc.rank() == 2 ? std::to_string(tc.dim(1)) : tc.shape_str()) +
                                " does not match configured window " +
                                std::to_string(cfg_.window));
  }
  const int t_count = tc.dim(0);
  std::vector<Var> rows;
  rows.reserve(static_cast<std::size_t>(t_count));
  for (int t = 0; t < t_count; ++t) {
    Var chunk = g.reshape(g.slice0(chunks, t, 1), {1, cfg_.window});
    Var h = g.relu(enc1_.apply(g, p.e1, chunk));
    h = g.relu(enc2_.apply(g, p.e2, h));
    h = g.relu(enc3_.apply(g, p.e3, h));
    rows.push_back(g.global_avg_pool(h));
  }
  return g.stack_rows(rows);
}

Var CpcModel::aggregate_graph(Graph& g, const B& p, Var z) const {
  const Tensor& tz = g.value(z);
  if (tz.rank() != 2 || tz.dim(0) < 1) {
    throw std::invalid_argument("aggregate_context needs a non-empty (T, d_z) sequence, got " +
                                tz.shape_str());
  }
  const int t_count = tz.dim(0);
  Var h = g.leaf(Tensor({cfg_.d_c}));
  std::vector<Var> rows;
  rows.reserve(static_cast<std::size_t>(t_count));
  for (int t = 0; t < t_count; ++t) {
    Var x = g.reshape(g.slice0(z, t, 1), {cfg_.d_z});
    h = GruCell::step(g, p.gru, x, h);
    rows.push_back(h);
  }
  return g.stack_rows(rows);
}

Tensor CpcModel::encode_latents(const AlignedChunks& chunks) const {
  Graph g;
  Binder bd(g, false);
  B p = bind(bd);
  Var z = encode_graph(g, p, g.leaf(chunks.chunks));
  return g.value(z);
}

std::pair<Tensor, Tensor> CpcModel::aggregate_context(const Tensor& z) const {
  Graph g;
  Binder bd(g, false);
  B p = bind(bd);
  Var c = aggregate_graph(g, p, g.leaf(z));
  Tensor ct = g.value(c);
  Tensor omega({cfg_.d_c});
  const int t_count = ct.dim(0);
  for (int i = 0; i < cfg_.d_c; ++i) omega.at(i) = ct.at(t_count - 1, i);
  return {std::move(ct), std::move(omega)};
}

AudioContext CpcModel::context(const AlignedChunks& chunks) const {
  AudioContext out;
  out.z = encode_latents(chunks);
  auto [c, omega] = aggregate_context(out.z);
  out.c = std::move(c);
  out.omega = std::move(omega);
  return out;
}

double CpcModel::infonce_loss(const Tensor& z, const Tensor& c, std::uint64_t neg_seed) const {
  Graph g;
  std::vector<Var> scorer_vars;
  for (const Tensor& s : scorers_) scorer_vars.push_back(g.leaf(s));
  Rng rng(neg_seed);
  Var loss = infonce_graph(g, g.leaf(z), g.leaf(c), scorer_vars, cfg_.n_negatives, rng);
  return g.scalar_value(loss);
}

Var infonce_graph(Graph& g, Var z, Var c, const std::vector<Var>& scorers, int n_negatives,
                  Rng& neg_rng) {
  const Tensor& tz = g.value(z);
  const Tensor& tc = g.value(c);
  if (tz.rank() != 2 || tc.rank() != 2 || tz.dim(0) != tc.dim(0)) {
    throw std::invalid_argument("infonce: z " + tz.shape_str() + " and C " + tc.shape_str() +
                                " must share leading dimension");
  }
  if (n_negatives < 1) throw std::invalid_argument("infonce: need at least one negative");
  const int t_count = tz.dim(0);
  const int k_steps = static_cast<int>(scorers.size());
  if (t_count <= k_steps) {
    throw std::invalid_argument("infonce: sequence length T=" + std::to_string(t_count) +
                                " must exceed prediction horizon k_steps=" +
                                std::to_string(k_steps));
  }

  const int d_c = tc.dim(1);
  const int d_z = tz.dim(1);
  Var total;
  int terms = 0;
  for (int k = 1; k <= k_steps; ++k) {
    Var w = scorers[static_cast<std::size_t>(k - 1)];
    for (int t = 0; t + k < t_count; ++t) {
      // Candidate rows: the true future latent first, then negatives drawn
      // uniformly from the other time steps.
      std::vector<int> cand{t + k};
      for (int n = 0; n < n_negatives; ++n) {
        int j = static_cast<int>(neg_rng.below(static_cast<std::uint64_t>(t_count - 1)));
        if (j >= t + k) ++j;
        cand.push_back(j);
      }
      Var ct = g.reshape(g.slice0(c, t, 1), {1, d_c});
      Var proj = g.matmul(ct, w);  // (1, d_z)
      Var cands = g.gather_rows(z, cand);
      Var scores = g.reshape(g.matmul(cands, g.transpose(proj)), {1 + n_negatives});
      Var nll = g.sub(g.logsumexp(scores), g.slice0(scores, 0, 1));
      Var nll_s = g.reshape(nll, {1});
      total = total.valid() ? g.add(total, nll_s) : nll_s;
      ++terms;
    }
  }
  return g.reshape(g.scale(total, 1.0 / terms), {1});
}

TrainCurve train_cpc(CpcModel& model, const std::vector<AlignedChunks>& data, int epochs,
                     double lr, std::uint64_t seed) {
  if (data.empty()) throw std::invalid_argument("train_cpc: empty dataset");
  RmsProp opt({.lr = lr});
  TrainCurve curve;
  long step = 0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng order_rng(derive_seed(seed, "cpc_order", static_cast<std::uint64_t>(epoch)));
    order_rng.shuffle(order);

    double epoch_sum = 0.0;
    for (std::size_t i : order) {
      Graph g;
      Binder bd(g, true);
      CpcModel::B p = model.bind(bd);
      Var z = model.encode_graph(g, p, g.leaf(data[i].chunks));
      Var c = model.aggregate_graph(g, p, z);
      Rng neg_rng(derive_seed(seed, "cpc_negatives", static_cast<std::uint64_t>(step)));
      Var loss =
          infonce_graph(g, z, c, p.scorers, model.config().n_negatives, neg_rng);
      const double value = g.scalar_value(loss);
      if (!std::isfinite(value)) {
        throw NumericalError("cpc training diverged at step " + std::to_string(step) +
                             ": loss is not finite");
      }
      g.backward(loss);
      opt.step(bd.bindings(), g);
      epoch_sum += value;
      ++step;
    }
    curve.epoch_loss.push_back(epoch_sum / static_cast<double>(data.size()));
  }
  return curve;
}

namespace {

std::map<std::string, std::string> cpc_config_map(const CpcConfig& c) {
  return {{"window", std::to_string(c.window)},   {"d_z", std::to_string(c.d_z)},
          {"d_c", std::to_string(c.d_c)},         {"k_steps", std::to_string(c.k_steps)},
          {"n_negatives", std::to_string(c.n_negatives)},
          {"enc_c1", std::to_string(c.enc_c1)},   {"enc_c2", std::to_string(c.enc_c2)}};
}

CpcConfig cpc_config_from_map(const std::map<std::string, std::string>& m) {
  CpcConfig c;
  c.window = std::stoi(m.at("window"));
  c.d_z = std::stoi(m.at("d_z"));
  c.d_c = std::stoi(m.at("d_c"));
  c.k_steps = std::stoi(m.at("k_steps"));
  c.n_negatives = std::stoi(m.at("n_negatives"));
  c.enc_c1 = std::stoi(m.at("enc_c1"));
  c.enc_c2 = std::stoi(m.at("enc_c2"));
  return c;
}

}  // namespace

NamedTensors CpcModel::named_tensors() {
  NamedTensors out;
  enc1_.collect("enc1", out);
  enc2_.collect("enc2", out);
  enc3_.collect("enc3", out);
  gru_.collect("gru", out);
  for (std::size_t k = 0; k < scorers_.size(); ++k) {
    out.emplace_back("scorer" + std::to_string(k + 1), &scorers_[k]);
  }
  return out;
}

void save_cpc_checkpoint(const std::filesystem::path& path, CpcModel& model) {
  save_checkpoint(path, "cpc", cpc_config_map(model.config()),
                  to_const(model.named_tensors()));
}

CpcModel load_cpc_checkpoint(const std::filesystem::path& path) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.kind != "cpc") {
    throw std::runtime_error("expected a cpc checkpoint, found kind '" + ck.kind + "' in " +
                             path.string());
  }
  CpcModel model(cpc_config_from_map(ck.config), /*seed=*/0);
  assign_named_tensors(model.named_tensors(), ck.tensors);
  return model;
}

}  // namespace speechface
