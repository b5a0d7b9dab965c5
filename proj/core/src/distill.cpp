#include "speechface/distill.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

#include "speechface/checkpoint.hpp"
#include "speechface/image.hpp"

namespace speechface {

namespace {

// Shared by both surrogate teachers: bring a frame to the configured
// input size (or reject it) and lay it out channel-major.
Tensor prepare_input(const Tensor& frame, const TeacherConfig& cfg, const char* who) {
  if (frame.rank() != 3 || frame.dim(2) != 3) {
    throw std::invalid_argument(std::string(who) + ": expected an (H, W, 3) frame, got " +
                                frame.shape_str());
  }
  if (frame.dim(0) != cfg.height || frame.dim(1) != cfg.width) {
    if (!cfg.auto_resize) {
      throw std::invalid_argument(std::string(who) + ": frame is " + frame.shape_str() +
                                  " but the teacher expects (" + std::to_string(cfg.height) +
                                  ", " + std::to_string(cfg.width) + ", 3)");
    }
    return hwc_to_chw(resize_bilinear(frame, cfg.height, cfg.width));
  }
  return hwc_to_chw(frame);
}

Tensor relu_plain(Tensor t) {
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = t[i] > 0.0 ? t[i] : 0.0;
  return t;
}

Tensor flatten(const Tensor& t) { return Tensor::from({static_cast<int>(t.size())}, t.vec()); }

Tensor gap_plain(const Tensor& t) {
  const int c = t.dim(0);
  const std::size_t area = t.size() / static_cast<std::size_t>(c);
  Tensor out({c});
  for (int ci = 0; ci < c; ++ci) {
    double s = 0.0;
    for (std::size_t i = 0; i < area; ++i) s += t[static_cast<std::size_t>(ci) * area + i];
    out.at(ci) = s / static_cast<double>(area);
  }
  return out;
}

}  // namespace

// ---- teachers ----

SurrogateIdentityTeacher::SurrogateIdentityTeacher(const TeacherConfig& cfg, std::uint64_t seed)
    : cfg_(cfg) {
  if (cfg.height % 16 != 0 || cfg.width % 16 != 0 || cfg.height < 32 || cfg.width < 32) {
    throw std::invalid_argument("identity teacher input must be a multiple of 16 and >= 32, got " +
                                std::to_string(cfg.height) + "x" + std::to_string(cfg.width));
  }
  Rng rng(derive_seed(seed, "teacher_identity"));
  c1_.init(3, 8, 3, 2, 1, rng);
  c2_.init(8, 16, 3, 2, 1, rng);
  c3_.init(16, 24, 3, 2, 1, rng);
  c4_.init(24, 32, 3, 2, 1, rng);
  head_.init(32 * (cfg.height / 16) * (cfg.width / 16), cfg.d_id, rng);
}

Tensor SurrogateIdentityTeacher::prepare(const Tensor& frame) const {
  return prepare_input(frame, cfg_, "identity teacher");
}

Tensor SurrogateIdentityTeacher::embed(const Tensor& frame) const {
  Tensor h = relu_plain(c1_.apply_plain(prepare(frame)));
  h = relu_plain(c2_.apply_plain(h));
  h = relu_plain(c3_.apply_plain(h));
  h = relu_plain(c4_.apply_plain(h));
  return head_.apply_plain(flatten(h));
}

std::vector<Tensor> SurrogateIdentityTeacher::reference_features(const Tensor& frame) const {
  Tensor h1 = relu_plain(c1_.apply_plain(prepare(frame)));
  Tensor h2 = relu_plain(c2_.apply_plain(h1));
  Tensor h3 = relu_plain(c3_.apply_plain(h2));
  Tensor h4 = relu_plain(c4_.apply_plain(h3));
  // Deepest first, matching the inflation branch: H/16, H/8, H/4.
  return {h4, h3, h2};
}

std::vector<int> SurrogateIdentityTeacher::reference_channels() const { return {32, 24, 16}; }

NamedTensors SurrogateIdentityTeacher::named_tensors() {
  NamedTensors out;
  c1_.collect("id.c1", out);
  c2_.collect("id.c2", out);
  c3_.collect("id.c3", out);
  c4_.collect("id.c4", out);
  head_.collect("id.head", out);
  return out;
}

SurrogateEmotionTeacher::SurrogateEmotionTeacher(const TeacherConfig& cfg, std::uint64_t seed)
    : cfg_(cfg) {
  Rng rng(derive_seed(seed, "teacher_emotion"));
  c1_.init(3, 8, 3, 2, 1, rng);
  c2_.init(8, 16, 3, 2, 1, rng);
  c3_.init(16, 24, 3, 2, 1, rng);
  head_.init(24, cfg.d_emo, rng);
}

Tensor SurrogateEmotionTeacher::embed(const Tensor& frame) const {
  Tensor h = relu_plain(c1_.apply_plain(prepare_input(frame, cfg_, "emotion teacher")));
  h = relu_plain(c2_.apply_plain(h));
  h = relu_plain(c3_.apply_plain(h));
  return head_.apply_plain(gap_plain(h));
}

NamedTensors SurrogateEmotionTeacher::named_tensors() {
  NamedTensors out;
  c1_.collect("emo.c1", out);
  c2_.collect("emo.c2", out);
  c3_.collect("emo.c3", out);
  head_.collect("emo.head", out);
  return out;
}

TeacherPair make_teachers(const TeacherConfig& cfg, std::uint64_t seed) {
  return {SurrogateIdentityTeacher(cfg, seed), SurrogateEmotionTeacher(cfg, seed)};
}

namespace {

std::map<std::string, std::string> teacher_config_map(const TeacherConfig& c) {
  return {{"height", std::to_string(c.height)},
          {"width", std::to_string(c.width)},
          {"d_id", std::to_string(c.d_id)},
          {"d_emo", std::to_string(c.d_emo)},
          {"auto_resize", c.auto_resize ? "1" : "0"}};
}

TeacherConfig teacher_config_from_map(const std::map<std::string, std::string>& m) {
  TeacherConfig c;
  c.height = std::stoi(m.at("height"));
  c.width = std::stoi(m.at("width"));
  c.d_id = std::stoi(m.at("d_id"));
  c.d_emo = std::stoi(m.at("d_emo"));
  c.auto_resize = m.at("auto_resize") == "1";
  return c;
}

}  // namespace

void save_teachers_checkpoint(const std::filesystem::path& path, TeacherPair& teachers) {
  NamedTensors all = teachers.identity.named_tensors();
  NamedTensors emo = teachers.emotion.named_tensors();
  all.insert(all.end(), emo.begin(), emo.end());
  save_checkpoint(path, "teachers", teacher_config_map(teachers.identity.config()),
                  to_const(all));
}

TeacherPair load_teachers_checkpoint(const std::filesystem::path& path) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.kind != "teachers") {
    throw std::runtime_error("expected a teachers checkpoint, found kind '" + ck.kind + "' in " +
                             path.string());
  }
  const TeacherConfig cfg = teacher_config_from_map(ck.config);
  TeacherPair pair = make_teachers(cfg, /*seed=*/0);
  assign_named_tensors(pair.identity.named_tensors(), ck.tensors);
  assign_named_tensors(pair.emotion.named_tensors(), ck.tensors);
  return pair;
}

Tensor teacher_identity(const Teacher& teacher, const Tensor& first_frame) {
  return teacher.embed(first_frame);
}

Tensor teacher_emotion(const Teacher& teacher, const std::vector<Tensor>& frames, int k,
                       std::uint64_t seed) {
  const int t_count = static_cast<int>(frames.size());
  if (k < 1) throw std::invalid_argument("teacher_emotion: k must be at least 1");
  if (k > t_count) {
    throw std::invalid_argument("teacher_emotion: k=" + std::to_string(k) + " exceeds " +
                                std::to_string(t_count) + " frames (sampling is without replacement)");
  }
  Rng rng(seed);
  const std::vector<int> picks = rng.sample_without_replacement(t_count, k);
  Tensor acc;
  for (int idx : picks) {
    Tensor e = teacher.embed(frames[static_cast<std::size_t>(idx)]);
    if (acc.empty()) {
      acc = std::move(e);
    } else {
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += e[i];
    }
  }
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] /= static_cast<double>(k);
  return acc;
}

// ---- losses ----

void validate_bundle(const FeatureBundle& b) {
  if (!b.nu.same_shape(b.nu_star)) {
    throw std::invalid_argument("bundle: nu " + b.nu.shape_str() + " vs nu_star " +
                                b.nu_star.shape_str());
  }
  if (!b.mu.same_shape(b.mu_star)) {
    throw std::invalid_argument("bundle: mu " + b.mu.shape_str() + " vs mu_star " +
                                b.mu_star.shape_str());
  }
  if (!b.nu.all_finite() || !b.mu.all_finite() || !b.nu_star.all_finite() ||
      !b.mu_star.all_finite()) {
    throw std::invalid_argument("bundle contains non-finite entries");
  }
}

Tensor normalize(const Tensor& v) {
  Graph g;
  return g.value(g.l2_normalize(g.leaf(v)));
}

Var softmax_xent_graph(Graph& g, Var x, Var y) {
  const Tensor& tx = g.value(x);
  const Tensor& ty = g.value(y);
  if (!tx.same_shape(ty)) {
    throw std::invalid_argument("softmax_xent: shapes " + tx.shape_str() + " vs " +
                                ty.shape_str());
  }
  // -sum softmax(x) log softmax(y) == lse(y) - <softmax(x), y>
  return g.sub(g.logsumexp(y), g.dot(g.softmax(x), y));
}

double softmax_xent(const Tensor& x, const Tensor& y) {
  if (!x.all_finite() || !y.all_finite()) {
    throw std::invalid_argument("softmax_xent: non-finite input");
  }
  Graph g;
  return g.scalar_value(softmax_xent_graph(g, g.leaf(x), g.leaf(y)));
}

Var distill_loss_graph(Graph& g, Var nu, Var mu, Var nu_star, Var mu_star, double lambda) {
  Var mse_mu = g.sum(g.square(g.sub(g.l2_normalize(mu), g.l2_normalize(mu_star))));
  Var mse_nu = g.sum(g.square(g.sub(g.l2_normalize(nu), g.l2_normalize(nu_star))));
  Var xent_mu = softmax_xent_graph(g, mu, mu_star);
  Var xent_nu = softmax_xent_graph(g, nu, nu_star);
  return g.add(g.add(g.scale(mse_mu, lambda), xent_mu), g.add(g.scale(mse_nu, lambda), xent_nu));
}

DistillParts distill_loss_parts(const FeatureBundle& b, double lambda) {
  validate_bundle(b);
  Graph g;
  Var mu = g.leaf(b.mu);
  Var mu_star = g.leaf(b.mu_star);
  Var nu = g.leaf(b.nu);
  Var nu_star = g.leaf(b.nu_star);
  DistillParts parts;
  parts.mse_mu = g.scalar_value(g.sum(g.square(g.sub(g.l2_normalize(mu), g.l2_normalize(mu_star)))));
  parts.mse_nu = g.scalar_value(g.sum(g.square(g.sub(g.l2_normalize(nu), g.l2_normalize(nu_star)))));
  parts.xent_mu = g.scalar_value(softmax_xent_graph(g, mu, mu_star));
  parts.xent_nu = g.scalar_value(softmax_xent_graph(g, nu, nu_star));
  parts.total = lambda * parts.mse_mu + parts.xent_mu + lambda * parts.mse_nu + parts.xent_nu;
  return parts;
}

double distill_loss(const FeatureBundle& b, double lambda) {
  return distill_loss_parts(b, lambda).total;
}

// ---- students ----

StudentNets::StudentNets(const StudentConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  Rng rng(derive_seed(seed, "students_init"));
  id1_.init(cfg.d_in, cfg.hidden, rng);
  id2_.init(cfg.hidden, cfg.d_id, rng);
  emo1_.init(cfg.d_in, cfg.hidden, rng);
  emo2_.init(cfg.hidden, cfg.d_emo, rng);
}

StudentNets::B StudentNets::bind(Binder& bd) const {
  return {id1_.bind(bd, "id1"), id2_.bind(bd, "id2"), emo1_.bind(bd, "emo1"),
          emo2_.bind(bd, "emo2")};
}

std::pair<Var, Var> StudentNets::forward_graph(Graph& g, const B& p, Var omega) const {
  const Tensor& to = g.value(omega);
  if (to.rank() != 1 || to.dim(0) != cfg_.d_in) {
    throw std::invalid_argument("student_forward: omega " + to.shape_str() +
                                " does not match configured input dim " +
                                std::to_string(cfg_.d_in));
  }
  Var nu = Dense::apply(g, p.id2, g.relu(Dense::apply(g, p.id1, omega)));
  Var mu = Dense::apply(g, p.emo2, g.relu(Dense::apply(g, p.emo1, omega)));
  return {nu, mu};
}

std::pair<Tensor, Tensor> StudentNets::forward(const Tensor& omega) const {
  Graph g;
  Binder bd(g, false);
  B p = bind(bd);
  auto [nu, mu] = forward_graph(g, p, g.leaf(omega));
  return {g.value(nu), g.value(mu)};
}

NamedTensors StudentNets::named_tensors() {
  NamedTensors out;
  id1_.collect("id1", out);
  id2_.collect("id2", out);
  emo1_.collect("emo1", out);
  emo2_.collect("emo2", out);
  return out;
}

namespace {

std::map<std::string, std::string> student_config_map(const StudentConfig& c) {
  return {{"d_in", std::to_string(c.d_in)},
          {"hidden", std::to_string(c.hidden)},
          {"d_id", std::to_string(c.d_id)},
          {"d_emo", std::to_string(c.d_emo)}};
}

}  // namespace

void save_students_checkpoint(const std::filesystem::path& path, StudentNets& students) {
  save_checkpoint(path, "students", student_config_map(students.config()),
                  to_const(students.named_tensors()));
}

StudentNets load_students_checkpoint(const std::filesystem::path& path) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.kind != "students") {
    throw std::runtime_error("expected a students checkpoint, found kind '" + ck.kind + "' in " +
                             path.string());
  }
  StudentConfig cfg;
  cfg.d_in = std::stoi(ck.config.at("d_in"));
  cfg.hidden = std::stoi(ck.config.at("hidden"));
  cfg.d_id = std::stoi(ck.config.at("d_id"));
  cfg.d_emo = std::stoi(ck.config.at("d_emo"));
  StudentNets students(cfg, /*seed=*/0);
  assign_named_tensors(students.named_tensors(), ck.tensors);
  return students;
}

// ---- stage-1 training ----

DistillDataset prepare_distill_dataset(const std::vector<Utterance>& clips, const CpcModel& cpc,
                                       const Teacher& identity, const Teacher& emotion,
                                       int k_frames, std::uint64_t seed) {
  DistillDataset data;
  for (std::size_t u = 0; u < clips.size(); ++u) {
    const Utterance& utt = clips[u];
    AlignedChunks chunks =
        align_audio_to_frames(utt.audio, utt.sample_rate, utt.fps, utt.frame_count(),
                              cpc.config().window);
    data.omega.push_back(cpc.context(chunks).omega);
    data.nu_star.push_back(teacher_identity(identity, utt.frames.front()));
    const int k = std::min(k_frames, utt.frame_count());
    data.mu_star.push_back(teacher_emotion(emotion, utt.frames, k,
                                           derive_seed(seed, "emotion_frames", u)));
  }
  return data;
}

DistillCurve train_distiller(StudentNets& students, const DistillDataset& data, int epochs,
                             double lr, std::uint64_t seed, double lambda) {
  if (data.omega.empty()) throw std::invalid_argument("train_distiller: empty dataset");
  RmsProp opt({.lr = lr});
  DistillCurve curve;
  long step = 0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::vector<std::size_t> order(data.omega.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng order_rng(derive_seed(seed, "distill_order", static_cast<std::uint64_t>(epoch)));
    order_rng.shuffle(order);

    double sum_l1 = 0.0, sum_mse_mu = 0.0, sum_mse_nu = 0.0;
    for (std::size_t i : order) {
      Graph g;
      Binder bd(g, true);
      StudentNets::B p = students.bind(bd);
      auto [nu, mu] = students.forward_graph(g, p, g.leaf(data.omega[i]));
      Var nu_star = g.leaf(data.nu_star[i]);
      Var mu_star = g.leaf(data.mu_star[i]);
      Var mse_mu = g.sum(g.square(g.sub(g.l2_normalize(mu), g.l2_normalize(mu_star))));
      Var mse_nu = g.sum(g.square(g.sub(g.l2_normalize(nu), g.l2_normalize(nu_star))));
      Var loss = g.add(g.add(g.scale(mse_mu, lambda), softmax_xent_graph(g, mu, mu_star)),
                       g.add(g.scale(mse_nu, lambda), softmax_xent_graph(g, nu, nu_star)));
      const double value = g.scalar_value(loss);
      if (!std::isfinite(value)) {
        throw NumericalError("distiller training diverged at step " + std::to_string(step) +
                             ": loss is not finite");
      }
      g.backward(loss);
      opt.step(bd.bindings(), g);
      sum_l1 += value;
      sum_mse_mu += g.scalar_value(mse_mu);
      sum_mse_nu += g.scalar_value(mse_nu);
      ++step;
    }
    const double n = static_cast<double>(data.omega.size());
    curve.l1.push_back(sum_l1 / n);
    curve.mse_mu.push_back(sum_mse_mu / n);
    curve.mse_nu.push_back(sum_mse_nu / n);
  }
  return curve;
}

}  // namespace speechface
