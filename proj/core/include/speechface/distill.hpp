#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "speechface/cpc.hpp"
#include "speechface/media.hpp"
#include "speechface/nn.hpp"

namespace speechface {

/// Frozen embedding network providing distillation targets. Frozen means
/// bit-identical outputs for identical inputs, always.
class Teacher {
 public:
  virtual ~Teacher() = default;
  virtual Tensor embed(const Tensor& frame_hwc) const = 0;
  virtual int dim() const = 0;
  virtual std::string kind() const = 0;  // "identity" or "emotion"
};

struct TeacherConfig {
  int height = 64;
  int width = 64;
  int d_id = 4096;
  int d_emo = 512;
  bool auto_resize = true;  // resize mismatched frames instead of throwing
};

/// Randomly initialized frozen convolutional stand-in for a pretrained
/// face-recognition backbone. Besides the flat embedding it exposes the
/// three intermediate feature maps used as reference features by the
/// composer (deepest first: spatial sizes H/16, H/8, H/4).
class SurrogateIdentityTeacher : public Teacher {
 public:
  SurrogateIdentityTeacher() = default;
  SurrogateIdentityTeacher(const TeacherConfig& cfg, std::uint64_t seed);

  Tensor embed(const Tensor& frame_hwc) const override;
  int dim() const override { return cfg_.d_id; }
  std::string kind() const override { return "identity"; }

  std::vector<Tensor> reference_features(const Tensor& frame_hwc) const;
  std::vector<int> reference_channels() const;

  const TeacherConfig& config() const { return cfg_; }
  NamedTensors named_tensors();

 private:
  Tensor prepare(const Tensor& frame_hwc) const;

  TeacherConfig cfg_;
  Conv2dLayer c1_, c2_, c3_, c4_;
  Dense head_;
};

/// Frozen convolutional stand-in for a pretrained expression network.
class SurrogateEmotionTeacher : public Teacher {
 public:
  SurrogateEmotionTeacher() = default;
  SurrogateEmotionTeacher(const TeacherConfig& cfg, std::uint64_t seed);

  Tensor embed(const Tensor& frame_hwc) const override;
  int dim() const override { return cfg_.d_emo; }
  std::string kind() const override { return "emotion"; }

  const TeacherConfig& config() const { return cfg_; }
  NamedTensors named_tensors();

 private:
  TeacherConfig cfg_;
  Conv2dLayer c1_, c2_, c3_;
  Dense head_;
};

struct TeacherPair {
  SurrogateIdentityTeacher identity;
  SurrogateEmotionTeacher emotion;
};

TeacherPair make_teachers(const TeacherConfig& cfg, std::uint64_t seed);
void save_teachers_checkpoint(const std::filesystem::path& path, TeacherPair& teachers);
TeacherPair load_teachers_checkpoint(const std::filesystem::path& path);

/// Identity target from the clip's first frame.
Tensor teacher_identity(const Teacher& teacher, const Tensor& first_frame);

/// Emotion target: mean embedding of k frames sampled uniformly without
/// replacement (draw controlled by seed). Throws when k exceeds the frame
/// count.
Tensor teacher_emotion(const Teacher& teacher, const std::vector<Tensor>& frames, int k,
                       std::uint64_t seed);

/// Distilled vectors and their teacher targets.
struct FeatureBundle {
  Tensor nu;       // student identity vector
  Tensor mu;       // student emotion vector
  Tensor nu_star;  // teacher identity target
  Tensor mu_star;  // teacher emotion target
};

void validate_bundle(const FeatureBundle& b);

/// v / max(||v||_2, 1e-12).
Tensor normalize(const Tensor& v);

/// -sum_i softmax(x)_i * log(softmax(y)_i), log-sum-exp stabilized.
double softmax_xent(const Tensor& x, const Tensor& y);
Var softmax_xent_graph(Graph& g, Var x, Var y);

struct DistillParts {
  double mse_mu = 0, xent_mu = 0, mse_nu = 0, xent_nu = 0;
  double total = 0;
};

constexpr double kDistillLambda = 0.025;

/// Joint two-student distillation objective:
///   lambda*||mu_bar - mu_star_bar||^2 + xent(mu, mu_star)
/// + lambda*||nu_bar - nu_star_bar||^2 + xent(nu, nu_star).
double distill_loss(const FeatureBundle& bundle, double lambda = kDistillLambda);
DistillParts distill_loss_parts(const FeatureBundle& bundle, double lambda = kDistillLambda);
Var distill_loss_graph(Graph& g, Var nu, Var mu, Var nu_star, Var mu_star, double lambda);

struct StudentConfig {
  int d_in = 128;  // omega dimension
  int hidden = 256;
  int d_id = 4096;
  int d_emo = 512;
};

/// The two student heads reading from omega; each is a two-layer
/// perceptron.
class StudentNets {
 public:
  StudentNets() = default;
  StudentNets(const StudentConfig& cfg, std::uint64_t seed);

  const StudentConfig& config() const { return cfg_; }

  /// (nu, mu) for one summary vector.
  std::pair<Tensor, Tensor> forward(const Tensor& omega) const;

  struct B {
    Dense::B id1, id2, emo1, emo2;
  };
  B bind(Binder& bd) const;
  std::pair<Var, Var> forward_graph(Graph& g, const B& p, Var omega) const;

  NamedTensors named_tensors();

 private:
  StudentConfig cfg_;
  Dense id1_, id2_, emo1_, emo2_;
};

void save_students_checkpoint(const std::filesystem::path& path, StudentNets& students);
StudentNets load_students_checkpoint(const std::filesystem::path& path);

/// Per-utterance training rows with teacher targets computed once up
/// front (teachers and CPC stay frozen through stage 1).
struct DistillDataset {
  std::vector<Tensor> omega;
  std::vector<Tensor> nu_star;
  std::vector<Tensor> mu_star;
};

DistillDataset prepare_distill_dataset(const std::vector<Utterance>& clips, const CpcModel& cpc,
                                       const Teacher& identity, const Teacher& emotion,
                                       int k_frames, std::uint64_t seed);

struct DistillCurve {
  std::vector<double> l1, mse_mu, mse_nu;
};

/// Updates student parameters only; throws NumericalError with the step
/// index when the loss stops being finite.
DistillCurve train_distiller(StudentNets& students, const DistillDataset& data, int epochs,
                             double lr, std::uint64_t seed, double lambda = kDistillLambda);

}  // namespace speechface
