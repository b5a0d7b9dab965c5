#include "speechface/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"

#include "speechface/image.hpp"

namespace speechface {

namespace {

std::string iso_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

nlohmann::json load_manifest(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) return nlohmann::json{{"stages", nlohmann::json::object()}};
  std::ifstream f(path);
  return nlohmann::json::parse(f);
}

void store_manifest(const std::filesystem::path& path, const nlohmann::json& manifest) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write manifest: " + path.string());
  f << manifest.dump(2) << "\n";
}

std::string clip_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "clip_%04d", index);
  return buf;
}

void write_curve_csv(const std::filesystem::path& path,
                     const std::vector<std::pair<std::string, const std::vector<double>*>>& cols) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write curve: " + path.string());
  f << "epoch";
  for (const auto& [name, values] : cols) f << "," << name;
  f << "\n";
  const std::size_t rows = cols.empty() ? 0 : cols.front().second->size();
  for (std::size_t i = 0; i < rows; ++i) {
    f << i;
    for (const auto& [name, values] : cols) f << "," << (*values)[i];
    f << "\n";
  }
}

}  // namespace

Pipeline::Pipeline(RunConfig cfg) : cfg_(std::move(cfg)) {}

bool Pipeline::stage_done(const std::string& stage) const {
  const nlohmann::json manifest = load_manifest(out() / "manifest.json");
  if (!manifest.contains("stages") || !manifest["stages"].contains(stage)) return false;
  const auto& entry = manifest["stages"][stage];
  return entry.value("completed", false) &&
         entry.value("config_hash", "") == stage_config_hash(cfg_, stage);
}

void Pipeline::mark_done(const std::string& stage, const std::vector<std::string>& artifacts) {
  const auto path = out() / "manifest.json";
  nlohmann::json manifest = load_manifest(path);
  manifest["stages"][stage] = {{"completed", true},
                               {"config_hash", stage_config_hash(cfg_, stage)},
                               {"timestamp", iso_timestamp()},
                               {"version", 1},
                               {"artifacts", artifacts}};
  store_manifest(path, manifest);
}

bool Pipeline::prepare_data(bool force) {
  if (!force && stage_done("prepare-data")) return false;
  const DataConfig& d = cfg_.data;
  const auto root = cfg_.data_root();
  if (d.mode == "toy") {
    std::filesystem::create_directories(root);
    const std::vector<Utterance> clips =
        synth_toy_dataset(d.n_utterances, d.frames, d.height, d.width, cfg_.seed);
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < clips.size(); ++i) {
      const std::string id = clip_id(static_cast<int>(i));
      save_utterance(clips[i], root / id);
      ids.push_back(id);
    }
    const DatasetSplit split =
        split_dataset(ids, d.train_ratio, d.val_ratio, d.test_ratio, cfg_.seed);
    save_split(split_path(), split);
  } else {
    // Prepared mode: clips already on disk, only the split is produced.
    if (!std::filesystem::exists(root)) {
      throw ConfigError("data.root does not exist: " + root.string());
    }
    const std::vector<std::string> ids = list_clips(root);
    if (ids.empty()) throw ConfigError("no clip_* directories under " + root.string());
    const DatasetSplit split =
        split_dataset(ids, d.train_ratio, d.val_ratio, d.test_ratio, cfg_.seed);
    save_split(split_path(), split);
  }
  mark_done("prepare-data", {"data", "data/split.json"});
  return true;
}

std::vector<Utterance> Pipeline::load_train_clips() const {
  if (!std::filesystem::exists(split_path())) {
    throw MissingDependencyError("missing dataset split " + split_path().string() +
                                 "; run prepare-data first");
  }
  const DatasetSplit split = load_split(split_path());
  std::vector<Utterance> clips;
  for (const std::string& id : split.train) {
    clips.push_back(load_utterance(cfg_.data_root() / id));
  }
  if (clips.empty()) throw ConfigError("train split is empty; increase data.n_utterances");
  return clips;
}

bool Pipeline::train_cpc_stage(bool force) {
  if (!force && stage_done("train-cpc")) return false;
  const std::vector<Utterance> clips = load_train_clips();
  CpcModel model(cfg_.cpc.model, derive_seed(cfg_.seed, "cpc_model"));
  std::vector<double> curve;
  if (!cfg_.cpc.random_frozen) {
    std::vector<AlignedChunks> data;
    for (const Utterance& u : clips) {
      data.push_back(align_audio_to_frames(u.audio, u.sample_rate, u.fps, u.frame_count(),
                                           cfg_.cpc.model.window));
    }
    curve = train_cpc(model, data, cfg_.cpc.epochs, cfg_.cpc.lr, cfg_.seed).epoch_loss;
  }
  std::filesystem::create_directories(out() / "cpc");
  save_cpc_checkpoint(cpc_ckpt(), model);
  write_curve_csv(out() / "cpc" / "curve.csv", {{"loss", &curve}});
  mark_done("train-cpc", {"cpc/cpc.ckpt", "cpc/curve.csv"});
  return true;
}

bool Pipeline::train_distill_stage(bool force) {
  if (!force && stage_done("train-distill")) return false;
  if (!std::filesystem::exists(cpc_ckpt())) {
    throw MissingDependencyError("missing CPC checkpoint " + cpc_ckpt().string() +
                                 "; run train-cpc first");
  }
  const std::vector<Utterance> clips = load_train_clips();
  const CpcModel cpc = load_cpc_checkpoint(cpc_ckpt());

  TeacherPair teachers;
  if (!cfg_.distill.teacher_ckpt.empty()) {
    teachers = load_teachers_checkpoint(cfg_.distill.teacher_ckpt);
  } else {
    TeacherConfig tc;
    tc.height = cfg_.data.height;
    tc.width = cfg_.data.width;
    tc.d_id = cfg_.distill.d_id;
    tc.d_emo = cfg_.distill.d_emo;
    teachers = make_teachers(tc, derive_seed(cfg_.seed, "teachers"));
  }

  StudentConfig sc;
  sc.d_in = cpc.config().d_c;
  sc.hidden = cfg_.distill.hidden;
  sc.d_id = cfg_.distill.d_id;
  sc.d_emo = cfg_.distill.d_emo;
  StudentNets students(sc, derive_seed(cfg_.seed, "students"));

  const DistillDataset data = prepare_distill_dataset(clips, cpc, teachers.identity,
                                                      teachers.emotion, cfg_.distill.k_frames,
                                                      cfg_.seed);
  const DistillCurve curve = train_distiller(students, data, cfg_.distill.epochs, cfg_.distill.lr,
                                             cfg_.seed, cfg_.distill.lambda);

  std::filesystem::create_directories(out() / "distill");
  save_teachers_checkpoint(teachers_ckpt(), teachers);
  save_students_checkpoint(students_ckpt(), students);
  write_curve_csv(out() / "distill" / "curve.csv",
                  {{"l1", &curve.l1}, {"mse_mu", &curve.mse_mu}, {"mse_nu", &curve.mse_nu}});
  mark_done("train-distill",
            {"distill/teachers.ckpt", "distill/students.ckpt", "distill/curve.csv"});
  return true;
}

bool Pipeline::train_composer_stage(bool force) {
  if (!force && stage_done("train-composer")) return false;
  if (!std::filesystem::exists(cpc_ckpt())) {
    throw MissingDependencyError("missing CPC checkpoint " + cpc_ckpt().string() +
                                 "; run train-cpc first");
  }
  if (!std::filesystem::exists(students_ckpt())) {
    throw MissingDependencyError("missing student checkpoint " + students_ckpt().string() +
                                 "; run train-distill first");
  }
  const std::vector<Utterance> clips = load_train_clips();
  const CpcModel cpc = load_cpc_checkpoint(cpc_ckpt());
  const StudentNets students = load_students_checkpoint(students_ckpt());
  TeacherPair teachers = load_teachers_checkpoint(teachers_ckpt());

  std::vector<Stage2Clip> prepared;
  for (const Utterance& u : clips) {
    prepared.push_back(
        prepare_stage2_clip(u, cpc, students, teachers.identity, cpc.config().window));
  }

  ComposerModels models =
      make_composer_models(cfg_.composer.model, derive_seed(cfg_.seed, "composer"));
  const int steps = cfg_.composer.steps_override > 0
                        ? cfg_.composer.steps_override
                        : cfg_.composer.epochs * static_cast<int>(prepared.size());
  const std::vector<LossReport> log = train_stage2(models, prepared, steps, cfg_.seed);

  std::filesystem::create_directories(out() / "composer");
  save_generator_checkpoint(generator_ckpt(), models.generator);
  save_disc_identity_checkpoint(out() / "composer" / "d_id.ckpt", models.d_id,
                                cfg_.composer.model, cfg_.composer.model.ref_channels);
  save_disc_frame_checkpoint(out() / "composer" / "d_fr.ckpt", models.d_fr, cfg_.composer.model);
  save_disc_sync_checkpoint(d_sync_ckpt(), models.d_sync, cfg_.composer.model);
  write_loss_csv(out() / "composer" / "curve.csv", log);
  mark_done("train-composer", {"composer/generator.ckpt", "composer/d_id.ckpt",
                               "composer/d_fr.ckpt", "composer/d_sync.ckpt",
                               "composer/curve.csv"});
  return true;
}

void Pipeline::generate(const std::filesystem::path& audio_path,
                        const std::filesystem::path& out_frames) const {
  const std::vector<std::pair<std::string, std::filesystem::path>> needed = {
      {"train-cpc", cpc_ckpt()},
      {"train-distill", students_ckpt()},
      {"train-composer", generator_ckpt()}};
  for (const auto& [stage, path] : needed) {
    if (!std::filesystem::exists(path)) {
      throw MissingDependencyError("missing checkpoint " + path.string() + "; run " + stage +
                                   " first");
    }
  }
  std::filesystem::path audio_file = audio_path;
  if (std::filesystem::is_directory(audio_path)) audio_file = audio_path / "audio.raw";
  if (!std::filesystem::exists(audio_file)) {
    throw ConfigError("audio input does not exist: " + audio_file.string());
  }

  const CpcModel cpc = load_cpc_checkpoint(cpc_ckpt());
  const StudentNets students = load_students_checkpoint(students_ckpt());
  const Generator gen = load_generator_checkpoint(generator_ckpt());

  const std::vector<double> audio = read_audio_raw(audio_file);
  const double sr = cfg_.data.sample_rate, fps = cfg_.data.fps;
  const int t_count =
      std::max(1, static_cast<int>(std::lround(static_cast<double>(audio.size()) * fps / sr)));
  const AlignedChunks chunks =
      align_audio_to_frames(audio, sr, fps, t_count, cpc.config().window);
  const AudioContext ctx = cpc.context(chunks);
  auto [nu, mu] = students.forward(ctx.omega);
  const std::vector<Tensor> frames = generate_clip(gen, ctx.c, nu, mu);

  export_frames(frames, out_frames);
  write_audio_raw(out_frames / "audio.raw", audio);
  nlohmann::json meta;
  meta["fps"] = fps;
  meta["sample_rate"] = sr;
  meta["speaker_id"] = "generated";
  meta["emotion_id"] = "";
  std::ofstream f(out_frames / "meta.json");
  f << meta.dump(2) << "\n";
}

EvalReport Pipeline::evaluate(const std::filesystem::path& generated_dir,
                              const std::filesystem::path& reference_dir,
                              const std::filesystem::path& report_path) const {
  for (const auto& dir : {generated_dir, reference_dir}) {
    if (!std::filesystem::exists(dir)) {
      throw ConfigError("frame directory does not exist: " + dir.string());
    }
  }
  CpcModel cpc;
  DiscSync d_sync;
  SyncEvaluator sync;
  EvalReport report;
  if (cfg_.eval.use_sync_scorer && std::filesystem::exists(cpc_ckpt()) &&
      std::filesystem::exists(d_sync_ckpt())) {
    cpc = load_cpc_checkpoint(cpc_ckpt());
    ComposerConfig cc;
    d_sync = load_disc_sync_checkpoint(d_sync_ckpt(), &cc);
    sync.cpc = &cpc;
    sync.scorer = &d_sync;
    sync.conventional_targets = cc.conventional_gan_targets;
    report = evaluate_clip(generated_dir, reference_dir, &sync);
  } else {
    report = evaluate_clip(generated_dir, reference_dir, nullptr);
  }
  std::filesystem::create_directories(report_path.parent_path().empty()
                                          ? std::filesystem::path(".")
                                          : report_path.parent_path());
  write_eval_report(report_path, report);
  return report;
}

}  // namespace speechface
