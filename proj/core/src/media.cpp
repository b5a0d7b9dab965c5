#include "speechface/media.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "json.hpp"

#include "speechface/image.hpp"
#include "speechface/rng.hpp"

namespace speechface {

namespace {

constexpr double kToySampleRate = 16000.0;
constexpr double kToyFps = 30.0;

const char* kToyEmotions[6] = {"anger", "disgust", "fear", "happy", "neutral", "sad"};

std::string frame_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%05d.png", index);
  return buf;
}

}  // namespace

void validate_utterance(const Utterance& utt) {
  if (utt.frames.empty()) throw std::invalid_argument("utterance has no frames");
  const int h = utt.frames.front().dim(0);
  const int w = utt.frames.front().dim(1);
  for (const Tensor& f : utt.frames) {
    if (f.rank() != 3 || f.dim(2) != 3) {
      throw std::invalid_argument("frame is not (H, W, 3): " + f.shape_str());
    }
    if (f.dim(0) != h || f.dim(1) != w) {
      throw std::invalid_argument("frame size " + f.shape_str() + " differs from first frame (" +
                                  std::to_string(h) + ", " + std::to_string(w) + ", 3)");
    }
    if (f.min() < 0.0 || f.max() > 1.0) {
      throw std::invalid_argument("frame pixel values outside [0, 1]");
    }
  }
  if (utt.sample_rate <= 0 || utt.fps <= 0) {
    throw std::invalid_argument("utterance needs positive sample_rate and fps");
  }
  const int hop = alignment_hop(utt.sample_rate, utt.fps);
  const long long required =
      static_cast<long long>(utt.frame_count()) * hop - static_cast<long long>(hop);
  if (static_cast<long long>(utt.audio.size()) < required) {
    throw std::invalid_argument("audio too short: " + std::to_string(utt.audio.size()) +
                                " samples cannot cover " + std::to_string(utt.frame_count()) +
                                " frames (need at least " + std::to_string(required) + ")");
  }
}

int alignment_hop(double sample_rate, double fps) {
  return static_cast<int>(std::lround(sample_rate / fps));
}

int default_window(double sample_rate, double fps) {
  return 2 * alignment_hop(sample_rate, fps);
}

AlignedChunks align_audio_to_frames(const std::vector<double>& audio, double sample_rate,
                                    double fps, int frame_count, int window) {
  if (sample_rate <= 0) throw std::invalid_argument("sample_rate must be positive");
  if (fps <= 0) throw std::invalid_argument("fps must be positive");
  if (frame_count < 1) throw std::invalid_argument("frame_count must be at least 1");
  const int hop = alignment_hop(sample_rate, fps);
  if (window < hop) {
    throw std::invalid_argument("window " + std::to_string(window) + " shorter than hop " +
                                std::to_string(hop));
  }
  if (static_cast<long long>(audio.size()) < hop) {
    throw std::invalid_argument("alignment needs at least one hop of audio: required " +
                                std::to_string(hop) + " samples, available " +
                                std::to_string(audio.size()));
  }

  AlignedChunks out;
  out.hop = hop;
  out.chunks = Tensor({frame_count, window});
  const long long n = static_cast<long long>(audio.size());
  for (int t = 0; t < frame_count; ++t) {
    const long long center = std::llround((t + 0.5) * sample_rate / fps);
    const long long start = center - window / 2;
    for (int i = 0; i < window; ++i) {
      const long long s = start + i;
      out.chunks.at(t, i) = (s < 0 || s >= n) ? 0.0 : audio[static_cast<std::size_t>(s)];
    }
  }
  return out;
}

DatasetSplit split_dataset(const std::vector<std::string>& ids, double train_ratio,
                           double val_ratio, double test_ratio, std::uint64_t seed) {
  const double sum = train_ratio + val_ratio + test_ratio;
  if (std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("split ratios must sum to 1, got " + std::to_string(sum));
  }
  std::vector<std::string> shuffled = ids;
  Rng rng(derive_seed(seed, "dataset_split"));
  rng.shuffle(shuffled);

  const std::size_t n = shuffled.size();
  const std::size_t n_train = static_cast<std::size_t>(std::floor(train_ratio * n));
  const std::size_t n_val = static_cast<std::size_t>(std::floor(val_ratio * n));

  DatasetSplit split;
  split.seed = seed;
  split.train.assign(shuffled.begin(), shuffled.begin() + n_train);
  split.val.assign(shuffled.begin() + n_train, shuffled.begin() + n_train + n_val);
  split.test.assign(shuffled.begin() + n_train + n_val, shuffled.end());
  return split;
}

void save_split(const std::filesystem::path& path, const DatasetSplit& split) {
  nlohmann::json j;
  j["seed"] = split.seed;
  j["train"] = split.train;
  j["val"] = split.val;
  j["test"] = split.test;
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write split file: " + path.string());
  f << j.dump(2) << "\n";
}

DatasetSplit load_split(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read split file: " + path.string());
  nlohmann::json j = nlohmann::json::parse(f);
  DatasetSplit split;
  split.seed = j.at("seed").get<std::uint64_t>();
  split.train = j.at("train").get<std::vector<std::string>>();
  split.val = j.at("val").get<std::vector<std::string>>();
  split.test = j.at("test").get<std::vector<std::string>>();
  return split;
}

std::vector<Utterance> synth_toy_dataset(int n_utterances, int frames, int height, int width,
                                         std::uint64_t seed) {
  if (n_utterances < 1) throw std::invalid_argument("need at least one utterance");
  if (frames < 2) throw std::invalid_argument("need at least two frames per utterance");
  if (height < 8 || width < 8) throw std::invalid_argument("toy frames must be at least 8x8");

  std::vector<Utterance> out;
  out.reserve(static_cast<std::size_t>(n_utterances));
  for (int u = 0; u < n_utterances; ++u) {
    Rng rng(derive_seed(seed, "toy_utterance", static_cast<std::uint64_t>(u)));
    Utterance utt;
    utt.sample_rate = kToySampleRate;
    utt.fps = kToyFps;
    utt.speaker_id = "spk" + std::to_string(u);
    utt.emotion_id = kToyEmotions[rng.below(6)];

    // Speaker appearance: smooth per-channel gradient pattern plus two
    // fixed dark "eyes" in the upper half.
    double base[3], gx[3], gy[3], phase[3];
    for (int k = 0; k < 3; ++k) {
      base[k] = rng.uniform(0.35, 0.75);
      gx[k] = rng.uniform(-0.5, 0.5);
      gy[k] = rng.uniform(-0.5, 0.5);
      phase[k] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }
    const double eye_dark = rng.uniform(0.15, 0.45);

    // Speaker voice: fundamental plus two harmonics.
    const double f0 = rng.uniform(90.0, 280.0);
    double harm[3] = {1.0, rng.uniform(0.2, 0.7), rng.uniform(0.05, 0.4)};

    // Mouth state: slow sinusoid, one value per frame.
    const double mouth_hz = rng.uniform(0.8, 2.5);
    const double mouth_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    std::vector<double> mouth(static_cast<std::size_t>(frames));
    for (int t = 0; t < frames; ++t) {
      mouth[static_cast<std::size_t>(t)] =
          0.5 * (1.0 + std::sin(2.0 * std::numbers::pi * mouth_hz * t / kToyFps + mouth_phase));
    }

    // Frames.
    const int eye_r = std::max(1, height / 16);
    const int eye_row = height / 4;
    const int eye_cols[2] = {width / 3, 2 * width / 3};
    const double mouth_cy = 0.72 * height;
    const double mouth_cx = 0.5 * width;
    const double mouth_rx = 0.16 * width;
    for (int t = 0; t < frames; ++t) {
      Tensor img({height, width, 3});
      const double m = mouth[static_cast<std::size_t>(t)];
      const double mouth_ry = (0.04 + 0.14 * m) * height;
      for (int i = 0; i < height; ++i) {
        for (int j = 0; j < width; ++j) {
          const double yn = static_cast<double>(i) / height;
          const double xn = static_cast<double>(j) / width;
          const double dy = (i - mouth_cy) / mouth_ry;
          const double dx = (j - mouth_cx) / mouth_rx;
          const bool in_mouth = dx * dx + dy * dy <= 1.0;
          bool in_eye = false;
          for (int e = 0; e < 2; ++e) {
            if (std::abs(i - eye_row) <= eye_r && std::abs(j - eye_cols[e]) <= eye_r) {
              in_eye = true;
            }
          }
          for (int k = 0; k < 3; ++k) {
            double v = base[k] + 0.18 * std::sin(2.0 * std::numbers::pi * (gx[k] * xn + gy[k] * yn) +
                                                 phase[k]);
            if (in_eye) v *= eye_dark;
            if (in_mouth) v *= 0.2;
            img.at(i, j, k) = std::clamp(v, 0.0, 1.0);
          }
        }
      }
      utt.frames.push_back(std::move(img));
    }

    // Audio: carrier shaped by the mouth envelope, aligned so the envelope
    // around frame t's center tracks mouth[t].
    const int n_samples = static_cast<int>(std::lround(frames * kToySampleRate / kToyFps));
    utt.audio.resize(static_cast<std::size_t>(n_samples));
    for (int i = 0; i < n_samples; ++i) {
      const double tau = i / kToySampleRate;
      const double ft = tau * kToyFps - 0.5;  // fractional frame index at this sample
      double env;
      if (ft <= 0.0) {
        env = mouth.front();
      } else if (ft >= frames - 1) {
        env = mouth.back();
      } else {
        const int t0 = static_cast<int>(ft);
        const double a = ft - t0;
        env = (1.0 - a) * mouth[static_cast<std::size_t>(t0)] +
              a * mouth[static_cast<std::size_t>(t0) + 1];
      }
      double carrier = 0.0;
      for (int h = 0; h < 3; ++h) {
        carrier += harm[h] * std::sin(2.0 * std::numbers::pi * f0 * (h + 1) * tau);
      }
      utt.audio[static_cast<std::size_t>(i)] = 0.55 * (0.12 + 0.88 * env) * carrier / 1.65;
    }

    validate_utterance(utt);
    out.push_back(std::move(utt));
  }
  return out;
}

void save_utterance(const Utterance& utt, const std::filesystem::path& dir) {
  validate_utterance(utt);
  std::filesystem::create_directories(dir);
  for (int t = 0; t < utt.frame_count(); ++t) {
    write_png(dir / frame_name(t), utt.frames[static_cast<std::size_t>(t)]);
  }
  write_audio_raw(dir / "audio.raw", utt.audio);
  nlohmann::json meta;
  meta["fps"] = utt.fps;
  meta["sample_rate"] = utt.sample_rate;
  meta["speaker_id"] = utt.speaker_id;
  meta["emotion_id"] = utt.emotion_id;
  std::ofstream f(dir / "meta.json");
  if (!f) throw std::runtime_error("cannot write meta.json under " + dir.string());
  f << meta.dump(2) << "\n";
}

Utterance load_utterance(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir)) {
    throw std::runtime_error("utterance directory does not exist: " + dir.string());
  }
  Utterance utt;
  utt.frames = load_frames(dir);

  const auto audio_path = dir / "audio.raw";
  if (!std::filesystem::exists(audio_path)) {
    throw std::runtime_error("missing audio file: " + audio_path.string());
  }
  utt.audio = read_audio_raw(audio_path);

  const auto meta_path = dir / "meta.json";
  if (std::filesystem::exists(meta_path)) {
    std::ifstream f(meta_path);
    nlohmann::json meta = nlohmann::json::parse(f);
    utt.fps = meta.value("fps", 30.0);
    utt.sample_rate = meta.value("sample_rate", 16000.0);
    utt.speaker_id = meta.value("speaker_id", std::string());
    utt.emotion_id = meta.value("emotion_id", std::string());
  }
  validate_utterance(utt);
  return utt;
}

void export_frames(const std::vector<Tensor>& frames, const std::filesystem::path& dir) {
  if (frames.empty()) throw std::invalid_argument("export_frames: no frames");
  std::filesystem::create_directories(dir);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    write_png(dir / frame_name(static_cast<int>(t)), frames[t]);
  }
}

std::vector<Tensor> load_frames(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir)) {
    throw std::runtime_error("frame directory does not exist: " + dir.string());
  }
  std::vector<std::filesystem::path> paths;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("frame_", 0) == 0 && entry.path().extension() == ".png") {
      paths.push_back(entry.path());
    }
  }
  if (paths.empty()) {
    throw std::runtime_error("no frame_*.png files in " + dir.string());
  }
  std::sort(paths.begin(), paths.end());
  std::vector<Tensor> frames;
  frames.reserve(paths.size());
  for (const auto& p : paths) frames.push_back(read_png(p));
  return frames;
}

std::vector<std::string> list_clips(const std::filesystem::path& data_root) {
  std::vector<std::string> ids;
  if (!std::filesystem::exists(data_root)) {
    throw std::runtime_error("dataset root does not exist: " + data_root.string());
  }
  for (const auto& entry : std::filesystem::directory_iterator(data_root)) {
    if (entry.is_directory() && entry.path().filename().string().rfind("clip_", 0) == 0) {
      ids.push_back(entry.path().filename().string());
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace speechface
