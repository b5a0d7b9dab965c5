#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "speechface/image.hpp"
#include "speechface/media.hpp"
#include "speechface/rng.hpp"

namespace speechface {
namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("speechface_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Brute-force indexer: for every chunk position, recompute the source
// sample index from first principles.
double oracle_sample(const std::vector<double>& audio, double sr, double fps, int t, int window,
                     int i) {
  const long long center = std::llround((t + 0.5) * sr / fps);
  const long long s = center - window / 2 + i;
  if (s < 0 || s >= static_cast<long long>(audio.size())) return 0.0;
  return audio[static_cast<std::size_t>(s)];
}

TEST(AlignAudio, ThirtyFpsSixteenKhz) {
  std::vector<double> audio(16000);
  for (std::size_t i = 0; i < audio.size(); ++i) audio[i] = std::sin(0.01 * i);
  const AlignedChunks chunks = align_audio_to_frames(audio, 16000, 30, 30, 533);
  EXPECT_EQ(chunks.frame_count(), 30);
  EXPECT_EQ(chunks.window(), 533);
  EXPECT_EQ(chunks.hop, 533);  // round(16000/30)
  for (int t = 0; t < 30; ++t) {
    for (int i = 0; i < 533; i += 7) {
      EXPECT_EQ(chunks.chunks.at(t, i), oracle_sample(audio, 16000, 30, t, 533, i));
    }
  }
}

TEST(AlignAudio, SingleFrame) {
  std::vector<double> audio(700, 0.25);
  const AlignedChunks chunks = align_audio_to_frames(audio, 16000, 30, 1, 600);
  EXPECT_EQ(chunks.frame_count(), 1);
}

TEST(AlignAudio, PaddingArithmetic) {
  // 8000 samples at 16 kHz, 25 fps, T=12, window=1280: hop 640 and the
  // first chunk needs 320 leading zeros.
  std::vector<double> audio(8000);
  for (std::size_t i = 0; i < audio.size(); ++i) audio[i] = 1.0 + 0.001 * i;
  const AlignedChunks chunks = align_audio_to_frames(audio, 16000, 25, 12, 1280);
  EXPECT_EQ(chunks.frame_count(), 12);
  EXPECT_EQ(chunks.hop, 640);
  for (int i = 0; i < 320; ++i) EXPECT_EQ(chunks.chunks.at(0, i), 0.0);
  EXPECT_NE(chunks.chunks.at(0, 320), 0.0);
  for (int t = 0; t < 12; ++t) {
    for (int i = 0; i < 1280; ++i) {
      ASSERT_EQ(chunks.chunks.at(t, i), oracle_sample(audio, 16000, 25, t, 1280, i))
          << "t=" << t << " i=" << i;
    }
  }
}

TEST(AlignAudio, TooShortAudioNamesCounts) {
  std::vector<double> audio(100);
  try {
    align_audio_to_frames(audio, 16000, 30, 4, 1066);
    FAIL() << "expected alignment error";
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("533"), std::string::npos);  // required
    EXPECT_NE(msg.find("100"), std::string::npos);  // available
  }
}

TEST(AlignAudio, AlwaysProducesExactlyTChunks) {
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const double sr = 8000 + rng.uniform() * 24000;
    const double fps = 10 + rng.uniform() * 50;
    const int hop = alignment_hop(sr, fps);
    const int t_count = 1 + static_cast<int>(rng.below(40));
    const int window = hop + static_cast<int>(rng.below(static_cast<std::uint64_t>(hop) + 1));
    std::vector<double> audio(static_cast<std::size_t>(hop) +
                              rng.below(static_cast<std::uint64_t>(sr) * 2));
    const AlignedChunks chunks = align_audio_to_frames(audio, sr, fps, t_count, window);
    ASSERT_EQ(chunks.frame_count(), t_count);
    ASSERT_EQ(chunks.window(), window);
  }
}

TEST(SplitDataset, PaperProportions) {
  std::vector<std::string> ids(100);
  for (int i = 0; i < 100; ++i) ids[static_cast<std::size_t>(i)] = "c" + std::to_string(i);
  const DatasetSplit split = split_dataset(ids, 0.70, 0.15, 0.15, 42);
  EXPECT_EQ(split.train.size(), 70u);
  EXPECT_EQ(split.val.size(), 15u);
  EXPECT_EQ(split.test.size(), 15u);
}

TEST(SplitDataset, EmptyInput) {
  const DatasetSplit split = split_dataset({}, 0.70, 0.15, 0.15, 1);
  EXPECT_TRUE(split.train.empty());
  EXPECT_TRUE(split.val.empty());
  EXPECT_TRUE(split.test.empty());
}

TEST(SplitDataset, FloorAndRemainder) {
  // N=7: floor(4.9)=4 train, floor(1.05)=1 val, remainder 2 test.
  std::vector<std::string> ids{"a", "b", "c", "d", "e", "f", "g"};
  const DatasetSplit split = split_dataset(ids, 0.70, 0.15, 0.15, 3);
  EXPECT_EQ(split.train.size(), 4u);
  EXPECT_EQ(split.val.size(), 1u);
  EXPECT_EQ(split.test.size(), 2u);
}

TEST(SplitDataset, PartitionPropertyAndDeterminism) {
  for (int n : {1, 2, 3, 5, 10, 33, 100, 257, 1000}) {
    std::vector<std::string> ids(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) ids[static_cast<std::size_t>(i)] = "id" + std::to_string(i);
    const DatasetSplit a = split_dataset(ids, 0.70, 0.15, 0.15, 7);
    const DatasetSplit b = split_dataset(ids, 0.70, 0.15, 0.15, 7);
    EXPECT_EQ(a.train, b.train);
    EXPECT_EQ(a.val, b.val);
    EXPECT_EQ(a.test, b.test);
    std::vector<std::string> all;
    all.insert(all.end(), a.train.begin(), a.train.end());
    all.insert(all.end(), a.val.begin(), a.val.end());
    all.insert(all.end(), a.test.begin(), a.test.end());
    ASSERT_EQ(all.size(), ids.size());
    std::sort(all.begin(), all.end());
    std::vector<std::string> sorted_ids = ids;
    std::sort(sorted_ids.begin(), sorted_ids.end());
    EXPECT_EQ(all, sorted_ids);  // exhaustive and disjoint
  }
}

TEST(SplitDataset, BadRatios) {
  EXPECT_THROW(split_dataset({"a"}, 0.5, 0.2, 0.2, 1), std::invalid_argument);
}

TEST(ToyDataset, DeterministicAndValid) {
  const auto a = synth_toy_dataset(2, 8, 32, 32, 7);
  const auto b = synth_toy_dataset(2, 8, 32, 32, 7);
  ASSERT_EQ(a.size(), 2u);
  for (std::size_t u = 0; u < a.size(); ++u) {
    EXPECT_EQ(a[u].audio, b[u].audio);
    ASSERT_EQ(a[u].frames.size(), b[u].frames.size());
    for (std::size_t t = 0; t < a[u].frames.size(); ++t) {
      EXPECT_EQ(a[u].frames[t].vec(), b[u].frames[t].vec());
    }
    EXPECT_NO_THROW(validate_utterance(a[u]));
  }
  const auto c = synth_toy_dataset(2, 8, 32, 32, 8);
  EXPECT_NE(a[0].audio, c[0].audio);
}

// Brute-force correlation oracle: per-frame audio energy should track the
// mouth region darkness for aligned pairs but not for shuffled ones.
TEST(ToyDataset, AudioPredictsFrames) {
  const auto clips = synth_toy_dataset(5, 20, 32, 32, 123);
  std::vector<double> energy, mouth;
  for (const Utterance& utt : clips) {
    const AlignedChunks chunks = align_audio_to_frames(
        utt.audio, utt.sample_rate, utt.fps, utt.frame_count(),
        default_window(utt.sample_rate, utt.fps));
    for (int t = 0; t < utt.frame_count(); ++t) {
      double e = 0.0;
      for (int i = 0; i < chunks.window(); ++i) e += chunks.chunks.at(t, i) * chunks.chunks.at(t, i);
      energy.push_back(std::sqrt(e / chunks.window()));
      // Mean darkness of the lower-middle region where the mouth lives.
      const Tensor& f = utt.frames[static_cast<std::size_t>(t)];
      double d = 0.0;
      int n = 0;
      for (int i = 20; i < 28; ++i) {
        for (int j = 10; j < 22; ++j) {
          d += 1.0 - f.at(i, j, 1);
          ++n;
        }
      }
      mouth.push_back(d / n);
    }
  }
  ASSERT_EQ(energy.size(), 100u);

  auto pearson = [](const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      sx += x[i];
      sy += y[i];
      sxx += x[i] * x[i];
      syy += y[i] * y[i];
      sxy += x[i] * y[i];
    }
    const double cov = sxy / n - (sx / n) * (sy / n);
    const double vx = sxx / n - (sx / n) * (sx / n);
    const double vy = syy / n - (sy / n) * (sy / n);
    return cov / std::sqrt(vx * vy);
  };
  const double aligned = pearson(energy, mouth);
  Rng rng(5);
  std::vector<double> shuffled = mouth;
  rng.shuffle(shuffled);
  const double broken = pearson(energy, shuffled);
  EXPECT_GT(aligned, 0.5);
  EXPECT_GT(aligned, std::abs(broken) + 0.2);
}

TEST(ClipIo, RoundTripWithinQuantization) {
  const auto clips = synth_toy_dataset(1, 5, 32, 32, 11);
  const fs::path dir = temp_dir("roundtrip");
  save_utterance(clips[0], dir / "clip_0000");
  const Utterance loaded = load_utterance(dir / "clip_0000");
  ASSERT_EQ(loaded.frame_count(), 5);
  double max_diff = 0.0;
  for (int t = 0; t < 5; ++t) {
    const Tensor& a = clips[0].frames[static_cast<std::size_t>(t)];
    const Tensor& b = loaded.frames[static_cast<std::size_t>(t)];
    ASSERT_TRUE(a.same_shape(b));
    for (std::size_t i = 0; i < a.size(); ++i) max_diff = std::max(max_diff, std::abs(a[i] - b[i]));
  }
  EXPECT_LE(max_diff, 1.0 / 255.0 + 1e-12);
  EXPECT_EQ(loaded.speaker_id, clips[0].speaker_id);
  EXPECT_EQ(loaded.emotion_id, clips[0].emotion_id);
  // float32 audio round trip
  ASSERT_EQ(loaded.audio.size(), clips[0].audio.size());
  for (std::size_t i = 0; i < loaded.audio.size(); i += 100) {
    EXPECT_NEAR(loaded.audio[i], clips[0].audio[i], 1e-6);
  }
  fs::remove_all(dir);
}

TEST(ClipIo, MissingPathNamesIt) {
  try {
    load_utterance("/nonexistent/speechface_clip");
    FAIL() << "expected error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/speechface_clip"), std::string::npos);
  }
}

TEST(ClipIo, ShapePreserved) {
  const auto clips = synth_toy_dataset(1, 30, 64, 64, 3);
  const fs::path dir = temp_dir("shape");
  save_utterance(clips[0], dir / "clip_0000");
  const Utterance loaded = load_utterance(dir / "clip_0000");
  EXPECT_EQ(loaded.frame_count(), 30);
  EXPECT_EQ(loaded.frames[0].shape(), (std::vector<int>{64, 64, 3}));
  fs::remove_all(dir);
}

TEST(ImageResize, PreservesConstants) {
  Tensor img({16, 16, 3}, 0.37);
  const Tensor out = resize_bilinear(img, 32, 24);
  EXPECT_EQ(out.shape(), (std::vector<int>{32, 24, 3}));
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], 0.37, 1e-12);
}

}  // namespace
}  // namespace speechface
