#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "speechface/tensor.hpp"

namespace speechface {

/// Aligned audio-waveform + face-frame pair, the unit of training data.
struct Utterance {
  std::vector<double> audio;   // mono samples
  double sample_rate = 16000;  // Hz
  std::vector<Tensor> frames;  // T images, each (H, W, 3) in [0, 1]
  double fps = 30;
  std::string speaker_id;
  std::string emotion_id;  // empty when unlabelled

  int frame_count() const { return static_cast<int>(frames.size()); }
  int height() const { return frames.empty() ? 0 : frames.front().dim(0); }
  int width() const { return frames.empty() ? 0 : frames.front().dim(1); }
};

/// Throws std::invalid_argument when any Utterance invariant is broken:
/// non-empty frames of one size, pixels in [0, 1], audio covering every
/// frame window.
void validate_utterance(const Utterance& utt);

/// Per-frame audio windows: exactly one fixed-length chunk per video frame.
struct AlignedChunks {
  Tensor chunks;  // (T, window)
  int hop = 0;    // samples per frame, round(sample_rate / fps)

  int frame_count() const { return chunks.dim(0); }
  int window() const { return chunks.dim(1); }
};

int alignment_hop(double sample_rate, double fps);
int default_window(double sample_rate, double fps);  // 2 * hop, centered

/// Chunk t is centered on the middle of frame t's time span,
/// round((t + 0.5) * sample_rate / fps); samples beyond either end of the
/// waveform read as zero.
AlignedChunks align_audio_to_frames(const std::vector<double>& audio, double sample_rate,
                                    double fps, int frame_count, int window);

struct DatasetSplit {
  std::vector<std::string> train, val, test;
  std::uint64_t seed = 0;
};

/// 70/15/15 by default: |train| = floor(r0*N), |val| = floor(r1*N), test
/// takes the remainder. The shuffle is driven by the seed alone.
DatasetSplit split_dataset(const std::vector<std::string>& ids, double train_ratio,
                           double val_ratio, double test_ratio, std::uint64_t seed);

void save_split(const std::filesystem::path& path, const DatasetSplit& split);
DatasetSplit load_split(const std::filesystem::path& path);

/// Deterministic synthetic talking-head clips for desk-scale runs. Each
/// utterance carries a per-speaker static pattern plus a carrier timbre,
/// and a per-frame mouth state that drives both the audio envelope and a
/// moving patch in the lower half of the frame, so audio genuinely
/// predicts frames.
std::vector<Utterance> synth_toy_dataset(int n_utterances, int frames, int height, int width,
                                         std::uint64_t seed);

// Clip directory format: frame_%05d.png + audio.raw (little-endian float32
// mono) + meta.json (fps, sample_rate, speaker_id, emotion_id).
void save_utterance(const Utterance& utt, const std::filesystem::path& dir);
Utterance load_utterance(const std::filesystem::path& dir);
void export_frames(const std::vector<Tensor>& frames, const std::filesystem::path& dir);
std::vector<Tensor> load_frames(const std::filesystem::path& dir);

/// Clip ids (`clip_*` subdirectory names) under a dataset root, sorted.
std::vector<std::string> list_clips(const std::filesystem::path& data_root);

}  // namespace speechface
