#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ccl/matrix.hpp"
#include "ccl/rng.hpp"

namespace ccl {

struct SplitData {
  Matrix video_inputs;      // n x d_in
  Matrix audio_embeddings;  // n x k_audio
  Matrix image_embeddings;  // n x k_image
  std::vector<std::uint32_t> labels;

  std::size_t rows() const { return labels.size(); }
};

struct EmbeddingDataset {
  std::uint32_t num_classes = 0;
  SplitData train;
  SplitData test;

  std::size_t d_in() const { return train.video_inputs.cols(); }
  std::size_t k_audio() const { return train.audio_embeddings.cols(); }
  std::size_t k_image() const { return train.image_embeddings.cols(); }

  // Enforces consistent row counts, label ranges, every class present in the
  // train split, and finite teacher tables.
  void validate() const;
};

enum class Split { kTrain, kTest };

const SplitData& split_of(const EmbeddingDataset& ds, Split s);

struct Batch {
  Matrix video_inputs;
  Matrix audio_embeddings;
  Matrix image_embeddings;
  std::vector<std::uint32_t> labels;

  std::size_t rows() const { return labels.size(); }
};

// Audio/video correspondence regime of a class: audio either carries the
// class semantics, a blend of them, or an unrelated distractor.
enum class Correlation : std::uint8_t { kHigh, kWeak, kNone };

struct SyntheticConfig {
  std::uint32_t num_classes = 16;
  std::size_t train_per_class = 40;
  std::size_t test_per_class = 10;
  std::size_t d_in = 32;
  std::size_t k_audio = 32;
  std::size_t k_image = 32;
  std::size_t d_semantic = 16;
  double f_high = 1.0;  // fractions of classes per correlation regime
  double f_weak = 0.0;
  double f_none = 0.0;
  double alpha = 0.5;        // weak-regime blend toward the class semantics
  double noise_sigma = 0.1;  // isotropic Gaussian noise on every row
  std::size_t distractor_pool = 4;
  std::uint64_t seed = 0;

  void validate() const;
};

// Fractions 29.4 / 29.4 / 41.2% of highly / weakly / not correlated classes.
SyntheticConfig ucf51_gap_preset();
// Returns the preset for a name ("ucf51-gap") or throws ConfigError.
SyntheticConfig synthetic_preset(const std::string& name);

// Generator internals exposed for verification: prototypes and maps are in
// semantic space, regimes follow class index order.
struct SyntheticGroundTruth {
  Matrix prototypes;   // num_classes x d_semantic
  Matrix distractors;  // pool x d_semantic
  Matrix map_video;    // d_semantic x d_in
  Matrix map_audio;    // d_semantic x k_audio
  Matrix map_image;    // d_semantic x k_image
  std::vector<Correlation> class_regime;
  std::vector<std::size_t> class_distractor;  // weak/none classes only
};

EmbeddingDataset generate_synthetic(const SyntheticConfig& cfg,
                                    SyntheticGroundTruth* ground_truth = nullptr);

// Uniform sampling without replacement; a single-class draw is
// resampled once when the split holds more than one class.
Batch sample_batch(const EmbeddingDataset& ds, Split split, std::size_t batch_size, Rng& rng);

Batch gather_batch(const SplitData& split, std::span<const std::size_t> indices);

// Writes dataset.manifest plus one blob per (split, table) into `dir` and
// returns the manifest path. Refuses to clobber an existing dataset unless
// `force` is set.
std::filesystem::path save_dataset(const EmbeddingDataset& ds, const std::filesystem::path& dir,
                                   bool force = false);

// Accepts the manifest path or its directory. Blobs are checksum- and
// shape-validated; float payloads are widened to double.
EmbeddingDataset load_dataset(const std::filesystem::path& manifest_or_dir);

}  // namespace ccl
