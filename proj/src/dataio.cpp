#include "ccl/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "ccl/blobio.hpp"
#include "ccl/errors.hpp"
#include "ccl/kvtext.hpp"

namespace ccl {

namespace {

constexpr const char* kManifestName = "dataset.manifest";
constexpr const char* kDatasetFormat = "ccl-dataset";
constexpr std::uint64_t kDatasetFormatVersion = 1;

const char* split_name(Split s) { return s == Split::kTrain ? "train" : "test"; }

void validate_split(const SplitData& sp, std::uint32_t num_classes, const char* name) {
  const std::size_t n = sp.labels.size();
  if (sp.video_inputs.rows() != n || sp.audio_embeddings.rows() != n ||
      sp.image_embeddings.rows() != n) {
    throw ConfigError(std::string("dataset: row count mismatch in ") + name + " split");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (sp.labels[i] >= num_classes) {
      throw ConfigError("dataset: label out of range: " + std::to_string(sp.labels[i]) +
                        " >= num_classes " + std::to_string(num_classes) + " in " + name +
                        " split");
    }
  }
  if (!sp.video_inputs.all_finite()) {
    throw ConfigError(std::string("dataset: non-finite video_inputs in ") + name + " split");
  }
  if (!sp.audio_embeddings.all_finite()) {
    throw ConfigError(std::string("dataset: non-finite audio_embeddings in ") + name + " split");
  }
  if (!sp.image_embeddings.all_finite()) {
    throw ConfigError(std::string("dataset: non-finite image_embeddings in ") + name + " split");
  }
}

}  // namespace

void EmbeddingDataset::validate() const {
  if (num_classes == 0) throw ConfigError("dataset: num_classes must be positive");
  validate_split(train, num_classes, "train");
  validate_split(test, num_classes, "test");
  if (test.rows() > 0) {
    if (test.video_inputs.cols() != train.video_inputs.cols() ||
        test.audio_embeddings.cols() != train.audio_embeddings.cols() ||
        test.image_embeddings.cols() != train.image_embeddings.cols()) {
      throw ConfigError("dataset: train/test column mismatch");
    }
  }
  std::vector<bool> seen(num_classes, false);
  for (std::uint32_t y : train.labels) seen[y] = true;
  for (std::uint32_t c = 0; c < num_classes; ++c) {
    if (!seen[c]) {
      throw ConfigError("dataset: class " + std::to_string(c) + " missing from train split");
    }
  }
}

const SplitData& split_of(const EmbeddingDataset& ds, Split s) {
  return s == Split::kTrain ? ds.train : ds.test;
}

void SyntheticConfig::validate() const {
  if (num_classes == 0) throw ConfigError("synthetic: num_classes must be positive");
  if (train_per_class == 0) throw ConfigError("synthetic: train_per_class must be positive");
  if (f_high < 0.0 || f_weak < 0.0 || f_none < 0.0 ||
      std::abs(f_high + f_weak + f_none - 1.0) > 1e-9) {
    throw ConfigError("synthetic: correlation fractions must be non-negative and sum to 1");
  }
  if (d_in < 2 || k_audio < 2 || k_image < 2 || d_semantic < 2) {
    throw ConfigError("synthetic: all dimensions must be >= 2");
  }
  if (!(noise_sigma > 0.0)) throw ConfigError("synthetic: noise_sigma must be positive");
  if (!(alpha > 0.0) || !(alpha < 1.0)) throw ConfigError("synthetic: alpha must be in (0,1)");
  if (distractor_pool == 0) throw ConfigError("synthetic: distractor_pool must be positive");
}

SyntheticConfig ucf51_gap_preset() {
  SyntheticConfig cfg;
  cfg.f_high = 0.294;
  cfg.f_weak = 0.294;
  cfg.f_none = 0.412;
  return cfg;
}

SyntheticConfig synthetic_preset(const std::string& name) {
  if (name == "ucf51-gap") return ucf51_gap_preset();
  throw ConfigError("unknown synthetic preset: " + name);
}

namespace {

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double scale, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.gaussian() * scale;
  return m;
}

}  // namespace

EmbeddingDataset generate_synthetic(const SyntheticConfig& cfg,
                                    SyntheticGroundTruth* ground_truth) {
  cfg.validate();
  Rng rng(cfg.seed);
  const std::uint32_t k = cfg.num_classes;

  const Matrix prototypes = gaussian_matrix(k, cfg.d_semantic, 1.0, rng);
  const Matrix distractors = gaussian_matrix(cfg.distractor_pool, cfg.d_semantic, 1.0, rng);
  const double map_scale = 1.0 / std::sqrt(static_cast<double>(cfg.d_semantic));
  const Matrix map_video = gaussian_matrix(cfg.d_semantic, cfg.d_in, map_scale, rng);
  const Matrix map_audio = gaussian_matrix(cfg.d_semantic, cfg.k_audio, map_scale, rng);
  const Matrix map_image = gaussian_matrix(cfg.d_semantic, cfg.k_image, map_scale, rng);

  // First ceil(f_high*k) classes are highly correlated, the next
  // ceil(f_weak*k) weakly, the remainder not at all, in index order.
  const auto n_high = static_cast<std::uint32_t>(
      std::min<double>(k, std::ceil(cfg.f_high * static_cast<double>(k))));
  const auto n_weak = static_cast<std::uint32_t>(
      std::min<double>(k - n_high, std::ceil(cfg.f_weak * static_cast<double>(k))));
  std::vector<Correlation> regime(k, Correlation::kNone);
  std::vector<std::size_t> distractor_of(k, 0);
  std::size_t weak_count = 0, none_count = 0;
  for (std::uint32_t c = 0; c < k; ++c) {
    if (c < n_high) {
      regime[c] = Correlation::kHigh;
    } else if (c < n_high + n_weak) {
      regime[c] = Correlation::kWeak;
      distractor_of[c] = weak_count++ % cfg.distractor_pool;
    } else {
      regime[c] = Correlation::kNone;
      distractor_of[c] = none_count++ % cfg.distractor_pool;
    }
  }

  // Per-class audio source in semantic space.
  Matrix audio_source(k, cfg.d_semantic);
  for (std::uint32_t c = 0; c < k; ++c) {
    for (std::size_t j = 0; j < cfg.d_semantic; ++j) {
      switch (regime[c]) {
        case Correlation::kHigh:
          audio_source(c, j) = prototypes(c, j);
          break;
        case Correlation::kWeak:
          audio_source(c, j) = cfg.alpha * prototypes(c, j) +
                               (1.0 - cfg.alpha) * distractors(distractor_of[c], j);
          break;
        case Correlation::kNone:
          audio_source(c, j) = distractors(distractor_of[c], j);
          break;
      }
    }
  }

  const Matrix video_means = matmul(prototypes, map_video);
  const Matrix audio_means = matmul(audio_source, map_audio);
  const Matrix image_means = matmul(prototypes, map_image);

  auto make_split = [&](std::size_t per_class) {
    SplitData sp;
    const std::size_t n = per_class * k;
    sp.video_inputs = Matrix(n, cfg.d_in);
    sp.audio_embeddings = Matrix(n, cfg.k_audio);
    sp.image_embeddings = Matrix(n, cfg.k_image);
    sp.labels.resize(n);
    std::size_t row = 0;
    for (std::uint32_t c = 0; c < k; ++c) {
      for (std::size_t s = 0; s < per_class; ++s, ++row) {
        for (std::size_t j = 0; j < cfg.d_in; ++j)
          sp.video_inputs(row, j) = video_means(c, j) + cfg.noise_sigma * rng.gaussian();
        for (std::size_t j = 0; j < cfg.k_audio; ++j)
          sp.audio_embeddings(row, j) = audio_means(c, j) + cfg.noise_sigma * rng.gaussian();
        for (std::size_t j = 0; j < cfg.k_image; ++j)
          sp.image_embeddings(row, j) = image_means(c, j) + cfg.noise_sigma * rng.gaussian();
        sp.labels[row] = c;
      }
    }
    return sp;
  };

  EmbeddingDataset ds;
  ds.num_classes = k;
  ds.train = make_split(cfg.train_per_class);
  ds.test = make_split(cfg.test_per_class);
  ds.validate();

  if (ground_truth != nullptr) {
    ground_truth->prototypes = prototypes;
    ground_truth->distractors = distractors;
    ground_truth->map_video = map_video;
    ground_truth->map_audio = map_audio;
    ground_truth->map_image = map_image;
    ground_truth->class_regime = regime;
    ground_truth->class_distractor = distractor_of;
  }
  return ds;
}

Batch gather_batch(const SplitData& split, std::span<const std::size_t> indices) {
  Batch b;
  const std::size_t n = indices.size();
  b.video_inputs = Matrix(n, split.video_inputs.cols());
  b.audio_embeddings = Matrix(n, split.audio_embeddings.cols());
  b.image_embeddings = Matrix(n, split.image_embeddings.cols());
  b.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = indices[i];
    for (std::size_t j = 0; j < split.video_inputs.cols(); ++j)
      b.video_inputs(i, j) = split.video_inputs(r, j);
    for (std::size_t j = 0; j < split.audio_embeddings.cols(); ++j)
      b.audio_embeddings(i, j) = split.audio_embeddings(r, j);
    for (std::size_t j = 0; j < split.image_embeddings.cols(); ++j)
      b.image_embeddings(i, j) = split.image_embeddings(r, j);
    b.labels[i] = split.labels[r];
  }
  return b;
}

namespace {

std::vector<std::size_t> draw_without_replacement(std::size_t n, std::size_t count, Rng& rng) {
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

bool single_class(const SplitData& sp, const std::vector<std::size_t>& idx) {
  for (std::size_t i = 1; i < idx.size(); ++i) {
    if (sp.labels[idx[i]] != sp.labels[idx[0]]) return false;
  }
  return true;
}

}  // namespace

Batch sample_batch(const EmbeddingDataset& ds, Split split, std::size_t batch_size, Rng& rng) {
  const SplitData& sp = split_of(ds, split);
  if (batch_size < 2 || batch_size > sp.rows()) {
    throw ParamError("sample_batch: batch_size " + std::to_string(batch_size) +
                     " out of range [2, " + std::to_string(sp.rows()) + "] for " +
                     split_name(split) + " split");
  }
  std::vector<std::size_t> idx = draw_without_replacement(sp.rows(), batch_size, rng);
  const std::set<std::uint32_t> classes(sp.labels.begin(), sp.labels.end());
  if (classes.size() >= 2 && single_class(sp, idx)) {
    idx = draw_without_replacement(sp.rows(), batch_size, rng);  // resampled once
  }
  return gather_batch(sp, idx);
}

namespace {

void write_table(const std::filesystem::path& dir, KvMap& manifest, const std::string& key,
                 const std::string& filename, const Matrix& m) {
  write_float_blob(dir / filename, m);
  manifest.set(key + ".path", filename);
  manifest.set_u64(key + ".cols", m.cols());
  manifest.set(key + ".fnv1a64", blob_payload_hash(dir / filename));
}

Matrix read_table(const std::filesystem::path& dir, const KvMap& manifest, const std::string& key,
                  std::size_t rows) {
  const std::string filename = manifest.get(key + ".path");
  const std::size_t cols = manifest.get_u64(key + ".cols");
  const std::filesystem::path path = dir / filename;
  Matrix m = read_float_blob(path, rows, cols);
  if (blob_payload_hash(path) != manifest.get(key + ".fnv1a64")) {
    throw FormatError("checksum mismatch for blob " + path.string());
  }
  return m;
}

}  // namespace

std::filesystem::path save_dataset(const EmbeddingDataset& ds, const std::filesystem::path& dir,
                                   bool force) {
  ds.validate();
  const std::filesystem::path manifest_path = dir / kManifestName;
  if (std::filesystem::exists(manifest_path) && !force) {
    throw IoError("refusing to overwrite existing dataset at " + dir.string() +
                  " without force");
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());

  KvMap manifest;
  manifest.set("format", kDatasetFormat);
  manifest.set_u64("format_version", kDatasetFormatVersion);
  manifest.set_u64("num_classes", ds.num_classes);
  for (Split s : {Split::kTrain, Split::kTest}) {
    const SplitData& sp = split_of(ds, s);
    const std::string prefix = split_name(s);
    manifest.set_u64(prefix + ".rows", sp.rows());
    write_table(dir, manifest, prefix + ".video_inputs", prefix + "_video_inputs.f32",
                sp.video_inputs);
    write_table(dir, manifest, prefix + ".audio_embeddings", prefix + "_audio_embeddings.f32",
                sp.audio_embeddings);
    write_table(dir, manifest, prefix + ".image_embeddings", prefix + "_image_embeddings.f32",
                sp.image_embeddings);
    const std::string labels_file = prefix + "_labels.u32";
    write_label_blob(dir / labels_file, sp.labels);
    manifest.set(prefix + ".labels.path", labels_file);
    manifest.set(prefix + ".labels.fnv1a64", blob_payload_hash(dir / labels_file));
  }
  write_kv_file(manifest_path, manifest);
  return manifest_path;
}

EmbeddingDataset load_dataset(const std::filesystem::path& manifest_or_dir) {
  std::filesystem::path manifest_path = manifest_or_dir;
  if (std::filesystem::is_directory(manifest_path)) manifest_path /= kManifestName;
  if (!std::filesystem::exists(manifest_path)) {
    throw IoError("missing dataset manifest: " + manifest_path.string());
  }
  const KvMap manifest = read_kv_file(manifest_path);
  if (manifest.get("format") != kDatasetFormat) {
    throw FormatError("not a dataset manifest: " + manifest_path.string());
  }
  if (manifest.get_u64("format_version") != kDatasetFormatVersion) {
    throw FormatError("unsupported dataset format_version " +
                      manifest.get("format_version"));
  }
  const std::filesystem::path dir = manifest_path.parent_path();

  EmbeddingDataset ds;
  ds.num_classes = static_cast<std::uint32_t>(manifest.get_u64("num_classes"));
  for (Split s : {Split::kTrain, Split::kTest}) {
    SplitData& sp = s == Split::kTrain ? ds.train : ds.test;
    const std::string prefix = split_name(s);
    const std::size_t rows = manifest.get_u64(prefix + ".rows");
    sp.video_inputs = read_table(dir, manifest, prefix + ".video_inputs", rows);
    sp.audio_embeddings = read_table(dir, manifest, prefix + ".audio_embeddings", rows);
    sp.image_embeddings = read_table(dir, manifest, prefix + ".image_embeddings", rows);
    const std::filesystem::path labels_path = dir / manifest.get(prefix + ".labels.path");
    sp.labels = read_label_blob(labels_path, rows);
    if (blob_payload_hash(labels_path) != manifest.get(prefix + ".labels.fnv1a64")) {
      throw FormatError("checksum mismatch for blob " + labels_path.string());
    }
  }
  ds.validate();
  return ds;
}

}  // namespace ccl
