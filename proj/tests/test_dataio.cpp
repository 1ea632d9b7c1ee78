#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "ccl/blobio.hpp"
#include "ccl/dataio.hpp"
#include "ccl/errors.hpp"
#include "ccl/kvtext.hpp"
#include "oracles.hpp"

using ccl::EmbeddingDataset;
using ccl::Matrix;
using ccl::SyntheticConfig;

namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("ccl_test_" + tag);
  fs::remove_all(dir);
  return dir;
}

EmbeddingDataset tiny_dataset() {
  EmbeddingDataset ds;
  ds.num_classes = 2;
  ds.train.video_inputs = Matrix::from_rows({{0.1, 0.2}, {0.3, 0.4}, {0.5, 0.6}, {0.7, 0.8}});
  ds.train.audio_embeddings = Matrix::from_rows({{1, 0}, {0, 1}, {1, 1}, {0.5, 0.25}});
  ds.train.image_embeddings = Matrix::from_rows({{2, 0}, {0, 2}, {2, 2}, {0.5, 2.5}});
  ds.train.labels = {0, 1, 0, 1};
  ds.test.video_inputs = Matrix::from_rows({{0.15, 0.25}});
  ds.test.audio_embeddings = Matrix::from_rows({{0.6, 0.4}});
  ds.test.image_embeddings = Matrix::from_rows({{1.5, 0.5}});
  ds.test.labels = {1};
  return ds;
}

bool same_split(const ccl::SplitData& a, const ccl::SplitData& b) {
  return ccl::bitwise_equal(a.video_inputs, b.video_inputs) &&
         ccl::bitwise_equal(a.audio_embeddings, b.audio_embeddings) &&
         ccl::bitwise_equal(a.image_embeddings, b.image_embeddings) && a.labels == b.labels;
}

double centroid_cosine(const Matrix& a, const Matrix& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t j = 0; j < a.cols(); ++j) {
    dot += a(0, j) * b(0, j);
    na += a(0, j) * a(0, j);
    nb += b(0, j) * b(0, j);
  }
  return dot / std::sqrt(na * nb);
}

Matrix class_centroid(const ccl::SplitData& sp, const Matrix& table, std::uint32_t cls) {
  Matrix c(1, table.cols());
  std::size_t count = 0;
  for (std::size_t i = 0; i < sp.rows(); ++i) {
    if (sp.labels[i] != cls) continue;
    ++count;
    for (std::size_t j = 0; j < table.cols(); ++j) c(0, j) += table(i, j);
  }
  for (double& v : c.values()) v /= static_cast<double>(count);
  return c;
}

Matrix row_of(const Matrix& m, std::size_t r) {
  Matrix out(1, m.cols());
  for (std::size_t j = 0; j < m.cols(); ++j) out(0, j) = m(r, j);
  return out;
}

}  // namespace

TEST_CASE("save/load round trip is the identity at single precision") {
  const fs::path dir = temp_dir("roundtrip");
  const EmbeddingDataset ds = tiny_dataset();
  const auto manifest = ccl::save_dataset(ds, dir);
  CHECK(fs::exists(manifest));

  const EmbeddingDataset loaded = ccl::load_dataset(dir);
  CHECK(loaded.num_classes == 2);
  CHECK(loaded.train.rows() == 4);

  // values survive the float32 narrowing
  for (std::size_t i = 0; i < ds.train.video_inputs.size(); ++i) {
    CHECK(loaded.train.video_inputs.values()[i] ==
          static_cast<double>(static_cast<float>(ds.train.video_inputs.values()[i])));
  }

  // a second round trip is exact
  const fs::path dir2 = temp_dir("roundtrip2");
  ccl::save_dataset(loaded, dir2);
  const EmbeddingDataset again = ccl::load_dataset(dir2);
  CHECK(same_split(loaded.train, again.train));
  CHECK(same_split(loaded.test, again.test));
  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST_CASE("empty test split round-trips") {
  const fs::path dir = temp_dir("empty_test");
  EmbeddingDataset ds = tiny_dataset();
  ds.test = ccl::SplitData{};
  ds.test.video_inputs = Matrix(0, 2);
  ds.test.audio_embeddings = Matrix(0, 2);
  ds.test.image_embeddings = Matrix(0, 2);
  ccl::save_dataset(ds, dir);
  const EmbeddingDataset loaded = ccl::load_dataset(dir);
  CHECK(loaded.test.rows() == 0);
  CHECK(loaded.train.rows() == 4);
  fs::remove_all(dir);
}

TEST_CASE("save refuses to overwrite without force") {
  const fs::path dir = temp_dir("refuse");
  const EmbeddingDataset ds = tiny_dataset();
  ccl::save_dataset(ds, dir);
  CHECK_THROWS_AS(ccl::save_dataset(ds, dir), ccl::IoError);
  CHECK_NOTHROW(ccl::save_dataset(ds, dir, /*force=*/true));
  fs::remove_all(dir);
}

TEST_CASE("load errors are distinct diagnostics") {
  const fs::path dir = temp_dir("load_errors");
  ccl::save_dataset(tiny_dataset(), dir);

  SUBCASE("missing blob file") {
    fs::remove(dir / "train_audio_embeddings.f32");
    CHECK_THROWS_WITH_AS(ccl::load_dataset(dir), doctest::Contains("missing file"), ccl::IoError);
  }
  SUBCASE("truncated blob") {
    const fs::path blob = dir / "train_video_inputs.f32";
    fs::resize_file(blob, fs::file_size(blob) - 4);
    CHECK_THROWS_WITH_AS(ccl::load_dataset(dir), doctest::Contains("truncated"),
                         ccl::FormatError);
  }
  SUBCASE("label out of range") {
    ccl::write_label_blob(dir / "train_labels.u32", {0, 1, 2, 1});  // num_classes == 2
    ccl::KvMap manifest = ccl::read_kv_file(dir / "dataset.manifest");
    manifest.set("train.labels.fnv1a64", ccl::blob_payload_hash(dir / "train_labels.u32"));
    ccl::write_kv_file(dir / "dataset.manifest", manifest);
    CHECK_THROWS_WITH_AS(ccl::load_dataset(dir), doctest::Contains("label out of range"),
                         ccl::ConfigError);
  }
  SUBCASE("checksum mismatch") {
    std::fstream f(dir / "train_image_embeddings.f32",
                   std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(7);
    f.put('\x5a');
    f.close();
    CHECK_THROWS_WITH_AS(ccl::load_dataset(dir), doctest::Contains("checksum"),
                         ccl::FormatError);
  }
  SUBCASE("bad magic") {
    std::fstream f(dir / "train_labels.u32", std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(0);
    f.write("XXXX", 4);
    f.close();
    CHECK_THROWS_WITH_AS(ccl::load_dataset(dir), doctest::Contains("magic"), ccl::FormatError);
  }
  SUBCASE("missing manifest") {
    CHECK_THROWS_AS(ccl::load_dataset(dir / "nope"), ccl::IoError);
  }
  SUBCASE("unsupported format version") {
    ccl::KvMap manifest = ccl::read_kv_file(dir / "dataset.manifest");
    manifest.set("format_version", "99");
    ccl::write_kv_file(dir / "dataset.manifest", manifest);
    CHECK_THROWS_WITH_AS(ccl::load_dataset(dir), doctest::Contains("format_version"),
                         ccl::FormatError);
  }
  fs::remove_all(dir);
}

TEST_CASE("synthetic config validation") {
  SyntheticConfig cfg;
  cfg.f_high = 0.4;
  cfg.f_weak = 0.4;
  cfg.f_none = 0.4;
  CHECK_THROWS_AS(cfg.validate(), ccl::ConfigError);
  CHECK_THROWS_AS(ccl::synthetic_preset("nope"), ccl::ConfigError);

  const SyntheticConfig preset = ccl::synthetic_preset("ucf51-gap");
  CHECK(preset.f_high == doctest::Approx(0.294));
  CHECK(preset.f_weak == doctest::Approx(0.294));
  CHECK(preset.f_none == doctest::Approx(0.412));
  CHECK_NOTHROW(preset.validate());
}

TEST_CASE("ucf51-gap regime counts at 51 classes match the 15/15/21 statistics") {
  SyntheticConfig cfg = ccl::ucf51_gap_preset();
  cfg.num_classes = 51;
  cfg.train_per_class = 1;
  cfg.test_per_class = 0;
  ccl::SyntheticGroundTruth gt;
  ccl::generate_synthetic(cfg, &gt);
  std::size_t high = 0, weak = 0, none = 0;
  for (ccl::Correlation r : gt.class_regime) {
    if (r == ccl::Correlation::kHigh) ++high;
    if (r == ccl::Correlation::kWeak) ++weak;
    if (r == ccl::Correlation::kNone) ++none;
  }
  CHECK(high == 15);
  CHECK(weak == 15);
  CHECK(none == 21);
}

TEST_CASE("synthetic generation is bitwise reproducible; seeds differ") {
  SyntheticConfig cfg;
  cfg.num_classes = 4;
  cfg.train_per_class = 3;
  cfg.test_per_class = 2;
  cfg.seed = 42;
  const EmbeddingDataset a = ccl::generate_synthetic(cfg);
  const EmbeddingDataset b = ccl::generate_synthetic(cfg);
  CHECK(same_split(a.train, b.train));
  CHECK(same_split(a.test, b.test));

  ccl::SyntheticGroundTruth gt1, gt2;
  cfg.seed = 43;
  ccl::generate_synthetic(cfg, &gt2);
  cfg.seed = 42;
  ccl::generate_synthetic(cfg, &gt1);
  CHECK_FALSE(ccl::bitwise_equal(gt1.prototypes, gt2.prototypes));
}

TEST_CASE("fully correlated regime: centroids align with the mapped prototypes") {
  SyntheticConfig cfg;
  cfg.num_classes = 6;
  cfg.train_per_class = 30;
  cfg.test_per_class = 1;
  cfg.f_high = 1.0;
  cfg.f_weak = 0.0;
  cfg.f_none = 0.0;
  cfg.noise_sigma = 0.01;
  cfg.seed = 9;
  ccl::SyntheticGroundTruth gt;
  const EmbeddingDataset ds = ccl::generate_synthetic(cfg, &gt);

  const Matrix audio_ideal = oracle::naive_matmul(gt.prototypes, gt.map_audio);
  const Matrix video_ideal = oracle::naive_matmul(gt.prototypes, gt.map_video);
  for (std::uint32_t c = 0; c < cfg.num_classes; ++c) {
    CHECK(centroid_cosine(class_centroid(ds.train, ds.train.audio_embeddings, c),
                          row_of(audio_ideal, c)) > 0.9);
    CHECK(centroid_cosine(class_centroid(ds.train, ds.train.video_inputs, c),
                          row_of(video_ideal, c)) > 0.9);
  }
}

TEST_CASE("uncorrelated regime with a single distractor collapses audio centroids") {
  SyntheticConfig cfg;
  cfg.num_classes = 5;
  cfg.train_per_class = 20;
  cfg.test_per_class = 1;
  cfg.f_high = 0.0;
  cfg.f_weak = 0.0;
  cfg.f_none = 1.0;
  cfg.distractor_pool = 1;
  cfg.noise_sigma = 0.01;
  cfg.seed = 4;
  const EmbeddingDataset ds = ccl::generate_synthetic(cfg);
  const Matrix c0 = class_centroid(ds.train, ds.train.audio_embeddings, 0);
  for (std::uint32_t c = 1; c < cfg.num_classes; ++c) {
    CHECK(centroid_cosine(c0, class_centroid(ds.train, ds.train.audio_embeddings, c)) > 0.99);
  }
}

TEST_CASE("semantic-gap scenario: distinct classes share an audio centroid") {
  SyntheticConfig cfg;
  cfg.num_classes = 6;
  cfg.train_per_class = 20;
  cfg.test_per_class = 1;
  cfg.f_high = 0.0;
  cfg.f_weak = 0.0;
  cfg.f_none = 1.0;
  cfg.distractor_pool = 3;  // six "none" classes over three distractors
  cfg.noise_sigma = 0.01;
  cfg.seed = 12;
  const EmbeddingDataset ds = ccl::generate_synthetic(cfg);
  bool found_shared = false;
  for (std::uint32_t c1 = 0; c1 < cfg.num_classes && !found_shared; ++c1) {
    for (std::uint32_t c2 = c1 + 1; c2 < cfg.num_classes && !found_shared; ++c2) {
      const Matrix a = class_centroid(ds.train, ds.train.audio_embeddings, c1);
      const Matrix b = class_centroid(ds.train, ds.train.audio_embeddings, c2);
      found_shared = centroid_cosine(a, b) > 0.99;
    }
  }
  CHECK(found_shared);
  // image embeddings keep the classes apart (frames come from the video itself)
  const Matrix i0 = class_centroid(ds.train, ds.train.image_embeddings, 0);
  const Matrix i1 = class_centroid(ds.train, ds.train.image_embeddings, 1);
  CHECK(centroid_cosine(i0, i1) < 0.9);
}

TEST_CASE("sample_batch: determinism, exhaustive batch, bounds") {
  SyntheticConfig cfg;
  cfg.num_classes = 2;
  cfg.train_per_class = 4;
  cfg.test_per_class = 1;
  cfg.seed = 1;
  const EmbeddingDataset ds = ccl::generate_synthetic(cfg);

  ccl::Rng r1(99), r2(99);
  const ccl::Batch b1 = ccl::sample_batch(ds, ccl::Split::kTrain, 4, r1);
  const ccl::Batch b2 = ccl::sample_batch(ds, ccl::Split::kTrain, 4, r2);
  CHECK(ccl::bitwise_equal(b1.video_inputs, b2.video_inputs));
  CHECK(b1.labels == b2.labels);

  ccl::Rng r3(7);
  const ccl::Batch full = ccl::sample_batch(ds, ccl::Split::kTrain, 8, r3);
  std::vector<std::uint32_t> sorted_labels = full.labels;
  std::sort(sorted_labels.begin(), sorted_labels.end());
  std::vector<std::uint32_t> expected = ds.train.labels;
  std::sort(expected.begin(), expected.end());
  CHECK(sorted_labels == expected);  // whole split in shuffled order

  ccl::Rng r4(3);
  CHECK_THROWS_AS(ccl::sample_batch(ds, ccl::Split::kTrain, 1, r4), ccl::ParamError);
  CHECK_THROWS_AS(ccl::sample_batch(ds, ccl::Split::kTrain, 9, r4), ccl::ParamError);
}

TEST_CASE("sample_batch: per-class frequency within 3 sigma over 10000 draws") {
  SyntheticConfig cfg;
  cfg.num_classes = 2;
  cfg.train_per_class = 5;
  cfg.test_per_class = 1;
  cfg.seed = 2;
  const EmbeddingDataset ds = ccl::generate_synthetic(cfg);
  ccl::Rng rng(123);
  std::size_t count0 = 0, total = 0;
  for (int draw = 0; draw < 10000; ++draw) {
    const ccl::Batch b = ccl::sample_batch(ds, ccl::Split::kTrain, 2, rng);
    for (std::uint32_t y : b.labels) {
      count0 += y == 0 ? 1 : 0;
      ++total;
    }
  }
  const double freq = static_cast<double>(count0) / static_cast<double>(total);
  const double sigma = std::sqrt(0.25 / static_cast<double>(total));
  CHECK(std::abs(freq - 0.5) <= 3.0 * sigma);
}

TEST_CASE("sample_batch resamples a single-class draw once") {
  // With five rows of class 0 and one of class 1 the single-class rate of a
  // 2-row batch drops from C(5,2)/C(6,2) = 2/3 to (2/3)^2 under one resample.
  EmbeddingDataset skew;
  skew.num_classes = 2;
  skew.train.video_inputs = Matrix(6, 2);
  skew.train.audio_embeddings = Matrix(6, 2);
  skew.train.image_embeddings = Matrix(6, 2);
  skew.train.labels = {0, 0, 0, 0, 0, 1};
  skew.test = skew.train;
  ccl::Rng rng(77);
  std::size_t single = 0;
  const int draws = 4000;
  for (int i = 0; i < draws; ++i) {
    const ccl::Batch b = ccl::sample_batch(skew, ccl::Split::kTrain, 2, rng);
    if (b.labels[0] == b.labels[1]) ++single;
  }
  const double rate = static_cast<double>(single) / draws;
  const double p_expected = (2.0 / 3.0) * (2.0 / 3.0);
  const double sigma = std::sqrt(p_expected * (1 - p_expected) / draws);
  CHECK(std::abs(rate - p_expected) <= 4.0 * sigma);
}
