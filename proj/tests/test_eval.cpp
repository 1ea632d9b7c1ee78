#include <doctest.h>

#include <cmath>

#include "ccl/errors.hpp"
#include "ccl/eval.hpp"
#include "oracles.hpp"

using ccl::Dims;
using ccl::EmbeddingDataset;
using ccl::Matrix;
using ccl::ModelParams;

namespace {

// Student that reproduces its input exactly, scaled by 1e-11: the tanh
// argument is small enough that tanh(x) == x in double precision, so the
// feature rows are exact positive rescalings of the input rows.
ModelParams passthrough_params(std::size_t d, std::uint32_t num_classes) {
  Dims dims;
  dims.d_in = d;
  dims.d_latent = d;
  dims.k_audio = d;
  dims.k_image = d;
  dims.num_classes = num_classes;
  ccl::Rng rng(1);
  ModelParams p = ccl::init_params(dims, rng);
  p.student_w1 = ccl::scale(Matrix::identity(d), 1e-11);
  p.student_b1 = Matrix(1, d);
  p.student_w2 = Matrix::identity(d);
  p.student_b2 = Matrix(1, d);
  return p;
}

EmbeddingDataset dataset_from_features(const Matrix& train_feats,
                                       const std::vector<std::uint32_t>& train_labels,
                                       const Matrix& test_feats,
                                       const std::vector<std::uint32_t>& test_labels,
                                       std::uint32_t num_classes) {
  EmbeddingDataset ds;
  ds.num_classes = num_classes;
  ds.train.video_inputs = train_feats;
  ds.train.audio_embeddings = Matrix(train_feats.rows(), train_feats.cols());
  ds.train.image_embeddings = Matrix(train_feats.rows(), train_feats.cols());
  ds.train.labels = train_labels;
  ds.test.video_inputs = test_feats;
  ds.test.audio_embeddings = Matrix(test_feats.rows(), test_feats.cols());
  ds.test.image_embeddings = Matrix(test_feats.rows(), test_feats.cols());
  ds.test.labels = test_labels;
  return ds;
}

}  // namespace

TEST_CASE("top1_accuracy: perfect, worst case, and manual count") {
  // classifier reads the (passthrough) latent directly: spike at the label
  ModelParams p = passthrough_params(3, 3);
  p.classifier_w = ccl::scale(Matrix::identity(3), 1e13);  // undo the 1e-11 feature scale
  p.classifier_b = Matrix(1, 3);

  ccl::SplitData split;
  split.video_inputs = Matrix::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {0, 1, 0}});
  split.audio_embeddings = Matrix(4, 3);
  split.image_embeddings = Matrix(4, 3);
  split.labels = {0, 1, 2, 1};
  CHECK(ccl::top1_accuracy(p, split) == 1.0);

  // anti-correlated two-class predictions
  ModelParams p2 = passthrough_params(2, 2);
  p2.classifier_w = ccl::scale(Matrix::identity(2), 1e13);
  p2.classifier_b = Matrix(1, 2);
  ccl::SplitData flipped;
  flipped.video_inputs = Matrix::from_rows({{1, 0}, {0, 1}});
  flipped.audio_embeddings = Matrix(2, 2);
  flipped.image_embeddings = Matrix(2, 2);
  flipped.labels = {1, 0};
  CHECK(ccl::top1_accuracy(p2, flipped) == 0.0);

  // random 6-row fixture against a manual argmax count
  ccl::Rng rng(7);
  Dims dims;
  dims.d_in = 4;
  dims.d_latent = 4;
  dims.k_audio = 4;
  dims.k_image = 4;
  dims.num_classes = 3;
  ccl::Rng prng(8);
  const ModelParams rp = ccl::init_params(dims, prng);
  ccl::SplitData random_split;
  random_split.video_inputs = oracle::random_matrix(rng, 6, 4);
  random_split.audio_embeddings = Matrix(6, 4);
  random_split.image_embeddings = Matrix(6, 4);
  random_split.labels = oracle::random_labels(rng, 6, 3);
  const Matrix probs = ccl::classify(rp, ccl::student_forward(rp, random_split.video_inputs));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < 6; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < 3; ++j)
      if (probs(i, j) > probs(i, best)) best = j;
    if (best == random_split.labels[i]) ++hits;
  }
  CHECK(ccl::top1_accuracy(rp, random_split) == doctest::Approx(double(hits) / 6.0));

  ccl::SplitData empty;
  CHECK_THROWS_AS(ccl::top1_accuracy(rp, empty), ccl::ParamError);
}

TEST_CASE("top1_accuracy breaks argmax ties toward the lowest class index") {
  ModelParams p = passthrough_params(2, 2);
  p.classifier_w = Matrix(2, 2);  // all logits zero -> uniform rows
  p.classifier_b = Matrix(1, 2);
  ccl::SplitData split;
  split.video_inputs = Matrix::from_rows({{1, 0}, {0, 1}});
  split.audio_embeddings = Matrix(2, 2);
  split.image_embeddings = Matrix(2, 2);
  split.labels = {0, 1};
  CHECK(ccl::top1_accuracy(p, split) == 0.5);  // class 0 wins both ties
}

TEST_CASE("knn_retrieval: exact match, disjoint classes, clamping") {
  const ModelParams p = passthrough_params(3, 2);

  // a query equal to a same-class target counts as a hit at K=1
  const Matrix targets = Matrix::from_rows({{5, 0, 0}, {0, 5, 0}, {0, 0, 5}});
  const Matrix queries = Matrix::from_rows({{0, 5, 0}});
  EmbeddingDataset ds = dataset_from_features(targets, {0, 1, 0}, queries, {1}, 2);
  const std::size_t ks[] = {1};
  const ccl::RetrievalReport hit = ccl::knn_retrieval(p, ds, ks);
  CHECK(hit.recall_at[0].second == 1.0);

  // no target shares the query's class
  EmbeddingDataset disjoint = dataset_from_features(targets, {0, 0, 0}, queries, {1}, 2);
  const std::size_t ks3[] = {1, 2, 3};
  const ccl::RetrievalReport none = ccl::knn_retrieval(p, disjoint, ks3);
  for (const auto& [k, r] : none.recall_at) CHECK(r == 0.0);

  // K larger than the target count is clamped with a warning
  const std::size_t big[] = {10};
  const ccl::RetrievalReport clamped = ccl::knn_retrieval(p, ds, big);
  CHECK(clamped.recall_at[0].first == 3);
  CHECK(clamped.warnings.size() == 1);

  EmbeddingDataset empty_test = ds;
  empty_test.test.video_inputs = Matrix(0, 3);
  empty_test.test.audio_embeddings = Matrix(0, 3);
  empty_test.test.image_embeddings = Matrix(0, 3);
  empty_test.test.labels = {};
  CHECK_THROWS_AS(ccl::knn_retrieval(p, empty_test, ks), ccl::ParamError);
}

TEST_CASE("knn_retrieval breaks similarity ties toward the lower target index") {
  const ModelParams p = passthrough_params(2, 2);
  // targets 0 and 1 are both exactly collinear with the query; index 0 wins
  const Matrix targets = Matrix::from_rows({{2, 0}, {4, 0}, {0, 1}});
  const Matrix queries = Matrix::from_rows({{1, 0}});
  EmbeddingDataset ds = dataset_from_features(targets, {1, 0, 0}, queries, {1}, 2);
  const std::size_t ks[] = {1};
  CHECK(ccl::knn_retrieval(p, ds, ks).recall_at[0].second == 1.0);

  EmbeddingDataset flipped = dataset_from_features(targets, {0, 1, 1}, queries, {1}, 2);
  CHECK(ccl::knn_retrieval(p, flipped, ks).recall_at[0].second == 0.0);
}

TEST_CASE("knn_retrieval equals the brute-force oracle on random fixtures") {
  ccl::Rng rng(11);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t nq = 2 + rng.below(6);
    const std::size_t nt = 4 + rng.below(10);
    const std::size_t d = 3;
    const Matrix targets = oracle::random_matrix(rng, nt, d);
    const Matrix queries = oracle::random_matrix(rng, nq, d);
    const auto t_labels = oracle::random_labels(rng, nt, 3);
    const auto q_labels = oracle::random_labels(rng, nq, 3);
    EmbeddingDataset ds = dataset_from_features(targets, t_labels, queries, q_labels, 3);
    const ModelParams p = passthrough_params(d, 3);

    const std::size_t ks[] = {1, 2, 3};
    const ccl::RetrievalReport report = ccl::knn_retrieval(p, ds, ks);
    const Matrix qf = ccl::student_forward(p, queries);
    const Matrix tf = ccl::student_forward(p, targets);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(report.recall_at[i].second ==
            oracle::knn_recall(qf, q_labels, tf, t_labels, ks[i]));
    }
    // monotone in K
    CHECK(report.recall_at[0].second <= report.recall_at[1].second);
    CHECK(report.recall_at[1].second <= report.recall_at[2].second);
    // reaches 1.0 at K = num_targets when every query class appears
    bool all_present = true;
    for (std::uint32_t y : q_labels) {
      bool found = false;
      for (std::uint32_t t : t_labels) found = found || t == y;
      all_present = all_present && found;
    }
    if (all_present) {
      const std::size_t full[] = {nt};
      CHECK(ccl::knn_retrieval(p, ds, full).recall_at[0].second == 1.0);
    }
  }
}

TEST_CASE("retrieval is invariant under positive per-row feature rescaling") {
  ccl::Rng rng(13);
  const std::size_t nq = 5, nt = 8, d = 4;
  const Matrix targets = oracle::random_matrix(rng, nt, d);
  const Matrix queries = oracle::random_matrix(rng, nq, d);
  const auto t_labels = oracle::random_labels(rng, nt, 3);
  const auto q_labels = oracle::random_labels(rng, nq, 3);
  const ModelParams p = passthrough_params(d, 3);

  Matrix scaled_targets = targets;
  Matrix scaled_queries = queries;
  for (std::size_t i = 0; i < nt; ++i) {
    const double c = 0.5 + rng.uniform01() * 4.0;
    for (std::size_t j = 0; j < d; ++j) scaled_targets(i, j) *= c;
  }
  for (std::size_t i = 0; i < nq; ++i) {
    const double c = 0.5 + rng.uniform01() * 4.0;
    for (std::size_t j = 0; j < d; ++j) scaled_queries(i, j) *= c;
  }

  EmbeddingDataset ds = dataset_from_features(targets, t_labels, queries, q_labels, 3);
  EmbeddingDataset scaled =
      dataset_from_features(scaled_targets, t_labels, scaled_queries, q_labels, 3);
  const std::size_t ks[] = {1, 2, 5};
  const ccl::RetrievalReport a = ccl::knn_retrieval(p, ds, ks);
  const ccl::RetrievalReport b = ccl::knn_retrieval(p, scaled, ks);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(a.recall_at[i].second == b.recall_at[i].second);
  }
}

TEST_CASE("per-class accuracy sums consistently with top-1") {
  ccl::Rng rng(17);
  Dims dims;
  dims.d_in = 4;
  dims.d_latent = 4;
  dims.k_audio = 4;
  dims.k_image = 4;
  dims.num_classes = 3;
  ccl::Rng prng(18);
  const ModelParams p = ccl::init_params(dims, prng);
  ccl::SplitData split;
  split.video_inputs = oracle::random_matrix(rng, 9, 4);
  split.audio_embeddings = Matrix(9, 4);
  split.image_embeddings = Matrix(9, 4);
  split.labels = {0, 0, 0, 1, 1, 1, 2, 2, 2};
  const auto per_class = ccl::per_class_accuracy(p, split, 3);
  const double overall = ccl::top1_accuracy(p, split);
  CHECK((per_class[0] + per_class[1] + per_class[2]) / 3.0 == doctest::Approx(overall));
}
