#include "ccl/eval.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "ccl/errors.hpp"

namespace ccl {

namespace {

std::size_t argmax_row(const Matrix& m, std::size_t row) {
  // Ties go to the lowest index via the strict comparison.
  std::size_t best = 0;
  for (std::size_t j = 1; j < m.cols(); ++j) {
    if (m(row, j) > m(row, best)) best = j;
  }
  return best;
}

}  // namespace

double top1_accuracy(const ModelParams& params, const SplitData& split) {
  if (split.rows() == 0) throw ParamError("top1_accuracy: empty split");
  const Matrix probs = classify(params, student_forward(params, split.video_inputs));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < split.rows(); ++i) {
    if (argmax_row(probs, i) == split.labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(split.rows());
}

std::vector<double> per_class_accuracy(const ModelParams& params, const SplitData& split,
                                       std::uint32_t num_classes) {
  if (split.rows() == 0) throw ParamError("per_class_accuracy: empty split");
  const Matrix probs = classify(params, student_forward(params, split.video_inputs));
  std::vector<std::size_t> hits(num_classes, 0), counts(num_classes, 0);
  for (std::size_t i = 0; i < split.rows(); ++i) {
    const std::uint32_t y = split.labels[i];
    ++counts[y];
    if (argmax_row(probs, i) == y) ++hits[y];
  }
  std::vector<double> acc(num_classes, 0.0);
  for (std::uint32_t c = 0; c < num_classes; ++c) {
    acc[c] = counts[c] == 0 ? 0.0 : static_cast<double>(hits[c]) / static_cast<double>(counts[c]);
  }
  return acc;
}

RetrievalReport knn_retrieval(const ModelParams& params, const EmbeddingDataset& ds,
                              std::span<const std::size_t> ks) {
  if (ds.test.rows() == 0) throw ParamError("knn_retrieval: empty query (test) split");
  if (ds.train.rows() == 0) throw ParamError("knn_retrieval: empty target (train) split");

  const Matrix queries = student_forward(params, ds.test.video_inputs);
  const Matrix targets = student_forward(params, ds.train.video_inputs);
  const Matrix sim = cosine_similarity_matrix(queries, targets);

  RetrievalReport report;
  report.num_queries = ds.test.rows();
  report.num_targets = ds.train.rows();

  std::size_t max_k = 0;
  std::vector<std::size_t> clamped(ks.size());
  for (std::size_t i = 0; i < ks.size(); ++i) {
    std::size_t k = ks[i];
    if (k == 0) throw ParamError("knn_retrieval: K must be positive");
    if (k > report.num_targets) {
      report.warnings.push_back("K=" + std::to_string(k) + " clamped to " +
                                std::to_string(report.num_targets) + " targets");
      k = report.num_targets;
    }
    clamped[i] = k;
    max_k = std::max(max_k, k);
  }

  // For each query, rank targets by descending similarity, lower index first
  // on ties, keeping only the top max_k.
  std::vector<std::size_t> hits(ks.size(), 0);
  std::vector<std::size_t> order(report.num_targets);
  for (std::size_t q = 0; q < report.num_queries; ++q) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(max_k),
                      order.end(), [&](std::size_t x, std::size_t y) {
                        if (sim(q, x) != sim(q, y)) return sim(q, x) > sim(q, y);
                        return x < y;
                      });
    const std::uint32_t query_class = ds.test.labels[q];
    std::size_t first_match = max_k;  // rank of the first same-class target
    for (std::size_t r = 0; r < max_k; ++r) {
      if (ds.train.labels[order[r]] == query_class) {
        first_match = r;
        break;
      }
    }
    for (std::size_t i = 0; i < ks.size(); ++i) {
      if (first_match < clamped[i]) ++hits[i];
    }
  }

  for (std::size_t i = 0; i < ks.size(); ++i) {
    report.recall_at.emplace_back(
        clamped[i], static_cast<double>(hits[i]) / static_cast<double>(report.num_queries));
  }
  return report;
}

}  // namespace ccl
