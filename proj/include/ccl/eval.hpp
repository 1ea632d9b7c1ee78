#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ccl/dataio.hpp"
#include "ccl/model.hpp"

namespace ccl {

// Fraction of rows whose argmax of P_v equals the label; argmax ties go to
// the lowest class index.
double top1_accuracy(const ModelParams& params, const SplitData& split);

// Per-class accuracy, indexed by class.
std::vector<double> per_class_accuracy(const ModelParams& params, const SplitData& split,
                                       std::uint32_t num_classes);

struct RetrievalReport {
  // (K, R@K) in the requested order, K clamped to num_targets.
  std::vector<std::pair<std::size_t, double>> recall_at;
  std::size_t num_queries = 0;
  std::size_t num_targets = 0;
  std::vector<std::string> warnings;
};

inline constexpr std::size_t kDefaultRetrievalKs[] = {1, 5, 10, 20};

// Test rows are queries, train rows are targets, both encoded by the
// student. Exact cosine search; similarity ties go to the lower target
// index.
RetrievalReport knn_retrieval(const ModelParams& params, const EmbeddingDataset& ds,
                              std::span<const std::size_t> ks);

}  // namespace ccl
