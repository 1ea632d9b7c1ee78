#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "ccl/dataio.hpp"
#include "ccl/losses.hpp"
#include "ccl/model.hpp"

namespace ccl {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  double learning_rate = 0.001;
  double weight_decay = 0.0005;
  std::uint64_t seed = 0;
  std::size_t eval_every = 0;  // epochs between metric snapshots; 0 disables
  LossConfig loss;
  Dims dims;

  void validate() const;
};

struct IterationRecord {
  std::size_t iteration = 0;
  std::size_t epoch = 0;
  LossBreakdown losses;
};

struct EvalSnapshot {
  std::size_t iteration = 0;
  std::size_t epoch = 0;
  double train_top1 = 0.0;
  double test_top1 = 0.0;
};

struct TrainHistory {
  std::vector<IterationRecord> iterations;
  std::vector<EvalSnapshot> evals;
  std::vector<double> epoch_seconds;  // wall clock, excluded from exports
};

// One training iteration: a single forward pass, then two gradient
// streams applied simultaneously with SGD(p <- p - lr*(grad + wd*p)) --
// (a) student + classifier driven by lambda_cls*ce_v + L_distill,
// (b) each composition head driven by lambda_cls * its own CE term.
// Inactive heads are untouched. Teacher embeddings are inputs only.
LossBreakdown train_step(ModelParams& params, const Batch& batch, const TrainConfig& cfg);

struct FitResult {
  ModelParams params;
  TrainHistory history;
};

// Deterministic given (seed, cfg, dataset). Each epoch walks a reshuffled
// permutation in ceil(n / batch_size) chunks; a trailing 1-row chunk is
// padded with the permutation head so every batch has at least 2 rows.
FitResult fit(const EmbeddingDataset& ds, const TrainConfig& cfg);

// The deterministic per-iteration records, one line each ("step ..." /
// "eval ..."). Wall-clock values are deliberately not included so identical
// runs export identical bytes.
void write_history(const TrainHistory& history, const std::filesystem::path& path);

struct GradCheckEntry {
  std::string stream;
  std::string param;
  std::size_t row = 0, col = 0;
  double analytic = 0.0;
  double finite_diff = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  bool pass = false;
  double max_rel_err = 0.0;
  GradCheckEntry worst;
  std::size_t coords_checked = 0;
};

// A loss stream pairs a scalar objective with the parameters its gradients
// are checked against.
struct GradCheckStream {
  std::string name;
  std::vector<ParamId> params;
  // Builds the objective over leaves bound from `params`; used both for the
  // analytic pass and (re-evaluated) for central finite differences.
  std::function<NodeId(Graph&, const ParamNodes&)> build;
};

GradCheckReport grad_check_streams(const ModelParams& params,
                                   const std::vector<GradCheckStream>& streams, double tol,
                                   double step = 1e-5);

// Checks the full CCL objective plus both per-stream updates against
// central finite differences. Intended for small models (<= ~5000 params).
GradCheckReport grad_check(const ModelParams& params, const Batch& batch, const TrainConfig& cfg,
                           double tol);

}  // namespace ccl
