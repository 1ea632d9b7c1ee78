#pragma once

#include <cstdint>
#include <span>

#include "ccl/graph.hpp"
#include "ccl/matrix.hpp"
#include "ccl/model.hpp"

namespace ccl {

struct LossConfig {
  double tau_audio = 0.5;
  double tau_image = 0.1;
  double lambda = 0.5;      // weight of the direct NCE term vs the composed one
  double lambda_cls = 1.0;  // weight of the classification losses

  bool use_composition = true;   // off: "w/o composition" ablation
  bool use_feature_loss = true;  // off: "w/o L_nce" ablation (JSD and CE kept)
  bool use_nce = true;           // off: InfoNCE instead of multi-class NCE ("w L_ct")
  bool use_jsd = true;           // off: "w/o L_JSD" ablation
  bool use_audio_branch = true;
  bool use_image_branch = true;

  // Ablation toggle: detach the student embedding inside the composition so
  // distillation terms do not reach the student through x_av / x_iv.
  bool stop_grad_composed = false;

  void validate() const;

  bool audio_head_active() const {
    return use_audio_branch && use_composition && lambda_cls > 0.0;
  }
  bool image_head_active() const {
    return use_image_branch && use_composition && lambda_cls > 0.0;
  }
};

struct LossBreakdown {
  double ce_v = 0.0, ce_av = 0.0, ce_iv = 0.0;
  double nce_va = 0.0, nce_v_av = 0.0;  // audio feature terms
  double nce_vi = 0.0, nce_v_iv = 0.0;  // image feature terms
  double jsd_av = 0.0, jsd_iv = 0.0;
  double cls_total = 0.0;      // L_cls: sum of active CE terms
  double distill_total = 0.0;  // L_distill
  double total = 0.0;          // L_distill + lambda_cls * L_cls

  // First non-finite term name, or nullptr when all entries are finite.
  const char* first_non_finite() const;
};

// ---- graph builders ----

NodeId cross_entropy_node(Graph& g, NodeId probs, std::span<const std::uint32_t> labels);
NodeId info_nce_node(Graph& g, NodeId anchors, NodeId candidates, double tau);
NodeId multiclass_nce_node(Graph& g, NodeId anchors, NodeId candidates,
                           std::span<const std::uint32_t> labels, double tau);
NodeId jsd_node(Graph& g, NodeId p, NodeId q);
// lambda * NCE(x_v, x_t) + (1 - lambda) * NCE(x_v, x_tv); collapses to the
// direct term without composition, and swaps in InfoNCE when use_nce is off.
NodeId modality_objective_node(Graph& g, NodeId x_v, NodeId x_t, NodeId x_tv,
                               std::span<const std::uint32_t> labels, double lambda, double tau,
                               const LossConfig& cfg);

// Scalar node per breakdown term; inactive terms have no node.
struct BreakdownNodes {
  NodeId ce_v, ce_av, ce_iv;
  NodeId nce_va, nce_v_av, nce_vi, nce_v_iv;
  NodeId jsd_av, jsd_iv;
  NodeId cls_total, distill_total, total;
  // Update-stream roots: the student/classifier objective
  // lambda_cls * ce_v + L_distill, and the per-head CE objectives.
  NodeId student_objective;
  NodeId audio_head_objective, image_head_objective;
  bool has_ce_av = false, has_ce_iv = false;
  bool has_audio_feature = false, has_image_feature = false;
  bool has_jsd_av = false, has_jsd_iv = false;

  LossBreakdown values(const Graph& g) const;
};

// audio_adapted / image_adapted are the (frozen) teacher embeddings already
// mapped into the latent space.
BreakdownNodes ccl_total_nodes(Graph& g, const ForwardNodes& f, NodeId audio_adapted,
                               NodeId image_adapted, std::span<const std::uint32_t> labels,
                               const LossConfig& cfg);

// ---- plain-value entry points ----

double cross_entropy(const Matrix& probs, std::span<const std::uint32_t> labels);
double info_nce(const Matrix& anchors, const Matrix& candidates, double tau);
double multiclass_nce(const Matrix& anchors, const Matrix& candidates,
                      std::span<const std::uint32_t> labels, double tau);
double jsd(const Matrix& p, const Matrix& q);
double modality_objective(const Matrix& x_v, const Matrix& x_t, const Matrix& x_tv,
                          std::span<const std::uint32_t> labels, double lambda, double tau,
                          const LossConfig& cfg);
LossBreakdown ccl_total(const ForwardOutputs& f, const Matrix& audio_adapted,
                        const Matrix& image_adapted, std::span<const std::uint32_t> labels,
                        const LossConfig& cfg);

}  // namespace ccl
