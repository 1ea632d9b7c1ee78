#include "ccl/losses.hpp"

#include <cmath>
#include <string>

#include "ccl/errors.hpp"

namespace ccl {

void LossConfig::validate() const {
  if (!(tau_audio > 0.0) || !(tau_image > 0.0)) {
    throw ConfigError("loss config: temperatures must be positive");
  }
  if (lambda < 0.0 || lambda > 1.0) {
    throw ConfigError("loss config: lambda must be in [0, 1]");
  }
  if (lambda_cls < 0.0) {
    throw ConfigError("loss config: lambda_cls must be non-negative");
  }
}

const char* LossBreakdown::first_non_finite() const {
  const struct {
    const char* name;
    double v;
  } terms[] = {
      {"ce_v", ce_v},       {"ce_av", ce_av},         {"ce_iv", ce_iv},
      {"nce_va", nce_va},   {"nce_v_av", nce_v_av},   {"nce_vi", nce_vi},
      {"nce_v_iv", nce_v_iv}, {"jsd_av", jsd_av},     {"jsd_iv", jsd_iv},
      {"L_cls", cls_total}, {"L_distill", distill_total}, {"L_total", total},
  };
  for (const auto& t : terms) {
    if (!std::isfinite(t.v)) return t.name;
  }
  return nullptr;
}

namespace {

void check_labels(std::span<const std::uint32_t> labels, std::size_t rows, std::size_t classes,
                  const char* op) {
  if (labels.size() != rows) {
    throw ShapeError(std::string(op) + ": label count does not match rows");
  }
  for (std::uint32_t y : labels) {
    if (y >= classes) {
      throw ParamError(std::string(op) + ": label " + std::to_string(y) + " out of range for " +
                       std::to_string(classes) + " classes");
    }
  }
}

// Softmax over cosine similarities: p(i, j) = softmax_j(cos(anchor_i, cand_j) / tau).
NodeId assignment_probs(Graph& g, NodeId anchors, NodeId candidates, double tau) {
  const NodeId sim =
      g.matmul_nt(g.l2_normalize_rows(anchors), g.l2_normalize_rows(candidates));
  return g.row_softmax(sim, tau);
}

}  // namespace

NodeId cross_entropy_node(Graph& g, NodeId probs, std::span<const std::uint32_t> labels) {
  // Shapes are copied out first: node creation can reallocate the tape, so
  // references returned by value() must not be held across it.
  const std::size_t rows = g.value(probs).rows();
  check_labels(labels, rows, g.value(probs).cols(), "cross_entropy");
  if (rows == 0) throw ParamError("cross_entropy: empty batch");
  const NodeId picked = g.pick(probs, labels);
  return g.scale(g.sum_all(g.log_floored(picked)), -1.0 / static_cast<double>(rows));
}

NodeId info_nce_node(Graph& g, NodeId anchors, NodeId candidates, double tau) {
  const std::size_t rows = g.value(anchors).rows();
  if (rows != g.value(candidates).rows()) {
    throw ShapeError("info_nce: anchors and candidates must have equal row counts");
  }
  if (rows < 2) throw ParamError("info_nce: batch size must be at least 2");
  const NodeId probs = assignment_probs(g, anchors, candidates, tau);
  return g.scale(g.sum_all(g.log_floored(g.diag(probs))), -1.0 / static_cast<double>(rows));
}

NodeId multiclass_nce_node(Graph& g, NodeId anchors, NodeId candidates,
                           std::span<const std::uint32_t> labels, double tau) {
  const std::size_t b = g.value(anchors).rows();
  if (b != g.value(candidates).rows()) {
    throw ShapeError("multiclass_nce: anchors and candidates must have equal row counts");
  }
  if (b == 0) throw ParamError("multiclass_nce: empty batch");
  if (labels.size() != b) throw ShapeError("multiclass_nce: label count does not match rows");

  // Row i holds the positive/negative averaging weights of anchor i; the
  // anchor's own pair counts as a positive. If an anchor has no negatives the
  // negative sum is dropped.
  Matrix w_pos(b, b);
  Matrix w_neg(b, b);
  for (std::size_t i = 0; i < b; ++i) {
    std::size_t n_pos = 0;
    for (std::size_t j = 0; j < b; ++j) n_pos += labels[j] == labels[i] ? 1 : 0;
    const std::size_t n_neg = b - n_pos;
    for (std::size_t j = 0; j < b; ++j) {
      if (labels[j] == labels[i]) {
        w_pos(i, j) = 1.0 / static_cast<double>(n_pos);
      } else {
        w_neg(i, j) = 1.0 / static_cast<double>(n_neg);
      }
    }
  }

  const NodeId probs = assignment_probs(g, anchors, candidates, tau);
  // 1 - p(i,j) is taken as the sum of the other probabilities of row i;
  // the subtraction form cancels catastrophically once a pair saturates.
  const NodeId pos_term = g.mul(g.constant(std::move(w_pos)), g.log_floored(probs));
  const NodeId neg_term =
      g.mul(g.constant(std::move(w_neg)), g.log_floored(g.sum_others(probs)));
  return g.scale(g.sum_all(g.add(pos_term, neg_term)), -1.0 / static_cast<double>(b));
}

NodeId jsd_node(Graph& g, NodeId p, NodeId q) {
  if (!g.value(p).same_shape(g.value(q))) {
    throw ShapeError("jsd: P and Q must have the same shape");
  }
  const std::size_t rows = g.value(p).rows();
  if (rows == 0) throw ParamError("jsd: empty batch");
  auto check_rows = [](const Matrix& m, const char* which) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < m.cols(); ++j) {
        if (m(i, j) < 0.0) {
          throw ParamError(std::string("jsd: negative entry in ") + which + " row " +
                           std::to_string(i));
        }
        sum += m(i, j);
      }
      if (std::abs(sum - 1.0) > 1e-9) {
        throw ParamError(std::string("jsd: ") + which + " row " + std::to_string(i) +
                         " does not sum to 1");
      }
    }
  };
  check_rows(g.value(p), "P");
  check_rows(g.value(q), "Q");

  const NodeId log_p = g.log_floored(p);
  const NodeId log_q = g.log_floored(q);
  const NodeId kl_pq = g.mul(p, g.sub(log_p, log_q));  // P * (log P - log Q)
  const NodeId kl_qp = g.mul(q, g.sub(log_q, log_p));
  return g.scale(g.sum_all(g.add(kl_pq, kl_qp)), 0.5 / static_cast<double>(rows));
}

NodeId modality_objective_node(Graph& g, NodeId x_v, NodeId x_t, NodeId x_tv,
                               std::span<const std::uint32_t> labels, double lambda, double tau,
                               const LossConfig& cfg) {
  auto nce = [&](NodeId anchors, NodeId candidates) {
    return cfg.use_nce ? multiclass_nce_node(g, anchors, candidates, labels, tau)
                       : info_nce_node(g, anchors, candidates, tau);
  };
  if (!cfg.use_composition) return nce(x_v, x_t);
  const NodeId direct = nce(x_v, x_t);
  const NodeId composed = nce(x_v, x_tv);
  return g.add(g.scale(direct, lambda), g.scale(composed, 1.0 - lambda));
}

LossBreakdown BreakdownNodes::values(const Graph& g) const {
  LossBreakdown out;
  out.ce_v = g.scalar(ce_v);
  if (has_ce_av) out.ce_av = g.scalar(ce_av);
  if (has_ce_iv) out.ce_iv = g.scalar(ce_iv);
  if (has_audio_feature) {
    out.nce_va = g.scalar(nce_va);
    if (has_ce_av) out.nce_v_av = g.scalar(nce_v_av);  // composed term exists with composition
  }
  if (has_image_feature) {
    out.nce_vi = g.scalar(nce_vi);
    if (has_ce_iv) out.nce_v_iv = g.scalar(nce_v_iv);
  }
  if (has_jsd_av) out.jsd_av = g.scalar(jsd_av);
  if (has_jsd_iv) out.jsd_iv = g.scalar(jsd_iv);
  out.cls_total = g.scalar(cls_total);
  out.distill_total = g.scalar(distill_total);
  out.total = g.scalar(total);
  return out;
}

BreakdownNodes ccl_total_nodes(Graph& g, const ForwardNodes& f, NodeId audio_adapted,
                               NodeId image_adapted, std::span<const std::uint32_t> labels,
                               const LossConfig& cfg) {
  cfg.validate();
  BreakdownNodes n;

  n.ce_v = cross_entropy_node(g, f.p_v, labels);
  n.has_ce_av = cfg.use_audio_branch && cfg.use_composition;
  n.has_ce_iv = cfg.use_image_branch && cfg.use_composition;
  if (n.has_ce_av) n.ce_av = cross_entropy_node(g, f.p_av, labels);
  if (n.has_ce_iv) n.ce_iv = cross_entropy_node(g, f.p_iv, labels);

  NodeId cls = n.ce_v;
  if (n.has_ce_av) cls = g.add(cls, n.ce_av);
  if (n.has_ce_iv) cls = g.add(cls, n.ce_iv);
  n.cls_total = cls;

  auto nce = [&](NodeId anchors, NodeId candidates, double tau) {
    return cfg.use_nce ? multiclass_nce_node(g, anchors, candidates, labels, tau)
                       : info_nce_node(g, anchors, candidates, tau);
  };

  std::vector<NodeId> distill_terms;
  n.has_audio_feature = cfg.use_audio_branch && cfg.use_feature_loss;
  n.has_image_feature = cfg.use_image_branch && cfg.use_feature_loss;
  n.has_jsd_av = cfg.use_audio_branch && cfg.use_jsd && cfg.use_composition;
  n.has_jsd_iv = cfg.use_image_branch && cfg.use_jsd && cfg.use_composition;

  if (n.has_audio_feature) {
    n.nce_va = nce(f.x_v, audio_adapted, cfg.tau_audio);
    if (cfg.use_composition) {
      n.nce_v_av = nce(f.x_v, f.x_av, cfg.tau_audio);
      distill_terms.push_back(g.add(g.scale(n.nce_va, cfg.lambda),
                                    g.scale(n.nce_v_av, 1.0 - cfg.lambda)));
    } else {
      distill_terms.push_back(n.nce_va);
    }
  }
  if (n.has_jsd_av) {
    n.jsd_av = jsd_node(g, f.p_v, f.p_av);
    distill_terms.push_back(n.jsd_av);
  }
  if (n.has_image_feature) {
    n.nce_vi = nce(f.x_v, image_adapted, cfg.tau_image);
    if (cfg.use_composition) {
      n.nce_v_iv = nce(f.x_v, f.x_iv, cfg.tau_image);
      distill_terms.push_back(g.add(g.scale(n.nce_vi, cfg.lambda),
                                    g.scale(n.nce_v_iv, 1.0 - cfg.lambda)));
    } else {
      distill_terms.push_back(n.nce_vi);
    }
  }
  if (n.has_jsd_iv) {
    n.jsd_iv = jsd_node(g, f.p_v, f.p_iv);
    distill_terms.push_back(n.jsd_iv);
  }

  NodeId distill = g.constant(Matrix(1, 1));
  for (NodeId t : distill_terms) distill = g.add(distill, t);
  n.distill_total = distill;

  n.total = g.add(n.distill_total, g.scale(n.cls_total, cfg.lambda_cls));
  // Update-stream roots: the student and classifier follow ce_v plus the
  // distillation terms; each composition head follows its own CE term only.
  n.student_objective = g.add(n.distill_total, g.scale(n.ce_v, cfg.lambda_cls));
  if (n.has_ce_av) n.audio_head_objective = g.scale(n.ce_av, cfg.lambda_cls);
  if (n.has_ce_iv) n.image_head_objective = g.scale(n.ce_iv, cfg.lambda_cls);
  return n;
}

// ---- plain-value entry points ----

double cross_entropy(const Matrix& probs, std::span<const std::uint32_t> labels) {
  Graph g;
  return g.scalar(cross_entropy_node(g, g.constant(probs), labels));
}

double info_nce(const Matrix& anchors, const Matrix& candidates, double tau) {
  Graph g;
  return g.scalar(info_nce_node(g, g.constant(anchors), g.constant(candidates), tau));
}

double multiclass_nce(const Matrix& anchors, const Matrix& candidates,
                      std::span<const std::uint32_t> labels, double tau) {
  Graph g;
  return g.scalar(multiclass_nce_node(g, g.constant(anchors), g.constant(candidates), labels, tau));
}

double jsd(const Matrix& p, const Matrix& q) {
  Graph g;
  return g.scalar(jsd_node(g, g.constant(p), g.constant(q)));
}

double modality_objective(const Matrix& x_v, const Matrix& x_t, const Matrix& x_tv,
                          std::span<const std::uint32_t> labels, double lambda, double tau,
                          const LossConfig& cfg) {
  if (lambda < 0.0 || lambda > 1.0) throw ConfigError("modality_objective: lambda must be in [0, 1]");
  Graph g;
  return g.scalar(modality_objective_node(g, g.constant(x_v), g.constant(x_t), g.constant(x_tv),
                                          labels, lambda, tau, cfg));
}

LossBreakdown ccl_total(const ForwardOutputs& f, const Matrix& audio_adapted,
                        const Matrix& image_adapted, std::span<const std::uint32_t> labels,
                        const LossConfig& cfg) {
  Graph g;
  ForwardNodes fn;
  fn.x_v = g.constant(f.x_v);
  fn.x_av = g.constant(f.x_av);
  fn.x_iv = g.constant(f.x_iv);
  fn.p_v = g.constant(f.p_v);
  fn.p_av = g.constant(f.p_av);
  fn.p_iv = g.constant(f.p_iv);
  const BreakdownNodes n = ccl_total_nodes(g, fn, g.constant(audio_adapted),
                                           g.constant(image_adapted), labels, cfg);
  return n.values(g);
}

}  // namespace ccl
