#include "ccl/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <string>

#include "ccl/errors.hpp"
#include "ccl/eval.hpp"
#include "ccl/kvtext.hpp"

namespace ccl {

void TrainConfig::validate() const {
  // learning_rate 0 is a valid null step; negative rates are not.
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("train config: learning_rate must be non-negative and finite");
  }
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
    throw ConfigError("train config: weight_decay must be non-negative and finite");
  }
  if (batch_size < 2) throw ConfigError("train config: batch_size must be at least 2");
  loss.validate();
}

namespace {

void apply_sgd(Matrix& p, const Matrix& grad, double lr, double wd) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    p.values()[i] -= lr * (grad.values()[i] + wd * p.values()[i]);
  }
}

std::vector<ParamId> student_stream_params(const ModelParams& params) {
  (void)params;
  return {ParamId::kStudentW1, ParamId::kStudentB1, ParamId::kStudentW2,
          ParamId::kStudentB2, ParamId::kClassifierW, ParamId::kClassifierB};
}

std::vector<ParamId> audio_head_params(const ModelParams& params) {
  std::vector<ParamId> ids = {ParamId::kCompAudioW, ParamId::kCompAudioB};
  if (!params.dims.shared_classifier) {
    ids.push_back(ParamId::kClassifierAvW);
    ids.push_back(ParamId::kClassifierAvB);
  }
  return ids;
}

std::vector<ParamId> image_head_params(const ModelParams& params) {
  std::vector<ParamId> ids = {ParamId::kCompImageW, ParamId::kCompImageB};
  if (!params.dims.shared_classifier) {
    ids.push_back(ParamId::kClassifierIvW);
    ids.push_back(ParamId::kClassifierIvB);
  }
  return ids;
}

std::vector<NodeId> leaves_for(const ParamNodes& pn, const std::vector<ParamId>& ids) {
  std::vector<NodeId> leaves;
  leaves.reserve(ids.size());
  for (ParamId id : ids) leaves.push_back(param_node(pn, id));
  return leaves;
}

}  // namespace

LossBreakdown train_step(ModelParams& params, const Batch& batch, const TrainConfig& cfg) {
  cfg.validate();
  if (batch.rows() < 2) throw ParamError("train_step: batch must hold at least 2 rows");

  Graph g;
  const ParamNodes pn = bind_params(g, params);
  const NodeId video = g.constant(batch.video_inputs);
  const NodeId audio = g.constant(adapt_audio(params, batch.audio_embeddings));
  const NodeId image = g.constant(adapt_image(params, batch.image_embeddings));
  const ForwardNodes f =
      forward_nodes(g, pn, video, audio, image, cfg.loss.stop_grad_composed);
  const BreakdownNodes bn = ccl_total_nodes(g, f, audio, image, batch.labels, cfg.loss);

  const LossBreakdown breakdown = bn.values(g);
  if (const char* term = breakdown.first_non_finite()) {
    throw NumericError(std::string("train_step: non-finite loss term '") + term + "'");
  }

  // Both streams come from the same forward pass and are applied together.
  const std::vector<ParamId> stream_a = student_stream_params(params);
  const std::vector<Matrix> grads_a = g.gradients(bn.student_objective, leaves_for(pn, stream_a));

  std::vector<ParamId> stream_b_audio, stream_b_image;
  std::vector<Matrix> grads_b_audio, grads_b_image;
  if (cfg.loss.audio_head_active()) {
    stream_b_audio = audio_head_params(params);
    grads_b_audio = g.gradients(bn.audio_head_objective, leaves_for(pn, stream_b_audio));
  }
  if (cfg.loss.image_head_active()) {
    stream_b_image = image_head_params(params);
    grads_b_image = g.gradients(bn.image_head_objective, leaves_for(pn, stream_b_image));
  }

  for (std::size_t i = 0; i < stream_a.size(); ++i) {
    apply_sgd(params.param(stream_a[i]), grads_a[i], cfg.learning_rate, cfg.weight_decay);
  }
  for (std::size_t i = 0; i < stream_b_audio.size(); ++i) {
    apply_sgd(params.param(stream_b_audio[i]), grads_b_audio[i], cfg.learning_rate,
              cfg.weight_decay);
  }
  for (std::size_t i = 0; i < stream_b_image.size(); ++i) {
    apply_sgd(params.param(stream_b_image[i]), grads_b_image[i], cfg.learning_rate,
              cfg.weight_decay);
  }
  return breakdown;
}

FitResult fit(const EmbeddingDataset& ds, const TrainConfig& cfg) {
  ds.validate();
  cfg.validate();

  Dims dims = cfg.dims;
  dims.d_in = ds.d_in();
  dims.k_audio = ds.k_audio();
  dims.k_image = ds.k_image();
  dims.num_classes = ds.num_classes;
  dims.validate();

  const std::size_t n = ds.train.rows();
  if (cfg.batch_size > n) {
    throw ParamError("fit: batch_size " + std::to_string(cfg.batch_size) +
                     " exceeds train split size " + std::to_string(n));
  }

  Rng rng(cfg.seed);
  FitResult result;
  result.params = init_params(dims, rng);
  TrainConfig step_cfg = cfg;
  step_cfg.dims = dims;

  std::vector<std::size_t> perm(n);
  std::size_t iter = 0;
  const std::size_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
      std::swap(perm[i], perm[j]);
    }
    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
      const std::size_t lo = step * cfg.batch_size;
      const std::size_t hi = std::min(n, lo + cfg.batch_size);
      std::vector<std::size_t> indices(perm.begin() + static_cast<std::ptrdiff_t>(lo),
                                       perm.begin() + static_cast<std::ptrdiff_t>(hi));
      // A trailing single-row chunk is padded from the permutation head so
      // the batch keeps >= 2 rows.
      if (indices.size() == 1) indices.push_back(perm[0]);
      const Batch batch = gather_batch(ds.train, indices);
      const LossBreakdown breakdown = train_step(result.params, batch, step_cfg);
      result.history.iterations.push_back({iter, epoch, breakdown});
      ++iter;
    }
    const auto t1 = std::chrono::steady_clock::now();
    result.history.epoch_seconds.push_back(std::chrono::duration<double>(t1 - t0).count());

    if (cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0) {
      EvalSnapshot snap;
      snap.iteration = iter;
      snap.epoch = epoch;
      snap.train_top1 = top1_accuracy(result.params, ds.train);
      snap.test_top1 = ds.test.rows() > 0 ? top1_accuracy(result.params, ds.test) : 0.0;
      result.history.evals.push_back(snap);
    }
  }
  return result;
}

void write_history(const TrainHistory& history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write file: " + path.string());
  out << "# ccl-history 1\n";
  std::size_t ei = 0;
  auto flush_evals = [&](std::size_t upto_iter) {
    while (ei < history.evals.size() && history.evals[ei].iteration <= upto_iter) {
      const EvalSnapshot& s = history.evals[ei++];
      out << "eval iter=" << s.iteration << " epoch=" << s.epoch
          << " train_top1=" << format_f64(s.train_top1)
          << " test_top1=" << format_f64(s.test_top1) << "\n";
    }
  };
  for (const IterationRecord& r : history.iterations) {
    flush_evals(r.iteration);
    const LossBreakdown& l = r.losses;
    out << "step iter=" << r.iteration << " epoch=" << r.epoch << " ce_v=" << format_f64(l.ce_v)
        << " ce_av=" << format_f64(l.ce_av) << " ce_iv=" << format_f64(l.ce_iv)
        << " nce_va=" << format_f64(l.nce_va) << " nce_v_av=" << format_f64(l.nce_v_av)
        << " nce_vi=" << format_f64(l.nce_vi) << " nce_v_iv=" << format_f64(l.nce_v_iv)
        << " jsd_av=" << format_f64(l.jsd_av) << " jsd_iv=" << format_f64(l.jsd_iv)
        << " L_cls=" << format_f64(l.cls_total) << " L_distill=" << format_f64(l.distill_total)
        << " L_total=" << format_f64(l.total) << "\n";
  }
  flush_evals(static_cast<std::size_t>(-1));
  if (!out.flush()) throw IoError("write failed: " + path.string());
}

namespace {

// Relative-error denominator floor; keeps finite-difference roundoff at
// near-zero coordinates from reading as spurious error.
constexpr double kGradCheckFloor = 1e-4;

}  // namespace

GradCheckReport grad_check_streams(const ModelParams& params,
                                   const std::vector<GradCheckStream>& streams, double tol,
                                   double step) {
  if (!(step > 0.0)) throw ParamError("grad_check: step must be positive");
  GradCheckReport report;
  ModelParams work = params;

  for (const GradCheckStream& stream : streams) {
    std::vector<Matrix> analytic;
    {
      Graph g;
      const ParamNodes pn = bind_params(g, work);
      const NodeId root = stream.build(g, pn);
      analytic = g.gradients(root, leaves_for(pn, stream.params));
    }
    auto eval_loss = [&]() {
      Graph g;
      const ParamNodes pn = bind_params(g, work);
      return g.scalar(stream.build(g, pn));
    };
    for (std::size_t pi = 0; pi < stream.params.size(); ++pi) {
      Matrix& m = work.param(stream.params[pi]);
      for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) {
          const double orig = m(r, c);
          m(r, c) = orig + step;
          const double f_plus = eval_loss();
          m(r, c) = orig - step;
          const double f_minus = eval_loss();
          m(r, c) = orig;
          const double fd = (f_plus - f_minus) / (2.0 * step);
          const double a = analytic[pi](r, c);
          const double rel =
              std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), kGradCheckFloor});
          ++report.coords_checked;
          if (rel > report.max_rel_err) {
            report.max_rel_err = rel;
            report.worst = {stream.name, param_name(stream.params[pi]), r, c, a, fd, rel};
          }
        }
      }
    }
  }
  report.pass = report.max_rel_err <= tol;
  return report;
}

GradCheckReport grad_check(const ModelParams& params, const Batch& batch, const TrainConfig& cfg,
                           double tol) {
  cfg.loss.validate();
  if (cfg.loss.stop_grad_composed) {
    throw ConfigError("grad_check: the stop-gradient ablation breaks the finite-difference "
                      "contract; check the default configuration instead");
  }
  const Matrix audio_ad = adapt_audio(params, batch.audio_embeddings);
  const Matrix image_ad = adapt_image(params, batch.image_embeddings);
  const LossConfig loss_cfg = cfg.loss;
  const std::vector<std::uint32_t> labels = batch.labels;
  const Matrix video = batch.video_inputs;

  auto build_nodes = [video, audio_ad, image_ad, labels, loss_cfg](Graph& g,
                                                                   const ParamNodes& pn) {
    const NodeId v = g.constant(video);
    const NodeId a = g.constant(audio_ad);
    const NodeId i = g.constant(image_ad);
    const ForwardNodes f = forward_nodes(g, pn, v, a, i, false);
    return ccl_total_nodes(g, f, a, i, labels, loss_cfg);
  };

  std::vector<GradCheckStream> streams;
  streams.push_back({"ccl_total", params.trainable(),
                     [build_nodes](Graph& g, const ParamNodes& pn) {
                       return build_nodes(g, pn).total;
                     }});
  streams.push_back({"student_stream", student_stream_params(params),
                     [build_nodes](Graph& g, const ParamNodes& pn) {
                       return build_nodes(g, pn).student_objective;
                     }});
  if (cfg.loss.audio_head_active()) {
    streams.push_back({"audio_head_stream", audio_head_params(params),
                       [build_nodes](Graph& g, const ParamNodes& pn) {
                         return build_nodes(g, pn).audio_head_objective;
                       }});
  }
  if (cfg.loss.image_head_active()) {
    streams.push_back({"image_head_stream", image_head_params(params),
                       [build_nodes](Graph& g, const ParamNodes& pn) {
                         return build_nodes(g, pn).image_head_objective;
                       }});
  }
  return grad_check_streams(params, streams, tol);
}

}  // namespace ccl
