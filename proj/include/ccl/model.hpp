#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ccl/graph.hpp"
#include "ccl/matrix.hpp"
#include "ccl/rng.hpp"

namespace ccl {

struct Dims {
  std::size_t d_in = 32;
  std::size_t d_latent = 64;
  std::size_t k_audio = 64;
  std::size_t k_image = 64;
  std::uint32_t num_classes = 16;
  // When set, frozen linear adapters map the teacher embeddings to d_latent;
  // otherwise k_audio == k_image == d_latent is required.
  bool use_projections = false;
  // One classifier shared by x_v, x_av and x_iv (the default), or separate
  // heads per composition branch.
  bool shared_classifier = true;

  void validate() const;
  // Teacher embedding width seen by the composition heads and the classifier.
  std::size_t teacher_dim() const { return use_projections ? d_latent : k_audio; }
};

// Trainable parameter matrices, listed for generic iteration (SGD update,
// gradient checking, checkpoints).
enum class ParamId : std::uint8_t {
  kStudentW1,
  kStudentB1,
  kStudentW2,
  kStudentB2,
  kClassifierW,
  kClassifierB,
  kCompAudioW,
  kCompAudioB,
  kCompImageW,
  kCompImageB,
  kClassifierAvW,
  kClassifierAvB,
  kClassifierIvW,
  kClassifierIvB,
};

const char* param_name(ParamId id);

struct ModelParams {
  Dims dims;

  // student encoder: affine -> tanh -> affine, hidden width d_latent
  Matrix student_w1, student_b1;
  Matrix student_w2, student_b2;
  // shared classifier
  Matrix classifier_w, classifier_b;
  // residual composition heads, (teacher_dim + d_latent) -> teacher_dim
  Matrix comp_audio_w, comp_audio_b;
  Matrix comp_image_w, comp_image_b;
  // per-branch classifiers, present only when !dims.shared_classifier
  Matrix classifier_av_w, classifier_av_b;
  Matrix classifier_iv_w, classifier_iv_b;
  // frozen teacher adapters, present only when dims.use_projections
  Matrix proj_audio, proj_image;

  Matrix& param(ParamId id);
  const Matrix& param(ParamId id) const;
  // Every trainable parameter for this configuration (adapters excluded).
  std::vector<ParamId> trainable() const;
};

// Student and classifier weights are seeded scaled normals; composition head
// output layers start at zero so that x_av == x_a and x_iv == x_i exactly.
ModelParams init_params(const Dims& dims, Rng& rng);

// Teacher adaptation (frozen): identity without projections, otherwise a
// linear map into the latent space. Never differentiated.
Matrix adapt_audio(const ModelParams& params, const Matrix& audio_embeddings);
Matrix adapt_image(const ModelParams& params, const Matrix& image_embeddings);

Matrix student_forward(const ModelParams& params, const Matrix& video_inputs);
// teacher_emb + affine(concat(l2n(teacher_emb), l2n(student_emb))) with the
// given head; `head` selects comp_audio (true) or comp_image (false).
Matrix compose(const ModelParams& params, bool audio_head, const Matrix& teacher_emb,
               const Matrix& student_emb);
// Softmax of the shared classifier's affine logits.
Matrix classify(const ModelParams& params, const Matrix& features);

struct ForwardOutputs {
  Matrix x_v;
  Matrix x_av;
  Matrix x_iv;
  Matrix p_v;
  Matrix p_av;
  Matrix p_iv;
};

// Graph-side counterparts used by the losses and the trainer.
struct ParamNodes {
  NodeId student_w1, student_b1, student_w2, student_b2;
  NodeId classifier_w, classifier_b;
  NodeId comp_audio_w, comp_audio_b;
  NodeId comp_image_w, comp_image_b;
  NodeId classifier_av_w, classifier_av_b;
  NodeId classifier_iv_w, classifier_iv_b;
  bool has_branch_classifiers = false;
};

ParamNodes bind_params(Graph& g, const ModelParams& params);
NodeId param_node(const ParamNodes& nodes, ParamId id);

NodeId student_forward_node(Graph& g, const ParamNodes& p, NodeId video_inputs);
NodeId compose_node(Graph& g, NodeId head_w, NodeId head_b, NodeId teacher_emb,
                    NodeId student_emb);
NodeId classify_node(Graph& g, NodeId w, NodeId b, NodeId features);

struct ForwardNodes {
  NodeId x_v, x_av, x_iv;
  NodeId p_v, p_av, p_iv;
};

// Full forward pass over already-adapted teacher embeddings. When
// stop_grad_composed is set the composition inputs see a detached student
// embedding, cutting the student gradient path through x_av / x_iv.
ForwardNodes forward_nodes(Graph& g, const ParamNodes& p, NodeId video_inputs,
                           NodeId audio_adapted, NodeId image_adapted,
                           bool stop_grad_composed = false);

// Plain-value forward pass (teachers adapted internally).
ForwardOutputs forward_outputs(const ModelParams& params, const Matrix& video_inputs,
                               const Matrix& audio_embeddings, const Matrix& image_embeddings);

// Checkpoints use the dataset blob convention: a manifest plus one
// single-precision blob per parameter matrix.
std::filesystem::path save_checkpoint(const ModelParams& params, const std::filesystem::path& dir);
ModelParams load_checkpoint(const std::filesystem::path& manifest_or_dir);

}  // namespace ccl
