#include "ccl/model.hpp"

#include <cmath>
#include <string>

#include "ccl/blobio.hpp"
#include "ccl/errors.hpp"
#include "ccl/kvtext.hpp"

namespace ccl {

namespace {

constexpr const char* kCheckpointName = "checkpoint.manifest";
constexpr const char* kCheckpointFormat = "ccl-checkpoint";
constexpr std::uint64_t kCheckpointFormatVersion = 1;

Matrix scaled_normal(std::size_t rows, std::size_t cols, Rng& rng) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(rows));
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.gaussian() * scale;
  return m;
}

}  // namespace

void Dims::validate() const {
  if (d_in < 1 || d_latent < 1 || k_audio < 1 || k_image < 1 || num_classes < 1) {
    throw ConfigError("dims: all dimensions must be positive");
  }
  if (!use_projections && (k_audio != d_latent || k_image != d_latent)) {
    throw ConfigError("dims: teacher dims must equal d_latent unless projection heads are "
                      "enabled (k_audio=" +
                      std::to_string(k_audio) + ", k_image=" + std::to_string(k_image) +
                      ", d_latent=" + std::to_string(d_latent) + ")");
  }
}

const char* param_name(ParamId id) {
  switch (id) {
    case ParamId::kStudentW1: return "student_w1";
    case ParamId::kStudentB1: return "student_b1";
    case ParamId::kStudentW2: return "student_w2";
    case ParamId::kStudentB2: return "student_b2";
    case ParamId::kClassifierW: return "classifier_w";
    case ParamId::kClassifierB: return "classifier_b";
    case ParamId::kCompAudioW: return "comp_audio_w";
    case ParamId::kCompAudioB: return "comp_audio_b";
    case ParamId::kCompImageW: return "comp_image_w";
    case ParamId::kCompImageB: return "comp_image_b";
    case ParamId::kClassifierAvW: return "classifier_av_w";
    case ParamId::kClassifierAvB: return "classifier_av_b";
    case ParamId::kClassifierIvW: return "classifier_iv_w";
    case ParamId::kClassifierIvB: return "classifier_iv_b";
  }
  return "unknown";
}

Matrix& ModelParams::param(ParamId id) {
  switch (id) {
    case ParamId::kStudentW1: return student_w1;
    case ParamId::kStudentB1: return student_b1;
    case ParamId::kStudentW2: return student_w2;
    case ParamId::kStudentB2: return student_b2;
    case ParamId::kClassifierW: return classifier_w;
    case ParamId::kClassifierB: return classifier_b;
    case ParamId::kCompAudioW: return comp_audio_w;
    case ParamId::kCompAudioB: return comp_audio_b;
    case ParamId::kCompImageW: return comp_image_w;
    case ParamId::kCompImageB: return comp_image_b;
    case ParamId::kClassifierAvW: return classifier_av_w;
    case ParamId::kClassifierAvB: return classifier_av_b;
    case ParamId::kClassifierIvW: return classifier_iv_w;
    case ParamId::kClassifierIvB: return classifier_iv_b;
  }
  throw ParamError("unknown ParamId");
}

const Matrix& ModelParams::param(ParamId id) const {
  return const_cast<ModelParams*>(this)->param(id);
}

std::vector<ParamId> ModelParams::trainable() const {
  std::vector<ParamId> ids = {
      ParamId::kStudentW1,   ParamId::kStudentB1,   ParamId::kStudentW2, ParamId::kStudentB2,
      ParamId::kClassifierW, ParamId::kClassifierB, ParamId::kCompAudioW, ParamId::kCompAudioB,
      ParamId::kCompImageW,  ParamId::kCompImageB,
  };
  if (!dims.shared_classifier) {
    ids.insert(ids.end(), {ParamId::kClassifierAvW, ParamId::kClassifierAvB,
                           ParamId::kClassifierIvW, ParamId::kClassifierIvB});
  }
  return ids;
}

ModelParams init_params(const Dims& dims, Rng& rng) {
  dims.validate();
  ModelParams p;
  p.dims = dims;
  const std::size_t kt = dims.teacher_dim();

  p.student_w1 = scaled_normal(dims.d_in, dims.d_latent, rng);
  p.student_b1 = Matrix(1, dims.d_latent);
  p.student_w2 = scaled_normal(dims.d_latent, dims.d_latent, rng);
  p.student_b2 = Matrix(1, dims.d_latent);
  p.classifier_w = scaled_normal(dims.d_latent, dims.num_classes, rng);
  p.classifier_b = Matrix(1, dims.num_classes);
  // Zero residual output layers make the compositions exact identities at
  // initialization: x_av == x_a, x_iv == x_i.
  p.comp_audio_w = Matrix(kt + dims.d_latent, kt);
  p.comp_audio_b = Matrix(1, kt);
  p.comp_image_w = Matrix(kt + dims.d_latent, kt);
  p.comp_image_b = Matrix(1, kt);
  if (!dims.shared_classifier) {
    p.classifier_av_w = scaled_normal(kt, dims.num_classes, rng);
    p.classifier_av_b = Matrix(1, dims.num_classes);
    p.classifier_iv_w = scaled_normal(kt, dims.num_classes, rng);
    p.classifier_iv_b = Matrix(1, dims.num_classes);
  }
  if (dims.use_projections) {
    p.proj_audio = scaled_normal(dims.k_audio, dims.d_latent, rng);
    p.proj_image = scaled_normal(dims.k_image, dims.d_latent, rng);
  }
  return p;
}

Matrix adapt_audio(const ModelParams& params, const Matrix& audio_embeddings) {
  return params.dims.use_projections ? matmul(audio_embeddings, params.proj_audio)
                                     : audio_embeddings;
}

Matrix adapt_image(const ModelParams& params, const Matrix& image_embeddings) {
  return params.dims.use_projections ? matmul(image_embeddings, params.proj_image)
                                     : image_embeddings;
}

Matrix student_forward(const ModelParams& params, const Matrix& video_inputs) {
  const Matrix hidden = tanh_elem(affine(video_inputs, params.student_w1, params.student_b1));
  return affine(hidden, params.student_w2, params.student_b2);
}

Matrix compose(const ModelParams& params, bool audio_head, const Matrix& teacher_emb,
               const Matrix& student_emb) {
  const Matrix& w = audio_head ? params.comp_audio_w : params.comp_image_w;
  const Matrix& b = audio_head ? params.comp_audio_b : params.comp_image_b;
  const Matrix cat = concat_cols(l2_normalize_rows(teacher_emb), l2_normalize_rows(student_emb));
  return add(teacher_emb, affine(cat, w, b));
}

Matrix classify(const ModelParams& params, const Matrix& features) {
  return row_softmax(affine(features, params.classifier_w, params.classifier_b), 1.0);
}

ParamNodes bind_params(Graph& g, const ModelParams& p) {
  ParamNodes n;
  n.student_w1 = g.leaf(p.student_w1);
  n.student_b1 = g.leaf(p.student_b1);
  n.student_w2 = g.leaf(p.student_w2);
  n.student_b2 = g.leaf(p.student_b2);
  n.classifier_w = g.leaf(p.classifier_w);
  n.classifier_b = g.leaf(p.classifier_b);
  n.comp_audio_w = g.leaf(p.comp_audio_w);
  n.comp_audio_b = g.leaf(p.comp_audio_b);
  n.comp_image_w = g.leaf(p.comp_image_w);
  n.comp_image_b = g.leaf(p.comp_image_b);
  n.has_branch_classifiers = !p.dims.shared_classifier;
  if (n.has_branch_classifiers) {
    n.classifier_av_w = g.leaf(p.classifier_av_w);
    n.classifier_av_b = g.leaf(p.classifier_av_b);
    n.classifier_iv_w = g.leaf(p.classifier_iv_w);
    n.classifier_iv_b = g.leaf(p.classifier_iv_b);
  }
  return n;
}

NodeId param_node(const ParamNodes& n, ParamId id) {
  switch (id) {
    case ParamId::kStudentW1: return n.student_w1;
    case ParamId::kStudentB1: return n.student_b1;
    case ParamId::kStudentW2: return n.student_w2;
    case ParamId::kStudentB2: return n.student_b2;
    case ParamId::kClassifierW: return n.classifier_w;
    case ParamId::kClassifierB: return n.classifier_b;
    case ParamId::kCompAudioW: return n.comp_audio_w;
    case ParamId::kCompAudioB: return n.comp_audio_b;
    case ParamId::kCompImageW: return n.comp_image_w;
    case ParamId::kCompImageB: return n.comp_image_b;
    case ParamId::kClassifierAvW: return n.classifier_av_w;
    case ParamId::kClassifierAvB: return n.classifier_av_b;
    case ParamId::kClassifierIvW: return n.classifier_iv_w;
    case ParamId::kClassifierIvB: return n.classifier_iv_b;
  }
  throw ParamError("unknown ParamId");
}

NodeId student_forward_node(Graph& g, const ParamNodes& p, NodeId video_inputs) {
  const NodeId hidden =
      g.tanh(g.add_row(g.matmul(video_inputs, p.student_w1), p.student_b1));
  return g.add_row(g.matmul(hidden, p.student_w2), p.student_b2);
}

NodeId compose_node(Graph& g, NodeId head_w, NodeId head_b, NodeId teacher_emb,
                    NodeId student_emb) {
  const NodeId cat =
      g.concat_cols(g.l2_normalize_rows(teacher_emb), g.l2_normalize_rows(student_emb));
  return g.add(teacher_emb, g.add_row(g.matmul(cat, head_w), head_b));
}

NodeId classify_node(Graph& g, NodeId w, NodeId b, NodeId features) {
  return g.row_softmax(g.add_row(g.matmul(features, w), b), 1.0);
}

ForwardNodes forward_nodes(Graph& g, const ParamNodes& p, NodeId video_inputs,
                           NodeId audio_adapted, NodeId image_adapted, bool stop_grad_composed) {
  ForwardNodes f;
  f.x_v = student_forward_node(g, p, video_inputs);
  const NodeId student_for_compose = stop_grad_composed ? g.stop_gradient(f.x_v) : f.x_v;
  f.x_av = compose_node(g, p.comp_audio_w, p.comp_audio_b, audio_adapted, student_for_compose);
  f.x_iv = compose_node(g, p.comp_image_w, p.comp_image_b, image_adapted, student_for_compose);
  f.p_v = classify_node(g, p.classifier_w, p.classifier_b, f.x_v);
  if (p.has_branch_classifiers) {
    f.p_av = classify_node(g, p.classifier_av_w, p.classifier_av_b, f.x_av);
    f.p_iv = classify_node(g, p.classifier_iv_w, p.classifier_iv_b, f.x_iv);
  } else {
    f.p_av = classify_node(g, p.classifier_w, p.classifier_b, f.x_av);
    f.p_iv = classify_node(g, p.classifier_w, p.classifier_b, f.x_iv);
  }
  return f;
}

ForwardOutputs forward_outputs(const ModelParams& params, const Matrix& video_inputs,
                               const Matrix& audio_embeddings, const Matrix& image_embeddings) {
  Graph g;
  const ParamNodes p = bind_params(g, params);
  const NodeId video = g.constant(video_inputs);
  const NodeId audio = g.constant(adapt_audio(params, audio_embeddings));
  const NodeId image = g.constant(adapt_image(params, image_embeddings));
  const ForwardNodes f = forward_nodes(g, p, video, audio, image);
  return ForwardOutputs{g.value(f.x_v),  g.value(f.x_av), g.value(f.x_iv),
                        g.value(f.p_v),  g.value(f.p_av), g.value(f.p_iv)};
}

// ---- checkpoints ----

namespace {

struct NamedMatrix {
  const char* name;
  const Matrix* m;
};

std::vector<NamedMatrix> checkpoint_tables(const ModelParams& p) {
  std::vector<NamedMatrix> tables;
  for (ParamId id : p.trainable()) tables.push_back({param_name(id), &p.param(id)});
  if (p.dims.use_projections) {
    tables.push_back({"proj_audio", &p.proj_audio});
    tables.push_back({"proj_image", &p.proj_image});
  }
  return tables;
}

}  // namespace

std::filesystem::path save_checkpoint(const ModelParams& params,
                                      const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());

  KvMap manifest;
  manifest.set("format", kCheckpointFormat);
  manifest.set_u64("format_version", kCheckpointFormatVersion);
  manifest.set_u64("dims.d_in", params.dims.d_in);
  manifest.set_u64("dims.d_latent", params.dims.d_latent);
  manifest.set_u64("dims.k_audio", params.dims.k_audio);
  manifest.set_u64("dims.k_image", params.dims.k_image);
  manifest.set_u64("dims.num_classes", params.dims.num_classes);
  manifest.set_bool("dims.use_projections", params.dims.use_projections);
  manifest.set_bool("dims.shared_classifier", params.dims.shared_classifier);
  for (const auto& [name, m] : checkpoint_tables(params)) {
    const std::string filename = std::string(name) + ".f32";
    write_float_blob(dir / filename, *m);
    manifest.set(std::string(name) + ".path", filename);
    manifest.set_u64(std::string(name) + ".rows", m->rows());
    manifest.set_u64(std::string(name) + ".cols", m->cols());
    manifest.set(std::string(name) + ".fnv1a64", blob_payload_hash(dir / filename));
  }
  const std::filesystem::path manifest_path = dir / kCheckpointName;
  write_kv_file(manifest_path, manifest);
  return manifest_path;
}

ModelParams load_checkpoint(const std::filesystem::path& manifest_or_dir) {
  std::filesystem::path manifest_path = manifest_or_dir;
  if (std::filesystem::is_directory(manifest_path)) manifest_path /= kCheckpointName;
  if (!std::filesystem::exists(manifest_path)) {
    throw IoError("missing checkpoint manifest: " + manifest_path.string());
  }
  const KvMap manifest = read_kv_file(manifest_path);
  if (manifest.get("format") != kCheckpointFormat) {
    throw FormatError("not a checkpoint manifest: " + manifest_path.string());
  }
  if (manifest.get_u64("format_version") != kCheckpointFormatVersion) {
    throw FormatError("unsupported checkpoint format_version " +
                      manifest.get("format_version"));
  }
  const std::filesystem::path dir = manifest_path.parent_path();

  ModelParams p;
  p.dims.d_in = manifest.get_u64("dims.d_in");
  p.dims.d_latent = manifest.get_u64("dims.d_latent");
  p.dims.k_audio = manifest.get_u64("dims.k_audio");
  p.dims.k_image = manifest.get_u64("dims.k_image");
  p.dims.num_classes = static_cast<std::uint32_t>(manifest.get_u64("dims.num_classes"));
  p.dims.use_projections = manifest.get_bool("dims.use_projections");
  p.dims.shared_classifier = manifest.get_bool("dims.shared_classifier");
  p.dims.validate();

  auto read_one = [&](const std::string& name) {
    const std::filesystem::path path = dir / manifest.get(name + ".path");
    Matrix m = read_float_blob(path, manifest.get_u64(name + ".rows"),
                               manifest.get_u64(name + ".cols"));
    if (blob_payload_hash(path) != manifest.get(name + ".fnv1a64")) {
      throw FormatError("checksum mismatch for blob " + path.string());
    }
    return m;
  };
  for (ParamId id : p.trainable()) p.param(id) = read_one(param_name(id));
  if (p.dims.use_projections) {
    p.proj_audio = read_one("proj_audio");
    p.proj_image = read_one("proj_image");
  }
  return p;
}

}  // namespace ccl
