#include "ccl/cli.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "ccl/dataio.hpp"
#include "ccl/errors.hpp"
#include "ccl/eval.hpp"
#include "ccl/kvtext.hpp"
#include "ccl/model.hpp"
#include "ccl/trainer.hpp"

namespace ccl::cli {

namespace {

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---- config layering: defaults -> config file -> command-line flags ----
// Within one layer the order is mode, then variant, then explicit keys, so
// named bundles never clobber an explicitly set toggle.

void apply_mode(LossConfig& loss, const std::string& mode) {
  if (mode == "A") {
    loss.use_audio_branch = true;
    loss.use_image_branch = false;
  } else if (mode == "I") {
    loss.use_audio_branch = false;
    loss.use_image_branch = true;
  } else if (mode == "AI") {
    loss.use_audio_branch = true;
    loss.use_image_branch = true;
  } else {
    throw ConfigError("unknown mode '" + mode + "' (expected A, I or AI)");
  }
}

void apply_variant(LossConfig& loss, const std::string& variant) {
  loss.use_composition = true;
  loss.use_feature_loss = true;
  loss.use_nce = true;
  loss.use_jsd = true;
  if (variant == "ccl") {
  } else if (variant == "baseline") {
    loss.use_audio_branch = false;
    loss.use_image_branch = false;
  } else if (variant == "no-composition") {
    loss.use_composition = false;
  } else if (variant == "infonce") {
    loss.use_nce = false;
  } else if (variant == "no-nce") {
    loss.use_feature_loss = false;
  } else if (variant == "no-jsd") {
    loss.use_jsd = false;
  } else {
    throw ConfigError("unknown variant '" + variant + "'");
  }
}

const std::vector<std::string>& all_variants() {
  static const std::vector<std::string> v = {"baseline", "ccl",    "no-composition",
                                             "infonce",  "no-nce", "no-jsd"};
  return v;
}

void apply_train_kv(TrainConfig& cfg, const KvMap& kv) {
  if (auto v = kv.find("mode")) apply_mode(cfg.loss, *v);
  if (auto v = kv.find("variant")) apply_variant(cfg.loss, *v);
  struct {
    const char* key;
    std::function<void(const KvMap&, const std::string&)> set;
  } keys[] = {
      {"epochs", [&](const KvMap& m, const std::string& k) { cfg.epochs = m.get_u64(k); }},
      {"batch_size", [&](const KvMap& m, const std::string& k) { cfg.batch_size = m.get_u64(k); }},
      {"learning_rate",
       [&](const KvMap& m, const std::string& k) { cfg.learning_rate = m.get_f64(k); }},
      {"weight_decay",
       [&](const KvMap& m, const std::string& k) { cfg.weight_decay = m.get_f64(k); }},
      {"seed", [&](const KvMap& m, const std::string& k) { cfg.seed = m.get_u64(k); }},
      {"eval_every", [&](const KvMap& m, const std::string& k) { cfg.eval_every = m.get_u64(k); }},
      {"d_latent", [&](const KvMap& m, const std::string& k) { cfg.dims.d_latent = m.get_u64(k); }},
      {"use_projections",
       [&](const KvMap& m, const std::string& k) { cfg.dims.use_projections = m.get_bool(k); }},
      {"shared_classifier",
       [&](const KvMap& m, const std::string& k) { cfg.dims.shared_classifier = m.get_bool(k); }},
      {"tau_audio", [&](const KvMap& m, const std::string& k) { cfg.loss.tau_audio = m.get_f64(k); }},
      {"tau_image", [&](const KvMap& m, const std::string& k) { cfg.loss.tau_image = m.get_f64(k); }},
      {"lambda", [&](const KvMap& m, const std::string& k) { cfg.loss.lambda = m.get_f64(k); }},
      {"lambda_cls",
       [&](const KvMap& m, const std::string& k) { cfg.loss.lambda_cls = m.get_f64(k); }},
      {"use_composition",
       [&](const KvMap& m, const std::string& k) { cfg.loss.use_composition = m.get_bool(k); }},
      {"use_feature_loss",
       [&](const KvMap& m, const std::string& k) { cfg.loss.use_feature_loss = m.get_bool(k); }},
      {"use_nce", [&](const KvMap& m, const std::string& k) { cfg.loss.use_nce = m.get_bool(k); }},
      {"use_jsd", [&](const KvMap& m, const std::string& k) { cfg.loss.use_jsd = m.get_bool(k); }},
      {"use_audio_branch",
       [&](const KvMap& m, const std::string& k) { cfg.loss.use_audio_branch = m.get_bool(k); }},
      {"use_image_branch",
       [&](const KvMap& m, const std::string& k) { cfg.loss.use_image_branch = m.get_bool(k); }},
      {"stop_grad_composed",
       [&](const KvMap& m, const std::string& k) { cfg.loss.stop_grad_composed = m.get_bool(k); }},
  };
  for (const auto& entry : keys) {
    if (kv.contains(entry.key)) entry.set(kv, entry.key);
  }
  for (const auto& [k, v] : kv.entries()) {
    if (k == "mode" || k == "variant") continue;
    bool known = false;
    for (const auto& entry : keys) known = known || k == entry.key;
    if (!known) throw ConfigError("unknown config key '" + k + "'");
  }
}

KvMap train_config_to_kv(const TrainConfig& cfg) {
  KvMap kv;
  kv.set_u64("epochs", cfg.epochs);
  kv.set_u64("batch_size", cfg.batch_size);
  kv.set_f64("learning_rate", cfg.learning_rate);
  kv.set_f64("weight_decay", cfg.weight_decay);
  kv.set_u64("seed", cfg.seed);
  kv.set_u64("eval_every", cfg.eval_every);
  kv.set_u64("d_latent", cfg.dims.d_latent);
  kv.set_bool("use_projections", cfg.dims.use_projections);
  kv.set_bool("shared_classifier", cfg.dims.shared_classifier);
  kv.set_f64("tau_audio", cfg.loss.tau_audio);
  kv.set_f64("tau_image", cfg.loss.tau_image);
  kv.set_f64("lambda", cfg.loss.lambda);
  kv.set_f64("lambda_cls", cfg.loss.lambda_cls);
  kv.set_bool("use_composition", cfg.loss.use_composition);
  kv.set_bool("use_feature_loss", cfg.loss.use_feature_loss);
  kv.set_bool("use_nce", cfg.loss.use_nce);
  kv.set_bool("use_jsd", cfg.loss.use_jsd);
  kv.set_bool("use_audio_branch", cfg.loss.use_audio_branch);
  kv.set_bool("use_image_branch", cfg.loss.use_image_branch);
  kv.set_bool("stop_grad_composed", cfg.loss.stop_grad_composed);
  return kv;
}

KvMap synthetic_config_to_kv(const SyntheticConfig& cfg) {
  KvMap kv;
  kv.set_u64("num_classes", cfg.num_classes);
  kv.set_u64("train_per_class", cfg.train_per_class);
  kv.set_u64("test_per_class", cfg.test_per_class);
  kv.set_u64("d_in", cfg.d_in);
  kv.set_u64("k_audio", cfg.k_audio);
  kv.set_u64("k_image", cfg.k_image);
  kv.set_u64("d_semantic", cfg.d_semantic);
  kv.set_f64("f_high", cfg.f_high);
  kv.set_f64("f_weak", cfg.f_weak);
  kv.set_f64("f_none", cfg.f_none);
  kv.set_f64("alpha", cfg.alpha);
  kv.set_f64("noise_sigma", cfg.noise_sigma);
  kv.set_u64("distractor_pool", cfg.distractor_pool);
  kv.set_u64("seed", cfg.seed);
  return kv;
}

void write_run_record(const std::filesystem::path& dir, const std::string& command,
                      const std::vector<std::string>& args, const KvMap& resolved_config) {
  KvMap record;
  record.set("format", "ccl-run-record");
  record.set_u64("format_version", 1);
  record.set("command", command);
  std::string argv_joined;
  for (const auto& a : args) {
    if (!argv_joined.empty()) argv_joined += ' ';
    argv_joined += a;
  }
  record.set("argv", argv_joined);
  record.set("timestamp_utc", utc_timestamp());
  record.set_u64("dataset_format_version", 1);
  record.set_u64("checkpoint_format_version", 1);
  for (const auto& [k, v] : resolved_config.entries()) record.set("config." + k, v);
  write_kv_file(dir / "run_record.txt", record);
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

int default_threads() {
  if (const char* env = std::getenv("CCL_THREADS")) {
    if (auto v = parse_u64(env); v && *v >= 1) return static_cast<int>(*v);
    throw ConfigError("CCL_THREADS must be a positive integer");
  }
  return 1;
}

// Adds the train-config options to a subcommand; returns a filler that turns
// the parsed flags into a KvMap override layer.
std::function<KvMap()> add_train_options(CLI::App* cmd) {
  struct Bound {
    std::uint64_t epochs = 0, batch_size = 0, seed = 0, eval_every = 0, d_latent = 0;
    double lr = 0, wd = 0, tau_audio = 0, tau_image = 0, lambda = 0, lambda_cls = 0;
    bool use_projections = false, separate_classifiers = false, stop_grad = false;
    std::string mode, variant;
  };
  auto bound = std::make_shared<Bound>();
  CLI::Option* o_epochs = cmd->add_option("--epochs", bound->epochs, "Training epochs");
  CLI::Option* o_bs = cmd->add_option("--batch-size", bound->batch_size, "Mini-batch size");
  CLI::Option* o_lr = cmd->add_option("--lr", bound->lr, "SGD learning rate");
  CLI::Option* o_wd = cmd->add_option("--weight-decay", bound->wd, "SGD weight decay");
  CLI::Option* o_seed = cmd->add_option("--seed", bound->seed, "Run seed");
  CLI::Option* o_eval = cmd->add_option("--eval-every", bound->eval_every,
                                        "Epochs between metric snapshots (0 = off)");
  CLI::Option* o_dlat = cmd->add_option("--d-latent", bound->d_latent, "Latent dimension");
  CLI::Option* o_proj =
      cmd->add_flag("--use-projections", bound->use_projections,
                    "Frozen linear adapters mapping teacher embeddings to d_latent");
  CLI::Option* o_sep = cmd->add_flag("--separate-classifiers", bound->separate_classifiers,
                                     "Per-branch classifiers instead of the shared one");
  CLI::Option* o_ta = cmd->add_option("--tau-audio", bound->tau_audio, "Audio temperature");
  CLI::Option* o_ti = cmd->add_option("--tau-image", bound->tau_image, "Image temperature");
  CLI::Option* o_lam = cmd->add_option("--lambda", bound->lambda, "Direct-vs-composed NCE weight");
  CLI::Option* o_lc = cmd->add_option("--lambda-cls", bound->lambda_cls,
                                      "Classification loss weight");
  CLI::Option* o_mode = cmd->add_option("--mode", bound->mode, "Distilled modalities: A, I or AI");
  CLI::Option* o_var = cmd->add_option("--variant", bound->variant,
                                       "baseline | ccl | no-composition | infonce | no-nce | "
                                       "no-jsd");
  CLI::Option* o_sg = cmd->add_flag("--stop-grad-composed", bound->stop_grad,
                                    "Detach the student inside the composition (ablation)");

  return [=]() {
    KvMap kv;
    if (*o_mode) kv.set("mode", bound->mode);
    if (*o_var) kv.set("variant", bound->variant);
    if (*o_epochs) kv.set_u64("epochs", bound->epochs);
    if (*o_bs) kv.set_u64("batch_size", bound->batch_size);
    if (*o_lr) kv.set_f64("learning_rate", bound->lr);
    if (*o_wd) kv.set_f64("weight_decay", bound->wd);
    if (*o_seed) kv.set_u64("seed", bound->seed);
    if (*o_eval) kv.set_u64("eval_every", bound->eval_every);
    if (*o_dlat) kv.set_u64("d_latent", bound->d_latent);
    if (*o_proj) kv.set_bool("use_projections", bound->use_projections);
    if (*o_sep) kv.set_bool("shared_classifier", !bound->separate_classifiers);
    if (*o_ta) kv.set_f64("tau_audio", bound->tau_audio);
    if (*o_ti) kv.set_f64("tau_image", bound->tau_image);
    if (*o_lam) kv.set_f64("lambda", bound->lambda);
    if (*o_lc) kv.set_f64("lambda_cls", bound->lambda_cls);
    if (*o_sg) kv.set_bool("stop_grad_composed", bound->stop_grad);
    return kv;
  };
}

TrainConfig resolve_train_config(const std::string& config_file, const KvMap& flag_overrides) {
  TrainConfig cfg;
  if (!config_file.empty()) apply_train_kv(cfg, read_kv_file(config_file));
  apply_train_kv(cfg, flag_overrides);
  cfg.validate();
  return cfg;
}

std::function<SyntheticConfig()> add_synthetic_options(CLI::App* cmd) {
  struct Bound {
    std::string preset;
    std::uint64_t classes = 0, train_pc = 0, test_pc = 0, d_in = 0, k_audio = 0, k_image = 0,
                  d_sem = 0, pool = 0, seed = 0;
    double f_high = 0, f_weak = 0, f_none = 0, alpha = 0, sigma = 0;
  };
  auto bound = std::make_shared<Bound>();
  CLI::Option* o_preset =
      cmd->add_option("--preset", bound->preset, "Named preset (ucf51-gap)");
  CLI::Option* o_classes = cmd->add_option("--classes", bound->classes, "Number of classes");
  CLI::Option* o_train = cmd->add_option("--train-per-class", bound->train_pc, "Train rows per class");
  CLI::Option* o_test = cmd->add_option("--test-per-class", bound->test_pc, "Test rows per class");
  CLI::Option* o_din = cmd->add_option("--d-in", bound->d_in, "Video input dimension");
  CLI::Option* o_ka = cmd->add_option("--k-audio", bound->k_audio, "Audio embedding dimension");
  CLI::Option* o_ki = cmd->add_option("--k-image", bound->k_image, "Image embedding dimension");
  CLI::Option* o_dz = cmd->add_option("--d-semantic", bound->d_sem, "Semantic dimension");
  CLI::Option* o_fh = cmd->add_option("--f-high", bound->f_high, "Fraction of highly correlated classes");
  CLI::Option* o_fw = cmd->add_option("--f-weak", bound->f_weak, "Fraction of weakly correlated classes");
  CLI::Option* o_fn = cmd->add_option("--f-none", bound->f_none, "Fraction of uncorrelated classes");
  CLI::Option* o_alpha = cmd->add_option("--alpha", bound->alpha, "Weak-regime blend weight");
  CLI::Option* o_sigma = cmd->add_option("--sigma", bound->sigma, "Noise scale");
  CLI::Option* o_pool = cmd->add_option("--pool", bound->pool, "Distractor pool size");
  CLI::Option* o_seed = cmd->add_option("--gen-seed,--data-seed", bound->seed, "Generator seed");

  return [=]() {
    SyntheticConfig cfg = bound->preset.empty() ? SyntheticConfig{} : synthetic_preset(bound->preset);
    if (*o_classes) cfg.num_classes = static_cast<std::uint32_t>(bound->classes);
    if (*o_train) cfg.train_per_class = bound->train_pc;
    if (*o_test) cfg.test_per_class = bound->test_pc;
    if (*o_din) cfg.d_in = bound->d_in;
    if (*o_ka) cfg.k_audio = bound->k_audio;
    if (*o_ki) cfg.k_image = bound->k_image;
    if (*o_dz) cfg.d_semantic = bound->d_sem;
    if (*o_fh) cfg.f_high = bound->f_high;
    if (*o_fw) cfg.f_weak = bound->f_weak;
    if (*o_fn) cfg.f_none = bound->f_none;
    if (*o_alpha) cfg.alpha = bound->alpha;
    if (*o_sigma) cfg.noise_sigma = bound->sigma;
    if (*o_pool) cfg.distractor_pool = bound->pool;
    if (*o_seed) cfg.seed = bound->seed;
    (void)o_preset;
    return cfg;
  };
}

void write_eval_report(const std::filesystem::path& path, double top1,
                       const RetrievalReport& report, const std::vector<double>& class_acc) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write file: " + path.string());
  out << "# ccl-eval 1\n";
  out << "top1 split=test value=" << format_f64(top1) << "\n";
  for (const auto& [k, r] : report.recall_at) {
    out << "recall k=" << k << " value=" << format_f64(r) << "\n";
  }
  for (std::size_t c = 0; c < class_acc.size(); ++c) {
    out << "class_top1 class=" << c << " value=" << format_f64(class_acc[c]) << "\n";
  }
  out << "counts queries=" << report.num_queries << " targets=" << report.num_targets << "\n";
  for (const std::string& w : report.warnings) out << "warning text=" << w << "\n";
  if (!out.flush()) throw IoError("write failed: " + path.string());
}

struct CellResult {
  std::string variant, mode;
  std::uint64_t seed = 0;
  double test_top1 = 0.0, train_top1 = 0.0, r1 = 0.0;
};

struct CellStats {
  double mean = 0.0, stddev = 0.0;
};

CellStats stats_of(const std::vector<double>& xs) {
  CellStats s;
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(var / static_cast<double>(xs.size()));
  return s;
}

int run_gen_data(const std::vector<std::string>& args, const SyntheticConfig& cfg,
                 const std::filesystem::path& out_dir, bool force) {
  const EmbeddingDataset ds = generate_synthetic(cfg);
  const auto manifest = save_dataset(ds, out_dir, force);
  write_run_record(out_dir, "gen-data", args, synthetic_config_to_kv(cfg));
  std::cout << "wrote " << manifest.string() << " (" << ds.train.rows() << " train / "
            << ds.test.rows() << " test rows, " << ds.num_classes << " classes)\n";
  return 0;
}

int run_train(const std::vector<std::string>& args, const std::filesystem::path& data,
              const TrainConfig& cfg, const std::filesystem::path& out_dir) {
  const EmbeddingDataset ds = load_dataset(data);
  const FitResult result = fit(ds, cfg);
  ensure_dir(out_dir);
  save_checkpoint(result.params, out_dir);
  write_history(result.history, out_dir / "history.txt");
  write_run_record(out_dir, "train", args, train_config_to_kv(cfg));

  const double train_top1 = top1_accuracy(result.params, ds.train);
  const double test_top1 = ds.test.rows() > 0 ? top1_accuracy(result.params, ds.test) : 0.0;
  const double final_loss =
      result.history.iterations.empty() ? 0.0 : result.history.iterations.back().losses.total;
  std::printf("trained %zu iterations  L_total=%.6f  train_top1=%.4f  test_top1=%.4f\n",
              result.history.iterations.size(), final_loss, train_top1, test_top1);
  std::cout << "checkpoint written to " << out_dir.string() << "\n";
  return 0;
}

int run_eval(const std::vector<std::string>& args, const std::filesystem::path& data,
             const std::filesystem::path& checkpoint, const std::vector<std::size_t>& ks,
             bool per_class, const std::filesystem::path& out_dir) {
  const EmbeddingDataset ds = load_dataset(data);
  const ModelParams params = load_checkpoint(checkpoint);
  if (ds.test.rows() == 0) throw ParamError("eval: test split is empty");
  const double top1 = top1_accuracy(params, ds.test);
  const RetrievalReport report = knn_retrieval(params, ds, ks);

  std::printf("top1 (test): %.4f\n", top1);
  std::printf("%-6s %-10s\n", "K", "R@K");
  for (const auto& [k, r] : report.recall_at) std::printf("%-6zu %-10.4f\n", k, r);
  std::vector<double> class_acc;
  if (per_class) {
    class_acc = per_class_accuracy(params, ds.test, ds.num_classes);
    std::printf("%-6s %-10s\n", "class", "top1");
    for (std::size_t c = 0; c < class_acc.size(); ++c)
      std::printf("%-6zu %-10.4f\n", c, class_acc[c]);
  }
  for (const std::string& w : report.warnings) std::cerr << "warning: " << w << "\n";

  if (!out_dir.empty()) {
    ensure_dir(out_dir);
    write_eval_report(out_dir / "eval_report.txt", top1, report, class_acc);
    KvMap cfg;
    cfg.set("data", data.string());
    cfg.set("checkpoint", checkpoint.string());
    write_run_record(out_dir, "eval", args, cfg);
  }
  return 0;
}

int run_gradcheck(std::uint64_t base_seed, std::size_t num_seeds, double tol,
                  std::size_t batch_size) {
  double max_err = 0.0;
  bool pass = true;
  GradCheckEntry worst;
  for (std::size_t s = 0; s < num_seeds; ++s) {
    const std::uint64_t seed = base_seed + s;
    Rng rng(seed);
    SyntheticConfig data_cfg;
    data_cfg.num_classes = 3;
    data_cfg.train_per_class = 4;
    data_cfg.test_per_class = 1;
    data_cfg.d_in = 5;
    data_cfg.k_audio = 6;
    data_cfg.k_image = 6;
    data_cfg.d_semantic = 4;
    data_cfg.noise_sigma = 0.5;
    data_cfg.seed = seed;
    const EmbeddingDataset ds = generate_synthetic(data_cfg);

    TrainConfig cfg;
    cfg.dims.d_in = 5;
    cfg.dims.d_latent = 6;
    cfg.dims.k_audio = 6;
    cfg.dims.k_image = 6;
    cfg.dims.num_classes = 3;
    cfg.seed = seed;
    ModelParams params = init_params(cfg.dims, rng);
    const Batch batch = sample_batch(ds, Split::kTrain, batch_size, rng);
    const GradCheckReport report = grad_check(params, batch, cfg, tol);
    if (report.max_rel_err > max_err) {
      max_err = report.max_rel_err;
      worst = report.worst;
    }
    pass = pass && report.pass;
  }
  std::printf("%s max_rel_err=%.3e over %zu seeds (tol %.1e)\n", pass ? "PASS" : "FAIL", max_err,
              num_seeds, tol);
  if (!pass) {
    std::printf("worst: stream=%s param=%s coord=(%zu,%zu) analytic=%.6e fd=%.6e\n",
                worst.stream.c_str(), worst.param.c_str(), worst.row, worst.col, worst.analytic,
                worst.finite_diff);
  }
  return pass ? 0 : 2;
}

int run_ablate(const std::vector<std::string>& args, const std::filesystem::path& data,
               const SyntheticConfig& synth_cfg, bool have_data, const TrainConfig& base_cfg,
               const std::vector<std::string>& modes, const std::vector<std::string>& variants,
               std::size_t num_seeds, int threads, const std::filesystem::path& out_dir) {
  const EmbeddingDataset ds = have_data ? load_dataset(data) : generate_synthetic(synth_cfg);

  struct Cell {
    std::string variant, mode;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (const std::string& variant : variants) {
    for (const std::string& mode : modes) {
      for (std::size_t s = 0; s < num_seeds; ++s) {
        cells.push_back({variant, mode, base_cfg.seed + s});
      }
    }
  }

  std::vector<CellResult> results(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) break;
      const Cell& cell = cells[i];
      TrainConfig cfg = base_cfg;
      apply_mode(cfg.loss, cell.mode);
      apply_variant(cfg.loss, cell.variant);
      cfg.seed = cell.seed;
      const FitResult result = fit(ds, cfg);
      CellResult& out = results[i];
      out.variant = cell.variant;
      out.mode = cell.mode;
      out.seed = cell.seed;
      out.train_top1 = top1_accuracy(result.params, ds.train);
      out.test_top1 = ds.test.rows() > 0 ? top1_accuracy(result.params, ds.test) : 0.0;
      if (ds.test.rows() > 0) {
        const std::size_t ks[] = {1};
        out.r1 = knn_retrieval(result.params, ds, ks).recall_at[0].second;
      }
    }
  };
  if (threads <= 1 || cells.size() <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    const std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(threads), cells.size());
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  ensure_dir(out_dir);
  {
    std::ofstream records(out_dir / "ablate_records.txt", std::ios::binary | std::ios::trunc);
    if (!records) throw IoError("cannot write ablate_records.txt");
    records << "# ccl-ablate 1\n";
    for (const CellResult& r : results) {
      records << "cell variant=" << r.variant << " mode=" << r.mode << " seed=" << r.seed
              << " test_top1=" << format_f64(r.test_top1)
              << " train_top1=" << format_f64(r.train_top1) << " r1=" << format_f64(r.r1) << "\n";
    }
  }

  std::ostringstream table;
  char line[160];
  std::snprintf(line, sizeof(line), "%-16s %-5s %-18s %-18s\n", "variant", "mode",
                "test_top1 (mean/sd)", "R@1 (mean/sd)");
  table << line;
  std::ofstream summary(out_dir / "ablate_summary.txt", std::ios::binary | std::ios::trunc);
  if (!summary) throw IoError("cannot write ablate_summary.txt");
  summary << "# ccl-ablate-summary 1\n";
  for (const std::string& variant : variants) {
    for (const std::string& mode : modes) {
      std::vector<double> top1s, r1s;
      for (const CellResult& r : results) {
        if (r.variant == variant && r.mode == mode) {
          top1s.push_back(r.test_top1);
          r1s.push_back(r.r1);
        }
      }
      const CellStats t = stats_of(top1s);
      const CellStats r = stats_of(r1s);
      std::snprintf(line, sizeof(line), "%-16s %-5s %8.4f / %-8.4f %8.4f / %-8.4f\n",
                    variant.c_str(), mode.c_str(), t.mean, t.stddev, r.mean, r.stddev);
      table << line;
      summary << "summary variant=" << variant << " mode=" << mode << " seeds=" << top1s.size()
              << " test_top1_mean=" << format_f64(t.mean)
              << " test_top1_sd=" << format_f64(t.stddev) << " r1_mean=" << format_f64(r.mean)
              << " r1_sd=" << format_f64(r.stddev) << "\n";
    }
  }
  if (!summary.flush()) throw IoError("write failed: ablate_summary.txt");

  KvMap record_cfg = train_config_to_kv(base_cfg);
  if (!have_data) {
    const KvMap synth_kv = synthetic_config_to_kv(synth_cfg);
    for (const auto& [k, v] : synth_kv.entries()) {
      record_cfg.set("synthetic." + k, v);
    }
  }
  record_cfg.set_u64("ablate_seeds", num_seeds);
  write_run_record(out_dir, "ablate", args, record_cfg);

  std::cout << table.str();
  std::cout << "wrote " << (out_dir / "ablate_summary.txt").string() << "\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Compositional contrastive learning over multi-modal embedding tables"};
  app.require_subcommand(1);

  // gen-data
  CLI::App* gen = app.add_subcommand("gen-data", "Generate a synthetic embedding dataset");
  auto gen_synth = add_synthetic_options(gen);
  std::string gen_out;
  bool gen_force = false;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_flag("--force", gen_force, "Overwrite an existing dataset");

  // train
  CLI::App* train = app.add_subcommand("train", "Train a student on a dataset");
  std::string train_data, train_out, train_config_file;
  train->add_option("--data", train_data, "Dataset directory or manifest")->required();
  train->add_option("--out", train_out, "Output directory")->required();
  train->add_option("--config", train_config_file, "Config file (key = value lines)");
  auto train_flags = add_train_options(train);

  // eval
  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string eval_data, eval_checkpoint, eval_out;
  std::vector<std::size_t> eval_ks;
  bool eval_per_class = false;
  eval_cmd->add_option("--data", eval_data, "Dataset directory or manifest")->required();
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "Checkpoint directory or manifest")
      ->required();
  eval_cmd->add_option("--ks", eval_ks, "Retrieval cutoffs")->delimiter(',');
  eval_cmd->add_flag("--per-class", eval_per_class, "Also report per-class accuracy");
  eval_cmd->add_option("--out", eval_out, "Optional output directory for report files");

  // gradcheck
  CLI::App* gradcheck_cmd =
      app.add_subcommand("gradcheck", "Finite-difference check of all gradient streams");
  std::uint64_t gc_seed = 0;
  std::size_t gc_seeds = 20;
  std::size_t gc_batch = 5;
  double gc_tol = 1e-4;
  gradcheck_cmd->add_option("--seed", gc_seed, "Base seed");
  gradcheck_cmd->add_option("--seeds", gc_seeds, "Number of seeded configurations");
  gradcheck_cmd->add_option("--tol", gc_tol, "Max relative error tolerance");
  gradcheck_cmd->add_option("--batch-size", gc_batch, "Batch size of the checked step");

  // ablate
  CLI::App* ablate = app.add_subcommand("ablate", "Run the variant/mode/seed grid");
  std::string ablate_data, ablate_out, ablate_config_file;
  std::vector<std::string> ablate_modes = {"A", "I", "AI"};
  std::vector<std::string> ablate_variants = {"all"};
  std::size_t ablate_seeds = 5;
  int ablate_threads = 0;
  ablate->add_option("--data", ablate_data, "Dataset directory (generated when omitted)");
  auto ablate_synth = add_synthetic_options(ablate);
  ablate->add_option("--out", ablate_out, "Output directory")->required();
  ablate->add_option("--config", ablate_config_file, "Config file (key = value lines)");
  ablate->add_option("--modes", ablate_modes, "Modality modes")->delimiter(',');
  ablate->add_option("--variants", ablate_variants, "Variants or 'all'")->delimiter(',');
  ablate->add_option("--seeds", ablate_seeds, "Seeds per grid cell");
  ablate->add_option("--threads", ablate_threads,
                     "Worker threads (default: CCL_THREADS or 1)");
  auto ablate_flags = add_train_options(ablate);

  std::vector<const char*> argv;
  argv.push_back("ccl");
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) {
      return run_gen_data(args, gen_synth(), gen_out, gen_force);
    }
    if (train->parsed()) {
      const TrainConfig cfg = resolve_train_config(train_config_file, train_flags());
      return run_train(args, train_data, cfg, train_out);
    }
    if (eval_cmd->parsed()) {
      std::vector<std::size_t> ks(eval_ks.begin(), eval_ks.end());
      if (ks.empty()) ks.assign(std::begin(kDefaultRetrievalKs), std::end(kDefaultRetrievalKs));
      return run_eval(args, eval_data, eval_checkpoint, ks, eval_per_class, eval_out);
    }
    if (gradcheck_cmd->parsed()) {
      if (gc_seeds == 0) throw ConfigError("gradcheck: --seeds must be positive");
      return run_gradcheck(gc_seed, gc_seeds, gc_tol, gc_batch);
    }
    if (ablate->parsed()) {
      const TrainConfig cfg = resolve_train_config(ablate_config_file, ablate_flags());
      std::vector<std::string> variants = ablate_variants;
      if (variants.size() == 1 && variants[0] == "all") variants = all_variants();
      LossConfig scratch;  // reject unknown names before any cell runs
      for (const std::string& v : variants) apply_variant(scratch, v);
      for (const std::string& m : ablate_modes) apply_mode(scratch, m);
      if (ablate_seeds == 0) throw ConfigError("ablate: --seeds must be positive");
      const int threads = ablate_threads > 0 ? ablate_threads : default_threads();
      return run_ablate(args, ablate_data, ablate_synth(), !ablate_data.empty(), cfg,
                        ablate_modes, variants, ablate_seeds, threads, ablate_out);
    }
    throw ConfigError("no subcommand given");
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ParamError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace ccl::cli
