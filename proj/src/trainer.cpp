#include "uniclr/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "uniclr/detail/binio.hpp"
#include "uniclr/eval.hpp"

namespace uniclr {

void validate_train_config(const TrainConfig& cfg) {
  validate_loss_config(cfg.loss);
  validate_model_config(cfg.model);
  validate_augment_config(cfg.augment);
  require(cfg.epochs >= 0, ErrorKind::Config, "train.epochs must be >= 0");
  require(cfg.batch_size >= 2, ErrorKind::Config, "train.batch_size must be >= 2");
  require(std::isfinite(cfg.base_lr) && cfg.base_lr > 0.0, ErrorKind::Config,
          "train.base_lr must be finite and > 0");
  require(std::isfinite(cfg.momentum) && cfg.momentum >= 0.0 && cfg.momentum < 1.0,
          ErrorKind::Config, "train.momentum must be in [0, 1)");
  require(std::isfinite(cfg.weight_decay) && cfg.weight_decay >= 0.0,
          ErrorKind::Config, "train.weight_decay must be finite and >= 0");
  require(cfg.warmup_epochs >= 0, ErrorKind::Config,
          "train.warmup_epochs must be >= 0");
  if (cfg.epochs > 0)
    require(cfg.warmup_epochs < cfg.epochs, ErrorKind::Config,
            "train.warmup_epochs must be smaller than train.epochs");
  require(cfg.eval_every >= 1, ErrorKind::Config, "train.eval_every must be >= 1");
  require(cfg.knn_k >= 1, ErrorKind::Config, "train.knn_k must be >= 1");
  require(std::isfinite(cfg.eval_fraction) && cfg.eval_fraction > 0.0 &&
              cfg.eval_fraction < 1.0,
          ErrorKind::Config, "train.eval_fraction must be in (0, 1)");
  require(cfg.stop_after >= 0 && cfg.stop_after <= cfg.epochs, ErrorKind::Config,
          "train.stop_after must be in [0, epochs]");
}

double cosine_lr(long step, long total_steps, long warmup_steps, double base_lr) {
  require(total_steps > 0, ErrorKind::Contract, "cosine_lr: total_steps must be > 0");
  require(warmup_steps >= 0 && warmup_steps < total_steps, ErrorKind::Contract,
          "cosine_lr: need 0 <= warmup_steps < total_steps");
  require(step >= 0 && step <= total_steps, ErrorKind::Contract,
          "cosine_lr: step out of [0, total_steps]");
  require(std::isfinite(base_lr) && base_lr > 0.0, ErrorKind::Contract,
          "cosine_lr: base_lr must be finite and > 0");
  if (step < warmup_steps)
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  const double progress = static_cast<double>(step - warmup_steps) /
                          static_cast<double>(total_steps - warmup_steps);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void sgd_momentum_step(Matrix& param, Matrix& velocity, const Matrix& grad,
                       double lr, double momentum, double weight_decay) {
  require(param.rows() == grad.rows() && param.cols() == grad.cols() &&
              param.rows() == velocity.rows() && param.cols() == velocity.cols(),
          ErrorKind::Dimension, "sgd_momentum_step: shape mismatch");
  velocity = momentum * velocity + grad + weight_decay * param;
  param -= lr * velocity;
}

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string format_metrics_row(const EpochRecord& r, bool include_timing) {
  std::ostringstream out;
  out << r.epoch << ',' << format_double(r.loss) << ',' << format_double(r.ce_term)
      << ',' << format_double(r.sym_term) << ',' << format_double(r.lr) << ','
      << format_double(r.feat_std) << ',' << format_double(r.eff_rank) << ',';
  if (r.has_knn) out << format_double(r.knn_acc);
  char secs[32];
  std::snprintf(secs, sizeof secs, "%.3f", include_timing ? r.secs : 0.0);
  out << ',' << secs;
  return out.str();
}

void write_metrics_csv(std::ostream& out, const RunMetrics& metrics,
                       bool include_timing) {
  out << kMetricsHeader << '\n';
  for (const EpochRecord& r : metrics.records)
    out << format_metrics_row(r, include_timing) << '\n';
}

void save_checkpoint(const std::string& path, const Checkpoint& cp) {
  detail::require_little_endian();
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::Io, "cannot open '" + path + "' for writing");
  out.write("UCLR", 4);
  detail::write_u32(out, kCheckpointVersion);
  std::uint32_t flags = kFlagMeta;
  if (cp.has_twin) flags |= kFlagTwin;
  if (cp.has_velocity) flags |= kFlagVelocity;
  detail::write_u32(out, flags);
  write_encoder_section(out, cp.online);
  if (cp.has_twin) write_encoder_section(out, cp.twin);
  if (cp.has_velocity) {
    require(cp.vel_w.size() == cp.online.layers.size() &&
                cp.vel_b.size() == cp.online.layers.size(),
            ErrorKind::Contract, "save_checkpoint: velocity does not match layers");
    for (std::size_t i = 0; i < cp.vel_w.size(); ++i) {
      detail::write_f64s(out, cp.vel_w[i].data(),
                         static_cast<std::size_t>(cp.vel_w[i].size()));
      detail::write_f64s(out, cp.vel_b[i].data(),
                         static_cast<std::size_t>(cp.vel_b[i].size()));
    }
  }
  detail::write_u64(out, cp.seed);
  detail::write_u32(out, cp.epochs_completed);
  require(out.good(), ErrorKind::Io, "failed writing '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  detail::require_little_endian();
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::Io, "cannot open '" + path + "'");
  detail::Reader r(in, path);
  char magic[4] = {0, 0, 0, 0};
  r.raw(magic, 4);
  require(magic[0] == 'U' && magic[1] == 'C' && magic[2] == 'L' && magic[3] == 'R',
          ErrorKind::Format, path + ": bad magic at byte 0 (expected 'UCLR')");
  const std::uint32_t version = r.u32();
  require(version == kCheckpointVersion, ErrorKind::Format,
          path + ": unsupported version " + std::to_string(version));
  const std::uint32_t flags = r.u32();
  Checkpoint cp;
  // Sections share one reader so truncation offsets stay accurate.
  auto read_section = [&r]() {
    EncoderState state;
    const std::uint32_t n_layers = r.u32();
    require(n_layers >= 1 && n_layers <= 1024, ErrorKind::Format,
            r.origin() + ": implausible layer count " + std::to_string(n_layers));
    for (std::uint32_t i = 0; i < n_layers; ++i) {
      const std::uint32_t in_w = r.u32();
      const std::uint32_t out_w = r.u32();
      require(in_w >= 1 && out_w >= 1 && in_w <= (1u << 20) && out_w <= (1u << 20),
              ErrorKind::Format, r.origin() + ": implausible layer shape");
      EncoderLayer layer;
      layer.relu = r.u8() != 0;
      layer.standardize = r.u8() != 0;
      layer.w.resize(static_cast<Index>(out_w), static_cast<Index>(in_w));
      layer.b.resize(static_cast<Index>(out_w), 1);
      r.f64s(layer.w.data(), static_cast<std::size_t>(layer.w.size()));
      r.f64s(layer.b.data(), static_cast<std::size_t>(layer.b.size()));
      state.layers.push_back(std::move(layer));
    }
    return state;
  };
  cp.online = read_section();
  cp.has_twin = (flags & kFlagTwin) != 0;
  if (cp.has_twin) cp.twin = read_section();
  cp.has_velocity = (flags & kFlagVelocity) != 0;
  if (cp.has_velocity) {
    for (const EncoderLayer& layer : cp.online.layers) {
      Matrix vw(layer.w.rows(), layer.w.cols());
      Matrix vb(layer.b.rows(), 1);
      r.f64s(vw.data(), static_cast<std::size_t>(vw.size()));
      r.f64s(vb.data(), static_cast<std::size_t>(vb.size()));
      cp.vel_w.push_back(std::move(vw));
      cp.vel_b.push_back(std::move(vb));
    }
  }
  if ((flags & kFlagMeta) != 0) {
    cp.seed = r.u64();
    cp.epochs_completed = r.u32();
  }
  require(r.at_eof(), ErrorKind::Format,
          path + ": trailing bytes after byte " + std::to_string(r.offset()));
  return cp;
}

std::pair<std::vector<Index>, std::vector<Index>> eval_split(Index m,
                                                             double fraction,
                                                             std::uint64_t seed) {
  require(m >= 2, ErrorKind::Degenerate, "eval_split: need at least 2 samples");
  require(std::isfinite(fraction) && fraction > 0.0 && fraction < 1.0,
          ErrorKind::Config, "eval_split: fraction must be in (0, 1)");
  Index n_test = static_cast<Index>(std::floor(static_cast<double>(m) * fraction));
  n_test = std::max<Index>(1, std::min(n_test, m - 1));
  Rng rng(seed_combine(seed, kStreamSplit));
  std::vector<Index> perm = rng.permutation(m);
  std::vector<Index> test(perm.begin(), perm.begin() + n_test);
  std::vector<Index> train(perm.begin() + n_test, perm.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  return {std::move(train), std::move(test)};
}

Checkpoint TrainResult::checkpoint() const {
  Checkpoint cp;
  cp.online = online;
  cp.has_twin = has_twin;
  cp.twin = twin;
  cp.has_velocity = true;
  cp.vel_w = vel_w;
  cp.vel_b = vel_b;
  cp.seed = seed;
  cp.epochs_completed = static_cast<std::uint32_t>(epochs_completed);
  return cp;
}

namespace {

[[noreturn]] void raise_divergence(int epoch, Index step, const std::string& what) {
  raise(ErrorKind::Divergence, "training diverged at epoch " +
                                   std::to_string(epoch + 1) + " step " +
                                   std::to_string(step) + ": " + what);
}

bool is_step_failure(ErrorKind kind) {
  return kind == ErrorKind::Numeric || kind == ErrorKind::Conditioning ||
         kind == ErrorKind::Degenerate;
}

void check_layers_match(const EncoderState& a, const EncoderState& b,
                        const char* what) {
  require(a.layers.size() == b.layers.size(), ErrorKind::Config,
          std::string(what) + ": checkpoint depth does not match the configured model");
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    const bool same = a.layers[i].w.rows() == b.layers[i].w.rows() &&
                      a.layers[i].w.cols() == b.layers[i].w.cols() &&
                      a.layers[i].relu == b.layers[i].relu &&
                      a.layers[i].standardize == b.layers[i].standardize;
    require(same, ErrorKind::Config,
            std::string(what) + ": layer " + std::to_string(i) +
                " does not match the configured model");
  }
}

}  // namespace

TrainResult train_run(const TrainConfig& cfg, const Dataset& ds,
                      const EpochSink& sink, const Checkpoint* resume) {
  validate_train_config(cfg);
  validate_dataset(ds);

  const auto t_start = std::chrono::steady_clock::now();
  TrainResult result;
  result.seed = cfg.seed;
  auto [train_idx, test_idx] = eval_split(ds.features.cols(), cfg.eval_fraction,
                                          cfg.seed);
  result.train_idx = train_idx;
  result.test_idx = test_idx;
  const Index m_train = static_cast<Index>(train_idx.size());
  require(m_train >= cfg.batch_size, ErrorKind::Config,
          "train.batch_size exceeds the training split (" +
              std::to_string(m_train) + " samples after holding out eval)");

  const long steps_per_epoch = m_train / cfg.batch_size;
  const long total_steps = static_cast<long>(cfg.epochs) * steps_per_epoch;
  const long warmup_steps = static_cast<long>(cfg.warmup_epochs) * steps_per_epoch;
  const double eff_lr =
      cfg.base_lr * (cfg.lr_batch_scaling
                         ? static_cast<double>(cfg.batch_size) / 256.0
                         : 1.0);

  result.online = init_params(cfg.model, ds.features.rows(),
                              seed_combine(cfg.seed, kStreamInit));
  result.has_twin = cfg.model.twin;
  if (result.has_twin) result.twin = result.online;
  for (const EncoderLayer& layer : result.online.layers) {
    result.vel_w.push_back(Matrix::Zero(layer.w.rows(), layer.w.cols()));
    result.vel_b.push_back(Matrix::Zero(layer.b.rows(), 1));
  }

  int start_epoch = 0;
  if (resume) {
    require(resume->seed == cfg.seed, ErrorKind::Config,
            "resume: checkpoint seed does not match train.seed");
    require(static_cast<int>(resume->epochs_completed) <= cfg.epochs,
            ErrorKind::Config,
            "resume: checkpoint has more epochs than the configured schedule");
    check_layers_match(resume->online, result.online, "resume");
    result.online = resume->online;
    require(resume->has_velocity, ErrorKind::Config,
            "resume: checkpoint lacks optimizer state");
    result.vel_w = resume->vel_w;
    result.vel_b = resume->vel_b;
    if (result.has_twin) {
      require(resume->has_twin, ErrorKind::Config,
              "resume: model.twin is on but the checkpoint has no twin");
      check_layers_match(resume->twin, result.online, "resume twin");
      result.twin = resume->twin;
    }
    start_epoch = static_cast<int>(resume->epochs_completed);
  }

  const int end_epoch = cfg.stop_after > 0 ? cfg.stop_after : cfg.epochs;
  result.epochs_completed = start_epoch;

  for (int epoch = start_epoch; epoch < end_epoch; ++epoch) {
    const auto t_epoch = std::chrono::steady_clock::now();
    auto batches = epoch_batches(m_train, cfg.batch_size, cfg.seed, epoch);
    double loss_sum = 0.0;
    double ce_sum = 0.0;
    double sym_sum = 0.0;
    double last_lr = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      std::vector<Index> cols;
      cols.reserve(batches[b].size());
      for (Index local : batches[b]) cols.push_back(train_idx[static_cast<std::size_t>(local)]);
      Matrix x = gather_cols(ds.features, cols);
      Rng aug_rng(seed_combine(seed_combine(cfg.seed, kStreamAugment),
                               static_cast<std::uint64_t>(epoch),
                               static_cast<std::uint64_t>(b)));
      auto views = two_views(x, cfg.augment, aug_rng);

      Tape tape;
      LossParts parts;
      EncoderTape params;
      try {
        Var z1 = encoder_forward(tape, result.online, views.first, &params);
        Var z2 = result.has_twin
                     ? twin_forward(tape, result.twin, views.second)
                     : encoder_apply(tape, result.online, params,
                                     tape.leaf(views.second));
        parts = uniclr_loss(tape, z1, z2, cfg.loss);
      } catch (const Error& e) {
        if (is_step_failure(e.kind()))
          raise_divergence(epoch, static_cast<Index>(b), e.what());
        throw;
      }
      const double loss_val = tape.scalar_value(parts.total);
      if (!std::isfinite(loss_val))
        raise_divergence(epoch, static_cast<Index>(b), "non-finite loss");
      loss_sum += loss_val;
      ce_sum += tape.scalar_value(parts.ce);
      if (parts.has_sym) sym_sum += cfg.loss.gamma * tape.scalar_value(parts.sym);

      Gradient grads = backward(tape, parts.total);
      const long step = static_cast<long>(epoch) * steps_per_epoch +
                        static_cast<long>(b);
      last_lr = cosine_lr(step, total_steps, warmup_steps, eff_lr);
      for (std::size_t i = 0; i < result.online.layers.size(); ++i) {
        sgd_momentum_step(result.online.layers[i].w, result.vel_w[i],
                          grads.at(params.w[i]), last_lr, cfg.momentum,
                          cfg.weight_decay);
        sgd_momentum_step(result.online.layers[i].b, result.vel_b[i],
                          grads.at(params.b[i]), last_lr, cfg.momentum, 0.0);
      }
      if (result.has_twin)
        ema_update(result.twin, result.online, cfg.model.ema_momentum);
    }

    EpochRecord record;
    record.epoch = epoch + 1;
    const double nb = static_cast<double>(batches.size());
    record.loss = loss_sum / nb;
    record.ce_term = ce_sum / nb;
    record.sym_term = sym_sum / nb;
    record.lr = last_lr;
    try {
      Matrix feats = embed(result.online, ds.features);
      CollapseReport collapse = collapse_metrics(feats);
      record.feat_std = collapse.mean_std;
      record.eff_rank = collapse.effective_rank;
      const bool knn_due =
          (epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs;
      if (knn_due) {
        Matrix train_f = gather_cols(feats, train_idx);
        Matrix test_f = gather_cols(feats, test_idx);
        std::vector<int> train_y;
        std::vector<int> test_y;
        for (Index i : train_idx) train_y.push_back(ds.labels[static_cast<std::size_t>(i)]);
        for (Index i : test_idx) test_y.push_back(ds.labels[static_cast<std::size_t>(i)]);
        const int k = std::min<int>(cfg.knn_k, static_cast<int>(train_idx.size()));
        KnnReport knn = knn_eval(train_f, train_y, test_f, test_y, k, ds.num_classes);
        record.knn_acc = knn.accuracy;
        record.has_knn = true;
      }
    } catch (const Error& e) {
      if (is_step_failure(e.kind()))
        raise_divergence(epoch, steps_per_epoch, e.what());
      throw;
    }
    record.secs = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                t_epoch)
                      .count();
    result.metrics.records.push_back(record);
    result.epochs_completed = epoch + 1;
    if (sink) sink(record);
  }

  result.wall_secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return result;
}

}  // namespace uniclr
