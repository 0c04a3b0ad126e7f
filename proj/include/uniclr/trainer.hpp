#ifndef UNICLR_TRAINER_HPP
#define UNICLR_TRAINER_HPP

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "uniclr/data.hpp"
#include "uniclr/encoder.hpp"
#include "uniclr/losses.hpp"

namespace uniclr {

struct TrainConfig {
  LossConfig loss;
  ModelConfig model;
  AugmentConfig augment;
  int epochs = 100;
  Index batch_size = 128;
  double base_lr = 0.3;
  double momentum = 0.9;
  double weight_decay = 1e-6;  // applied to weights only, never biases
  int warmup_epochs = 10;
  std::uint64_t seed = 0;
  int eval_every = 10;         // knn cadence in epochs; the last epoch always runs
  int knn_k = 5;
  double eval_fraction = 0.2;  // held-out split used for knn scoring
  bool lr_batch_scaling = false;  // base_lr * batch_size/256 when on
  bool csv_timing = false;     // real secs in the CSV break byte-determinism
  int stop_after = 0;          // stop (for checkpointing) after this many epochs
};

void validate_train_config(const TrainConfig& cfg);

// Linear warmup to base_lr over warmup_steps, then cosine decay to 0 at
// total_steps.
double cosine_lr(long step, long total_steps, long warmup_steps, double base_lr);

// v <- momentum*v + grad + weight_decay*param; param <- param - lr*v
void sgd_momentum_step(Matrix& param, Matrix& velocity, const Matrix& grad,
                       double lr, double momentum, double weight_decay);

struct EpochRecord {
  int epoch = 0;  // 1-based, absolute position in the schedule
  double loss = 0.0;
  double ce_term = 0.0;
  double sym_term = 0.0;  // gamma-weighted contribution, so loss = ce + sym
  double lr = 0.0;        // learning rate at the last step of the epoch
  double feat_std = 0.0;
  double eff_rank = 0.0;
  double knn_acc = 0.0;
  bool has_knn = false;
  double secs = 0.0;
};

struct RunMetrics {
  std::vector<EpochRecord> records;
};

inline constexpr const char* kMetricsHeader =
    "epoch,loss,ce_term,sym_term,lr,feat_std,eff_rank,knn_acc,secs";

std::string format_metrics_row(const EpochRecord& r, bool include_timing);
void write_metrics_csv(std::ostream& out, const RunMetrics& metrics,
                       bool include_timing);

/// Full training checkpoint: online encoder plus optional twin, momentum
// velocities and the (seed, epochs_completed) counters that make a resumed
// run bitwise identical to an uninterrupted one.
struct Checkpoint {
  EncoderState online;
  bool has_twin = false;
  EncoderState twin;
  bool has_velocity = false;
  std::vector<Matrix> vel_w;
  std::vector<Matrix> vel_b;
  std::uint64_t seed = 0;
  std::uint32_t epochs_completed = 0;
};

void save_checkpoint(const std::string& path, const Checkpoint& cp);
Checkpoint load_checkpoint(const std::string& path);

// Deterministic held-out split: (train indices, test indices), both sorted.
std::pair<std::vector<Index>, std::vector<Index>> eval_split(Index m,
                                                             double fraction,
                                                             std::uint64_t seed);

struct TrainResult {
  EncoderState online;
  bool has_twin = false;
  EncoderState twin;
  std::vector<Matrix> vel_w;
  std::vector<Matrix> vel_b;
  RunMetrics metrics;
  int epochs_completed = 0;
  double wall_secs = 0.0;
  std::uint64_t seed = 0;
  std::vector<Index> train_idx;
  std::vector<Index> test_idx;
  Checkpoint checkpoint() const;
};

using EpochSink = std::function<void(const EpochRecord&)>;

// Runs the schedule from the checkpoint position (or scratch) to
// min(stop_after or epochs). All randomness is keyed by (seed, epoch, batch),
// so identical configs produce bitwise-identical metrics and parameters.
// Numerical failures inside a step (non-finite loss, failed factorization,
// degenerate embeddings) raise a divergence error.
TrainResult train_run(const TrainConfig& cfg, const Dataset& ds,
                      const EpochSink& sink = {},
                      const Checkpoint* resume = nullptr);

}  // namespace uniclr

#endif
