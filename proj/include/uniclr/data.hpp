#ifndef UNICLR_DATA_HPP
#define UNICLR_DATA_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "uniclr/matrix.hpp"
#include "uniclr/rng.hpp"

namespace uniclr {

// Stream tags keep the independent deterministic rng streams (init, shuffle,
// augmentation, eval split) from colliding for one master seed.
inline constexpr std::uint64_t kStreamInit = 0x696e6974u;
inline constexpr std::uint64_t kStreamShuffle = 0x73687566u;
inline constexpr std::uint64_t kStreamAugment = 0x6175676du;
inline constexpr std::uint64_t kStreamSplit = 0x73706c74u;

struct DataConfig {
  std::string source = "blobs";  // blobs | moons | rings | csv | idx
  std::string path;              // csv file, or idx image file
  std::string labels_path;       // idx label file
  Index samples = 512;
  Index dim = 8;
  int classes = 4;
  double noise = 1.0;            // per-dim sample std around the class shape
  Index signal_dim = 0;          // blobs: dims carrying centers (0 = all)
  std::uint64_t seed = 1;
};

struct Dataset {
  std::string name;
  Matrix features;          // D x M, one sample per column
  std::vector<int> labels;  // size M, values in [0, num_classes)
  int num_classes = 0;
};

void validate_dataset(const Dataset& ds);

// Class centers sit on scaled coordinate axes of the first signal_dim
// dimensions with pairwise distance >= 6; every dimension gets i.i.d. noise.
Dataset make_blobs(const DataConfig& cfg);
// Two interleaved half circles in the first two dimensions; always 2 classes.
Dataset make_moons(const DataConfig& cfg);
// Concentric circles of radius 2(k+1) in the first two dimensions.
Dataset make_rings(const DataConfig& cfg);

Dataset load_csv(const std::string& path);
Dataset load_idx(const std::string& images_path, const std::string& labels_path);
void write_csv(const std::string& path, const Dataset& ds);

// Dispatch on cfg.source (generators or file loaders).
Dataset load_dataset(const DataConfig& cfg);

// FNV-1a 64 over dims, feature bytes (sample-major) and labels; hex string.
std::string dataset_fingerprint(const Dataset& ds);

struct AugmentConfig {
  double scale_lo = 0.8;   // per-sample scalar scale, uniform in [lo, hi]
  double scale_hi = 1.2;
  double mask_prob = 0.1;  // per-entry zeroing probability
  double noise_std = 0.05; // per-entry additive gaussian noise
};

void validate_augment_config(const AugmentConfig& cfg);

// Two independently augmented views of one batch. Per view, per column:
// scale, then mask, then noise. The rng draw layout is fixed (one scale
// uniform per column; one mask uniform and one normal per entry) so streams
// are reproducible for a given batch shape.
std::pair<Matrix, Matrix> two_views(const Matrix& batch, const AugmentConfig& cfg,
                                    Rng& rng);

// Shuffled index batches for one epoch, keyed by (seed, epoch); a trailing
// partial batch is dropped.
std::vector<std::vector<Index>> epoch_batches(Index m, Index batch_size,
                                              std::uint64_t seed, int epoch);

Matrix gather_cols(const Matrix& features, const std::vector<Index>& idx);

}  // namespace uniclr

#endif
