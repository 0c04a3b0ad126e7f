#ifndef UNICLR_ENCODER_HPP
#define UNICLR_ENCODER_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "uniclr/matrix.hpp"
#include "uniclr/tape.hpp"

namespace uniclr {

struct ModelConfig {
  std::vector<Index> hidden = {128, 64};
  Index embed_dim = 32;
  bool standardize = true;   // per-batch standardization on hidden layers
  bool twin = false;         // momentum twin encodes the second view
  double ema_momentum = 0.99;
};

void validate_model_config(const ModelConfig& cfg);

struct EncoderLayer {
  Matrix w;  // out x in
  Matrix b;  // out x 1
  bool relu = false;
  bool standardize = false;
};

struct EncoderState {
  std::vector<EncoderLayer> layers;
  Index input_dim() const;
  Index output_dim() const;
};

// Glorot-uniform weights (|w| <= sqrt(6/(fan_in+fan_out))), zero biases.
// Hidden layers standardize (optionally) then ReLU; the output layer is
// purely linear.
EncoderState init_params(const ModelConfig& cfg, Index input_dim,
                         std::uint64_t seed);

// Parameter leaves attached to a tape, aligned with EncoderState::layers.
struct EncoderTape {
  std::vector<Var> w;
  std::vector<Var> b;
};

EncoderTape attach_params(Tape& t, const EncoderState& state);

// Forward through already-attached parameters; x is D x N (samples in
// columns).
Var encoder_apply(Tape& t, const EncoderState& state, const EncoderTape& params,
                  Var x);

// Convenience: attach + apply. out_params receives the leaves when non-null.
Var encoder_forward(Tape& t, const EncoderState& state, const Matrix& x,
                    EncoderTape* out_params = nullptr);

// Twin branch: forward through the twin's own leaves, output wrapped in
// stop_gradient so no adjoint reaches the twin parameters.
Var twin_forward(Tape& t, const EncoderState& twin, const Matrix& x);

// Eager embedding via a throwaway tape, so eval-time numerics are identical
// to train-time forward numerics.
Matrix embed(const EncoderState& state, const Matrix& x);

// twin += (1 - m) * (online - twin). Exact identity when twin == online.
void ema_update(EncoderState& twin, const EncoderState& online, double m);

// Binary sections shared with the trainer checkpoint format.
void write_encoder_section(std::ostream& out, const EncoderState& state);
EncoderState read_encoder_section(std::istream& in, const std::string& origin);

// Standalone encoder file: "UCLR" magic, version, flags=0, encoder section.
void save_encoder(const std::string& path, const EncoderState& state);
// Accepts both standalone encoder files and full trainer checkpoints; returns
// the online encoder.
EncoderState load_encoder(const std::string& path);

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint32_t kFlagTwin = 1u;
inline constexpr std::uint32_t kFlagVelocity = 2u;
inline constexpr std::uint32_t kFlagMeta = 4u;

}  // namespace uniclr

#endif
