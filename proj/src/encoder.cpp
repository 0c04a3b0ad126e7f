#include "uniclr/encoder.hpp"

#include <cmath>
#include <fstream>

#include "uniclr/detail/binio.hpp"
#include "uniclr/rng.hpp"

namespace uniclr {

void validate_model_config(const ModelConfig& cfg) {
  for (Index h : cfg.hidden)
    require(h >= 1, ErrorKind::Config, "model: hidden widths must be >= 1");
  require(cfg.embed_dim >= 1, ErrorKind::Config, "model: embed_dim must be >= 1");
  require(std::isfinite(cfg.ema_momentum) && cfg.ema_momentum >= 0.0 &&
              cfg.ema_momentum < 1.0,
          ErrorKind::Config, "model: ema_momentum must be in [0, 1)");
}

Index EncoderState::input_dim() const {
  require(!layers.empty(), ErrorKind::Contract, "encoder: no layers");
  return layers.front().w.cols();
}

Index EncoderState::output_dim() const {
  require(!layers.empty(), ErrorKind::Contract, "encoder: no layers");
  return layers.back().w.rows();
}

EncoderState init_params(const ModelConfig& cfg, Index input_dim,
                         std::uint64_t seed) {
  validate_model_config(cfg);
  require(input_dim >= 1, ErrorKind::Config, "model: input dimension must be >= 1");
  Rng rng(seed);
  EncoderState state;
  std::vector<Index> widths;
  widths.push_back(input_dim);
  widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  widths.push_back(cfg.embed_dim);
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const Index fan_in = widths[i];
    const Index fan_out = widths[i + 1];
    const bool last = i + 2 == widths.size();
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    EncoderLayer layer;
    layer.w = rng.uniform_matrix(fan_out, fan_in, -limit, limit);
    layer.b = Matrix::Zero(fan_out, 1);
    layer.relu = !last;
    layer.standardize = !last && cfg.standardize;
    state.layers.push_back(std::move(layer));
  }
  return state;
}

EncoderTape attach_params(Tape& t, const EncoderState& state) {
  EncoderTape params;
  for (const EncoderLayer& layer : state.layers) {
    params.w.push_back(t.leaf(layer.w));
    params.b.push_back(t.leaf(layer.b));
  }
  return params;
}

Var encoder_apply(Tape& t, const EncoderState& state, const EncoderTape& params,
                  Var x) {
  require(params.w.size() == state.layers.size() &&
              params.b.size() == state.layers.size(),
          ErrorKind::Contract, "encoder_apply: params do not match layers");
  require(t.value(x).rows() == state.input_dim(), ErrorKind::Dimension,
          "encoder_apply: input has " + std::to_string(t.value(x).rows()) +
              " rows, encoder expects " + std::to_string(state.input_dim()));
  bool any_standardize = false;
  for (const EncoderLayer& layer : state.layers) any_standardize |= layer.standardize;
  require(!any_standardize || t.value(x).cols() >= 2, ErrorKind::Degenerate,
          "encoder_apply: batch standardization needs at least 2 columns");
  Var h = x;
  for (std::size_t i = 0; i < state.layers.size(); ++i) {
    h = add_colvec(t, matmul(t, params.w[i], h), params.b[i]);
    if (state.layers[i].standardize) h = batch_standardize(t, h);
    if (state.layers[i].relu) h = relu(t, h);
  }
  return h;
}

Var encoder_forward(Tape& t, const EncoderState& state, const Matrix& x,
                    EncoderTape* out_params) {
  EncoderTape params = attach_params(t, state);
  Var out = encoder_apply(t, state, params, t.leaf(x));
  if (out_params) *out_params = params;
  return out;
}

Var twin_forward(Tape& t, const EncoderState& twin, const Matrix& x) {
  return stop_gradient(t, encoder_forward(t, twin, x));
}

Matrix embed(const EncoderState& state, const Matrix& x) {
  Tape t;
  return t.value(encoder_forward(t, state, x));
}

void ema_update(EncoderState& twin, const EncoderState& online, double m) {
  require(std::isfinite(m) && m >= 0.0 && m < 1.0, ErrorKind::Contract,
          "ema_update: momentum must be in [0, 1)");
  require(twin.layers.size() == online.layers.size(), ErrorKind::Contract,
          "ema_update: twin and online differ in depth");
  for (std::size_t i = 0; i < twin.layers.size(); ++i) {
    EncoderLayer& tl = twin.layers[i];
    const EncoderLayer& ol = online.layers[i];
    require(tl.w.rows() == ol.w.rows() && tl.w.cols() == ol.w.cols(),
            ErrorKind::Contract, "ema_update: layer shape mismatch");
    tl.w += (1.0 - m) * (ol.w - tl.w);
    tl.b += (1.0 - m) * (ol.b - tl.b);
  }
}

void write_encoder_section(std::ostream& out, const EncoderState& state) {
  detail::require_little_endian();
  detail::write_u32(out, static_cast<std::uint32_t>(state.layers.size()));
  for (const EncoderLayer& layer : state.layers) {
    detail::write_u32(out, static_cast<std::uint32_t>(layer.w.cols()));
    detail::write_u32(out, static_cast<std::uint32_t>(layer.w.rows()));
    const std::uint8_t relu = layer.relu ? 1 : 0;
    const std::uint8_t standardize = layer.standardize ? 1 : 0;
    out.write(reinterpret_cast<const char*>(&relu), 1);
    out.write(reinterpret_cast<const char*>(&standardize), 1);
    detail::write_f64s(out, layer.w.data(),
                       static_cast<std::size_t>(layer.w.size()));
    detail::write_f64s(out, layer.b.data(),
                       static_cast<std::size_t>(layer.b.size()));
  }
}

namespace {

EncoderState read_encoder_section_impl(detail::Reader& r) {
  const std::uint32_t n_layers = r.u32();
  require(n_layers >= 1 && n_layers <= 1024, ErrorKind::Format,
          r.origin() + ": implausible layer count " + std::to_string(n_layers));
  EncoderState state;
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    const std::uint32_t in = r.u32();
    const std::uint32_t out = r.u32();
    require(in >= 1 && out >= 1 && in <= (1u << 20) && out <= (1u << 20),
            ErrorKind::Format,
            r.origin() + ": implausible layer shape " + std::to_string(out) +
                "x" + std::to_string(in));
    EncoderLayer layer;
    layer.relu = r.u8() != 0;
    layer.standardize = r.u8() != 0;
    layer.w.resize(static_cast<Index>(out), static_cast<Index>(in));
    layer.b.resize(static_cast<Index>(out), 1);
    r.f64s(layer.w.data(), static_cast<std::size_t>(layer.w.size()));
    r.f64s(layer.b.data(), static_cast<std::size_t>(layer.b.size()));
    state.layers.push_back(std::move(layer));
  }
  return state;
}

}  // namespace

EncoderState read_encoder_section(std::istream& in, const std::string& origin) {
  detail::require_little_endian();
  detail::Reader r(in, origin);
  return read_encoder_section_impl(r);
}

void save_encoder(const std::string& path, const EncoderState& state) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::Io, "cannot open '" + path + "' for writing");
  out.write("UCLR", 4);
  detail::write_u32(out, kCheckpointVersion);
  detail::write_u32(out, 0);  // flags
  write_encoder_section(out, state);
  require(out.good(), ErrorKind::Io, "failed writing '" + path + "'");
}

EncoderState load_encoder(const std::string& path) {
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
  // Non-zero flags mean training sections follow the encoder; they are
  // legitimately skipped here. An encoder-only file must end cleanly.
  const std::uint32_t flags = r.u32();
  EncoderState state = read_encoder_section_impl(r);
  if (flags == 0)
    require(r.at_eof(), ErrorKind::Format,
            path + ": trailing bytes after byte " + std::to_string(r.offset()));
  return state;
}

}  // namespace uniclr
