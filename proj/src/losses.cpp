#include "uniclr/losses.hpp"

#include <cmath>
#include <numeric>
#include <vector>

namespace uniclr {

const char* variant_name(LossVariant v) {
  switch (v) {
    case LossVariant::SimAffinity:
      return "simaffinity";
    case LossVariant::SimWhitening:
      return "simwhitening";
    case LossVariant::SimTrace:
      return "simtrace";
    case LossVariant::InfoNce:
      return "infonce";
  }
  return "simaffinity";
}

LossVariant variant_from_name(const std::string& name) {
  if (name == "simaffinity") return LossVariant::SimAffinity;
  if (name == "simwhitening") return LossVariant::SimWhitening;
  if (name == "simtrace") return LossVariant::SimTrace;
  if (name == "infonce") return LossVariant::InfoNce;
  raise(ErrorKind::Config, "unknown loss variant '" + name +
                               "' (expected simaffinity, simwhitening, simtrace "
                               "or infonce)");
}

void couple_loss_config(LossConfig& cfg) {
  cfg.whitening = cfg.variant == LossVariant::SimWhitening ||
                  cfg.variant == LossVariant::SimTrace;
}

void validate_loss_config(const LossConfig& cfg) {
  const bool needs_whitening = cfg.variant == LossVariant::SimWhitening ||
                               cfg.variant == LossVariant::SimTrace;
  require(cfg.whitening == needs_whitening, ErrorKind::Config,
          std::string("loss.whitening must be ") + (needs_whitening ? "on" : "off") +
              " for variant " + variant_name(cfg.variant));
  if (cfg.variant == LossVariant::SimTrace) {
    require(!cfg.tau_enabled, ErrorKind::Config,
            "loss.tau must be disabled (none) for simtrace");
    require(cfg.gamma == 0.0, ErrorKind::Config,
            "loss.gamma must be 0 for simtrace");
  } else {
    require(cfg.tau_enabled, ErrorKind::Config,
            std::string("loss.tau is required for ") + variant_name(cfg.variant));
  }
  if (cfg.tau_enabled)
    require(std::isfinite(cfg.tau) && cfg.tau > 0.0, ErrorKind::Config,
            "loss.tau must be finite and > 0");
  require(std::isfinite(cfg.gamma) && cfg.gamma >= 0.0, ErrorKind::Config,
          "loss.gamma must be finite and >= 0");
  require(std::isfinite(cfg.eps_scale) && cfg.eps_scale >= 0.0, ErrorKind::Config,
          "loss.eps_scale must be finite and >= 0");
}

namespace {

void check_views(Tape& t, Var z, Var z_prime) {
  const Matrix& zv = t.value(z);
  const Matrix& zpv = t.value(z_prime);
  require(zv.rows() == zpv.rows() && zv.cols() == zpv.cols(),
          ErrorKind::Dimension, "loss: views differ in shape");
  require(zv.cols() >= 2, ErrorKind::Degenerate,
          "loss: needs a batch of at least 2 columns");
}

}  // namespace

AffinityMatrix build_affinity(Tape& t, Var z, Var z_prime, const LossConfig& cfg) {
  check_views(t, z, z_prime);
  AffinityMatrix out;
  if (cfg.variant == LossVariant::SimTrace) {
    CovarianceChain ch =
        covariance_chain(t, z, z_prime, cfg.eps_scale, cfg.sigma_stop_grad);
    Var s = solve_spd(t, ch.sigma_eps, ch.zp_centered);
    out.values = matmul(t, transpose(t, ch.z_centered), s);
    out.whitened = true;
    return out;
  }
  Var a = z;
  Var b = z_prime;
  if (cfg.whitening) {
    CovarianceChain ch =
        covariance_chain(t, z, z_prime, cfg.eps_scale, cfg.sigma_stop_grad);
    a = whiten_lower(t, ch.sigma_eps, ch.z_centered);
    b = whiten_lower(t, ch.sigma_eps, ch.zp_centered);
    out.whitened = true;
  }
  if (cfg.l2_normalize) {
    a = l2_normalize_cols(t, a);
    b = l2_normalize_cols(t, b);
    out.l2_normalized = true;
  }
  out.values = matmul(t, transpose(t, a), b);
  if (cfg.tau_enabled) {
    out.values = scale(t, out.values, 1.0 / cfg.tau);
    out.temperature_applied = true;
  }
  return out;
}

Var sim_affinity_loss(Tape& t, const AffinityMatrix& affinity) {
  const Matrix& a = t.value(affinity.values);
  require(a.rows() == a.cols(), ErrorKind::Dimension,
          "sim_affinity_loss: affinity must be square");
  std::vector<int> targets(static_cast<std::size_t>(a.rows()));
  std::iota(targets.begin(), targets.end(), 0);
  return row_softmax_xent(t, affinity.values, targets);
}

Var symmetry_loss(Tape& t, const AffinityMatrix& affinity) {
  const Matrix& a = t.value(affinity.values);
  require(a.rows() == a.cols(), ErrorKind::Dimension,
          "symmetry_loss: affinity must be square");
  return frobenius_norm(t, sub(t, affinity.values, transpose(t, affinity.values)));
}

Var sim_trace_loss(Tape& t, const AffinityMatrix& affinity) {
  require(affinity.whitened && !affinity.temperature_applied &&
              !affinity.l2_normalized,
          ErrorKind::Contract,
          "sim_trace_loss: expects a whitened, unscaled, unnormalized affinity");
  return scale(t, trace(t, affinity.values), -1.0);
}

Var infonce_loss(Tape& t, Var z, Var z_prime, double tau) {
  check_views(t, z, z_prime);
  require(std::isfinite(tau) && tau > 0.0, ErrorKind::Config,
          "infonce_loss: tau must be finite and > 0");
  Var zn = l2_normalize_cols(t, z);
  Var zpn = l2_normalize_cols(t, z_prime);
  Var cat = concat_cols(t, zn, zpn);
  Var sims = scale(t, matmul(t, transpose(t, cat), cat), 1.0 / tau);
  return masked_pair_xent(t, sims);
}

LossParts uniclr_loss(Tape& t, Var z, Var z_prime, const LossConfig& cfg) {
  validate_loss_config(cfg);
  check_views(t, z, z_prime);
  LossParts parts;
  if (cfg.variant == LossVariant::SimTrace) {
    parts.affinity = build_affinity(t, z, z_prime, cfg);
    parts.ce = sim_trace_loss(t, parts.affinity);
    parts.total = parts.ce;
    return parts;
  }
  if (cfg.variant == LossVariant::InfoNce) {
    parts.ce = infonce_loss(t, z, z_prime, cfg.tau);
    if (cfg.gamma > 0.0) {
      parts.affinity = build_affinity(t, z, z_prime, cfg);
      parts.sym = symmetry_loss(t, parts.affinity);
      parts.has_sym = true;
      parts.total = add(t, parts.ce, scale(t, parts.sym, cfg.gamma));
    } else {
      parts.total = parts.ce;
    }
    return parts;
  }
  parts.affinity = build_affinity(t, z, z_prime, cfg);
  parts.ce = sim_affinity_loss(t, parts.affinity);
  if (cfg.gamma > 0.0) {
    parts.sym = symmetry_loss(t, parts.affinity);
    parts.has_sym = true;
    parts.total = add(t, parts.ce, scale(t, parts.sym, cfg.gamma));
  } else {
    parts.total = parts.ce;
  }
  return parts;
}

}  // namespace uniclr
