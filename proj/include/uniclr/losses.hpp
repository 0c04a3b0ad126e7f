#ifndef UNICLR_LOSSES_HPP
#define UNICLR_LOSSES_HPP

#include <string>

#include "uniclr/tape.hpp"
#include "uniclr/whitening.hpp"

namespace uniclr {

enum class LossVariant { SimAffinity, SimWhitening, SimTrace, InfoNce };

const char* variant_name(LossVariant v);
LossVariant variant_from_name(const std::string& name);  // config error on unknown

struct LossConfig {
  LossVariant variant = LossVariant::SimAffinity;
  bool tau_enabled = true;   // must be off for SimTrace, on for everything else
  double tau = 0.5;
  double gamma = 0.01;       // symmetric-regularizer weight; must be 0 for SimTrace
  bool whitening = false;    // must be on exactly for SimWhitening / SimTrace
  double eps_scale = 1e-5;   // covariance ridge: eps = max(eps_scale*tr/D, floor)
  bool sigma_stop_grad = false;
  bool l2_normalize = true;  // diagnostic switch; SimTrace never normalizes
};

// Derives the whitening flag from the variant; it is not an independent knob.
// Contradictory tau/gamma settings are left in place for validation to reject.
void couple_loss_config(LossConfig& cfg);
void validate_loss_config(const LossConfig& cfg);

// N x N cross-view affinity on the tape, with provenance flags so consumers
// can assert what has been applied to it.
struct AffinityMatrix {
  Var values;
  bool temperature_applied = false;
  bool whitened = false;
  bool l2_normalized = false;
};

// SimAffinity / InfoNce: affinity of (optionally l2-normalized) views.
// SimWhitening: centered, Cholesky-whitened, then normalized views.
// SimTrace: centered bilinear form through sigma_eps^{-1}; no tau, no l2.
AffinityMatrix build_affinity(Tape& t, Var z, Var z_prime, const LossConfig& cfg);

// Mean row-wise cross entropy of the affinity against diagonal targets: each
// anchor's denominator has exactly N terms.
Var sim_affinity_loss(Tape& t, const AffinityMatrix& affinity);

// Frobenius norm (not squared) of A - A^T.
Var symmetry_loss(Tape& t, const AffinityMatrix& affinity);

// Negated trace of the whitened bilinear affinity.
Var sim_trace_loss(Tape& t, const AffinityMatrix& affinity);

// NT-Xent over the 2N x 2N similarity matrix of the normalized concatenated
// views: row i pairs with (i+N) mod 2N, denominator excludes only the
// self-similarity, leaving 2N-1 terms.
Var infonce_loss(Tape& t, Var z, Var z_prime, double tau);

struct LossParts {
  Var total;
  Var ce;        // main term (cross entropy, or the trace term for SimTrace)
  Var sym;       // unweighted symmetry norm; only meaningful when has_sym
  bool has_sym = false;
  AffinityMatrix affinity;
};

// The composite training objective: main term + gamma * symmetry, with the
// symmetry norm consuming the same (temperature-scaled) affinity.
LossParts uniclr_loss(Tape& t, Var z, Var z_prime, const LossConfig& cfg);

}  // namespace uniclr

#endif
