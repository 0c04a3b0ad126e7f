#ifndef UNICLR_GRADCHECK_HPP
#define UNICLR_GRADCHECK_HPP

#include <functional>
#include <string>
#include <vector>

#include "uniclr/losses.hpp"
#include "uniclr/tape.hpp"

namespace uniclr::gradcheck {

// A builder reconstructs the same scalar graph from fresh input matrices so
// the checker can re-evaluate it at perturbed points. It must return the root
// and the leaves corresponding to the inputs, in order.
struct Built {
  Var root;
  std::vector<Var> leaves;
};
using Builder = std::function<Built(Tape&, const std::vector<Matrix>&)>;

struct CheckResult {
  double max_rel_err = 0.0;
  long entries = 0;
};

// Central finite differences of the builder's scalar output against the
// recorded adjoints, entry by entry. The comparison is
// |ad - fd| / max(1, |ad|, |fd|), independent of every backward rule.
CheckResult check(const Builder& builder, const std::vector<Matrix>& inputs,
                  double step);

struct AuditRow {
  std::string name;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  long entries = 0;
};

struct AuditConfig {
  std::vector<Index> dims = {3, 8};
  std::vector<Index> batches = {4, 16};
  int seeds = 5;
  double step = 1e-6;
  double tolerance = 1e-4;
};

// One row per CLI loss variant, each with its composite training objective
// (gamma 0.01 for the affinity losses, plain for simtrace/infonce).
std::vector<AuditRow> audit_variants(const AuditConfig& cfg);

// Finer-grained rows separating the individual terms: plain and whitened
// cross entropy, the trace objective, the symmetry norm on plain and
// whitened affinities, both composites, and the paired-view objective.
std::vector<AuditRow> audit_terms(const AuditConfig& cfg);

// Raises an audit error naming the first failing row, if any.
void require_all_pass(const std::vector<AuditRow>& rows);

}  // namespace uniclr::gradcheck

#endif
