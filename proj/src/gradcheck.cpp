#include "uniclr/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "uniclr/errors.hpp"
#include "uniclr/rng.hpp"

namespace uniclr::gradcheck {

namespace {

double evaluate(const Builder& builder, const std::vector<Matrix>& inputs) {
  Tape t;
  Built built = builder(t, inputs);
  return t.scalar_value(built.root);
}

}  // namespace

CheckResult check(const Builder& builder, const std::vector<Matrix>& inputs,
                  double step) {
  require(step > 0.0, ErrorKind::Contract, "finite difference step must be positive");
  Tape t;
  Built built = builder(t, inputs);
  require(built.leaves.size() == inputs.size(), ErrorKind::Contract,
          "builder must return one leaf per input");
  Gradient grad = backward(t, built.root);

  CheckResult out;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Matrix& base = inputs[i];
    const Matrix& adj = grad.at(built.leaves[i]);
    for (Index r = 0; r < base.rows(); ++r) {
      for (Index c = 0; c < base.cols(); ++c) {
        std::vector<Matrix> bumped = inputs;
        bumped[i](r, c) = base(r, c) + step;
        const double up = evaluate(builder, bumped);
        bumped[i](r, c) = base(r, c) - step;
        const double down = evaluate(builder, bumped);
        const double fd = (up - down) / (2.0 * step);
        const double ad = adj(r, c);
        const double scale = std::max({1.0, std::abs(ad), std::abs(fd)});
        out.max_rel_err = std::max(out.max_rel_err, std::abs(ad - fd) / scale);
        ++out.entries;
      }
    }
  }
  return out;
}

namespace {

Builder loss_builder(LossConfig cfg) {
  return [cfg](Tape& t, const std::vector<Matrix>& in) {
    Var z = t.leaf(in[0]);
    Var zp = t.leaf(in[1]);
    LossParts parts = uniclr_loss(t, z, zp, cfg);
    return Built{parts.total, {z, zp}};
  };
}

Builder symmetry_builder(LossConfig cfg) {
  return [cfg](Tape& t, const std::vector<Matrix>& in) {
    Var z = t.leaf(in[0]);
    Var zp = t.leaf(in[1]);
    AffinityMatrix aff = build_affinity(t, z, zp, cfg);
    return Built{symmetry_loss(t, aff), {z, zp}};
  };
}

LossConfig variant_config(LossVariant v, double gamma) {
  LossConfig cfg;
  cfg.variant = v;
  cfg.tau_enabled = v != LossVariant::SimTrace;
  cfg.tau = 0.5;
  cfg.gamma = v == LossVariant::SimTrace ? 0.0 : gamma;
  cfg.eps_scale = 1e-5;
  cfg.sigma_stop_grad = false;
  cfg.l2_normalize = true;
  couple_loss_config(cfg);
  return cfg;
}

AuditRow run_case(const std::string& name, const Builder& builder,
                  const AuditConfig& cfg) {
  AuditRow row;
  row.name = name;
  row.tolerance = cfg.tolerance;
  Rng seeder(seed_combine(0x6772616463686bULL, std::hash<std::string>{}(name)));
  for (Index d : cfg.dims) {
    for (Index n : cfg.batches) {
      for (int s = 0; s < cfg.seeds; ++s) {
        Rng rng(seeder.next_u64());
        std::vector<Matrix> inputs = {rng.uniform_matrix(d, n, -1.0, 1.0),
                                      rng.uniform_matrix(d, n, -1.0, 1.0)};
        CheckResult r = check(builder, inputs, cfg.step);
        row.max_rel_err = std::max(row.max_rel_err, r.max_rel_err);
        row.entries += r.entries;
      }
    }
  }
  row.pass = row.max_rel_err <= row.tolerance;
  return row;
}

}  // namespace

std::vector<AuditRow> audit_variants(const AuditConfig& cfg) {
  std::vector<AuditRow> rows;
  rows.push_back(run_case("simaffinity",
                          loss_builder(variant_config(LossVariant::SimAffinity, 0.01)), cfg));
  rows.push_back(run_case("simwhitening",
                          loss_builder(variant_config(LossVariant::SimWhitening, 0.01)), cfg));
  rows.push_back(run_case("simtrace",
                          loss_builder(variant_config(LossVariant::SimTrace, 0.0)), cfg));
  rows.push_back(run_case("infonce",
                          loss_builder(variant_config(LossVariant::InfoNce, 0.0)), cfg));
  return rows;
}

std::vector<AuditRow> audit_terms(const AuditConfig& cfg) {
  std::vector<AuditRow> rows;
  rows.push_back(run_case("affinity_xent",
                          loss_builder(variant_config(LossVariant::SimAffinity, 0.0)), cfg));
  rows.push_back(run_case("whitened_xent",
                          loss_builder(variant_config(LossVariant::SimWhitening, 0.0)), cfg));
  rows.push_back(run_case("trace_objective",
                          loss_builder(variant_config(LossVariant::SimTrace, 0.0)), cfg));
  rows.push_back(run_case("symmetry_norm",
                          symmetry_builder(variant_config(LossVariant::SimAffinity, 0.0)), cfg));
  rows.push_back(run_case("symmetry_norm_whitened",
                          symmetry_builder(variant_config(LossVariant::SimWhitening, 0.0)), cfg));
  rows.push_back(run_case("composite_plain",
                          loss_builder(variant_config(LossVariant::SimAffinity, 0.01)), cfg));
  rows.push_back(run_case("composite_whitened",
                          loss_builder(variant_config(LossVariant::SimWhitening, 0.01)), cfg));
  rows.push_back(run_case("paired_xent",
                          loss_builder(variant_config(LossVariant::InfoNce, 0.0)), cfg));
  return rows;
}

void require_all_pass(const std::vector<AuditRow>& rows) {
  for (const AuditRow& row : rows) {
    if (!row.pass) {
      raise(ErrorKind::Audit, "gradient audit failed for " + row.name +
                                  ": max rel err " + std::to_string(row.max_rel_err) +
                                  " exceeds " + std::to_string(row.tolerance));
    }
  }
}

}  // namespace uniclr::gradcheck
