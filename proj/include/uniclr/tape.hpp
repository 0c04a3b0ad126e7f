#ifndef UNICLR_TAPE_HPP
#define UNICLR_TAPE_HPP

#include <vector>

#include "uniclr/errors.hpp"
#include "uniclr/matrix.hpp"

namespace uniclr {

// Reverse-mode autodiff over dense float64 matrices. Ops append nodes to a
// Tape; backward() runs one adjoint sweep from a scalar (1x1) root. Scalars
// are represented as 1x1 matrices throughout.

enum class OpKind {
  Leaf,
  MatMul,
  Transpose,
  Add,
  Sub,
  Scale,
  AddColVec,
  SubColVec,
  ConcatCols,
  RowMean,
  Relu,
  StopGradient,
  Sum,
  Trace,
  FrobeniusNorm,
  L2NormalizeCols,
  BatchStandardize,
  RowSoftmaxXent,
  MaskedPairXent,
  RegularizeSpd,
  SolveSpd,
  WhitenLower,
};

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Tape {
 public:
  struct Node {
    OpKind kind = OpKind::Leaf;
    int a = -1;
    int b = -1;
    Matrix value;
    double factor = 0.0;          // Scale multiplier / RegularizeSpd eps_scale
    double eps = 0.0;             // epsilon actually applied (RegularizeSpd)
    bool flag = false;            // RegularizeSpd: epsilon floor was active
    std::vector<int> targets;     // RowSoftmaxXent column targets
    Matrix cache;                 // probs / Cholesky factor / per-column norms
    Matrix cache2;                // BatchStandardize per-row scale
  };

  // Creates an input node. Rejects empty and non-finite matrices.
  Var leaf(const Matrix& value);

  const Matrix& value(Var v) const { return node(v.id).value; }
  double scalar_value(Var v) const;

  int size() const { return static_cast<int>(nodes_.size()); }
  const Node& node(int id) const;

  // Internal to op implementations.
  Var push(Node&& n);

 private:
  std::vector<Node> nodes_;
};

// Per-node adjoints from one backward sweep. Leaves that do not influence the
// root keep exactly-zero adjoints.
struct Gradient {
  std::vector<Matrix> adjoints;
  const Matrix& at(Var v) const;
};

// Adjoint sweep seeded with d(root)/d(root) = [[1]]. The root must be 1x1.
Gradient backward(const Tape& tape, Var root);

// Elementwise / structural ops.
Var matmul(Tape& t, Var a, Var b);
Var transpose(Tape& t, Var a);
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double s);
Var add_colvec(Tape& t, Var a, Var col);   // col is D x 1, broadcast over columns
Var sub_colvec(Tape& t, Var a, Var col);
Var concat_cols(Tape& t, Var a, Var b);
Var row_mean(Tape& t, Var a);              // D x N -> D x 1
Var relu(Tape& t, Var a);
Var stop_gradient(Tape& t, Var a);         // identity forward, zero adjoint back

// Reductions to 1x1.
Var sum(Tape& t, Var a);
Var trace(Tape& t, Var a);
Var frobenius_norm(Tape& t, Var a);        // subgradient 0 at the zero matrix

// Feature-space ops. Columns are samples.
Var l2_normalize_cols(Tape& t, Var a);     // column norm <= 1e-12 is an error
Var batch_standardize(Tape& t, Var a);     // per-row standardization, eps 1e-5

// Mean cross-entropy over rows of a logits matrix against integer column
// targets; numerically stabilized by row-max subtraction.
Var row_softmax_xent(Tape& t, Var logits, const std::vector<int>& targets);

// Paired-view cross-entropy over a 2N x 2N similarity matrix: row i pairs
// with column (i+N) mod 2N and the diagonal is excluded from every
// denominator, leaving 2N-1 terms per row.
Var masked_pair_xent(Tape& t, Var logits);

// SPD-flavoured primitives used by the whitening losses. The two
// Cholesky-based ops symmetrize their first input as (S + S^T)/2 before
// factorizing, so entrywise finite differences against raw inputs are
// well defined.
Var regularize_spd(Tape& t, Var sigma, double eps_scale);  // sigma + eps*I
Var solve_spd(Tape& t, Var sigma, Var b);                  // sigma^{-1} b
Var whiten_lower(Tape& t, Var sigma, Var c);               // L^{-1} c, LL^T = sigma

// Fault-injection hook for audit tooling: when enabled, MatMul's backward
// rule is deliberately wrong (left adjoint scaled by 1.05) so a gradient
// audit must fail. Never enable outside tests or the gradcheck CLI.
void set_test_backward_fault(bool enabled);
bool test_backward_fault();

inline constexpr double kStandardizeEps = 1e-5;
inline constexpr double kNormFloor = 1e-12;

}  // namespace uniclr

#endif
