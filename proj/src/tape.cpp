#include "uniclr/tape.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "uniclr/whitening.hpp"

namespace uniclr {

namespace {

bool g_backward_fault = false;

std::string shape_of(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

// Lower triangle mirrored onto the upper one, diagonal kept as-is.
Matrix copyltu(const Matrix& m) {
  Matrix sl = m.template triangularView<Eigen::StrictlyLower>();
  Matrix out = sl + sl.transpose();
  out.diagonal() = m.diagonal();
  return out;
}

Matrix solve_lower(const Matrix& l, const Matrix& b) {
  return l.template triangularView<Eigen::Lower>().solve(b);
}

Matrix solve_lower_t(const Matrix& l, const Matrix& b) {
  return l.transpose().template triangularView<Eigen::Upper>().solve(b);
}

}  // namespace

void set_test_backward_fault(bool enabled) { g_backward_fault = enabled; }
bool test_backward_fault() { return g_backward_fault; }

Var Tape::push(Node&& n) {
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Tape::Node& Tape::node(int id) const {
  require(id >= 0 && id < size(), ErrorKind::Contract,
          "tape: node id " + std::to_string(id) + " out of range");
  return nodes_[static_cast<std::size_t>(id)];
}

Var Tape::leaf(const Matrix& value) {
  require(value.rows() > 0 && value.cols() > 0, ErrorKind::Degenerate,
          "tape: leaf must be non-empty, got " + shape_of(value));
  require(value.allFinite(), ErrorKind::Numeric,
          "tape: leaf contains non-finite values");
  Node n;
  n.kind = OpKind::Leaf;
  n.value = value;
  return push(std::move(n));
}

double Tape::scalar_value(Var v) const {
  const Matrix& m = value(v);
  require(is_scalar(m), ErrorKind::Contract,
          "tape: scalar_value on a " + shape_of(m) + " node");
  return m(0, 0);
}

const Matrix& Gradient::at(Var v) const {
  require(v.valid() && v.id < static_cast<int>(adjoints.size()),
          ErrorKind::Contract, "gradient: bad node id");
  return adjoints[static_cast<std::size_t>(v.id)];
}

Var matmul(Tape& t, Var a, Var b) {
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  require(av.cols() == bv.rows(), ErrorKind::Dimension,
          "matmul: " + shape_of(av) + " * " + shape_of(bv));
  Tape::Node n;
  n.kind = OpKind::MatMul;
  n.a = a.id;
  n.b = b.id;
  n.value = av * bv;
  return t.push(std::move(n));
}

Var transpose(Tape& t, Var a) {
  Tape::Node n;
  n.kind = OpKind::Transpose;
  n.a = a.id;
  n.value = t.value(a).transpose();
  return t.push(std::move(n));
}

namespace {
Var binary_same_shape(Tape& t, Var a, Var b, OpKind kind, const char* name) {
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  require(av.rows() == bv.rows() && av.cols() == bv.cols(), ErrorKind::Dimension,
          std::string(name) + ": " + shape_of(av) + " vs " + shape_of(bv));
  Tape::Node n;
  n.kind = kind;
  n.a = a.id;
  n.b = b.id;
  n.value = (kind == OpKind::Add) ? Matrix(av + bv) : Matrix(av - bv);
  return t.push(std::move(n));
}
}  // namespace

Var add(Tape& t, Var a, Var b) { return binary_same_shape(t, a, b, OpKind::Add, "add"); }
Var sub(Tape& t, Var a, Var b) { return binary_same_shape(t, a, b, OpKind::Sub, "sub"); }

Var scale(Tape& t, Var a, double s) {
  Tape::Node n;
  n.kind = OpKind::Scale;
  n.a = a.id;
  n.factor = s;
  n.value = s * t.value(a);
  return t.push(std::move(n));
}

namespace {
Var colvec_op(Tape& t, Var a, Var col, OpKind kind, const char* name) {
  const Matrix& av = t.value(a);
  const Matrix& cv = t.value(col);
  require(cv.cols() == 1 && cv.rows() == av.rows(), ErrorKind::Dimension,
          std::string(name) + ": column vector " + shape_of(cv) + " against " + shape_of(av));
  Tape::Node n;
  n.kind = kind;
  n.a = a.id;
  n.b = col.id;
  Matrix rep = cv.replicate(1, av.cols());
  n.value = (kind == OpKind::AddColVec) ? Matrix(av + rep) : Matrix(av - rep);
  return t.push(std::move(n));
}
}  // namespace

Var add_colvec(Tape& t, Var a, Var col) {
  return colvec_op(t, a, col, OpKind::AddColVec, "add_colvec");
}

Var sub_colvec(Tape& t, Var a, Var col) {
  return colvec_op(t, a, col, OpKind::SubColVec, "sub_colvec");
}

Var concat_cols(Tape& t, Var a, Var b) {
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  require(av.rows() == bv.rows(), ErrorKind::Dimension,
          "concat_cols: " + shape_of(av) + " with " + shape_of(bv));
  Tape::Node n;
  n.kind = OpKind::ConcatCols;
  n.a = a.id;
  n.b = b.id;
  n.value.resize(av.rows(), av.cols() + bv.cols());
  n.value.leftCols(av.cols()) = av;
  n.value.rightCols(bv.cols()) = bv;
  return t.push(std::move(n));
}

Var row_mean(Tape& t, Var a) {
  const Matrix& av = t.value(a);
  Tape::Node n;
  n.kind = OpKind::RowMean;
  n.a = a.id;
  n.value = av.rowwise().mean();
  return t.push(std::move(n));
}

Var relu(Tape& t, Var a) {
  Tape::Node n;
  n.kind = OpKind::Relu;
  n.a = a.id;
  n.value = t.value(a).cwiseMax(0.0);
  return t.push(std::move(n));
}

Var stop_gradient(Tape& t, Var a) {
  Tape::Node n;
  n.kind = OpKind::StopGradient;
  n.a = a.id;
  n.value = t.value(a);
  return t.push(std::move(n));
}

Var sum(Tape& t, Var a) {
  Tape::Node n;
  n.kind = OpKind::Sum;
  n.a = a.id;
  n.value = scalar_matrix(t.value(a).sum());
  return t.push(std::move(n));
}

Var trace(Tape& t, Var a) {
  const Matrix& av = t.value(a);
  require(av.rows() == av.cols(), ErrorKind::Dimension,
          "trace: matrix is " + shape_of(av));
  Tape::Node n;
  n.kind = OpKind::Trace;
  n.a = a.id;
  n.value = scalar_matrix(av.trace());
  return t.push(std::move(n));
}

Var frobenius_norm(Tape& t, Var a) {
  Tape::Node n;
  n.kind = OpKind::FrobeniusNorm;
  n.a = a.id;
  n.value = scalar_matrix(t.value(a).norm());
  return t.push(std::move(n));
}

Var l2_normalize_cols(Tape& t, Var a) {
  const Matrix& av = t.value(a);
  require(av.allFinite(), ErrorKind::Numeric,
          "l2_normalize_cols: non-finite input");
  Tape::Node n;
  n.kind = OpKind::L2NormalizeCols;
  n.a = a.id;
  n.value.resize(av.rows(), av.cols());
  n.cache.resize(1, av.cols());
  for (Index c = 0; c < av.cols(); ++c) {
    const double norm = av.col(c).norm();
    require(norm > kNormFloor, ErrorKind::Degenerate,
            "l2_normalize_cols: column " + std::to_string(c) + " has norm " +
                std::to_string(norm));
    n.cache(0, c) = norm;
    n.value.col(c) = av.col(c) / norm;
  }
  return t.push(std::move(n));
}

Var batch_standardize(Tape& t, Var a) {
  const Matrix& av = t.value(a);
  require(av.cols() >= 2, ErrorKind::Degenerate,
          "batch_standardize: needs at least 2 columns, got " + shape_of(av));
  const double nc = static_cast<double>(av.cols());
  Tape::Node n;
  n.kind = OpKind::BatchStandardize;
  n.a = a.id;
  n.value.resize(av.rows(), av.cols());
  n.cache2.resize(av.rows(), 1);
  for (Index r = 0; r < av.rows(); ++r) {
    const double m = av.row(r).mean();
    const double var = (av.row(r).array() - m).square().sum() / nc;
    const double s = std::sqrt(var + kStandardizeEps);
    n.cache2(r, 0) = s;
    n.value.row(r) = ((av.row(r).array() - m) / s).matrix();
  }
  return t.push(std::move(n));
}

Var row_softmax_xent(Tape& t, Var logits, const std::vector<int>& targets) {
  const Matrix& s = t.value(logits);
  require(static_cast<Index>(targets.size()) == s.rows(), ErrorKind::Dimension,
          "row_softmax_xent: " + std::to_string(targets.size()) +
              " targets for " + shape_of(s));
  Tape::Node n;
  n.kind = OpKind::RowSoftmaxXent;
  n.a = logits.id;
  n.targets.assign(targets.begin(), targets.end());
  n.cache.resize(s.rows(), s.cols());
  double total = 0.0;
  for (Index r = 0; r < s.rows(); ++r) {
    const int tg = targets[static_cast<std::size_t>(r)];
    require(tg >= 0 && tg < s.cols(), ErrorKind::IndexRange,
            "row_softmax_xent: target " + std::to_string(tg) + " out of range for row " +
                std::to_string(r));
    const double mx = s.row(r).maxCoeff();
    Eigen::ArrayXd e = (s.row(r).transpose().array() - mx).exp();
    const double z = e.sum();
    n.cache.row(r) = (e / z).matrix().transpose();
    total += -(s(r, tg) - mx) + std::log(z);
  }
  n.value = scalar_matrix(total / static_cast<double>(s.rows()));
  return t.push(std::move(n));
}

Var masked_pair_xent(Tape& t, Var logits) {
  const Matrix& s = t.value(logits);
  require(s.rows() == s.cols(), ErrorKind::Dimension,
          "masked_pair_xent: matrix is " + shape_of(s));
  require(s.rows() >= 2 && s.rows() % 2 == 0, ErrorKind::Dimension,
          "masked_pair_xent: needs an even row count >= 2, got " + shape_of(s));
  const Index n2 = s.rows();
  const Index half = n2 / 2;
  Tape::Node n;
  n.kind = OpKind::MaskedPairXent;
  n.a = logits.id;
  n.cache = Matrix::Zero(n2, n2);
  n.targets.resize(static_cast<std::size_t>(n2));
  double total = 0.0;
  for (Index r = 0; r < n2; ++r) {
    const Index tg = (r + half) % n2;
    n.targets[static_cast<std::size_t>(r)] = static_cast<int>(tg);
    double mx = -std::numeric_limits<double>::infinity();
    for (Index c = 0; c < n2; ++c)
      if (c != r) mx = std::max(mx, s(r, c));
    double z = 0.0;
    for (Index c = 0; c < n2; ++c)
      if (c != r) z += std::exp(s(r, c) - mx);
    for (Index c = 0; c < n2; ++c)
      if (c != r) n.cache(r, c) = std::exp(s(r, c) - mx) / z;
    total += -(s(r, tg) - mx) + std::log(z);
  }
  n.value = scalar_matrix(total / static_cast<double>(n2));
  return t.push(std::move(n));
}

Var regularize_spd(Tape& t, Var sigma, double eps_scale) {
  const Matrix& sv = t.value(sigma);
  require(sv.rows() == sv.cols(), ErrorKind::Dimension,
          "regularize_spd: matrix is " + shape_of(sv));
  require(std::isfinite(eps_scale) && eps_scale >= 0.0, ErrorKind::Contract,
          "regularize_spd: eps_scale must be finite and >= 0");
  Tape::Node n;
  n.kind = OpKind::RegularizeSpd;
  n.a = sigma.id;
  n.factor = eps_scale;
  const double scaled = eps_scale * sv.trace() / static_cast<double>(sv.rows());
  n.flag = !(scaled >= kEpsilonFloor);  // floor active (also when scaled is NaN)
  n.eps = n.flag ? kEpsilonFloor : scaled;
  n.value = sv;
  n.value.diagonal().array() += n.eps;
  return t.push(std::move(n));
}

Var solve_spd(Tape& t, Var sigma, Var b) {
  const Matrix& sv = t.value(sigma);
  const Matrix& bv = t.value(b);
  require(sv.rows() == sv.cols(), ErrorKind::Dimension,
          "solve_spd: matrix is " + shape_of(sv));
  require(bv.rows() == sv.rows(), ErrorKind::Dimension,
          "solve_spd: rhs " + shape_of(bv) + " against " + shape_of(sv));
  Tape::Node n;
  n.kind = OpKind::SolveSpd;
  n.a = sigma.id;
  n.b = b.id;
  Matrix sym = 0.5 * (sv + sv.transpose());
  n.cache = cholesky_factor(sym);
  n.value = solve_lower_t(n.cache, solve_lower(n.cache, bv));
  return t.push(std::move(n));
}

Var whiten_lower(Tape& t, Var sigma, Var c) {
  const Matrix& sv = t.value(sigma);
  const Matrix& cv = t.value(c);
  require(sv.rows() == sv.cols(), ErrorKind::Dimension,
          "whiten_lower: matrix is " + shape_of(sv));
  require(cv.rows() == sv.rows(), ErrorKind::Dimension,
          "whiten_lower: rhs " + shape_of(cv) + " against " + shape_of(sv));
  Tape::Node n;
  n.kind = OpKind::WhitenLower;
  n.a = sigma.id;
  n.b = c.id;
  Matrix sym = 0.5 * (sv + sv.transpose());
  n.cache = cholesky_factor(sym);
  n.value = solve_lower(n.cache, cv);
  return t.push(std::move(n));
}

Gradient backward(const Tape& tape, Var root) {
  require(root.valid() && root.id < tape.size(), ErrorKind::Contract,
          "backward: invalid root");
  require(is_scalar(tape.value(root)), ErrorKind::Contract,
          "backward: root must be 1x1, got " +
              shape_of(tape.value(root)));
  Gradient g;
  g.adjoints.resize(static_cast<std::size_t>(tape.size()));
  std::vector<bool> touched(static_cast<std::size_t>(tape.size()), false);
  for (int id = 0; id < tape.size(); ++id) {
    const Matrix& v = tape.node(id).value;
    g.adjoints[static_cast<std::size_t>(id)] = Matrix::Zero(v.rows(), v.cols());
  }
  g.adjoints[static_cast<std::size_t>(root.id)](0, 0) = 1.0;
  touched[static_cast<std::size_t>(root.id)] = true;

  auto acc = [&](int id, const Matrix& delta) {
    g.adjoints[static_cast<std::size_t>(id)] += delta;
    touched[static_cast<std::size_t>(id)] = true;
  };

  for (int id = root.id; id >= 0; --id) {
    if (!touched[static_cast<std::size_t>(id)]) continue;
    const Tape::Node& nd = tape.node(id);
    const Matrix& G = g.adjoints[static_cast<std::size_t>(id)];
    switch (nd.kind) {
      case OpKind::Leaf:
      case OpKind::StopGradient:
        break;
      case OpKind::MatMul: {
        const Matrix& av = tape.node(nd.a).value;
        const Matrix& bv = tape.node(nd.b).value;
        Matrix da = G * bv.transpose();
        if (g_backward_fault) da *= 1.05;
        acc(nd.a, da);
        acc(nd.b, av.transpose() * G);
        break;
      }
      case OpKind::Transpose:
        acc(nd.a, G.transpose());
        break;
      case OpKind::Add:
        acc(nd.a, G);
        acc(nd.b, G);
        break;
      case OpKind::Sub:
        acc(nd.a, G);
        acc(nd.b, Matrix(-G));
        break;
      case OpKind::Scale:
        acc(nd.a, Matrix(nd.factor * G));
        break;
      case OpKind::AddColVec:
        acc(nd.a, G);
        acc(nd.b, Matrix(G.rowwise().sum()));
        break;
      case OpKind::SubColVec:
        acc(nd.a, G);
        acc(nd.b, Matrix(-G.rowwise().sum()));
        break;
      case OpKind::ConcatCols: {
        const Index na = tape.node(nd.a).value.cols();
        const Index nb = tape.node(nd.b).value.cols();
        acc(nd.a, Matrix(G.leftCols(na)));
        acc(nd.b, Matrix(G.rightCols(nb)));
        break;
      }
      case OpKind::RowMean: {
        const Matrix& av = tape.node(nd.a).value;
        const double inv = 1.0 / static_cast<double>(av.cols());
        acc(nd.a, Matrix((inv * G).replicate(1, av.cols())));
        break;
      }
      case OpKind::Relu: {
        const Matrix& av = tape.node(nd.a).value;
        Matrix mask = (av.array() > 0.0).cast<double>().matrix();
        acc(nd.a, Matrix(G.cwiseProduct(mask)));
        break;
      }
      case OpKind::Sum: {
        const Matrix& av = tape.node(nd.a).value;
        acc(nd.a, Matrix(Matrix::Constant(av.rows(), av.cols(), G(0, 0))));
        break;
      }
      case OpKind::Trace: {
        const Matrix& av = tape.node(nd.a).value;
        Matrix d = Matrix::Zero(av.rows(), av.cols());
        d.diagonal().setConstant(G(0, 0));
        acc(nd.a, d);
        break;
      }
      case OpKind::FrobeniusNorm: {
        const Matrix& av = tape.node(nd.a).value;
        const double norm = nd.value(0, 0);
        if (norm > 0.0) acc(nd.a, Matrix((G(0, 0) / norm) * av));
        // subgradient 0 at the zero matrix: accumulate nothing
        break;
      }
      case OpKind::L2NormalizeCols: {
        const Matrix& y = nd.value;
        Matrix da(y.rows(), y.cols());
        for (Index c = 0; c < y.cols(); ++c) {
          const double dot = y.col(c).dot(G.col(c));
          da.col(c) = (G.col(c) - dot * y.col(c)) / nd.cache(0, c);
        }
        acc(nd.a, da);
        break;
      }
      case OpKind::BatchStandardize: {
        const Matrix& y = nd.value;
        const double nc = static_cast<double>(y.cols());
        Matrix da(y.rows(), y.cols());
        for (Index r = 0; r < y.rows(); ++r) {
          const double mg = G.row(r).mean();
          const double mgy = (G.row(r).array() * y.row(r).array()).sum() / nc;
          da.row(r) = ((G.row(r).array() - mg - y.row(r).array() * mgy) / nd.cache2(r, 0)).matrix();
        }
        acc(nd.a, da);
        break;
      }
      case OpKind::RowSoftmaxXent: {
        Matrix da = nd.cache;
        for (Index r = 0; r < da.rows(); ++r)
          da(r, nd.targets[static_cast<std::size_t>(r)]) -= 1.0;
        da *= G(0, 0) / static_cast<double>(da.rows());
        acc(nd.a, da);
        break;
      }
      case OpKind::MaskedPairXent: {
        Matrix da = nd.cache;  // diagonal is exactly zero
        for (Index r = 0; r < da.rows(); ++r)
          da(r, nd.targets[static_cast<std::size_t>(r)]) -= 1.0;
        da *= G(0, 0) / static_cast<double>(da.rows());
        acc(nd.a, da);
        break;
      }
      case OpKind::RegularizeSpd: {
        Matrix da = G;
        if (!nd.flag)
          da.diagonal().array() +=
              (nd.factor / static_cast<double>(G.rows())) * G.trace();
        acc(nd.a, da);
        break;
      }
      case OpKind::SolveSpd: {
        const Matrix& x = nd.value;
        Matrix db = solve_lower_t(nd.cache, solve_lower(nd.cache, G));
        acc(nd.b, db);
        acc(nd.a, Matrix(-0.5 * (db * x.transpose() + x * db.transpose())));
        break;
      }
      case OpKind::WhitenLower: {
        const Matrix& y = nd.value;
        const Matrix& l = nd.cache;
        Matrix dc = solve_lower_t(l, G);
        acc(nd.b, dc);
        Matrix lbar = Matrix(-dc * y.transpose())
                          .template triangularView<Eigen::Lower>();
        Matrix m = copyltu(l.transpose() * lbar);
        Matrix c1 = solve_lower_t(l, m);
        Matrix sbar = 0.5 * Matrix(solve_lower_t(l, Matrix(c1.transpose())).transpose());
        acc(nd.a, sbar);
        break;
      }
    }
  }
  return g;
}

}  // namespace uniclr
