#include "uniclr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "uniclr/errors.hpp"
#include "uniclr/rng.hpp"

namespace uniclr {

namespace {

// Columns scaled to unit norm; a vanishing column stays zero so a collapsed
// embedding still evaluates (its similarities are all zero).
Matrix unit_cols(const Matrix& m) {
  Matrix out = m;
  for (Index c = 0; c < out.cols(); ++c) {
    const double n = out.col(c).norm();
    if (n > 1e-12) out.col(c) /= n;
  }
  return out;
}

}  // namespace

KnnReport knn_eval(const Matrix& train_features, const std::vector<int>& train_labels,
                   const Matrix& test_features, const std::vector<int>& test_labels,
                   int k, int num_classes) {
  const Index n_train = train_features.cols();
  const Index n_test = test_features.cols();
  require(n_train >= 1 && n_test >= 1, ErrorKind::Degenerate,
          "knn_eval: empty train or test set");
  require(train_features.rows() == test_features.rows(), ErrorKind::Dimension,
          "knn_eval: train and test feature dimensions differ");
  require(static_cast<Index>(train_labels.size()) == n_train &&
              static_cast<Index>(test_labels.size()) == n_test,
          ErrorKind::Dimension, "knn_eval: label counts do not match features");
  require(k >= 1 && static_cast<Index>(k) <= n_train, ErrorKind::Contract,
          "knn_eval: k must be in [1, train size]");
  require(num_classes >= 1, ErrorKind::Contract, "knn_eval: num_classes must be >= 1");

  const Matrix train_n = unit_cols(train_features);
  const Matrix test_n = unit_cols(test_features);
  Matrix sims = train_n.transpose() * test_n;  // n_train x n_test

  KnnReport report;
  report.k = k;
  report.num_test = n_test;
  std::vector<Index> order(static_cast<std::size_t>(n_train));
  std::vector<int> votes(static_cast<std::size_t>(num_classes));
  for (Index j = 0; j < n_test; ++j) {
    for (Index i = 0; i < n_train; ++i) order[static_cast<std::size_t>(i)] = i;
    std::partial_sort(order.begin(), order.begin() + k, order.end(),
                      [&](Index a, Index b) {
                        const double sa = sims(a, j);
                        const double sb = sims(b, j);
                        if (sa != sb) return sa > sb;
                        return a < b;
                      });
    std::fill(votes.begin(), votes.end(), 0);
    for (int i = 0; i < k; ++i)
      ++votes[static_cast<std::size_t>(
          train_labels[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])])];
    int best = 0;
    for (int c = 1; c < num_classes; ++c)
      if (votes[static_cast<std::size_t>(c)] > votes[static_cast<std::size_t>(best)])
        best = c;
    if (best == test_labels[static_cast<std::size_t>(j)]) ++report.correct;
  }
  report.accuracy =
      static_cast<double>(report.correct) / static_cast<double>(report.num_test);
  return report;
}

ProbeReport linear_probe(const Matrix& train_features,
                         const std::vector<int>& train_labels,
                         const Matrix& test_features,
                         const std::vector<int>& test_labels, int num_classes,
                         const ProbeConfig& cfg) {
  const Index d = train_features.rows();
  const Index m = train_features.cols();
  require(m >= 1 && test_features.cols() >= 1, ErrorKind::Degenerate,
          "linear_probe: empty train or test set");
  require(train_features.rows() == test_features.rows(), ErrorKind::Dimension,
          "linear_probe: train and test feature dimensions differ");
  require(static_cast<Index>(train_labels.size()) == m &&
              static_cast<Index>(test_labels.size()) == test_features.cols(),
          ErrorKind::Dimension, "linear_probe: label counts do not match features");
  require(num_classes >= 1, ErrorKind::Contract,
          "linear_probe: num_classes must be >= 1");
  require(cfg.epochs >= 1 && std::isfinite(cfg.lr) && cfg.lr > 0.0,
          ErrorKind::Config, "linear_probe: epochs must be >= 1 and lr > 0");

  Rng rng(cfg.seed);
  const double limit = std::sqrt(6.0 / static_cast<double>(d + num_classes));
  Matrix w = rng.uniform_matrix(num_classes, d, -limit, limit);
  Matrix b = Matrix::Zero(num_classes, 1);

  Matrix probs(num_classes, m);
  double loss = 0.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Matrix logits = w * train_features + b.replicate(1, m);
    loss = 0.0;
    for (Index j = 0; j < m; ++j) {
      const double mx = logits.col(j).maxCoeff();
      Eigen::ArrayXd e = (logits.col(j).array() - mx).exp();
      const double z = e.sum();
      probs.col(j) = (e / z).matrix();
      loss += -(logits(train_labels[static_cast<std::size_t>(j)], j) - mx) + std::log(z);
    }
    loss /= static_cast<double>(m);
    Matrix grad = probs;
    for (Index j = 0; j < m; ++j)
      grad(train_labels[static_cast<std::size_t>(j)], j) -= 1.0;
    grad /= static_cast<double>(m);
    const double lr =
        cfg.lr * 0.5 *
        (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) /
                        static_cast<double>(cfg.epochs)));
    w -= lr * (grad * train_features.transpose());
    b -= lr * grad.rowwise().sum();
  }

  ProbeReport report;
  report.epochs = cfg.epochs;
  report.final_train_loss = loss;
  report.num_test = test_features.cols();
  Matrix test_logits = w * test_features + b.replicate(1, test_features.cols());
  for (Index j = 0; j < test_features.cols(); ++j) {
    Index pred = 0;
    for (Index c = 1; c < num_classes; ++c)
      if (test_logits(c, j) > test_logits(pred, j)) pred = c;  // ties keep smaller
    if (static_cast<int>(pred) == test_labels[static_cast<std::size_t>(j)])
      ++report.correct;
  }
  report.accuracy =
      static_cast<double>(report.correct) / static_cast<double>(report.num_test);
  return report;
}

CollapseReport collapse_metrics(const Matrix& features) {
  require(features.rows() >= 1 && features.cols() >= 1, ErrorKind::Degenerate,
          "collapse_metrics: empty features");
  require(features.allFinite(), ErrorKind::Numeric,
          "collapse_metrics: non-finite features");
  const Index d = features.rows();
  const Index m = features.cols();
  CollapseReport report;
  Matrix mean = features.rowwise().mean();
  Matrix centered = features - mean.replicate(1, m);
  report.per_dim_std.resize(d);
  for (Index r = 0; r < d; ++r)
    report.per_dim_std(r) =
        std::sqrt(centered.row(r).squaredNorm() / static_cast<double>(m));
  report.mean_std = report.per_dim_std.mean();

  Eigen::BDCSVD<Eigen::MatrixXd> svd{Eigen::MatrixXd(centered)};
  const Eigen::VectorXd& sv = svd.singularValues();
  const double total = sv.sum();
  if (!(total > 0.0)) {
    report.effective_rank = 1.0;
    return report;
  }
  double entropy = 0.0;
  for (Index i = 0; i < sv.size(); ++i) {
    const double p = sv(i) / total;
    if (p > 0.0) entropy -= p * std::log(p);
  }
  report.effective_rank = std::max(1.0, std::exp(entropy));
  return report;
}

}  // namespace uniclr
