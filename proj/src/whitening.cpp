#include "uniclr/whitening.hpp"

#include <cmath>
#include <string>

namespace uniclr {

Matrix cholesky_factor(const Matrix& spd) {
  require(spd.rows() == spd.cols(), ErrorKind::Dimension,
          "cholesky_factor: matrix is " + std::to_string(spd.rows()) + "x" +
              std::to_string(spd.cols()));
  const Index d = spd.rows();
  Matrix l = Matrix::Zero(d, d);
  for (Index j = 0; j < d; ++j) {
    double s = spd(j, j);
    for (Index k = 0; k < j; ++k) s -= l(j, k) * l(j, k);
    if (!(s > 0.0) || !std::isfinite(s))
      raise(ErrorKind::Conditioning,
            "cholesky_factor: pivot " + std::to_string(j) +
                " is not strictly positive (" + std::to_string(s) + ")");
    l(j, j) = std::sqrt(s);
    for (Index i = j + 1; i < d; ++i) {
      double v = spd(i, j);
      for (Index k = 0; k < j; ++k) v -= l(i, k) * l(j, k);
      l(i, j) = v / l(j, j);
    }
  }
  return l;
}

double epsilon_for(const Matrix& sigma, double eps_scale) {
  require(std::isfinite(eps_scale) && eps_scale >= 0.0, ErrorKind::Contract,
          "epsilon_for: eps_scale must be finite and >= 0");
  const double scaled = eps_scale * sigma.trace() / static_cast<double>(sigma.rows());
  return (scaled >= kEpsilonFloor) ? scaled : kEpsilonFloor;
}

WhiteningState covariance_stats(const Matrix& z, const Matrix& z_prime,
                                double eps_scale) {
  require(z.rows() == z_prime.rows() && z.cols() == z_prime.cols(),
          ErrorKind::Dimension, "covariance_stats: views differ in shape");
  require(z.rows() >= 1 && z.cols() >= 1, ErrorKind::Degenerate,
          "covariance_stats: empty views");
  require(z.allFinite() && z_prime.allFinite(), ErrorKind::Numeric,
          "covariance_stats: non-finite values in views");
  const Index d = z.rows();
  const Index n2 = 2 * z.cols();
  Matrix cat(d, n2);
  cat.leftCols(z.cols()) = z;
  cat.rightCols(z.cols()) = z_prime;
  WhiteningState w;
  w.mean = cat.rowwise().mean();
  Matrix centered = cat - w.mean.replicate(1, n2);
  w.sigma_eps = centered * centered.transpose();
  w.epsilon = epsilon_for(w.sigma_eps, eps_scale);
  w.sigma_eps.diagonal().array() += w.epsilon;
  w.cholesky = cholesky_factor(w.sigma_eps);
  return w;
}

std::pair<Matrix, Matrix> whiten_views(const WhiteningState& w, const Matrix& z,
                                       const Matrix& z_prime) {
  require(z.rows() == w.mean.rows() && z_prime.rows() == w.mean.rows(),
          ErrorKind::Dimension, "whiten_views: views do not match state dimension");
  auto lower = w.cholesky.triangularView<Eigen::Lower>();
  Matrix zc = z - w.mean.replicate(1, z.cols());
  Matrix zpc = z_prime - w.mean.replicate(1, z_prime.cols());
  return {lower.solve(zc), lower.solve(zpc)};
}

Matrix solve_spd(const WhiteningState& w, const Matrix& b) {
  require(b.rows() == w.sigma_eps.rows(), ErrorKind::Dimension,
          "solve_spd: rhs does not match state dimension");
  Matrix y = w.cholesky.triangularView<Eigen::Lower>().solve(b);
  return w.cholesky.transpose().triangularView<Eigen::Upper>().solve(y);
}

CovarianceChain covariance_chain(Tape& t, Var z, Var z_prime, double eps_scale,
                                 bool sigma_stop_grad) {
  const Matrix& zv = t.value(z);
  const Matrix& zpv = t.value(z_prime);
  require(zv.rows() == zpv.rows() && zv.cols() == zpv.cols(),
          ErrorKind::Dimension, "covariance_chain: views differ in shape");
  CovarianceChain c;
  Var cat = concat_cols(t, z, z_prime);
  c.mean = row_mean(t, cat);
  c.z_centered = sub_colvec(t, z, c.mean);
  c.zp_centered = sub_colvec(t, z_prime, c.mean);
  Var cat_centered = sub_colvec(t, cat, c.mean);
  Var sigma = matmul(t, cat_centered, transpose(t, cat_centered));
  c.sigma_eps = regularize_spd(t, sigma, eps_scale);
  if (sigma_stop_grad) c.sigma_eps = stop_gradient(t, c.sigma_eps);
  return c;
}

}  // namespace uniclr
