#ifndef UNICLR_WHITENING_HPP
#define UNICLR_WHITENING_HPP

#include <utility>

#include "uniclr/matrix.hpp"
#include "uniclr/tape.hpp"

namespace uniclr {

// Additive ridge floor: regularization never drops below this even when
// eps_scale * tr(Sigma)/D underflows it (or eps_scale is zero).
inline constexpr double kEpsilonFloor = 1e-10;

// Batch statistics of a pair of views, taken over the concatenated columns
// [Z Z'] (width 2N). sigma_eps is the unnormalized second moment of the
// centered columns plus epsilon * I.
struct WhiteningState {
  Matrix mean;       // D x 1
  Matrix sigma_eps;  // D x D, symmetric positive definite
  Matrix cholesky;   // lower factor L with L L^T = sigma_eps, positive diagonal
  double epsilon;    // ridge actually applied
};

// Hand-rolled lower Cholesky reading only the lower triangle. A pivot that is
// not strictly positive (or not finite) raises a conditioning error naming
// the pivot index.
Matrix cholesky_factor(const Matrix& spd);

// epsilon = max(eps_scale * tr(sigma)/D, kEpsilonFloor); returns sigma+eps*I.
double epsilon_for(const Matrix& sigma, double eps_scale);

WhiteningState covariance_stats(const Matrix& z, const Matrix& z_prime,
                                double eps_scale);

// Centered-and-whitened views: L^{-1}(Z - mean), L^{-1}(Z' - mean).
std::pair<Matrix, Matrix> whiten_views(const WhiteningState& w, const Matrix& z,
                                       const Matrix& z_prime);

// sigma_eps^{-1} * b via the cached factor (two triangular solves).
Matrix solve_spd(const WhiteningState& w, const Matrix& b);

// Tape-side composition of the same statistics, so gradients flow through
// mean and covariance. sigma_stop_grad detaches sigma_eps (mean stays live).
struct CovarianceChain {
  Var mean;
  Var sigma_eps;
  Var z_centered;
  Var zp_centered;
};

CovarianceChain covariance_chain(Tape& t, Var z, Var z_prime, double eps_scale,
                                 bool sigma_stop_grad);

}  // namespace uniclr

#endif
