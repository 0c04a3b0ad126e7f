#ifndef UNICLR_MATRIX_HPP
#define UNICLR_MATRIX_HPP

#include <Eigen/Dense>

namespace uniclr {

// All numerics run in float64. Row-major storage so serialized blobs are
// plain row-major byte runs of the in-memory data.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline Matrix scalar_matrix(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return m;
}

inline bool is_scalar(const Matrix& m) { return m.rows() == 1 && m.cols() == 1; }

}  // namespace uniclr

#endif
