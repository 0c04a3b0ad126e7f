#ifndef UNICLR_EVAL_HPP
#define UNICLR_EVAL_HPP

#include <cstdint>
#include <vector>

#include "uniclr/matrix.hpp"

namespace uniclr {

struct KnnReport {
  int k = 0;
  Index num_test = 0;
  Index correct = 0;
  double accuracy = 0.0;  // exactly correct / num_test
};

// Cosine-similarity majority vote. Neighbor order ties break toward the
// smaller train index; vote ties break toward the smaller label.
KnnReport knn_eval(const Matrix& train_features, const std::vector<int>& train_labels,
                   const Matrix& test_features, const std::vector<int>& test_labels,
                   int k, int num_classes);

struct ProbeConfig {
  int epochs = 200;
  double lr = 0.5;
  std::uint64_t seed = 0;
};

struct ProbeReport {
  Index num_test = 0;
  Index correct = 0;
  double accuracy = 0.0;
  double final_train_loss = 0.0;
  int epochs = 0;
};

// Multinomial logistic regression on frozen features: full-batch gradient
// descent with a cosine-decayed learning rate, Glorot-initialized weights.
ProbeReport linear_probe(const Matrix& train_features,
                         const std::vector<int>& train_labels,
                         const Matrix& test_features,
                         const std::vector<int>& test_labels, int num_classes,
                         const ProbeConfig& cfg);

struct CollapseReport {
  Vector per_dim_std;      // population std of each feature dimension
  double mean_std = 0.0;
  double effective_rank = 1.0;  // exp(entropy of normalized singular values)
};

// Diagnostics on centered features (one sample per column). Constant features
// give effective rank exactly 1; the upper bound is min(D, M).
CollapseReport collapse_metrics(const Matrix& features);

}  // namespace uniclr

#endif
