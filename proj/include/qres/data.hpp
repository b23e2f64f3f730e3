#pragma once

#include <Eigen/Dense>

#include "qres/common.hpp"

namespace qres {

// Axis-aligned domain box.
struct Box {
  Eigen::VectorXd lo, hi;
  int dims() const { return static_cast<int>(lo.size()); }
};

// Unlabeled interior points where the PDE residual is penalised. One row per
// point, one column per input dimension.
struct CollocationSet {
  Eigen::MatrixXd points;  // N_f x d0
};

// Supervised pairs (initial/boundary conditions or interior measurements).
struct LabeledSet {
  Eigen::MatrixXd inputs;   // N_u x d0
  Eigen::MatrixXd targets;  // N_u x d_h
};

}  // namespace qres
