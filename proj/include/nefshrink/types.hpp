#pragma once

#include <Eigen/Dense>

namespace nefshrink {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IntMatrix = Eigen::MatrixXi;

// Observations Y together with the within-group sizes tau (same shape).
struct DataMatrix {
    Matrix y;
    IntMatrix tau;

    Index rows() const { return y.rows(); }
    Index cols() const { return y.cols(); }

    // max_{i,l} |Y_il|; bounds every admissible shrinkage location.
    double data_range() const;

    // Throws std::invalid_argument on shape mismatch, empty data,
    // non-finite entries or tau < 1.
    void validate() const;
};

// All-ones tau of the given shape.
IntMatrix unit_tau(Index n, Index p);

}  // namespace nefshrink
