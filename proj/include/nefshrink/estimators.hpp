#pragma once

#include <optional>
#include <string_view>
#include <utility>

#include "nefshrink/families.hpp"
#include "nefshrink/optimize.hpp"
#include "nefshrink/types.hpp"

namespace nefshrink {

enum class Provenance { LocationShrinkage, GrandMeanShrinkage, NoShrinkage, FixedCompetitor, OracleLoss };

struct EstimateMatrix {
    Matrix theta_hat;
    Provenance provenance = Provenance::LocationShrinkage;
    Vector b;
    Vector mu;
};

// theta_hat_ij = (1 - b_i) Y_ij + b_i mu_j. Throws std::invalid_argument
// unless b is feasible for the tau ordering and |mu_j| <= max |Y|.
EstimateMatrix shrink_to_location(const DataMatrix& data, const Vector& b, const Vector& mu);

// Same with mu = grand_mean(Y); b must be feasible.
EstimateMatrix shrink_to_grand_mean(const DataMatrix& data, const Vector& b);

// Minimises the matching risk estimate and materialises the estimate.
std::pair<FitResult, EstimateMatrix> fit(const DataMatrix& data, const FamilySpec& spec,
                                         ShrinkageMode mode, const SolverOptions& opts = {});

enum class CompetitorKind { NoShrinkage, HalfToZero, OracleLoss };

std::string_view to_token(CompetitorKind kind);
CompetitorKind parse_competitor(std::string_view token);

// Fixed members of the location class used as benchmarks. OracleLoss needs
// the true means and minimises the realised loss over the class; it is a
// simulation-only reference, not an estimator.
EstimateMatrix competitor(const DataMatrix& data, CompetitorKind kind,
                          const std::optional<Matrix>& theta = std::nullopt,
                          const SolverOptions& opts = {});

// Realised-loss objective of the location class (for the loss oracle).
LocationObjective loss_objective(const DataMatrix& data, const Matrix& theta);

}  // namespace nefshrink
