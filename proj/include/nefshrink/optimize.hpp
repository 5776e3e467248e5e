#pragma once

#include <span>
#include <vector>

#include "nefshrink/families.hpp"
#include "nefshrink/types.hpp"

namespace nefshrink {

// Rows grouped by their tau row sum, groups listed by descending sum.
// A weight vector b is feasible iff it lies in [0,1], is constant within each
// group and is nondecreasing along the group order (rows with larger total
// tau shrink less).
class OrderSpec {
public:
    static OrderSpec from_row_sums(std::span<const long long> row_sums);
    static OrderSpec from_tau(const IntMatrix& tau);

    Index size() const { return static_cast<Index>(group_of_.size()); }
    const std::vector<std::vector<Index>>& groups() const { return groups_; }
    std::size_t group_of(Index row) const { return group_of_[static_cast<std::size_t>(row)]; }
    // Rows in order of descending tau row sum (ties by row index).
    std::vector<Index> permutation() const;

    // Exact check, no tolerance.
    bool is_feasible(const Vector& b) const;

private:
    std::vector<std::vector<Index>> groups_;
    std::vector<std::size_t> group_of_;
};

enum class MuUpdate { ClosedForm };

struct SolverOptions {
    int max_outer_iterations = 200;
    double tolerance = 1e-10;  // absolute decrease of the objective
    MuUpdate mu_update = MuUpdate::ClosedForm;

    void validate() const;
};

enum class ShrinkageMode { Location, GrandMean };

struct FitResult {
    ShrinkageMode mode = ShrinkageMode::Location;
    Vector b;
    Vector mu;  // the fitted location, or the grand mean in GrandMean mode
    double objective = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> trace;  // objective after each outer iteration of the winning run
};

// min sum_i w_i (b_i - t_i)^2 over feasible b (isotonic regression by pool
// adjacent violators on tie-group blocks, then clipping to [0,1]).
// Zero-weight rows take the value forced by their block, otherwise the
// feasible value nearest their clipped target.
Vector isotonic_box_projection(const Vector& targets, const Vector& weights, const OrderSpec& order);

// min sum_i (w_i b_i^2 - 2 g_i b_i) over feasible b. Rows with w_i = 0 and
// g_i != 0 are linear and pushed to the bound allowed by their neighbours;
// blocks with no weight and no linear term take the feasible value nearest
// `fallback`.
Vector project_monotone_quadratic(const Vector& weights, const Vector& linear,
                                  const Vector& fallback, const OrderSpec& order);

// Separable objective shared by the URE and the realised loss of the
// location class:
//   F(b, mu) = (1/np) sum_ij [ b_i^2 (Y_ij - mu_j)^2 - 2 b_i (offset_ij + mu_j slope_ij) ]
//              + constant.
struct LocationObjective {
    Matrix y;
    Matrix offset;
    Matrix slope;  // may be empty, meaning zero
    double constant = 0.0;

    double value(const Vector& b, const Vector& mu) const;
};

LocationObjective ure_objective(const DataMatrix& data, const FamilySpec& spec);

// Coordinate descent over (b, mu) in the feasible set with |mu_j| <= bound,
// alternating the exact b-step (monotone projection) and the exact mu-step
// (clipped weighted mean). One run per start location; the best run wins.
FitResult coordinate_descent(const LocationObjective& objective, const OrderSpec& order,
                             double bound, std::span<const Vector> starts,
                             const SolverOptions& opts);

// Start locations used by minimize_ure: clipped grand mean, zero, the
// coordinatewise median and, for small n, every data row.
std::vector<Vector> default_starts(const Matrix& y, double bound);

FitResult minimize_ure(const DataMatrix& data, const FamilySpec& spec,
                       const SolverOptions& opts = {});

// Exact minimiser of the AURE over the monotone box (n >= 2).
FitResult minimize_aure(const DataMatrix& data, const FamilySpec& spec);

struct GridOracleResult {
    Vector b;
    Vector mu;
    double value = 0.0;
};

// Exhaustive URE minimum over feasible b on the grid {0, r, ..., 1} and mu on
// {-M, -M + r, ...} U {M} per coordinate. 1/r must be an integer. Guarded to
// n <= 5 and p <= 3.
GridOracleResult grid_oracle_ure(const DataMatrix& data, const FamilySpec& spec, double resolution);

}  // namespace nefshrink
