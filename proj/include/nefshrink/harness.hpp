#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "nefshrink/config.hpp"
#include "nefshrink/families.hpp"
#include "nefshrink/optimize.hpp"
#include "nefshrink/types.hpp"

namespace nefshrink {

// |URE - loss| at one (b, mu) of the location class.
double location_gap(const DataMatrix& data, const Matrix& theta, const FamilySpec& spec,
                    const Vector& b, const Vector& mu);

// |AURE - loss| at one b of the grand-mean class.
double grand_mean_gap(const DataMatrix& data, const Matrix& theta, const FamilySpec& spec,
                      const Vector& b);

// Lower-bound proxy for sup over the feasible set of |URE - loss|: the max
// over the corners b = 0 and b = 1 (at the fitted location and the clipped
// grand mean), the fitted point, and `random_points` seeded feasible pairs
// (sorted uniforms for b, uniform mu in the data box). Point k depends only
// on (seed, k), so a larger K evaluates a superset. Fits the URE when
// `fitted` is absent.
double estimate_sup_gap(const DataMatrix& data, const Matrix& theta, const FamilySpec& spec,
                        int random_points, std::uint64_t seed,
                        const std::optional<FitResult>& fitted = std::nullopt);

// The grand-mean counterpart over b alone.
double estimate_sup_gap_grand_mean(const DataMatrix& data, const Matrix& theta,
                                   const FamilySpec& spec, int random_points, std::uint64_t seed,
                                   const std::optional<FitResult>& fitted = std::nullopt);

struct ReplicationRecord {
    int rep = 0;
    int n = 0;
    int p = 0;
    std::string estimator;  // ure | aure | none | half_to_zero | oracle
    double loss = 0.0;
    double risk_estimate = 0.0;
    double sup_gap = 0.0;
    int iters = 0;
    bool converged = true;
};

struct AggregateRecord {
    int n = 0;
    int p = 0;
    std::string estimator;
    int count = 0;
    double mean_loss = 0.0, se_loss = 0.0;
    double mean_risk = 0.0, se_risk = 0.0;
    double mean_sup_gap = 0.0, se_sup_gap = 0.0;
    double mean_iters = 0.0, se_iters = 0.0;
    double frac_converged = 0.0, se_converged = 0.0;
};

struct ExperimentResult {
    std::vector<ReplicationRecord> records;  // ordered by (n, rep, estimator)
    std::vector<AggregateRecord> aggregates;  // ordered by (n, estimator)
};

// theta for grid point n, fixed across replications.
Matrix experiment_theta(const ExperimentConfig& config, int n, Index p);

// Runs every (n, replication) unit, `threads` at a time. The output depends
// only on the config.
ExperimentResult run_experiment(const ExperimentConfig& config, unsigned threads = 1);

std::vector<AggregateRecord> aggregate(const std::vector<ReplicationRecord>& records);

// Header, raw rows, then per-(n, estimator) aggregate rows whose `rep`
// column reads `mean` or `se`.
void write_records_csv(std::ostream& os, const ExperimentResult& result);
ExperimentResult read_records_csv(std::istream& is);

enum class RateMetric { MeanSupGap, MeanExcessLoss };

struct RatePoint {
    double n;
    double value;
};

struct RateFit {
    double slope;
    double intercept;
    double stderr_slope;
};

// Per-n means for one estimator. MeanExcessLoss is the mean over reps of
// loss(estimator) - loss(oracle) and needs oracle rows.
std::vector<RatePoint> rate_points(const std::vector<ReplicationRecord>& records,
                                   const std::string& estimator, RateMetric metric);

// Least squares of log y on log n. Needs >= 3 points and y > 0.
RateFit fit_rate(const std::vector<RatePoint>& points);

}  // namespace nefshrink
