#include "nefshrink/estimators.hpp"

#include <stdexcept>

#include <fmt/format.h>

#include "nefshrink/risk.hpp"
#include "nefshrink/summation.hpp"

namespace nefshrink {

namespace {

Matrix combine(const Matrix& y, const Vector& b, const Vector& mu) {
    Matrix out(y.rows(), y.cols());
    for (Index j = 0; j < y.cols(); ++j)
        for (Index i = 0; i < y.rows(); ++i) out(i, j) = (1.0 - b(i)) * y(i, j) + b(i) * mu(j);
    return out;
}

void require_feasible_b(const DataMatrix& data, const Vector& b) {
    if (b.size() != data.rows())
        throw std::invalid_argument(
            fmt::format("b has length {}, data has {} rows", b.size(), data.rows()));
    if (!OrderSpec::from_tau(data.tau).is_feasible(b))
        throw std::invalid_argument("b is not feasible: needs b in [0,1], monotone in tau row sums");
}

}  // namespace

EstimateMatrix shrink_to_location(const DataMatrix& data, const Vector& b, const Vector& mu) {
    data.validate();
    require_feasible_b(data, b);
    if (mu.size() != data.cols())
        throw std::invalid_argument(
            fmt::format("mu has length {}, data has {} columns", mu.size(), data.cols()));
    const double bound = data.data_range();
    for (Index j = 0; j < mu.size(); ++j)
        if (!(std::abs(mu(j)) <= bound))
            throw std::invalid_argument(
                fmt::format("mu({}) = {} outside the data range [-{}, {}]", j, mu(j), bound, bound));
    return {combine(data.y, b, mu), Provenance::LocationShrinkage, b, mu};
}

EstimateMatrix shrink_to_grand_mean(const DataMatrix& data, const Vector& b) {
    data.validate();
    require_feasible_b(data, b);
    const Vector ybar = grand_mean(data);
    return {combine(data.y, b, ybar), Provenance::GrandMeanShrinkage, b, ybar};
}

std::pair<FitResult, EstimateMatrix> fit(const DataMatrix& data, const FamilySpec& spec,
                                         ShrinkageMode mode, const SolverOptions& opts) {
    if (mode == ShrinkageMode::Location) {
        FitResult result = minimize_ure(data, spec, opts);
        EstimateMatrix est = shrink_to_location(data, result.b, result.mu);
        return {std::move(result), std::move(est)};
    }
    FitResult result = minimize_aure(data, spec);
    EstimateMatrix est = shrink_to_grand_mean(data, result.b);
    return {std::move(result), std::move(est)};
}

std::string_view to_token(CompetitorKind kind) {
    switch (kind) {
        case CompetitorKind::NoShrinkage: return "none";
        case CompetitorKind::HalfToZero: return "half_to_zero";
        case CompetitorKind::OracleLoss: return "oracle";
    }
    return "unknown";
}

CompetitorKind parse_competitor(std::string_view token) {
    if (token == "none") return CompetitorKind::NoShrinkage;
    if (token == "half_to_zero") return CompetitorKind::HalfToZero;
    if (token == "oracle") return CompetitorKind::OracleLoss;
    throw std::invalid_argument(fmt::format("unknown competitor '{}'", token));
}

LocationObjective loss_objective(const DataMatrix& data, const Matrix& theta) {
    if (theta.rows() != data.rows() || theta.cols() != data.cols())
        throw std::invalid_argument("theta shape does not match the data");
    // (theta_hat - theta)^2 = b^2 (Y - mu)^2 - 2 b (mu - Y)(theta - Y) + (theta - Y)^2
    LocationObjective obj;
    obj.y = data.y;
    obj.slope = theta - data.y;
    obj.offset = -data.y.cwiseProduct(obj.slope);
    CompensatedSum acc;
    for (Index j = 0; j < theta.cols(); ++j)
        for (Index i = 0; i < theta.rows(); ++i) acc += obj.slope(i, j) * obj.slope(i, j);
    obj.constant = acc.value() / static_cast<double>(theta.size());
    return obj;
}

EstimateMatrix competitor(const DataMatrix& data, CompetitorKind kind,
                          const std::optional<Matrix>& theta, const SolverOptions& opts) {
    data.validate();
    const Index n = data.rows();
    const Index p = data.cols();
    switch (kind) {
        case CompetitorKind::NoShrinkage:
            return {data.y, Provenance::NoShrinkage, Vector::Zero(n), Vector::Zero(p)};
        case CompetitorKind::HalfToZero: {
            // 0 always lies in [-M, M]
            const Vector b = Vector::Constant(n, 0.5);
            const Vector mu = Vector::Zero(p);
            return {combine(data.y, b, mu), Provenance::FixedCompetitor, b, mu};
        }
        case CompetitorKind::OracleLoss: {
            if (!theta) throw std::invalid_argument("oracle competitor requires theta");
            const double bound = data.data_range();
            const LocationObjective obj = loss_objective(data, *theta);
            std::vector<Vector> starts = default_starts(data.y, bound);
            Vector target(p);
            for (Index j = 0; j < p; ++j) target(j) = theta->col(j).mean();
            starts.insert(starts.begin(), target.cwiseMax(-bound).cwiseMin(bound));
            const FitResult best =
                coordinate_descent(obj, OrderSpec::from_tau(data.tau), bound, starts, opts);
            return {combine(data.y, best.b, best.mu), Provenance::OracleLoss, best.b, best.mu};
        }
    }
    throw std::invalid_argument("unknown competitor kind");
}

}  // namespace nefshrink
