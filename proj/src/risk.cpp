#include "nefshrink/risk.hpp"

#include <stdexcept>

#include <fmt/format.h>

#include "nefshrink/summation.hpp"

namespace nefshrink {

namespace {

void require_shape(const char* what, Index rows, Index cols, Index n, Index p) {
    if (rows != n || cols != p)
        throw std::invalid_argument(
            fmt::format("{}: shape {}x{} does not match {}x{}", what, rows, cols, n, p));
}

void require_length(const char* what, Index len, Index want) {
    if (len != want)
        throw std::invalid_argument(fmt::format("{}: length {} does not match {}", what, len, want));
}

double inverse_count(const DataMatrix& data) {
    return 1.0 / static_cast<double>(data.rows() * data.cols());
}

}  // namespace

double loss(const Matrix& theta, const Matrix& estimate) {
    require_shape("loss", estimate.rows(), estimate.cols(), theta.rows(), theta.cols());
    if (theta.size() == 0) throw std::invalid_argument("loss: empty matrices");
    CompensatedSum acc;
    for (Index j = 0; j < theta.cols(); ++j)
        for (Index i = 0; i < theta.rows(); ++i) {
            const double d = estimate(i, j) - theta(i, j);
            acc += d * d;
        }
    return acc.value() / static_cast<double>(theta.size());
}

Vector grand_mean(const DataMatrix& data) {
    if (data.rows() < 1) throw std::invalid_argument("grand_mean: need n >= 1");
    Vector mean(data.cols());
    for (Index j = 0; j < data.cols(); ++j) {
        CompensatedSum acc;
        for (Index i = 0; i < data.rows(); ++i) acc += data.y(i, j);
        mean(j) = acc.value() / static_cast<double>(data.rows());
    }
    return mean;
}

Matrix variance_estimates(const DataMatrix& data, const FamilySpec& spec) {
    data.validate();
    Matrix out(data.rows(), data.cols());
    for (Index j = 0; j < data.cols(); ++j)
        for (Index i = 0; i < data.rows(); ++i) {
            const double denom = data.tau(i, j) + spec.nu2;
            if (!(denom > 0.0))
                throw std::domain_error(
                    fmt::format("tau({},{}) + nu2 = {} must be positive", i, j, denom));
            out(i, j) = variance_function(spec, data.y(i, j)) / denom;
        }
    return out;
}

double ure(const DataMatrix& data, const Vector& b, const Vector& mu, const FamilySpec& spec) {
    require_length("ure: b", b.size(), data.rows());
    require_length("ure: mu", mu.size(), data.cols());
    const Matrix v = variance_estimates(data, spec);
    CompensatedSum acc;
    for (Index j = 0; j < data.cols(); ++j)
        for (Index i = 0; i < data.rows(); ++i) {
            const double r = data.y(i, j) - mu(j);
            acc += b(i) * b(i) * r * r + (1.0 - 2.0 * b(i)) * v(i, j);
        }
    return acc.value() * inverse_count(data);
}

double aure(const DataMatrix& data, const Vector& b, const FamilySpec& spec) {
    if (data.rows() < 2) throw std::invalid_argument("aure: need n >= 2");
    require_length("aure: b", b.size(), data.rows());
    const Matrix v = variance_estimates(data, spec);
    const Vector ybar = grand_mean(data);
    const double shrink_factor = 1.0 - 1.0 / static_cast<double>(data.rows());
    CompensatedSum acc;
    for (Index j = 0; j < data.cols(); ++j)
        for (Index i = 0; i < data.rows(); ++i) {
            const double r = data.y(i, j) - ybar(j);
            acc += b(i) * b(i) * r * r + (1.0 - 2.0 * shrink_factor * b(i)) * v(i, j);
        }
    return acc.value() * inverse_count(data);
}

double true_risk(const Matrix& theta, const Vector& b, const Vector& mu, const FamilySpec& spec,
                 const IntMatrix& tau) {
    require_shape("true_risk: tau", tau.rows(), tau.cols(), theta.rows(), theta.cols());
    require_length("true_risk: b", b.size(), theta.rows());
    require_length("true_risk: mu", mu.size(), theta.cols());
    validate_means(spec, theta);
    CompensatedSum acc;
    for (Index j = 0; j < theta.cols(); ++j)
        for (Index i = 0; i < theta.rows(); ++i) {
            const double bias = theta(i, j) - mu(j);
            const double var = variance_function(spec, theta(i, j)) / tau(i, j);
            acc += b(i) * b(i) * bias * bias + (1.0 - b(i)) * (1.0 - b(i)) * var;
        }
    return acc.value() / static_cast<double>(theta.size());
}

}  // namespace nefshrink
