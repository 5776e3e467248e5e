#include "nefshrink/families.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include <fmt/format.h>

#include "nefshrink/rng.hpp"

namespace nefshrink {

double DataMatrix::data_range() const {
    return y.size() == 0 ? 0.0 : y.cwiseAbs().maxCoeff();
}

void DataMatrix::validate() const {
    if (y.rows() < 1 || y.cols() < 1)
        throw std::invalid_argument("data matrix must be non-empty");
    if (tau.rows() != y.rows() || tau.cols() != y.cols())
        throw std::invalid_argument(fmt::format("tau shape {}x{} does not match data shape {}x{}",
                                                tau.rows(), tau.cols(), y.rows(), y.cols()));
    if (!y.allFinite())
        throw std::invalid_argument("data matrix has non-finite entries");
    if (tau.minCoeff() < 1)
        throw std::invalid_argument("tau entries must be >= 1");
}

IntMatrix unit_tau(Index n, Index p) { return IntMatrix::Ones(n, p); }

FamilyKind parse_family_kind(std::string_view token) {
    if (token == "normal") return FamilyKind::Normal;
    if (token == "poisson") return FamilyKind::Poisson;
    if (token == "gamma") return FamilyKind::Gamma;
    if (token == "multinomial") return FamilyKind::Multinomial;
    if (token == "negmultinomial") return FamilyKind::NegMultinomial;
    throw std::invalid_argument(fmt::format("unknown family '{}'", token));
}

std::string_view to_token(FamilyKind kind) {
    switch (kind) {
        case FamilyKind::Normal: return "normal";
        case FamilyKind::Poisson: return "poisson";
        case FamilyKind::Gamma: return "gamma";
        case FamilyKind::Multinomial: return "multinomial";
        case FamilyKind::NegMultinomial: return "negmultinomial";
    }
    return "unknown";
}

FamilySpec make_family(FamilyKind kind, std::optional<double> shape,
                       std::optional<std::vector<int>> trials) {
    const bool wants_trials = kind == FamilyKind::Multinomial || kind == FamilyKind::NegMultinomial;
    if (shape.has_value() != (kind == FamilyKind::Gamma))
        throw std::invalid_argument("shape must be supplied exactly for the gamma family");
    if (trials.has_value() != wants_trials)
        throw std::invalid_argument(
            "trial counts N must be supplied exactly for the (neg.) multinomial families");

    FamilySpec spec;
    spec.kind = kind;
    switch (kind) {
        case FamilyKind::Normal:
            spec.nu0 = 1.0, spec.nu1 = 0.0, spec.nu2 = 0.0;
            break;
        case FamilyKind::Poisson:
            spec.nu0 = 0.0, spec.nu1 = 1.0, spec.nu2 = 0.0;
            break;
        case FamilyKind::Gamma:
            if (!(*shape > 0.0) || !std::isfinite(*shape))
                throw std::invalid_argument(fmt::format("gamma shape must be > 0, got {}", *shape));
            spec.nu0 = 0.0, spec.nu1 = 0.0, spec.nu2 = 1.0 / *shape;
            spec.shape = shape;
            break;
        case FamilyKind::Multinomial:
            spec.nu0 = 0.0, spec.nu1 = 1.0, spec.nu2 = -1.0;
            break;
        case FamilyKind::NegMultinomial:
            spec.nu0 = 0.0, spec.nu1 = 1.0, spec.nu2 = 1.0;
            break;
    }
    if (wants_trials) {
        if (trials->empty()) throw std::invalid_argument("trial counts N must be non-empty");
        const int min_trials = kind == FamilyKind::Multinomial ? 2 : 1;
        for (int t : *trials)
            if (t < min_trials)
                throw std::invalid_argument(fmt::format("{} requires N_i >= {}, got {}",
                                                        to_token(kind), min_trials, t));
        spec.trials = std::move(*trials);
    }
    return spec;
}

double variance_function(const FamilySpec& spec, double t) {
    return spec.nu0 + spec.nu1 * t + spec.nu2 * t * t;
}

bool in_mean_domain(const FamilySpec& spec, double theta) {
    if (!std::isfinite(theta)) return false;
    switch (spec.kind) {
        case FamilyKind::Normal: return true;
        case FamilyKind::Multinomial: return theta > 0.0 && theta < 1.0;
        default: return theta > 0.0;
    }
}

Moments theoretical_moments(const FamilySpec& spec, double theta, int tau) {
    if (!in_mean_domain(spec, theta))
        throw std::domain_error(
            fmt::format("theta = {} outside the {} mean domain", theta, to_token(spec.kind)));
    if (tau < 1) throw std::invalid_argument("tau must be >= 1");
    return {theta, variance_function(spec, theta) / tau};
}

void validate_means(const FamilySpec& spec, const Matrix& theta, BoundaryPolicy policy) {
    const bool degenerate_ok = policy == BoundaryPolicy::AllowDegenerate &&
                               spec.kind != FamilyKind::Normal &&
                               spec.kind != FamilyKind::Multinomial;
    for (Index i = 0; i < theta.rows(); ++i) {
        for (Index j = 0; j < theta.cols(); ++j) {
            const double t = theta(i, j);
            if (in_mean_domain(spec, t) || (degenerate_ok && t == 0.0)) continue;
            throw std::domain_error(fmt::format("theta({},{}) = {} outside the {} mean domain", i,
                                                j, t, to_token(spec.kind)));
        }
        if (spec.kind == FamilyKind::Multinomial && theta.row(i).sum() >= 1.0)
            throw std::domain_error(
                fmt::format("multinomial row {} of theta sums to {} >= 1", i, theta.row(i).sum()));
    }
}

void validate_tau(const FamilySpec& spec, const IntMatrix& tau) {
    if (tau.size() > 0 && tau.minCoeff() < 1)
        throw std::invalid_argument("tau entries must be >= 1");
    if (!spec.has_trials()) return;
    if (static_cast<Index>(spec.trials.size()) != tau.rows())
        throw std::invalid_argument(fmt::format("family has {} trial counts but tau has {} rows",
                                                spec.trials.size(), tau.rows()));
    for (Index i = 0; i < tau.rows(); ++i)
        if ((tau.row(i).array() != spec.trials[static_cast<std::size_t>(i)]).any())
            throw std::invalid_argument(fmt::format("tau row {} must equal N_{} = {}", i, i,
                                                    spec.trials[static_cast<std::size_t>(i)]));
}

IntMatrix family_tau(const FamilySpec& spec, Index n, Index p, const std::optional<IntMatrix>& base) {
    if (spec.has_trials()) {
        if (static_cast<Index>(spec.trials.size()) != n)
            throw std::invalid_argument(
                fmt::format("family has {} trial counts, need {}", spec.trials.size(), n));
        IntMatrix tau(n, p);
        for (Index i = 0; i < n; ++i) tau.row(i).setConstant(spec.trials[static_cast<std::size_t>(i)]);
        if (base && *base != tau)
            throw std::invalid_argument("tau must equal the trial counts for this family");
        return tau;
    }
    if (!base) return unit_tau(n, p);
    if (base->rows() != n || base->cols() != p)
        throw std::invalid_argument("tau shape mismatch");
    validate_tau(spec, *base);
    return *base;
}

namespace {

double draw_poisson(Engine& eng, double mean) {
    if (mean <= 0.0) return 0.0;
    return static_cast<double>(std::poisson_distribution<long long>(mean)(eng));
}

void sample_multinomial_row(Engine& eng, const Matrix& theta, Index i, int trials,
                            Eigen::Ref<Vector> out) {
    // Conditional binomials over p categories plus the implicit remainder.
    int remaining = trials;
    double mass_left = 1.0;
    for (Index j = 0; j < theta.cols(); ++j) {
        int count = 0;
        if (remaining > 0 && mass_left > 0.0) {
            const double q = std::clamp(theta(i, j) / mass_left, 0.0, 1.0);
            count = std::binomial_distribution<int>(remaining, q)(eng);
        }
        out(j) = static_cast<double>(count) / trials;
        remaining -= count;
        mass_left -= theta(i, j);
    }
}

void sample_negmultinomial_row(Engine& eng, const Matrix& theta, Index i, int trials,
                               Eigen::Ref<Vector> out) {
    // Gamma-Poisson mixture: G ~ Gamma(N, 1/N), W_j | G ~ Poisson(N theta_j G).
    const double g = std::gamma_distribution<double>(trials, 1.0 / trials)(eng);
    for (Index j = 0; j < theta.cols(); ++j)
        out(j) = draw_poisson(eng, trials * theta(i, j) * g) / trials;
}

}  // namespace

DataMatrix sample_matrix(const FamilySpec& spec, const Matrix& theta, const IntMatrix& tau,
                         std::uint64_t seed, BoundaryPolicy policy) {
    if (theta.rows() != tau.rows() || theta.cols() != tau.cols())
        throw std::invalid_argument(fmt::format("theta shape {}x{} does not match tau shape {}x{}",
                                                theta.rows(), theta.cols(), tau.rows(), tau.cols()));
    validate_means(spec, theta, policy);
    validate_tau(spec, tau);

    const Index n = theta.rows();
    const Index p = theta.cols();
    DataMatrix data{Matrix(n, p), tau};
    Engine eng(seed);
    Vector row(p);

    for (Index i = 0; i < n; ++i) {
        switch (spec.kind) {
            case FamilyKind::Normal:
                for (Index j = 0; j < p; ++j) {
                    const double sd = 1.0 / std::sqrt(static_cast<double>(tau(i, j)));
                    data.y(i, j) = std::normal_distribution<double>(theta(i, j), sd)(eng);
                }
                break;
            case FamilyKind::Poisson:
                for (Index j = 0; j < p; ++j)
                    data.y(i, j) = draw_poisson(eng, tau(i, j) * theta(i, j)) / tau(i, j);
                break;
            case FamilyKind::Gamma:
                for (Index j = 0; j < p; ++j) {
                    if (theta(i, j) <= 0.0) {
                        data.y(i, j) = 0.0;
                        continue;
                    }
                    const double k = tau(i, j) * *spec.shape;
                    data.y(i, j) = std::gamma_distribution<double>(k, theta(i, j) / k)(eng);
                }
                break;
            case FamilyKind::Multinomial:
                sample_multinomial_row(eng, theta, i, spec.trials[static_cast<std::size_t>(i)], row);
                data.y.row(i) = row.transpose();
                break;
            case FamilyKind::NegMultinomial:
                sample_negmultinomial_row(eng, theta, i, spec.trials[static_cast<std::size_t>(i)], row);
                data.y.row(i) = row.transpose();
                break;
        }
    }
    return data;
}

}  // namespace nefshrink
