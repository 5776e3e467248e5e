#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nefshrink/types.hpp"

namespace nefshrink {

enum class FamilyKind { Normal, Poisson, Gamma, Multinomial, NegMultinomial };

// Lowercase token round trip: normal|poisson|gamma|multinomial|negmultinomial.
// parse_family_kind throws std::invalid_argument naming the bad token.
FamilyKind parse_family_kind(std::string_view token);
std::string_view to_token(FamilyKind kind);

// A natural exponential family with quadratic variance function
// V(t) = nu0 + nu1 t + nu2 t^2 and Var(Y_ij) = V(theta_ij) / tau_ij.
struct FamilySpec {
    FamilyKind kind = FamilyKind::Normal;
    double nu0 = 1.0;
    double nu1 = 0.0;
    double nu2 = 0.0;
    std::optional<double> shape;  // gamma lambda
    std::vector<int> trials;      // N_i per row, (neg.) multinomial only

    bool has_trials() const {
        return kind == FamilyKind::Multinomial || kind == FamilyKind::NegMultinomial;
    }
};

// Builds the spec with the exact (nu0, nu1, nu2) of the family.
// shape must be given iff kind == Gamma, trials iff (neg.) multinomial.
FamilySpec make_family(FamilyKind kind, std::optional<double> shape = std::nullopt,
                       std::optional<std::vector<int>> trials = std::nullopt);

double variance_function(const FamilySpec& spec, double t);

// Interior of the family's mean domain (per coordinate; the multinomial
// row-sum constraint is checked by validate_means).
bool in_mean_domain(const FamilySpec& spec, double theta);

struct Moments {
    double mean;
    double variance;
};

// mean = theta, variance = V(theta) / tau. Throws std::domain_error when
// theta is outside the interior of the mean domain.
Moments theoretical_moments(const FamilySpec& spec, double theta, int tau);

enum class BoundaryPolicy { Reject, AllowDegenerate };

// Throws std::domain_error unless every entry lies in the mean domain and,
// for the multinomial, every row sums to strictly less than one. With
// AllowDegenerate, the closure points theta = 0 (Poisson, gamma,
// neg. multinomial) are admitted and sample as point masses.
void validate_means(const FamilySpec& spec, const Matrix& theta,
                    BoundaryPolicy policy = BoundaryPolicy::Reject);

// tau for a family on an n x p layout. For (neg.) multinomial rows are the
// trial counts; otherwise `base` (default all ones) is checked and returned.
IntMatrix family_tau(const FamilySpec& spec, Index n, Index p,
                     const std::optional<IntMatrix>& base = std::nullopt);

// Checks tau shape/positivity and, for (neg.) multinomial, that row i is
// constantly N_i.
void validate_tau(const FamilySpec& spec, const IntMatrix& tau);

// Draws Y with E(Y_ij) = theta_ij and Var(Y_ij) = V(theta_ij) / tau_ij.
// Rows are independent; (neg.) multinomial rows carry the genuine joint law
// scaled by 1 / N_i. Deterministic in `seed`.
DataMatrix sample_matrix(const FamilySpec& spec, const Matrix& theta, const IntMatrix& tau,
                         std::uint64_t seed,
                         BoundaryPolicy policy = BoundaryPolicy::Reject);

}  // namespace nefshrink
