#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nefshrink/estimators.hpp"
#include "nefshrink/families.hpp"
#include "nefshrink/optimize.hpp"

namespace nefshrink {

struct ThetaRule {
    enum class Kind { Uniform, File } kind = Kind::Uniform;
    double lo = 0.0;
    double hi = 1.0;
    std::filesystem::path path;
};

struct PRule {
    enum class Kind { Fixed, Power } kind = Kind::Fixed;
    int fixed = 10;
    double gamma = 0.0;

    Index dimension(int n) const;
};

// Monte Carlo experiment description, read from flat `key = value` text.
//
//   family       normal|poisson|gamma|multinomial|negmultinomial
//   lambda       gamma shape
//   N            trials per row: an integer, or cycle:a,b,... (row i gets entry i mod len)
//   tau          within-group sizes for normal/poisson/gamma, same syntax as N
//   theta_rule   uniform:lo:hi | file:PATH
//   n_grid       comma-separated increasing row counts (each >= 2)
//   p_rule       fixed | power
//   p            column count under p_rule = fixed
//   gamma        exponent under p_rule = power, p = floor(n^gamma)
//   M            replications per grid point
//   seed         master seed
//   mode         location | grandmean | both
//   competitors  comma-separated subset of none,half_to_zero,oracle (may be empty)
//   K_grid       random feasible points in the sup-gap proxy
//   max_iter     coordinate-descent iteration budget
//   tol          coordinate-descent tolerance
struct ExperimentConfig {
    FamilyKind family = FamilyKind::Normal;
    std::optional<double> lambda;
    std::vector<int> trials_pattern;
    std::vector<int> tau_pattern{1};
    ThetaRule theta_rule;
    std::vector<int> n_grid;
    PRule p_rule;
    int replications = 1;
    std::uint64_t seed = 0;
    bool location = true;
    bool grand_mean = false;
    std::vector<CompetitorKind> competitors;
    int sup_gap_points = 0;
    SolverOptions solver;

    void validate() const;
    FamilySpec family_for(Index n) const;
    IntMatrix tau_for(Index n, Index p) const;
};

// Throws std::invalid_argument on unknown keys or malformed values. Relative
// theta files resolve against `base_dir`.
ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace nefshrink
