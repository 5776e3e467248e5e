#include "nefshrink/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

#include "nefshrink/risk.hpp"
#include "nefshrink/summation.hpp"

namespace nefshrink {

// ---------------------------------------------------------------- OrderSpec

OrderSpec OrderSpec::from_row_sums(std::span<const long long> row_sums) {
    std::vector<Index> perm(row_sums.size());
    std::iota(perm.begin(), perm.end(), Index{0});
    std::stable_sort(perm.begin(), perm.end(), [&](Index a, Index b) {
        return row_sums[static_cast<std::size_t>(a)] > row_sums[static_cast<std::size_t>(b)];
    });

    OrderSpec order;
    order.group_of_.resize(row_sums.size());
    for (std::size_t k = 0; k < perm.size(); ++k) {
        const auto row = static_cast<std::size_t>(perm[k]);
        if (k == 0 || row_sums[row] != row_sums[static_cast<std::size_t>(perm[k - 1])])
            order.groups_.emplace_back();
        order.groups_.back().push_back(perm[k]);
        order.group_of_[row] = order.groups_.size() - 1;
    }
    return order;
}

OrderSpec OrderSpec::from_tau(const IntMatrix& tau) {
    std::vector<long long> sums(static_cast<std::size_t>(tau.rows()));
    for (Index i = 0; i < tau.rows(); ++i)
        sums[static_cast<std::size_t>(i)] = tau.row(i).cast<long long>().sum();
    return from_row_sums(sums);
}

std::vector<Index> OrderSpec::permutation() const {
    std::vector<Index> perm;
    perm.reserve(group_of_.size());
    for (const auto& g : groups_) perm.insert(perm.end(), g.begin(), g.end());
    return perm;
}

bool OrderSpec::is_feasible(const Vector& b) const {
    if (b.size() != size()) return false;
    double previous = 0.0;
    for (const auto& g : groups_) {
        const double v = b(g.front());
        if (!(v >= 0.0 && v <= 1.0) || v < previous) return false;
        for (Index i : g)
            if (b(i) != v) return false;
        previous = v;
    }
    return true;
}

void SolverOptions::validate() const {
    if (max_outer_iterations < 1)
        throw std::invalid_argument("max_outer_iterations must be >= 1");
    if (!(tolerance > 0.0)) throw std::invalid_argument("tolerance must be > 0");
}

// --------------------------------------------------------- projection (PAVA)

namespace {

struct Block {
    double weight;
    double linear;
    std::size_t first_group;
    std::size_t last_group;
    // range of the per-row minimizers; a block whose rows all agree keeps that
    // value exactly instead of a rounded weighted mean
    double lo;
    double hi;

    double value() const {
        if (lo == hi && std::isfinite(lo)) return lo;
        if (weight > 0.0) return linear / weight;
        if (linear > 0.0) return std::numeric_limits<double>::infinity();
        if (linear < 0.0) return -std::numeric_limits<double>::infinity();
        return 0.5;  // flat block
    }
};

void require_length(const char* what, Index len, Index want) {
    if (len != want)
        throw std::invalid_argument(fmt::format("{}: length {} does not match order size {}", what,
                                                len, want));
}

}  // namespace

namespace {

// row_targets, when given, are the exact per-row minimizers linear/weight
Vector pava(const Vector& weights, const Vector& linear, const Vector& fallback,
            const OrderSpec& order, const Vector* row_targets) {
    require_length("weights", weights.size(), order.size());
    require_length("linear", linear.size(), order.size());
    require_length("fallback", fallback.size(), order.size());
    for (Index i = 0; i < weights.size(); ++i)
        if (!(weights(i) >= 0.0) || !std::isfinite(weights(i)))
            throw std::invalid_argument(fmt::format("weight {} is negative or non-finite", i));

    const auto& groups = order.groups();
    const std::size_t ng = groups.size();
    std::vector<double> value(ng, 0.0);
    std::vector<bool> free_group(ng, false);
    std::vector<Block> stack;
    stack.reserve(ng);

    for (std::size_t k = 0; k < ng; ++k) {
        CompensatedSum w, g;
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (Index i : groups[k]) {
            w += weights(i);
            g += linear(i);
            if (weights(i) == 0.0 && linear(i) == 0.0) continue;
            const double r = weights(i) > 0.0 ? (row_targets ? (*row_targets)(i) : linear(i) / weights(i))
                             : linear(i) > 0.0 ? std::numeric_limits<double>::infinity()
                                               : -std::numeric_limits<double>::infinity();
            lo = std::min(lo, r);
            hi = std::max(hi, r);
        }
        if (w.value() == 0.0 && g.value() == 0.0) {
            free_group[k] = true;
            continue;
        }
        stack.push_back({w.value(), g.value(), k, k, lo, hi});
        while (stack.size() >= 2 && stack[stack.size() - 2].value() > stack.back().value()) {
            Block top = stack.back();
            stack.pop_back();
            Block& prev = stack.back();
            prev.weight += top.weight;
            prev.linear += top.linear;
            prev.last_group = top.last_group;
            prev.lo = std::min(prev.lo, top.lo);
            prev.hi = std::max(prev.hi, top.hi);
        }
    }
    for (const Block& blk : stack) {
        const double v = std::clamp(blk.value(), 0.0, 1.0);
        for (std::size_t k = blk.first_group; k <= blk.last_group; ++k) value[k] = v;
    }

    // Free groups sit anywhere between their constrained neighbours.
    for (std::size_t k = 0; k < ng; ++k) {
        if (!free_group[k]) continue;
        double lower = 0.0, upper = 1.0;
        for (std::size_t m = k; m-- > 0;)
            if (!free_group[m]) {
                lower = value[m];
                break;
            }
        for (std::size_t m = k + 1; m < ng; ++m)
            if (!free_group[m]) {
                upper = value[m];
                break;
            }
        double target = 0.0;
        for (Index i : groups[k]) target += fallback(i);
        target = std::clamp(target / static_cast<double>(groups[k].size()), 0.0, 1.0);
        value[k] = std::clamp(target, lower, upper);
    }

    Vector b(order.size());
    for (std::size_t k = 0; k < ng; ++k)
        for (Index i : groups[k]) b(i) = value[k];
    return b;
}

}  // namespace

Vector project_monotone_quadratic(const Vector& weights, const Vector& linear,
                                  const Vector& fallback, const OrderSpec& order) {
    return pava(weights, linear, fallback, order, nullptr);
}

Vector isotonic_box_projection(const Vector& targets, const Vector& weights, const OrderSpec& order) {
    require_length("targets", targets.size(), order.size());
    require_length("weights", weights.size(), order.size());
    if (!targets.allFinite()) throw std::invalid_argument("targets must be finite");
    require_length("weights", weights.size(), order.size());
    return pava(weights, weights.cwiseProduct(targets), targets, order, &targets);
}

// ------------------------------------------------------- coordinate descent

double LocationObjective::value(const Vector& b, const Vector& mu) const {
    const bool has_slope = slope.size() > 0;
    CompensatedSum acc;
    for (Index j = 0; j < y.cols(); ++j)
        for (Index i = 0; i < y.rows(); ++i) {
            const double r = y(i, j) - mu(j);
            const double lin = offset(i, j) + (has_slope ? mu(j) * slope(i, j) : 0.0);
            acc += b(i) * b(i) * r * r - 2.0 * b(i) * lin;
        }
    return acc.value() / static_cast<double>(y.size()) + constant;
}

LocationObjective ure_objective(const DataMatrix& data, const FamilySpec& spec) {
    LocationObjective obj;
    obj.y = data.y;
    obj.offset = variance_estimates(data, spec);
    CompensatedSum total;
    for (Index j = 0; j < obj.offset.cols(); ++j)
        for (Index i = 0; i < obj.offset.rows(); ++i) total += obj.offset(i, j);
    obj.constant = total.value() / static_cast<double>(data.y.size());
    return obj;
}

namespace {

Vector clip_box(Vector mu, double bound) { return mu.cwiseMax(-bound).cwiseMin(bound); }

Vector column_means(const Matrix& y) {
    Vector m(y.cols());
    for (Index j = 0; j < y.cols(); ++j) {
        CompensatedSum acc;
        for (Index i = 0; i < y.rows(); ++i) acc += y(i, j);
        m(j) = acc.value() / static_cast<double>(y.rows());
    }
    return m;
}

class DescentRun {
public:
    DescentRun(const LocationObjective& obj, const OrderSpec& order, double bound)
        : obj_(obj), order_(order), bound_(bound),
          fallback_mu_(clip_box(column_means(obj.y), bound)),
          half_(Vector::Constant(obj.y.rows(), 0.5)) {}

    Vector b_step(const Vector& mu) const {
        const Index n = obj_.y.rows();
        const bool has_slope = obj_.slope.size() > 0;
        Vector w(n), g(n);
        for (Index i = 0; i < n; ++i) {
            CompensatedSum ws, gs;
            for (Index j = 0; j < obj_.y.cols(); ++j) {
                const double r = obj_.y(i, j) - mu(j);
                ws += r * r;
                gs += obj_.offset(i, j) + (has_slope ? mu(j) * obj_.slope(i, j) : 0.0);
            }
            w(i) = ws.value();
            g(i) = gs.value();
        }
        return project_monotone_quadratic(w, g, half_, order_);
    }

    Vector mu_step(const Vector& b) const {
        const double total = b.squaredNorm();
        if (total == 0.0) return fallback_mu_;
        const bool has_slope = obj_.slope.size() > 0;
        Vector mu(obj_.y.cols());
        for (Index j = 0; j < obj_.y.cols(); ++j) {
            CompensatedSum acc;
            for (Index i = 0; i < obj_.y.rows(); ++i)
                acc += b(i) * b(i) * obj_.y(i, j) + (has_slope ? b(i) * obj_.slope(i, j) : 0.0);
            mu(j) = std::clamp(acc.value() / total, -bound_, bound_);
        }
        return mu;
    }

    FitResult run(const Vector& start, const SolverOptions& opts) const {
        FitResult fit;
        fit.mu = clip_box(start, bound_);
        fit.b = b_step(fit.mu);
        fit.objective = obj_.value(fit.b, fit.mu);
        fit.trace.push_back(fit.objective);
        for (int it = 1; it <= opts.max_outer_iterations; ++it) {
            Vector mu = mu_step(fit.b);
            const double after_mu = obj_.value(fit.b, mu);
            Vector b = b_step(mu);
            const double after_b = obj_.value(b, mu);
            if (after_b > fit.objective) {
                // rounding-level increase at a fixed point
                fit.converged = true;
                break;
            }
            const double decrease = fit.objective - after_b;
            fit.trace.push_back(std::min(after_mu, fit.objective));
            fit.trace.push_back(after_b);
            fit.b = std::move(b);
            fit.mu = std::move(mu);
            fit.objective = after_b;
            fit.iterations = it;
            if (decrease < opts.tolerance) {
                fit.converged = true;
                break;
            }
        }
        return fit;
    }

private:
    const LocationObjective& obj_;
    const OrderSpec& order_;
    double bound_;
    Vector fallback_mu_;
    Vector half_;
};

}  // namespace

FitResult coordinate_descent(const LocationObjective& objective, const OrderSpec& order,
                             double bound, std::span<const Vector> starts,
                             const SolverOptions& opts) {
    opts.validate();
    if (objective.y.rows() != order.size())
        throw std::invalid_argument("objective rows do not match the order");
    if (starts.empty()) throw std::invalid_argument("coordinate_descent: no start locations");
    const DescentRun runner(objective, order, bound);
    FitResult best;
    bool have_best = false;
    for (const Vector& start : starts) {
        if (start.size() != objective.y.cols())
            throw std::invalid_argument("start location has the wrong length");
        FitResult fit = runner.run(start, opts);
        if (!have_best || fit.objective < best.objective) {
            best = std::move(fit);
            have_best = true;
        }
    }
    return best;
}

std::vector<Vector> default_starts(const Matrix& y, double bound) {
    constexpr Index kRowStartLimit = 32;
    std::vector<Vector> starts;
    starts.push_back(clip_box(column_means(y), bound));
    starts.push_back(Vector::Zero(y.cols()));
    Vector median(y.cols());
    for (Index j = 0; j < y.cols(); ++j) {
        std::vector<double> col(y.col(j).begin(), y.col(j).end());
        const auto mid = col.begin() + static_cast<std::ptrdiff_t>(col.size() / 2);
        std::nth_element(col.begin(), mid, col.end());
        median(j) = *mid;
    }
    starts.push_back(median);
    if (y.rows() <= kRowStartLimit)
        for (Index i = 0; i < y.rows(); ++i) starts.push_back(y.row(i).transpose());
    return starts;
}

FitResult minimize_ure(const DataMatrix& data, const FamilySpec& spec, const SolverOptions& opts) {
    data.validate();
    opts.validate();
    const OrderSpec order = OrderSpec::from_tau(data.tau);
    const double bound = data.data_range();
    const LocationObjective objective = ure_objective(data, spec);
    const std::vector<Vector> starts = default_starts(data.y, bound);
    FitResult fit = coordinate_descent(objective, order, bound, starts, opts);
    fit.mode = ShrinkageMode::Location;
    fit.objective = ure(data, fit.b, fit.mu, spec);
    return fit;
}

FitResult minimize_aure(const DataMatrix& data, const FamilySpec& spec) {
    data.validate();
    const Index n = data.rows();
    if (n < 2) throw std::invalid_argument("minimize_aure: need n >= 2");
    const Vector ybar = grand_mean(data);
    const Matrix v = variance_estimates(data, spec);
    const double factor = 1.0 - 1.0 / static_cast<double>(n);
    Vector weights(n), linear(n);
    for (Index i = 0; i < n; ++i) {
        CompensatedSum a, s;
        for (Index j = 0; j < data.cols(); ++j) {
            const double r = data.y(i, j) - ybar(j);
            a += r * r;
            s += v(i, j);
        }
        weights(i) = a.value();
        linear(i) = factor * s.value();
    }
    FitResult fit;
    fit.mode = ShrinkageMode::GrandMean;
    fit.b = project_monotone_quadratic(weights, linear, Vector::Constant(n, 0.5),
                                       OrderSpec::from_tau(data.tau));
    fit.mu = ybar;
    fit.objective = aure(data, fit.b, spec);
    fit.iterations = 1;
    fit.converged = true;
    fit.trace.push_back(fit.objective);
    return fit;
}

// ------------------------------------------------------------- grid oracle

GridOracleResult grid_oracle_ure(const DataMatrix& data, const FamilySpec& spec, double resolution) {
    data.validate();
    const Index n = data.rows();
    const Index p = data.cols();
    if (n > 5 || p > 3)
        throw std::invalid_argument(
            fmt::format("grid_oracle_ure: size guard n <= 5, p <= 3 violated ({}x{})", n, p));
    if (!(resolution > 0.0) || resolution > 1.0)
        throw std::invalid_argument("grid_oracle_ure: resolution must be in (0, 1]");
    const double steps_real = 1.0 / resolution;
    const int levels = static_cast<int>(std::lround(steps_real));
    if (std::abs(steps_real - levels) > 1e-9 * steps_real)
        throw std::invalid_argument("grid_oracle_ure: 1/resolution must be an integer");

    const OrderSpec order = OrderSpec::from_tau(data.tau);
    const auto& groups = order.groups();
    const std::size_t ng = groups.size();
    const double bound = data.data_range();
    const Matrix v = variance_estimates(data, spec);
    const double inv_np = 1.0 / static_cast<double>(n * p);

    double v_total = 0.0;
    for (Index j = 0; j < p; ++j)
        for (Index i = 0; i < n; ++i) v_total += v(i, j);

    // mu grid: -M + k r for k = 0..K, plus M itself when off-grid.
    const auto mu_count = static_cast<long long>(std::floor(2.0 * bound / resolution + 1e-9));
    auto mu_at = [&](long long k) {
        return k > mu_count ? bound : std::min(bound, -bound + static_cast<double>(k) * resolution);
    };

    // Per-group sums entering the profile over mu.
    struct GroupStats {
        double rows;
        Vector y1, y2;
        double vsum;
    };
    std::vector<GroupStats> stats(ng);
    for (std::size_t g = 0; g < ng; ++g) {
        stats[g] = {static_cast<double>(groups[g].size()), Vector::Zero(p), Vector::Zero(p), 0.0};
        for (Index i : groups[g])
            for (Index j = 0; j < p; ++j) {
                stats[g].y1(j) += data.y(i, j);
                stats[g].y2(j) += data.y(i, j) * data.y(i, j);
                stats[g].vsum += v(i, j);
            }
    }

    struct Partial {
        double w = 0.0;  // sum b_i^2
        Vector s1, s2;   // sum b_i^2 Y_ij, sum b_i^2 Y_ij^2
        double lin = 0.0;  // sum_i b_i sum_j v_ij
    };
    std::vector<Partial> partial(ng + 1);
    for (auto& pt : partial) {
        pt.s1 = Vector::Zero(p);
        pt.s2 = Vector::Zero(p);
    }
    std::vector<int> level(ng, 0);

    double best_value = std::numeric_limits<double>::infinity();
    std::vector<int> best_level(ng, 0);
    Vector best_mu = Vector::Zero(p);
    Vector mu(p);

    auto evaluate = [&](const Partial& pt) {
        double quad = 0.0;
        for (Index j = 0; j < p; ++j) {
            auto column_value = [&](double m) { return pt.w * m * m - 2.0 * m * pt.s1(j) + pt.s2(j); };
            if (pt.w == 0.0) {
                mu(j) = mu_at(0);
                quad += pt.s2(j);
                continue;
            }
            const double centre = std::clamp(pt.s1(j) / pt.w, -bound, bound);
            const auto k0 = static_cast<long long>(std::floor((centre + bound) / resolution));
            double best_col = std::numeric_limits<double>::infinity();
            for (long long k = std::max(0LL, k0 - 1); k <= std::min(mu_count + 1, k0 + 2); ++k) {
                const double m = mu_at(k);
                const double val = column_value(m);
                if (val < best_col) {
                    best_col = val;
                    mu(j) = m;
                }
            }
            quad += best_col;
        }
        return (quad + v_total - 2.0 * pt.lin) * inv_np;
    };

    auto recurse = [&](auto&& self, std::size_t g, int min_level) -> void {
        if (g == ng) {
            const double val = evaluate(partial[ng]);
            if (val < best_value) {
                best_value = val;
                best_level = level;
                best_mu = mu;
            }
            return;
        }
        const GroupStats& gs = stats[g];
        for (int l = min_level; l <= levels; ++l) {
            const double b = static_cast<double>(l) / levels;
            const double b2 = b * b;
            Partial& next = partial[g + 1];
            const Partial& cur = partial[g];
            next.w = cur.w + b2 * gs.rows;
            next.s1 = cur.s1 + b2 * gs.y1;
            next.s2 = cur.s2 + b2 * gs.y2;
            next.lin = cur.lin + b * gs.vsum;
            level[g] = l;
            self(self, g + 1, l);
        }
    };
    recurse(recurse, 0, 0);

    GridOracleResult result;
    result.b = Vector(n);
    for (std::size_t g = 0; g < ng; ++g)
        for (Index i : groups[g]) result.b(i) = static_cast<double>(best_level[g]) / levels;
    result.mu = best_mu;
    result.value = ure(data, result.b, result.mu, spec);
    return result;
}

}  // namespace nefshrink
