#include "nefshrink/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <istream>
#include <map>
#include <ostream>
#include <stdexcept>
#include <thread>

#include <fmt/format.h>

#include "nefshrink/csv_io.hpp"
#include "nefshrink/estimators.hpp"
#include "nefshrink/risk.hpp"
#include "nefshrink/rng.hpp"
#include "nefshrink/summation.hpp"

namespace nefshrink {

namespace {

// URE - loss = (1/np) sum_ij [ (1 - 2 b_i)(v_ij - e_ij^2) - 2 b_i e_ij (mu_j - theta_ij) ]
// with e = Y - theta and v = V(Y)/(tau + nu2); reduced to per-row sums.
class LocationGap {
public:
    LocationGap(const DataMatrix& data, const Matrix& theta, const FamilySpec& spec)
        : residual_(data.y - theta), row_terms_(data.rows()),
          scale_(1.0 / static_cast<double>(data.y.size())) {
        if (theta.rows() != data.rows() || theta.cols() != data.cols())
            throw std::invalid_argument("theta shape does not match the data");
        const Matrix v = variance_estimates(data, spec);
        CompensatedSum total;
        for (Index i = 0; i < data.rows(); ++i) {
            CompensatedSum d, f;
            for (Index j = 0; j < data.cols(); ++j) {
                const double e = residual_(i, j);
                d += v(i, j) - e * e;
                f += e * theta(i, j);
            }
            total += d.value();
            row_terms_(i) = d.value() - f.value();
        }
        total_ = total.value();
    }

    double operator()(const Vector& b, const Vector& mu) const {
        const Vector projected = residual_ * mu;
        CompensatedSum acc;
        acc += total_;
        for (Index i = 0; i < b.size(); ++i) acc += -2.0 * b(i) * (row_terms_(i) + projected(i));
        return std::abs(acc.value()) * scale_;
    }

private:
    Matrix residual_;
    Vector row_terms_;
    double total_ = 0.0;
    double scale_;
};

// AURE - loss = (1/np) sum_ij [ (v - e^2) - 2 b_i (c v - e^2 + e d) ], c = 1 - 1/n,
// d_ij = Ybar_j - theta_ij.
class GrandMeanGap {
public:
    GrandMeanGap(const DataMatrix& data, const Matrix& theta, const FamilySpec& spec)
        : row_terms_(data.rows()), scale_(1.0 / static_cast<double>(data.y.size())) {
        if (theta.rows() != data.rows() || theta.cols() != data.cols())
            throw std::invalid_argument("theta shape does not match the data");
        if (data.rows() < 2) throw std::invalid_argument("grand-mean gap needs n >= 2");
        const Matrix v = variance_estimates(data, spec);
        const Vector ybar = grand_mean(data);
        const double c = 1.0 - 1.0 / static_cast<double>(data.rows());
        CompensatedSum total;
        for (Index i = 0; i < data.rows(); ++i) {
            CompensatedSum h;
            for (Index j = 0; j < data.cols(); ++j) {
                const double e = data.y(i, j) - theta(i, j);
                const double d = ybar(j) - theta(i, j);
                total += v(i, j) - e * e;
                h += c * v(i, j) - e * e + e * d;
            }
            row_terms_(i) = h.value();
        }
        total_ = total.value();
    }

    double operator()(const Vector& b) const {
        CompensatedSum acc;
        acc += total_;
        for (Index i = 0; i < b.size(); ++i) acc += -2.0 * b(i) * row_terms_(i);
        return std::abs(acc.value()) * scale_;
    }

private:
    Vector row_terms_;
    double total_ = 0.0;
    double scale_;
};

Vector random_monotone_b(Engine& eng, const OrderSpec& order) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> u(order.groups().size());
    for (double& x : u) x = unit(eng);
    std::sort(u.begin(), u.end());
    Vector b(order.size());
    for (std::size_t k = 0; k < u.size(); ++k)
        for (Index i : order.groups()[k]) b(i) = u[k];
    return b;
}

}  // namespace

double location_gap(const DataMatrix& data, const Matrix& theta, const FamilySpec& spec,
                    const Vector& b, const Vector& mu) {
    return LocationGap(data, theta, spec)(b, mu);
}

double grand_mean_gap(const DataMatrix& data, const Matrix& theta, const FamilySpec& spec,
                      const Vector& b) {
    return GrandMeanGap(data, theta, spec)(b);
}

double estimate_sup_gap(const DataMatrix& data, const Matrix& theta, const FamilySpec& spec,
                        int random_points, std::uint64_t seed,
                        const std::optional<FitResult>& fitted) {
    const FitResult fit = fitted ? *fitted : minimize_ure(data, spec);
    const LocationGap gap(data, theta, spec);
    const OrderSpec order = OrderSpec::from_tau(data.tau);
    const Index n = data.rows();
    const Index p = data.cols();
    const double bound = data.data_range();
    const Vector ybar = grand_mean(data).cwiseMax(-bound).cwiseMin(bound);

    double sup = gap(Vector::Zero(n), fit.mu);
    sup = std::max(sup, gap(Vector::Ones(n), fit.mu));
    sup = std::max(sup, gap(Vector::Ones(n), ybar));
    sup = std::max(sup, gap(fit.b, fit.mu));
    std::uniform_real_distribution<double> box(-bound, bound);
    for (int k = 0; k < random_points; ++k) {
        Engine eng(derive_seed(seed, static_cast<std::uint64_t>(k)));
        const Vector b = random_monotone_b(eng, order);
        Vector mu(p);
        for (Index j = 0; j < p; ++j) mu(j) = box(eng);
        sup = std::max(sup, gap(b, mu));
    }
    return sup;
}

double estimate_sup_gap_grand_mean(const DataMatrix& data, const Matrix& theta,
                                   const FamilySpec& spec, int random_points, std::uint64_t seed,
                                   const std::optional<FitResult>& fitted) {
    const FitResult fit = fitted ? *fitted : minimize_aure(data, spec);
    const GrandMeanGap gap(data, theta, spec);
    const OrderSpec order = OrderSpec::from_tau(data.tau);
    const Index n = data.rows();
    double sup = std::max(gap(Vector::Zero(n)), gap(Vector::Ones(n)));
    sup = std::max(sup, gap(fit.b));
    for (int k = 0; k < random_points; ++k) {
        Engine eng(derive_seed(seed, static_cast<std::uint64_t>(k)));
        sup = std::max(sup, gap(random_monotone_b(eng, order)));
    }
    return sup;
}

// --------------------------------------------------------------- experiment

Matrix experiment_theta(const ExperimentConfig& config, int n, Index p) {
    const FamilySpec spec = config.family_for(n);
    Matrix theta;
    if (config.theta_rule.kind == ThetaRule::Kind::File) {
        theta = read_matrix(config.theta_rule.path);
        if (theta.rows() != n || theta.cols() != p)
            throw std::invalid_argument(fmt::format("theta file is {}x{}, grid point needs {}x{}",
                                                    theta.rows(), theta.cols(), n, p));
    } else {
        Engine eng(derive_seed(config.seed, static_cast<std::uint64_t>(StreamPurpose::Theta),
                               static_cast<std::uint64_t>(n)));
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        theta.resize(n, p);
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < p; ++j)
                theta(i, j) = config.theta_rule.lo + (config.theta_rule.hi - config.theta_rule.lo) * unit(eng);
    }
    validate_means(spec, theta);
    return theta;
}

namespace {

struct GridPoint {
    int n;
    Index p;
    FamilySpec spec;
    Matrix theta;
    IntMatrix tau;
};

std::vector<ReplicationRecord> run_replication(const ExperimentConfig& cfg, const GridPoint& gp,
                                               int rep) {
    const auto n64 = static_cast<std::uint64_t>(gp.n);
    const auto rep64 = static_cast<std::uint64_t>(rep);
    const DataMatrix data = sample_matrix(
        gp.spec, gp.theta, gp.tau,
        derive_seed(cfg.seed, static_cast<std::uint64_t>(StreamPurpose::Sample), n64, rep64));
    const std::uint64_t gap_seed =
        derive_seed(cfg.seed, static_cast<std::uint64_t>(StreamPurpose::SupGap), n64, rep64);

    std::vector<ReplicationRecord> out;
    auto record = [&](std::string name, const Matrix& estimate, double risk, double gap, int iters,
                      bool converged) {
        out.push_back({rep, gp.n, static_cast<int>(gp.p), std::move(name), loss(gp.theta, estimate),
                       risk, gap, iters, converged});
    };

    double location_sup = 0.0;
    if (cfg.location || !cfg.competitors.empty()) {
        auto [fitted, estimate] = fit(data, gp.spec, ShrinkageMode::Location, cfg.solver);
        location_sup = estimate_sup_gap(data, gp.theta, gp.spec, cfg.sup_gap_points, gap_seed, fitted);
        if (cfg.location)
            record("ure", estimate.theta_hat, fitted.objective, location_sup, fitted.iterations,
                   fitted.converged);
    }
    if (cfg.grand_mean) {
        auto [fitted, estimate] = fit(data, gp.spec, ShrinkageMode::GrandMean, cfg.solver);
        const double sup = estimate_sup_gap_grand_mean(data, gp.theta, gp.spec, cfg.sup_gap_points,
                                                       gap_seed, fitted);
        record("aure", estimate.theta_hat, fitted.objective, sup, fitted.iterations, fitted.converged);
    }
    for (CompetitorKind kind : cfg.competitors) {
        const EstimateMatrix est = competitor(data, kind, gp.theta, cfg.solver);
        record(std::string(to_token(kind)), est.theta_hat, ure(data, est.b, est.mu, gp.spec),
               location_sup, 0, true);
    }
    return out;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, unsigned threads) {
    config.validate();
    std::vector<GridPoint> grid;
    for (int n : config.n_grid) {
        const Index p = config.p_rule.dimension(n);
        grid.push_back({n, p, config.family_for(n), experiment_theta(config, n, p),
                        config.tau_for(n, p)});
    }

    const std::size_t reps = static_cast<std::size_t>(config.replications);
    const std::size_t units = grid.size() * reps;
    std::vector<std::vector<ReplicationRecord>> results(units);
    std::vector<std::exception_ptr> errors(units);
    std::atomic<std::size_t> next{0};

    auto worker = [&] {
        for (std::size_t u = next++; u < units; u = next++) {
            try {
                results[u] = run_replication(config, grid[u / reps], static_cast<int>(u % reps));
            } catch (...) {
                errors[u] = std::current_exception();
            }
        }
    };
    const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(units)));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < workers; ++t) pool.emplace_back(worker);
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    ExperimentResult result;
    for (auto& unit : results)
        for (auto& r : unit) result.records.push_back(std::move(r));
    result.aggregates = aggregate(result.records);
    return result;
}

std::vector<AggregateRecord> aggregate(const std::vector<ReplicationRecord>& records) {
    struct Acc {
        AggregateRecord head;
        std::vector<double> loss, risk, gap, iters, conv;
    };
    std::vector<Acc> accs;
    std::map<std::pair<int, std::string>, std::size_t> index;
    for (const auto& r : records) {
        const auto key = std::make_pair(r.n, r.estimator);
        auto it = index.find(key);
        if (it == index.end()) {
            it = index.emplace(key, accs.size()).first;
            Acc acc;
            acc.head.n = r.n;
            acc.head.p = r.p;
            acc.head.estimator = r.estimator;
            accs.push_back(std::move(acc));
        }
        Acc& acc = accs[it->second];
        acc.loss.push_back(r.loss);
        acc.risk.push_back(r.risk_estimate);
        acc.gap.push_back(r.sup_gap);
        acc.iters.push_back(r.iters);
        acc.conv.push_back(r.converged ? 1.0 : 0.0);
    }

    auto mean_se = [](const std::vector<double>& xs) {
        CompensatedSum s;
        for (double x : xs) s += x;
        const double mean = s.value() / static_cast<double>(xs.size());
        if (xs.size() < 2) return std::make_pair(mean, 0.0);
        CompensatedSum ss;
        for (double x : xs) ss += (x - mean) * (x - mean);
        const double var = ss.value() / static_cast<double>(xs.size() - 1);
        return std::make_pair(mean, std::sqrt(var / static_cast<double>(xs.size())));
    };

    // ordered by n, then first appearance of the estimator
    std::stable_sort(accs.begin(), accs.end(),
                     [](const Acc& a, const Acc& b) { return a.head.n < b.head.n; });
    std::vector<AggregateRecord> out;
    for (auto& acc : accs) {
        AggregateRecord a = acc.head;
        a.count = static_cast<int>(acc.loss.size());
        std::tie(a.mean_loss, a.se_loss) = mean_se(acc.loss);
        std::tie(a.mean_risk, a.se_risk) = mean_se(acc.risk);
        std::tie(a.mean_sup_gap, a.se_sup_gap) = mean_se(acc.gap);
        std::tie(a.mean_iters, a.se_iters) = mean_se(acc.iters);
        std::tie(a.frac_converged, a.se_converged) = mean_se(acc.conv);
        out.push_back(std::move(a));
    }
    return out;
}

// ---------------------------------------------------------------------- CSV

namespace {

constexpr const char* kHeader = "rep,n,p,estimator,loss,risk_estimate,sup_gap,iters,converged";

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

double field_double(const std::string& s) {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(fmt::format("bad number '{}'", s));
    return v;
}

int field_int(const std::string& s) {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument(fmt::format("bad integer '{}'", s));
    return v;
}

}  // namespace

void write_records_csv(std::ostream& os, const ExperimentResult& result) {
    os << kHeader << '\n';
    for (const auto& r : result.records)
        os << r.rep << ',' << r.n << ',' << r.p << ',' << r.estimator << ',' << format_double(r.loss)
           << ',' << format_double(r.risk_estimate) << ',' << format_double(r.sup_gap) << ','
           << r.iters << ',' << (r.converged ? 1 : 0) << '\n';
    for (const auto& a : result.aggregates) {
        os << "mean," << a.n << ',' << a.p << ',' << a.estimator << ',' << format_double(a.mean_loss)
           << ',' << format_double(a.mean_risk) << ',' << format_double(a.mean_sup_gap) << ','
           << format_double(a.mean_iters) << ',' << format_double(a.frac_converged) << '\n';
        os << "se," << a.n << ',' << a.p << ',' << a.estimator << ',' << format_double(a.se_loss)
           << ',' << format_double(a.se_risk) << ',' << format_double(a.se_sup_gap) << ','
           << format_double(a.se_iters) << ',' << format_double(a.se_converged) << '\n';
    }
}

ExperimentResult read_records_csv(std::istream& is) {
    ExperimentResult result;
    std::string line;
    if (!std::getline(is, line) || line != kHeader)
        throw std::invalid_argument("record CSV: missing or unexpected header");
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto f = split_fields(line);
        if (f.size() != 9)
            throw std::invalid_argument(fmt::format("record CSV line {}: expected 9 fields", line_no));
        try {
            if (f[0] == "mean") {
                AggregateRecord a;
                a.n = field_int(f[1]);
                a.p = field_int(f[2]);
                a.estimator = f[3];
                a.mean_loss = field_double(f[4]);
                a.mean_risk = field_double(f[5]);
                a.mean_sup_gap = field_double(f[6]);
                a.mean_iters = field_double(f[7]);
                a.frac_converged = field_double(f[8]);
                result.aggregates.push_back(std::move(a));
            } else if (f[0] == "se") {
                if (result.aggregates.empty() || result.aggregates.back().n != field_int(f[1]) ||
                    result.aggregates.back().estimator != f[3])
                    throw std::invalid_argument("se row without matching mean row");
                AggregateRecord& a = result.aggregates.back();
                a.se_loss = field_double(f[4]);
                a.se_risk = field_double(f[5]);
                a.se_sup_gap = field_double(f[6]);
                a.se_iters = field_double(f[7]);
                a.se_converged = field_double(f[8]);
            } else {
                result.records.push_back({field_int(f[0]), field_int(f[1]), field_int(f[2]), f[3],
                                          field_double(f[4]), field_double(f[5]), field_double(f[6]),
                                          field_int(f[7]), field_int(f[8]) != 0});
            }
        } catch (const std::logic_error& e) {
            throw std::invalid_argument(fmt::format("record CSV line {}: {}", line_no, e.what()));
        }
    }
    for (auto& a : result.aggregates) {
        a.count = static_cast<int>(std::count_if(result.records.begin(), result.records.end(),
                                                 [&](const ReplicationRecord& r) {
                                                     return r.n == a.n && r.estimator == a.estimator;
                                                 }));
    }
    return result;
}

// -------------------------------------------------------------------- rates

std::vector<RatePoint> rate_points(const std::vector<ReplicationRecord>& records,
                                   const std::string& estimator, RateMetric metric) {
    std::map<int, CompensatedSum> sums;
    std::map<int, int> counts;
    if (metric == RateMetric::MeanSupGap) {
        for (const auto& r : records)
            if (r.estimator == estimator) {
                sums[r.n] += r.sup_gap;
                ++counts[r.n];
            }
    } else {
        std::map<std::pair<int, int>, double> oracle;
        for (const auto& r : records)
            if (r.estimator == "oracle") oracle[{r.n, r.rep}] = r.loss;
        if (oracle.empty())
            throw std::invalid_argument("mean_excess_loss needs oracle competitor rows");
        for (const auto& r : records) {
            if (r.estimator != estimator) continue;
            const auto it = oracle.find({r.n, r.rep});
            if (it == oracle.end())
                throw std::invalid_argument(
                    fmt::format("no oracle row for n = {}, rep = {}", r.n, r.rep));
            sums[r.n] += r.loss - it->second;
            ++counts[r.n];
        }
    }
    if (counts.empty())
        throw std::invalid_argument(fmt::format("no rows for estimator '{}'", estimator));
    std::vector<RatePoint> points;
    for (const auto& [n, count] : counts)
        points.push_back({static_cast<double>(n), sums[n].value() / count});
    return points;
}

RateFit fit_rate(const std::vector<RatePoint>& points) {
    if (points.size() < 3) throw std::invalid_argument("fit_rate: need at least 3 grid points");
    const double m = static_cast<double>(points.size());
    double sx = 0.0, sy = 0.0;
    for (const auto& pt : points) {
        if (!(pt.value > 0.0) || !(pt.n > 0.0))
            throw std::invalid_argument(
                fmt::format("fit_rate: nonpositive value {} at n = {}", pt.value, pt.n));
        sx += std::log(pt.n);
        sy += std::log(pt.value);
    }
    const double mx = sx / m, my = sy / m;
    double sxx = 0.0, sxy = 0.0;
    for (const auto& pt : points) {
        const double dx = std::log(pt.n) - mx;
        sxx += dx * dx;
        sxy += dx * (std::log(pt.value) - my);
    }
    if (sxx == 0.0) throw std::invalid_argument("fit_rate: grid needs distinct n");
    RateFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double ssr = 0.0;
    for (const auto& pt : points) {
        const double r = std::log(pt.value) - (fit.intercept + fit.slope * std::log(pt.n));
        ssr += r * r;
    }
    fit.stderr_slope = std::sqrt(ssr / (m - 2.0) / sxx);
    return fit;
}

}  // namespace nefshrink
