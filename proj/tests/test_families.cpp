#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>

#include "nefshrink/families.hpp"

using namespace nefshrink;

namespace {

struct Stats {
    double mean, var, se_mean, se_var;
};

// sample mean/variance with standard errors from the fourth central moment
Stats column_stats(const Matrix& y, Index col) {
    const double m = static_cast<double>(y.rows());
    const double mean = y.col(col).mean();
    double m2 = 0, m4 = 0;
    for (Index i = 0; i < y.rows(); ++i) {
        const double d = y(i, col) - mean;
        m2 += d * d;
        m4 += d * d * d * d;
    }
    m2 /= m;
    m4 /= m;
    return {mean, m2 * m / (m - 1), std::sqrt(m2 / m), std::sqrt(std::max(m4 - m2 * m2, 0.0) / m)};
}

struct Case {
    FamilySpec spec;
    double theta[2];
    int tau;
};

std::vector<Case> all_family_cases(Index n) {
    return {
        {make_family(FamilyKind::Normal), {-1.5, 2.0}, 1},
        {make_family(FamilyKind::Normal), {0.3, -4.0}, 3},
        {make_family(FamilyKind::Poisson), {2.0, 0.7}, 1},
        {make_family(FamilyKind::Poisson), {1.3, 4.0}, 4},
        {make_family(FamilyKind::Gamma, 2.0), {1.5, 0.4}, 1},
        {make_family(FamilyKind::Gamma, 0.7), {2.5, 1.0}, 2},
        {make_family(FamilyKind::Multinomial, std::nullopt, std::vector<int>(n, 4)), {0.3, 0.5}, 4},
        {make_family(FamilyKind::NegMultinomial, std::nullopt, std::vector<int>(n, 3)), {0.8, 2.0}, 3},
    };
}

Matrix row_constant_theta(const Case& c, Index n) {
    Matrix theta(n, 2);
    theta.col(0).setConstant(c.theta[0]);
    theta.col(1).setConstant(c.theta[1]);
    return theta;
}

}  // namespace

TEST_CASE("make_family assigns the exact variance coefficients") {
    auto check = [](const FamilySpec& s, double a, double b, double c) {
        CHECK(s.nu0 == a);
        CHECK(s.nu1 == b);
        CHECK(s.nu2 == c);
    };
    check(make_family(FamilyKind::Normal), 1, 0, 0);
    check(make_family(FamilyKind::Poisson), 0, 1, 0);
    check(make_family(FamilyKind::Gamma, 2.0), 0, 0, 0.5);
    check(make_family(FamilyKind::Multinomial, std::nullopt, std::vector<int>{2, 3}), 0, 1, -1);
    check(make_family(FamilyKind::NegMultinomial, std::nullopt, std::vector<int>{1}), 0, 1, 1);
}

TEST_CASE("make_family rejects invalid parameters") {
    CHECK_THROWS_AS(make_family(FamilyKind::Gamma, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(make_family(FamilyKind::Gamma, -1.0), std::invalid_argument);
    CHECK_THROWS_AS(make_family(FamilyKind::Gamma), std::invalid_argument);
    CHECK_THROWS_AS(make_family(FamilyKind::Poisson, 2.0), std::invalid_argument);
    CHECK_THROWS_AS(make_family(FamilyKind::Multinomial, std::nullopt, std::vector<int>{1, 4}),
                    std::invalid_argument);
    CHECK_THROWS_AS(make_family(FamilyKind::NegMultinomial, std::nullopt, std::vector<int>{0}),
                    std::invalid_argument);
    CHECK_THROWS_AS(make_family(FamilyKind::Multinomial), std::invalid_argument);
    CHECK_THROWS_AS(make_family(FamilyKind::Normal, std::nullopt, std::vector<int>{2}),
                    std::invalid_argument);
}

TEST_CASE("family tokens round trip and unknown tokens are named") {
    for (auto k : {FamilyKind::Normal, FamilyKind::Poisson, FamilyKind::Gamma, FamilyKind::Multinomial,
                   FamilyKind::NegMultinomial})
        CHECK(parse_family_kind(to_token(k)) == k);
    try {
        parse_family_kind("binomial");
        FAIL("expected throw");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("binomial") != std::string::npos);
    }
}

TEST_CASE("variance_function") {
    CHECK(variance_function(make_family(FamilyKind::Normal), 7.0) == 1.0);
    CHECK(variance_function(make_family(FamilyKind::Poisson), 3.0) == 3.0);
    CHECK(variance_function(make_family(FamilyKind::Gamma, 2.0), 4.0) == 8.0);
}

TEST_CASE("theoretical_moments") {
    const auto negm = make_family(FamilyKind::NegMultinomial, std::nullopt, std::vector<int>{4});
    auto m = theoretical_moments(negm, 2.0, 4);
    CHECK(m.mean == 2.0);
    CHECK(m.variance == doctest::Approx(1.5).epsilon(1e-15));

    const auto mult = make_family(FamilyKind::Multinomial, std::nullopt, std::vector<int>{2});
    m = theoretical_moments(mult, 0.5, 2);
    CHECK(m.mean == 0.5);
    CHECK(m.variance == 0.125);

    m = theoretical_moments(make_family(FamilyKind::Normal), -3.0, 1);
    CHECK(m.mean == -3.0);
    CHECK(m.variance == 1.0);

    CHECK_THROWS_AS(theoretical_moments(make_family(FamilyKind::Poisson), 0.0, 1), std::domain_error);
    CHECK_THROWS_AS(theoretical_moments(mult, 1.0, 2), std::domain_error);
    CHECK_THROWS_AS(theoretical_moments(make_family(FamilyKind::Gamma, 1.0), -2.0, 1), std::domain_error);
}

TEST_CASE("variance_function equals tau times the theoretical variance") {
    std::mt19937_64 eng(11);
    std::uniform_real_distribution<double> u(0.01, 0.99);
    std::uniform_int_distribution<int> t(1, 20);
    const std::vector<FamilySpec> specs{
        make_family(FamilyKind::Normal), make_family(FamilyKind::Poisson),
        make_family(FamilyKind::Gamma, 1.7),
        make_family(FamilyKind::Multinomial, std::nullopt, std::vector<int>{2}),
        make_family(FamilyKind::NegMultinomial, std::nullopt, std::vector<int>{2})};
    for (int k = 0; k < 1000; ++k) {
        const auto& s = specs[static_cast<std::size_t>(k) % specs.size()];
        const double theta = u(eng) * (s.kind == FamilyKind::Multinomial ? 1.0 : 5.0);
        const int tau = t(eng);
        const double v = theoretical_moments(s, theta, tau).variance * tau;
        CHECK(v == doctest::Approx(variance_function(s, theta)).epsilon(1e-15));
    }
}

TEST_CASE("sample_matrix validates its inputs") {
    const auto pois = make_family(FamilyKind::Poisson);
    CHECK_THROWS_AS(sample_matrix(pois, Matrix::Ones(2, 2), unit_tau(2, 3), 1), std::invalid_argument);
    CHECK_THROWS_AS(sample_matrix(pois, Matrix::Constant(2, 2, -1.0), unit_tau(2, 2), 1),
                    std::domain_error);
    const auto mult = make_family(FamilyKind::Multinomial, std::nullopt, std::vector<int>{3, 3});
    Matrix theta(2, 2);
    theta << 0.5, 0.5, 0.2, 0.3;
    CHECK_THROWS_AS(sample_matrix(mult, theta, family_tau(mult, 2, 2), 1), std::domain_error);
    theta << 0.4, 0.5, 0.2, 0.3;
    CHECK_THROWS_AS(sample_matrix(mult, theta, unit_tau(2, 2), 1), std::invalid_argument);
    CHECK_NOTHROW(sample_matrix(mult, theta, family_tau(mult, 2, 2), 1));
}

TEST_CASE("Poisson boundary row samples the degenerate point mass") {
    const auto pois = make_family(FamilyKind::Poisson);
    Matrix theta = Matrix::Constant(3, 4, 1.5);
    theta.row(1).setZero();
    CHECK_THROWS_AS(sample_matrix(pois, theta, unit_tau(3, 4), 5), std::domain_error);
    const DataMatrix d = sample_matrix(pois, theta, unit_tau(3, 4), 5, BoundaryPolicy::AllowDegenerate);
    CHECK(d.y.row(1).isZero(0.0));
}

TEST_CASE("sample_matrix is deterministic in its seed") {
    for (const auto& c : all_family_cases(20)) {
        const Matrix theta = row_constant_theta(c, 20);
        const IntMatrix tau = IntMatrix::Constant(20, 2, c.tau);
        const DataMatrix a = sample_matrix(c.spec, theta, tau, 99);
        const DataMatrix b = sample_matrix(c.spec, theta, tau, 99);
        const DataMatrix other = sample_matrix(c.spec, theta, tau, 100);
        CHECK(a.y == b.y);
        CHECK(a.y != other.y);
    }
}

TEST_CASE("Poisson sample mean") {
    const Index m = 100000;
    const DataMatrix d =
        sample_matrix(make_family(FamilyKind::Poisson), Matrix::Constant(m, 1, 2.0), unit_tau(m, 1), 2024);
    CHECK(std::abs(d.y.mean() - 2.0) <= 3.0 * std::sqrt(2.0 / 1e5));
}

TEST_CASE("sample moments and the unbiased variance identity for every family") {
    const Index m = 100000;
    std::uint64_t seed = 7;
    for (const auto& c : all_family_cases(m)) {
        CAPTURE(to_token(c.spec.kind));
        CAPTURE(c.tau);
        const Matrix theta = row_constant_theta(c, m);
        const IntMatrix tau = IntMatrix::Constant(m, 2, c.tau);
        const DataMatrix d = sample_matrix(c.spec, theta, tau, seed++);
        for (Index j = 0; j < 2; ++j) {
            const Moments exact = theoretical_moments(c.spec, c.theta[j], c.tau);
            const Stats s = column_stats(d.y, j);
            CHECK(std::abs(s.mean - exact.mean) <= 4 * s.se_mean);
            CHECK(std::abs(s.var - exact.variance) <= 4 * s.se_var);

            Matrix vhat(m, 1);
            for (Index i = 0; i < m; ++i)
                vhat(i, 0) = variance_function(c.spec, d.y(i, j)) / (c.tau + c.spec.nu2);
            const Stats sv = column_stats(vhat, 0);
            CHECK(std::abs(sv.mean - exact.variance) <= 4 * sv.se_mean + 1e-12);  // normal: vhat is constant
        }
    }
}

TEST_CASE("multinomial samples live on the scaled simplex lattice") {
    const Index n = 2000;
    std::vector<int> trials(n);
    for (Index i = 0; i < n; ++i) trials[static_cast<std::size_t>(i)] = 2 + static_cast<int>(i % 5);
    const auto mult = make_family(FamilyKind::Multinomial, std::nullopt, trials);
    Matrix theta(n, 3);
    theta.col(0).setConstant(0.2);
    theta.col(1).setConstant(0.35);
    theta.col(2).setConstant(0.4);
    const DataMatrix d = sample_matrix(mult, theta, family_tau(mult, n, 3), 3);
    for (Index i = 0; i < n; ++i) {
        const int N = trials[static_cast<std::size_t>(i)];
        int total = 0;
        for (Index j = 0; j < 3; ++j) {
            const double count = d.y(i, j) * N;
            CHECK(count == std::round(count));
            CHECK(d.y(i, j) >= 0.0);
            CHECK(d.y(i, j) <= 1.0);
            total += static_cast<int>(std::round(count));
        }
        CHECK(total <= N);
    }
}

TEST_CASE("family_tau and validate_tau") {
    const auto mult = make_family(FamilyKind::Multinomial, std::nullopt, std::vector<int>{2, 5});
    const IntMatrix tau = family_tau(mult, 2, 3);
    CHECK(tau.row(0).isConstant(2));
    CHECK(tau.row(1).isConstant(5));
    CHECK_THROWS_AS(family_tau(mult, 3, 3), std::invalid_argument);
    CHECK(family_tau(make_family(FamilyKind::Normal), 2, 2) == unit_tau(2, 2));
    CHECK_THROWS_AS(family_tau(make_family(FamilyKind::Normal), 2, 2, IntMatrix::Zero(2, 2)),
                    std::invalid_argument);
}
