#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "gpode/dense_gp.hpp"

using namespace gpode;

namespace {

SEHyperparams se1(double lambda, double l) {
    SEHyperparams p;
    p.signal_std = lambda;
    p.lengthscales = Vector::Constant(1, l);
    return p;
}

Vector linspace(double a, double b, Index n) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) {
        v[i] = a + (b - a) * static_cast<double>(i) / (n - 1);
    }
    return v;
}

} // namespace

TEST_CASE("fit_time_gp: constant signal") {
    Vector t(2), y(2);
    t << 0.0, 1.0;
    y << 3.5, 3.5;
    const TimeGP gp = fit_time_gp(t, y, se1(1.0, 1.0), 1e-4);
    CHECK(std::abs(posterior_mean(gp, 0.0) - 3.5) < 1e-3);
    CHECK(std::abs(posterior_mean(gp, 1.0) - 3.5) < 1e-3);
}

TEST_CASE("fit_time_gp: sin interpolation at midpoints") {
    const Index n = 20;
    const Vector t = linspace(0.0, 1.5, n);
    Vector y(n);
    for (Index i = 0; i < n; ++i) y[i] = std::sin(t[i]);
    const TimeGP gp = fit_time_gp(t, y, se1(1.0, 0.8), 1e-5);
    double max_err = 0.0;
    for (Index i = 0; i + 1 < n; ++i) {
        const double mid = 0.5 * (t[i] + t[i + 1]);
        max_err = std::max(max_err, std::abs(posterior_mean(gp, mid) - std::sin(mid)));
    }
    CHECK(max_err < 1e-3);
}

TEST_CASE("fit_time_gp: degenerate inputs") {
    Vector t1(1), y1(1);
    t1 << 0.0;
    y1 << 1.0;
    CHECK_THROWS(fit_time_gp(t1, y1, se1(1.0, 1.0), 0.1));
    Vector t2(2), y2(2);
    t2 << 1.0, 1.0; // not strictly increasing
    y2 << 0.0, 0.0;
    CHECK_THROWS(fit_time_gp(t2, y2, se1(1.0, 1.0), 0.1));
}

TEST_CASE("time_nll: zero targets leave the log det term") {
    const Vector t = linspace(0.0, 1.0, 5);
    const Vector y = Vector::Zero(5);
    const SEHyperparams p = se1(1.3, 0.5);
    const double sn = 0.2;

    Matrix k(5, 5);
    Vector a(1), b(1);
    for (Index i = 0; i < 5; ++i) {
        for (Index j = 0; j < 5; ++j) {
            a[0] = t[i];
            b[0] = t[j];
            k(i, j) = se_eval(a, b, p);
        }
    }
    k.diagonal().array() += sn * sn;
    CHECK(time_nll(t, y, p, sn) == doctest::Approx(std::log(k.determinant())).epsilon(1e-9));
}

TEST_CASE("time_nll: single-point closed form") {
    Vector t(1), y(1);
    t << 0.3;
    y << 0.7;
    const double lambda = 1.4, sn = 0.25;
    const double expected = y[0] * y[0] / (lambda * lambda + sn * sn) +
                            std::log(lambda * lambda + sn * sn);
    CHECK(time_nll(t, y, se1(lambda, 1.0), sn) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("time_nll: matches dense evaluation with an explicit inverse") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> noise(0.0, 1.0);
    const Index n = 12;
    const Vector t = linspace(0.0, 2.0, n);
    Vector y(n);
    for (Index i = 0; i < n; ++i) y[i] = std::sin(2.0 * t[i]) + 0.1 * noise(rng);
    const SEHyperparams p = se1(1.1, 0.6);
    const double sn = 0.15;

    Matrix k(n, n);
    Vector a(1), b(1);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
            a[0] = t[i];
            b[0] = t[j];
            k(i, j) = se_eval(a, b, p);
        }
    }
    k.diagonal().array() += sn * sn;
    const double direct = y.dot(k.inverse() * y) + std::log(k.determinant());
    CHECK(time_nll(t, y, p, sn) == doctest::Approx(direct).epsilon(1e-8));
}

TEST_CASE("posterior: prior reversion far from data") {
    const Vector t = linspace(0.0, 1.5, 10);
    Vector y(10);
    for (Index i = 0; i < 10; ++i) y[i] = std::sin(4.0 * t[i]);
    const TimeGP gp = fit_time_gp(t, y, se1(1.2, 0.3), 1e-2);
    const double far = 1.5 + 10.0 * 0.3 + 5.0;
    CHECK(std::abs(posterior_mean(gp, far)) < 1e-6);
    CHECK(posterior_var(gp, far) == doctest::Approx(1.2 * 1.2).epsilon(1e-6));
}

TEST_CASE("posterior: interpolation limit at small noise") {
    const Vector t = linspace(0.0, 1.0, 6);
    Vector y(6);
    for (Index i = 0; i < 6; ++i) y[i] = std::cos(t[i]);
    const TimeGP gp = fit_time_gp(t, y, se1(1.0, 0.5), 1e-6);
    for (Index i = 0; i < 6; ++i) {
        CHECK(std::abs(posterior_mean(gp, t[i]) - y[i]) < 1e-5);
    }
}

TEST_CASE("posterior: variance grows toward extrapolation") {
    const Vector t = linspace(0.0, 1.5, 20);
    Vector y(20);
    for (Index i = 0; i < 20; ++i) y[i] = std::sin(t[i]);
    const TimeGP gp = fit_time_gp(t, y, se1(1.0, 0.4), 1e-3);
    CHECK(posterior_var(gp, t[10]) < posterior_var(gp, 10.0));
}

TEST_CASE("derivative_posterior: constant signal has zero derivative") {
    // A lengthscale matched to the (infinitely smooth) constant data; the
    // optimized pipeline arrives at this regime on its own.
    const Vector t = linspace(0.0, 2.0, 8);
    const Vector y = Vector::Constant(8, 2.0);
    const TimeGP gp = fit_time_gp(t, y, se1(1.0, 3.0), 1e-4);
    const DerivativePosterior d = derivative_posterior(gp, 1, t);
    CHECK(d.mean.cwiseAbs().maxCoeff() < 1e-3 * 2.0);
}

TEST_CASE("derivative_posterior: sin data against analytic derivatives") {
    const Index n = 40;
    const Vector t = linspace(0.0, 3.0, n);
    Vector y(n);
    for (Index i = 0; i < n; ++i) y[i] = std::sin(t[i]);
    const TimeGP gp = fit_time_gp(t, y, se1(1.0, 0.7), 1e-6);

    const DerivativePosterior d1 = derivative_posterior(gp, 1, t);
    const DerivativePosterior d2 = derivative_posterior(gp, 2, t);
    double err1 = 0.0, err2 = 0.0;
    for (Index i = 4; i + 4 < n; ++i) { // interior points
        err1 = std::max(err1, std::abs(d1.mean[i] - std::cos(t[i])));
        err2 = std::max(err2, std::abs(d2.mean[i] + std::sin(t[i])));
    }
    CHECK(err1 < 1e-2);
    CHECK(err2 < 5e-2);
    CHECK_THROWS_AS(derivative_posterior(gp, 3, t), UnsupportedOrder);
}

TEST_CASE("derivative_posterior: matches finite differences of the posterior mean") {
    const Index n = 15;
    const Vector t = linspace(0.0, 2.0, n);
    Vector y(n);
    std::mt19937_64 rng(13);
    std::normal_distribution<double> noise(0.0, 0.05);
    for (Index i = 0; i < n; ++i) y[i] = std::sin(2.0 * t[i]) + noise(rng);
    const TimeGP gp = fit_time_gp(t, y, se1(1.0, 0.5), 0.05);

    std::uniform_real_distribution<double> pick(0.1, 1.9);
    Vector query(20);
    for (Index i = 0; i < 20; ++i) query[i] = pick(rng);
    const DerivativePosterior d = derivative_posterior(gp, 1, query);
    const double h = 1e-5;
    for (Index i = 0; i < 20; ++i) {
        const double fd = (posterior_mean(gp, query[i] + h) - posterior_mean(gp, query[i] - h)) / (2 * h);
        CHECK(std::abs(d.mean[i] - fd) < 1e-6);
    }
}

TEST_CASE("derivative covariance is symmetric PSD-ish and shrinks with data") {
    const Vector t = linspace(0.0, 1.0, 8);
    Vector y(8);
    for (Index i = 0; i < 8; ++i) y[i] = std::exp(-t[i]);
    const TimeGP gp = fit_time_gp(t, y, se1(1.0, 0.5), 1e-3);
    Vector query(1);
    query << 0.55;
    const double var_before = derivative_posterior(gp, 1, query).cov(0, 0);

    // Add a training point at the query location.
    Vector t2(9), y2(9);
    t2 << 0.0, t[1], t[2], t[3], 0.55, t[4], t[5], t[6], t[7];
    std::sort(t2.data(), t2.data() + 9);
    for (Index i = 0; i < 9; ++i) y2[i] = std::exp(-t2[i]);
    const TimeGP gp2 = fit_time_gp(t2, y2, se1(1.0, 0.5), 1e-3);
    const double var_after = derivative_posterior(gp2, 1, query).cov(0, 0);
    CHECK(var_after < var_before);
    CHECK(var_before > -1e-10);
}

TEST_CASE("time_nll: the generating noise level beats a 10x wrong one") {
    std::mt19937_64 rng(101);
    std::normal_distribution<double> noise(0.0, 0.05);
    const Index n = 30;
    const Vector t = linspace(0.0, 3.0, n);
    Vector y(n);
    for (Index i = 0; i < n; ++i) y[i] = std::sin(t[i]) + noise(rng);
    const SEHyperparams p = se1(1.0, 1.0);
    CHECK(time_nll(t, y, p, 0.05) <= time_nll(t, y, p, 0.5));
}

TEST_CASE("posterior variance: clamped non-negative and reduced by nearby data") {
    const Vector t = linspace(0.0, 1.0, 10);
    Vector y = Vector::Zero(10);
    const TimeGP gp = fit_time_gp(t, y, se1(1.0, 0.4), 1e-4);
    for (double q : {0.0, 0.33, 0.77, 1.0, 2.0}) {
        CHECK(posterior_var(gp, q) >= 0.0);
    }
    CHECK(posterior_var(gp, 0.5) < posterior_var(gp, 3.0));
}
