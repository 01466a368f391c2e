#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <numbers>
#include <random>

#include <Eigen/Eigenvalues>

#include "gpode/kernels.hpp"

using namespace gpode;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

Vector vec(std::initializer_list<double> xs) {
    Vector v(static_cast<Index>(xs.size()));
    Index i = 0;
    for (double x : xs) v[i++] = x;
    return v;
}

SEHyperparams se1(double lambda, double l) {
    SEHyperparams p;
    p.signal_std = lambda;
    p.lengthscales = Vector::Constant(1, l);
    return p;
}

Vector random_point(std::mt19937_64& rng, Index d, double scale = 1.0) {
    std::normal_distribution<double> dist(0.0, scale);
    Vector v(d);
    for (Index i = 0; i < d; ++i) v[i] = dist(rng);
    return v;
}

// Independent finite-difference oracle for the SE time derivatives:
// fourth-order five-point stencils, composed per argument.
double fd_stencil(const std::function<double(double)>& f, double x, int order, double h) {
    switch (order) {
    case 0: return f(x);
    case 1: return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h);
    case 2:
        return (-f(x + 2 * h) + 16 * f(x + h) - 30 * f(x) + 16 * f(x - h) - f(x - 2 * h)) /
               (12 * h * h);
    default: throw std::logic_error("unsupported stencil order");
    }
}

double fd_time_deriv_h(double t, double tp, const SEHyperparams& phi, int oa, int ob, double h) {
    const auto in_b = [&](double a) {
        return fd_stencil([&](double b) { return se_eval(vec({a}), vec({b}), phi); }, tp, ob, h);
    };
    return fd_stencil(in_b, t, oa, h);
}

// Richardson extrapolation of the composed fourth-order stencils removes the
// leading h^4 truncation while keeping the step large enough for roundoff.
double fd_time_deriv(double t, double tp, const SEHyperparams& phi, int oa, int ob, double h) {
    const double coarse = fd_time_deriv_h(t, tp, phi, oa, ob, h);
    const double fine = fd_time_deriv_h(t, tp, phi, oa, ob, 0.5 * h);
    return (16.0 * fine - coarse) / 15.0;
}

Matrix gim_gram(const SEHyperparams& base, const GroupAction& g, const std::vector<Vector>& pts) {
    const Index d = g.dim();
    const Index n = static_cast<Index>(pts.size());
    Matrix gram(n * d, n * d);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
            gram.block(i * d, j * d, d, d) = gim_eval(base, g, pts[static_cast<size_t>(i)],
                                                      pts[static_cast<size_t>(j)]);
        }
    }
    return gram;
}

} // namespace

TEST_CASE("se_eval: hand values") {
    SEHyperparams p = se1(1.7, 0.4);
    const Vector x = vec({0.3});
    CHECK(se_eval(x, x, p) == doctest::Approx(1.7 * 1.7));

    p = se1(1.0, 0.8);
    CHECK(se_eval(vec({0.0}), vec({0.8}), p) == doctest::Approx(std::exp(-0.5)));

    SEHyperparams p2;
    p2.signal_std = 2.0;
    p2.lengthscales = vec({1.0, 2.0});
    CHECK(se_eval(vec({1.0, 2.0}), vec({0.0, 0.0}), p2) == doctest::Approx(4.0 * std::exp(-1.0)));

    CHECK_THROWS_AS(se_eval(vec({1.0}), vec({1.0, 2.0}), p2), DimensionMismatch);
}

TEST_CASE("se_time_deriv: base cases") {
    const SEHyperparams p = se1(1.3, 0.7);
    CHECK(se_time_deriv(0.4, -0.1, p, 0, 0) == doctest::Approx(se_eval(vec({0.4}), vec({-0.1}), p)));
    CHECK(se_time_deriv(0.9, 0.9, p, 1, 0) == doctest::Approx(0.0));
    const SEHyperparams unit = se1(1.0, 1.0);
    CHECK(se_time_deriv(0.25, 0.25, unit, 1, 1) == doctest::Approx(1.0));
    CHECK_THROWS_AS(se_time_deriv(0.0, 0.0, p, 3, 0), UnsupportedOrder);
    SEHyperparams p2;
    p2.signal_std = 1.0;
    p2.lengthscales = vec({1.0, 1.0});
    CHECK_THROWS_AS(se_time_deriv(0.0, 0.0, p2, 1, 0), DimensionMismatch);
}

TEST_CASE("se_time_deriv: (1,1) against central differences, step 1e-5") {
    const SEHyperparams p = se1(1.0, 1.0);
    const double h = 1e-5;
    const auto k = [&](double a, double b) { return se_eval(vec({a}), vec({b}), p); };
    for (double t : {0.0, 0.3, 1.1}) {
        const double fd =
            (k(t + h, t + h) - k(t + h, t - h) - k(t - h, t + h) + k(t - h, t - h)) / (4 * h * h);
        CHECK(std::abs(se_time_deriv(t, t, p, 1, 1) - fd) < 1e-6);
    }
}

TEST_CASE("se_time_deriv: finite differences for all supported orders") {
    const SEHyperparams p = se1(1.2, 1.0);
    const double h = 4e-2;
    for (int oa = 0; oa <= 2; ++oa) {
        for (int ob = 0; ob <= 2; ++ob) {
            for (double t : {-0.4, 0.15}) {
                for (double tp : {0.0, 0.6}) {
                    const double exact = se_time_deriv(t, tp, p, oa, ob);
                    const double fd = fd_time_deriv(t, tp, p, oa, ob, h);
                    CHECK(std::abs(exact - fd) < 1e-6);
                }
            }
        }
    }
}

TEST_CASE("apply_action: examples") {
    const GroupAction planar = GroupAction::planar_rotation();
    const Vector x = vec({1.0, 0.0});
    CHECK((apply_action(planar, 0.0, x) - x).norm() < 1e-15);
    const Vector rot = apply_action(planar, std::numbers::pi / 2.0, x);
    CHECK(rot[0] == doctest::Approx(0.0));
    CHECK(rot[1] == doctest::Approx(1.0));

    const GroupAction block = GroupAction::paired_rotation4();
    const Vector y = apply_action(block, std::numbers::pi, vec({1.0, 0.0, 0.0, 1.0}));
    CHECK(y[0] == doctest::Approx(-1.0));
    CHECK(std::abs(y[1]) < 1e-12);
    CHECK(std::abs(y[2]) < 1e-12);
    CHECK(y[3] == doctest::Approx(-1.0));

    CHECK_THROWS_AS(apply_action(block, 0.1, vec({1.0, 2.0})), DimensionMismatch);
}

TEST_CASE("GroupAction: group law and orthogonality") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> angle(0.0, kTwoPi);
    for (const GroupAction& g : {GroupAction::planar_rotation(), GroupAction::paired_rotation4()}) {
        CHECK((g.matrix(0.0) - Matrix::Identity(g.dim(), g.dim())).norm() < 1e-15);
        for (int trial = 0; trial < 10; ++trial) {
            const double a = angle(rng);
            const double b = angle(rng);
            const Matrix ga = g.matrix(a);
            CHECK((ga * g.matrix(b) - g.matrix(a + b)).norm() < 1e-10);
            CHECK((ga * ga.transpose() - Matrix::Identity(g.dim(), g.dim())).norm() < 1e-12);
        }
    }
}

TEST_CASE("isotropize: examples") {
    const GroupAction block = GroupAction::paired_rotation4();
    SEHyperparams p;
    p.signal_std = 1.0;
    p.lengthscales = vec({1.0, 1.0, 2.0, 2.0});
    const SEHyperparams same = isotropize(p, block);
    CHECK((same.lengthscales - p.lengthscales).norm() < 1e-15);

    const GroupAction planar = GroupAction::planar_rotation();
    SEHyperparams q;
    q.signal_std = 1.0;
    q.lengthscales = vec({1.0, 4.0});
    const SEHyperparams tied = isotropize(q, planar);
    CHECK(tied.lengthscales[0] == doctest::Approx(2.0));
    CHECK(tied.lengthscales[1] == doctest::Approx(2.0));

    // Invariance after tying.
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> angle(0.0, kTwoPi);
    for (int trial = 0; trial < 20; ++trial) {
        const Vector x = random_point(rng, 2);
        const Vector xp = random_point(rng, 2);
        const double rho = angle(rng);
        const double diff = std::abs(se_eval(planar.apply(rho, x), planar.apply(rho, xp), tied) -
                                     se_eval(x, xp, tied));
        CHECK(diff <= 1e-12);
    }
}

TEST_CASE("matrix_eval: variants at zero distance") {
    SEHyperparams p;
    p.signal_std = 1.5;
    p.lengthscales = vec({1.0, 1.0});
    const MatrixKernel shared = MatrixKernel::shared_isotropic(p, 2);
    const Vector x = vec({0.4, -0.2});
    const Matrix k = shared.eval(x, x);
    CHECK((k - 2.25 * Matrix::Identity(2, 2)).norm() < 1e-12);

    SEHyperparams p1 = p, p2 = p;
    p1.signal_std = 1.0;
    p2.signal_std = 3.0;
    const MatrixKernel diag = MatrixKernel::diagonal_independent({p1, p2});
    const Matrix kd = diag.eval(x, x);
    CHECK(kd(0, 0) == doctest::Approx(1.0));
    CHECK(kd(1, 1) == doctest::Approx(9.0));
    CHECK(kd(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("matrix_eval: single-term USM with identity equals shared isotropic") {
    SEHyperparams p;
    p.signal_std = 1.1;
    p.lengthscales = vec({0.8, 1.3});
    const MatrixKernel shared = MatrixKernel::shared_isotropic(p, 2);
    const MatrixKernel usm = MatrixKernel::usm({{p, Matrix::Identity(2, 2)}});
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 5; ++trial) {
        const Vector x = random_point(rng, 2);
        const Vector xp = random_point(rng, 2);
        CHECK((shared.eval(x, xp) - usm.eval(x, xp)).norm() < 1e-14);
    }
}

TEST_CASE("gim: non-invariant base kernel is rejected") {
    SEHyperparams p;
    p.signal_std = 1.0;
    p.lengthscales = vec({1.0, 4.0});
    CHECK_THROWS_AS(MatrixKernel::gim(p, GroupAction::planar_rotation()), NonInvariantKernel);
}

TEST_CASE("gim: equivariance of the kernel at Q = 30") {
    GroupAction g = GroupAction::paired_rotation4();
    SEHyperparams p;
    p.signal_std = 1.0;
    p.lengthscales = vec({1.0, 1.0, 1.4, 1.4});

    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> angle(0.0, kTwoPi);
    for (int trial = 0; trial < 8; ++trial) {
        const Vector x = random_point(rng, 4);
        const Vector xp = random_point(rng, 4);
        const double rho = angle(rng);
        const double sigma = angle(rng);
        const Matrix lhs = gim_eval(p, g, g.apply(rho, x), g.apply(sigma, xp));
        const Matrix rhs = g.matrix(rho) * gim_eval(p, g, x, xp) * g.matrix(sigma).transpose();
        CHECK((lhs - rhs).norm() <= 1e-8);
        // Transpose symmetry: k(x, x') = k(x', x)^T.
        CHECK((gim_eval(p, g, x, xp) - gim_eval(p, g, xp, x).transpose()).norm() <= 1e-10);
    }
}

TEST_CASE("gim: dense-quadrature oracle for the 4-D action") {
    GroupAction g = GroupAction::paired_rotation4();
    SEHyperparams p;
    p.signal_std = 1.0;
    p.lengthscales = vec({1.0, 1.0, 1.2, 1.2});

    Matrix j2(2, 2);
    j2 << 0.0, -1.0, 1.0, 0.0;
    Matrix bmat = Matrix::Zero(4, 4);
    bmat.block(0, 0, 2, 2) = j2;
    bmat.block(2, 2, 2, 2) = j2;

    std::mt19937_64 rng(29);
    for (int trial = 0; trial < 4; ++trial) {
        const Vector x = random_point(rng, 4);
        const Vector xp = random_point(rng, 4);

        // c and s from an independent high-resolution quadrature with the
        // rotation assembled explicitly.
        const int q = 2048;
        double c = 0.0, s = 0.0;
        for (int i = 0; i < q; ++i) {
            const double rho = kTwoPi * i / q;
            Matrix rot = Matrix::Identity(4, 4);
            const double cr = std::cos(rho), sr = std::sin(rho);
            rot(0, 0) = cr; rot(0, 1) = -sr; rot(1, 0) = sr; rot(1, 1) = cr;
            rot(2, 2) = cr; rot(2, 3) = -sr; rot(3, 2) = sr; rot(3, 3) = cr;
            const double kv = se_eval(x, Vector(rot * xp), p);
            c += kv * cr;
            s += kv * sr;
        }
        c /= q;
        s /= q;
        const Matrix oracle = c * Matrix::Identity(4, 4) + s * bmat;
        CHECK((gim_eval(p, g, x, xp) - oracle).norm() < 1e-8);
    }
}

TEST_CASE("gim: quadrature self-convergence Q 30 -> 60") {
    GroupAction g30 = GroupAction::planar_rotation();
    GroupAction g60 = GroupAction::planar_rotation();
    g60.set_quadrature_nodes(60);
    SEHyperparams p;
    p.signal_std = 1.0;
    p.lengthscales = vec({1.0, 1.0});
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 6; ++trial) {
        const Vector x = random_point(rng, 2);
        const Vector xp = random_point(rng, 2);
        CHECK((gim_eval(p, g30, x, xp) - gim_eval(p, g60, x, xp)).norm() <= 1e-10);
    }
}

TEST_CASE("gim: orbit rank collapse") {
    GroupAction g = GroupAction::paired_rotation4();
    SEHyperparams p;
    p.signal_std = 1.0;
    p.lengthscales = vec({1.0, 1.0, 1.0, 1.0});
    std::mt19937_64 rng(37);
    std::uniform_real_distribution<double> angle(0.0, kTwoPi);
    const Vector x = random_point(rng, 4);
    const Vector gx = g.apply(angle(rng), x);

    const Matrix gram = gim_gram(p, g, {x, gx});
    Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
    const Vector ev = eig.eigenvalues(); // ascending
    const double largest = ev[ev.size() - 1];
    REQUIRE(largest > 0.0);
    for (Index i = 0; i < 4; ++i) {
        CHECK(std::abs(ev[i]) <= 1e-6 * largest);
    }
}

TEST_CASE("gram matrices of every variant are PSD") {
    std::mt19937_64 rng(43);
    const Index n = 20;

    const auto check_psd = [&](const MatrixKernel& k, double point_scale) {
        std::vector<Vector> pts;
        for (Index i = 0; i < n; ++i) pts.push_back(random_point(rng, k.input_dim(), point_scale));
        const Index d = k.output_dim();
        Matrix gram(n * d, n * d);
        for (Index i = 0; i < n; ++i) {
            for (Index j = 0; j < n; ++j) {
                gram.block(i * d, j * d, d, d) =
                    k.eval(pts[static_cast<size_t>(i)], pts[static_cast<size_t>(j)]);
            }
        }
        Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
        const double max_ev = eig.eigenvalues().maxCoeff();
        CHECK(eig.eigenvalues().minCoeff() >= -1e-8 * max_ev);
    };

    SEHyperparams p2;
    p2.signal_std = 1.0;
    p2.lengthscales = vec({0.9, 1.2});
    check_psd(MatrixKernel::shared_isotropic(p2, 2), 1.0);
    check_psd(MatrixKernel::diagonal_independent({p2, p2}), 1.0);
    Matrix q(2, 2);
    q << 2.0, 0.5, 0.5, 1.0;
    check_psd(MatrixKernel::usm({{p2, q}}), 1.0);

    SEHyperparams iso2;
    iso2.signal_std = 1.0;
    iso2.lengthscales = vec({1.0, 1.0});
    check_psd(MatrixKernel::gim(iso2, GroupAction::planar_rotation()), 1.0);
    SEHyperparams iso4;
    iso4.signal_std = 1.0;
    iso4.lengthscales = vec({1.0, 1.0, 1.3, 1.3});
    check_psd(MatrixKernel::gim(iso4, GroupAction::paired_rotation4()), 1.0);
}

TEST_CASE("free params round trip") {
    SEHyperparams iso4;
    iso4.signal_std = 1.0;
    iso4.lengthscales = vec({1.0, 1.0, 1.3, 1.3});
    const MatrixKernel k = MatrixKernel::gim(iso4, GroupAction::paired_rotation4());
    const std::vector<double> params = k.free_params();
    REQUIRE(params.size() == 3);
    CHECK(params[0] == doctest::Approx(1.0));
    CHECK(params[1] == doctest::Approx(1.0));
    CHECK(params[2] == doctest::Approx(1.3));

    const MatrixKernel k2 = k.with_free_params({2.0, 0.5, 0.7});
    const auto& phi = k2.terms()[0].first;
    CHECK(phi.signal_std == doctest::Approx(2.0));
    CHECK(phi.lengthscales[0] == doctest::Approx(0.5));
    CHECK(phi.lengthscales[1] == doctest::Approx(0.5));
    CHECK(phi.lengthscales[2] == doctest::Approx(0.7));
    CHECK(phi.lengthscales[3] == doctest::Approx(0.7));

    SEHyperparams p2;
    p2.signal_std = 1.4;
    p2.lengthscales = vec({0.9, 1.2});
    const MatrixKernel shared = MatrixKernel::shared_isotropic(p2, 2);
    const MatrixKernel shared2 = shared.with_free_params(shared.free_params());
    std::mt19937_64 rng(51);
    const Vector x = random_point(rng, 2);
    const Vector xp = random_point(rng, 2);
    CHECK((shared.eval(x, xp) - shared2.eval(x, xp)).norm() < 1e-15);
}

TEST_CASE("gim_scalar_cos matches the full block on the section") {
    // Points on the planar section (q2 = 0) have a vanishing sine part, so
    // the GIM block is exactly gim_scalar_cos * I_2.
    GroupAction g = GroupAction::planar_rotation();
    SEHyperparams p;
    p.signal_std = 1.0;
    p.lengthscales = vec({0.9, 0.9});
    const Vector a = vec({1.2, 0.0});
    const Vector b = vec({0.7, 0.0});
    const Matrix block = gim_eval(p, g, a, b);
    const double c = gim_scalar_cos(p, g, a, b);
    CHECK((block - c * Matrix::Identity(2, 2)).norm() < 1e-14);
}
