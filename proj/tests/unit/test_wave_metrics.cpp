#include <doctest.h>

#include "tentacle/wave_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>

using namespace tentacle;
using std::numbers::pi;
using cd = std::complex<double>;

namespace
{
    DeformationField synthetic (int ns, int nt, double blend)
    {
        DeformationField f;
        f.dt = 0.01;
        f.lateral.resize (ns, nt);
        for (int i = 0; i < ns; ++i)
        {
            const double s = static_cast<double> (i) / ns;
            f.stations.push_back (s);
            for (int t = 0; t < nt; ++t)
            {
                const double w = 2.0 * pi * 4.0 * t / nt;
                const double k = 2.0 * pi * s;
                f.lateral (i, t) = blend * std::cos (w - k) + (1.0 - blend) * std::cos (k) * std::cos (w);
            }
        }
        return f;
    }

    // Naive DFT analytic signal.
    std::vector<cd> naive_analytic (const std::vector<double> &x)
    {
        const std::size_t n = x.size ();
        double m = 0.0;
        for (double v : x)
            m += v;
        m /= static_cast<double> (n);
        std::vector<cd> X (n);
        for (std::size_t k = 0; k < n; ++k)
            for (std::size_t t = 0; t < n; ++t)
                X[k] += (x[t] - m) * std::polar (1.0, -2.0 * pi * static_cast<double> (k * t) / n);
        for (std::size_t k = 1; k < n; ++k)
        {
            if (2 * k < n)
                X[k] *= 2.0;
            else if (2 * k > n)
                X[k] = 0.0;
        }
        std::vector<cd> z (n);
        for (std::size_t t = 0; t < n; ++t)
        {
            for (std::size_t k = 0; k < n; ++k)
                z[t] += X[k] * std::polar (1.0, 2.0 * pi * static_cast<double> (k * t) / n);
            z[t] /= static_cast<double> (n);
        }
        return z;
    }

    // Real roots of the characteristic cubic of a Hermitian 3 x 3 matrix.
    std::vector<double> cubic_eigenvalues (const Eigen::Matrix3cd &R)
    {
        const double a = R.trace ().real ();
        const double b = (R (0, 0) * R (1, 1) - R (0, 1) * R (1, 0) + R (0, 0) * R (2, 2) - R (0, 2) * R (2, 0) +
                          R (1, 1) * R (2, 2) - R (1, 2) * R (2, 1))
                             .real ();
        const double c = R.determinant ().real ();
        const double p = b - a * a / 3.0;
        const double q = -2.0 * a * a * a / 27.0 + a * b / 3.0 - c;
        const double r = 2.0 * std::sqrt (-p / 3.0);
        const double phi = std::acos (std::clamp (3.0 * q / (p * r), -1.0, 1.0)) / 3.0;
        std::vector<double> out;
        for (int k = 0; k < 3; ++k)
            out.push_back (a / 3.0 + r * std::cos (phi - 2.0 * pi * k / 3.0));
        std::sort (out.rbegin (), out.rend ());
        return out;
    }
} // namespace

TEST_CASE ("tip deflection")
{
    const std::vector<double> c (5, 3.0);
    CHECK (tip_deflection (c, 220.0) == 0.0);
    const std::vector<double> r{-220.0, 220.0};
    CHECK (tip_deflection (r, 220.0) == doctest::Approx (45.0));
    const std::vector<double> h{0.0, 100.0, 40.0};
    CHECK (tip_deflection (h, 220.0) == doctest::Approx (std::atan (100.0 / 440.0) * 180.0 / pi));
    CHECK (tip_deflection (h, 220.0) == doctest::Approx (12.81).epsilon (1e-3));
    CHECK_THROWS_AS ((void)tip_deflection (std::vector<double>{1.0}, 220.0), DomainError);
}

TEST_CASE ("analytic signal of a cosine")
{
    const int n = 128, k = 5;
    std::vector<double> x (n);
    for (int t = 0; t < n; ++t)
        x[t] = std::cos (2.0 * pi * k * t / n) + 0.7;
    const auto z = analytic_signal (x);
    for (int t = 0; t < n; ++t)
    {
        CHECK (std::abs (z (t) - std::polar (1.0, 2.0 * pi * k * t / n)) < 1e-9);
        CHECK (std::abs (z (t).real () - (x[t] - 0.7)) < 1e-9);
    }
    const std::vector<double> flat (16, 2.5);
    CHECK (analytic_signal (flat).cwiseAbs ().maxCoeff () < 1e-12);
}

TEST_CASE ("analytic signal against a naive transform")
{
    for (int n : {9, 16, 31})
    {
        std::vector<double> x (n);
        for (int t = 0; t < n; ++t)
            x[t] = std::sin (0.37 * t * t) + 0.1 * t;
        const auto z = analytic_signal (x);
        const auto ref = naive_analytic (x);
        for (int t = 0; t < n; ++t)
            CHECK (std::abs (z (t) - ref[static_cast<std::size_t> (t)]) < 1e-9);
    }
}

TEST_CASE ("twi of model modes")
{
    Eigen::VectorXcd w (64);
    for (int j = 0; j < 64; ++j)
        w (j) = std::polar (1.0, 2.0 * pi * 2.0 * j / 64.0);
    CHECK (twi (w) >= 0.99);
    const double base = twi (w);
    CHECK (twi (w * std::polar (1.0, 0.83)) == doctest::Approx (base).epsilon (1e-12));

    Eigen::VectorXcd r (5);
    r << 1.0, -2.0, 0.5, 3.0, 0.0;
    CHECK (twi (r) == 0.0);
    CHECK (twi (r * cd (0.3, -0.8)) < 1e-7);
    CHECK_THROWS_AS ((void)twi (Eigen::VectorXcd::Zero (4)), DomainError);
}

TEST_CASE ("twi endpoints and blend monotonicity")
{
    CHECK (field_twi (cod (synthetic (33, 400, 1.0))) >= 0.99);
    CHECK (field_twi (cod (synthetic (33, 400, 0.0))) <= 0.01);
    double prev = -1.0;
    for (double b : {0.0, 0.25, 0.5, 0.75, 1.0})
    {
        const double v = field_twi (cod (synthetic (33, 400, b)));
        CHECK (v > prev);
        CHECK (v >= 0.0);
        CHECK (v <= 1.0);
        prev = v;
    }
}

TEST_CASE ("cod of a rank-one field")
{
    DeformationField f;
    f.dt = 0.01;
    f.lateral.resize (12, 200);
    for (int i = 0; i < 12; ++i)
    {
        f.stations.push_back (i / 11.0);
        for (int t = 0; t < 200; ++t)
            f.lateral (i, t) = std::sin (0.4 * i + 0.2) * std::cos (2.0 * pi * 5.0 * t / 200.0);
    }
    const auto m = cod (f);
    CHECK (m.energy_fraction.front () > 0.999);
    double total = 0.0;
    for (double e : m.energy_fraction)
        total += e;
    CHECK (total == doctest::Approx (1.0).epsilon (1e-12));
    CHECK (std::is_sorted (m.eigenvalues.rbegin (), m.eigenvalues.rend ()));
}

TEST_CASE ("cod eigenvalues against the characteristic cubic")
{
    DeformationField f;
    f.dt = 0.02;
    f.stations = {0.0, 0.5, 1.0};
    f.lateral.resize (3, 50);
    for (int t = 0; t < 50; ++t)
    {
        f.lateral (0, t) = std::cos (0.5 * t) + 0.2 * std::sin (1.3 * t);
        f.lateral (1, t) = std::sin (0.5 * t + 0.4) - 0.1 * t / 50.0;
        f.lateral (2, t) = 0.3 * std::cos (2.1 * t) + std::cos (0.5 * t + 1.0);
    }
    Eigen::MatrixXcd ens (3, 50);
    for (int i = 0; i < 3; ++i)
    {
        std::vector<double> row (50);
        for (int t = 0; t < 50; ++t)
            row[t] = f.lateral (i, t);
        const auto z = naive_analytic (row);
        for (int t = 0; t < 50; ++t)
            ens (i, t) = z[static_cast<std::size_t> (t)];
    }
    const Eigen::Matrix3cd R = ens * ens.adjoint () / 50.0;
    const auto ref = cubic_eigenvalues (R);
    const auto m = cod (f);
    REQUIRE (m.eigenvalues.size () == 3);
    for (int k = 0; k < 3; ++k)
        CHECK (m.eigenvalues[k] == doctest::Approx (ref[k]).epsilon (1e-9).scale (1e-9));
}

TEST_CASE ("cod rejects a motionless field")
{
    DeformationField f;
    f.dt = 0.01;
    f.stations = {0.0, 0.5, 1.0};
    f.lateral = Eigen::MatrixXd::Constant (3, 20, 1.0);
    CHECK_THROWS_AS ((void)cod (f), DomainError);
}

TEST_CASE ("field from states")
{
    const TentacleGeometry g;
    const std::vector<CurvatureState> straight (40);
    CHECK (field_from_states (straight, g, 9, 0.01).lateral.cwiseAbs ().maxCoeff () == 0.0);

    std::vector<CurvatureState> q, mirrored;
    for (int t = 0; t < 200; ++t)
    {
        const double a = 0.05 * std::sin (2.0 * pi * 3.0 * t / 200.0);
        q.push_back ({a, 0.0});
        mirrored.push_back ({-a, 0.0});
    }
    const auto f = field_from_states (q, g, 17, 0.01);
    const auto fm = field_from_states (mirrored, g, 17, 0.01);
    CHECK ((f.lateral + fm.lateral).cwiseAbs ().maxCoeff () < 1e-12);
    CHECK (cod (f).energy_fraction.front () > 0.999);
}

TEST_CASE ("modes csv")
{
    const auto m = cod (synthetic (5, 64, 0.5));
    std::ostringstream os;
    write_modes_csv (os, m, std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0}, 1);
    const auto s = os.str ();
    CHECK (s.rfind ("mode,station,s,re,im\n", 0) == 0);
    CHECK (std::count (s.begin (), s.end (), '\n') == 6);
}
