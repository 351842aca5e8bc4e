#include <doctest.h>

#include "tentacle/shape_fit.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

using namespace tentacle;
using std::numbers::pi;

namespace
{
    const TentacleGeometry kGeom{220.0, 200, 24.0};

    double max_lateral (const Polyline &pts)
    {
        double m = 0.0;
        for (const auto &p : pts)
            m = std::max (m, std::abs (p.x));
        return m;
    }
} // namespace

TEST_CASE ("centerline invariants")
{
    CHECK_THROWS_AS (Centerline ({{0, 0}, {0, 1}, {0, 2}}), DomainError);
    CHECK_THROWS_AS (Centerline ({{0, 0}, {0, 1}, {0, 1}, {0, 2}}), DomainError);
    const Centerline ok ({{0, 0}, {0, 1}, {0, 2}, {0, 3}});
    CHECK (ok.length () == doctest::Approx (3.0));
    CHECK (ok.arc_param (3) == 1.0);
}

TEST_CASE ("affine fit of a straight line")
{
    const auto fit = fit_affine (Centerline (sample_centerline ({0, 0}, kGeom)), kGeom.length_mm);
    CHECK (std::abs (fit.state.q1) < 1e-9);
    CHECK (std::abs (fit.state.q2) < 1e-9);
}

TEST_CASE ("affine fit roundtrip")
{
    const auto fit = fit_affine (Centerline (sample_centerline ({1.2, -0.8}, kGeom)), kGeom.length_mm);
    CHECK (std::abs (fit.state.q1 - 1.2) < 1e-3);
    CHECK (std::abs (fit.state.q2 + 0.8) < 1e-3);
    CHECK (fit.position_rms < 1e-6);

    const auto coarse = fit_affine_headings (Centerline (sample_centerline ({1.2, -0.8}, kGeom)));
    CHECK (std::abs (coarse.state.q1 - 1.2) < 1e-3);
    CHECK (std::abs (coarse.state.q2 + 0.8) < 1e-3);
}

TEST_CASE ("affine fit roundtrip over the full curvature range")
{
    for (double q1 = -2 * pi; q1 <= 2 * pi + 1e-9; q1 += 4 * pi / 9)
        for (double q2 = -2 * pi; q2 <= 2 * pi + 1e-9; q2 += 4 * pi / 9)
        {
            const auto fit = fit_affine (Centerline (sample_centerline ({q1, q2}, kGeom)), kGeom.length_mm);
            CHECK (std::abs (fit.state.q1 - q1) < 1e-3);
            CHECK (std::abs (fit.state.q2 - q2) < 1e-3);
        }
}

TEST_CASE ("affine fit with gaussian point noise")
{
    const CurvatureState q{1.2, -0.8};
    const auto clean = sample_centerline (q, kGeom);
    std::mt19937_64 rng (2024);
    std::normal_distribution<double> noise (0.0, 0.5);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial)
    {
        Polyline noisy = clean;
        for (std::size_t i = 1; i < noisy.size (); ++i)
        {
            noisy[i].x += noise (rng);
            noisy[i].y += noise (rng);
        }
        const auto fit = fit_affine (Centerline (noisy), kGeom.length_mm);
        worst = std::max ({worst, std::abs (fit.state.q1 - q.q1), std::abs (fit.state.q2 - q.q2)});
    }
    CHECK (worst < 0.05);
}

TEST_CASE ("collinear points still fit")
{
    Polyline pts;
    for (int i = 0; i < 10; ++i)
        pts.push_back ({-0.5 * i, 10.0 * i});
    const auto fit = fit_affine (Centerline (pts), 100.0);
    CHECK (std::isfinite (fit.state.q1));
    CHECK (std::isfinite (fit.state.q2));
}

TEST_CASE ("cubic fit")
{
    auto fit = fit_polynomial (Centerline (sample_centerline ({0, 0}, kGeom)));
    CHECK (std::abs (fit.coeffs.c2) < 1e-9);
    CHECK (std::abs (fit.coeffs.c3) < 1e-9);

    Polyline pts;
    for (int i = 0; i < 30; ++i)
    {
        const double s = i / 29.0;
        pts.push_back ({3 * s * s - 2 * s * s * s, 10.0 * s});
    }
    fit = fit_polynomial (Centerline (pts));
    CHECK (std::abs (fit.coeffs.c0) < 1e-9);
    CHECK (std::abs (fit.coeffs.c1) < 1e-9);
    CHECK (std::abs (fit.coeffs.c2 - 3.0) < 1e-9);
    CHECK (std::abs (fit.coeffs.c3 + 2.0) < 1e-9);

    const auto cl = sample_centerline ({1.0, 0.5}, kGeom);
    fit = fit_polynomial (Centerline (cl));
    CHECK (fit.residual_rms < 0.02 * std::abs (cl.back ().x));
}

TEST_CASE ("cubic approximates moderate affine shapes")
{
    for (double q1 = -pi; q1 <= pi + 1e-9; q1 += pi / 4)
        for (double q2 = -pi; q2 <= pi + 1e-9; q2 += pi / 4)
        {
            if (q1 == 0.0 && q2 == 0.0)
                continue;
            const auto cl = sample_centerline ({q1, q2}, kGeom);
            const auto fit = fit_polynomial (Centerline (cl));
            CHECK (fit.residual_rms < 0.03 * max_lateral (cl));
        }
}

TEST_CASE ("nrmse")
{
    const std::vector<double> t{0.0, 1.0};
    const std::vector<double> p{0.1, 0.9};
    CHECK (nrmse (t, t) == 0.0);
    CHECK (nrmse (p, t) == doctest::Approx (10.0).epsilon (1e-12));
    const std::vector<double> flat{2.0, 2.0, 2.0};
    CHECK_THROWS_AS ((void)nrmse (flat, flat), DomainError);
    CHECK_THROWS_AS ((void)nrmse (p, flat), DomainError);

    std::mt19937_64 rng (3);
    std::normal_distribution<double> g;
    std::vector<double> a (50), b (50);
    for (std::size_t i = 0; i < 50; ++i)
    {
        a[i] = g (rng);
        b[i] = g (rng);
    }
    const double base = nrmse (a, b);
    std::vector<double> a2 = a, b2 = b;
    for (std::size_t i = 0; i < 50; ++i)
    {
        a2[i] = 3.5 * a[i] - 7.0;
        b2[i] = 3.5 * b[i] - 7.0;
    }
    CHECK (nrmse (a2, b2) == doctest::Approx (base).epsilon (1e-12));
}

TEST_CASE ("fit report")
{
    std::vector<CurvatureState> truth;
    for (int i = 0; i < 100; ++i)
        truth.push_back ({std::sin (0.1 * i), 0.5 * std::cos (0.13 * i)});
    const auto rep = fit_report (truth, truth, kGeom);
    CHECK (rep.nrmse_seg1 == 0.0);
    CHECK (rep.nrmse_seg2 == 0.0);
    CHECK (rep.abs_tip_err_mean == 0.0);
    CHECK (rep.rel_tip_err == 0.0);

    CHECK_THROWS_AS ((void)fit_report (std::span (truth).first (50), truth, kGeom), DomainError);

    std::vector<PolyCoeffs> ptruth;
    for (const auto &q : truth)
        ptruth.push_back (fit_polynomial (Centerline (sample_centerline (q, kGeom))).coeffs);
    const auto prep = fit_report (ptruth, ptruth, kGeom);
    CHECK (prep.nrmse_seg1 == 0.0);
    CHECK (prep.rel_tip_err == 0.0);
}

TEST_CASE ("constant predictor on one-sided truth approaches 50 percent")
{
    // Truth sweeps q1 uniformly from the straight pose to one side; the
    // predictor stays straight. Brute force the expected relative error.
    std::vector<CurvatureState> truth, pred;
    const int n = 2001;
    for (int i = 0; i < n; ++i)
    {
        truth.push_back ({0.05 * i / (n - 1.0), 0.01 * i / (n - 1.0)});
        pred.push_back ({0.0, 0.0});
    }
    double lo = 1e300, hi = -1e300, sum = 0.0;
    for (const auto &q : truth)
    {
        const auto tip = tip_position (q, kGeom);
        lo = std::min (lo, tip.x);
        hi = std::max (hi, tip.x);
        sum += std::hypot (tip.x, tip.y - kGeom.length_mm);
    }
    const double oracle = 100.0 * sum / n / (hi - lo);
    const auto rep = fit_report (pred, truth, kGeom);
    CHECK (rep.rel_tip_err == doctest::Approx (oracle).epsilon (1e-9));
    CHECK (rep.rel_tip_err == doctest::Approx (50.0).epsilon (0.01));
}

TEST_CASE ("polynomial tip of a straight cubic")
{
    const auto tip = poly_tip_position ({0, 0, 0, 0}, 220.0);
    CHECK (tip.x == 0.0);
    CHECK (tip.y == doctest::Approx (220.0));
}
