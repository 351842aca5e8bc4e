#include <doctest.h>

#include "tentacle/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace tentacle;
using std::numbers::pi;

namespace
{
    ActuationProgram custom_program (double duration, double dt, double (*theta) (double))
    {
        ActuationProgram p;
        p.dt = dt;
        const auto n = static_cast<std::size_t> (std::llround (duration / dt));
        for (std::size_t i = 0; i < n; ++i)
        {
            const double t = static_cast<double> (i) * dt;
            p.time.push_back (t);
            p.theta_deg.push_back (theta (t));
            p.frequency_hz.push_back (1.0);
        }
        p.cycle_amplitude_deg.assign (1, 0.0);
        return p;
    }

    ActuationProgram fixed_program (double f, double a, double duration)
    {
        ProgramSpec s;
        s.frequency_hz = f;
        s.amplitude_deg = a;
        s.duration_s = duration;
        return build_program (s);
    }

    double amplitude_tail (const std::vector<CurvatureState> &q, std::size_t from, bool first)
    {
        double m = 0.0;
        for (std::size_t i = from; i < q.size (); ++i)
            m = std::max (m, std::abs (first ? q[i].q1 : q[i].q2));
        return m;
    }
} // namespace

TEST_CASE ("triangular wave")
{
    const double f = 2.5, A = 17.0;
    CHECK (triangular_wave (0.0, f, A) == doctest::Approx (0.0));
    CHECK (triangular_wave (1.0 / (4.0 * f), f, A) == doctest::Approx (A));
    CHECK (triangular_wave (3.0 / (4.0 * f), f, A) == doctest::Approx (-A));
    double sum = 0.0;
    for (int i = 0; i < 1000; ++i)
        sum += triangular_wave (i / (1000.0 * f), f, A);
    CHECK (std::abs (sum / 1000.0) < 1e-9 * A);
    CHECK_THROWS_AS ((void)triangular_wave (0.1, 0.0, A), DomainError);
}

TEST_CASE ("rpm mapping")
{
    CHECK (rpm_to_frequency (20.0) == doctest::Approx (1.0));
    CHECK (rpm_to_frequency (64.0) == doctest::Approx (3.2));
}

TEST_CASE ("fixed program cycles and determinism")
{
    const auto p = fixed_program (2.0, 20.0, 10.0);
    int up = 0;
    for (std::size_t i = 1; i < p.theta_deg.size (); ++i)
        if (p.theta_deg[i - 1] < 0.0 && p.theta_deg[i] >= 0.0)
            ++up;
    CHECK (up == 19); // upward crossings strictly after t=0 in 20 cycles
    CHECK (*std::max_element (p.theta_deg.begin (), p.theta_deg.end ()) == doctest::Approx (20.0));

    ProgramSpec s;
    s.amplitude_mode = AmplitudeMode::random_per_cycle;
    s.seed = 99;
    CHECK (build_program (s).cycle_amplitude_deg == build_program (s).cycle_amplitude_deg);
}

TEST_CASE ("random amplitudes are uniform in +-30 deg")
{
    ProgramSpec s;
    s.frequency_hz = 20.0;
    s.duration_s = 500.0;
    s.dt = 0.005;
    s.amplitude_mode = AmplitudeMode::random_per_cycle;
    double sum = 0.0, lo = 0.0, hi = 0.0;
    std::size_t n = 0;
    for (std::uint64_t seed : {1, 2})
    {
        s.seed = seed;
        for (double a : build_program (s).cycle_amplitude_deg)
        {
            sum += std::abs (a);
            lo = std::min (lo, a);
            hi = std::max (hi, a);
            ++n;
        }
    }
    CHECK (n >= 10000);
    CHECK (lo >= -30.0);
    CHECK (hi <= 30.0);
    CHECK (sum / static_cast<double> (n) == doctest::Approx (15.0).epsilon (0.5 / 15.0));
}

TEST_CASE ("zero drive gives a zero trace")
{
    const SimParams prm;
    const auto tr = simulate (custom_program (2.0, prm.dt, [] (double) { return 0.0; }), prm, {});
    for (std::size_t i = 0; i < tr.size (); ++i)
    {
        CHECK (tr.q[i].q1 == 0.0);
        CHECK (tr.q[i].q2 == 0.0);
        CHECK (tr.thrust[i] == 0.0);
    }
}

TEST_CASE ("static gain under a constant base angle")
{
    const SimParams prm;
    const double th = 5.0;
    const auto tr = simulate (custom_program (20.0, prm.dt, [] (double) { return 5.0; }), prm, {});
    const double rad = th * pi / 180.0;
    CHECK (tr.q.back ().q1 == doctest::Approx (prm.k1 * rad / (prm.omega1 () * prm.omega1 ())).epsilon (1e-6));
    CHECK (tr.q.back ().q2 == doctest::Approx (prm.k2 * rad / (prm.omega2 () * prm.omega2 ())).epsilon (1e-6));
}

TEST_CASE ("resonant gain of the first mode")
{
    SimParams prm;
    prm.dt = 0.0005;
    const auto tr = simulate (
        custom_program (12.0, prm.dt, [] (double t) { return std::sin (2.0 * pi * 3.2 * t); }), prm, {});
    const double rad = pi / 180.0;
    const double expect = std::abs (prm.k1) * rad / (2.0 * prm.zeta * prm.omega1 () * prm.omega1 ());
    CHECK (amplitude_tail (tr.q, tr.size () / 2, true) == doctest::Approx (expect).epsilon (0.01));
}

TEST_CASE ("simulation is deterministic and decays after the drive stops")
{
    const SimParams prm;
    auto p = fixed_program (1.5, 20.0, 12.0);
    const auto a = simulate (p, prm, {});
    const auto b = simulate (p, prm, {});
    for (std::size_t i = 0; i < a.size (); ++i)
    {
        CHECK (a.q[i].q1 == b.q[i].q1);
        CHECK (a.tip[i].x == b.tip[i].x);
    }
    for (std::size_t i = p.time.size () / 2; i < p.time.size (); ++i)
        p.theta_deg[i] = 0.0;
    const auto c = simulate (p, prm, {});
    const std::size_t h = p.time.size () / 2 + 100;
    const double e1 = amplitude_tail (std::vector (c.q.begin () + h, c.q.begin () + h + 200), 0, true);
    const double e2 = amplitude_tail (std::vector (c.q.begin () + h + 200, c.q.begin () + h + 400), 0, true);
    CHECK (e2 < e1);
}

TEST_CASE ("divergence is reported")
{
    SimParams prm;
    prm.k1 *= 1e6;
    CHECK_THROWS_AS ((void)simulate (fixed_program (1.0, 30.0, 2.0), prm, {}), std::runtime_error);
}

TEST_CASE ("sensor readout")
{
    const SimParams prm;
    SensorModel m;
    m.noise_sigma_kpa = 0.0;

    const auto still = simulate (custom_program (1.0, prm.dt, [] (double) { return 0.0; }), prm, {});
    for (const auto &p : sensor_readout (still, m))
        CHECK ((p.array () == m.baseline_kpa).all ());

    m.lag_tau_s = 0.0;
    m.sat_kappa = 0.0;
    m.rate_gain.setZero ();
    const auto tr = simulate (fixed_program (1.0, 25.0, 3.0), prm, {});
    const auto p = sensor_readout (tr, m);
    const Eigen::Matrix<double, 2, 3> pinv = (m.gain.transpose () * m.gain).inverse () * m.gain.transpose ();
    double worst = 0.0;
    for (std::size_t i = 0; i < tr.size (); ++i)
    {
        const Eigen::Vector2d q = pinv * (p[i] - Eigen::Vector3d::Constant (m.baseline_kpa));
        worst = std::max ({worst, std::abs (q (0) - tr.q[i].q1), std::abs (q (1) - tr.q[i].q2)});
    }
    CHECK (worst < 1e-9);

    SensorModel m2 = m;
    m2.gain *= 2.0;
    const auto p2 = sensor_readout (tr, m2);
    for (std::size_t i = 0; i < tr.size (); i += 37)
        for (int c = 0; c < 3; ++c)
            CHECK (p2[i] (c) - m.baseline_kpa ==
                   doctest::Approx (2.0 * (p[i] (c) - m.baseline_kpa)).epsilon (1e-12).scale (1e-9));

    SensorModel bad;
    bad.gain.col (1) = bad.gain.col (0);
    CHECK_THROWS_AS (bad.validate (), DomainError);
}

TEST_CASE ("noisy readout is seeded")
{
    const SimParams prm;
    const auto tr = simulate (fixed_program (1.0, 25.0, 3.0), prm, {});
    SensorModel m;
    const auto a = sensor_readout (tr, m), b = sensor_readout (tr, m);
    m.seed += 1;
    const auto c = sensor_readout (tr, m);
    CHECK (a == b);
    CHECK (a != c);
}

TEST_CASE ("thrust proxy")
{
    const SimParams prm;
    const auto still = simulate (custom_program (3.0, prm.dt, [] (double) { return 0.0; }), prm, {});
    for (double v : thrust_proxy (still, 1.0))
        CHECK (v == 0.0);

    auto mean_tail = [] (const std::vector<double> &v) {
        double s = 0.0;
        for (std::size_t i = v.size () / 2; i < v.size (); ++i)
            s += v[i];
        return s / static_cast<double> (v.size () - v.size () / 2);
    };
    const double f = 1.2;
    const double small = mean_tail (thrust_proxy (simulate (fixed_program (f, 2.0, 10.0), prm, {}), f));
    const double twice = mean_tail (thrust_proxy (simulate (fixed_program (f, 4.0, 10.0), prm, {}), f));
    CHECK (twice / small == doctest::Approx (4.0).epsilon (0.02));

    std::vector<double> by_f;
    for (double r : {0.2, 0.5, 0.8, 1.0, 1.2})
        by_f.push_back (mean_tail (thrust_proxy (simulate (fixed_program (r * prm.f0, 20.0, 8.0), prm, {}), r * prm.f0)));
    CHECK (by_f[1] > by_f[0]);
    CHECK (by_f[2] > by_f[1]);
    CHECK (by_f[4] / by_f[3] < by_f[2] / by_f[1]);

    CHECK_THROWS_AS ((void)thrust_proxy (simulate (fixed_program (1.0, 20.0, 1.0), prm, {}), 1.0), DomainError);
}

TEST_CASE ("moving average")
{
    const std::vector<double> x{1.0, 2.0, 3.0};
    CHECK (moving_average (x, 1) == x);
    const auto y = moving_average (x, 3);
    CHECK (y[0] == doctest::Approx (1.5));
    CHECK (y[1] == doctest::Approx (2.0));
    CHECK (y[2] == doctest::Approx (2.5));
    const std::vector<double> c (9, 4.25);
    CHECK (moving_average (c, 5) == c);
    CHECK_THROWS_AS ((void)moving_average (x, 2), DomainError);
}

TEST_CASE ("material presets")
{
    CHECK (material_from_name ("ecoflex") == Material::ecoflex);
    CHECK (std::string (material_name (Material::dragonskin)) == "dragonskin");
    CHECK (preset (Material::ecoflex).f0 < preset (Material::dragonskin).f0);
    CHECK_THROWS_AS ((void)material_from_name ("rubber"), DomainError);
}
