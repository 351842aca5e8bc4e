#include <doctest.h>

#include "tentacle/bayes_opt.hpp"
#include "tentacle/kinematics.hpp"

#include <cmath>
#include <sstream>

using namespace tentacle;

namespace
{
    EvalRecord rec (double f, double a, double y)
    {
        EvalRecord r;
        r.f_hz = f;
        r.a_deg = a;
        r.value.objective = y;
        return r;
    }

    SearchSpace line_space ()
    {
        SearchSpace s;
        s.f_lo_hz = 1.0;
        s.f_hi_hz = 2.0;
        s.amplitudes_deg = {20.0};
        return s;
    }
} // namespace

TEST_CASE ("single observation is interpolated")
{
    const SearchSpace sp;
    const std::vector<EvalRecord> r{rec (1.5, 20.0, 0.37)};
    const auto gp = gp_fit (r, sp);
    CHECK (gp.predict (sp.normalize (1.5, 20.0)).mean == doctest::Approx (0.37).epsilon (1e-3));
}

TEST_CASE ("far from the data the prior returns")
{
    const SearchSpace sp;
    const std::vector<EvalRecord> r{rec (0.5, 10.0, 0.1), rec (0.6, 10.0, 0.3), rec (0.7, 20.0, 0.2)};
    const auto gp = gp_fit (r, sp);
    Eigen::VectorXd far (2);
    far << 6.0, 6.0;
    const auto p = gp.predict (far);
    CHECK (p.mean == doctest::Approx (gp.y_mean ()).epsilon (0.01));
    CHECK (p.variance == doctest::Approx (gp.y_scale () * gp.y_scale ()).epsilon (0.01));
}

TEST_CASE ("posterior mean against a direct solve")
{
    const SearchSpace sp;
    std::vector<EvalRecord> r;
    for (int i = 0; i < 7; ++i)
        r.push_back (rec (0.4 + 0.37 * i, i % 2 ? 10.0 : 30.0, std::sin (1.3 * i) + 0.2 * i));
    const auto gp = gp_fit (r, sp);
    const GpHyper h;
    const auto n = static_cast<Eigen::Index> (r.size ());
    Eigen::MatrixXd K (n, n);
    Eigen::VectorXd y (n);
    for (Eigen::Index i = 0; i < n; ++i)
    {
        y (i) = r[i].value.objective;
        for (Eigen::Index j = 0; j < n; ++j)
        {
            const Eigen::Vector2d d = sp.normalize (r[i].f_hz, r[i].a_deg) - sp.normalize (r[j].f_hz, r[j].a_deg);
            K (i, j) = h.signal_var * std::exp (-0.5 * d.squaredNorm () / (h.length_scale * h.length_scale));
        }
    }
    const double m = y.mean ();
    const double sd = std::sqrt ((y.array () - m).square ().mean ());
    Eigen::MatrixXd Kn = K;
    Kn.diagonal ().array () += h.noise_var + gp.jitter ();
    const Eigen::VectorXd alpha = Kn.fullPivLu ().solve ((y.array () - m).matrix () / sd);
    for (Eigen::Index i = 0; i < n; ++i)
    {
        const double direct = m + sd * K.row (i).dot (alpha);
        CHECK (std::abs (gp.predict (sp.normalize (r[i].f_hz, r[i].a_deg)).mean - direct) < 1e-9);
    }
}

TEST_CASE ("acquisition rule")
{
    const std::vector<double> mu{0.1, 0.9, 0.5, 0.3};
    const std::vector<double> sigma{0.2, 0.1, 0.05, 0.7};
    CHECK (acquisition (mu, sigma, 1.0) == 3);
    CHECK (acquisition (mu, sigma, 0.0) == 1);
    const std::vector<double> flat (4, 0.4);
    for (double rho : {0.0, 0.3, 0.8, 0.99})
        CHECK (acquisition (mu, flat, rho) == 1);
    const std::vector<double> tie{0.5, 0.5, 0.5};
    CHECK (acquisition (tie, std::vector<double> (3, 0.1), 0.8) == 0);
    const auto sc = acquisition_scores (mu, sigma, 0.8);
    CHECK (sc[3] == doctest::Approx (0.2 * (0.2 / 0.8) + 0.8));
}

TEST_CASE ("known optimum on a line")
{
    auto obj = [] (double f, double) { return Evaluation{-(f - 1.4) * (f - 1.4), 0.0, 0.0}; };
    const auto res = optimize (obj, line_space (), 15, 3);
    CHECK (res.history.size () == 15);
    CHECK (std::abs (res.best.f_hz - 1.4) < 0.05);
}

TEST_CASE ("budget of three keeps the best start")
{
    auto obj = [] (double f, double a) { return Evaluation{std::sin (3.0 * f) + 0.01 * a, 0.0, 0.0}; };
    const auto res = optimize (obj, SearchSpace{}, 3, 11);
    REQUIRE (res.history.size () == 3);
    double best = -1e9;
    for (const auto &r : res.history)
        best = std::max (best, r.value.objective);
    CHECK (res.best.value.objective == best);
    CHECK_THROWS_AS ((void)optimize (obj, SearchSpace{}, 2, 11), DomainError);
}

TEST_CASE ("optimization is seeded and survives failures")
{
    auto obj = [] (double f, double a) {
        if (f > 2.5)
            throw std::runtime_error ("unstable");
        return Evaluation{std::cos (f) * a / 30.0, 0.0, 0.0};
    };
    const auto a = optimize (obj, SearchSpace{}, 20, 5);
    const auto b = optimize (obj, SearchSpace{}, 20, 5);
    REQUIRE (a.history.size () == b.history.size ());
    for (std::size_t i = 0; i < a.history.size (); ++i)
    {
        CHECK (a.history[i].f_hz == b.history[i].f_hz);
        CHECK (a.history[i].a_deg == b.history[i].a_deg);
    }
    CHECK (static_cast<int> (a.history.size ()) + a.failures == 20);
    for (const auto &r : a.history)
        CHECK (r.f_hz <= 2.5);

    std::ostringstream os;
    write_history_csv (os, a.history);
    CHECK (os.str ().rfind ("iter,f,A,twi,tip_defl_deg,thrust_mN\n", 0) == 0);
}
