#include <doctest.h>

#include "tentacle/regressor.hpp"
#include "tentacle/sim.hpp"

#include <cmath>
#include <random>
#include <sstream>

using namespace tentacle;

namespace
{
    RegressorWeights random_weights (int H, int D, std::uint64_t seed, double scale = 0.5)
    {
        RegressorWeights w (H, D);
        std::mt19937_64 rng (seed);
        std::uniform_real_distribution<double> u (-scale, scale);
        for (Eigen::Index i = 0; i < w.params.size (); ++i)
            w.params (i) = u (rng);
        return w;
    }

    Chunk random_chunk (int D, int T, std::uint64_t seed)
    {
        std::mt19937_64 rng (seed);
        std::normal_distribution<double> n;
        Chunk c;
        c.x.resize (D, T);
        c.y.resize (2, T);
        for (Eigen::Index i = 0; i < c.x.size (); ++i)
            c.x (i) = n (rng);
        for (Eigen::Index i = 0; i < c.y.size (); ++i)
            c.y (i) = n (rng);
        return c;
    }

    double batch_loss (const RegressorWeights &w, std::span<const Chunk> batch)
    {
        double total = 0.0, count = 0.0;
        for (const auto &c : batch)
        {
            const Eigen::MatrixXd p = forward_normalized (w, c.x);
            total += (p - c.y).squaredNorm ();
            count += static_cast<double> (c.y.size ());
        }
        return total / count;
    }

    LabeledSequence linear_sensor_data (double duration, std::uint64_t seed)
    {
        ProgramSpec ps;
        ps.rpm_ramp = true;
        ps.amplitude_mode = AmplitudeMode::random_per_cycle;
        ps.duration_s = duration;
        ps.seed = seed;
        const auto tr = simulate (build_program (ps), SimParams{}, {});
        SensorModel m;
        m.noise_sigma_kpa = 0.0;
        m.lag_tau_s = 0.0;
        m.sat_kappa = 0.0;
        m.rate_gain.setZero ();
        const auto p = sensor_readout (tr, m);
        LabeledSequence s;
        s.dt = tr.dt;
        s.inputs.resize (static_cast<Eigen::Index> (tr.size ()), 3);
        s.targets.resize (static_cast<Eigen::Index> (tr.size ()), 2);
        for (std::size_t i = 0; i < tr.size (); ++i)
        {
            const auto r = static_cast<Eigen::Index> (i);
            s.inputs.row (r) = p[i].transpose ();
            s.targets (r, 0) = tr.q[i].q1;
            s.targets (r, 1) = tr.q[i].q2;
        }
        return s;
    }
} // namespace

TEST_CASE ("target names")
{
    CHECK (target_from_name ("affine") == TargetKind::affine);
    CHECK (std::string (target_name (TargetKind::polynomial)) == "polynomial");
    CHECK_THROWS_AS ((void)target_from_name ("cubic"), DomainError);
}

TEST_CASE ("zero weights give the target mean")
{
    RegressorWeights w (5, 3);
    w.out_mean = {0.3, -1.2};
    w.out_std = {2.0, 0.5};
    const Eigen::MatrixXd x = Eigen::MatrixXd::Random (11, 3);
    const auto y = forward (w, x);
    REQUIRE (y.rows () == 11);
    for (Eigen::Index t = 0; t < 11; ++t)
    {
        CHECK (y (t, 0) == doctest::Approx (0.3));
        CHECK (y (t, 1) == doctest::Approx (-1.2));
    }
}

TEST_CASE ("single step and dimension checks")
{
    const auto w = random_weights (4, 3, 5);
    const Eigen::MatrixXd one = Eigen::MatrixXd::Constant (1, 3, 0.4);
    CHECK (forward (w, one).allFinite ());
    CHECK_THROWS_AS ((void)forward (w, Eigen::MatrixXd::Zero (5, 2)), DomainError);
}

TEST_CASE ("loss")
{
    const Eigen::MatrixXd a = Eigen::MatrixXd::Random (2, 9);
    CHECK (loss (a, a) == 0.0);
    CHECK (loss (a.array () + 1.0, a) == doctest::Approx (1.0));
    const Eigen::MatrixXd b = Eigen::MatrixXd::Random (2, 9);
    double s = 0.0;
    for (Eigen::Index i = 0; i < a.rows (); ++i)
        for (Eigen::Index j = 0; j < a.cols (); ++j)
            s += (a (i, j) - b (i, j)) * (a (i, j) - b (i, j));
    CHECK (std::abs (loss (a, b) - s / 18.0) < 1e-12);
}

TEST_CASE ("analytic gradient matches central differences")
{
    const auto w = random_weights (4, 3, 21);
    const std::vector<Chunk> batch{random_chunk (3, 7, 3)};
    const auto lg = gradients (w, batch);
    CHECK (lg.loss == doctest::Approx (batch_loss (w, batch)).epsilon (1e-12));
    const double eps = 1e-5;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < w.params.size (); ++i)
    {
        auto wp = w, wm = w;
        wp.params (i) += eps;
        wm.params (i) -= eps;
        const double fd = (batch_loss (wp, batch) - batch_loss (wm, batch)) / (2.0 * eps);
        const double denom = std::max ({std::abs (fd), std::abs (lg.grad (i)), 1e-6});
        worst = std::max (worst, std::abs (fd - lg.grad (i)) / denom);
    }
    CHECK (worst < 1e-4);
}

TEST_CASE ("gradient invariances")
{
    const auto w = random_weights (3, 2, 8);
    auto c = random_chunk (2, 6, 4);
    c.y = forward_normalized (w, c.x);
    const std::vector<Chunk> exact{c};
    CHECK (gradients (w, exact).grad.cwiseAbs ().maxCoeff () < 1e-14);

    const auto d = random_chunk (2, 6, 9);
    const std::vector<Chunk> one{d}, two{d, d};
    const auto g1 = gradients (w, one), g2 = gradients (w, two);
    CHECK ((g1.grad - g2.grad).cwiseAbs ().maxCoeff () < 1e-14);
    CHECK (g1.loss == doctest::Approx (g2.loss).epsilon (1e-14));
}

TEST_CASE ("one epoch without momentum is a plain gradient step")
{
    auto w = random_weights (3, 3, 2, 0.3);
    LabeledSequence s;
    s.dt = 0.005;
    s.inputs = Eigen::MatrixXd::Random (12, 3);
    s.targets = Eigen::MatrixXd::Random (12, 2);
    TrainConfig cfg;
    cfg.hidden = 3;
    cfg.momentum = 0.0;
    cfg.epochs = 1;
    cfg.sequence_chunk = 50;
    const std::vector<LabeledSequence> data{s};
    const auto chunks = make_chunks (w, data, cfg.sequence_chunk);
    REQUIRE (chunks.size () == 1);
    const Eigen::VectorXd expect = w.params - cfg.lr0 * gradients (w, chunks).grad;
    const auto res = train_from (w, data, cfg);
    CHECK ((res.weights.params - expect).cwiseAbs ().maxCoeff () < 1e-15);
}

TEST_CASE ("input normalization absorbs affine rescaling")
{
    auto w = random_weights (4, 3, 13);
    w.in_mean = Eigen::Vector3d (101.0, 99.5, 100.2);
    w.in_std = Eigen::Vector3d (0.5, 1.5, 0.8);
    const Eigen::MatrixXd x = (Eigen::MatrixXd::Random (20, 3).array () + 100.0).matrix ();
    auto w2 = w;
    w2.in_mean = 1000.0 * w.in_mean.array () - 7.0;
    w2.in_std = 1000.0 * w.in_std;
    const Eigen::MatrixXd x2 = (1000.0 * x.array () - 7.0).matrix ();
    CHECK ((forward (w, x) - forward (w2, x2)).cwiseAbs ().maxCoeff () < 1e-9);
}

TEST_CASE ("training is seeded and fits an invertible linear sensor")
{
    const std::vector<LabeledSequence> train_set{linear_sensor_data (60.0, 3)};
    const std::vector<LabeledSequence> test_set{linear_sensor_data (20.0, 4)};
    TrainConfig cfg;
    cfg.hidden = 16;
    cfg.epochs = 15;
    cfg.sequence_chunk = 50;
    const auto a = train (train_set, cfg);
    const auto b = train (train_set, cfg);
    CHECK (a.weights.params == b.weights.params);
    CHECK (a.loss_history.back () < a.loss_history.front ());
    const auto rep = evaluate (a.weights, test_set, TentacleGeometry{});
    CHECK (rep.nrmse_seg1 < 2.0);
    CHECK (rep.nrmse_seg2 < 2.0);
}

TEST_CASE ("weights roundtrip through json")
{
    auto w = random_weights (4, 3, 17);
    w.target = TargetKind::polynomial;
    w.in_mean = Eigen::Vector3d (1.0, 2.0, 3.0);
    w.in_std = Eigen::Vector3d (0.1, 0.2, 0.3);
    w.out_mean = {0.5, -0.25};
    std::stringstream ss;
    save_weights (ss, w);
    const auto r = load_weights (ss);
    CHECK (r.target == TargetKind::polynomial);
    CHECK (r.hidden == 4);
    CHECK (r.params == w.params);
    CHECK (r.in_std == w.in_std);
    CHECK (r.out_mean == w.out_mean);

    std::istringstream broken ("{\"hidden\": 4}");
    CHECK_THROWS ((void)load_weights (broken));
}
