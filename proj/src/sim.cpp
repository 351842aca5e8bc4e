#include "tentacle/sim.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

namespace tentacle
{
    namespace
    {
        constexpr double kDegToRad = std::numbers::pi / 180.0;
        constexpr double kDivergence = 10.0;

        // Normalized gains (static deflection per radian of base angle) of the
        // default tuning; the preset multiplies them by w^2.
        constexpr double kGain1 = -1.4934;
        constexpr double kGain2 = 0.7926;
        constexpr double kLagCycles = 1.3941;
        constexpr double kEcoflexSoftening = 3.0;

        double interpolate (const ActuationProgram &p, double t)
        {
            if (t <= 0.0 || p.time.empty ())
                return 0.0;
            const double x = t / p.dt;
            const auto i = static_cast<std::size_t> (x);
            if (i + 1 >= p.time.size ())
                return p.theta_deg.back ();
            const double w = x - static_cast<double> (i);
            return (1.0 - w) * p.theta_deg[i] + w * p.theta_deg[i + 1];
        }
    } // namespace

    void ProgramSpec::validate () const
    {
        if (rpm_ramp)
        {
            if (rpm_start < 12.0 || rpm_start > 80.0 || rpm_end < 12.0 || rpm_end > 80.0)
                throw DomainError ("RPM ramp endpoints must lie in [12, 80]");
        }
        else if (!(frequency_hz > 0.0) || !std::isfinite (frequency_hz))
            throw DomainError ("frequency must be positive");
        if (!(std::abs (amplitude_deg) <= 90.0))
            throw DomainError ("amplitude must satisfy |A| <= 90 deg");
        if (!(max_random_amplitude_deg >= 0.0 && max_random_amplitude_deg <= 90.0))
            throw DomainError ("random amplitude bound must lie in [0, 90] deg");
        if (!(duration_s > 0.0) || !std::isfinite (duration_s))
            throw DomainError ("duration must be positive");
        if (!(dt > 0.0) || dt > duration_s)
            throw DomainError ("time step must be positive and below the duration");
    }

    double rpm_to_frequency (double rpm) noexcept { return rpm / 20.0; }

    double unit_triangle (double cycles) noexcept
    {
        const double x = cycles - std::floor (cycles);
        if (x < 0.25)
            return 4.0 * x;
        if (x < 0.75)
            return 2.0 - 4.0 * x;
        return 4.0 * x - 4.0;
    }

    double triangular_wave (double t, double f, double amplitude_deg, double phase)
    {
        if (!(f > 0.0))
            throw DomainError ("triangular wave frequency must be positive");
        return amplitude_deg * unit_triangle (f * t + phase);
    }

    ActuationProgram build_program (const ProgramSpec &spec)
    {
        spec.validate ();
        ActuationProgram out;
        out.dt = spec.dt;
        const auto n = static_cast<std::size_t> (std::llround (spec.duration_s / spec.dt));
        out.time.resize (n);
        out.theta_deg.resize (n);
        out.frequency_hz.resize (n);

        const double T = spec.duration_s;
        auto phase_at = [&] (double t) {
            if (!spec.rpm_ramp)
                return spec.frequency_hz * t;
            const double r = spec.rpm_start * t + (spec.rpm_end - spec.rpm_start) * t * t / (2.0 * T);
            return rpm_to_frequency (r);
        };
        auto frequency_at = [&] (double t) {
            if (!spec.rpm_ramp)
                return spec.frequency_hz;
            return rpm_to_frequency (spec.rpm_start + (spec.rpm_end - spec.rpm_start) * t / T);
        };

        const double last_phase = phase_at (static_cast<double> (n - 1) * spec.dt);
        const auto cycles = static_cast<std::size_t> (std::floor (last_phase)) + 1;
        out.cycle_amplitude_deg.assign (cycles, spec.amplitude_deg);
        if (spec.amplitude_mode == AmplitudeMode::random_per_cycle)
        {
            std::mt19937_64 rng (spec.seed);
            std::uniform_real_distribution<double> u (-spec.max_random_amplitude_deg, spec.max_random_amplitude_deg);
            for (auto &a : out.cycle_amplitude_deg)
                a = u (rng);
        }

        for (std::size_t i = 0; i < n; ++i)
        {
            const double t = static_cast<double> (i) * spec.dt;
            const double ph = phase_at (t);
            const auto k = std::min (static_cast<std::size_t> (std::floor (ph)), cycles - 1);
            out.time[i] = t;
            out.frequency_hz[i] = frequency_at (t);
            out.theta_deg[i] = out.cycle_amplitude_deg[k] * unit_triangle (ph);
        }
        return out;
    }

    void SimParams::validate () const
    {
        if (!(f0 > 0.0) || !std::isfinite (f0))
            throw DomainError ("f0 must be positive");
        if (!(zeta > 0.0 && zeta < 1.0))
            throw DomainError ("zeta must lie in (0, 1)");
        if (!(mode2_ratio > 1.0) || !std::isfinite (mode2_ratio))
            throw DomainError ("mode2_ratio must exceed 1");
        if (!(dt > 0.0) || dt > 1.0 / (50.0 * f0))
            throw DomainError ("dt must lie in (0, 1/(50 f0)]");
        if (!(phase_lag_s >= 0.0) || !std::isfinite (phase_lag_s))
            throw DomainError ("phase_lag must be non-negative");
        if (!std::isfinite (k1) || !std::isfinite (k2))
            throw DomainError ("drive gains must be finite");
    }

    double SimParams::omega1 () const noexcept { return kTwoPi * f0; }
    double SimParams::omega2 () const noexcept { return kTwoPi * f0 * mode2_ratio; }

    SensorModel::SensorModel ()
    {
        gain << 2.0, 0.6, 1.2, 1.4, 0.4, 2.2;
        rate_gain << 0.04, 0.01, 0.02, 0.03, 0.01, 0.05;
    }

    void SensorModel::validate () const
    {
        if (!gain.allFinite () || !rate_gain.allFinite ())
            throw DomainError ("sensor gains must be finite");
        Eigen::JacobiSVD<Eigen::Matrix<double, 3, 2>> svd (gain);
        const auto sv = svd.singularValues ();
        if (!(sv (1) > 1e-9 * std::max (sv (0), 1e-300)))
            throw DomainError ("sensor gain must have rank 2");
        if (!(lag_tau_s >= 0.0))
            throw DomainError ("sensor lag must be non-negative");
        if (!(noise_sigma_kpa >= 0.0))
            throw DomainError ("sensor noise must be non-negative");
        if (!std::isfinite (sat_kappa) || !std::isfinite (baseline_kpa))
            throw DomainError ("sensor baseline and saturation must be finite");
    }

    Point2 lab_tip (CurvatureState q, double theta_rad, const TentacleGeometry &geom)
    {
        const auto b = tip_position (q, geom);
        const double c = std::cos (theta_rad);
        const double s = std::sin (theta_rad);
        return {c * b.x - s * b.y, s * b.x + c * b.y};
    }

    SimTrace simulate (const ActuationProgram &program, const SimParams &params, const TentacleGeometry &geom,
                       double c_thrust)
    {
        params.validate ();
        geom.validate ();
        if (std::abs (program.dt - params.dt) > 1e-12 * params.dt)
            throw DomainError ("program and simulation time steps differ");

        const std::size_t n = program.time.size ();
        const double dt = params.dt;
        const double w1 = params.omega1 ();
        const double w2 = params.omega2 ();
        const double z = params.zeta;

        SimTrace tr;
        tr.dt = dt;
        tr.time = program.time;
        tr.theta_deg = program.theta_deg;
        tr.q.resize (n);
        tr.q_dot.resize (n);
        tr.tip.resize (n);
        tr.thrust.assign (n, 0.0);

        double a = 0.0, va = 0.0, b = 0.0, vb = 0.0;
        for (std::size_t i = 0; i < n; ++i)
        {
            const double th1 = kDegToRad * program.theta_deg[i];
            const double th2 = kDegToRad * interpolate (program, program.time[i] - params.phase_lag_s);
            va += dt * (params.k1 * th1 - 2.0 * z * w1 * va - w1 * w1 * a);
            a += dt * va;
            vb += dt * (params.k2 * th2 - 2.0 * z * w2 * vb - w2 * w2 * b);
            b += dt * vb;
            if (!(std::abs (a) <= kDivergence && std::abs (b) <= kDivergence))
            {
                std::ostringstream msg;
                msg << "simulation diverged at t=" << program.time[i] << " s (q1=" << a << ", q2=" << b
                    << "); reduce dt or the drive gains";
                throw std::runtime_error (msg.str ());
            }
            tr.q[i] = {a, b};
            tr.q_dot[i] = {va, vb};
            tr.tip[i] = lab_tip (tr.q[i], th1, geom);
            if (i > 0)
            {
                const double v = (tr.tip[i].x - tr.tip[i - 1].x) / dt;
                tr.thrust[i] = c_thrust * v * v;
            }
        }
        return tr;
    }

    Eigen::MatrixXd sensor_readout_channels (const SimTrace &trace, const Eigen::MatrixXd &gain,
                                             const Eigen::MatrixXd &rate_gain, const SensorModel &model)
    {
        if (gain.rows () < 1 || gain.cols () != 2 || rate_gain.rows () != gain.rows () || rate_gain.cols () != 2)
            throw DomainError ("channel gains must be n x 2 with matching shapes");
        if (!gain.allFinite () || !rate_gain.allFinite ())
            throw DomainError ("sensor gains must be finite");
        if (!(model.lag_tau_s >= 0.0) || !(model.noise_sigma_kpa >= 0.0))
            throw DomainError ("sensor lag and noise must be non-negative");
        const std::size_t n = trace.size ();
        if (trace.q.size () != n || trace.q_dot.size () != n)
            throw DomainError ("trace series lengths differ");
        const auto channels = gain.rows ();
        const double alpha = model.lag_tau_s > 0.0 ? 1.0 - std::exp (-trace.dt / model.lag_tau_s) : 1.0;
        std::mt19937_64 rng (model.seed);
        std::normal_distribution<double> noise (0.0, 1.0);

        Eigen::MatrixXd out (static_cast<Eigen::Index> (n), channels);
        Eigen::VectorXd state = Eigen::VectorXd::Zero (channels);
        for (std::size_t i = 0; i < n; ++i)
        {
            const Eigen::Vector2d q (trace.q[i].q1, trace.q[i].q2);
            const Eigen::Vector2d qd (trace.q_dot[i].q1, trace.q_dot[i].q2);
            const Eigen::VectorXd lin = gain * q;
            const Eigen::VectorXd u = lin + rate_gain * qd + model.sat_kappa * lin.array ().cube ().matrix ();
            if (i == 0)
                state = u;
            else
                state += alpha * (u - state);
            Eigen::VectorXd p = state.array () + model.baseline_kpa;
            if (model.noise_sigma_kpa > 0.0)
                for (Eigen::Index c = 0; c < channels; ++c)
                    p (c) += model.noise_sigma_kpa * noise (rng);
            out.row (static_cast<Eigen::Index> (i)) = p.transpose ();
        }
        return out;
    }

    std::vector<Eigen::Vector3d> sensor_readout (const SimTrace &trace, const SensorModel &model)
    {
        model.validate ();
        const Eigen::MatrixXd p = sensor_readout_channels (trace, model.gain, model.rate_gain, model);
        std::vector<Eigen::Vector3d> out (static_cast<std::size_t> (p.rows ()));
        for (Eigen::Index i = 0; i < p.rows (); ++i)
            out[static_cast<std::size_t> (i)] = p.row (i).transpose ();
        return out;
    }

    std::vector<double> thrust_proxy (const SimTrace &trace, double frequency_hz, double c_thrust)
    {
        if (!(frequency_hz > 0.0))
            throw DomainError ("thrust proxy needs a positive frequency");
        const std::size_t n = trace.size ();
        if (n < 3 || trace.tip.size () != n)
            throw DomainError ("thrust proxy needs at least three samples");
        const double dt = trace.dt;
        const double t0 = trace.time.front ();
        const double span = trace.time.back () - t0;
        const auto cycles = static_cast<std::size_t> (std::floor (span * frequency_hz + 1e-9));
        if (cycles < 2)
            throw DomainError ("thrust proxy needs at least two full actuation cycles");

        std::vector<double> sum (cycles, 0.0);
        std::vector<int> count (cycles, 0);
        for (std::size_t i = 0; i < n; ++i)
        {
            const auto k = static_cast<std::size_t> (std::floor ((trace.time[i] - t0) * frequency_hz + 1e-9));
            if (k >= cycles)
                break;
            const std::size_t lo = i == 0 ? 0 : i - 1;
            const std::size_t hi = i + 1 < n ? i + 1 : i;
            const double v = (trace.tip[hi].x - trace.tip[lo].x) / (static_cast<double> (hi - lo) * dt);
            sum[k] += c_thrust * v * v;
            ++count[k];
        }
        for (std::size_t k = 0; k < cycles; ++k)
            sum[k] = count[k] > 0 ? sum[k] / count[k] : 0.0;
        return sum;
    }

    std::vector<double> moving_average (std::span<const double> series, int k)
    {
        if (k < 1 || k % 2 == 0)
            throw DomainError ("moving average window must be odd and positive");
        const auto n = static_cast<std::ptrdiff_t> (series.size ());
        const std::ptrdiff_t h = k / 2;
        std::vector<double> out (series.size ());
        for (std::ptrdiff_t i = 0; i < n; ++i)
        {
            const auto lo = std::max<std::ptrdiff_t> (0, i - h);
            const auto hi = std::min (n - 1, i + h);
            double s = 0.0;
            for (auto j = lo; j <= hi; ++j)
                s += series[j];
            out[i] = s / static_cast<double> (hi - lo + 1);
        }
        return out;
    }

    SimParams preset (Material m)
    {
        SimParams p;
        double soft = 1.0;
        if (m == Material::ecoflex)
        {
            p.f0 = 2.7;
            soft = kEcoflexSoftening;
        }
        const double w1 = p.omega1 ();
        const double w2 = p.omega2 ();
        p.k1 = soft * kGain1 * w1 * w1;
        p.k2 = soft * kGain2 * w2 * w2;
        p.phase_lag_s = kLagCycles / p.f0;
        return p;
    }

    const char *material_name (Material m) noexcept { return m == Material::ecoflex ? "ecoflex" : "dragonskin"; }

    Material material_from_name (const std::string &name)
    {
        if (name == "dragonskin")
            return Material::dragonskin;
        if (name == "ecoflex")
            return Material::ecoflex;
        throw DomainError ("unknown material preset '" + name + "' (expected dragonskin or ecoflex)");
    }

} // namespace tentacle
