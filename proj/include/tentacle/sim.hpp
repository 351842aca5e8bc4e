#pragma once
/**
 * @file   sim.hpp
 * @brief  Actuation programs, two-mode shape dynamics, synthetic pressure
 *         sensors and a reactive thrust proxy.
 */

#include "tentacle/kinematics.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

namespace tentacle
{
    enum class AmplitudeMode
    {
        fixed,
        random_per_cycle,
    };

    /// Either a fixed frequency or a linear motor-speed ramp.
    struct ProgramSpec
    {
        double frequency_hz = 1.0;
        bool rpm_ramp = false;
        double rpm_start = 12.0;
        double rpm_end = 80.0;
        double amplitude_deg = 20.0;
        AmplitudeMode amplitude_mode = AmplitudeMode::fixed;
        double max_random_amplitude_deg = 30.0;
        double duration_s = 10.0;
        double dt = 0.005;
        std::uint64_t seed = 1;

        void validate () const;
    };

    /// Sampled base-angle command.
    struct ActuationProgram
    {
        double dt = 0.0;
        std::vector<double> time;
        std::vector<double> theta_deg;
        std::vector<double> frequency_hz; ///< instantaneous
        std::vector<double> cycle_amplitude_deg;
    };

    /// Motor speed to triangular-wave frequency: one motor revolution sweeps
    /// four 30 degree strokes, so f = RPM / 20.
    [[nodiscard]] double rpm_to_frequency (double rpm) noexcept;

    /// Unit-peak triangle of the phase in cycles: 0 at 0, +1 at 1/4, -1 at 3/4.
    [[nodiscard]] double unit_triangle (double cycles) noexcept;

    /// Zero-mean triangle of period 1/f and peak A; phase in cycles.
    [[nodiscard]] double triangular_wave (double t, double f, double amplitude_deg, double phase = 0.0);

    [[nodiscard]] ActuationProgram build_program (const ProgramSpec &spec);

    /**
     * Modal dynamics, per mode:
     *   q'' + 2 zeta w q' + w^2 q = k theta(t - delay)
     * with theta in radians, w1 = 2 pi f0, w2 = mode2_ratio w1, delay1 = 0,
     * delay2 = phase_lag_s. The static gain is k / w^2.
     */
    struct SimParams
    {
        static constexpr double kTwoPi = 2.0 * std::numbers::pi;

        double f0 = 3.2;
        double zeta = 0.6955;
        double mode2_ratio = 3.0673;
        double k1 = -1.4934 * (kTwoPi * 3.2) * (kTwoPi * 3.2);
        double k2 = 0.7926 * (kTwoPi * 3.2 * 3.0673) * (kTwoPi * 3.2 * 3.0673);
        double phase_lag_s = 1.3941 / 3.2;
        double dt = 0.005;

        void validate () const;
        [[nodiscard]] double omega1 () const noexcept;
        [[nodiscard]] double omega2 () const noexcept;
    };

    struct SensorModel
    {
        Eigen::Matrix<double, 3, 2> gain;      ///< kPa per rad
        Eigen::Matrix<double, 3, 2> rate_gain; ///< kPa s per rad
        double baseline_kpa = 101.3;
        double lag_tau_s = 0.02;
        double sat_kappa = 0.01;
        double noise_sigma_kpa = 0.02;
        std::uint64_t seed = 11;

        SensorModel ();
        /// Throws DomainError on a rank-deficient gain or negative lag/noise.
        void validate () const;
    };

    struct SimTrace
    {
        double dt = 0.0;
        std::vector<double> time;
        std::vector<double> theta_deg;
        std::vector<CurvatureState> q;
        std::vector<CurvatureState> q_dot;
        std::vector<Eigen::Vector3d> pressure;
        std::vector<Point2> tip; ///< lab frame, base rotation included
        std::vector<double> thrust;

        [[nodiscard]] std::size_t size () const noexcept { return time.size (); }
    };

    /// Tip in the lab frame: body-frame tip rotated by the base angle.
    [[nodiscard]] Point2 lab_tip (CurvatureState q, double theta_rad, const TentacleGeometry &geom);

    /// Integrates the modal dynamics by semi-implicit Euler at the program's
    /// step; pressures are left empty and thrust holds c_T v_lat^2 per sample.
    /// Throws std::runtime_error when |q| exceeds 10 rad.
    [[nodiscard]] SimTrace simulate (const ActuationProgram &program, const SimParams &params,
                                     const TentacleGeometry &geom, double c_thrust = 1e-4);

    /// 3-channel pressure readings for a simulated trace.
    [[nodiscard]] std::vector<Eigen::Vector3d> sensor_readout (const SimTrace &trace, const SensorModel &model);

    /// Same readout for an arbitrary n x 2 channel layout (T x n result);
    /// baseline, lag, saturation, noise and seed come from `model`.
    [[nodiscard]] Eigen::MatrixXd sensor_readout_channels (const SimTrace &trace, const Eigen::MatrixXd &gain,
                                                           const Eigen::MatrixXd &rate_gain, const SensorModel &model);

    /// Per-cycle mean of c_T times the squared lateral tip velocity (mN).
    /// Throws DomainError when fewer than two full cycles are available.
    [[nodiscard]] std::vector<double> thrust_proxy (const SimTrace &trace, double frequency_hz, double c_thrust = 1e-4);

    /// Centered window of odd length k, truncated at the edges.
    [[nodiscard]] std::vector<double> moving_average (std::span<const double> series, int k);

    enum class Material
    {
        dragonskin,
        ecoflex,
    };

    [[nodiscard]] SimParams preset (Material m);
    [[nodiscard]] const char *material_name (Material m) noexcept;
    [[nodiscard]] Material material_from_name (const std::string &name);

} // namespace tentacle
