#pragma once
/**
 * @file   wave_metrics.hpp
 * @brief  Tip deflection, analytic signals, complex orthogonal decomposition
 *         and the traveling wave index.
 */

#include "tentacle/kinematics.hpp"

#include <Eigen/Dense>

#include <complex>
#include <iosfwd>
#include <span>
#include <vector>

namespace tentacle
{
    /// Lateral displacement of n_s stations (rows) over n_t time steps (columns).
    struct DeformationField
    {
        Eigen::MatrixXd lateral; ///< mm
        double dt = 0.0;
        std::vector<double> stations;

        /// At least 3 stations, 8 time steps, finite entries.
        void validate () const;
    };

    /// Complex modes sorted by decreasing eigenvalue. Each mode is unit norm
    /// and rotated so that its largest component is real and positive.
    struct ModeSet
    {
        std::vector<Eigen::VectorXcd> modes;
        std::vector<double> eigenvalues;
        std::vector<double> twi;
        std::vector<double> energy_fraction;
    };

    /// atan(range / (2 ell)) in degrees.
    [[nodiscard]] double tip_deflection (std::span<const double> tip_lateral, double ell_mm);

    /// Demeaned FFT analytic signal; the real part reproduces the demeaned input.
    [[nodiscard]] Eigen::VectorXcd analytic_signal (std::span<const double> x);

    /// Throws DomainError when the field has no variance.
    [[nodiscard]] ModeSet cod (const DeformationField &field);

    /// Reciprocal condition number of [Re w, Im w].
    [[nodiscard]] double twi (const Eigen::VectorXcd &mode);

    /// Energy-weighted TWI of the first n_modes modes.
    [[nodiscard]] double field_twi (const ModeSet &modes, std::size_t n_modes = 1);

    /**
     * Lateral displacement at n_stations uniform s in [0,1] for a state series.
     * When base_angle_rad is given the shape is rotated into the lab frame
     * before taking the lateral coordinate.
     */
    [[nodiscard]] DeformationField field_from_states (std::span<const CurvatureState> q, const TentacleGeometry &geom,
                                                      int n_stations, double dt,
                                                      std::span<const double> base_angle_rad = {});

    /// CSV with header `mode,station,s,re,im`.
    void write_modes_csv (std::ostream &os, const ModeSet &modes, std::span<const double> stations, std::size_t n_modes);

} // namespace tentacle
