#pragma once
/**
 * @file   shape_fit.hpp
 * @brief  Fitting the affine curvature model and a cubic to observed centerlines,
 *         plus the reconstruction error metrics used to compare them.
 */

#include "tentacle/kinematics.hpp"

#include <span>
#include <vector>

namespace tentacle
{
    /// Ordered centerline points at an implicit uniform arc parameter.
    /// At least four points, consecutive points distinct.
    class Centerline
    {
    public:
        explicit Centerline (Polyline points);

        [[nodiscard]] const Polyline &points () const noexcept { return points_; }
        [[nodiscard]] std::size_t size () const noexcept { return points_.size (); }
        [[nodiscard]] double length () const noexcept;
        /// s_i = i / (n - 1)
        [[nodiscard]] double arc_param (std::size_t i) const noexcept;

    private:
        Polyline points_;
    };

    /// Lateral displacement x(s) = c0 + c1 s + c2 s^2 + c3 s^3 (mm).
    struct PolyCoeffs
    {
        double c0 = 0.0;
        double c1 = 0.0;
        double c2 = 0.0;
        double c3 = 0.0;

        [[nodiscard]] double operator() (double s) const noexcept { return c0 + s * (c1 + s * (c2 + s * c3)); }
        [[nodiscard]] double slope (double s) const noexcept { return c1 + s * (2.0 * c2 + s * 3.0 * c3); }
    };

    struct AffineFit
    {
        CurvatureState state;
        double heading_rms = 0.0;  ///< rad, residual of the tangent-angle fit
        double position_rms = 0.0; ///< mm, residual after position refinement
        int iterations = 0;
    };

    struct PolyFit
    {
        PolyCoeffs coeffs;
        double residual_rms = 0.0; ///< mm
    };

    /// Table-style reconstruction errors. Segment 1/2 map to q1/q2 (affine)
    /// or c2/c3 (polynomial).
    struct FitReport
    {
        double nrmse_seg1 = 0.0;       ///< percent
        double nrmse_seg2 = 0.0;       ///< percent
        double abs_tip_err_mean = 0.0; ///< mm
        double abs_tip_err_std = 0.0;  ///< mm
        double rel_tip_err = 0.0;      ///< percent of the ground-truth lateral tip range
    };

    /**
     * Fits (q1, q2) to a centerline rooted at the origin.
     *
     * Segment headings atan2(-dx, dy) at segment midpoints are regressed on
     * q1 s + q2 s^2/2 to obtain a starting point, then refined by Gauss-Newton
     * on the point positions so that measurement noise on individual points is
     * not amplified by differencing.
     */
    [[nodiscard]] AffineFit fit_affine (const Centerline &cl, double length_mm);

    /// Heading-only least squares, without position refinement.
    [[nodiscard]] AffineFit fit_affine_headings (const Centerline &cl);

    /// Least-squares cubic of the lateral coordinate against uniform s.
    [[nodiscard]] PolyFit fit_polynomial (const Centerline &cl);

    /// RMSE divided by the truth range, in percent. Throws DomainError on
    /// length mismatch, fewer than two samples, or a constant truth.
    [[nodiscard]] double nrmse (std::span<const double> pred, std::span<const double> truth);

    /// Tip implied by a lateral cubic on an inextensible axis of length L.
    /// Where |x'(s)| exceeds L the axial component is clamped to zero.
    [[nodiscard]] Point2 poly_tip_position (const PolyCoeffs &c, double length_mm);

    /// Polyline of the same construction at n uniform s (trapezoidal axial sum).
    [[nodiscard]] Polyline poly_centerline (const PolyCoeffs &c, double length_mm, int n);

    /// Affine-state report. When truth_tips is empty the true tips are
    /// computed from truth through the kinematics.
    [[nodiscard]] FitReport fit_report (std::span<const CurvatureState> pred, std::span<const CurvatureState> truth,
                                        const TentacleGeometry &geom, std::span<const Point2> truth_tips = {});

    /// Polynomial report; the same tip convention as above.
    [[nodiscard]] FitReport fit_report (std::span<const PolyCoeffs> pred, std::span<const PolyCoeffs> truth,
                                        const TentacleGeometry &geom, std::span<const Point2> truth_tips = {});

    /// Tip error statistics between aligned tip series (shared by both reports).
    [[nodiscard]] FitReport tip_errors (std::span<const Point2> pred_tips, std::span<const Point2> truth_tips);

} // namespace tentacle
