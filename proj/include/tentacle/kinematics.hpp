#pragma once
/**
 * @file   kinematics.hpp
 * @brief  Planar forward kinematics of the affine curvature model.
 *
 * Curvature along the normalized arc parameter s in [0,1] is c(s) = q1 + q2 s.
 * The axis angle is its integral, and the centerline follows from integrating
 * (-sin, cos) of that angle, so the straight configuration points along +y.
 */

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tentacle
{
    /// Thrown when an argument is outside the domain of an operation.
    class DomainError : public std::domain_error
    {
    public:
        using std::domain_error::domain_error;
    };

    /// Lagrangian coordinates of the affine curvature model at one instant (rad).
    struct CurvatureState
    {
        double q1 = 0.0;
        double q2 = 0.0;

        bool operator== (const CurvatureState &) const = default;
    };

    struct Point2
    {
        double x = 0.0;
        double y = 0.0;

        bool operator== (const Point2 &) const = default;
    };

    using Polyline = std::vector<Point2>;

    struct TentacleGeometry
    {
        double length_mm = 220.0;
        int n_samples = 200;
        double root_diameter_mm = 24.0;

        /// Throws DomainError when length <= 0 or fewer than two samples.
        void validate () const;
    };

    /// Gauss-Legendre nodes and weights on [-1, 1].
    struct GaussRule
    {
        std::vector<double> nodes;
        std::vector<double> weights;
    };

    /// Newton iteration on the Legendre recurrence; accurate to machine precision.
    [[nodiscard]] GaussRule gauss_legendre (int order);

    /// Angle of the central axis at s: q1 s + q2 s^2 / 2.
    [[nodiscard]] double axis_angle (CurvatureState q, double s);

    /// Position of the axis point at s for an undeformed length L (mm).
    [[nodiscard]] Point2 centerline_position (CurvatureState q, double s, double length_mm);

    /// n_samples points at s_i = i / (n_samples - 1), starting at the origin.
    [[nodiscard]] Polyline sample_centerline (CurvatureState q, const TentacleGeometry &geom);

    /// Centerline positions at arbitrary sorted parameters in [0,1].
    [[nodiscard]] Polyline centerline_at (CurvatureState q, std::span<const double> s_sorted, double length_mm);

    [[nodiscard]] Point2 tip_position (CurvatureState q, const TentacleGeometry &geom);

    /// Positions plus their derivatives with respect to q1 and q2, used by
    /// Gauss-Newton shape fitting.
    struct CenterlineJacobian
    {
        Polyline points;
        Polyline d_dq1;
        Polyline d_dq2;
    };

    [[nodiscard]] CenterlineJacobian centerline_jacobian (CurvatureState q, std::span<const double> s_sorted, double length_mm);

} // namespace tentacle
