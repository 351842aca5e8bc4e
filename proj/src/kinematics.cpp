#include "tentacle/kinematics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace tentacle
{
    namespace
    {
        constexpr int kGaussOrder = 10;
        constexpr int kPanelsPerUnit = 32;

        const GaussRule &default_rule ()
        {
            static const GaussRule rule = gauss_legendre (kGaussOrder);
            return rule;
        }

        void check_unit_interval (double s)
        {
            if (!(s >= 0.0 && s <= 1.0))
            {
                std::ostringstream msg;
                msg << "arc parameter s=" << s << " outside [0,1]";
                throw DomainError (msg.str ());
            }
        }

        void check_length (double length_mm)
        {
            if (!(length_mm > 0.0) || !std::isfinite (length_mm))
                throw DomainError ("tentacle length must be positive and finite");
        }

        // Accumulates the integrand over [a, b] with composite Gauss-Legendre.
        template <typename F> void integrate_interval (double a, double b, F &&accumulate)
        {
            if (b <= a)
                return;
            const auto &rule = default_rule ();
            const int panels = std::max (1, static_cast<int> (std::ceil (kPanelsPerUnit * (b - a))));
            const double h = (b - a) / panels;
            for (int p = 0; p < panels; ++p)
            {
                const double mid = a + (p + 0.5) * h;
                for (std::size_t k = 0; k < rule.nodes.size (); ++k)
                    accumulate (mid + 0.5 * h * rule.nodes[k], 0.5 * h * rule.weights[k]);
            }
        }
    } // namespace

    void TentacleGeometry::validate () const
    {
        check_length (length_mm);
        if (n_samples < 2)
            throw DomainError ("geometry needs at least 2 samples, got " + std::to_string (n_samples));
        if (!(root_diameter_mm > 0.0))
            throw DomainError ("root diameter must be positive");
    }

    GaussRule gauss_legendre (int order)
    {
        if (order < 1)
            throw DomainError ("Gauss-Legendre order must be >= 1");
        GaussRule rule;
        rule.nodes.resize (order);
        rule.weights.resize (order);
        const int half = (order + 1) / 2;
        for (int i = 0; i < half; ++i)
        {
            double z = std::cos (std::numbers::pi * (i + 0.75) / (order + 0.5));
            double pp = 0.0;
            for (int iter = 0; iter < 100; ++iter)
            {
                double p1 = 1.0;
                double p2 = 0.0;
                for (int j = 0; j < order; ++j)
                {
                    const double p3 = p2;
                    p2 = p1;
                    p1 = ((2.0 * j + 1.0) * z * p2 - j * p3) / (j + 1);
                }
                pp = order * (z * p1 - p2) / (z * z - 1.0);
                const double z1 = z;
                z = z1 - p1 / pp;
                if (std::abs (z - z1) < 1e-15)
                    break;
            }
            rule.nodes[i] = -z;
            rule.nodes[order - 1 - i] = z;
            rule.weights[i] = 2.0 / ((1.0 - z * z) * pp * pp);
            rule.weights[order - 1 - i] = rule.weights[i];
        }
        return rule;
    }

    double axis_angle (CurvatureState q, double s)
    {
        check_unit_interval (s);
        return q.q1 * s + 0.5 * q.q2 * s * s;
    }

    Point2 centerline_position (CurvatureState q, double s, double length_mm)
    {
        check_unit_interval (s);
        check_length (length_mm);
        const double stations[] = {s};
        return centerline_at (q, stations, length_mm).front ();
    }

    Polyline centerline_at (CurvatureState q, std::span<const double> s_sorted, double length_mm)
    {
        check_length (length_mm);
        Polyline out;
        out.reserve (s_sorted.size ());
        double prev = 0.0;
        double sx = 0.0;
        double cy = 0.0;
        for (double s : s_sorted)
        {
            check_unit_interval (s);
            if (s < prev)
                throw DomainError ("arc parameters must be sorted");
            integrate_interval (prev, s, [&] (double v, double w) {
                const double a = q.q1 * v + 0.5 * q.q2 * v * v;
                sx += w * std::sin (a);
                cy += w * std::cos (a);
            });
            out.push_back ({-length_mm * sx, length_mm * cy});
            prev = s;
        }
        return out;
    }

    Polyline sample_centerline (CurvatureState q, const TentacleGeometry &geom)
    {
        geom.validate ();
        std::vector<double> s (geom.n_samples);
        for (int i = 0; i < geom.n_samples; ++i)
            s[i] = static_cast<double> (i) / (geom.n_samples - 1);
        s.back () = 1.0;
        return centerline_at (q, s, geom.length_mm);
    }

    Point2 tip_position (CurvatureState q, const TentacleGeometry &geom)
    {
        geom.validate ();
        return centerline_position (q, 1.0, geom.length_mm);
    }

    CenterlineJacobian centerline_jacobian (CurvatureState q, std::span<const double> s_sorted, double length_mm)
    {
        check_length (length_mm);
        CenterlineJacobian out;
        out.points.reserve (s_sorted.size ());
        out.d_dq1.reserve (s_sorted.size ());
        out.d_dq2.reserve (s_sorted.size ());
        double prev = 0.0;
        double sn = 0.0, cs = 0.0;
        double sn1 = 0.0, cs1 = 0.0;
        double sn2 = 0.0, cs2 = 0.0;
        for (double s : s_sorted)
        {
            check_unit_interval (s);
            if (s < prev)
                throw DomainError ("arc parameters must be sorted");
            integrate_interval (prev, s, [&] (double v, double w) {
                const double a = q.q1 * v + 0.5 * q.q2 * v * v;
                const double sa = std::sin (a);
                const double ca = std::cos (a);
                sn += w * sa;
                cs += w * ca;
                sn1 += w * v * sa;
                cs1 += w * v * ca;
                sn2 += w * 0.5 * v * v * sa;
                cs2 += w * 0.5 * v * v * ca;
            });
            out.points.push_back ({-length_mm * sn, length_mm * cs});
            out.d_dq1.push_back ({-length_mm * cs1, -length_mm * sn1});
            out.d_dq2.push_back ({-length_mm * cs2, -length_mm * sn2});
            prev = s;
        }
        return out;
    }

} // namespace tentacle
