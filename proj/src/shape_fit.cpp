#include "tentacle/shape_fit.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace tentacle
{
    namespace
    {
        double wrap_to_pi (double a) { return std::remainder (a, 2.0 * std::numbers::pi); }

        double heading (Point2 a, Point2 b) { return std::atan2 (-(b.x - a.x), b.y - a.y); }

        double mean_of (std::span<const double> v) { return std::accumulate (v.begin (), v.end (), 0.0) / static_cast<double> (v.size ()); }
    } // namespace

    Centerline::Centerline (Polyline points) : points_ (std::move (points))
    {
        if (points_.size () < 4)
            throw DomainError ("centerline needs at least 4 points, got " + std::to_string (points_.size ()));
        for (std::size_t i = 1; i < points_.size (); ++i)
        {
            if (points_[i] == points_[i - 1])
                throw DomainError ("centerline has coincident consecutive points at index " + std::to_string (i));
            if (!std::isfinite (points_[i].x) || !std::isfinite (points_[i].y))
                throw DomainError ("centerline has non-finite point at index " + std::to_string (i));
        }
    }

    double Centerline::length () const noexcept
    {
        double len = 0.0;
        for (std::size_t i = 1; i < points_.size (); ++i)
            len += std::hypot (points_[i].x - points_[i - 1].x, points_[i].y - points_[i - 1].y);
        return len;
    }

    double Centerline::arc_param (std::size_t i) const noexcept { return static_cast<double> (i) / static_cast<double> (points_.size () - 1); }

    AffineFit fit_affine_headings (const Centerline &cl)
    {
        const auto &p = cl.points ();
        const std::size_t n = p.size ();
        const std::size_t segments = n - 1;

        // Unwrap each fine heading against a coarse reference built from
        // longer chords; consecutive-difference unwrapping breaks on noisy data.
        const std::size_t stride = std::max<std::size_t> (1, segments / 20);
        std::vector<double> ref_s, ref_a;
        for (std::size_t i = 0; i + stride < n; i += std::max<std::size_t> (1, stride / 2))
        {
            double a = heading (p[i], p[i + stride]);
            if (!ref_a.empty ())
                a = ref_a.back () + wrap_to_pi (a - ref_a.back ());
            ref_s.push_back ((i + 0.5 * stride) / static_cast<double> (segments));
            ref_a.push_back (a);
        }

        auto reference = [&] (double s) {
            if (s <= ref_s.front ())
                return ref_a.front ();
            if (s >= ref_s.back ())
                return ref_a.back ();
            const auto it = std::upper_bound (ref_s.begin (), ref_s.end (), s);
            const std::size_t j = static_cast<std::size_t> (it - ref_s.begin ());
            const double t = (s - ref_s[j - 1]) / (ref_s[j] - ref_s[j - 1]);
            return ref_a[j - 1] + t * (ref_a[j] - ref_a[j - 1]);
        };

        Eigen::MatrixXd design (segments, 2);
        Eigen::VectorXd angles (segments);
        for (std::size_t i = 0; i < segments; ++i)
        {
            const double s = (i + 0.5) / static_cast<double> (segments);
            const double r = reference (s);
            angles (i) = r + wrap_to_pi (heading (p[i], p[i + 1]) - r);
            design (i, 0) = s;
            design (i, 1) = 0.5 * s * s;
        }
        const Eigen::Vector2d coef = design.colPivHouseholderQr ().solve (angles);

        AffineFit fit;
        fit.state = {coef (0), coef (1)};
        fit.heading_rms = std::sqrt ((design * coef - angles).squaredNorm () / static_cast<double> (segments));
        return fit;
    }

    AffineFit fit_affine (const Centerline &cl, double length_mm)
    {
        if (!(length_mm > 0.0))
            throw DomainError ("tentacle length must be positive");
        AffineFit fit = fit_affine_headings (cl);

        const auto &p = cl.points ();
        const std::size_t n = p.size ();
        std::vector<double> s (n);
        for (std::size_t i = 0; i < n; ++i)
            s[i] = cl.arc_param (i);
        s.back () = 1.0;

        auto residual = [&] (const CenterlineJacobian &jac, Eigen::MatrixXd *jt) {
            Eigen::VectorXd r (2 * n);
            if (jt)
                jt->resize (2 * n, 2);
            for (std::size_t i = 0; i < n; ++i)
            {
                r (2 * i) = jac.points[i].x - p[i].x;
                r (2 * i + 1) = jac.points[i].y - p[i].y;
                if (jt)
                {
                    (*jt) (2 * i, 0) = jac.d_dq1[i].x;
                    (*jt) (2 * i + 1, 0) = jac.d_dq1[i].y;
                    (*jt) (2 * i, 1) = jac.d_dq2[i].x;
                    (*jt) (2 * i + 1, 1) = jac.d_dq2[i].y;
                }
            }
            return r;
        };

        // Levenberg-Marquardt on point positions.
        CurvatureState q = fit.state;
        Eigen::MatrixXd jt;
        Eigen::VectorXd r = residual (centerline_jacobian (q, s, length_mm), &jt);
        double cost = r.squaredNorm ();
        double lambda = 1e-3;
        int it = 0;
        for (; it < 100; ++it)
        {
            const Eigen::Matrix2d jtj = jt.transpose () * jt;
            const Eigen::Vector2d g = jt.transpose () * r;
            Eigen::Matrix2d damped = jtj;
            damped.diagonal () *= (1.0 + lambda);
            const Eigen::Vector2d step = damped.ldlt ().solve (-g);
            const CurvatureState trial{q.q1 + step (0), q.q2 + step (1)};
            Eigen::MatrixXd trial_jt;
            const Eigen::VectorXd trial_r = residual (centerline_jacobian (trial, s, length_mm), &trial_jt);
            const double trial_cost = trial_r.squaredNorm ();
            if (trial_cost <= cost)
            {
                q = trial;
                r = trial_r;
                jt = std::move (trial_jt);
                const bool converged = cost - trial_cost <= 1e-15 * (1.0 + cost) || step.norm () < 1e-13;
                cost = trial_cost;
                lambda = std::max (lambda * 0.3, 1e-12);
                if (converged)
                    break;
            }
            else
            {
                lambda *= 10.0;
                if (lambda > 1e12)
                    break;
            }
        }

        fit.state = q;
        fit.position_rms = std::sqrt (cost / static_cast<double> (n));
        fit.iterations = it;
        return fit;
    }

    PolyFit fit_polynomial (const Centerline &cl)
    {
        const auto &p = cl.points ();
        const std::size_t n = p.size ();
        Eigen::MatrixXd vander (n, 4);
        Eigen::VectorXd lateral (n);
        for (std::size_t i = 0; i < n; ++i)
        {
            const double s = cl.arc_param (i);
            vander (i, 0) = 1.0;
            vander (i, 1) = s;
            vander (i, 2) = s * s;
            vander (i, 3) = s * s * s;
            lateral (i) = p[i].x;
        }
        const Eigen::Vector4d c = vander.colPivHouseholderQr ().solve (lateral);
        PolyFit fit;
        fit.coeffs = {c (0), c (1), c (2), c (3)};
        fit.residual_rms = std::sqrt ((vander * c - lateral).squaredNorm () / static_cast<double> (n));
        return fit;
    }

    double nrmse (std::span<const double> pred, std::span<const double> truth)
    {
        if (pred.size () != truth.size ())
            throw DomainError ("nrmse: series lengths differ");
        if (truth.size () < 2)
            throw DomainError ("nrmse: need at least 2 samples");
        const auto [lo, hi] = std::minmax_element (truth.begin (), truth.end ());
        const double range = *hi - *lo;
        if (!(range > 0.0))
            throw DomainError ("nrmse: truth series has zero range");
        double sq = 0.0;
        for (std::size_t i = 0; i < truth.size (); ++i)
            sq += (pred[i] - truth[i]) * (pred[i] - truth[i]);
        return 100.0 * std::sqrt (sq / static_cast<double> (truth.size ())) / range;
    }

    Point2 poly_tip_position (const PolyCoeffs &c, double length_mm)
    {
        if (!(length_mm > 0.0))
            throw DomainError ("tentacle length must be positive");
        static const GaussRule rule = gauss_legendre (10);
        constexpr int panels = 16;
        double axial = 0.0;
        for (int pnl = 0; pnl < panels; ++pnl)
        {
            const double mid = (pnl + 0.5) / panels;
            for (std::size_t k = 0; k < rule.nodes.size (); ++k)
            {
                const double s = mid + 0.5 * rule.nodes[k] / panels;
                const double slope = c.slope (s);
                axial += 0.5 * rule.weights[k] / panels * std::sqrt (std::max (0.0, length_mm * length_mm - slope * slope));
            }
        }
        return {c (1.0), axial};
    }

    Polyline poly_centerline (const PolyCoeffs &c, double length_mm, int n)
    {
        if (!(length_mm > 0.0))
            throw DomainError ("tentacle length must be positive");
        if (n < 2)
            throw DomainError ("polynomial centerline needs at least 2 points");
        Polyline out (n);
        double y = 0.0;
        double prev = std::sqrt (std::max (0.0, length_mm * length_mm - c.slope (0.0) * c.slope (0.0)));
        out[0] = {c (0.0), 0.0};
        for (int i = 1; i < n; ++i)
        {
            const double s = static_cast<double> (i) / (n - 1);
            const double cur = std::sqrt (std::max (0.0, length_mm * length_mm - c.slope (s) * c.slope (s)));
            y += 0.5 * (prev + cur) / (n - 1);
            prev = cur;
            out[i] = {c (s), y};
        }
        return out;
    }

    FitReport tip_errors (std::span<const Point2> pred_tips, std::span<const Point2> truth_tips)
    {
        if (pred_tips.size () != truth_tips.size ())
            throw DomainError ("tip series lengths differ");
        if (truth_tips.empty ())
            throw DomainError ("tip series are empty");
        std::vector<double> err (truth_tips.size ());
        double lo = truth_tips.front ().x, hi = lo;
        for (std::size_t i = 0; i < truth_tips.size (); ++i)
        {
            err[i] = std::hypot (pred_tips[i].x - truth_tips[i].x, pred_tips[i].y - truth_tips[i].y);
            lo = std::min (lo, truth_tips[i].x);
            hi = std::max (hi, truth_tips[i].x);
        }
        FitReport rep;
        rep.abs_tip_err_mean = mean_of (err);
        double var = 0.0;
        for (double e : err)
            var += (e - rep.abs_tip_err_mean) * (e - rep.abs_tip_err_mean);
        rep.abs_tip_err_std = std::sqrt (var / static_cast<double> (err.size ()));
        const double range = hi - lo;
        if (range > 0.0)
            rep.rel_tip_err = 100.0 * rep.abs_tip_err_mean / range;
        else if (rep.abs_tip_err_mean > 0.0)
            throw DomainError ("relative tip error undefined: ground-truth tip range is zero");
        return rep;
    }

    FitReport fit_report (std::span<const CurvatureState> pred, std::span<const CurvatureState> truth, const TentacleGeometry &geom,
                          std::span<const Point2> truth_tips)
    {
        if (pred.size () != truth.size ())
            throw DomainError ("fit_report: series lengths differ");
        std::vector<double> p1, p2, t1, t2;
        std::vector<Point2> ptip, ttip;
        for (std::size_t i = 0; i < pred.size (); ++i)
        {
            p1.push_back (pred[i].q1);
            p2.push_back (pred[i].q2);
            t1.push_back (truth[i].q1);
            t2.push_back (truth[i].q2);
            ptip.push_back (tip_position (pred[i], geom));
            if (truth_tips.empty ())
                ttip.push_back (tip_position (truth[i], geom));
        }
        FitReport rep = tip_errors (ptip, truth_tips.empty () ? std::span<const Point2> (ttip) : truth_tips);
        rep.nrmse_seg1 = nrmse (p1, t1);
        rep.nrmse_seg2 = nrmse (p2, t2);
        return rep;
    }

    FitReport fit_report (std::span<const PolyCoeffs> pred, std::span<const PolyCoeffs> truth, const TentacleGeometry &geom,
                          std::span<const Point2> truth_tips)
    {
        if (pred.size () != truth.size ())
            throw DomainError ("fit_report: series lengths differ");
        geom.validate ();
        std::vector<double> p2, p3, t2, t3;
        std::vector<Point2> ptip, ttip;
        for (std::size_t i = 0; i < pred.size (); ++i)
        {
            p2.push_back (pred[i].c2);
            p3.push_back (pred[i].c3);
            t2.push_back (truth[i].c2);
            t3.push_back (truth[i].c3);
            ptip.push_back (poly_tip_position (pred[i], geom.length_mm));
            if (truth_tips.empty ())
                ttip.push_back (poly_tip_position (truth[i], geom.length_mm));
        }
        FitReport rep = tip_errors (ptip, truth_tips.empty () ? std::span<const Point2> (ttip) : truth_tips);
        rep.nrmse_seg1 = nrmse (p2, t2);
        rep.nrmse_seg2 = nrmse (p3, t3);
        return rep;
    }

} // namespace tentacle
