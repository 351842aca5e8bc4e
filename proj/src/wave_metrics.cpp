#include "tentacle/wave_metrics.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <stdexcept>

namespace tentacle
{
    void DeformationField::validate () const
    {
        if (lateral.rows () < 3)
            throw DomainError ("deformation field needs at least 3 stations");
        if (lateral.cols () < 8)
            throw DomainError ("deformation field needs at least 8 time steps");
        if (static_cast<Eigen::Index> (stations.size ()) != lateral.rows ())
            throw DomainError ("station count does not match the field");
        if (!lateral.allFinite ())
            throw DomainError ("deformation field has non-finite entries");
    }

    double tip_deflection (std::span<const double> tip_lateral, double ell_mm)
    {
        if (tip_lateral.size () < 2)
            throw DomainError ("tip deflection needs at least two samples");
        if (!(ell_mm > 0.0))
            throw DomainError ("tip deflection length must be positive");
        const auto [lo, hi] = std::minmax_element (tip_lateral.begin (), tip_lateral.end ());
        return std::atan ((*hi - *lo) / (2.0 * ell_mm)) * 180.0 / std::numbers::pi;
    }

    Eigen::VectorXcd analytic_signal (std::span<const double> x)
    {
        const auto n = static_cast<Eigen::Index> (x.size ());
        if (n < 8)
            throw DomainError ("analytic signal needs at least 8 samples");
        double mean = 0.0;
        for (double v : x)
            mean += v;
        mean /= static_cast<double> (n);

        Eigen::VectorXcd in (n);
        for (Eigen::Index i = 0; i < n; ++i)
            in (i) = x[i] - mean;
        Eigen::FFT<double> fft;
        Eigen::VectorXcd spec (n);
        fft.fwd (spec, in);
        spec (0) = 0.0;
        const Eigen::Index half = n / 2;
        for (Eigen::Index k = 1; k < n; ++k)
        {
            if (k < (n + 1) / 2)
                spec (k) *= 2.0;
            else if (!(n % 2 == 0 && k == half))
                spec (k) = 0.0;
        }
        Eigen::VectorXcd out (n);
        fft.inv (out, spec);
        return out;
    }

    double twi (const Eigen::VectorXcd &mode)
    {
        const double a = mode.real ().squaredNorm ();
        const double b = mode.imag ().squaredNorm ();
        const double c = mode.real ().dot (mode.imag ());
        const double lmax = 0.5 * (a + b) + std::hypot (0.5 * (a - b), c);
        if (!(lmax > 0.0))
            throw DomainError ("TWI of a zero mode is undefined");
        const double lmin = std::max (0.0, (a * b - c * c) / lmax);
        return std::min (1.0, std::sqrt (lmin / lmax));
    }

    ModeSet cod (const DeformationField &field)
    {
        field.validate ();
        const Eigen::Index ns = field.lateral.rows ();
        const Eigen::Index nt = field.lateral.cols ();
        Eigen::MatrixXcd Z (ns, nt);
        std::vector<double> row (nt);
        for (Eigen::Index s = 0; s < ns; ++s)
        {
            for (Eigen::Index t = 0; t < nt; ++t)
                row[t] = field.lateral (s, t);
            Z.row (s) = analytic_signal (row).transpose ();
        }
        const Eigen::MatrixXcd R = Z * Z.adjoint () / static_cast<double> (nt);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig (R);
        if (eig.info () != Eigen::Success)
            throw std::runtime_error ("complex orthogonal decomposition failed to converge");

        double trace = 0.0;
        for (Eigen::Index k = 0; k < ns; ++k)
            trace += std::max (0.0, eig.eigenvalues () (k));
        if (!(trace > 0.0))
            throw DomainError ("deformation field has no variance");

        ModeSet out;
        for (Eigen::Index k = ns - 1; k >= 0; --k)
        {
            Eigen::VectorXcd w = eig.eigenvectors ().col (k);
            Eigen::Index imax = 0;
            w.cwiseAbs ().maxCoeff (&imax);
            w *= std::conj (w (imax)) / std::abs (w (imax));
            w.normalize ();
            const double lambda = std::max (0.0, eig.eigenvalues () (k));
            out.eigenvalues.push_back (lambda);
            out.energy_fraction.push_back (lambda / trace);
            out.twi.push_back (twi (w));
            out.modes.push_back (std::move (w));
        }
        return out;
    }

    double field_twi (const ModeSet &modes, std::size_t n_modes)
    {
        if (modes.modes.empty () || n_modes == 0)
            throw DomainError ("field TWI needs at least one mode");
        n_modes = std::min (n_modes, modes.modes.size ());
        double num = 0.0, den = 0.0;
        for (std::size_t k = 0; k < n_modes; ++k)
        {
            num += modes.energy_fraction[k] * modes.twi[k];
            den += modes.energy_fraction[k];
        }
        return den > 0.0 ? num / den : modes.twi.front ();
    }

    DeformationField field_from_states (std::span<const CurvatureState> q, const TentacleGeometry &geom, int n_stations,
                                        double dt, std::span<const double> base_angle_rad)
    {
        geom.validate ();
        if (n_stations < 3)
            throw DomainError ("field needs at least 3 stations");
        if (!base_angle_rad.empty () && base_angle_rad.size () != q.size ())
            throw DomainError ("base angle series length differs from the state series");
        DeformationField f;
        f.dt = dt;
        f.stations.resize (n_stations);
        for (int i = 0; i < n_stations; ++i)
            f.stations[i] = static_cast<double> (i) / (n_stations - 1);
        f.stations.back () = 1.0;
        f.lateral.resize (n_stations, static_cast<Eigen::Index> (q.size ()));
        for (std::size_t t = 0; t < q.size (); ++t)
        {
            const auto pts = centerline_at (q[t], f.stations, geom.length_mm);
            const double c = base_angle_rad.empty () ? 1.0 : std::cos (base_angle_rad[t]);
            const double s = base_angle_rad.empty () ? 0.0 : std::sin (base_angle_rad[t]);
            for (int i = 0; i < n_stations; ++i)
                f.lateral (i, static_cast<Eigen::Index> (t)) = c * pts[i].x - s * pts[i].y;
        }
        return f;
    }

    void write_modes_csv (std::ostream &os, const ModeSet &modes, std::span<const double> stations, std::size_t n_modes)
    {
        os << "mode,station,s,re,im\n";
        n_modes = std::min (n_modes, modes.modes.size ());
        const auto old = os.precision (17);
        for (std::size_t k = 0; k < n_modes; ++k)
            for (Eigen::Index i = 0; i < modes.modes[k].size (); ++i)
            {
                const double s = static_cast<std::size_t> (i) < stations.size () ? stations[i] : 0.0;
                os << k << ',' << i << ',' << s << ',' << modes.modes[k] (i).real () << ','
                   << modes.modes[k] (i).imag () << '\n';
            }
        os.precision (old);
    }

} // namespace tentacle
