#include "tentacle/bayes_opt.hpp"

#include "tentacle/csv.hpp"
#include "tentacle/kinematics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace tentacle
{
    namespace
    {
        double radical_inverse (unsigned base, unsigned k)
        {
            double inv = 1.0 / base, f = inv, r = 0.0;
            while (k > 0)
            {
                r += f * (k % base);
                k /= base;
                f *= inv;
            }
            return r;
        }

        std::vector<double> minmax_normalize (std::span<const double> v)
        {
            const auto [lo, hi] = std::minmax_element (v.begin (), v.end ());
            std::vector<double> out (v.size (), 0.0);
            const double span = *hi - *lo;
            if (span > 0.0)
                for (std::size_t i = 0; i < v.size (); ++i)
                    out[i] = (v[i] - *lo) / span;
            return out;
        }
    } // namespace

    void SearchSpace::validate () const
    {
        if (!(f_lo_hz > 0.0) || !(f_hi_hz > f_lo_hz) || !std::isfinite (f_hi_hz))
            throw DomainError ("search frequency range must satisfy 0 < lo < hi");
        if (amplitudes_deg.empty ())
            throw DomainError ("search amplitude set is empty");
        for (double a : amplitudes_deg)
            if (!(std::abs (a) <= 90.0))
                throw DomainError ("search amplitudes must satisfy |A| <= 90");
        if (f_grid < 2)
            throw DomainError ("frequency grid needs at least 2 points");
    }

    Eigen::Vector2d SearchSpace::normalize (double f_hz, double a_deg) const
    {
        const auto [lo, hi] = std::minmax_element (amplitudes_deg.begin (), amplitudes_deg.end ());
        const double a = *hi > *lo ? (a_deg - *lo) / (*hi - *lo) : 0.0;
        return {(f_hz - f_lo_hz) / (f_hi_hz - f_lo_hz), a};
    }

    GPosterior::GPosterior (std::vector<Eigen::VectorXd> x, std::vector<double> y, GpHyper hyper)
        : x_ (std::move (x)), hyper_ (hyper)
    {
        if (x_.empty () || x_.size () != y.size ())
            throw DomainError ("GP needs at least one observation and matching targets");
        if (!(hyper_.noise_var > 0.0) || !(hyper_.signal_var > 0.0) || !(hyper_.length_scale > 0.0))
            throw DomainError ("GP hyperparameters must be positive");
        const auto n = static_cast<Eigen::Index> (y.size ());
        Eigen::Map<const Eigen::VectorXd> yv (y.data (), n);
        if (!yv.allFinite ())
            throw DomainError ("GP targets must be finite");
        y_mean_ = yv.mean ();
        const double var = n > 1 ? (yv.array () - y_mean_).square ().sum () / static_cast<double> (n) : 0.0;
        y_scale_ = var > 0.0 ? std::sqrt (var) : 1.0;
        const Eigen::VectorXd ys = (yv.array () - y_mean_) / y_scale_;

        Eigen::MatrixXd K (n, n);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j)
                K (i, j) = kernel (x_[i], x_[j]);
        K.diagonal ().array () += hyper_.noise_var;
        for (jitter_ = 0.0;; jitter_ = jitter_ == 0.0 ? 1e-8 : jitter_ * 10.0)
        {
            Eigen::MatrixXd Kj = K;
            Kj.diagonal ().array () += jitter_;
            llt_.compute (Kj);
            if (llt_.info () == Eigen::Success)
                break;
            if (jitter_ > 1.0)
                throw std::runtime_error ("GP covariance is not positive definite");
        }
        alpha_ = llt_.solve (ys);
    }

    double GPosterior::kernel (const Eigen::VectorXd &a, const Eigen::VectorXd &b) const
    {
        const double l = hyper_.length_scale;
        return hyper_.signal_var * std::exp (-0.5 * (a - b).squaredNorm () / (l * l));
    }

    GPosterior::Prediction GPosterior::predict (const Eigen::VectorXd &x) const
    {
        const auto n = static_cast<Eigen::Index> (x_.size ());
        Eigen::VectorXd k (n);
        for (Eigen::Index i = 0; i < n; ++i)
            k (i) = kernel (x, x_[i]);
        const double mean = k.dot (alpha_);
        const Eigen::VectorXd v = llt_.matrixL ().solve (k);
        const double var = std::max (0.0, kernel (x, x) - v.squaredNorm ());
        return {y_mean_ + y_scale_ * mean, y_scale_ * y_scale_ * var};
    }

    GPosterior gp_fit (std::span<const EvalRecord> records, const SearchSpace &space, GpHyper hyper)
    {
        std::vector<Eigen::VectorXd> x;
        std::vector<double> y;
        for (const auto &r : records)
        {
            x.emplace_back (space.normalize (r.f_hz, r.a_deg));
            y.push_back (r.value.objective);
        }
        return GPosterior (std::move (x), std::move (y), hyper);
    }

    std::vector<double> acquisition_scores (std::span<const double> mu, std::span<const double> sigma, double rho)
    {
        if (mu.empty () || mu.size () != sigma.size ())
            throw DomainError ("acquisition needs matching, nonempty mean and sigma");
        const auto m = minmax_normalize (mu);
        const auto s = minmax_normalize (sigma);
        std::vector<double> out (mu.size ());
        for (std::size_t i = 0; i < mu.size (); ++i)
            out[i] = (1.0 - rho) * m[i] + rho * s[i];
        return out;
    }

    std::size_t acquisition (std::span<const double> mu, std::span<const double> sigma, double rho)
    {
        const auto sc = acquisition_scores (mu, sigma, rho);
        std::size_t best = 0;
        for (std::size_t i = 1; i < sc.size (); ++i)
            if (sc[i] > sc[best])
                best = i;
        return best;
    }

    OptimizeResult optimize (const Objective &objective, const SearchSpace &space, int budget, std::uint64_t seed,
                             double rho, GpHyper hyper)
    {
        space.validate ();
        if (budget < 3)
            throw DomainError ("optimization budget must be >= 3");
        if (!(rho >= 0.0 && rho <= 1.0))
            throw DomainError ("exploration ratio must lie in [0, 1]");

        struct Candidate
        {
            double f, a;
            Eigen::VectorXd x;
        };
        std::vector<Candidate> cand;
        const std::size_t nf = static_cast<std::size_t> (space.f_grid);
        const std::size_t na = space.amplitudes_deg.size ();
        for (std::size_t ia = 0; ia < na; ++ia)
            for (std::size_t i = 0; i < nf; ++i)
            {
                const double f = space.f_lo_hz + (space.f_hi_hz - space.f_lo_hz) * static_cast<double> (i) /
                                                     static_cast<double> (nf - 1);
                const double a = space.amplitudes_deg[ia];
                cand.push_back ({f, a, space.normalize (f, a)});
            }
        std::vector<char> masked (cand.size (), 0);

        OptimizeResult res;
        int trace_id = 0;
        auto run = [&] (std::size_t c, int iter) {
            EvalRecord r{iter, cand[c].f, cand[c].a, {}, trace_id++};
            try
            {
                r.value = objective (r.f_hz, r.a_deg);
                if (!std::isfinite (r.value.objective))
                    throw std::runtime_error ("objective is not finite");
                res.history.push_back (r);
            }
            catch (const std::exception &)
            {
                masked[c] = 1;
                ++res.failures;
            }
        };

        std::mt19937_64 rng (seed);
        std::uniform_real_distribution<double> u (0.0, 1.0);
        const double shift_f = u (rng);
        const double shift_a = u (rng);
        for (unsigned k = 0; k < 3; ++k)
        {
            const double uf = std::fmod (radical_inverse (2, k + 1) + shift_f, 1.0);
            const double ua = std::fmod (radical_inverse (3, k + 1) + shift_a, 1.0);
            const auto i = std::min (nf - 1, static_cast<std::size_t> (uf * static_cast<double> (nf)));
            const auto ia = std::min (na - 1, static_cast<std::size_t> (ua * static_cast<double> (na)));
            run (ia * nf + i, static_cast<int> (k));
        }

        std::vector<double> mu (cand.size ()), sigma (cand.size ());
        for (int iter = 3; iter < budget; ++iter)
        {
            std::vector<std::size_t> open;
            for (std::size_t c = 0; c < cand.size (); ++c)
                if (!masked[c])
                    open.push_back (c);
            if (open.empty ())
                break;
            if (res.history.empty ())
            {
                run (open[static_cast<std::size_t> (u (rng) * static_cast<double> (open.size ())) % open.size ()], iter);
                continue;
            }
            const auto gp = gp_fit (res.history, space, hyper);
            std::vector<double> m, s;
            for (std::size_t c : open)
            {
                const auto p = gp.predict (cand[c].x);
                m.push_back (p.mean);
                s.push_back (std::sqrt (p.variance));
            }
            run (open[acquisition (m, s, rho)], iter);
        }

        if (res.history.empty ())
            throw std::runtime_error ("every objective evaluation failed");
        res.best = *std::max_element (res.history.begin (), res.history.end (), [] (const auto &a, const auto &b) {
            return a.value.objective < b.value.objective;
        });
        return res;
    }

    void write_history_csv (std::ostream &os, std::span<const EvalRecord> history)
    {
        csv::Writer w (os, {"iter", "f", "A", "twi", "tip_defl_deg", "thrust_mN"});
        for (const auto &r : history)
        {
            w << static_cast<long long> (r.iter) << r.f_hz << r.a_deg << r.value.objective << r.value.tip_defl_deg
              << r.value.thrust_mN;
            w.end_row ();
        }
    }

} // namespace tentacle
