#pragma once
/**
 * @file   bayes_opt.hpp
 * @brief  Gaussian-process Bayesian optimization over actuation frequency and
 *         amplitude with a convex mean/uncertainty acquisition.
 */

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace tentacle
{
    struct SearchSpace
    {
        double f_lo_hz = 0.32;
        double f_hi_hz = 3.2;
        std::vector<double> amplitudes_deg{10.0, 20.0, 30.0};
        int f_grid = 64;

        void validate () const;
        /// Maps (f, A) to the unit box.
        [[nodiscard]] Eigen::Vector2d normalize (double f_hz, double a_deg) const;
    };

    /// Objective value and auxiliaries for one evaluation.
    struct Evaluation
    {
        double objective = 0.0;
        double tip_defl_deg = 0.0;
        double thrust_mN = 0.0;
    };

    struct EvalRecord
    {
        int iter = 0;
        double f_hz = 0.0;
        double a_deg = 0.0;
        Evaluation value;
        int trace_id = 0;
    };

    struct GpHyper
    {
        double length_scale = 0.2; ///< per unit-box dimension
        double signal_var = 1.0;   ///< after output standardization
        double noise_var = 1e-4;
    };

    /// Exact GP regression with a squared-exponential kernel on standardized outputs.
    class GPosterior
    {
    public:
        GPosterior (std::vector<Eigen::VectorXd> x, std::vector<double> y, GpHyper hyper = {});

        struct Prediction
        {
            double mean = 0.0;     ///< raw objective units
            double variance = 0.0; ///< raw objective units squared
        };

        [[nodiscard]] Prediction predict (const Eigen::VectorXd &x) const;
        [[nodiscard]] double kernel (const Eigen::VectorXd &a, const Eigen::VectorXd &b) const;
        [[nodiscard]] double y_mean () const noexcept { return y_mean_; }
        [[nodiscard]] double y_scale () const noexcept { return y_scale_; }
        [[nodiscard]] double jitter () const noexcept { return jitter_; }

    private:
        std::vector<Eigen::VectorXd> x_;
        GpHyper hyper_;
        double y_mean_ = 0.0;
        double y_scale_ = 1.0;
        double jitter_ = 0.0;
        Eigen::LLT<Eigen::MatrixXd> llt_;
        Eigen::VectorXd alpha_;
    };

    [[nodiscard]] GPosterior gp_fit (std::span<const EvalRecord> records, const SearchSpace &space, GpHyper hyper = {});

    /// (1 - rho) mu_hat + rho sigma_hat with min-max normalization over the candidates.
    [[nodiscard]] std::vector<double> acquisition_scores (std::span<const double> mu, std::span<const double> sigma,
                                                          double rho = 0.8);

    /// Index of the maximal score; ties go to the lowest index.
    [[nodiscard]] std::size_t acquisition (std::span<const double> mu, std::span<const double> sigma, double rho = 0.8);

    struct OptimizeResult
    {
        EvalRecord best;
        std::vector<EvalRecord> history;
        int failures = 0;
    };

    using Objective = std::function<Evaluation (double f_hz, double a_deg)>;

    /// Three seeded quasi-random starts, then GP-guided picks on the
    /// f_grid x |A| candidate grid until `budget` evaluations are spent.
    [[nodiscard]] OptimizeResult optimize (const Objective &objective, const SearchSpace &space, int budget,
                                           std::uint64_t seed, double rho = 0.8, GpHyper hyper = {});

    /// CSV `iter,f,A,twi,tip_defl_deg,thrust_mN`.
    void write_history_csv (std::ostream &os, std::span<const EvalRecord> history);

} // namespace tentacle
