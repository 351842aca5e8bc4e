#pragma once
/**
 * @file   regressor.hpp
 * @brief  Bidirectional LSTM mapping pressure series to per-step shape
 *         coordinates, with exact backpropagation through time.
 *
 * Gate layout inside every 4H block is (input, forget, cell, output).
 * The head is tanh(W1 [h_fwd; h_bwd] + b1) followed by a linear W2 a + b2.
 */

#include "tentacle/shape_fit.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace tentacle
{
    enum class TargetKind
    {
        affine,     ///< (q1, q2)
        polynomial, ///< (c2, c3) of the lateral cubic
    };

    [[nodiscard]] const char *target_name (TargetKind k) noexcept;
    [[nodiscard]] TargetKind target_from_name (const std::string &name);

    struct RegressorWeights
    {
        int hidden = 32;
        int input_dim = 3;
        TargetKind target = TargetKind::affine;
        Eigen::VectorXd params; ///< flat parameter vector, see the layout helpers
        Eigen::VectorXd in_mean, in_std;
        Eigen::Vector2d out_mean = Eigen::Vector2d::Zero ();
        Eigen::Vector2d out_std = Eigen::Vector2d::Ones ();

        RegressorWeights () = default;
        /// Zero parameters, identity normalization.
        RegressorWeights (int hidden_size, int input_channels);

        [[nodiscard]] static Eigen::Index parameter_count (int hidden_size, int input_channels) noexcept;
        void validate () const;
    };

    /// Views into the flat parameter vector.
    struct LstmView
    {
        Eigen::Map<const Eigen::MatrixXd> wx; ///< 4H x D
        Eigen::Map<const Eigen::MatrixXd> wh; ///< 4H x H
        Eigen::Map<const Eigen::VectorXd> b;  ///< 4H
    };

    struct HeadView
    {
        Eigen::Map<const Eigen::MatrixXd> w1; ///< H x 2H
        Eigen::Map<const Eigen::VectorXd> b1; ///< H
        Eigen::Map<const Eigen::MatrixXd> w2; ///< 2 x H
        Eigen::Map<const Eigen::VectorXd> b2; ///< 2
    };

    [[nodiscard]] LstmView lstm_view (const RegressorWeights &w, int direction);
    [[nodiscard]] HeadView head_view (const RegressorWeights &w);

    struct LabeledSequence
    {
        Eigen::MatrixXd inputs;  ///< T x D, kPa
        Eigen::MatrixXd targets; ///< T x 2
        double dt = 0.0;
        std::vector<Point2> tips; ///< optional ground-truth tips (body frame)

        void validate () const;
    };

    /// Normalized chunk used for training.
    struct Chunk
    {
        Eigen::MatrixXd x; ///< D x T
        Eigen::MatrixXd y; ///< 2 x T
    };

    /// Raw T x D inputs to T x 2 outputs in target units.
    [[nodiscard]] Eigen::MatrixXd forward (const RegressorWeights &w, const Eigen::MatrixXd &inputs);

    /// Forward pass on normalized D x T inputs; returns normalized 2 x T outputs.
    [[nodiscard]] Eigen::MatrixXd forward_normalized (const RegressorWeights &w, const Eigen::MatrixXd &x);

    /// Mean squared error over every element.
    [[nodiscard]] double loss (const Eigen::MatrixXd &pred, const Eigen::MatrixXd &target);

    /// Mean loss over all elements of all chunks, and its exact gradient.
    struct LossGradient
    {
        double loss = 0.0;
        Eigen::VectorXd grad;
    };

    [[nodiscard]] LossGradient gradients (const RegressorWeights &w, std::span<const Chunk> batch);

    struct TrainConfig
    {
        double lr0 = 0.01;
        double lr_decay = 0.85;
        double momentum = 0.8;
        int epochs = 35;
        int sequence_chunk = 200;
        int hidden = 32;
        std::uint64_t seed = 7;

        void validate () const;
    };

    struct TrainResult
    {
        RegressorWeights weights;
        std::vector<double> loss_history; ///< mean chunk loss per epoch
    };

    /// Z-score statistics from the data, uniform init in +-1/sqrt(H), then SGD
    /// with momentum over shuffled chunks. Throws std::runtime_error on NaN.
    [[nodiscard]] TrainResult train (std::span<const LabeledSequence> data, const TrainConfig &cfg,
                                     TargetKind target = TargetKind::affine);

    /// Same optimizer from given initial weights and normalization.
    [[nodiscard]] TrainResult train_from (RegressorWeights init, std::span<const LabeledSequence> data,
                                          const TrainConfig &cfg);

    /// Splits normalized sequences into chunks of at most `chunk` steps.
    [[nodiscard]] std::vector<Chunk> make_chunks (const RegressorWeights &w, std::span<const LabeledSequence> data,
                                                  int chunk);

    /// Prediction report through the shape-fitting metrics.
    [[nodiscard]] FitReport evaluate (const RegressorWeights &w, std::span<const LabeledSequence> data,
                                      const TentacleGeometry &geom);

    void save_weights (std::ostream &os, const RegressorWeights &w);
    [[nodiscard]] RegressorWeights load_weights (std::istream &is);

} // namespace tentacle
