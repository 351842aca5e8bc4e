#pragma once
/**
 * @file   pipeline.hpp
 * @brief  Run configuration, seeded dataset generation, trace files and the
 *         frequency/amplitude metric sweep shared by the command-line tool.
 */

#include "tentacle/bayes_opt.hpp"
#include "tentacle/regressor.hpp"
#include "tentacle/sim.hpp"
#include "tentacle/wave_metrics.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tentacle
{
    /// Invalid configuration; the message starts with the offending field path.
    class ConfigError : public std::runtime_error
    {
    public:
        using std::runtime_error::runtime_error;
    };

    struct DatasetSettings
    {
        double train_duration_s = 100.0;
        double test_duration_s = 40.0;
        double rpm_start = 12.0;
        double rpm_end = 80.0;
        double max_amplitude_deg = 30.0;
    };

    struct MetricsSettings
    {
        double ratio_lo = 0.1;
        double ratio_hi = 1.0;
        double ratio_step = 0.05;
        std::vector<double> amplitudes_deg{10.0, 20.0, 30.0};
        int settle_cycles = 6;
        int measure_cycles = 8;
        int stations = 17;
        int thrust_window = 3;

        [[nodiscard]] std::vector<double> ratios () const;
    };

    struct OptimizeSettings
    {
        int budget = 30;
        double rho = 0.8;
        double ratio_lo = 0.1;
        double ratio_hi = 1.0;
        int f_grid = 64;
        std::vector<double> amplitudes_deg{10.0, 20.0, 30.0};
        GpHyper hyper;
    };

    struct RunConfig
    {
        static constexpr int kSchemaVersion = 1;

        Material material = Material::dragonskin;
        std::uint64_t seed = 1;
        std::string output_dir = "run";
        TentacleGeometry geometry;
        SimParams sim;
        double c_thrust = 1e-4;
        SensorModel sensor; ///< seed is derived, not configured
        DatasetSettings dataset;
        TrainConfig train; ///< seed is derived, not configured
        MetricsSettings metrics;
        OptimizeSettings optimize;

        /// Throws ConfigError naming the first invalid field.
        void validate () const;
    };

    [[nodiscard]] RunConfig default_config (Material m = Material::dragonskin);

    /// Missing fields take the defaults of the named material; unknown fields
    /// and type mismatches are errors.
    [[nodiscard]] RunConfig config_from_json (const nlohmann::json &j);
    [[nodiscard]] nlohmann::json config_to_json (const RunConfig &cfg);
    [[nodiscard]] RunConfig load_config (const std::filesystem::path &path);

    /// SHA-256 hex digest of the canonical JSON without the output directory.
    [[nodiscard]] std::string config_hash (const RunConfig &cfg);
    [[nodiscard]] std::string sha256_hex (const std::string &bytes);

    enum class SeedStream : std::uint64_t
    {
        train_program = 1,
        test_program,
        train_noise,
        test_noise,
        train_init,
        optimize,
        sweep_noise,
        channels,
    };

    /// splitmix64 of the master seed mixed with the stream id.
    [[nodiscard]] std::uint64_t derive_seed (std::uint64_t master, std::uint64_t stream) noexcept;
    [[nodiscard]] std::uint64_t derive_seed (std::uint64_t master, SeedStream stream) noexcept;

    /// Training-style run: motor-speed ramp with random per-cycle amplitude,
    /// simulated and read out through the configured sensors.
    [[nodiscard]] SimTrace generate_trace (const RunConfig &cfg, double duration_s, std::uint64_t program_seed,
                                           std::uint64_t noise_seed);

    inline const std::vector<std::string> kTraceHeader{"t",  "theta_deg", "q1",    "q2",    "p1",
                                                       "p2", "p3",        "tip_x", "tip_y", "thrust"};

    /// CSV with kTraceHeader; tip columns hold the body-frame tip.
    void write_trace_csv (std::ostream &os, const SimTrace &trace, const TentacleGeometry &geom);
    /// Inverse of write_trace_csv; q_dot is left empty and tips are body frame.
    [[nodiscard]] SimTrace read_trace_csv (std::istream &is);

    /// Pressures as inputs; (q1, q2) or the lateral cubic's (c2, c3) as targets.
    [[nodiscard]] LabeledSequence to_labeled (const SimTrace &trace, TargetKind target, const TentacleGeometry &geom);

    struct PointMetrics
    {
        double f_ratio = 0.0;
        double f_hz = 0.0;
        double a_deg = 0.0;
        double thrust_mN = 0.0;
        double tip_defl_deg = 0.0;
        double twi = 0.0;
        ModeSet modes; ///< empty for a motionless field
    };

    /// Metrics over a state series with its base angle command. Thrust is the
    /// moving-averaged per-cycle proxy, deflection uses the lab-frame tip and
    /// a field without variance has TWI 0.
    [[nodiscard]] PointMetrics metrics_from_states (const RunConfig &cfg, double f_hz, double a_deg,
                                                    std::span<const CurvatureState> q,
                                                    std::span<const double> theta_deg, double dt);

    struct SweepRow
    {
        PointMetrics truth;
        std::optional<PointMetrics> reconstructed;
    };

    /// Fixed (f, A) run: settle, then measure. With weights the states are
    /// also reconstructed from simulated pressures (noise seeded by noise_seed).
    [[nodiscard]] SweepRow point_metrics (const RunConfig &cfg, double f_hz, double a_deg,
                                          const RegressorWeights *weights = nullptr, std::uint64_t noise_seed = 0);

    /// Every (ratio, amplitude) of the metrics settings, amplitude-major and
    /// evaluated in parallel with index-ordered results.
    [[nodiscard]] std::vector<SweepRow> sweep (const RunConfig &cfg, const RegressorWeights *weights = nullptr);

    /// Applies fn(i) for i in [0, n) on a small thread pool; rethrows the
    /// first failure by index.
    void parallel_for (std::size_t n, const std::function<void (std::size_t)> &fn);

    /// CSV `f_ratio,f_hz,A_deg,thrust_mN,tip_defl_deg,twi`.
    void write_metrics_csv (std::ostream &os, std::span<const PointMetrics> rows);

    [[nodiscard]] SearchSpace search_space (const RunConfig &cfg);
    [[nodiscard]] Evaluation bo_objective (const RunConfig &cfg, double f_hz, double a_deg);

    /// Channel-count experiment: gains of the first n rows of a fixed 4 x 2 table.
    struct ChannelResult
    {
        int channels = 0;
        FitReport report;
    };
    [[nodiscard]] std::vector<ChannelResult> channel_experiment (const RunConfig &cfg, std::span<const int> counts);

} // namespace tentacle
