#include "tentacle/pipeline.hpp"

#include "tentacle/csv.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <thread>

namespace tentacle
{
    using nlohmann::json;

    namespace
    {
        constexpr double kDegToRad = std::numbers::pi / 180.0;

        // Reader for one JSON object section with type checks and unknown-key detection.
        class Section
        {
        public:
            Section (const json &parent, std::string path, const char *key)
                : path_ (path.empty () ? key : path + "." + key)
            {
                const auto it = parent.find (key);
                if (it == parent.end ())
                    return;
                if (!it->is_object ())
                    throw ConfigError (path_ + ": expected an object");
                obj_ = &*it;
            }

            explicit Section (const json &root) : path_ (""), obj_ (&root)
            {
                if (!root.is_object ())
                    throw ConfigError ("config: expected a JSON object");
            }

            void number (const char *key, double &dst)
            {
                if (const json *v = find (key))
                {
                    if (!v->is_number ())
                        throw ConfigError (name (key) + ": expected a number");
                    dst = v->get<double> ();
                }
            }

            void integer (const char *key, int &dst)
            {
                if (const json *v = find (key))
                {
                    if (!v->is_number_integer ())
                        throw ConfigError (name (key) + ": expected an integer");
                    const auto x = v->get<long long> ();
                    if (x < -1000000000LL || x > 1000000000LL)
                        throw ConfigError (name (key) + ": integer out of range");
                    dst = static_cast<int> (x);
                }
            }

            void unsigned64 (const char *key, std::uint64_t &dst)
            {
                if (const json *v = find (key))
                {
                    if (!v->is_number_integer () || (!v->is_number_unsigned () && v->get<std::int64_t> () < 0))
                        throw ConfigError (name (key) + ": expected a non-negative integer");
                    dst = v->get<std::uint64_t> ();
                }
            }

            void text (const char *key, std::string &dst)
            {
                if (const json *v = find (key))
                {
                    if (!v->is_string ())
                        throw ConfigError (name (key) + ": expected a string");
                    dst = v->get<std::string> ();
                }
            }

            void numbers (const char *key, std::vector<double> &dst)
            {
                if (const json *v = find (key))
                {
                    if (!v->is_array ())
                        throw ConfigError (name (key) + ": expected an array of numbers");
                    std::vector<double> out;
                    for (const auto &e : *v)
                    {
                        if (!e.is_number ())
                            throw ConfigError (name (key) + ": expected an array of numbers");
                        out.push_back (e.get<double> ());
                    }
                    dst = std::move (out);
                }
            }

            template <int R, int C> void matrix (const char *key, Eigen::Matrix<double, R, C> &dst)
            {
                if (const json *v = find (key))
                {
                    const std::string msg = name (key) + ": expected " + std::to_string (R) + " rows of " +
                                            std::to_string (C) + " numbers";
                    if (!v->is_array () || v->size () != R)
                        throw ConfigError (msg);
                    for (int r = 0; r < R; ++r)
                    {
                        const auto &row = (*v)[static_cast<std::size_t> (r)];
                        if (!row.is_array () || row.size () != C)
                            throw ConfigError (msg);
                        for (int c = 0; c < C; ++c)
                        {
                            if (!row[static_cast<std::size_t> (c)].is_number ())
                                throw ConfigError (msg);
                            dst (r, c) = row[static_cast<std::size_t> (c)].get<double> ();
                        }
                    }
                }
            }

            /// Throws on keys that were never requested.
            void finish () const
            {
                if (!obj_)
                    return;
                for (const auto &item : obj_->items ())
                    if (!seen_.count (item.key ()))
                        throw ConfigError (name (item.key ().c_str ()) + ": unknown field");
            }

        private:
            const json *find (const char *key)
            {
                seen_.insert (key);
                if (!obj_)
                    return nullptr;
                const auto it = obj_->find (key);
                return it == obj_->end () ? nullptr : &*it;
            }

            [[nodiscard]] std::string name (const char *key) const { return path_.empty () ? key : path_ + "." + key; }

            std::string path_;
            const json *obj_ = nullptr;
            std::set<std::string> seen_;
        };

        template <int R, int C> json matrix_json (const Eigen::Matrix<double, R, C> &m)
        {
            json out = json::array ();
            for (int r = 0; r < R; ++r)
            {
                json row = json::array ();
                for (int c = 0; c < C; ++c)
                    row.push_back (m (r, c));
                out.push_back (row);
            }
            return out;
        }

        void require (bool ok, const std::string &field, const std::string &msg)
        {
            if (!ok)
                throw ConfigError (field + ": " + msg);
        }

        void check_amplitudes (const std::vector<double> &a, const std::string &field)
        {
            require (!a.empty (), field, "must not be empty");
            for (double v : a)
                require (std::isfinite (v) && std::abs (v) <= 90.0, field, "amplitudes must satisfy |A| <= 90 deg");
        }

        template <class Fn> void nested (const char *field, Fn &&fn)
        {
            try
            {
                fn ();
            }
            catch (const DomainError &e)
            {
                throw ConfigError (std::string (field) + ": " + e.what ());
            }
        }

        SensorModel sensor_with_seed (const RunConfig &cfg, std::uint64_t seed)
        {
            SensorModel m = cfg.sensor;
            m.seed = seed;
            return m;
        }

        Eigen::MatrixXd pressure_matrix (const std::vector<Eigen::Vector3d> &p)
        {
            Eigen::MatrixXd out (static_cast<Eigen::Index> (p.size ()), 3);
            for (std::size_t i = 0; i < p.size (); ++i)
                out.row (static_cast<Eigen::Index> (i)) = p[i].transpose ();
            return out;
        }
    } // namespace

    std::vector<double> MetricsSettings::ratios () const
    {
        std::vector<double> out;
        for (int k = 0;; ++k)
        {
            const double r = std::round ((ratio_lo + k * ratio_step) * 1e9) / 1e9;
            if (r > ratio_hi + 1e-9)
                break;
            out.push_back (r);
        }
        return out;
    }

    void RunConfig::validate () const
    {
        require (!output_dir.empty (), "output_dir", "must not be empty");
        nested ("geometry", [&] { geometry.validate (); });
        nested ("sim", [&] { sim.validate (); });
        require (c_thrust >= 0.0 && std::isfinite (c_thrust), "sim.c_thrust", "must be non-negative");
        nested ("sensor", [&] { sensor.validate (); });
        nested ("train", [&] { train.validate (); });

        const auto &d = dataset;
        require (d.train_duration_s > 0.0 && std::isfinite (d.train_duration_s), "dataset.train_duration_s",
                 "must be positive");
        require (d.test_duration_s > 0.0 && std::isfinite (d.test_duration_s), "dataset.test_duration_s",
                 "must be positive");
        require (d.train_duration_s >= 2.0 * sim.dt && d.test_duration_s >= 2.0 * sim.dt, "dataset",
                 "durations must cover at least two time steps");
        require (d.rpm_start >= 12.0 && d.rpm_start <= 80.0, "dataset.rpm_start", "must lie in [12, 80]");
        require (d.rpm_end >= 12.0 && d.rpm_end <= 80.0, "dataset.rpm_end", "must lie in [12, 80]");
        require (d.max_amplitude_deg >= 0.0 && d.max_amplitude_deg <= 90.0, "dataset.max_amplitude_deg",
                 "must lie in [0, 90]");

        const auto &m = metrics;
        require (m.ratio_lo > 0.0 && std::isfinite (m.ratio_lo), "metrics.ratio_lo", "must be positive");
        require (m.ratio_hi >= m.ratio_lo && std::isfinite (m.ratio_hi), "metrics.ratio_hi", "must be >= ratio_lo");
        require (m.ratio_step > 0.0 && std::isfinite (m.ratio_step), "metrics.ratio_step", "must be positive");
        require (m.ratio_hi * sim.f0 * sim.dt * 50.0 <= 1.0, "metrics.ratio_hi",
                 "frequency needs at least 50 samples per cycle");
        check_amplitudes (m.amplitudes_deg, "metrics.amplitudes_deg");
        require (m.settle_cycles >= 0, "metrics.settle_cycles", "must be >= 0");
        require (m.measure_cycles >= 2, "metrics.measure_cycles", "must be >= 2");
        require (m.stations >= 3, "metrics.stations", "must be >= 3");
        require (m.thrust_window >= 1 && m.thrust_window % 2 == 1, "metrics.thrust_window", "must be odd and >= 1");

        const auto &o = optimize;
        require (o.budget >= 3, "optimize.budget", "must be >= 3");
        require (o.rho >= 0.0 && o.rho <= 1.0, "optimize.rho", "must lie in [0, 1]");
        require (o.ratio_lo > 0.0 && std::isfinite (o.ratio_lo), "optimize.ratio_lo", "must be positive");
        require (o.ratio_hi > o.ratio_lo && std::isfinite (o.ratio_hi), "optimize.ratio_hi", "must exceed ratio_lo");
        require (o.ratio_hi * sim.f0 * sim.dt * 50.0 <= 1.0, "optimize.ratio_hi",
                 "frequency needs at least 50 samples per cycle");
        require (o.f_grid >= 2, "optimize.f_grid", "must be >= 2");
        check_amplitudes (o.amplitudes_deg, "optimize.amplitudes_deg");
        require (o.hyper.length_scale > 0.0, "optimize.length_scale", "must be positive");
        require (o.hyper.signal_var > 0.0, "optimize.signal_var", "must be positive");
        require (o.hyper.noise_var > 0.0, "optimize.noise_var", "must be positive");
    }

    RunConfig default_config (Material m)
    {
        RunConfig cfg;
        cfg.material = m;
        cfg.sim = preset (m);
        cfg.train.epochs = m == Material::ecoflex ? 20 : 35;
        return cfg;
    }

    json config_to_json (const RunConfig &cfg)
    {
        const auto &g = cfg.geometry;
        const auto &s = cfg.sim;
        const auto &p = cfg.sensor;
        const auto &d = cfg.dataset;
        const auto &t = cfg.train;
        const auto &m = cfg.metrics;
        const auto &o = cfg.optimize;
        json j;
        j["schema_version"] = RunConfig::kSchemaVersion;
        j["material"] = material_name (cfg.material);
        j["seed"] = cfg.seed;
        j["output_dir"] = cfg.output_dir;
        j["geometry"] = {{"length_mm", g.length_mm}, {"n_samples", g.n_samples}, {"root_diameter_mm", g.root_diameter_mm}};
        j["sim"] = {{"f0", s.f0},        {"zeta", s.zeta},   {"mode2_ratio", s.mode2_ratio},
                    {"k1", s.k1},        {"k2", s.k2},       {"phase_lag_s", s.phase_lag_s},
                    {"dt", s.dt},        {"c_thrust", cfg.c_thrust}};
        j["sensor"] = {{"gain", matrix_json (p.gain)},
                       {"rate_gain", matrix_json (p.rate_gain)},
                       {"baseline_kpa", p.baseline_kpa},
                       {"lag_tau_s", p.lag_tau_s},
                       {"sat_kappa", p.sat_kappa},
                       {"noise_sigma_kpa", p.noise_sigma_kpa}};
        j["dataset"] = {{"train_duration_s", d.train_duration_s}, {"test_duration_s", d.test_duration_s},
                        {"rpm_start", d.rpm_start},               {"rpm_end", d.rpm_end},
                        {"max_amplitude_deg", d.max_amplitude_deg}};
        j["train"] = {{"lr0", t.lr0},           {"lr_decay", t.lr_decay},
                      {"momentum", t.momentum}, {"epochs", t.epochs},
                      {"sequence_chunk", t.sequence_chunk}, {"hidden", t.hidden}};
        j["metrics"] = {{"ratio_lo", m.ratio_lo},
                        {"ratio_hi", m.ratio_hi},
                        {"ratio_step", m.ratio_step},
                        {"amplitudes_deg", m.amplitudes_deg},
                        {"settle_cycles", m.settle_cycles},
                        {"measure_cycles", m.measure_cycles},
                        {"stations", m.stations},
                        {"thrust_window", m.thrust_window}};
        j["optimize"] = {{"budget", o.budget},
                         {"rho", o.rho},
                         {"ratio_lo", o.ratio_lo},
                         {"ratio_hi", o.ratio_hi},
                         {"f_grid", o.f_grid},
                         {"amplitudes_deg", o.amplitudes_deg},
                         {"length_scale", o.hyper.length_scale},
                         {"signal_var", o.hyper.signal_var},
                         {"noise_var", o.hyper.noise_var}};
        return j;
    }

    RunConfig config_from_json (const json &j)
    {
        Section root (j);
        int version = 0;
        root.integer ("schema_version", version);
        if (!j.contains ("schema_version"))
            throw ConfigError ("schema_version: missing");
        if (version != RunConfig::kSchemaVersion)
            throw ConfigError ("schema_version: unsupported version " + std::to_string (version));
        std::string material = "dragonskin";
        root.text ("material", material);
        RunConfig cfg;
        try
        {
            cfg = default_config (material_from_name (material));
        }
        catch (const DomainError &e)
        {
            throw ConfigError (std::string ("material: ") + e.what ());
        }
        root.unsigned64 ("seed", cfg.seed);
        root.text ("output_dir", cfg.output_dir);

        Section g (j, "", "geometry");
        g.number ("length_mm", cfg.geometry.length_mm);
        g.integer ("n_samples", cfg.geometry.n_samples);
        g.number ("root_diameter_mm", cfg.geometry.root_diameter_mm);
        g.finish ();

        Section s (j, "", "sim");
        s.number ("f0", cfg.sim.f0);
        s.number ("zeta", cfg.sim.zeta);
        s.number ("mode2_ratio", cfg.sim.mode2_ratio);
        s.number ("k1", cfg.sim.k1);
        s.number ("k2", cfg.sim.k2);
        s.number ("phase_lag_s", cfg.sim.phase_lag_s);
        s.number ("dt", cfg.sim.dt);
        s.number ("c_thrust", cfg.c_thrust);
        s.finish ();

        Section p (j, "", "sensor");
        p.matrix ("gain", cfg.sensor.gain);
        p.matrix ("rate_gain", cfg.sensor.rate_gain);
        p.number ("baseline_kpa", cfg.sensor.baseline_kpa);
        p.number ("lag_tau_s", cfg.sensor.lag_tau_s);
        p.number ("sat_kappa", cfg.sensor.sat_kappa);
        p.number ("noise_sigma_kpa", cfg.sensor.noise_sigma_kpa);
        p.finish ();

        Section d (j, "", "dataset");
        d.number ("train_duration_s", cfg.dataset.train_duration_s);
        d.number ("test_duration_s", cfg.dataset.test_duration_s);
        d.number ("rpm_start", cfg.dataset.rpm_start);
        d.number ("rpm_end", cfg.dataset.rpm_end);
        d.number ("max_amplitude_deg", cfg.dataset.max_amplitude_deg);
        d.finish ();

        Section t (j, "", "train");
        t.number ("lr0", cfg.train.lr0);
        t.number ("lr_decay", cfg.train.lr_decay);
        t.number ("momentum", cfg.train.momentum);
        t.integer ("epochs", cfg.train.epochs);
        t.integer ("sequence_chunk", cfg.train.sequence_chunk);
        t.integer ("hidden", cfg.train.hidden);
        t.finish ();

        Section m (j, "", "metrics");
        m.number ("ratio_lo", cfg.metrics.ratio_lo);
        m.number ("ratio_hi", cfg.metrics.ratio_hi);
        m.number ("ratio_step", cfg.metrics.ratio_step);
        m.numbers ("amplitudes_deg", cfg.metrics.amplitudes_deg);
        m.integer ("settle_cycles", cfg.metrics.settle_cycles);
        m.integer ("measure_cycles", cfg.metrics.measure_cycles);
        m.integer ("stations", cfg.metrics.stations);
        m.integer ("thrust_window", cfg.metrics.thrust_window);
        m.finish ();

        Section o (j, "", "optimize");
        o.integer ("budget", cfg.optimize.budget);
        o.number ("rho", cfg.optimize.rho);
        o.number ("ratio_lo", cfg.optimize.ratio_lo);
        o.number ("ratio_hi", cfg.optimize.ratio_hi);
        o.integer ("f_grid", cfg.optimize.f_grid);
        o.numbers ("amplitudes_deg", cfg.optimize.amplitudes_deg);
        o.number ("length_scale", cfg.optimize.hyper.length_scale);
        o.number ("signal_var", cfg.optimize.hyper.signal_var);
        o.number ("noise_var", cfg.optimize.hyper.noise_var);
        o.finish ();

        static const std::set<std::string> known{"schema_version", "material", "seed",    "output_dir",
                                                 "geometry",       "sim",      "sensor",  "dataset",
                                                 "train",          "metrics",  "optimize"};
        for (const auto &item : j.items ())
            if (!known.count (item.key ()))
                throw ConfigError (item.key () + ": unknown field");
        cfg.validate ();
        return cfg;
    }

    RunConfig load_config (const std::filesystem::path &path)
    {
        std::ifstream in (path);
        if (!in)
            throw ConfigError ("config: cannot open '" + path.string () + "'");
        json j;
        try
        {
            j = json::parse (in);
        }
        catch (const json::parse_error &e)
        {
            throw ConfigError ("config: invalid JSON in '" + path.string () + "': " + e.what ());
        }
        return config_from_json (j);
    }

    std::string sha256_hex (const std::string &bytes)
    {
        unsigned char md[EVP_MAX_MD_SIZE];
        unsigned int len = 0;
        if (EVP_Digest (bytes.data (), bytes.size (), md, &len, EVP_sha256 (), nullptr) != 1)
            throw std::runtime_error ("SHA-256 digest failed");
        static const char *hex = "0123456789abcdef";
        std::string out;
        for (unsigned int i = 0; i < len; ++i)
        {
            out += hex[md[i] >> 4];
            out += hex[md[i] & 15];
        }
        return out;
    }

    std::string config_hash (const RunConfig &cfg)
    {
        json j = config_to_json (cfg);
        j.erase ("output_dir");
        return sha256_hex (j.dump ());
    }

    std::uint64_t derive_seed (std::uint64_t master, std::uint64_t stream) noexcept
    {
        std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t derive_seed (std::uint64_t master, SeedStream stream) noexcept
    {
        return derive_seed (master, static_cast<std::uint64_t> (stream));
    }

    SimTrace generate_trace (const RunConfig &cfg, double duration_s, std::uint64_t program_seed,
                             std::uint64_t noise_seed)
    {
        ProgramSpec spec;
        spec.rpm_ramp = true;
        spec.rpm_start = cfg.dataset.rpm_start;
        spec.rpm_end = cfg.dataset.rpm_end;
        spec.amplitude_mode = AmplitudeMode::random_per_cycle;
        spec.max_random_amplitude_deg = cfg.dataset.max_amplitude_deg;
        spec.duration_s = duration_s;
        spec.dt = cfg.sim.dt;
        spec.seed = program_seed;
        auto trace = simulate (build_program (spec), cfg.sim, cfg.geometry, cfg.c_thrust);
        trace.pressure = sensor_readout (trace, sensor_with_seed (cfg, noise_seed));
        return trace;
    }

    void write_trace_csv (std::ostream &os, const SimTrace &trace, const TentacleGeometry &geom)
    {
        const std::size_t n = trace.size ();
        if (trace.theta_deg.size () != n || trace.q.size () != n || trace.pressure.size () != n ||
            trace.thrust.size () != n)
            throw DomainError ("trace series lengths differ or pressures are missing");
        csv::Writer w (os, kTraceHeader);
        for (std::size_t i = 0; i < n; ++i)
        {
            const auto tip = tip_position (trace.q[i], geom);
            w << trace.time[i] << trace.theta_deg[i] << trace.q[i].q1 << trace.q[i].q2 << trace.pressure[i] (0)
              << trace.pressure[i] (1) << trace.pressure[i] (2) << tip.x << tip.y << trace.thrust[i];
            w.end_row ();
        }
    }

    SimTrace read_trace_csv (std::istream &is)
    {
        const auto t = csv::read (is, kTraceHeader);
        const std::size_t n = t.rows.size ();
        if (n < 2)
            throw DomainError ("trace needs at least two rows");
        SimTrace tr;
        tr.time.reserve (n);
        for (const auto &r : t.rows)
        {
            tr.time.push_back (r[0]);
            tr.theta_deg.push_back (r[1]);
            tr.q.push_back ({r[2], r[3]});
            tr.pressure.emplace_back (r[4], r[5], r[6]);
            tr.tip.push_back ({r[7], r[8]});
            tr.thrust.push_back (r[9]);
        }
        tr.dt = (tr.time.back () - tr.time.front ()) / static_cast<double> (n - 1);
        if (!(tr.dt > 0.0))
            throw DomainError ("trace time column must increase");
        return tr;
    }

    LabeledSequence to_labeled (const SimTrace &trace, TargetKind target, const TentacleGeometry &geom)
    {
        const std::size_t n = trace.size ();
        if (trace.q.size () != n || trace.pressure.size () != n)
            throw DomainError ("trace needs states and pressures of equal length");
        LabeledSequence s;
        s.dt = trace.dt;
        s.inputs = pressure_matrix (trace.pressure);
        s.targets.resize (static_cast<Eigen::Index> (n), 2);
        s.tips.resize (n);
        for (std::size_t i = 0; i < n; ++i)
        {
            const auto r = static_cast<Eigen::Index> (i);
            if (target == TargetKind::affine)
            {
                s.targets (r, 0) = trace.q[i].q1;
                s.targets (r, 1) = trace.q[i].q2;
            }
            else
            {
                const auto c = fit_polynomial (Centerline (sample_centerline (trace.q[i], geom))).coeffs;
                s.targets (r, 0) = c.c2;
                s.targets (r, 1) = c.c3;
            }
            s.tips[i] = tip_position (trace.q[i], geom);
        }
        return s;
    }

    PointMetrics metrics_from_states (const RunConfig &cfg, double f_hz, double a_deg,
                                      std::span<const CurvatureState> q, std::span<const double> theta_deg, double dt)
    {
        if (q.size () != theta_deg.size () || q.size () < 8)
            throw DomainError ("metrics need at least 8 aligned states and base angles");
        PointMetrics pm;
        pm.f_hz = f_hz;
        pm.f_ratio = f_hz / cfg.sim.f0;
        pm.a_deg = a_deg;

        const std::size_t n = q.size ();
        SimTrace window;
        window.dt = dt;
        std::vector<double> theta_rad (n), tip_x (n);
        for (std::size_t i = 0; i < n; ++i)
        {
            theta_rad[i] = theta_deg[i] * kDegToRad;
            const auto tip = lab_tip (q[i], theta_rad[i], cfg.geometry);
            window.time.push_back (static_cast<double> (i) * dt);
            window.tip.push_back (tip);
            tip_x[i] = tip.x;
        }
        pm.tip_defl_deg = tip_deflection (tip_x, cfg.geometry.length_mm);
        const auto cycles = thrust_proxy (window, f_hz, cfg.c_thrust);
        const auto smooth = moving_average (cycles, cfg.metrics.thrust_window);
        double sum = 0.0;
        for (double v : smooth)
            sum += v;
        pm.thrust_mN = sum / static_cast<double> (smooth.size ());

        const auto field = field_from_states (q, cfg.geometry, cfg.metrics.stations, dt, theta_rad);
        const Eigen::MatrixXd centered = field.lateral.colwise () - field.lateral.rowwise ().mean ();
        if (centered.cwiseAbs ().maxCoeff () > 0.0)
        {
            pm.modes = cod (field);
            pm.twi = field_twi (pm.modes);
        }
        return pm;
    }

    SweepRow point_metrics (const RunConfig &cfg, double f_hz, double a_deg, const RegressorWeights *weights,
                            std::uint64_t noise_seed)
    {
        const auto &m = cfg.metrics;
        ProgramSpec spec;
        spec.frequency_hz = f_hz;
        spec.amplitude_deg = a_deg;
        spec.duration_s = (m.settle_cycles + m.measure_cycles) / f_hz;
        spec.dt = cfg.sim.dt;
        const auto trace = simulate (build_program (spec), cfg.sim, cfg.geometry, cfg.c_thrust);
        const std::size_t n = trace.size ();
        const auto measured = std::min (n, static_cast<std::size_t> (std::llround (m.measure_cycles / f_hz / cfg.sim.dt)));
        const std::size_t i0 = n - measured;
        const std::span<const double> theta (trace.theta_deg.data () + i0, measured);

        SweepRow row;
        row.truth = metrics_from_states (cfg, f_hz, a_deg, std::span (trace.q).subspan (i0), theta, trace.dt);
        if (weights)
        {
            if (weights->target != TargetKind::affine)
                throw DomainError ("state reconstruction needs affine-target weights");
            if (weights->input_dim != 3)
                throw DomainError ("weights expect " + std::to_string (weights->input_dim) +
                                   " pressure channels, the sensor model has 3");
            const auto p = sensor_readout (trace, sensor_with_seed (cfg, noise_seed));
            const Eigen::MatrixXd pred = forward (*weights, pressure_matrix (p));
            std::vector<CurvatureState> qhat (measured);
            for (std::size_t i = 0; i < measured; ++i)
            {
                const auto r = static_cast<Eigen::Index> (i0 + i);
                qhat[i] = {pred (r, 0), pred (r, 1)};
            }
            row.reconstructed = metrics_from_states (cfg, f_hz, a_deg, qhat, theta, trace.dt);
        }
        return row;
    }

    void parallel_for (std::size_t n, const std::function<void (std::size_t)> &fn)
    {
        const std::size_t hw = std::max (1u, std::thread::hardware_concurrency ());
        const std::size_t workers = std::min (hw, n);
        std::vector<std::exception_ptr> errors (n);
        std::atomic<std::size_t> next{0};
        auto work = [&] {
            for (std::size_t i = next++; i < n; i = next++)
            {
                try
                {
                    fn (i);
                }
                catch (...)
                {
                    errors[i] = std::current_exception ();
                }
            }
        };
        if (workers <= 1)
            work ();
        else
        {
            std::vector<std::jthread> pool;
            for (std::size_t k = 0; k < workers; ++k)
                pool.emplace_back (work);
        }
        for (const auto &e : errors)
            if (e)
                std::rethrow_exception (e);
    }

    std::vector<SweepRow> sweep (const RunConfig &cfg, const RegressorWeights *weights)
    {
        cfg.validate ();
        const auto ratios = cfg.metrics.ratios ();
        const auto &amps = cfg.metrics.amplitudes_deg;
        std::vector<SweepRow> rows (ratios.size () * amps.size ());
        const auto noise_root = derive_seed (cfg.seed, SeedStream::sweep_noise);
        parallel_for (rows.size (), [&] (std::size_t i) {
            const double a = amps[i / ratios.size ()];
            const double r = ratios[i % ratios.size ()];
            rows[i] = point_metrics (cfg, r * cfg.sim.f0, a, weights, derive_seed (noise_root, i));
            rows[i].truth.f_ratio = r;
            if (rows[i].reconstructed)
                rows[i].reconstructed->f_ratio = r;
        });
        return rows;
    }

    void write_metrics_csv (std::ostream &os, std::span<const PointMetrics> rows)
    {
        csv::Writer w (os, {"f_ratio", "f_hz", "A_deg", "thrust_mN", "tip_defl_deg", "twi"});
        for (const auto &r : rows)
        {
            w << r.f_ratio << r.f_hz << r.a_deg << r.thrust_mN << r.tip_defl_deg << r.twi;
            w.end_row ();
        }
    }

    SearchSpace search_space (const RunConfig &cfg)
    {
        SearchSpace s;
        s.f_lo_hz = cfg.optimize.ratio_lo * cfg.sim.f0;
        s.f_hi_hz = cfg.optimize.ratio_hi * cfg.sim.f0;
        s.amplitudes_deg = cfg.optimize.amplitudes_deg;
        s.f_grid = cfg.optimize.f_grid;
        return s;
    }

    Evaluation bo_objective (const RunConfig &cfg, double f_hz, double a_deg)
    {
        const auto pm = point_metrics (cfg, f_hz, a_deg).truth;
        return {pm.twi, pm.tip_defl_deg, pm.thrust_mN};
    }

    std::vector<ChannelResult> channel_experiment (const RunConfig &cfg, std::span<const int> counts)
    {
        cfg.validate ();
        Eigen::Matrix<double, 4, 2> gain, rate;
        gain << 2.0, 0.6, 1.2, 1.4, 0.4, 2.2, 1.6, 1.0;
        rate << 0.04, 0.01, 0.02, 0.03, 0.01, 0.05, 0.03, 0.02;
        const auto root = derive_seed (cfg.seed, SeedStream::channels);
        const auto train_trace = generate_trace (cfg, cfg.dataset.train_duration_s,
                                                 derive_seed (cfg.seed, SeedStream::train_program), 0);
        const auto test_trace = generate_trace (cfg, cfg.dataset.test_duration_s,
                                                derive_seed (cfg.seed, SeedStream::test_program), 0);
        const auto train_base = to_labeled (train_trace, TargetKind::affine, cfg.geometry);
        const auto test_base = to_labeled (test_trace, TargetKind::affine, cfg.geometry);

        std::vector<ChannelResult> out;
        for (int c : counts)
        {
            if (c < 1 || c > 4)
                throw DomainError ("channel count must lie in [1, 4]");
            const Eigen::MatrixXd g = gain.topRows (c);
            const Eigen::MatrixXd rg = rate.topRows (c);
            auto train_seq = train_base;
            auto test_seq = test_base;
            train_seq.inputs = sensor_readout_channels (train_trace, g, rg,
                                                        sensor_with_seed (cfg, derive_seed (root, 2 * c)));
            test_seq.inputs = sensor_readout_channels (test_trace, g, rg,
                                                       sensor_with_seed (cfg, derive_seed (root, 2 * c + 1)));
            TrainConfig tc = cfg.train;
            tc.seed = derive_seed (cfg.seed, SeedStream::train_init);
            const auto res = train (std::span (&train_seq, 1), tc, TargetKind::affine);
            out.push_back ({c, evaluate (res.weights, std::span (&test_seq, 1), cfg.geometry)});
        }
        return out;
    }

} // namespace tentacle
